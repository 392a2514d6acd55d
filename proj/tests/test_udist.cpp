#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rgcop/special.hpp"
#include "rgcop/udist.hpp"

using namespace rgcop;
using udist::SkewTParams;

TEST_CASE("special: normal cdf/quantile round trip") {
    for (double p : {1e-8, 1e-4, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
        double z = special::norm_quantile(p);
        CHECK(special::norm_cdf(z) == doctest::Approx(p).epsilon(1e-10));
    }
    CHECK_THROWS_AS(special::norm_quantile(0.0), std::domain_error);
}

TEST_CASE("special: student t cdf against quadrature of the density") {
    // s = tan(theta) substitution keeps the full polynomial tail.
    for (double nu : {3.0, 8.0, 13.4633}) {
        for (double x : {-2.5, -1.0, 0.0, 0.7, 3.1}) {
            auto integrand = [nu](double th) {
                double s = std::tan(th);
                return special::student_t_pdf(s, nu) * (1.0 + s * s);
            };
            double q = oracles::integrate(integrand, -0.5 * M_PI + 1e-12, std::atan(x), 1e-13);
            CHECK(special::student_t_cdf(x, nu) == doctest::Approx(q).epsilon(1e-8));
        }
    }
}

TEST_CASE("special: student t quantile inverts the cdf") {
    for (double nu : {2.5, 5.0, 30.0, 200.0}) {
        for (double p : {1e-6, 0.01, 0.2, 0.5, 0.9, 0.999}) {
            double x = special::student_t_quantile(p, nu);
            CHECK(special::student_t_cdf(x, nu) == doctest::Approx(p).epsilon(1e-9));
        }
    }
}

TEST_CASE("skew-t: normal limit at lambda=0, huge nu") {
    SkewTParams p{1e8, 0.0};
    CHECK(udist::skewt_pdf(0.0, p) == doctest::Approx(0.398942).epsilon(1e-4));
}

TEST_CASE("skew-t: symmetry when lambda is zero") {
    SkewTParams p{7.3, 0.0};
    for (double z : {0.1, 0.9, 2.4, 5.0})
        CHECK(udist::skewt_pdf(z, p) == doctest::Approx(udist::skewt_pdf(-z, p)).epsilon(1e-14));
}

TEST_CASE("skew-t: density integrates to one (oil margin parameters)") {
    SkewTParams p{13.4633, -0.0885};
    double total = oracles::integrate([&](double z) { return udist::skewt_pdf(z, p); }, -80.0,
                                      80.0, 1e-11);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("skew-t: densities integrate to one across parameter corners") {
    for (auto [nu, lam] : {std::pair{2.6, 0.8}, {5.0, -0.5}, {50.0, 0.2}, {12.2552, -0.1544}}) {
        SkewTParams p{nu, lam};
        double total = oracles::integrate([&](double z) { return udist::skewt_pdf(z, p); },
                                          -150.0, 150.0, 1e-11);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("skew-t: standardized moments by quadrature") {
    SkewTParams p{9.0, 0.4};
    double m1 = oracles::integrate([&](double z) { return z * udist::skewt_pdf(z, p); }, -100.0,
                                   100.0, 1e-11);
    double m2 = oracles::integrate([&](double z) { return z * z * udist::skewt_pdf(z, p); },
                                   -100.0, 100.0, 1e-11);
    CHECK(m1 == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(m2 == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("skew-t cdf: half at zero for symmetric case, limits") {
    SkewTParams p{6.0, 0.0};
    CHECK(udist::skewt_cdf(0.0, p) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(udist::skewt_cdf(-1e6, p) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(udist::skewt_cdf(1e6, p) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("skew-t cdf matches quadrature of the density at z=1") {
    SkewTParams p{13.4633, -0.0885};
    double q = oracles::integrate([&](double z) { return udist::skewt_pdf(z, p); }, -80.0, 1.0,
                                  1e-12);
    CHECK(udist::skewt_cdf(1.0, p) == doctest::Approx(q).epsilon(1e-6));
}

TEST_CASE("skew-t quantile: median and round trips") {
    SkewTParams sym{5.7, 0.0};
    CHECK(std::fabs(udist::skewt_quantile(0.5, sym)) < 1e-8);
    SkewTParams p{8.1, -0.3};
    double z = udist::skewt_quantile(0.05, p);
    CHECK(udist::skewt_cdf(z, p) == doctest::Approx(0.05).epsilon(1e-8));
    CHECK_THROWS_AS(udist::skewt_quantile(0.0, p), std::domain_error);
    CHECK_THROWS_AS(udist::skewt_quantile(1.5, p), std::domain_error);
}

TEST_CASE("skew-t quantile: quantile-of-cdf identity on a probability grid") {
    SkewTParams p{4.4, 0.6};
    for (int i = 1; i <= 99; ++i) {
        double u = i / 100.0;
        double z = udist::skewt_quantile(u, p);
        CHECK(udist::skewt_cdf(z, p) == doctest::Approx(u).epsilon(1e-8));
    }
}

TEST_CASE("skew-t quantile at lambda=0 matches an independent t oracle") {
    // Oracle: CDF by quadrature of the library-independent t kernel,
    // inverted by bisection, then variance-standardized.
    double nu = 5.0;
    auto t_pdf = [nu](double x) {
        return std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
               std::sqrt(nu * M_PI) * std::pow(1.0 + x * x / nu, -0.5 * (nu + 1.0));
    };
    auto t_cdf = [&](double x) { return oracles::integrate(t_pdf, -200.0, x, 1e-12); };
    double t975 = oracles::quantile_by_bisection(t_cdf, 0.975, 0.0, 50.0);
    double expected = t975 * std::sqrt((nu - 2.0) / nu);
    CHECK(udist::skewt_quantile(0.975, SkewTParams{nu, 0.0}) ==
          doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("skew-t sampling: determinism, moments, KS distance") {
    SkewTParams p{8.0, 0.0};
    Rng r1(42), r2(42);
    auto a = udist::skewt_sample(1000, p, r1);
    auto b = udist::skewt_sample(1000, p, r2);
    CHECK(a == b);

    Rng r3(7);
    auto big = udist::skewt_sample(1000000, p, r3);
    CHECK(oracles::mean(big) == doctest::Approx(0.0).epsilon(1e-2));
    CHECK(oracles::variance(big) == doctest::Approx(1.0).epsilon(2e-2));

    Rng r4(11);
    auto mid = udist::skewt_sample(100000, p, r4);
    double d = oracles::ks_distance(mid, [&](double z) { return udist::skewt_cdf(z, p); });
    CHECK(d < 1.36 / std::sqrt(100000.0));
}

TEST_CASE("skew-t reduces to standardized student t at lambda=0") {
    double nu = 9.4;
    SkewTParams p{nu, 0.0};
    for (double z : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
        CHECK(udist::skewt_logpdf(z, p) ==
              doctest::Approx(udist::student_std_logpdf(z, nu)).epsilon(1e-10));
        CHECK(udist::skewt_cdf(z, p) ==
              doctest::Approx(udist::student_std_cdf(z, nu)).epsilon(1e-10));
    }
}

TEST_CASE("skew-t: invalid parameters rejected") {
    CHECK_THROWS_AS(udist::skewt_logpdf(0.0, SkewTParams{1.5, 0.0}), std::domain_error);
    CHECK_THROWS_AS(udist::skewt_logpdf(0.0, SkewTParams{5.0, 1.0}), std::domain_error);
}

TEST_CASE("student/normal plumbing: density integrals and sampling") {
    double total_t = oracles::integrate([](double z) { return std::exp(udist::student_std_logpdf(z, 6.0)); },
                                        -100.0, 100.0, 1e-11);
    CHECK(total_t == doctest::Approx(1.0).epsilon(1e-6));
    double total_n = oracles::integrate([](double z) { return std::exp(udist::normal_logpdf(z)); },
                                        -12.0, 12.0, 1e-12);
    CHECK(total_n == doctest::Approx(1.0).epsilon(1e-9));

    Rng rng(5);
    auto s = udist::student_std_sample(200000, 6.0, rng);
    CHECK(oracles::mean(s) == doctest::Approx(0.0).epsilon(2e-2));
    CHECK(oracles::variance(s) == doctest::Approx(1.0).epsilon(3e-2));

    Rng rng2(6);
    auto n = udist::normal_sample(100000, rng2);
    double d = oracles::ks_distance(n, [](double z) { return udist::normal_cdf(z); });
    CHECK(d < 1.36 / std::sqrt(100000.0));
}

TEST_CASE("quantile table tracks the exact quantile") {
    SkewTParams p{11.0, -0.25};
    udist::SkewTQuantileTable table(p);
    for (double u : {1e-7, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-6}) {
        double exact = udist::skewt_quantile(u, p);
        CHECK(table(u) == doctest::Approx(exact).epsilon(1e-6));
    }
}
