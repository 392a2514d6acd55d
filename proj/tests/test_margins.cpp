#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rgcop/margins.hpp"

using namespace rgcop;
using margins::Innovation;
using margins::MarginFit;
using margins::MarginSpec;
using margins::VarianceModel;

namespace {

// Table-2-style realized GARCH generator (crude-oil column).
MarginFit oil_generator() {
    MarginSpec spec;
    spec.mean_lags = 0;
    spec.variance_model = VarianceModel::realized_garch;
    spec.innovation = Innovation::skew_t;
    return MarginFit::make(spec, {{"mu", 0.0001},
                                  {"omega", 0.0626},
                                  {"beta", 0.7622},
                                  {"gamma", 0.2081},
                                  {"xi", -0.3173},
                                  {"phi", 1.0758},
                                  {"tau1", -0.0627},
                                  {"tau2", 0.1053},
                                  {"sigma_u", 0.4},
                                  {"nu", 13.4633},
                                  {"lambda", -0.0885}});
}

// Table-2-style GJR generator (S&P column).
MarginFit gjr_generator() {
    MarginSpec spec;
    spec.mean_lags = 0;
    spec.variance_model = VarianceModel::gjr_garch;
    spec.innovation = Innovation::student_t;
    return MarginFit::make(spec, {{"mu", 0.0},
                                  {"kappa", 0.0028},
                                  {"phi", 0.0187},
                                  {"iota", 0.0883},
                                  {"psi", 0.9321},
                                  {"nu", 7.9716}});
}

struct SimData {
    std::vector<double> y, rv;
};

SimData simulate_rg(const MarginFit& gen, std::size_t n, std::uint64_t seed) {
    Rng zr = Rng::substream(seed, 0);
    Rng mr = Rng::substream(seed, 1);
    std::size_t burn = 500;
    std::vector<double> z = udist::skewt_sample(n + burn, gen.innovation_params(), zr);
    margins::MarginSimulation sim = margins::simulate_margin(gen, z, mr);
    SimData d;
    d.y.assign(sim.y.begin() + burn, sim.y.end());
    d.rv.assign(sim.rv.begin() + burn, sim.rv.end());
    return d;
}

SimData simulate_gjr(const MarginFit& gen, std::size_t n, std::uint64_t seed) {
    Rng zr = Rng::substream(seed, 0);
    Rng mr = Rng::substream(seed, 1);
    std::size_t burn = 500;
    std::vector<double> z = udist::skewt_sample(n + burn, gen.innovation_params(), zr);
    margins::MarginSimulation sim = margins::simulate_margin(gen, z, mr);
    SimData d;
    d.y.assign(sim.y.begin() + burn, sim.y.end());
    d.rv.assign(sim.h.begin() + burn, sim.h.end());  // placeholder, unused by GJR
    return d;
}

}  // namespace

TEST_CASE("filter_residuals: unit variance model passes returns through") {
    MarginSpec spec;
    spec.mean_lags = 0;
    spec.innovation = Innovation::skew_t;
    MarginFit unit = MarginFit::make(spec, {{"mu", 0.0},
                                            {"omega", 0.0},
                                            {"beta", 0.0},
                                            {"gamma", 0.0},
                                            {"xi", 0.0},
                                            {"phi", 1.0},
                                            {"tau1", 0.0},
                                            {"tau2", 0.0},
                                            {"sigma_u", 0.4},
                                            {"nu", 8.0},
                                            {"lambda", 0.0}});
    std::vector<double> y{0.5, -0.3, 0.8, -0.1, 0.2};
    std::vector<double> rv(5, 1.0);
    std::vector<double> z = margins::filter_residuals(unit, y, rv);
    // h_t = 1 for every day after the variance-targeted start.
    for (std::size_t t = 1; t < y.size(); ++t)
        CHECK(z[t] == doctest::Approx(y[t]).epsilon(1e-14));
}

TEST_CASE("realized GARCH: simulate and recover Table-2-style oil parameters") {
    MarginFit gen = oil_generator();
    SimData d = simulate_rg(gen, 3000, 991);
    MarginSpec spec = gen.spec;
    margins::OptimizerConfig cfg;
    cfg.n_starts = 3;
    MarginFit fit = margins::fit_realized_garch(d.y, d.rv, spec, cfg);
    CHECK(fit.converged);
    CHECK(fit.grad_norm < 1e-3);
    for (std::size_t i = 0; i < fit.params.size(); ++i) {
        double truth = gen.params[i];
        INFO(fit.param_names[i], " est=", fit.params[i], " true=", truth, " se=", fit.se[i]);
        CHECK(std::fabs(fit.params[i] - truth) < 3.0 * fit.se[i] + 1e-9);
    }
    // ML solution beats the generator's own likelihood on this sample.
    CHECK(fit.loglik_joint >= margins::loglik_at(gen, d.y, d.rv) - 1e-6);
}

TEST_CASE("realized GARCH: gamma=0 generator yields insignificant gamma") {
    MarginFit gen = oil_generator();
    for (std::size_t i = 0; i < gen.param_names.size(); ++i) {
        if (gen.param_names[i] == "gamma") gen.params[i] = 0.0;
        if (gen.param_names[i] == "beta") gen.params[i] = 0.9;
        if (gen.param_names[i] == "omega") gen.params[i] = -0.03;
    }
    SimData d = simulate_rg(gen, 3000, 992);
    margins::OptimizerConfig cfg;
    cfg.n_starts = 3;
    MarginFit fit = margins::fit_realized_garch(d.y, d.rv, gen.spec, cfg);
    double gamma_hat = fit.param("gamma");
    double gamma_se = fit.se[3];  // mu, omega, beta, gamma order
    CHECK(fit.param_names[3] == "gamma");
    CHECK(std::fabs(gamma_hat) < 3.0 * gamma_se + 0.02);
}

TEST_CASE("realized GARCH: degenerate inputs raise estimation errors") {
    std::vector<double> constant(300, 0.001), rv(300, 1e-4);
    CHECK_THROWS_AS(margins::fit_realized_garch(constant, rv, MarginSpec{}),
                    margins::EstimationError);
    std::vector<double> tiny{0.01, -0.02, 0.005};
    std::vector<double> rv3(3, 1e-4);
    CHECK_THROWS_AS(margins::fit_realized_garch(tiny, rv3, MarginSpec{}),
                    margins::EstimationError);
    std::vector<double> y(300, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i % 2 == 0) ? 0.01 : -0.01;
    std::vector<double> rv_zero(300, 1e-4);
    rv_zero[100] = 0.0;
    CHECK_THROWS_AS(margins::fit_realized_garch(y, rv_zero, MarginSpec{}), std::domain_error);
}

TEST_CASE("GJR: simulate and recover Table-2-style parameters") {
    MarginFit gen = gjr_generator();
    SimData d = simulate_gjr(gen, 3000, 993);
    margins::OptimizerConfig cfg;
    cfg.n_starts = 3;
    MarginSpec spec = gen.spec;
    MarginFit fit = margins::fit_gjr_garch(d.y, spec, cfg);
    CHECK(fit.converged);
    for (std::size_t i = 0; i < fit.params.size(); ++i) {
        double truth = gen.params[i];
        INFO(fit.param_names[i], " est=", fit.params[i], " true=", truth, " se=", fit.se[i]);
        CHECK(std::fabs(fit.params[i] - truth) < 3.0 * fit.se[i] + 1e-9);
    }
}

TEST_CASE("GJR: symmetric generator recovered as symmetric") {
    MarginFit gen = gjr_generator();
    for (std::size_t i = 0; i < gen.param_names.size(); ++i)
        if (gen.param_names[i] == "iota") gen.params[i] = 0.0;
    SimData d = simulate_gjr(gen, 3000, 994);
    margins::OptimizerConfig cfg;
    cfg.n_starts = 2;
    MarginFit fit = margins::fit_gjr_garch(d.y, gen.spec, cfg);
    CHECK(fit.param("iota") < 0.03);
}

TEST_CASE("GJR: three observations is an estimation error") {
    std::vector<double> y{0.01, -0.02, 0.005};
    CHECK_THROWS_AS(margins::fit_gjr_garch(y, MarginSpec{0, VarianceModel::gjr_garch,
                                                         Innovation::student_t}),
                    margins::EstimationError);
}

TEST_CASE("fit reproduces its own residuals and h path deterministically") {
    MarginFit gen = oil_generator();
    SimData d = simulate_rg(gen, 1200, 995);
    margins::OptimizerConfig cfg;
    cfg.n_starts = 2;
    cfg.compute_vcov = false;
    MarginFit fit = margins::fit_realized_garch(d.y, d.rv, gen.spec, cfg);
    std::vector<double> z = margins::filter_residuals(fit, d.y, d.rv);
    CHECK(z == fit.z);
    margins::FilterOutput f1 = margins::filter_path(fit, d.y, d.rv);
    margins::FilterOutput f2 = margins::filter_path(fit, d.y, d.rv);
    CHECK(f1.h == f2.h);
    CHECK(f1.h == fit.h_path);
    CHECK(f1.h_next == doctest::Approx(fit.h_next));
}

TEST_CASE("residuals from the true model standardize correctly") {
    MarginFit gen = oil_generator();
    SimData d = simulate_rg(gen, 3000, 996);
    std::vector<double> z = margins::filter_residuals(gen, d.y, d.rv);
    CHECK(oracles::mean(z) == doctest::Approx(0.0).epsilon(5e-2));
    CHECK(oracles::variance(z) == doctest::Approx(1.0).epsilon(5e-2));
}

TEST_CASE("pit: empirical ranks match the (T+1) convention") {
    std::vector<double> z{1.0, 2.0, 3.0};
    std::vector<double> u = margins::pit_empirical(z);
    CHECK(u[0] == doctest::Approx(0.25));
    CHECK(u[1] == doctest::Approx(0.50));
    CHECK(u[2] == doctest::Approx(0.75));
}

TEST_CASE("pit: empirical never touches the boundary") {
    Rng rng(997);
    std::vector<double> z = udist::normal_sample(500, rng);
    std::vector<double> u = margins::pit_empirical(z);
    for (double v : u) CHECK((v > 0.0 && v < 1.0));
    double mx = *std::max_element(u.begin(), u.end());
    CHECK(mx == doctest::Approx(500.0 / 501.0));
}

TEST_CASE("pit: parametric transform of true-model residuals is uniform") {
    udist::SkewTParams p{9.0, -0.2};
    Rng rng(998);
    std::vector<double> z = udist::skewt_sample(5000, p, rng);
    std::vector<double> u = margins::pit_parametric(z, p);
    double d = oracles::ks_distance(u, [](double x) { return x; });
    CHECK(d < 1.36 / std::sqrt(5000.0));  // KS acceptance at the 5% level
}

TEST_CASE("forecast_variance: recursion limit cases and hand arithmetic") {
    MarginFit unit = oil_generator();
    auto set = [&](const std::string& name, double v) {
        for (std::size_t i = 0; i < unit.param_names.size(); ++i)
            if (unit.param_names[i] == name) unit.params[i] = v;
    };
    set("omega", 0.0);
    set("beta", 1.0);
    set("gamma", 0.0);
    CHECK(margins::forecast_variance(unit, {2.5, 1.0, 0.0}) == doctest::Approx(2.5).epsilon(1e-12));
    set("beta", 0.0);
    set("gamma", 1.0);
    CHECK(margins::forecast_variance(unit, {2.5, 3.5, 0.0}) == doctest::Approx(3.5).epsilon(1e-12));

    MarginFit oil = oil_generator();
    double expected = std::exp(0.0626 + (0.7622 + 0.2081) * std::log(1e-4));
    CHECK(margins::forecast_variance(oil, {1e-4, 1e-4, 0.0}) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("normal-branch likelihood equals the Gaussian likelihood") {
    // nu above the switch with lambda = 0 must reproduce N(0,1) innovations.
    MarginFit gen = oil_generator();
    SimData d = simulate_rg(gen, 400, 999);
    MarginFit big_nu = gen;
    auto set = [&](const std::string& name, double v) {
        for (std::size_t i = 0; i < big_nu.param_names.size(); ++i)
            if (big_nu.param_names[i] == name) big_nu.params[i] = v;
    };
    set("nu", 1e8);
    set("lambda", 0.0);
    margins::FilterOutput f = margins::filter_path(big_nu, d.y, d.rv);
    double manual = 0.0;
    const double sigma_u = big_nu.param("sigma_u");
    for (std::size_t t = 0; t < d.y.size(); ++t) {
        double z = f.z[t];
        manual += -0.5 * std::log(2.0 * M_PI) - 0.5 * z * z - 0.5 * std::log(f.h[t]);
        double r = std::log(d.rv[t]) - big_nu.param("xi") - big_nu.param("phi") * std::log(f.h[t]) -
                   big_nu.param("tau1") * z - big_nu.param("tau2") * (z * z - 1.0);
        manual += -0.5 * std::log(2.0 * M_PI) - std::log(sigma_u) -
                  0.5 * r * r / (sigma_u * sigma_u);
    }
    CHECK(margins::loglik_at(big_nu, d.y, d.rv) == doctest::Approx(manual).epsilon(1e-9));
}

TEST_CASE("auto lag selection picks a small order for an AR(2) generator") {
    MarginFit gen = oil_generator();
    MarginSpec spec2 = gen.spec;
    spec2.mean_lags = 2;
    MarginFit gen2 = MarginFit::make(spec2, {{"mu", 0.0},
                                             {"ar1", -0.25},
                                             {"ar2", -0.12},
                                             {"omega", 0.0626},
                                             {"beta", 0.7622},
                                             {"gamma", 0.2081},
                                             {"xi", -0.3173},
                                             {"phi", 1.0758},
                                             {"tau1", -0.0627},
                                             {"tau2", 0.1053},
                                             {"sigma_u", 0.4},
                                             {"nu", 13.4633},
                                             {"lambda", -0.0885}});
    SimData d = simulate_rg(gen2, 2000, 1000);
    MarginSpec auto_spec = gen.spec;
    auto_spec.mean_lags = margins::kAutoLags;
    margins::OptimizerConfig cfg;
    cfg.n_starts = 2;
    cfg.compute_vcov = false;
    MarginFit fit = margins::fit_realized_garch(d.y, d.rv, auto_spec, cfg);
    CHECK(fit.spec.mean_lags == 2);
}

TEST_CASE("margin JSON round trip") {
    MarginFit gen = oil_generator();
    SimData d = simulate_rg(gen, 600, 1001);
    margins::OptimizerConfig cfg;
    cfg.n_starts = 1;
    cfg.compute_vcov = false;
    MarginFit fit = margins::fit_realized_garch(d.y, d.rv, gen.spec, cfg);
    MarginFit back = MarginFit::from_json(fit.to_json());
    CHECK(back.params == fit.params);
    CHECK(back.z == fit.z);
    CHECK(back.loglik_joint == doctest::Approx(fit.loglik_joint));
    CHECK(back.spec.mean_lags == fit.spec.mean_lags);
}
