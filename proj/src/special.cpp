#include "rgcop/special.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace rgcop::special {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double norm_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
    // Acklam's rational approximation, then one Halley step against erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement.
    double e = norm_cdf(x) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double x, double a, double b) {
    const int max_iter = 300;
    const double eps = 1e-15, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double inc_beta(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(x, a, b) / a;
    }
    return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) - lbeta) * beta_cf(1.0 - x, b, a) / b;
}

double student_t_logpdf(double x, double nu) {
    if (!(nu > 0.0)) throw std::domain_error("student_t_logpdf: nu must be positive");
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI) -
           0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

double student_t_pdf(double x, double nu) { return std::exp(student_t_logpdf(x, nu)); }

double student_t_cdf(double x, double nu) {
    if (!(nu > 0.0)) throw std::domain_error("student_t_cdf: nu must be positive");
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    double ib = inc_beta(nu / (nu + x * x), 0.5 * nu, 0.5);
    return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("student_t_quantile: p outside (0,1)");
    if (!(nu > 0.0)) throw std::domain_error("student_t_quantile: nu must be positive");
    // Start from the Cornish-Fisher expansion around the normal quantile,
    // switch to the tail asymptote when the expansion is unreliable,
    // then polish with safeguarded Newton on the CDF.
    double z = norm_quantile(p);
    double x;
    if (nu > 2.0 && std::fabs(z) < 1.5 * std::sqrt(nu)) {
        double z3 = z * z * z, z5 = z3 * z * z;
        x = z + (z3 + z) / (4.0 * nu) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu);
    } else {
        double tail = p < 0.5 ? p : 1.0 - p;
        double lg = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI);
        // 1 - T(x) ~ const * x^-nu for large x
        double lx = (lg - std::log(nu) - std::log(tail)) / nu;
        x = std::exp(lx) * std::pow(nu, 0.5 + 0.5 / nu);
        // crude but inside the bracket; sign fixed below
        if (!std::isfinite(x) || x <= 0.0) x = 10.0 * std::sqrt(nu > 1 ? nu : 1.0);
        if (p < 0.5) x = -x;
    }
    // Bracket by expansion, then Newton with bisection fallback.
    double lo = x, hi = x;
    double flo = student_t_cdf(lo, nu) - p, fhi = flo;
    double step = 1.0 + std::fabs(x);
    int guard = 0;
    while (flo > 0.0 && guard++ < 200) {
        lo -= step;
        step *= 2.0;
        flo = student_t_cdf(lo, nu) - p;
    }
    step = 1.0 + std::fabs(x);
    guard = 0;
    while (fhi < 0.0 && guard++ < 200) {
        hi += step;
        step *= 2.0;
        fhi = student_t_cdf(hi, nu) - p;
    }
    x = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        double f = student_t_cdf(x, nu) - p;
        if (f > 0.0) hi = x; else lo = x;
        double dfdx = student_t_pdf(x, nu);
        double xn = x - f / dfdx;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::fabs(xn - x) < 1e-14 * (1.0 + std::fabs(x))) { x = xn; break; }
        x = xn;
    }
    return x;
}

namespace {

// Newton-on-Legendre-polynomial computation of nodes and weights.
std::vector<double> gl_nodes_weights(int n) {
    std::vector<double> out(2 * n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double x1 = x;
            x = x1 - p0 / pp;
            if (std::fabs(x - x1) < 1e-15) break;
        }
        out[i] = -x;
        out[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        out[n + i] = w;
        out[n + n - 1 - i] = w;
    }
    return out;
}

}  // namespace

GaussLegendre gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, std::vector<double>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, gl_nodes_weights(n)).first;
    return GaussLegendre{it->second.data(), it->second.data() + n, n};
}

}  // namespace rgcop::special
