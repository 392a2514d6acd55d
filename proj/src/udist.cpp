#include "rgcop/udist.hpp"

#include <algorithm>
#include <stdexcept>

#include "rgcop/special.hpp"

namespace rgcop::udist {

using special::norm_cdf;
using special::norm_quantile;
using special::student_t_cdf;
using special::student_t_quantile;

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;
}

void validate(const SkewTParams& p) {
    if (!(p.nu > 2.0)) throw std::domain_error("skew-t: nu must exceed 2");
    if (!(std::fabs(p.lambda) < 1.0)) throw std::domain_error("skew-t: |lambda| must be below 1");
}

SkewTKernel::SkewTKernel(const SkewTParams& p) : params_(p) {
    validate(p);
    lambda_ = p.lambda;
    nu_ = p.nu;
    normal_branch_ = !(p.nu <= kNormalBranchNu);  // also catches nu = inf
    double c;
    if (normal_branch_) {
        c = 1.0 / std::sqrt(2.0 * M_PI);
        a_ = 4.0 * lambda_ * c;
        half_nu_p1_ = 0.0;
        inv_num2_ = 0.0;
        t_scale_ = 1.0;
    } else {
        c = std::exp(std::lgamma(0.5 * (nu_ + 1.0)) - std::lgamma(0.5 * nu_) -
                     0.5 * std::log(M_PI * (nu_ - 2.0)));
        a_ = 4.0 * lambda_ * c * (nu_ - 2.0) / (nu_ - 1.0);
        half_nu_p1_ = 0.5 * (nu_ + 1.0);
        inv_num2_ = 1.0 / (nu_ - 2.0);
        t_scale_ = std::sqrt(nu_ / (nu_ - 2.0));
    }
    b_ = std::sqrt(1.0 + 3.0 * lambda_ * lambda_ - a_ * a_);
    log_bc_ = std::log(b_ * c);
    threshold_ = -a_ / b_;
}

double SkewTKernel::cdf(double z) const {
    double side = z < threshold_ ? (1.0 - lambda_) : (1.0 + lambda_);
    double q = (b_ * z + a_) / side;
    double base = normal_branch_ ? norm_cdf(q) : student_t_cdf(q * t_scale_, nu_);
    double val = z < threshold_ ? side * base : side * base - lambda_;
    return std::clamp(val, 0.0, 1.0);
}

double SkewTKernel::quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("skewt quantile: u outside (0,1)");
    double half = 0.5 * (1.0 - lambda_);
    double side, p;
    if (u < half) {
        side = 1.0 - lambda_;
        p = u / side;
    } else {
        side = 1.0 + lambda_;
        p = (u + lambda_) / side;
    }
    p = std::clamp(p, 1e-300, 1.0 - 1e-16);
    double q = normal_branch_ ? norm_quantile(p) : student_t_quantile(p, nu_) / t_scale_;
    return (side * q - a_) / b_;
}

double skewt_logpdf(double z, const SkewTParams& p) { return SkewTKernel(p).logpdf(z); }

double skewt_pdf(double z, const SkewTParams& p) { return SkewTKernel(p).pdf(z); }

double skewt_cdf(double z, const SkewTParams& p) { return SkewTKernel(p).cdf(z); }

double skewt_quantile(double u, const SkewTParams& p) {
    SkewTKernel k(p);
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("skewt_quantile: u outside (0,1)");
    // Seed from the branch inverse, then bracketed Newton polish on the
    // CDF with a bisection safety net.
    double z = k.quantile(u);
    double lo = z - 1.0, hi = z + 1.0;
    while (k.cdf(lo) > u) lo -= 2.0 * (z - lo);
    while (k.cdf(hi) < u) hi += 2.0 * (hi - z);
    for (int it = 0; it < 80; ++it) {
        double f = k.cdf(z) - u;
        if (std::fabs(f) < 1e-15) break;
        if (f > 0.0) hi = z; else lo = z;
        double d = k.pdf(z);
        double zn = d > 0.0 ? z - f / d : 0.5 * (lo + hi);
        if (!(zn > lo && zn < hi)) zn = 0.5 * (lo + hi);
        if (std::fabs(zn - z) < 1e-13 * (1.0 + std::fabs(z))) { z = zn; break; }
        z = zn;
    }
    return z;
}

std::vector<double> skewt_sample(std::size_t n, const SkewTParams& p, Rng& rng) {
    SkewTKernel k(p);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = k.quantile(rng.uniform());
    return out;
}

double student_std_logpdf(double z, double nu) {
    return skewt_logpdf(z, SkewTParams{nu, 0.0});
}

double student_std_cdf(double z, double nu) { return skewt_cdf(z, SkewTParams{nu, 0.0}); }

double student_std_quantile(double u, double nu) {
    if (!(nu > 2.0)) throw std::domain_error("student_std: nu must exceed 2");
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("student_std_quantile: u outside (0,1)");
    return student_t_quantile(u, nu) * std::sqrt((nu - 2.0) / nu);
}

std::vector<double> student_std_sample(std::size_t n, double nu, Rng& rng) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = student_std_quantile(rng.uniform(), nu);
    return out;
}

double normal_logpdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }
double normal_cdf(double z) { return norm_cdf(z); }
double normal_quantile(double u) { return norm_quantile(u); }

std::vector<double> normal_sample(std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal();
    return out;
}

SkewTQuantileTable::SkewTQuantileTable(const SkewTParams& p, int grid_size) : kernel_(p) {
    if (grid_size < 16) grid_size = 16;
    u_lo_ = 1e-5;
    u_hi_ = 1.0 - 1e-5;
    u_.resize(grid_size);
    z_.resize(grid_size);
    // Grid uniform in the normal-quantile scale so the tails get finer
    // probability spacing than the center.
    double a = norm_quantile(u_lo_), b = norm_quantile(u_hi_);
    for (int i = 0; i < grid_size; ++i) {
        double t = a + (b - a) * i / (grid_size - 1.0);
        u_[i] = norm_cdf(t);
        z_[i] = kernel_.quantile(u_[i]);
    }
    // Fritsch-Carlson monotone cubic slopes.
    int n = grid_size;
    std::vector<double> d(n - 1);
    for (int i = 0; i < n - 1; ++i) d[i] = (z_[i + 1] - z_[i]) / (u_[i + 1] - u_[i]);
    m_.resize(n);
    m_[0] = d[0];
    m_[n - 1] = d[n - 2];
    for (int i = 1; i < n - 1; ++i)
        m_[i] = (d[i - 1] * d[i] <= 0.0) ? 0.0 : 2.0 * d[i - 1] * d[i] / (d[i - 1] + d[i]);
}

double SkewTQuantileTable::operator()(double u) const {
    if (u <= u_lo_ || u >= u_hi_) return kernel_.quantile(std::clamp(u, 1e-12, 1.0 - 1e-12));
    auto it = std::upper_bound(u_.begin(), u_.end(), u);
    int i = static_cast<int>(it - u_.begin()) - 1;
    double h = u_[i + 1] - u_[i];
    double t = (u - u_[i]) / h;
    double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * z_[i] + (t3 - 2 * t2 + t) * h * m_[i] +
           (-2 * t3 + 3 * t2) * z_[i + 1] + (t3 - t2) * h * m_[i + 1];
}

}  // namespace rgcop::udist
