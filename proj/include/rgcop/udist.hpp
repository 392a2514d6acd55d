#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rgcop/rng.hpp"

namespace rgcop::udist {

// Hansen's skewed-t: standardized (zero mean, unit variance) with tail
// parameter nu in (2, inf] and skewness lambda in (-1, 1). Above
// kNormalBranchNu the t kernel is replaced by its normal limit to keep
// the gamma-function ratios stable.
inline constexpr double kNormalBranchNu = 1e6;

struct SkewTParams {
    double nu = 8.0;
    double lambda = 0.0;
};

void validate(const SkewTParams& p);

// Constants of the skew-t density hoisted out of per-observation loops.
// lambda = 0 gives the standardized Student's t, and the normal branch
// gives the skewed normal limit.
class SkewTKernel {
  public:
    explicit SkewTKernel(const SkewTParams& p);

    double logpdf(double z) const {
        double side = z < threshold_ ? (1.0 - lambda_) : (1.0 + lambda_);
        double q = (b_ * z + a_) / side;
        if (normal_branch_) return log_bc_ - 0.5 * q * q;
        return log_bc_ - half_nu_p1_ * std::log1p(q * q * inv_num2_);
    }
    double pdf(double z) const { return std::exp(logpdf(z)); }
    double cdf(double z) const;
    // Exact inverse through the t (or normal) quantile branches.
    double quantile(double u) const;

    const SkewTParams& params() const { return params_; }

  private:
    SkewTParams params_;
    double a_, b_, log_bc_;
    double lambda_, nu_;
    double threshold_;    // -a/b
    double half_nu_p1_;   // (nu+1)/2
    double inv_num2_;     // 1/(nu-2)
    double t_scale_;      // sqrt(nu/(nu-2))
    bool normal_branch_;
};

double skewt_logpdf(double z, const SkewTParams& p);
double skewt_pdf(double z, const SkewTParams& p);
double skewt_cdf(double z, const SkewTParams& p);
double skewt_quantile(double u, const SkewTParams& p);
std::vector<double> skewt_sample(std::size_t n, const SkewTParams& p, Rng& rng);

// Standardized (unit-variance) Student's t, nu > 2.
double student_std_logpdf(double z, double nu);
double student_std_cdf(double z, double nu);
double student_std_quantile(double u, double nu);
std::vector<double> student_std_sample(std::size_t n, double nu, Rng& rng);

// Standard normal, same surface.
double normal_logpdf(double z);
double normal_cdf(double z);
double normal_quantile(double u);
std::vector<double> normal_sample(std::size_t n, Rng& rng);

// Tabulated inverse CDF for bulk sampling: monotone-cubic interpolation on
// a normal-scale grid, exact evaluation in the extreme tails.
class SkewTQuantileTable {
  public:
    explicit SkewTQuantileTable(const SkewTParams& p, int grid_size = 2048);
    double operator()(double u) const;

  private:
    SkewTKernel kernel_;
    std::vector<double> u_;   // grid probabilities
    std::vector<double> z_;   // quantiles
    std::vector<double> m_;   // interpolation slopes
    double u_lo_, u_hi_;
};

}  // namespace rgcop::udist
