#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgcop/udist.hpp"

namespace rgcop::margins {

enum class VarianceModel { realized_garch, gjr_garch };
enum class Innovation { skew_t, student_t };

struct MarginSpec {
    int mean_lags = 0;  // AR order 0..5; kAutoLags selects by BIC
    VarianceModel variance_model = VarianceModel::realized_garch;
    Innovation innovation = Innovation::skew_t;
};

inline constexpr int kAutoLags = -1;
inline constexpr int kMaxMeanLags = 5;

struct OptimizerConfig {
    int n_starts = 5;
    int max_iter = 500;
    double grad_tol = 1e-6;
    std::uint64_t seed = 20231;  // perturbed-start stream
    bool compute_vcov = true;
};

class EstimationError : public std::runtime_error {
  public:
    EstimationError(const std::string& msg, std::vector<double> best_point, double grad_norm)
        : std::runtime_error(msg), best_point(std::move(best_point)), grad_norm(grad_norm) {}
    std::vector<double> best_point;
    double grad_norm = 0.0;
};

struct MarginFit {
    MarginSpec spec;
    std::vector<std::string> param_names;
    std::vector<double> params;

    std::vector<double> h_path;  // conditional variances, one per input day
    std::vector<double> z;       // standardized residuals, first mean_lags days dropped
    std::vector<double> u;       // parametric PITs of z
    double loglik_joint = 0.0;   // returns plus measurement equation
    double loglik_partial = 0.0; // returns only
    std::vector<std::vector<double>> vcov;  // QMLE sandwich
    std::vector<double> se;
    bool converged = false;
    bool stationarity_violated = false;
    double grad_norm = 0.0;
    double h_next = 0.0;  // one-step-ahead conditional variance

    double param(const std::string& name) const;
    int ar_order() const { return spec.mean_lags; }
    // Innovation distribution of the fit (lambda = 0 for student-t).
    udist::SkewTParams innovation_params() const;

    std::string to_json() const;
    static MarginFit from_json(const std::string& text);

    // Builds a parameter holder without estimation (simulation generators,
    // hand-specified models). Names must match the model's layout.
    static MarginFit make(const MarginSpec& spec,
                          const std::vector<std::pair<std::string, double>>& values);
};

// One-day margin state used for variance forecasting.
struct MarginState {
    double h = 0.0;    // conditional variance of the last day
    double rv = 0.0;   // realized variance of the last day
    double eps = 0.0;  // mean residual of the last day
};

MarginFit fit_realized_garch(std::span<const double> y, std::span<const double> rv,
                             const MarginSpec& spec, const OptimizerConfig& cfg = {});

MarginFit fit_gjr_garch(std::span<const double> y, const MarginSpec& spec,
                        const OptimizerConfig& cfg = {});

// Re-filters data with the stored parameters; identical to fit.z on the
// training sample.
std::vector<double> filter_residuals(const MarginFit& fit, std::span<const double> y,
                                     std::span<const double> rv);

// Log-likelihood of the stored parameters on a dataset (joint includes the
// realized-measure equation when the model has one).
double loglik_at(const MarginFit& params_holder, std::span<const double> y,
                 std::span<const double> rv, bool joint = true);

// Full-length conditional variance path (plus one-step-ahead forecast)
// under the stored parameters.
struct FilterOutput {
    std::vector<double> h;
    std::vector<double> z;     // aligned with h from index mean_lags on
    std::vector<double> mean;  // conditional mean per day
    double h_next = 0.0;
};
FilterOutput filter_path(const MarginFit& fit, std::span<const double> y,
                         std::span<const double> rv);

std::vector<double> pit_parametric(std::span<const double> z, const udist::SkewTParams& p);
std::vector<double> pit_empirical(std::span<const double> z);

double forecast_variance(const MarginFit& fit, const MarginState& state);

// Simulates daily returns (and realized variances for realized-GARCH) from
// the stored parameters. z supplies the standardized innovations, one per
// output day; rng drives the measurement-equation noise.
struct MarginSimulation {
    std::vector<double> y, rv, h;
};
MarginSimulation simulate_margin(const MarginFit& gen, std::span<const double> z, Rng& rng);

}  // namespace rgcop::margins
