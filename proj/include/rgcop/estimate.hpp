#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rgcop/copula.hpp"
#include "rgcop/margins.hpp"
#include "rgcop/marketdata.hpp"

namespace rgcop::estimate {

enum class MarginsMode { parametric, empirical };

struct CopulaSpec {
    copula::Family family = copula::Family::normal;
    bool time_varying = false;
};

struct FitConfig {
    int n_starts = 3;
    int max_iter = 400;
    double grad_tol = 1e-6;
    std::uint64_t seed = 977;
    bool compute_vcov = true;
};

struct CopulaFit {
    copula::Family family = copula::Family::normal;
    bool time_varying = false;
    copula::Params params;     // constant parameters; for GAS holds the shape
    copula::GasParams gas;     // meaningful when time_varying
    copula::DependencePath path;  // filtered path (GAS only)
    double loglik = 0.0;
    std::vector<std::string> param_names;
    std::vector<double> param_values;
    std::vector<std::vector<double>> vcov;
    std::vector<double> se;
    bool converged = false;
    bool boundary_flag = false;
    double grad_norm = 0.0;
    int clipped_inputs = 0;

    std::string to_json() const;
    static CopulaFit from_json(const std::string& text);
};

struct JointFit {
    margins::MarginFit margin1, margin2;
    CopulaFit cop;
    MarginsMode mode = MarginsMode::parametric;
    double total_loglik = 0.0;
    std::vector<double> u1, u2;  // aligned PITs fed to the copula stage

    std::string to_json() const;
};

CopulaFit fit_constant_copula(std::span<const double> u1, std::span<const double> u2,
                              copula::Family family, const FitConfig& cfg = {});

CopulaFit fit_gas_copula(std::span<const double> u1, std::span<const double> u2,
                         copula::Family family, const FitConfig& cfg = {});

// Two-stage estimation: margins first (always parametric variance models),
// then the copula on parametric or rank-based PITs.
JointFit msml(const marketdata::DailyPanel& panel, const margins::MarginSpec& spec1,
              const margins::MarginSpec& spec2, const CopulaSpec& cspec, MarginsMode mode,
              const margins::OptimizerConfig& mcfg = {}, const FitConfig& ccfg = {});

// Geometric-block resampling with wrap-around (mean block length > 1 gives
// the stationary bootstrap; mean_block -> 1 degenerates to iid draws).
std::vector<std::size_t> stationary_bootstrap_indices(std::size_t t_len, double mean_block,
                                                      Rng& rng);

enum class BootstrapScheme { stationary_block, iid };

struct BootstrapResult {
    std::vector<std::string> param_names;
    std::vector<std::vector<double>> replicates;  // one vector per successful replicate
    std::vector<std::pair<double, double>> ci;    // per parameter at the requested level
    std::vector<double> se;                       // replicate standard deviation
    BootstrapScheme scheme = BootstrapScheme::stationary_block;
    int failures = 0;
    bool semiparametric_tv_caveat = false;
};

struct BootstrapConfig {
    int replicates = 100;  // S
    double level = 0.90;
    double mean_block = 20.0;
    std::uint64_t seed = 4242;
    int threads = 1;
};

// Refit callback: receives the resample indices, returns the replicate's
// parameter vector (throw to mark the replicate failed).
using RefitFn = std::function<std::vector<double>(std::span<const std::size_t>)>;

BootstrapResult bootstrap_generic(const RefitFn& refit, std::size_t t_len,
                                  const std::vector<std::string>& names,
                                  BootstrapScheme scheme, const BootstrapConfig& cfg);

// Scheme selection follows the estimation mode: parametric fits resample
// panel rows with the stationary block bootstrap and rerun both stages;
// semiparametric constant fits resample residual pairs iid and refit the
// copula; semiparametric time-varying fits use the block scheme and carry
// a caveat flag. Confidence intervals cover the copula-stage parameters.
BootstrapResult bootstrap_ci(const JointFit& fit, const marketdata::DailyPanel& panel,
                             const BootstrapConfig& cfg, const margins::OptimizerConfig& mcfg,
                             const FitConfig& ccfg);

// Simulates a joint data panel from margin generators linked by a copula
// (constant params or a GAS process).
struct JointSimulation {
    marketdata::DailyPanel panel;
    std::vector<double> u1, u2;
    std::vector<double> delta;  // copula parameter path
};
JointSimulation simulate_joint_dgp(const margins::MarginFit& gen1, const margins::MarginFit& gen2,
                                   const CopulaSpec& cspec, const copula::Params& cparams,
                                   const copula::GasParams& gparams, std::size_t n,
                                   std::size_t burn, std::uint64_t seed);

// Text rendering of fitted models in the parameter/(std. error) layout.
std::string format_fit_table(const JointFit& fit, const BootstrapResult* boot = nullptr);

}  // namespace rgcop::estimate
