#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rgcop/estimate.hpp"

namespace rgcop::diagnostics {

// Bartlett-kernel long-run variance. lag < 0 selects the automatic
// bandwidth floor(4 (T/100)^{2/9}).
double hac_lrv(std::span<const double> x, int lag = -1);
int hac_auto_lag(std::size_t t_len);

// ----------------------------------------------------------- GoF testing --

struct GofReport {
    double ks_stat = 0.0, cvm_stat = 0.0;
    double ks_p = 0.0, cvm_p = 0.0;
    int n_sim = 0;
    int failed_sims = 0;
    bool partial = false;  // too many simulation replicates failed
};

struct GofConfig {
    int n_sim = 1000;
    bool reestimate = true;  // re-fit the copula inside each simulation
    std::uint64_t seed = 31;
    int threads = 1;
};

// KS_R / CvM_R distances between the empirical copula of the transformed
// sample and the independence copula, evaluated at the sample points.
std::pair<double, double> rosenblatt_stats(std::span<const double> v1,
                                           std::span<const double> v2);

// Copula-only test: simulate from the fitted copula, re-estimate, compare.
GofReport gof_test(const estimate::CopulaFit& fit, std::span<const double> u1,
                   std::span<const double> u2, const GofConfig& cfg);

// Full-model test for parametric fits: margins and copula are re-simulated
// and re-estimated inside every replicate.
GofReport gof_test_joint(const estimate::JointFit& fit, const GofConfig& cfg,
                         const margins::OptimizerConfig& mcfg = {},
                         const estimate::FitConfig& ccfg = {});

// ------------------------------------------- time-varying dependence test --

struct TvTestResult {
    double stat = 0.0;
    double p_value = 1.0;
    int lags = 0;
};

// Autoregression of the demeaned-PIT product on its own lags; joint Wald
// statistic with an iid bootstrap null.
TvTestResult tv_dependence_test(std::span<const double> u1, std::span<const double> u2,
                                int lags = 10, int n_boot = 1000, std::uint64_t seed = 53);

// --------------------------------------------------------- break testing --

struct BreakReport {
    std::vector<std::size_t> break_indices;  // first index of the new regime
    std::vector<double> supf_stats;
    std::vector<double> p_values;
    std::string p_value_method = "simulated-null";  // not the Hansen (1997) approximation
};

BreakReport supf_break_test(std::span<const double> series, double trim = 0.15, int n_sim = 500,
                            std::uint64_t seed = 71, double level = 0.05);

// ------------------------------------------------------------- CPA test --

struct CpaResult {
    double stat = 0.0;
    double p_two_sided = 1.0;
    double p_greater = 1.0;  // H_A: E[d] > 0
    double p_less = 1.0;
    bool degenerate = false;
};

// Conditional predictive ability on loss (or log-density) differences,
// HAC-studentized, asymptotically N(0,1).
CpaResult cpa_test(std::span<const double> loss1, std::span<const double> loss2);

}  // namespace rgcop::diagnostics
