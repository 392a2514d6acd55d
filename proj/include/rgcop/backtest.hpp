#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rgcop::backtest {

struct HitSeries {
    std::vector<int> hits;          // 1 when realized return undershoots the quantile
    std::vector<double> quantiles;  // the forecasts
    double alpha = 0.05;
};

HitSeries make_hits(std::span<const double> realized, std::span<const double> quantiles,
                    double alpha);

double coverage(const HitSeries& h);

struct DqResult {
    double stat = 0.0;
    double p_value = 1.0;
    bool testable = true;
    std::string note;
    int n_lags = 4;
};

// Logit autoregression of the hit sequence on its own lags and the lagged
// quantile forecasts; Wald test of Pr(hit)=alpha with a simulated null.
DqResult dq_test(const HitSeries& h, int n_lags = 4, int n_sim = 1000, std::uint64_t seed = 97);

std::vector<double> tick_loss(std::span<const double> realized,
                              std::span<const double> quantiles, double alpha);
double mean_tick_loss(std::span<const double> realized, std::span<const double> quantiles,
                      double alpha);

struct DmResult {
    double stat = 0.0;
    double p_value = 1.0;
    bool degenerate = false;  // long-run variance hit the floor
};

// Diebold-Mariano equal-accuracy test with Newey-West variance.
DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b);

}  // namespace rgcop::backtest
