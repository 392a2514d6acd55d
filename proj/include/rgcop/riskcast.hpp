#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rgcop/estimate.hpp"

namespace rgcop::riskcast {

struct ForecastDraws {
    std::vector<double> x1, x2;  // simulated next-day returns per asset
    std::vector<double> y;       // portfolio returns
    double w1 = 0.5, w2 = 0.5;
};

// Next-day conditional state: per-asset mean and variance, plus the
// copula parameter for the forecast day.
struct ForecastState {
    double mean1 = 0.0, var1 = 1.0;
    double mean2 = 0.0, var2 = 1.0;
    double delta = 0.0;
};

// Reusable simulator: margin inverse-CDF machinery is built once per fit.
class RiskSimulator {
  public:
    explicit RiskSimulator(const estimate::JointFit& fit);
    ~RiskSimulator();
    RiskSimulator(RiskSimulator&&) noexcept;

    ForecastDraws simulate(const ForecastState& state, std::size_t n_paths, Rng& rng,
                           double w1 = 0.5, double w2 = 0.5) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ForecastDraws simulate_joint(const estimate::JointFit& fit, const ForecastState& state,
                             std::size_t n_paths, Rng& rng, double w1 = 0.5, double w2 = 0.5);

// Interpolated empirical alpha-quantile of the portfolio draws.
double var_forecast(const ForecastDraws& draws, double alpha);

// Mean of the draws at or below the empirical alpha-quantile. Throws when
// fewer than 20 draws fall in the tail.
double expected_shortfall(const ForecastDraws& draws, double alpha);
double expected_shortfall(std::span<const double> draws, double alpha);

struct CdbPoint {
    double cdb = 0.0;
    double es = 0.0;        // portfolio expected shortfall, loss scale
    double es_upper = 0.0;  // weighted individual shortfalls (no diversification)
    double es_lower = 0.0;  // portfolio alpha-quantile loss
    double alpha = 0.05;
};

// Conditional diversification benefit from a shared draw set; shortfalls
// are measured as losses so the measure increases with the benefit.
CdbPoint cdb_from_draws(const ForecastDraws& draws, double alpha);
CdbPoint cdb(const estimate::JointFit& fit, const ForecastState& state, double w1, double w2,
             double alpha, std::size_t n_paths, Rng& rng);

struct CdbBand {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

// Constant-benefit reference: iid bivariate normal data at a fixed
// correlation, CDB recomputed per simulation, mean and band reported.
CdbBand cdb_constant_band(double rho, std::size_t t_len, int n_sim, double alpha, double level,
                          Rng& rng);

struct BacktestSeries {
    std::vector<double> alphas;
    std::vector<std::size_t> days;           // indices into the panel
    std::vector<std::vector<double>> var;    // [alpha][oos day]
    std::vector<std::vector<double>> es;     // [alpha][oos day], loss scale
    std::vector<std::vector<double>> cdb;    // [alpha][oos day], same draw set
    std::vector<double> realized;            // realized portfolio return per oos day
};

// Fixed-window out-of-sample VaR forecasts: parameters stay at the fitted
// values, per-day state is filtered forward with realized data.
BacktestSeries var_backtest_series(const estimate::JointFit& fit,
                                   const marketdata::DailyPanel& panel, std::size_t oos_start,
                                   std::span<const double> alphas, std::size_t n_paths,
                                   std::uint64_t seed, double w1 = 0.5, double w2 = 0.5);

// Full-panel filtered state under fixed fitted parameters: per-day margin
// means/variances, PITs and the copula parameter path (aligned at the AR
// pre-sample offset).
struct FilteredPaths {
    margins::FilterOutput f1, f2;
    std::vector<double> u1, u2;
    std::vector<double> delta;
    int offset = 0;  // panel index of the first aligned day
};
FilteredPaths filter_joint_paths(const estimate::JointFit& fit,
                                 const marketdata::DailyPanel& panel);

// Per-day out-of-sample log copula density (CPA test input).
std::vector<double> oos_copula_logdensity(const estimate::JointFit& fit,
                                          const marketdata::DailyPanel& panel,
                                          std::size_t oos_start);

}  // namespace rgcop::riskcast
