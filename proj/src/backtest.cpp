#include "rgcop/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "rgcop/diagnostics.hpp"
#include "rgcop/rng.hpp"
#include "rgcop/special.hpp"

namespace rgcop::backtest {

HitSeries make_hits(std::span<const double> realized, std::span<const double> quantiles,
                    double alpha) {
    if (realized.size() != quantiles.size())
        throw std::domain_error("make_hits: length mismatch");
    HitSeries h;
    h.alpha = alpha;
    h.quantiles.assign(quantiles.begin(), quantiles.end());
    h.hits.resize(realized.size());
    for (std::size_t t = 0; t < realized.size(); ++t)
        h.hits[t] = realized[t] < quantiles[t] ? 1 : 0;
    return h;
}

double coverage(const HitSeries& h) {
    if (h.hits.empty()) throw std::domain_error("coverage: empty hit series");
    double s = std::accumulate(h.hits.begin(), h.hits.end(), 0.0);
    return s / static_cast<double>(h.hits.size());
}

namespace {

// Logit fit by damped Newton (IRLS) with a small ridge. Returns false on
// separation or non-convergence.
bool logit_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd* beta,
               Eigen::MatrixXd* info) {
    const int k = static_cast<int>(x.cols());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    const double ridge = 1e-8;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd eta = x * b;
        Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
        Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
        Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
        h.diagonal().array() += ridge;
        Eigen::VectorXd g = x.transpose() * (y - p);
        Eigen::VectorXd step = h.ldlt().solve(g);
        double damp = 1.0;
        if (step.cwiseAbs().maxCoeff() > 5.0) damp = 5.0 / step.cwiseAbs().maxCoeff();
        b += damp * step;
        if (b.cwiseAbs().maxCoeff() > 30.0) return false;  // separation
        if (step.cwiseAbs().maxCoeff() * damp < 1e-9) {
            Eigen::VectorXd eta2 = x * b;
            Eigen::VectorXd p2 = (1.0 / (1.0 + (-eta2.array()).exp())).matrix();
            Eigen::VectorXd w2 = (p2.array() * (1.0 - p2.array())).matrix();
            *info = x.transpose() * w2.asDiagonal() * x;
            info->diagonal().array() += ridge;
            *beta = b;
            return true;
        }
    }
    return false;
}

// Wald statistic that the logit of the hit sequence has intercept
// logit(alpha) and zero slopes.
bool dq_wald(const std::vector<int>& hits, const std::vector<double>& q, double alpha, int n_lags,
             double* stat) {
    const int t_len = static_cast<int>(hits.size());
    const int rows = t_len - n_lags;
    const int k = 1 + 2 * n_lags;
    int ones = std::accumulate(hits.begin(), hits.end(), 0);
    if (ones == 0 || ones == t_len) return false;

    Eigen::MatrixXd x(rows, k);
    Eigen::VectorXd y(rows);
    for (int t = n_lags; t < t_len; ++t) {
        int r = t - n_lags;
        x(r, 0) = 1.0;
        for (int j = 1; j <= n_lags; ++j) x(r, j) = hits[t - j];
        // lagged quantiles q_{t-k+1}, k = 1..n: current forecast first
        for (int j = 0; j < n_lags; ++j) x(r, 1 + n_lags + j) = q[t - j];
        y(r) = hits[t];
    }
    Eigen::VectorXd beta;
    Eigen::MatrixXd info;
    if (!logit_fit(x, y, &beta, &info)) return false;
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(k);
    theta0(0) = std::log(alpha / (1.0 - alpha));
    Eigen::VectorXd d = beta - theta0;
    *stat = d.transpose() * (info * d);
    return std::isfinite(*stat);
}

}  // namespace

DqResult dq_test(const HitSeries& h, int n_lags, int n_sim, std::uint64_t seed) {
    DqResult res;
    res.n_lags = n_lags;
    const int t_len = static_cast<int>(h.hits.size());
    if (t_len <= n_lags + 10) throw std::domain_error("dq_test: series too short for lag order");

    if (!dq_wald(h.hits, h.quantiles, h.alpha, n_lags, &res.stat)) {
        res.testable = false;
        int ones = std::accumulate(h.hits.begin(), h.hits.end(), 0);
        res.note = ones == 0   ? "no violations observed; logit separated"
                   : ones == t_len ? "all observations are violations; logit separated"
                                   : "logit estimation failed (separation or non-convergence)";
        return res;
    }

    // Simulated null: iid Bernoulli(alpha) hit sequences against the same
    // quantile regressors.
    int ge = 0, valid = 0;
    std::vector<int> sim_hits(t_len);
    for (int s = 0; s < n_sim; ++s) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(s));
        for (int t = 0; t < t_len; ++t) sim_hits[t] = rng.uniform() < h.alpha ? 1 : 0;
        double stat_s;
        if (!dq_wald(sim_hits, h.quantiles, h.alpha, n_lags, &stat_s)) continue;
        ++valid;
        if (stat_s >= res.stat) ++ge;
    }
    if (valid == 0) {
        res.testable = false;
        res.note = "null simulation produced no estimable replicates";
        return res;
    }
    res.p_value = (1.0 + ge) / (valid + 1.0);
    return res;
}

std::vector<double> tick_loss(std::span<const double> realized,
                              std::span<const double> quantiles, double alpha) {
    if (realized.size() != quantiles.size()) throw std::domain_error("tick_loss: length mismatch");
    std::vector<double> loss(realized.size());
    for (std::size_t t = 0; t < realized.size(); ++t) {
        double ind = realized[t] < quantiles[t] ? 1.0 : 0.0;
        loss[t] = (alpha - ind) * (realized[t] - quantiles[t]);
    }
    return loss;
}

double mean_tick_loss(std::span<const double> realized, std::span<const double> quantiles,
                      double alpha) {
    std::vector<double> l = tick_loss(realized, quantiles, alpha);
    return std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
}

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b) {
    const std::size_t n = loss_a.size();
    if (n != loss_b.size() || n < 30)
        throw std::domain_error("dm_test: need equal lengths of at least 30");
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = loss_a[t] - loss_b[t];
    double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);

    DmResult res;
    bool all_equal = std::all_of(d.begin(), d.end(), [&](double v) { return v == d[0]; });
    if (all_equal && d[0] == 0.0) {
        res.stat = 0.0;
        res.p_value = 1.0;
        return res;
    }
    double lrv = diagnostics::hac_lrv(d);
    if (!(lrv > 1e-300)) {
        res.degenerate = true;
        lrv = 1e-300;
    }
    res.stat = mean / std::sqrt(lrv / static_cast<double>(n));
    res.p_value = 2.0 * (1.0 - special::norm_cdf(std::fabs(res.stat)));
    return res;
}

}  // namespace rgcop::backtest
