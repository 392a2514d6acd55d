#include "rgcop/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "rgcop/special.hpp"

namespace rgcop::diagnostics {

int hac_auto_lag(std::size_t t_len) {
    return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(t_len) / 100.0, 2.0 / 9.0)));
}

double hac_lrv(std::span<const double> x, int lag) {
    const std::size_t n = x.size();
    if (n < 2) throw std::domain_error("hac_lrv: need at least 2 observations");
    if (lag < 0) lag = hac_auto_lag(n);
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double lrv = 0.0;
    for (int j = 0; j <= lag; ++j) {
        double acc = 0.0;
        for (std::size_t t = j; t < n; ++t) acc += (x[t] - mean) * (x[t - j] - mean);
        acc /= static_cast<double>(n);
        double w = j == 0 ? 1.0 : 1.0 - static_cast<double>(j) / (lag + 1.0);
        lrv += j == 0 ? acc : 2.0 * w * acc;
    }
    return lrv;
}

// --------------------------------------------------------------- GoF ----

namespace {

// Fenwick tree over ranks for the O(T log T) dominance counts behind the
// empirical copula evaluated at its own sample points.
class Fenwick {
  public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    int prefix(std::size_t i) const {  // count of inserted ranks <= i
        int s = 0;
        for (++i; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

  private:
    std::vector<int> tree_;
};

}  // namespace

std::pair<double, double> rosenblatt_stats(std::span<const double> v1,
                                           std::span<const double> v2) {
    const std::size_t n = v1.size();
    if (n == 0 || v2.size() != n) throw std::domain_error("rosenblatt_stats: bad input");

    // Ranks of v2 with ties compressed (<= semantics via upper rank).
    std::vector<double> sorted2(v2.begin(), v2.end());
    std::sort(sorted2.begin(), sorted2.end());
    std::vector<std::size_t> rank2(n);
    for (std::size_t t = 0; t < n; ++t)
        rank2[t] = static_cast<std::size_t>(
            std::upper_bound(sorted2.begin(), sorted2.end(), v2[t]) - sorted2.begin() - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v1[a] < v1[b]; });

    Fenwick tree(n);
    double ks = 0.0, cvm = 0.0;
    std::size_t i = 0;
    while (i < n) {
        // Insert the whole tie-group in v1, then evaluate its members.
        std::size_t j = i;
        while (j < n && v1[order[j]] == v1[order[i]]) {
            tree.add(rank2[order[j]]);
            ++j;
        }
        for (std::size_t k = i; k < j; ++k) {
            std::size_t t = order[k];
            double chat = static_cast<double>(tree.prefix(rank2[t])) / static_cast<double>(n);
            double cind = v1[t] * v2[t];
            double d = cind - chat;
            ks = std::max(ks, std::fabs(d));
            cvm += d * d;
        }
        i = j;
    }
    return {ks, cvm};
}

namespace {

struct RosenblattInput {
    std::vector<double> v1, v2;
};

RosenblattInput transform_with_fit(const estimate::CopulaFit& fit, std::span<const double> u1,
                                   std::span<const double> u2) {
    RosenblattInput out;
    if (fit.time_varying) {
        // Recover the day-by-day parameter from the filtered path.
        copula::DependencePath path =
            copula::gas_filter(fit.gas, u1, u2,
                               std::fabs(fit.gas.beta) < 1.0
                                   ? std::clamp(fit.gas.w / (1.0 - fit.gas.beta),
                                                -copula::kKappaClamp, copula::kKappaClamp)
                                   : 0.0);
        copula::RosenblattResult r = copula::rosenblatt(fit.params, u1, u2, path.delta);
        out.v1 = std::move(r.v1);
        out.v2 = std::move(r.v2);
    } else {
        copula::RosenblattResult r = copula::rosenblatt(fit.params, u1, u2);
        out.v1 = std::move(r.v1);
        out.v2 = std::move(r.v2);
    }
    return out;
}

template <typename SimulateAndStat>
GofReport simulated_pvalues(double ks0, double cvm0, const GofConfig& cfg,
                            const SimulateAndStat& one_replicate) {
    GofReport rep;
    rep.ks_stat = ks0;
    rep.cvm_stat = cvm0;
    rep.n_sim = cfg.n_sim;
    std::vector<double> ks_sim(cfg.n_sim, -1.0), cvm_sim(cfg.n_sim, -1.0);

    auto run_one = [&](int s) {
        try {
            auto [ks, cvm] = one_replicate(static_cast<std::uint64_t>(s));
            ks_sim[s] = ks;
            cvm_sim[s] = cvm;
        } catch (const std::exception&) {
            // leave marked failed
        }
    };
    if (cfg.threads > 1) {
        std::mutex mu;
        std::size_t next = 0;
        auto worker = [&]() {
            for (;;) {
                std::size_t s;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= static_cast<std::size_t>(cfg.n_sim)) return;
                    s = next++;
                }
                run_one(static_cast<int>(s));
            }
        };
        std::vector<std::future<void>> futs;
        for (int i = 0; i < cfg.threads; ++i) futs.push_back(std::async(std::launch::async, worker));
        for (auto& f : futs) f.get();
    } else {
        for (int s = 0; s < cfg.n_sim; ++s) run_one(s);
    }

    int valid = 0, ks_ge = 0, cvm_ge = 0;
    for (int s = 0; s < cfg.n_sim; ++s) {
        if (ks_sim[s] < 0.0) {
            ++rep.failed_sims;
            continue;
        }
        ++valid;
        if (ks_sim[s] >= ks0) ++ks_ge;
        if (cvm_sim[s] >= cvm0) ++cvm_ge;
    }
    if (valid < cfg.n_sim / 2) rep.partial = true;
    rep.ks_p = (1.0 + ks_ge) / (valid + 1.0);
    rep.cvm_p = (1.0 + cvm_ge) / (valid + 1.0);
    return rep;
}

}  // namespace

GofReport gof_test(const estimate::CopulaFit& fit, std::span<const double> u1,
                   std::span<const double> u2, const GofConfig& cfg) {
    if (cfg.n_sim < 100) throw std::domain_error("gof_test: n_sim must be at least 100");
    const std::size_t t_len = u1.size();
    RosenblattInput v = transform_with_fit(fit, u1, u2);
    auto [ks0, cvm0] = rosenblatt_stats(v.v1, v.v2);

    estimate::FitConfig refit_cfg;
    refit_cfg.n_starts = 2;
    refit_cfg.compute_vcov = false;

    auto one_replicate = [&](std::uint64_t s) -> std::pair<double, double> {
        Rng rng = Rng::substream(cfg.seed, s);
        std::vector<double> su1, su2;
        if (fit.time_varying) {
            double k0 = std::fabs(fit.gas.beta) < 1.0
                            ? std::clamp(fit.gas.w / (1.0 - fit.gas.beta), -copula::kKappaClamp,
                                         copula::kKappaClamp)
                            : 0.0;
            copula::GasSimulation gs = copula::simulate_gas(fit.gas, t_len, k0, rng);
            su1 = std::move(gs.u1);
            su2 = std::move(gs.u2);
        } else {
            copula::sample(fit.params, t_len, rng, su1, su2);
        }
        estimate::CopulaFit refit = fit;
        if (cfg.reestimate) {
            refit = fit.time_varying
                        ? estimate::fit_gas_copula(su1, su2, fit.family, refit_cfg)
                        : estimate::fit_constant_copula(su1, su2, fit.family, refit_cfg);
        }
        RosenblattInput sv = transform_with_fit(refit, su1, su2);
        return rosenblatt_stats(sv.v1, sv.v2);
    };
    return simulated_pvalues(ks0, cvm0, cfg, one_replicate);
}

GofReport gof_test_joint(const estimate::JointFit& fit, const GofConfig& cfg,
                         const margins::OptimizerConfig& mcfg, const estimate::FitConfig& ccfg) {
    if (cfg.n_sim < 100) throw std::domain_error("gof_test: n_sim must be at least 100");
    RosenblattInput v = transform_with_fit(fit.cop, fit.u1, fit.u2);
    auto [ks0, cvm0] = rosenblatt_stats(v.v1, v.v2);
    const std::size_t t_len = fit.u1.size();

    margins::OptimizerConfig mfast = mcfg;
    mfast.n_starts = std::min(mcfg.n_starts, 2);
    mfast.compute_vcov = false;
    estimate::FitConfig cfast = ccfg;
    cfast.n_starts = std::min(ccfg.n_starts, 2);
    cfast.compute_vcov = false;
    estimate::CopulaSpec cspec{fit.cop.family, fit.cop.time_varying};

    auto one_replicate = [&](std::uint64_t s) -> std::pair<double, double> {
        estimate::JointSimulation sim = estimate::simulate_joint_dgp(
            fit.margin1, fit.margin2, cspec, fit.cop.params, fit.cop.gas, t_len, 200,
            cfg.seed ^ (0x9E3779B97F4A7C15ULL * (s + 1)));
        estimate::JointFit refit = estimate::msml(sim.panel, fit.margin1.spec, fit.margin2.spec,
                                                  cspec, fit.mode, mfast, cfast);
        RosenblattInput sv = transform_with_fit(refit.cop, refit.u1, refit.u2);
        return rosenblatt_stats(sv.v1, sv.v2);
    };
    return simulated_pvalues(ks0, cvm0, cfg, one_replicate);
}

// ------------------------------------------ time-varying dependence test --

namespace {

// Wald statistic for the joint nullity of the lag coefficients in an OLS
// autoregression of the proxy series.
double tv_wald_stat(std::span<const double> e, int lags) {
    const int n = static_cast<int>(e.size());
    const int rows = n - lags;
    const int k = lags + 1;
    Eigen::MatrixXd x(rows, k);
    Eigen::VectorXd y(rows);
    for (int t = lags; t < n; ++t) {
        x(t - lags, 0) = 1.0;
        for (int j = 1; j <= lags; ++j) x(t - lags, j) = e[t - j];
        y(t - lags) = e[t];
    }
    Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::VectorXd beta = xtx.ldlt().solve(x.transpose() * y);
    Eigen::VectorXd resid = y - x * beta;
    double s2 = resid.squaredNorm() / static_cast<double>(rows - k);
    Eigen::MatrixXd cov = s2 * xtx.inverse();
    Eigen::VectorXd b = beta.tail(lags);
    Eigen::MatrixXd vb = cov.bottomRightCorner(lags, lags);
    return b.transpose() * vb.ldlt().solve(b);
}

}  // namespace

TvTestResult tv_dependence_test(std::span<const double> u1, std::span<const double> u2, int lags,
                                int n_boot, std::uint64_t seed) {
    if (lags < 1) throw std::domain_error("tv_dependence_test: lags must be >= 1");
    const std::size_t n = u1.size();
    if (u2.size() != n) throw std::domain_error("tv_dependence_test: length mismatch");
    if (n <= static_cast<std::size_t>(lags) + 10)
        throw std::domain_error("tv_dependence_test: insufficient data for requested lags");

    double m1 = std::accumulate(u1.begin(), u1.end(), 0.0) / static_cast<double>(n);
    double m2 = std::accumulate(u2.begin(), u2.end(), 0.0) / static_cast<double>(n);
    std::vector<double> e(n);
    for (std::size_t t = 0; t < n; ++t) e[t] = (u1[t] - m1) * (u2[t] - m2);

    TvTestResult res;
    res.lags = lags;
    res.stat = tv_wald_stat(e, lags);

    int ge = 0;
    std::vector<double> eb(n);
    for (int b = 0; b < n_boot; ++b) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(b));
        for (std::size_t t = 0; t < n; ++t)
            eb[t] = e[static_cast<std::size_t>(rng.uniform() * n) % n];
        if (tv_wald_stat(eb, lags) >= res.stat) ++ge;
    }
    res.p_value = (1.0 + ge) / (n_boot + 1.0);
    return res;
}

// --------------------------------------------------------- break testing --

namespace {

// supF for a single mean shift; prefix sums give every candidate's SSR in
// O(1). Returns {stat, argmax index (first index of the new regime)}.
std::pair<double, std::size_t> supf_scan(std::span<const double> y, double trim) {
    const std::size_t n = y.size();
    std::vector<double> cs(n + 1, 0.0), cs2(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        cs[t + 1] = cs[t] + y[t];
        cs2[t + 1] = cs2[t] + y[t] * y[t];
    }
    auto seg_ssr = [&](std::size_t a, std::size_t b) {  // [a, b)
        double s = cs[b] - cs[a], s2 = cs2[b] - cs2[a];
        double len = static_cast<double>(b - a);
        return s2 - s * s / len;
    };
    double ssr0 = seg_ssr(0, n);
    std::size_t k_lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(trim * n)));
    std::size_t k_hi = n - k_lo;
    double best = -1.0;
    std::size_t best_k = k_lo;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        double ssr1 = seg_ssr(0, k) + seg_ssr(k, n);
        double f = (ssr0 - ssr1) * static_cast<double>(n - 2) / std::max(ssr1, 1e-300);
        if (f > best) {
            best = f;
            best_k = k;
        }
    }
    return {best, best_k};
}

double supf_null_pvalue(double stat, std::size_t n, double trim, int n_sim, std::uint64_t seed) {
    int ge = 0;
    std::vector<double> y(n);
    for (int s = 0; s < n_sim; ++s) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(s));
        for (std::size_t t = 0; t < n; ++t) y[t] = rng.normal();
        if (supf_scan(y, trim).first >= stat) ++ge;
    }
    return (1.0 + ge) / (n_sim + 1.0);
}

void supf_recurse(std::span<const double> y, std::size_t offset, double trim, int n_sim,
                  std::uint64_t seed, double level, int depth, BreakReport* rep) {
    const std::size_t min_len = static_cast<std::size_t>(std::ceil(2.0 / trim));
    if (y.size() < min_len || depth > 6) return;
    auto [stat, k] = supf_scan(y, trim);
    double p = supf_null_pvalue(stat, y.size(), trim, n_sim, seed);
    if (p >= level) return;
    rep->break_indices.push_back(offset + k);
    rep->supf_stats.push_back(stat);
    rep->p_values.push_back(p);
    supf_recurse(y.subspan(0, k), offset, trim, n_sim, seed + 1, level, depth + 1, rep);
    supf_recurse(y.subspan(k), offset + k, trim, n_sim, seed + 2, level, depth + 1, rep);
}

}  // namespace

BreakReport supf_break_test(std::span<const double> series, double trim, int n_sim,
                            std::uint64_t seed, double level) {
    if (!(trim > 0.0 && trim < 0.5)) throw std::domain_error("supf_break_test: trim in (0, 0.5)");
    const std::size_t min_len = static_cast<std::size_t>(std::ceil(2.0 / trim));
    if (series.size() < min_len)
        throw std::domain_error("supf_break_test: series shorter than 2/trim");
    BreakReport rep;
    supf_recurse(series, 0, trim, n_sim, seed, level, 0, &rep);
    // Order chronologically; recursion emits in discovery order.
    std::vector<std::size_t> order(rep.break_indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rep.break_indices[a] < rep.break_indices[b];
    });
    BreakReport sorted;
    sorted.p_value_method = rep.p_value_method;
    for (std::size_t i : order) {
        sorted.break_indices.push_back(rep.break_indices[i]);
        sorted.supf_stats.push_back(rep.supf_stats[i]);
        sorted.p_values.push_back(rep.p_values[i]);
    }
    return sorted;
}

// --------------------------------------------------------------- CPA ----

CpaResult cpa_test(std::span<const double> loss1, std::span<const double> loss2) {
    const std::size_t n = loss1.size();
    if (n != loss2.size() || n < 30)
        throw std::domain_error("cpa_test: need equal lengths of at least 30");
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = loss1[t] - loss2[t];
    double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);

    CpaResult res;
    bool all_equal = std::all_of(d.begin(), d.end(), [&](double v) { return v == d[0]; });
    if (all_equal && d[0] == 0.0) {
        res.stat = 0.0;
        res.p_two_sided = 1.0;
        res.p_greater = 0.5;
        res.p_less = 0.5;
        return res;
    }
    double lrv = hac_lrv(d);
    if (!(lrv > 1e-300)) {
        // Zero long-run variance with a non-zero mean: studentize against
        // the floor and mark the test degenerate.
        res.degenerate = true;
        lrv = 1e-300;
    }
    res.stat = mean / std::sqrt(lrv / static_cast<double>(n));
    res.p_two_sided = 2.0 * (1.0 - special::norm_cdf(std::fabs(res.stat)));
    res.p_greater = 1.0 - special::norm_cdf(res.stat);
    res.p_less = special::norm_cdf(res.stat);
    return res;
}

}  // namespace rgcop::diagnostics
