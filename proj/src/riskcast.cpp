#include "rgcop/riskcast.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rgcop/special.hpp"

namespace rgcop::riskcast {

namespace {

double interp_quantile(std::vector<double>& sorted_inplace, double alpha) {
    std::sort(sorted_inplace.begin(), sorted_inplace.end());
    const std::size_t n = sorted_inplace.size();
    double pos = alpha * (static_cast<double>(n) - 1.0);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, n - 1);
    double w = pos - static_cast<double>(lo);
    return (1.0 - w) * sorted_inplace[lo] + w * sorted_inplace[hi];
}

double quantile_of(std::span<const double> x, double alpha) {
    std::vector<double> tmp(x.begin(), x.end());
    return interp_quantile(tmp, alpha);
}

// Inverse of the rescaled empirical CDF with parametric tails.
struct EmpiricalInverse {
    std::vector<double> sorted_z;
    udist::SkewTKernel tail;

    EmpiricalInverse(std::span<const double> z, const udist::SkewTParams& guard)
        : sorted_z(z.begin(), z.end()), tail(guard) {
        std::sort(sorted_z.begin(), sorted_z.end());
    }

    double operator()(double u) const {
        const double t_len = static_cast<double>(sorted_z.size());
        double pos = u * (t_len + 1.0);
        if (pos < 1.0 || pos > t_len) return tail.quantile(std::clamp(u, 1e-12, 1.0 - 1e-12));
        std::size_t k = static_cast<std::size_t>(pos);  // 1-based order statistic
        if (k >= sorted_z.size()) return sorted_z.back();
        double frac = pos - static_cast<double>(k);
        return (1.0 - frac) * sorted_z[k - 1] + frac * sorted_z[k];
    }
};

}  // namespace

struct RiskSimulator::Impl {
    estimate::MarginsMode mode;
    copula::Params cop_template;
    std::unique_ptr<udist::SkewTQuantileTable> q1, q2;  // parametric margins
    std::unique_ptr<EmpiricalInverse> e1, e2;           // empirical margins

    double inv1(double u) const { return e1 ? (*e1)(u) : (*q1)(u); }
    double inv2(double u) const { return e2 ? (*e2)(u) : (*q2)(u); }
};

RiskSimulator::RiskSimulator(const estimate::JointFit& fit) : impl_(new Impl) {
    if (!fit.margin1.converged || !fit.margin2.converged || !fit.cop.converged)
        throw std::domain_error("RiskSimulator: refusing a non-converged fit");
    impl_->mode = fit.mode;
    impl_->cop_template = fit.cop.params;
    if (fit.mode == estimate::MarginsMode::parametric) {
        impl_->q1 = std::make_unique<udist::SkewTQuantileTable>(fit.margin1.innovation_params());
        impl_->q2 = std::make_unique<udist::SkewTQuantileTable>(fit.margin2.innovation_params());
    } else {
        impl_->e1 = std::make_unique<EmpiricalInverse>(fit.margin1.z, fit.margin1.innovation_params());
        impl_->e2 = std::make_unique<EmpiricalInverse>(fit.margin2.z, fit.margin2.innovation_params());
    }
}

RiskSimulator::~RiskSimulator() = default;
RiskSimulator::RiskSimulator(RiskSimulator&&) noexcept = default;

ForecastDraws RiskSimulator::simulate(const ForecastState& state, std::size_t n_paths, Rng& rng,
                                      double w1, double w2) const {
    if (n_paths < 1000) throw std::domain_error("simulate: n_paths must be at least 1000");
    ForecastDraws d;
    d.w1 = w1;
    d.w2 = w2;
    d.x1.resize(n_paths);
    d.x2.resize(n_paths);
    d.y.resize(n_paths);
    copula::Params p = impl_->cop_template.with_primary(state.delta);
    const double s1 = std::sqrt(state.var1), s2 = std::sqrt(state.var2);
    for (std::size_t i = 0; i < n_paths; ++i) {
        auto [u, v] = copula::sample_one(p, rng);
        u = std::clamp(u, 1e-12, 1.0 - 1e-12);
        v = std::clamp(v, 1e-12, 1.0 - 1e-12);
        double x1 = state.mean1 + s1 * impl_->inv1(u);
        double x2 = state.mean2 + s2 * impl_->inv2(v);
        d.x1[i] = x1;
        d.x2[i] = x2;
        d.y[i] = w1 * x1 + w2 * x2;
    }
    return d;
}

ForecastDraws simulate_joint(const estimate::JointFit& fit, const ForecastState& state,
                             std::size_t n_paths, Rng& rng, double w1, double w2) {
    return RiskSimulator(fit).simulate(state, n_paths, rng, w1, w2);
}

double var_forecast(const ForecastDraws& draws, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("var_forecast: alpha in (0,1)");
    return quantile_of(draws.y, alpha);
}

double expected_shortfall(std::span<const double> draws, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("expected_shortfall: alpha in (0,1)");
    double q = quantile_of(draws, alpha);
    double acc = 0.0;
    std::size_t count = 0;
    for (double v : draws) {
        if (v <= q) {
            acc += v;
            ++count;
        }
    }
    if (count < 20)
        throw std::domain_error(
            "expected_shortfall: fewer than 20 tail draws; increase n_paths");
    return acc / static_cast<double>(count);
}

double expected_shortfall(const ForecastDraws& draws, double alpha) {
    return expected_shortfall(std::span<const double>(draws.y), alpha);
}

CdbPoint cdb_from_draws(const ForecastDraws& draws, double alpha) {
    CdbPoint p;
    p.alpha = alpha;
    p.es = -expected_shortfall(draws, alpha);
    double es1 = -expected_shortfall(std::span<const double>(draws.x1), alpha);
    double es2 = -expected_shortfall(std::span<const double>(draws.x2), alpha);
    p.es_upper = draws.w1 * es1 + draws.w2 * es2;
    p.es_lower = -var_forecast(draws, alpha);
    double denom = p.es_upper - p.es_lower;
    if (!(std::fabs(denom) > 1e-12))
        throw std::domain_error("cdb: degenerate bounds (es_upper equals es_lower)");
    p.cdb = (p.es_upper - p.es) / denom;
    return p;
}

CdbPoint cdb(const estimate::JointFit& fit, const ForecastState& state, double w1, double w2,
             double alpha, std::size_t n_paths, Rng& rng) {
    if (!(w1 >= 0.0 && w2 >= 0.0 && std::fabs(w1 + w2 - 1.0) < 1e-12))
        throw std::domain_error("cdb: weights must be non-negative and sum to one");
    ForecastDraws draws = simulate_joint(fit, state, n_paths, rng, w1, w2);
    return cdb_from_draws(draws, alpha);
}

CdbBand cdb_constant_band(double rho, std::size_t t_len, int n_sim, double alpha, double level,
                          Rng& rng) {
    if (n_sim < 1000) throw std::domain_error("cdb_constant_band: n_sim must be at least 1000");
    std::vector<double> vals;
    vals.reserve(n_sim);
    const double s = std::sqrt(1.0 - rho * rho);
    ForecastDraws d;
    d.w1 = d.w2 = 0.5;
    d.x1.resize(t_len);
    d.x2.resize(t_len);
    d.y.resize(t_len);
    for (int sim = 0; sim < n_sim; ++sim) {
        for (std::size_t t = 0; t < t_len; ++t) {
            double z1 = rng.normal(), z2 = rng.normal();
            double x1 = z1, x2 = rho * z1 + s * z2;
            d.x1[t] = x1;
            d.x2[t] = x2;
            d.y[t] = 0.5 * (x1 + x2);
        }
        vals.push_back(cdb_from_draws(d, alpha).cdb);
    }
    CdbBand band;
    band.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    std::vector<double> sorted = vals;
    double a = 1.0 - level;
    band.lo = interp_quantile(sorted, 0.5 * a);
    std::vector<double> sorted2 = vals;
    band.hi = interp_quantile(sorted2, 1.0 - 0.5 * a);
    return band;
}

FilteredPaths filter_joint_paths(const estimate::JointFit& fit,
                                 const marketdata::DailyPanel& panel) {
    FilteredPaths out;
    out.f1 = margins::filter_path(fit.margin1, panel.r1, panel.rv1);
    out.f2 = margins::filter_path(fit.margin2, panel.r2, panel.rv2);

    const int p1 = fit.margin1.spec.mean_lags, p2 = fit.margin2.spec.mean_lags;
    out.offset = std::max(p1, p2);

    // PITs over the whole panel with fixed in-sample parameters. Empirical
    // margins keep the in-sample residual distribution.
    auto pit_full = [&](const margins::MarginFit& mfit, const std::vector<double>& z_full) {
        if (fit.mode == estimate::MarginsMode::parametric)
            return margins::pit_parametric(z_full, mfit.innovation_params());
        const std::size_t in_len = mfit.z.size();
        std::vector<double> sorted(mfit.z.begin(), mfit.z.end());
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> u(z_full.size());
        for (std::size_t t = 0; t < z_full.size(); ++t) {
            auto it = std::upper_bound(sorted.begin(), sorted.end(), z_full[t]);
            double r = static_cast<double>(it - sorted.begin()) / (static_cast<double>(in_len) + 1.0);
            u[t] = std::clamp(r, 1e-6, 1.0 - 1e-6);
        }
        return u;
    };
    out.u1 = pit_full(fit.margin1, out.f1.z);
    out.u2 = pit_full(fit.margin2, out.f2.z);
    auto align = [&](std::vector<double>& u, int p) {
        u.erase(u.begin(), u.begin() + (out.offset - p));
    };
    align(out.u1, p1);
    align(out.u2, p2);

    out.delta.resize(out.u1.size());
    if (fit.cop.time_varying) {
        double k0 = std::fabs(fit.cop.gas.beta) < 1.0
                        ? std::clamp(fit.cop.gas.w / (1.0 - fit.cop.gas.beta),
                                     -copula::kKappaClamp, copula::kKappaClamp)
                        : 0.0;
        copula::DependencePath path = copula::gas_filter(fit.cop.gas, out.u1, out.u2, k0);
        out.delta = path.delta;
    } else {
        std::fill(out.delta.begin(), out.delta.end(), fit.cop.params.primary());
    }
    return out;
}

std::vector<double> oos_copula_logdensity(const estimate::JointFit& fit,
                                          const marketdata::DailyPanel& panel,
                                          std::size_t oos_start) {
    FilteredPaths paths = filter_joint_paths(fit, panel);
    if (oos_start <= static_cast<std::size_t>(paths.offset) || oos_start >= panel.size())
        throw std::domain_error("oos_copula_logdensity: oos_start outside the usable range");
    std::vector<double> ll;
    for (std::size_t t = oos_start; t < panel.size(); ++t) {
        std::size_t k = t - paths.offset;
        copula::Params p = fit.cop.params.with_primary(paths.delta[k]);
        double u = std::clamp(paths.u1[k], 1e-10, 1.0 - 1e-10);
        double v = std::clamp(paths.u2[k], 1e-10, 1.0 - 1e-10);
        ll.push_back(copula::logpdf(p, u, v));
    }
    return ll;
}

BacktestSeries var_backtest_series(const estimate::JointFit& fit,
                                   const marketdata::DailyPanel& panel, std::size_t oos_start,
                                   std::span<const double> alphas, std::size_t n_paths,
                                   std::uint64_t seed, double w1, double w2) {
    const std::size_t t_len = panel.size();
    if (!(oos_start > 0 && oos_start < t_len))
        throw std::domain_error("var_backtest_series: oos_start outside the panel");

    FilteredPaths paths = filter_joint_paths(fit, panel);
    if (oos_start <= static_cast<std::size_t>(paths.offset))
        throw std::domain_error("var_backtest_series: oos_start inside the pre-sample");

    RiskSimulator sim(fit);
    BacktestSeries out;
    out.alphas.assign(alphas.begin(), alphas.end());
    out.var.assign(alphas.size(), {});
    out.es.assign(alphas.size(), {});
    out.cdb.assign(alphas.size(), {});
    for (std::size_t t = oos_start; t < t_len; ++t) {
        ForecastState st;
        st.mean1 = paths.f1.mean[t];
        st.var1 = paths.f1.h[t];
        st.mean2 = paths.f2.mean[t];
        st.var2 = paths.f2.h[t];
        st.delta = paths.delta[t - paths.offset];
        Rng rng = Rng::substream(seed, t);
        ForecastDraws draws = sim.simulate(st, n_paths, rng, w1, w2);
        out.days.push_back(t);
        out.realized.push_back(w1 * panel.r1[t] + w2 * panel.r2[t]);
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            out.var[a].push_back(var_forecast(draws, alphas[a]));
            double es_loss, cdb_val;
            try {
                CdbPoint p = cdb_from_draws(draws, alphas[a]);
                es_loss = p.es;
                cdb_val = p.cdb;
            } catch (const std::domain_error&) {
                es_loss = std::nan("");
                cdb_val = std::nan("");
            }
            out.es[a].push_back(es_loss);
            out.cdb[a].push_back(cdb_val);
        }
    }
    return out;
}

}  // namespace rgcop::riskcast
