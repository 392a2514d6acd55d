#include "rgcop/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "rgcop/optim.hpp"
#include "rgcop/special.hpp"

namespace rgcop::estimate {

using copula::Family;

namespace {

constexpr double kBadValue = 1e30;
constexpr double kEtaLo = 2.0, kEtaHi = 100.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double eta_to_unc(double eta) {
    double c = std::clamp(eta, kEtaLo + 1e-6, kEtaHi - 1e-6);
    return std::log((c - kEtaLo) / (kEtaHi - c));
}
double eta_from_unc(double u) { return kEtaLo + (kEtaHi - kEtaLo) * logistic(u); }

std::vector<std::string> constant_param_names(Family f) {
    switch (f) {
        case Family::normal: return {"rho"};
        case Family::student_t: return {"rho", "eta"};
        case Family::clayton: return {"theta"};
        case Family::rotated_gumbel: return {"delta"};
        case Family::sjc: return {"tauL", "tauU"};
    }
    return {};
}

copula::Params params_from_values(Family f, const std::vector<double>& v) {
    switch (f) {
        case Family::normal: return copula::Params::normal(v[0]);
        case Family::student_t: return copula::Params::student_t(v[0], v[1]);
        case Family::clayton: return copula::Params::clayton(v[0]);
        case Family::rotated_gumbel: return copula::Params::rotated_gumbel(v[0]);
        case Family::sjc: return copula::Params::sjc(v[0], v[1]);
    }
    return {};
}

std::vector<double> constant_to_unc(Family f, const std::vector<double>& nat) {
    switch (f) {
        case Family::normal: return {copula::link(f, nat[0])};
        case Family::student_t: return {copula::link(f, nat[0]), eta_to_unc(nat[1])};
        case Family::clayton: return {std::log(std::max(nat[0], 1e-8))};
        case Family::rotated_gumbel: return {std::log(std::max(nat[0] - 1.0, 1e-8))};
        case Family::sjc: {
            auto lg = [](double t) {
                double c = std::clamp(t, 1e-8, 1.0 - 1e-8);
                return std::log(c / (1.0 - c));
            };
            return {lg(nat[0]), lg(nat[1])};
        }
    }
    return {};
}

std::vector<double> constant_from_unc(Family f, const std::vector<double>& unc) {
    switch (f) {
        case Family::normal: return {copula::link_inv(f, unc[0])};
        case Family::student_t: return {copula::link_inv(f, unc[0]), eta_from_unc(unc[1])};
        case Family::clayton: return {copula::link_inv(f, unc[0])};
        case Family::rotated_gumbel: return {copula::link_inv(f, unc[0])};
        case Family::sjc: {
            return {std::clamp(logistic(unc[0]), 1e-8, 1.0 - 1e-8),
                    std::clamp(logistic(unc[1]), 1e-8, 1.0 - 1e-8)};
        }
    }
    return {};
}

// Moment-style starting correlation from normal scores.
double rho_moment(std::span<const double> u1, std::span<const double> u2) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < u1.size(); ++t) {
        double x = special::norm_quantile(std::clamp(u1[t], 1e-10, 1.0 - 1e-10));
        double y = special::norm_quantile(std::clamp(u2[t], 1e-10, 1.0 - 1e-10));
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    double denom = std::sqrt(sxx) * std::sqrt(syy);
    if (!(denom > 0.0)) return 0.0;
    return std::clamp(sxy / denom, -0.95, 0.95);
}

// Total log-likelihood of a constant copula over prepared data.
struct ConstantObjective {
    Family family;
    std::span<const double> u1, u2;
    // Cache of prepared transforms; rebuilt when eta changes (student_t).
    mutable copula::PreparedU prepared;
    mutable double prepared_shape = -1.0;

    const copula::PreparedU& get_prepared(double shape) const {
        if (prepared_shape != shape) {
            prepared = copula::prepare(family, shape, u1, u2);
            prepared_shape = shape;
        }
        return prepared;
    }

    double negloglik(const std::vector<double>& nat) const {
        double shape = family == Family::student_t ? nat[1] : 0.0;
        if (family == Family::student_t && !(shape > kEtaLo && shape < kEtaHi)) return kBadValue;
        double ll = 0.0;
        if (family == Family::sjc) {
            double tl = nat[0], tu = nat[1];
            if (!(tl > 0.0 && tl < 1.0 && tu > 0.0 && tu < 1.0)) return kBadValue;
            copula::Params p = copula::Params::sjc(tl, tu);
            const auto& d = get_prepared(0.0);
            for (std::size_t t = 0; t < d.size(); ++t) ll += copula::logpdf(p, d.u[t], d.v[t]);
        } else {
            const auto& d = get_prepared(shape);
            double prim = nat[0];
            for (std::size_t t = 0; t < d.size(); ++t) ll += copula::logpdf_prepared(d, t, prim);
        }
        if (!std::isfinite(ll)) return kBadValue;
        return -ll;
    }

    // Per-observation contributions for the OPG part of the sandwich.
    void per_obs(const std::vector<double>& nat, std::vector<double>* out) const {
        double shape = family == Family::student_t ? nat[1] : 0.0;
        out->resize(u1.size());
        if (family == Family::sjc) {
            copula::Params p = copula::Params::sjc(nat[0], nat[1]);
            const auto& d = get_prepared(0.0);
            for (std::size_t t = 0; t < d.size(); ++t)
                (*out)[t] = copula::logpdf(p, d.u[t], d.v[t]);
        } else {
            const auto& d = get_prepared(shape);
            for (std::size_t t = 0; t < d.size(); ++t)
                (*out)[t] = copula::logpdf_prepared(d, t, nat[0]);
        }
    }
};

template <typename NegLL, typename PerObs>
void copula_sandwich(const NegLL& negll, const PerObs& per_obs, const std::vector<double>& nat,
                     std::size_t t_len, CopulaFit* fit) {
    const std::size_t k = nat.size();
    std::vector<double> steps(k);
    for (std::size_t i = 0; i < k; ++i) steps[i] = 1e-4 * std::max(0.05, std::fabs(nat[i]));

    Eigen::MatrixXd hess(k, k);
    std::vector<double> xp = nat;
    const double f0 = -negll(nat);
    for (std::size_t i = 0; i < k; ++i) {
        xp[i] = nat[i] + steps[i];
        double fp = -negll(xp);
        xp[i] = nat[i] - steps[i];
        double fm = -negll(xp);
        xp[i] = nat[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            xp[i] = nat[i] + steps[i]; xp[j] = nat[j] + steps[j];
            double fpp = -negll(xp);
            xp[j] = nat[j] - steps[j];
            double fpm = -negll(xp);
            xp[i] = nat[i] - steps[i]; xp[j] = nat[j] + steps[j];
            double fmp = -negll(xp);
            xp[j] = nat[j] - steps[j];
            double fmm = -negll(xp);
            xp[i] = nat[i]; xp[j] = nat[j];
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
        }
    }

    std::vector<std::vector<double>> sp(k), sm(k);
    for (std::size_t i = 0; i < k; ++i) {
        xp[i] = nat[i] + steps[i];
        per_obs(xp, &sp[i]);
        xp[i] = nat[i] - steps[i];
        per_obs(xp, &sm[i]);
        xp[i] = nat[i];
    }
    Eigen::MatrixXd opg = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd s(k);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t i = 0; i < k; ++i) s(i) = (sp[i][t] - sm[i][t]) / (2.0 * steps[i]);
        opg += s * s.transpose();
    }

    Eigen::MatrixXd a = -hess;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd ev = es.eigenvalues();
    double floor_ev = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_ev(k);
    for (std::size_t i = 0; i < k; ++i) inv_ev(i) = 1.0 / std::max(ev(i), floor_ev);
    Eigen::MatrixXd ainv = es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXd vc = ainv * opg * ainv;
    fit->vcov.assign(k, std::vector<double>(k));
    fit->se.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) fit->vcov[i][j] = vc(i, j);
        fit->se[i] = std::sqrt(std::max(vc(i, i), 0.0));
    }
}

void check_u_input(std::span<const double> u1, std::span<const double> u2) {
    if (u1.size() != u2.size()) throw std::domain_error("copula fit: length mismatch");
    if (u1.size() < 30) throw std::domain_error("copula fit: need at least 30 observations");
}

}  // namespace

CopulaFit fit_constant_copula(std::span<const double> u1, std::span<const double> u2,
                              Family family, const FitConfig& cfg) {
    check_u_input(u1, u2);
    ConstantObjective objective{family, u1, u2, {}, -1.0};

    double rho0 = rho_moment(u1, u2);
    std::vector<std::vector<double>> starts_nat;
    switch (family) {
        case Family::normal: starts_nat = {{rho0}, {0.5 * rho0}}; break;
        case Family::student_t: starts_nat = {{rho0, 8.0}, {rho0, 25.0}}; break;
        case Family::clayton: {
            double th0 = std::clamp(2.0 * std::max(rho0, 0.02) / (1.0 - std::max(rho0, 0.02)),
                                    0.05, 10.0);
            starts_nat = {{th0}, {0.5}};
            break;
        }
        case Family::rotated_gumbel: {
            double d0 = std::clamp(1.0 / (1.0 - std::max(rho0, 0.05)), 1.05, 5.0);
            starts_nat = {{d0}, {1.3}};
            break;
        }
        case Family::sjc: {
            double t0 = std::clamp(std::fabs(rho0), 0.03, 0.8);
            starts_nat = {{t0, t0}, {0.15, 0.1}};
            break;
        }
    }
    std::vector<std::vector<double>> starts;
    for (const auto& nat : starts_nat) starts.push_back(constant_to_unc(family, nat));
    Rng rng(cfg.seed);
    while (static_cast<int>(starts.size()) < cfg.n_starts) {
        std::vector<double> s = starts[0];
        for (auto& v : s) v += 0.4 * rng.normal();
        starts.push_back(s);
    }

    auto negll_unc = [&](const std::vector<double>& unc) {
        return objective.negloglik(constant_from_unc(family, unc));
    };
    optim::MinimizeOptions opts;
    opts.max_iter = cfg.max_iter;
    opts.grad_tol = cfg.grad_tol;
    optim::MinimizeResult best = optim::minimize_multistart(negll_unc, starts, opts);
    if (best.fx >= kBadValue)
        throw margins::EstimationError("constant copula fit failed to find a finite likelihood",
                                       best.x, best.grad_norm);

    CopulaFit fit;
    fit.family = family;
    fit.time_varying = false;
    fit.param_names = constant_param_names(family);
    fit.param_values = constant_from_unc(family, best.x);
    fit.params = params_from_values(family, fit.param_values);
    fit.loglik = -objective.negloglik(fit.param_values);
    fit.converged = best.converged || best.grad_norm <= 1e-3;
    fit.grad_norm = best.grad_norm;
    fit.clipped_inputs = objective.get_prepared(objective.prepared_shape).clipped;
    if (!fit.converged)
        throw margins::EstimationError("constant copula fit did not converge (gradient norm " +
                                           std::to_string(best.grad_norm) + ")",
                                       fit.param_values, best.grad_norm);

    switch (family) {
        case Family::clayton: fit.boundary_flag = fit.param_values[0] < 5e-3; break;
        case Family::rotated_gumbel: fit.boundary_flag = fit.param_values[0] - 1.0 < 1e-4; break;
        case Family::student_t: fit.boundary_flag = fit.param_values[1] > kEtaHi - 0.5; break;
        default: break;
    }
    if (cfg.compute_vcov) {
        auto negll_nat = [&](const std::vector<double>& nat) { return objective.negloglik(nat); };
        auto per_obs = [&](const std::vector<double>& nat, std::vector<double>* out) {
            objective.per_obs(nat, out);
        };
        copula_sandwich(negll_nat, per_obs, fit.param_values, u1.size(), &fit);
    }
    return fit;
}

namespace {

struct GasObjective {
    Family family;
    std::span<const double> u1, u2;
    mutable copula::PreparedU prepared;
    mutable double prepared_shape = -1.0;

    const copula::PreparedU& get_prepared(double shape) const {
        if (prepared_shape != shape) {
            prepared = copula::prepare(family, shape, u1, u2);
            prepared_shape = shape;
        }
        return prepared;
    }

    copula::GasParams to_gas(const std::vector<double>& nat) const {
        copula::GasParams gp;
        gp.family = family;
        gp.w = nat[0];
        gp.alpha = nat[1];
        gp.beta = nat[2];
        gp.shape = family == Family::student_t ? nat[3] : 0.0;
        return gp;
    }

    double kappa0_of(const copula::GasParams& gp) const {
        double k0 = gp.w / (1.0 - gp.beta);
        return std::clamp(k0, -copula::kKappaClamp, copula::kKappaClamp);
    }

    copula::DependencePath filter(const std::vector<double>& nat) const {
        copula::GasParams gp = to_gas(nat);
        return copula::gas_filter_prepared(gp, get_prepared(gp.shape), kappa0_of(gp));
    }

    double negloglik(const std::vector<double>& nat) const {
        if (!(std::fabs(nat[2]) < 1.0)) return kBadValue;
        if (family == Family::student_t && !(nat[3] > kEtaLo && nat[3] < kEtaHi)) return kBadValue;
        copula::DependencePath path = filter(nat);
        if (!std::isfinite(path.loglik)) return kBadValue;
        return -path.loglik;
    }

    std::vector<double> to_unc(const std::vector<double>& nat) const {
        std::vector<double> u{nat[0], nat[1], std::atanh(std::clamp(nat[2], -1.0 + 1e-9, 1.0 - 1e-9))};
        if (family == Family::student_t) u.push_back(eta_to_unc(nat[3]));
        return u;
    }

    std::vector<double> from_unc(const std::vector<double>& unc) const {
        std::vector<double> nat{unc[0], unc[1], std::tanh(unc[2])};
        if (family == Family::student_t) nat.push_back(eta_from_unc(unc[3]));
        return nat;
    }
};

}  // namespace

CopulaFit fit_gas_copula(std::span<const double> u1, std::span<const double> u2, Family family,
                         const FitConfig& cfg) {
    check_u_input(u1, u2);
    if (!copula::supports_gas(family))
        throw std::domain_error("fit_gas_copula: family " + copula::family_name(family) +
                                " admits constant parameters only");

    FitConfig const_cfg = cfg;
    const_cfg.compute_vcov = false;
    CopulaFit const_fit = fit_constant_copula(u1, u2, family, const_cfg);
    double kappa_hat = copula::link(family, const_fit.param_values[0]);
    double shape_hat = family == Family::student_t ? const_fit.param_values[1] : 0.0;

    GasObjective objective{family, u1, u2, {}, -1.0};
    std::vector<std::vector<double>> starts_nat;
    {
        std::vector<double> a{kappa_hat * (1.0 - 0.97), 0.05, 0.97};
        std::vector<double> b{kappa_hat, 0.0, 0.0};  // exact constant-copula nesting
        if (family == Family::student_t) {
            a.push_back(shape_hat);
            b.push_back(shape_hat);
        }
        starts_nat = {a, b};
    }
    std::vector<std::vector<double>> starts;
    for (const auto& nat : starts_nat) starts.push_back(objective.to_unc(nat));
    Rng rng(cfg.seed + 1);
    while (static_cast<int>(starts.size()) < cfg.n_starts + 1) {
        std::vector<double> s = starts[0];
        for (auto& v : s) v += 0.3 * rng.normal();
        starts.push_back(s);
    }

    auto negll_unc = [&](const std::vector<double>& unc) {
        return objective.negloglik(objective.from_unc(unc));
    };
    optim::MinimizeOptions opts;
    opts.max_iter = cfg.max_iter;
    opts.grad_tol = cfg.grad_tol;
    optim::MinimizeResult best = optim::minimize_multistart(negll_unc, starts, opts);
    if (best.fx >= kBadValue)
        throw margins::EstimationError("GAS copula fit failed to find a finite likelihood", best.x,
                                       best.grad_norm);

    CopulaFit fit;
    fit.family = family;
    fit.time_varying = true;
    fit.param_values = objective.from_unc(best.x);
    fit.param_names = {"w", "alpha", "beta"};
    if (family == Family::student_t) fit.param_names.push_back("eta");
    fit.gas = objective.to_gas(fit.param_values);
    fit.params = params_from_values(
        family, family == Family::student_t
                    ? std::vector<double>{const_fit.param_values[0], fit.gas.shape}
                    : const_fit.param_values);
    fit.path = objective.filter(fit.param_values);
    fit.loglik = fit.path.loglik;
    fit.converged = best.converged || best.grad_norm <= 1e-3;
    fit.grad_norm = best.grad_norm;
    fit.boundary_flag = std::fabs(fit.gas.beta) > 0.9999;
    fit.clipped_inputs = fit.path.clipped_inputs;
    if (!fit.converged)
        throw margins::EstimationError("GAS copula fit did not converge (gradient norm " +
                                           std::to_string(best.grad_norm) + ")",
                                       fit.param_values, best.grad_norm);
    if (cfg.compute_vcov) {
        auto negll_nat = [&](const std::vector<double>& nat) { return objective.negloglik(nat); };
        auto per_obs = [&](const std::vector<double>& nat, std::vector<double>* out) {
            *out = objective.filter(nat).loglik_t;
        };
        copula_sandwich(negll_nat, per_obs, fit.param_values, u1.size(), &fit);
    }
    return fit;
}

JointFit msml(const marketdata::DailyPanel& panel, const margins::MarginSpec& spec1,
              const margins::MarginSpec& spec2, const CopulaSpec& cspec, MarginsMode mode,
              const margins::OptimizerConfig& mcfg, const FitConfig& ccfg) {
    JointFit jf;
    jf.mode = mode;
    try {
        jf.margin1 = spec1.variance_model == margins::VarianceModel::realized_garch
                         ? margins::fit_realized_garch(panel.r1, panel.rv1, spec1, mcfg)
                         : margins::fit_gjr_garch(panel.r1, spec1, mcfg);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("msml stage 1 (margin 1): ") + e.what());
    }
    try {
        jf.margin2 = spec2.variance_model == margins::VarianceModel::realized_garch
                         ? margins::fit_realized_garch(panel.r2, panel.rv2, spec2, mcfg)
                         : margins::fit_gjr_garch(panel.r2, spec2, mcfg);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("msml stage 1 (margin 2): ") + e.what());
    }

    const int p1 = jf.margin1.spec.mean_lags, p2 = jf.margin2.spec.mean_lags;
    const int pmax = std::max(p1, p2);
    auto align = [&](const std::vector<double>& series, int p) {
        return std::vector<double>(series.begin() + (pmax - p), series.end());
    };
    std::vector<double> z1 = align(jf.margin1.z, p1);
    std::vector<double> z2 = align(jf.margin2.z, p2);
    if (mode == MarginsMode::parametric) {
        jf.u1 = align(jf.margin1.u, p1);
        jf.u2 = align(jf.margin2.u, p2);
    } else {
        jf.u1 = margins::pit_empirical(z1);
        jf.u2 = margins::pit_empirical(z2);
    }

    try {
        jf.cop = cspec.time_varying ? fit_gas_copula(jf.u1, jf.u2, cspec.family, ccfg)
                                    : fit_constant_copula(jf.u1, jf.u2, cspec.family, ccfg);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("msml stage 2 (copula): ") + e.what());
    }
    jf.total_loglik = jf.margin1.loglik_joint + jf.margin2.loglik_joint + jf.cop.loglik;
    return jf;
}

std::vector<std::size_t> stationary_bootstrap_indices(std::size_t t_len, double mean_block,
                                                      Rng& rng) {
    if (t_len < 2) throw std::domain_error("stationary bootstrap: need at least 2 observations");
    if (!(mean_block >= 1.0)) throw std::domain_error("stationary bootstrap: mean_block >= 1");
    const double p_new = 1.0 / mean_block;
    std::vector<std::size_t> idx(t_len);
    std::size_t cur = static_cast<std::size_t>(rng.uniform() * t_len) % t_len;
    idx[0] = cur;
    for (std::size_t t = 1; t < t_len; ++t) {
        if (rng.uniform() < p_new) {
            cur = static_cast<std::size_t>(rng.uniform() * t_len) % t_len;
        } else {
            cur = (cur + 1) % t_len;
        }
        idx[t] = cur;
    }
    return idx;
}

BootstrapResult bootstrap_generic(const RefitFn& refit, std::size_t t_len,
                                  const std::vector<std::string>& names, BootstrapScheme scheme,
                                  const BootstrapConfig& cfg) {
    if (cfg.replicates < 50)
        throw std::domain_error("bootstrap: need at least 50 replicates");
    BootstrapResult res;
    res.param_names = names;
    res.scheme = scheme;

    std::vector<std::vector<double>> slots(cfg.replicates);
    std::vector<char> ok(cfg.replicates, 0);
    auto run_one = [&](int s) {
        Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(s));
        std::vector<std::size_t> idx;
        if (scheme == BootstrapScheme::stationary_block) {
            idx = stationary_bootstrap_indices(t_len, cfg.mean_block, rng);
        } else {
            idx.resize(t_len);
            for (std::size_t t = 0; t < t_len; ++t)
                idx[t] = static_cast<std::size_t>(rng.uniform() * t_len) % t_len;
        }
        try {
            slots[s] = refit(idx);
            ok[s] = 1;
        } catch (const std::exception&) {
            ok[s] = 0;
        }
    };

    if (cfg.threads > 1) {
        std::size_t next = 0;
        std::mutex mu;
        auto worker = [&]() {
            for (;;) {
                std::size_t s;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= static_cast<std::size_t>(cfg.replicates)) return;
                    s = next++;
                }
                run_one(static_cast<int>(s));
            }
        };
        std::vector<std::future<void>> futs;
        for (int i = 0; i < cfg.threads; ++i)
            futs.push_back(std::async(std::launch::async, worker));
        for (auto& f : futs) f.get();
    } else {
        for (int s = 0; s < cfg.replicates; ++s) run_one(s);
    }

    for (int s = 0; s < cfg.replicates; ++s) {
        if (ok[s]) res.replicates.push_back(std::move(slots[s]));
        else ++res.failures;
    }
    if (res.failures > cfg.replicates / 5)
        throw std::runtime_error("bootstrap: more than 20% of replicates failed (" +
                                 std::to_string(res.failures) + "/" +
                                 std::to_string(cfg.replicates) + ")");

    const std::size_t k = names.size();
    res.ci.resize(k);
    res.se.resize(k);
    const double alpha = 1.0 - cfg.level;
    std::vector<double> column(res.replicates.size());
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t s = 0; s < res.replicates.size(); ++s) column[s] = res.replicates[s][j];
        std::sort(column.begin(), column.end());
        auto quant = [&](double q) {
            double pos = q * (static_cast<double>(column.size()) - 1.0);
            std::size_t lo = static_cast<std::size_t>(pos);
            std::size_t hi = std::min(lo + 1, column.size() - 1);
            double w = pos - static_cast<double>(lo);
            return (1.0 - w) * column[lo] + w * column[hi];
        };
        res.ci[j] = {quant(0.5 * alpha), quant(1.0 - 0.5 * alpha)};
        double mean = std::accumulate(column.begin(), column.end(), 0.0) /
                      static_cast<double>(column.size());
        double var = 0.0;
        for (double v : column) var += (v - mean) * (v - mean);
        var /= std::max<std::size_t>(column.size() - 1, 1);
        res.se[j] = std::sqrt(var);
    }
    return res;
}

BootstrapResult bootstrap_ci(const JointFit& fit, const marketdata::DailyPanel& panel,
                             const BootstrapConfig& cfg, const margins::OptimizerConfig& mcfg,
                             const FitConfig& ccfg) {
    CopulaSpec cspec{fit.cop.family, fit.cop.time_varying};
    // Replicates run with a reduced optimizer budget.
    margins::OptimizerConfig mfast = mcfg;
    mfast.n_starts = std::min(mcfg.n_starts, 2);
    mfast.compute_vcov = false;
    FitConfig cfast = ccfg;
    cfast.n_starts = std::min(ccfg.n_starts, 2);
    cfast.compute_vcov = false;

    if (fit.mode == MarginsMode::parametric) {
        const std::size_t t_len = panel.size();
        RefitFn refit = [&, cspec](std::span<const std::size_t> idx) {
            marketdata::DailyPanel pb;
            pb.dates.resize(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                pb.dates[i] = panel.dates[idx[i]];
                pb.r1.push_back(panel.r1[idx[i]]);
                pb.rv1.push_back(panel.rv1[idx[i]]);
                pb.r2.push_back(panel.r2[idx[i]]);
                pb.rv2.push_back(panel.rv2[idx[i]]);
            }
            JointFit jb = msml(pb, fit.margin1.spec, fit.margin2.spec, cspec,
                               MarginsMode::parametric, mfast, cfast);
            return jb.cop.param_values;
        };
        return bootstrap_generic(refit, t_len, fit.cop.param_names,
                                 BootstrapScheme::stationary_block, cfg);
    }

    // Semiparametric modes resample the standardized residual pairs.
    const int p1 = fit.margin1.spec.mean_lags, p2 = fit.margin2.spec.mean_lags;
    const int pmax = std::max(p1, p2);
    std::vector<double> z1(fit.margin1.z.begin() + (pmax - p1), fit.margin1.z.end());
    std::vector<double> z2(fit.margin2.z.begin() + (pmax - p2), fit.margin2.z.end());
    const std::size_t t_len = z1.size();
    RefitFn refit = [&, cspec](std::span<const std::size_t> idx) {
        std::vector<double> zb1(idx.size()), zb2(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            zb1[i] = z1[idx[i]];
            zb2[i] = z2[idx[i]];
        }
        std::vector<double> ub1 = margins::pit_empirical(zb1);
        std::vector<double> ub2 = margins::pit_empirical(zb2);
        CopulaFit cb = cspec.time_varying ? fit_gas_copula(ub1, ub2, cspec.family, cfast)
                                          : fit_constant_copula(ub1, ub2, cspec.family, cfast);
        return cb.param_values;
    };
    BootstrapScheme scheme = fit.cop.time_varying ? BootstrapScheme::stationary_block
                                                  : BootstrapScheme::iid;
    BootstrapResult res = bootstrap_generic(refit, t_len, fit.cop.param_names, scheme, cfg);
    res.semiparametric_tv_caveat = fit.cop.time_varying;
    return res;
}

JointSimulation simulate_joint_dgp(const margins::MarginFit& gen1, const margins::MarginFit& gen2,
                                   const CopulaSpec& cspec, const copula::Params& cparams,
                                   const copula::GasParams& gparams, std::size_t n,
                                   std::size_t burn, std::uint64_t seed) {
    JointSimulation sim;
    const std::size_t total = n + burn;
    Rng crng = Rng::substream(seed, 0);
    std::vector<double> u1(total), u2(total), delta(total);
    if (cspec.time_varying) {
        double k0 = std::fabs(gparams.beta) < 1.0
                        ? gparams.w / (1.0 - gparams.beta)
                        : 0.0;
        copula::GasSimulation gs = copula::simulate_gas(gparams, total, k0, crng);
        u1 = std::move(gs.u1);
        u2 = std::move(gs.u2);
        delta = std::move(gs.delta);
    } else {
        for (std::size_t t = 0; t < total; ++t) {
            auto [a, b] = copula::sample_one(cparams, crng);
            u1[t] = a;
            u2[t] = b;
            delta[t] = cparams.primary();
        }
    }
    udist::SkewTKernel k1(gen1.innovation_params());
    udist::SkewTKernel k2(gen2.innovation_params());
    std::vector<double> z1(total), z2(total);
    for (std::size_t t = 0; t < total; ++t) {
        z1[t] = k1.quantile(std::clamp(u1[t], 1e-12, 1.0 - 1e-12));
        z2[t] = k2.quantile(std::clamp(u2[t], 1e-12, 1.0 - 1e-12));
    }
    Rng m1rng = Rng::substream(seed, 1);
    Rng m2rng = Rng::substream(seed, 2);
    margins::MarginSimulation s1 = margins::simulate_margin(gen1, z1, m1rng);
    margins::MarginSimulation s2 = margins::simulate_margin(gen2, z2, m2rng);

    marketdata::DailyPanel& p = sim.panel;
    std::int64_t day = marketdata::days_from_civil(marketdata::Date{2005, 1, 3});
    for (std::size_t t = burn; t < total; ++t) {
        marketdata::Date d = marketdata::civil_from_days(day);
        while (marketdata::day_of_week(d) == 0 || marketdata::day_of_week(d) == 6) {
            ++day;
            d = marketdata::civil_from_days(day);
        }
        p.dates.push_back(d);
        ++day;
        p.r1.push_back(s1.y[t]);
        p.r2.push_back(s2.y[t]);
        p.rv1.push_back(gen1.spec.variance_model == margins::VarianceModel::realized_garch
                            ? s1.rv[t] : s1.h[t]);
        p.rv2.push_back(gen2.spec.variance_model == margins::VarianceModel::realized_garch
                            ? s2.rv[t] : s2.h[t]);
        p.rcorr.push_back(std::nan(""));
        p.bars.push_back(0);
        sim.u1.push_back(u1[t]);
        sim.u2.push_back(u2[t]);
        sim.delta.push_back(delta[t]);
    }
    return sim;
}

std::string CopulaFit::to_json() const {
    nlohmann::json j;
    j["family"] = copula::family_name(family);
    j["time_varying"] = time_varying;
    nlohmann::json params_obj = nlohmann::json::object();
    for (std::size_t i = 0; i < param_names.size(); ++i) params_obj[param_names[i]] = param_values[i];
    j["params"] = params_obj;
    j["param_order"] = param_names;
    j["loglik"] = loglik;
    j["converged"] = converged;
    j["boundary_flag"] = boundary_flag;
    j["grad_norm"] = grad_norm;
    j["clipped_inputs"] = clipped_inputs;
    j["vcov"] = vcov;
    j["se"] = se;
    if (time_varying) {
        j["path"] = {{"kappa", path.kappa},       {"delta", path.delta},
                     {"score", path.score},       {"lambda_lower", path.lambda_lower},
                     {"lambda_upper", path.lambda_upper}, {"kappa_next", path.kappa_next},
                     {"clamped_steps", path.clamped_steps}};
    }
    return j.dump(2);
}

CopulaFit CopulaFit::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CopulaFit f;
    f.family = copula::family_from_name(j["family"]);
    f.time_varying = j["time_varying"];
    f.param_names = j["param_order"].get<std::vector<std::string>>();
    for (const auto& name : f.param_names) f.param_values.push_back(j["params"][name].get<double>());
    f.loglik = j["loglik"];
    f.converged = j["converged"];
    f.boundary_flag = j["boundary_flag"];
    f.grad_norm = j["grad_norm"];
    f.clipped_inputs = j["clipped_inputs"];
    f.vcov = j["vcov"].get<std::vector<std::vector<double>>>();
    f.se = j["se"].get<std::vector<double>>();
    if (f.time_varying) {
        f.gas.family = f.family;
        f.gas.w = f.param_values[0];
        f.gas.alpha = f.param_values[1];
        f.gas.beta = f.param_values[2];
        f.gas.shape = f.family == Family::student_t ? f.param_values[3] : 0.0;
        f.path.kappa = j["path"]["kappa"].get<std::vector<double>>();
        f.path.delta = j["path"]["delta"].get<std::vector<double>>();
        f.path.score = j["path"]["score"].get<std::vector<double>>();
        f.path.lambda_lower = j["path"]["lambda_lower"].get<std::vector<double>>();
        f.path.lambda_upper = j["path"]["lambda_upper"].get<std::vector<double>>();
        f.path.kappa_next = j["path"]["kappa_next"];
        f.path.clamped_steps = j["path"]["clamped_steps"];
        double last_delta = f.path.delta.empty() ? copula::link_inv(f.family, 0.0)
                                                 : f.path.delta.back();
        f.params = params_from_values(
            f.family, f.family == Family::student_t
                          ? std::vector<double>{last_delta, f.gas.shape}
                          : std::vector<double>{last_delta});
    } else {
        f.params = params_from_values(f.family, f.param_values);
    }
    return f;
}

std::string JointFit::to_json() const {
    nlohmann::json j;
    j["mode"] = mode == MarginsMode::parametric ? "parametric" : "empirical";
    j["margin1"] = nlohmann::json::parse(margin1.to_json());
    j["margin2"] = nlohmann::json::parse(margin2.to_json());
    j["copula"] = nlohmann::json::parse(cop.to_json());
    j["total_loglik"] = total_loglik;
    return j.dump(2);
}

std::string format_fit_table(const JointFit& fit, const BootstrapResult* boot) {
    std::ostringstream out;
    char buf[160];
    auto print_margin = [&](const margins::MarginFit& m, const char* title) {
        out << title << " ("
            << (m.spec.variance_model == margins::VarianceModel::realized_garch ? "realized GARCH"
                                                                                : "GJR GARCH")
            << ", AR(" << m.spec.mean_lags << "))\n";
        for (std::size_t i = 0; i < m.param_names.size(); ++i) {
            double se = i < m.se.size() ? m.se[i] : 0.0;
            std::snprintf(buf, sizeof buf, "  %-8s %10.4f  (%.4f)\n", m.param_names[i].c_str(),
                          m.params[i], se);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "  loglik   %10.2f   partial %10.2f\n", m.loglik_joint,
                      m.loglik_partial);
        out << buf;
    };
    print_margin(fit.margin1, "margin 1");
    print_margin(fit.margin2, "margin 2");
    out << "copula " << copula::family_name(fit.cop.family)
        << (fit.cop.time_varying ? " (GAS)" : " (constant)") << "\n";
    for (std::size_t i = 0; i < fit.cop.param_names.size(); ++i) {
        double se = boot && i < boot->se.size() ? boot->se[i]
                                                : (i < fit.cop.se.size() ? fit.cop.se[i] : 0.0);
        std::snprintf(buf, sizeof buf, "  %-8s %10.4f  (%.4f)\n", fit.cop.param_names[i].c_str(),
                      fit.cop.param_values[i], se);
        out << buf;
        if (boot && i < boot->ci.size()) {
            std::snprintf(buf, sizeof buf, "           CI [%0.4f, %0.4f]\n", boot->ci[i].first,
                          boot->ci[i].second);
            out << buf;
        }
    }
    std::snprintf(buf, sizeof buf, "  loglik   %10.2f\n  total    %10.2f\n", fit.cop.loglik,
                  fit.total_loglik);
    out << buf;
    return out.str();
}

}  // namespace rgcop::estimate
