#include "rgcop/margins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "rgcop/optim.hpp"
#include "rgcop/rng.hpp"

namespace rgcop::margins {

namespace {

constexpr double kNuLo = 2.0, kNuHi = 302.0;
constexpr double kBadValue = 1e30;
constexpr double kLog2Pi = 1.8378770664093453;

// Unconstrained <-> natural transforms per parameter.
enum class Xf { id, log, logit01, nu_range, tanh1 };

double to_nat(Xf t, double u) {
    switch (t) {
        case Xf::id: return u;
        case Xf::log: return std::exp(u);
        case Xf::logit01: return 1.0 / (1.0 + std::exp(-u));
        case Xf::nu_range: return kNuLo + (kNuHi - kNuLo) / (1.0 + std::exp(-u));
        case Xf::tanh1: return std::tanh(u);
    }
    return u;
}

double to_unc(Xf t, double x) {
    switch (t) {
        case Xf::id: return x;
        case Xf::log: return std::log(std::max(x, 1e-12));
        case Xf::logit01: {
            double c = std::clamp(x, 1e-9, 1.0 - 1e-9);
            return std::log(c / (1.0 - c));
        }
        case Xf::nu_range: {
            double c = std::clamp(x, kNuLo + 1e-6, kNuHi - 1e-6);
            return std::log((c - kNuLo) / (kNuHi - c));
        }
        case Xf::tanh1: {
            double c = std::clamp(x, -1.0 + 1e-9, 1.0 - 1e-9);
            return std::atanh(c);
        }
    }
    return x;
}

struct ParamLayout {
    std::vector<std::string> names;
    std::vector<Xf> xf;
    std::size_t size() const { return names.size(); }
};

ParamLayout rg_layout(int p, Innovation innov) {
    ParamLayout l;
    l.names.push_back("mu");
    l.xf.push_back(Xf::id);
    for (int i = 1; i <= p; ++i) {
        l.names.push_back("ar" + std::to_string(i));
        l.xf.push_back(Xf::id);
    }
    const char* rest[] = {"omega", "beta", "gamma", "xi", "phi", "tau1", "tau2", "sigma_u", "nu"};
    Xf xfs[] = {Xf::id, Xf::logit01, Xf::id, Xf::id, Xf::id, Xf::id, Xf::id, Xf::log, Xf::nu_range};
    for (int i = 0; i < 9; ++i) {
        l.names.push_back(rest[i]);
        l.xf.push_back(xfs[i]);
    }
    if (innov == Innovation::skew_t) {
        l.names.push_back("lambda");
        l.xf.push_back(Xf::tanh1);
    }
    return l;
}

ParamLayout gjr_layout(int p, Innovation innov) {
    ParamLayout l;
    l.names.push_back("mu");
    l.xf.push_back(Xf::id);
    for (int i = 1; i <= p; ++i) {
        l.names.push_back("ar" + std::to_string(i));
        l.xf.push_back(Xf::id);
    }
    const char* rest[] = {"kappa", "phi", "iota", "psi", "nu"};
    Xf xfs[] = {Xf::log, Xf::log, Xf::log, Xf::logit01, Xf::nu_range};
    for (int i = 0; i < 5; ++i) {
        l.names.push_back(rest[i]);
        l.xf.push_back(xfs[i]);
    }
    if (innov == Innovation::skew_t) {
        l.names.push_back("lambda");
        l.xf.push_back(Xf::tanh1);
    }
    return l;
}

double sample_var(std::span<const double> y) {
    double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double acc = 0.0;
    for (double v : y) acc += (v - m) * (v - m);
    return acc / static_cast<double>(y.size());
}

struct FilterEval {
    double loglik_joint = -kBadValue;
    double loglik_partial = -kBadValue;
    double penalty = 0.0;
    bool valid = false;
    bool stationarity_violated = false;
};

// Log-linear realized GARCH(1,1) filter. Outputs are optional; per_obs
// collects the per-day joint contribution (t >= p).
FilterEval rg_filter(const std::vector<double>& nat, int p, Innovation innov,
                     std::span<const double> y, std::span<const double> rv,
                     std::vector<double>* h_out, std::vector<double>* z_out,
                     std::vector<double>* mean_out, std::vector<double>* per_obs,
                     double* h_next) {
    FilterEval ev;
    const int t_len = static_cast<int>(y.size());
    const double mu = nat[0];
    const double* ar = nat.data() + 1;
    const double omega = nat[p + 1], beta = nat[p + 2], gamma = nat[p + 3];
    const double xi = nat[p + 4], phi = nat[p + 5], tau1 = nat[p + 6], tau2 = nat[p + 7];
    const double sigma_u = nat[p + 8], nu = nat[p + 9];
    const double lambda = innov == Innovation::skew_t ? nat[p + 10] : 0.0;
    if (h_out) h_out->assign(t_len, 0.0);
    if (z_out) z_out->assign(t_len, 0.0);
    if (mean_out) mean_out->assign(t_len, mu);
    if (per_obs) per_obs->assign(t_len, 0.0);
    if (!(sigma_u > 0.0) || !(nu > 2.0) || std::fabs(lambda) >= 1.0) return ev;

    udist::SkewTKernel kern(udist::SkewTParams{nu, lambda});
    const double h1 = sample_var(y);
    if (!(h1 > 0.0)) return ev;

    double persist = beta + gamma * phi;
    if (persist >= 1.0 - 1e-6) {
        ev.stationarity_violated = true;
        double viol = persist - (1.0 - 1e-6);
        ev.penalty = 100.0 * static_cast<double>(t_len) * viol * viol;
    }

    double ll_ret = 0.0, ll_meas = 0.0;
    double logh = std::log(h1);
    const double log_sigma_term = 0.5 * (kLog2Pi + 2.0 * std::log(sigma_u));
    const double inv_su2 = 1.0 / (sigma_u * sigma_u);
    for (int t = 0; t < t_len; ++t) {
        if (t > 0) logh = omega + beta * logh + gamma * std::log(rv[t - 1]);
        if (!(logh > -60.0 && logh < 60.0)) return ev;
        if (h_out) (*h_out)[t] = std::exp(logh);
        if (t < p) continue;
        double mean = mu;
        for (int i = 0; i < p; ++i) mean += ar[i] * y[t - 1 - i];
        double sd = std::exp(0.5 * logh);
        double z = (y[t] - mean) / sd;
        double lr = kern.logpdf(z) - 0.5 * logh;
        double r = std::log(rv[t]) - xi - phi * logh - tau1 * z - tau2 * (z * z - 1.0);
        double lm = -log_sigma_term - 0.5 * r * r * inv_su2;
        ll_ret += lr;
        ll_meas += lm;
        if (z_out) (*z_out)[t] = z;
        if (mean_out) (*mean_out)[t] = mean;
        if (per_obs) (*per_obs)[t] = lr + lm;
    }
    if (h_next) {
        double last_logh = omega + beta * logh + gamma * std::log(rv[t_len - 1]);
        *h_next = std::exp(std::clamp(last_logh, -60.0, 60.0));
    }
    if (!std::isfinite(ll_ret) || !std::isfinite(ll_meas)) return ev;
    ev.loglik_partial = ll_ret;
    ev.loglik_joint = ll_ret + ll_meas;
    ev.valid = true;
    return ev;
}

FilterEval gjr_filter(const std::vector<double>& nat, int p, Innovation innov,
                      std::span<const double> y, std::vector<double>* h_out,
                      std::vector<double>* z_out, std::vector<double>* mean_out,
                      std::vector<double>* per_obs, double* h_next) {
    FilterEval ev;
    const int t_len = static_cast<int>(y.size());
    const double mu = nat[0];
    const double* ar = nat.data() + 1;
    const double kap = nat[p + 1], phi = nat[p + 2], iota = nat[p + 3], psi = nat[p + 4];
    const double nu = nat[p + 5];
    const double lambda = innov == Innovation::skew_t ? nat[p + 6] : 0.0;
    if (h_out) h_out->assign(t_len, 0.0);
    if (z_out) z_out->assign(t_len, 0.0);
    if (mean_out) mean_out->assign(t_len, mu);
    if (per_obs) per_obs->assign(t_len, 0.0);
    if (!(kap > 0.0) || !(phi >= 0.0) || !(iota >= 0.0) || !(psi > 0.0 && psi < 1.0)) return ev;
    if (!(nu > 2.0) || std::fabs(lambda) >= 1.0) return ev;

    udist::SkewTKernel kern(udist::SkewTParams{nu, lambda});
    const double h1 = sample_var(y);
    if (!(h1 > 0.0)) return ev;

    double persist = phi + 0.5 * iota + psi;
    if (persist >= 1.0 - 1e-6) {
        ev.stationarity_violated = true;
        double viol = persist - (1.0 - 1e-6);
        ev.penalty = 100.0 * static_cast<double>(t_len) * viol * viol;
    }
    if (h_out) h_out->assign(t_len, h1);

    double ll = 0.0;
    double h = h1;
    double eps_prev = 0.0;
    for (int t = p; t < t_len; ++t) {
        if (t > p) {
            double shock = (phi + (eps_prev < 0.0 ? iota : 0.0)) * eps_prev * eps_prev;
            h = kap + shock + psi * h;
        }
        if (!(h > 1e-30 && h < 1e30)) return ev;
        if (h_out) (*h_out)[t] = h;
        double mean = mu;
        for (int i = 0; i < p; ++i) mean += ar[i] * y[t - 1 - i];
        double eps = y[t] - mean;
        double z = eps / std::sqrt(h);
        double lr = kern.logpdf(z) - 0.5 * std::log(h);
        ll += lr;
        eps_prev = eps;
        if (z_out) (*z_out)[t] = z;
        if (mean_out) (*mean_out)[t] = mean;
        if (per_obs) (*per_obs)[t] = lr;
    }
    if (h_next) {
        double shock = (phi + (eps_prev < 0.0 ? iota : 0.0)) * eps_prev * eps_prev;
        *h_next = kap + shock + psi * h;
    }
    if (!std::isfinite(ll)) return ev;
    ev.loglik_partial = ll;
    ev.loglik_joint = ll;
    ev.valid = true;
    return ev;
}

struct FitProblem {
    VarianceModel model;
    Innovation innov;
    int p;
    std::span<const double> y;
    std::span<const double> rv;
    ParamLayout layout;

    FilterEval run(const std::vector<double>& nat, std::vector<double>* h = nullptr,
                   std::vector<double>* z = nullptr, std::vector<double>* mean = nullptr,
                   std::vector<double>* per_obs = nullptr, double* h_next = nullptr) const {
        if (model == VarianceModel::realized_garch)
            return rg_filter(nat, p, innov, y, rv, h, z, mean, per_obs, h_next);
        return gjr_filter(nat, p, innov, y, h, z, mean, per_obs, h_next);
    }

    std::vector<double> to_natural(const std::vector<double>& unc) const {
        std::vector<double> nat(unc.size());
        for (std::size_t i = 0; i < unc.size(); ++i) nat[i] = to_nat(layout.xf[i], unc[i]);
        return nat;
    }

    std::vector<double> to_unconstrained(const std::vector<double>& nat) const {
        std::vector<double> unc(nat.size());
        for (std::size_t i = 0; i < nat.size(); ++i) unc[i] = to_unc(layout.xf[i], nat[i]);
        return unc;
    }

    double negloglik_unc(const std::vector<double>& unc) const {
        FilterEval ev = run(to_natural(unc));
        if (!ev.valid) return kBadValue;
        return -ev.loglik_joint + ev.penalty;
    }
};

std::vector<double> ols_ar_start(std::span<const double> y, int p) {
    // OLS of y_t on its p lags plus a constant.
    const int t_len = static_cast<int>(y.size());
    const int rows = t_len - p;
    Eigen::MatrixXd x(rows, p + 1);
    Eigen::VectorXd b(rows);
    for (int t = p; t < t_len; ++t) {
        x(t - p, 0) = 1.0;
        for (int i = 0; i < p; ++i) x(t - p, i + 1) = y[t - 1 - i];
        b(t - p) = y[t];
    }
    Eigen::VectorXd coef = x.colPivHouseholderQr().solve(b);
    std::vector<double> out(p + 1);
    for (int i = 0; i <= p; ++i) out[i] = coef(i);
    return out;
}

std::vector<double> rg_start(const FitProblem& prob) {
    const int p = prob.p;
    std::vector<double> nat(prob.layout.size());
    if (p > 0) {
        std::vector<double> c = ols_ar_start(prob.y, p);
        nat[0] = c[0];
        for (int i = 0; i < p; ++i) nat[1 + i] = c[1 + i];
    } else {
        nat[0] = std::accumulate(prob.y.begin(), prob.y.end(), 0.0) / prob.y.size();
    }
    double mean_lrv = 0.0;
    for (double v : prob.rv) mean_lrv += std::log(v);
    mean_lrv /= static_cast<double>(prob.rv.size());
    double var_lrv = 0.0;
    for (double v : prob.rv) var_lrv += (std::log(v) - mean_lrv) * (std::log(v) - mean_lrv);
    var_lrv /= static_cast<double>(prob.rv.size());
    double beta0 = 0.7, gamma0 = 0.25, phi0 = 1.0;
    nat[p + 1] = mean_lrv * (1.0 - beta0 - gamma0);  // omega
    nat[p + 2] = beta0;
    nat[p + 3] = gamma0;
    nat[p + 4] = 0.0;  // xi
    nat[p + 5] = phi0;
    nat[p + 6] = -0.05;  // tau1
    nat[p + 7] = 0.10;   // tau2
    nat[p + 8] = std::max(0.05, 0.6 * std::sqrt(var_lrv));  // sigma_u
    nat[p + 9] = 8.0;    // nu
    if (prob.innov == Innovation::skew_t) nat[p + 10] = -0.05;
    return nat;
}

std::vector<double> gjr_start(const FitProblem& prob) {
    const int p = prob.p;
    std::vector<double> nat(prob.layout.size());
    if (p > 0) {
        std::vector<double> c = ols_ar_start(prob.y, p);
        nat[0] = c[0];
        for (int i = 0; i < p; ++i) nat[1 + i] = c[1 + i];
    } else {
        nat[0] = std::accumulate(prob.y.begin(), prob.y.end(), 0.0) / prob.y.size();
    }
    double vy = sample_var(prob.y);
    double phi0 = 0.05, iota0 = 0.08, psi0 = 0.88;
    nat[p + 1] = vy * (1.0 - phi0 - 0.5 * iota0 - psi0);
    nat[p + 2] = phi0;
    nat[p + 3] = iota0;
    nat[p + 4] = psi0;
    nat[p + 5] = 8.0;
    if (prob.innov == Innovation::skew_t) nat[p + 6] = -0.05;
    return nat;
}

// QMLE sandwich covariance in natural-parameter space. Steps shrink near
// transform boundaries so the perturbed points stay feasible.
void sandwich_vcov(const FitProblem& prob, const std::vector<double>& nat, MarginFit* fit) {
    const std::size_t k = nat.size();
    const int t_len = static_cast<int>(prob.y.size());
    std::vector<double> steps(k);
    for (std::size_t i = 0; i < k; ++i) {
        double h = 1e-4 * std::max(0.05, std::fabs(nat[i]));
        switch (prob.layout.xf[i]) {
            case Xf::logit01: h = std::min(h, 0.25 * std::min(nat[i], 1.0 - nat[i])); break;
            case Xf::log: h = std::min(h, 0.25 * nat[i]); break;
            case Xf::nu_range:
                h = std::min(h, 0.25 * std::min(nat[i] - kNuLo, kNuHi - nat[i]));
                break;
            case Xf::tanh1: h = std::min(h, 0.25 * (1.0 - std::fabs(nat[i]))); break;
            case Xf::id: break;
        }
        steps[i] = std::max(h, 1e-9);
    }

    auto loglik_at = [&](const std::vector<double>& x) {
        FilterEval ev = prob.run(x);
        return ev.valid ? ev.loglik_joint : -kBadValue;
    };
    auto per_obs_at = [&](const std::vector<double>& x, std::vector<double>* out) {
        prob.run(x, nullptr, nullptr, nullptr, out);
    };

    // Hessian of the log-likelihood.
    Eigen::MatrixXd hess(k, k);
    std::vector<double> xp = nat;
    const double f0 = loglik_at(nat);
    for (std::size_t i = 0; i < k; ++i) {
        xp[i] = nat[i] + steps[i];
        double fp = loglik_at(xp);
        xp[i] = nat[i] - steps[i];
        double fm = loglik_at(xp);
        xp[i] = nat[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            xp[i] = nat[i] + steps[i]; xp[j] = nat[j] + steps[j];
            double fpp = loglik_at(xp);
            xp[j] = nat[j] - steps[j];
            double fpm = loglik_at(xp);
            xp[i] = nat[i] - steps[i]; xp[j] = nat[j] + steps[j];
            double fmp = loglik_at(xp);
            xp[j] = nat[j] - steps[j];
            double fmm = loglik_at(xp);
            xp[i] = nat[i]; xp[j] = nat[j];
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
        }
    }

    // Outer product of per-observation scores.
    std::vector<std::vector<double>> sp(k), sm(k);
    for (std::size_t i = 0; i < k; ++i) {
        xp[i] = nat[i] + steps[i];
        per_obs_at(xp, &sp[i]);
        xp[i] = nat[i] - steps[i];
        per_obs_at(xp, &sm[i]);
        xp[i] = nat[i];
    }
    Eigen::MatrixXd opg = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd s(k);
    for (int t = prob.p; t < t_len; ++t) {
        for (std::size_t i = 0; i < k; ++i)
            s(i) = (sp[i][t] - sm[i][t]) / (2.0 * steps[i]);
        opg += s * s.transpose();
    }

    Eigen::MatrixXd a = -hess;
    // Invert with an eigenvalue floor in case the Hessian is near-singular.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd ev = es.eigenvalues();
    double floor_ev = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_ev(k);
    for (std::size_t i = 0; i < k; ++i)
        inv_ev(i) = 1.0 / std::max(ev(i), floor_ev);
    Eigen::MatrixXd ainv =
        es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXd vc = ainv * opg * ainv;

    fit->vcov.assign(k, std::vector<double>(k));
    fit->se.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) fit->vcov[i][j] = vc(i, j);
        fit->se[i] = std::sqrt(std::max(vc(i, i), 0.0));
    }
}

MarginFit fit_problem(const FitProblem& prob, const OptimizerConfig& cfg) {
    const int t_len = static_cast<int>(prob.y.size());
    if (t_len < prob.p + 20)
        throw EstimationError("margin fit: insufficient data (need at least " +
                              std::to_string(prob.p + 20) + " observations)", {}, 0.0);
    if (!(sample_var(prob.y) > 0.0))
        throw EstimationError("margin fit: degenerate (constant) return series", {}, 0.0);
    if (prob.model == VarianceModel::realized_garch) {
        if (prob.rv.size() != prob.y.size())
            throw std::domain_error("margin fit: y and rv must be aligned");
        for (double v : prob.rv)
            if (!(v > 0.0)) throw std::domain_error("margin fit: rv must be strictly positive");
    }

    std::vector<double> nat0 = prob.model == VarianceModel::realized_garch ? rg_start(prob)
                                                                           : gjr_start(prob);
    std::vector<double> unc0 = prob.to_unconstrained(nat0);
    std::vector<std::vector<double>> starts{unc0};
    Rng rng(cfg.seed);
    for (int s = 1; s < cfg.n_starts; ++s) {
        std::vector<double> pert = unc0;
        for (auto& v : pert) v += 0.3 * rng.normal();
        starts.push_back(pert);
    }

    optim::MinimizeOptions opts;
    opts.max_iter = cfg.max_iter;
    opts.grad_tol = cfg.grad_tol;
    auto obj = [&prob](const std::vector<double>& unc) { return prob.negloglik_unc(unc); };
    optim::MinimizeResult best = optim::minimize_multistart(obj, starts, opts);

    std::vector<double> nat = prob.to_natural(best.x);
    if (!best.converged && best.grad_norm > 1e-3)
        throw EstimationError("margin fit: optimizer did not converge (scaled gradient norm " +
                              std::to_string(best.grad_norm) + ")", nat, best.grad_norm);

    MarginFit fit;
    fit.spec.mean_lags = prob.p;
    fit.spec.variance_model = prob.model;
    fit.spec.innovation = prob.innov;
    fit.param_names = prob.layout.names;
    fit.params = nat;
    fit.converged = best.converged || best.grad_norm <= 1e-3;
    fit.grad_norm = best.grad_norm;

    std::vector<double> h, z, mean;
    double h_next = 0.0;
    FilterEval ev = prob.run(nat, &h, &z, &mean, nullptr, &h_next);
    if (!ev.valid)
        throw EstimationError("margin fit: filter invalid at reported optimum", nat,
                              best.grad_norm);
    fit.loglik_joint = ev.loglik_joint;
    fit.loglik_partial = ev.loglik_partial;
    fit.stationarity_violated = ev.stationarity_violated;
    fit.h_path = h;
    fit.h_next = h_next;
    fit.z.assign(z.begin() + prob.p, z.end());
    fit.u = pit_parametric(fit.z, fit.innovation_params());
    if (cfg.compute_vcov) sandwich_vcov(prob, nat, &fit);
    return fit;
}

int select_lags_bic(const FitProblem& base, const OptimizerConfig& cfg) {
    double best_bic = std::numeric_limits<double>::infinity();
    int best_p = 0;
    for (int p = 0; p <= kMaxMeanLags; ++p) {
        FitProblem prob = base;
        prob.p = p;
        prob.layout = base.model == VarianceModel::realized_garch
                          ? rg_layout(p, base.innov)
                          : gjr_layout(p, base.innov);
        OptimizerConfig quick = cfg;
        quick.n_starts = std::max(1, cfg.n_starts / 2);
        quick.compute_vcov = false;
        try {
            MarginFit f = fit_problem(prob, quick);
            double k = static_cast<double>(prob.layout.size());
            double n = static_cast<double>(prob.y.size() - p);
            double bic = -2.0 * f.loglik_joint + k * std::log(n);
            if (bic < best_bic) {
                best_bic = bic;
                best_p = p;
            }
        } catch (const EstimationError&) {
            continue;
        }
    }
    return best_p;
}

}  // namespace

double MarginFit::param(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
        if (param_names[i] == name) return params[i];
    throw std::domain_error("MarginFit: no parameter named " + name);
}

MarginFit MarginFit::make(const MarginSpec& spec,
                          const std::vector<std::pair<std::string, double>>& values) {
    MarginFit f;
    f.spec = spec;
    ParamLayout layout = spec.variance_model == VarianceModel::realized_garch
                             ? rg_layout(spec.mean_lags, spec.innovation)
                             : gjr_layout(spec.mean_lags, spec.innovation);
    f.param_names = layout.names;
    f.params.assign(layout.size(), 0.0);
    for (const auto& [name, value] : values) {
        bool found = false;
        for (std::size_t i = 0; i < layout.size(); ++i) {
            if (layout.names[i] == name) {
                f.params[i] = value;
                found = true;
                break;
            }
        }
        if (!found) throw std::domain_error("MarginFit::make: unknown parameter " + name);
    }
    f.converged = true;
    return f;
}

udist::SkewTParams MarginFit::innovation_params() const {
    udist::SkewTParams p;
    p.nu = param("nu");
    p.lambda = spec.innovation == Innovation::skew_t ? param("lambda") : 0.0;
    return p;
}

MarginFit fit_realized_garch(std::span<const double> y, std::span<const double> rv,
                             const MarginSpec& spec, const OptimizerConfig& cfg) {
    FitProblem prob;
    prob.model = VarianceModel::realized_garch;
    prob.innov = spec.innovation;
    prob.p = spec.mean_lags;
    prob.y = y;
    prob.rv = rv;
    if (prob.p == kAutoLags) {
        prob.p = 0;
        prob.layout = rg_layout(0, prob.innov);
        prob.p = select_lags_bic(prob, cfg);
    }
    if (prob.p < 0 || prob.p > kMaxMeanLags)
        throw std::domain_error("margin fit: mean_lags must lie in 0..5");
    prob.layout = rg_layout(prob.p, prob.innov);
    return fit_problem(prob, cfg);
}

MarginFit fit_gjr_garch(std::span<const double> y, const MarginSpec& spec,
                        const OptimizerConfig& cfg) {
    FitProblem prob;
    prob.model = VarianceModel::gjr_garch;
    prob.innov = spec.innovation;
    prob.p = spec.mean_lags;
    prob.y = y;
    if (prob.p == kAutoLags) {
        prob.p = 0;
        prob.layout = gjr_layout(0, prob.innov);
        prob.p = select_lags_bic(prob, cfg);
    }
    if (prob.p < 0 || prob.p > kMaxMeanLags)
        throw std::domain_error("margin fit: mean_lags must lie in 0..5");
    prob.layout = gjr_layout(prob.p, prob.innov);
    return fit_problem(prob, cfg);
}

FilterOutput filter_path(const MarginFit& fit, std::span<const double> y,
                         std::span<const double> rv) {
    FitProblem prob;
    prob.model = fit.spec.variance_model;
    prob.innov = fit.spec.innovation;
    prob.p = fit.spec.mean_lags;
    prob.y = y;
    prob.rv = rv;
    prob.layout = prob.model == VarianceModel::realized_garch ? rg_layout(prob.p, prob.innov)
                                                              : gjr_layout(prob.p, prob.innov);
    FilterOutput out;
    std::vector<double> z;
    FilterEval ev = prob.run(fit.params, &out.h, &z, &out.mean, nullptr, &out.h_next);
    if (!ev.valid) throw std::domain_error("filter_path: parameters invalid for this data");
    out.z.assign(z.begin() + prob.p, z.end());
    return out;
}

std::vector<double> filter_residuals(const MarginFit& fit, std::span<const double> y,
                                     std::span<const double> rv) {
    return filter_path(fit, y, rv).z;
}

double loglik_at(const MarginFit& params_holder, std::span<const double> y,
                 std::span<const double> rv, bool joint) {
    FitProblem prob;
    prob.model = params_holder.spec.variance_model;
    prob.innov = params_holder.spec.innovation;
    prob.p = params_holder.spec.mean_lags;
    prob.y = y;
    prob.rv = rv;
    prob.layout = prob.model == VarianceModel::realized_garch ? rg_layout(prob.p, prob.innov)
                                                              : gjr_layout(prob.p, prob.innov);
    FilterEval ev = prob.run(params_holder.params);
    if (!ev.valid) throw std::domain_error("loglik_at: parameters invalid for this data");
    return joint ? ev.loglik_joint : ev.loglik_partial;
}

std::vector<double> pit_parametric(std::span<const double> z, const udist::SkewTParams& p) {
    udist::SkewTKernel kern(p);
    std::vector<double> u(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        u[i] = std::clamp(kern.cdf(z[i]), 1e-12, 1.0 - 1e-12);
    return u;
}

std::vector<double> pit_empirical(std::span<const double> z) {
    std::vector<double> sorted(z.begin(), z.end());
    std::sort(sorted.begin(), sorted.end());
    const double denom = static_cast<double>(z.size()) + 1.0;
    std::vector<double> u(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        auto it = std::upper_bound(sorted.begin(), sorted.end(), z[i]);
        u[i] = static_cast<double>(it - sorted.begin()) / denom;
    }
    return u;
}

MarginSimulation simulate_margin(const MarginFit& gen, std::span<const double> z, Rng& rng) {
    const std::size_t n = z.size();
    const int p = gen.spec.mean_lags;
    MarginSimulation sim;
    sim.y.resize(n);
    sim.h.resize(n);
    const double mu = gen.param("mu");
    std::vector<double> ar(p);
    for (int i = 0; i < p; ++i) ar[i] = gen.param("ar" + std::to_string(i + 1));

    if (gen.spec.variance_model == VarianceModel::realized_garch) {
        sim.rv.resize(n);
        const double omega = gen.param("omega"), beta = gen.param("beta"),
                     gamma = gen.param("gamma"), xi = gen.param("xi"), phi = gen.param("phi"),
                     tau1 = gen.param("tau1"), tau2 = gen.param("tau2"),
                     sigma_u = gen.param("sigma_u");
        double denom = 1.0 - beta - gamma * phi;
        if (!(denom > 1e-6))
            throw std::domain_error("simulate_margin: non-stationary realized GARCH generator");
        double logh = (omega + gamma * xi) / denom;
        for (std::size_t t = 0; t < n; ++t) {
            sim.h[t] = std::exp(logh);
            double mean = mu;
            for (int i = 0; i < p && t > static_cast<std::size_t>(i); ++i)
                mean += ar[i] * sim.y[t - 1 - i];
            sim.y[t] = mean + std::sqrt(sim.h[t]) * z[t];
            double lrv = xi + phi * logh + tau1 * z[t] + tau2 * (z[t] * z[t] - 1.0) +
                         sigma_u * rng.normal();
            sim.rv[t] = std::exp(lrv);
            logh = omega + beta * logh + gamma * lrv;
        }
    } else {
        const double kap = gen.param("kappa"), phi = gen.param("phi"), iota = gen.param("iota"),
                     psi = gen.param("psi");
        double denom = 1.0 - phi - 0.5 * iota - psi;
        if (!(denom > 1e-6))
            throw std::domain_error("simulate_margin: non-stationary GJR generator");
        double h = kap / denom;
        double eps_prev = 0.0;
        bool first = true;
        for (std::size_t t = 0; t < n; ++t) {
            if (!first) h = kap + (phi + (eps_prev < 0.0 ? iota : 0.0)) * eps_prev * eps_prev + psi * h;
            first = false;
            sim.h[t] = h;
            double mean = mu;
            for (int i = 0; i < p && t > static_cast<std::size_t>(i); ++i)
                mean += ar[i] * sim.y[t - 1 - i];
            double eps = std::sqrt(h) * z[t];
            sim.y[t] = mean + eps;
            eps_prev = eps;
        }
    }
    return sim;
}

double forecast_variance(const MarginFit& fit, const MarginState& state) {
    if (fit.spec.variance_model == VarianceModel::realized_garch) {
        return std::exp(fit.param("omega") + fit.param("beta") * std::log(state.h) +
                        fit.param("gamma") * std::log(state.rv));
    }
    double shock = (fit.param("phi") + (state.eps < 0.0 ? fit.param("iota") : 0.0)) *
                   state.eps * state.eps;
    return fit.param("kappa") + shock + fit.param("psi") * state.h;
}

std::string MarginFit::to_json() const {
    nlohmann::json j;
    j["spec"] = {{"mean_lags", spec.mean_lags},
                 {"variance_model",
                  spec.variance_model == VarianceModel::realized_garch ? "realized-garch"
                                                                       : "gjr-garch"},
                 {"innovation", spec.innovation == Innovation::skew_t ? "skew-t" : "student-t"}};
    nlohmann::json params_obj = nlohmann::json::object();
    for (std::size_t i = 0; i < param_names.size(); ++i) params_obj[param_names[i]] = params[i];
    j["params"] = params_obj;
    j["param_order"] = param_names;
    j["h_path"] = h_path;
    j["z"] = z;
    j["u"] = u;
    j["loglik_joint"] = loglik_joint;
    j["loglik_partial"] = loglik_partial;
    j["vcov"] = vcov;
    j["se"] = se;
    j["converged"] = converged;
    j["stationarity_violated"] = stationarity_violated;
    j["grad_norm"] = grad_norm;
    j["h_next"] = h_next;
    return j.dump(2);
}

MarginFit MarginFit::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MarginFit f;
    f.spec.mean_lags = j["spec"]["mean_lags"];
    f.spec.variance_model = j["spec"]["variance_model"] == "realized-garch"
                                ? VarianceModel::realized_garch
                                : VarianceModel::gjr_garch;
    f.spec.innovation =
        j["spec"]["innovation"] == "skew-t" ? Innovation::skew_t : Innovation::student_t;
    f.param_names = j["param_order"].get<std::vector<std::string>>();
    for (const auto& name : f.param_names) f.params.push_back(j["params"][name].get<double>());
    f.h_path = j["h_path"].get<std::vector<double>>();
    f.z = j["z"].get<std::vector<double>>();
    f.u = j["u"].get<std::vector<double>>();
    f.loglik_joint = j["loglik_joint"];
    f.loglik_partial = j["loglik_partial"];
    f.vcov = j["vcov"].get<std::vector<std::vector<double>>>();
    f.se = j["se"].get<std::vector<double>>();
    f.converged = j["converged"];
    f.stationarity_violated = j["stationarity_violated"];
    f.grad_norm = j["grad_norm"];
    f.h_next = j["h_next"];
    return f;
}

}  // namespace rgcop::margins
