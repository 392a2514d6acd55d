#include "rgcop/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rgcop::optim {

namespace {

double safe_eval(const ObjectiveFn& f, const std::vector<double>& x) {
    double v = f(x);
    if (!std::isfinite(v)) return 1e30;
    return v;
}

double inf_norm(const std::vector<double>& g, const std::vector<double>& x, double fx) {
    // Gradient norm scaled the way MINPACK does: |g_i| * max(1,|x_i|) / max(1,|f|).
    double m = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        double s = std::fabs(g[i]) * std::max(1.0, std::fabs(x[i])) / std::max(1.0, std::fabs(fx));
        m = std::max(m, s);
    }
    return m;
}

}  // namespace

std::vector<double> fd_gradient(const ObjectiveFn& f, const std::vector<double>& x, double rel_step) {
    const size_t n = x.size();
    std::vector<double> g(n), xp = x;
    for (size_t i = 0; i < n; ++i) {
        double h = rel_step * std::max(1.0, std::fabs(x[i]));
        xp[i] = x[i] + h;
        double fp = safe_eval(f, xp);
        xp[i] = x[i] - h;
        double fm = safe_eval(f, xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

std::vector<std::vector<double>> fd_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                            double rel_step) {
    const size_t n = x.size();
    std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
    std::vector<double> xp = x;
    const double f0 = safe_eval(f, x);
    std::vector<double> steps(n);
    for (size_t i = 0; i < n; ++i) steps[i] = rel_step * std::max(1.0, std::fabs(x[i]));
    // Diagonal terms.
    for (size_t i = 0; i < n; ++i) {
        double hi = steps[i];
        xp[i] = x[i] + hi;
        double fp = safe_eval(f, xp);
        xp[i] = x[i] - hi;
        double fm = safe_eval(f, xp);
        xp[i] = x[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
    }
    // Off-diagonal terms.
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double hi = steps[i], hj = steps[j];
            xp[i] = x[i] + hi; xp[j] = x[j] + hj;
            double fpp = safe_eval(f, xp);
            xp[j] = x[j] - hj;
            double fpm = safe_eval(f, xp);
            xp[i] = x[i] - hi; xp[j] = x[j] + hj;
            double fmp = safe_eval(f, xp);
            xp[j] = x[j] - hj;
            double fmm = safe_eval(f, xp);
            xp[i] = x[i]; xp[j] = x[j];
            h[i][j] = h[j][i] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return h;
}

MinimizeResult minimize_bfgs(const ObjectiveFn& f, std::vector<double> x0,
                             const MinimizeOptions& opts) {
    const size_t n = x0.size();
    MinimizeResult res;
    int n_eval = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++n_eval;
        return safe_eval(f, x);
    };
    auto grad = [&](const std::vector<double>& x) {
        n_eval += 2 * static_cast<int>(n);
        return fd_gradient(f, x, opts.fd_rel_step);
    };

    std::vector<double> x = std::move(x0);
    double fx = eval(x);
    std::vector<double> g = grad(x);
    // Inverse Hessian approximation, identity start.
    std::vector<std::vector<double>> hinv(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) hinv[i][i] = 1.0;

    std::vector<double> p(n), xn(n), gn(n), s(n), yv(n);
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        res.grad_norm = inf_norm(g, x, fx);
        if (res.grad_norm < opts.grad_tol) {
            res.converged = true;
            break;
        }
        // p = -H g
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += hinv[i][j] * g[j];
            p[i] = -acc;
        }
        double gp = std::inner_product(g.begin(), g.end(), p.begin(), 0.0);
        if (gp >= 0.0) {
            // Not a descent direction; reset to steepest descent.
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = 0; j < n; ++j) hinv[i][j] = (i == j) ? 1.0 : 0.0;
                p[i] = -g[i];
            }
            gp = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
            if (gp == 0.0) { res.converged = true; break; }
        }
        // Backtracking Armijo line search.
        double alpha = 1.0;
        const double c1 = 1e-4;
        double fn = fx;
        bool ok = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (size_t i = 0; i < n; ++i) xn[i] = x[i] + alpha * p[i];
            fn = eval(xn);
            if (fn <= fx + c1 * alpha * gp) { ok = true; break; }
            alpha *= 0.5;
        }
        if (!ok || fn >= fx) {
            // Line search failed; treat current point as final.
            break;
        }
        gn = grad(xn);
        double sy = 0.0;
        for (size_t i = 0; i < n; ++i) {
            s[i] = xn[i] - x[i];
            yv[i] = gn[i] - g[i];
            sy += s[i] * yv[i];
        }
        double step_size = 0.0;
        for (size_t i = 0; i < n; ++i)
            step_size = std::max(step_size, std::fabs(s[i]) / std::max(1.0, std::fabs(xn[i])));
        x.swap(xn);
        fx = fn;
        g.swap(gn);
        if (step_size < opts.step_tol) {
            res.converged = true;
            ++it;
            break;
        }
        if (sy > 1e-12) {
            // BFGS inverse update.
            double rho = 1.0 / sy;
            // hy = H y
            std::vector<double> hy(n, 0.0);
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < n; ++j) hy[i] += hinv[i][j] * yv[j];
            double yhy = std::inner_product(yv.begin(), yv.end(), hy.begin(), 0.0);
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = 0; j < n; ++j) {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] -
                                  rho * (s[i] * hy[j] + hy[i] * s[j]);
                }
            }
        }
    }
    res.x = std::move(x);
    res.fx = fx;
    res.iterations = it;
    res.n_eval = n_eval;
    std::vector<double> gfin = fd_gradient(f, res.x, opts.fd_rel_step);
    res.grad_norm = inf_norm(gfin, res.x, res.fx);
    if (res.grad_norm < opts.grad_tol) res.converged = true;
    return res;
}

MinimizeResult minimize_nelder_mead(const ObjectiveFn& f, std::vector<double> x0, int max_iter,
                                    double ftol) {
    const size_t n = x0.size();
    MinimizeResult res;
    int n_eval = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++n_eval;
        return safe_eval(f, x);
    };
    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (size_t i = 0; i < n; ++i) {
        double h = 0.05 * std::max(0.1, std::fabs(x0[i]));
        simplex[i + 1][i] += h;
    }
    for (size_t i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

    std::vector<size_t> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    int it = 0;
    for (; it < max_iter; ++it) {
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        size_t best = order[0], worst = order[n], second = order[n - 1];
        if (std::fabs(fv[worst] - fv[best]) <=
            ftol * (std::fabs(fv[best]) + std::fabs(fv[worst]) + 1e-30)) {
            res.converged = true;
            break;
        }
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
        }
        for (size_t j = 0; j < n; ++j) centroid[j] /= static_cast<double>(n);
        for (size_t j = 0; j < n; ++j) xr[j] = centroid[j] + (centroid[j] - simplex[worst][j]);
        double fr = eval(xr);
        if (fr < fv[best]) {
            for (size_t j = 0; j < n; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]);
            double fe = eval(xe);
            if (fe < fr) { simplex[worst] = xe; fv[worst] = fe; }
            else { simplex[worst] = xr; fv[worst] = fr; }
        } else if (fr < fv[second]) {
            simplex[worst] = xr;
            fv[worst] = fr;
        } else {
            for (size_t j = 0; j < n; ++j) xc[j] = centroid[j] + 0.5 * (simplex[worst][j] - centroid[j]);
            double fc = eval(xc);
            if (fc < fv[worst]) { simplex[worst] = xc; fv[worst] = fc; }
            else {
                for (size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (size_t j = 0; j < n; ++j)
                        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
                    fv[i] = eval(simplex[i]);
                }
            }
        }
    }
    size_t best = 0;
    for (size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    res.x = simplex[best];
    res.fx = fv[best];
    res.iterations = it;
    res.n_eval = n_eval;
    return res;
}

MinimizeResult minimize_multistart(const ObjectiveFn& f,
                                   const std::vector<std::vector<double>>& starts,
                                   const MinimizeOptions& opts) {
    MinimizeResult best;
    best.fx = std::numeric_limits<double>::infinity();
    for (const auto& x0 : starts) {
        MinimizeResult r = minimize_bfgs(f, x0, opts);
        if (!r.converged) {
            // Rescue with a simplex pass, then re-polish.
            MinimizeResult nm = minimize_nelder_mead(f, r.x);
            MinimizeResult r2 = minimize_bfgs(f, nm.x, opts);
            r2.n_eval += r.n_eval + nm.n_eval;
            if (r2.fx <= r.fx) r = r2;
        }
        if (r.fx < best.fx) best = r;
    }
    return best;
}

}  // namespace rgcop::optim
