#pragma once

#include <functional>
#include <vector>

namespace rgcop::optim {

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

struct MinimizeOptions {
    int max_iter = 500;
    double grad_tol = 1e-6;     // scaled infinity norm of the gradient
    double step_tol = 1e-12;
    double fd_rel_step = 1e-6;  // central-difference step, relative to |x|
};

struct MinimizeResult {
    std::vector<double> x;
    double fx = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    int n_eval = 0;
    bool converged = false;
};

// Central finite-difference gradient with per-coordinate relative step.
std::vector<double> fd_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                double rel_step = 1e-6);

// Dense numeric Hessian by central differences (symmetric).
std::vector<std::vector<double>> fd_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                            double rel_step = 1e-4);

// Quasi-Newton (BFGS) with backtracking line search and numeric gradients.
MinimizeResult minimize_bfgs(const ObjectiveFn& f, std::vector<double> x0,
                             const MinimizeOptions& opts = {});

// Nelder-Mead simplex, used as a polish/fallback when BFGS stalls.
MinimizeResult minimize_nelder_mead(const ObjectiveFn& f, std::vector<double> x0,
                                    int max_iter = 2000, double ftol = 1e-10);

// Runs BFGS from each start (with a Nelder-Mead rescue for non-converged
// runs) and returns the best point found.
MinimizeResult minimize_multistart(const ObjectiveFn& f,
                                   const std::vector<std::vector<double>>& starts,
                                   const MinimizeOptions& opts = {});

}  // namespace rgcop::optim
