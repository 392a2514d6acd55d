#pragma once

// Scalar special functions shared by the distribution and copula layers.
// Everything here is pure and reentrant.

namespace rgcop::special {

double norm_pdf(double x);
double norm_logpdf(double x);
double norm_cdf(double x);

// Inverse standard normal CDF. Accurate to ~1e-15 over (0,1);
// arguments outside (0,1) throw.
double norm_quantile(double p);

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
double inc_beta(double x, double a, double b);

// Student's t with nu degrees of freedom (unscaled, variance nu/(nu-2)).
double student_t_pdf(double x, double nu);
double student_t_logpdf(double x, double nu);
double student_t_cdf(double x, double nu);
double student_t_quantile(double p, double nu);

// Gauss-Legendre nodes/weights on [-1,1], tabulated per n and cached.
// Returned pointers stay valid for the life of the process.
struct GaussLegendre {
    const double* nodes;
    const double* weights;
    int n;
};
GaussLegendre gauss_legendre(int n);

}  // namespace rgcop::special
