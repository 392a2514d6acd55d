#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgcop/rng.hpp"

namespace rgcop::copula {

enum class Family { normal, clayton, rotated_gumbel, student_t, sjc };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// True for the families estimated with GAS dynamics; clayton and sjc are
// constant-parameter only.
bool supports_gas(Family f);

// Family parameters. Only the fields relevant to `family` are meaningful.
struct Params {
    Family family = Family::normal;
    double rho = 0.0;        // normal, student_t: (-1,1)
    double eta = 8.0;        // student_t dof: > 0
    double theta = 1.0;      // clayton: > 0
    double delta = 1.5;      // (rotated) gumbel: >= 1
    double tau_lower = 0.1;  // sjc lower tail: (0,1)
    double tau_upper = 0.1;  // sjc upper tail: (0,1)

    static Params normal(double rho);
    static Params student_t(double rho, double eta);
    static Params clayton(double theta);
    static Params rotated_gumbel(double delta);
    static Params sjc(double tau_lower, double tau_upper);

    // The parameter the GAS recursion drives (rho / theta / delta /
    // tau_lower for sjc).
    double primary() const;
    Params with_primary(double value) const;
    void validate() const;
};

double logpdf(const Params& p, double u, double v);
double cdf(const Params& p, double u, double v);

// h-function h(v|u) = dC(u,v)/du and its inverse in v.
double conditional_cdf(const Params& p, double u, double v);
double conditional_quantile(const Params& p, double u, double w);

// Transformed-parameter link: kappa = link(delta), delta = link_inv(kappa).
// link_inv clamps into the family's numerically usable range.
double link(Family f, double delta);
double link_inv(Family f, double kappa);

// d logpdf / d primary. Analytic for normal, student_t and clayton;
// high-order finite differences for rotated_gumbel and sjc.
double score(const Params& p, double u, double v);

// I(delta) = E[s^2] under the copula, Gauss-Legendre quadrature cached on
// a per-family grid (per-eta grids for student_t). Not defined for sjc.
double fisher_info(const Params& p);

// (lambda_lower, lambda_upper)
std::pair<double, double> tail_dependence(const Params& p);

std::pair<double, double> sample_one(const Params& p, Rng& rng);
void sample(const Params& p, std::size_t n, Rng& rng, std::vector<double>& u,
            std::vector<double>& v);

// GAS(1,1) recursion coefficients for the transformed parameter kappa:
//   kappa_{t+1} = w + beta * kappa_t + alpha * I_t^{-1/2} * s_t
struct GasParams {
    Family family = Family::normal;
    double w = 0.0;
    double alpha = 0.05;
    double beta = 0.95;
    double shape = 8.0;  // eta for student_t, unused otherwise
};

struct DependencePath {
    std::vector<double> kappa;
    std::vector<double> delta;
    std::vector<double> score;
    std::vector<double> lambda_lower;
    std::vector<double> lambda_upper;
    std::vector<double> loglik_t;  // per-day density contribution
    double loglik = 0.0;
    double kappa_next = 0.0;  // one-step-ahead kappa after the sample
    int clamped_steps = 0;    // |kappa| hit the +-50 clamp
    int clipped_inputs = 0;   // U values pulled into the interior
    bool diverged() const { return clamped_steps > 0; }
};

// Per-observation transforms reused across filter passes with different
// parameters (the transforms depend only on the family and, for
// student_t, on eta).
struct PreparedU {
    Family family = Family::normal;
    double shape = 0.0;
    std::vector<double> u, v;  // clipped into [kUClip, 1-kUClip]
    std::vector<double> x, y;  // family transform of u, v
    std::vector<double> lx, ly;  // extra per-obs terms (student_t)
    int clipped = 0;
    std::size_t size() const { return u.size(); }
};

inline constexpr double kUClip = 1e-10;
inline constexpr double kKappaClamp = 50.0;

PreparedU prepare(Family f, double shape, std::span<const double> u1,
                  std::span<const double> u2);
double logpdf_prepared(const PreparedU& d, std::size_t t, double primary);
double score_prepared(const PreparedU& d, std::size_t t, double primary);

DependencePath gas_filter_prepared(const GasParams& gp, const PreparedU& d, double kappa0);
DependencePath gas_filter(const GasParams& gp, std::span<const double> u1,
                          std::span<const double> u2, double kappa0);

// Draws a sample path from the GAS copula data-generating process.
struct GasSimulation {
    std::vector<double> u1, u2;
    std::vector<double> kappa, delta;
};
GasSimulation simulate_gas(const GasParams& gp, std::size_t n, double kappa0, Rng& rng);

// Rosenblatt transform: V1 = U1, V2 = dC/du1 at the day's parameter.
// `primary_path` overrides the primary parameter per day when non-empty.
struct RosenblattResult {
    std::vector<double> v1, v2;
};
RosenblattResult rosenblatt(const Params& p, std::span<const double> u1,
                            std::span<const double> u2,
                            std::span<const double> primary_path = {});

// Delimited dependence-path output: date,kappa,delta,score,lambdaL,lambdaU.
void write_dependence_path_csv(const DependencePath& path,
                               const std::vector<std::string>& dates, std::ostream& out,
                               const std::string& header_comment = "");

}  // namespace rgcop::copula
