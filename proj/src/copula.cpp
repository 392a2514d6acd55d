#include "rgcop/copula.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <stdexcept>

#include "rgcop/special.hpp"

namespace rgcop::copula {

using special::norm_cdf;
using special::norm_quantile;
using special::student_t_cdf;
using special::student_t_quantile;

namespace {

constexpr double kRhoMax = 1.0 - 1e-7;
constexpr double kDeltaMax = 50.0;
constexpr double kThetaMin = 1e-10;
constexpr double kThetaMax = 50.0;
constexpr double kFisherFloor = 1e-8;

double clip_u(double u) { return std::clamp(u, kUClip, 1.0 - kUClip); }

void require_interior(double u, double v) {
    if (!(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0))
        throw std::domain_error("copula: u,v must lie strictly inside (0,1)");
}

// ---------------------------------------------------------------- normal --

double normal_logpdf_xy(double x, double y, double rho) {
    double r2 = 1.0 - rho * rho;
    return -0.5 * std::log(r2) -
           (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2);
}

double normal_score_xy(double x, double y, double rho) {
    double r2 = 1.0 - rho * rho;
    return rho / r2 + (x * y * (1.0 + rho * rho) - rho * (x * x + y * y)) / (r2 * r2);
}

double normal_cdf_uv(double u, double v, double rho) {
    // C(u,v) = int_{-inf}^{x} phi(s) Phi((y - rho*s)/sqrt(1-rho^2)) ds
    double x = norm_quantile(clip_u(u));
    double y = norm_quantile(clip_u(v));
    double lim = 8.5;
    if (x <= -lim) return 0.0;
    double hi = std::min(x, lim);
    double sr = std::sqrt(1.0 - rho * rho);
    auto gl = special::gauss_legendre(96);
    double a = -lim, b = hi;
    double c1 = 0.5 * (b - a), c2 = 0.5 * (b + a);
    double acc = 0.0;
    for (int i = 0; i < gl.n; ++i) {
        double s = c1 * gl.nodes[i] + c2;
        acc += gl.weights[i] * special::norm_pdf(s) * norm_cdf((y - rho * s) / sr);
    }
    return std::clamp(c1 * acc, 0.0, 1.0);
}

// ------------------------------------------------------------- student t --

struct TConsts {
    double eta;
    double log_norm;  // parameter-free part of the copula density normalizer
};

TConsts t_consts(double eta) {
    TConsts c;
    c.eta = eta;
    c.log_norm = std::lgamma(0.5 * (eta + 2.0)) + std::lgamma(0.5 * eta) -
                 2.0 * std::lgamma(0.5 * (eta + 1.0));
    return c;
}

double t_logpdf_xy(double x, double y, double rho, const TConsts& c, double lx, double ly) {
    // lx = log(1 + x^2/eta), ly likewise
    double r2 = 1.0 - rho * rho;
    double q = x * x - 2.0 * rho * x * y + y * y;
    return c.log_norm - 0.5 * std::log(r2) -
           0.5 * (c.eta + 2.0) * std::log1p(q / (c.eta * r2)) +
           0.5 * (c.eta + 1.0) * (lx + ly);
}

double t_score_xy(double x, double y, double rho, double eta) {
    double r2 = 1.0 - rho * rho;
    double q = x * x - 2.0 * rho * x * y + y * y;
    double d = eta * r2 + q;
    return -(eta + 1.0) * rho / r2 + (eta + 2.0) * (eta * rho + x * y) / d;
}

double t_cond_scale(double x, double rho, double eta) {
    return std::sqrt((1.0 - rho * rho) * (eta + x * x) / (eta + 1.0));
}

double t_cdf_uv(double u, double v, double rho, double eta) {
    // Conditional decomposition integrated in s = tan(theta) coordinates
    // to tame the polynomial tails.
    double x = student_t_quantile(clip_u(u), eta);
    double y = student_t_quantile(clip_u(v), eta);
    double lo = -0.5 * M_PI + 1e-12, hi = std::atan(x);
    auto gl = special::gauss_legendre(160);
    double c1 = 0.5 * (hi - lo), c2 = 0.5 * (hi + lo);
    double acc = 0.0;
    for (int i = 0; i < gl.n; ++i) {
        double th = c1 * gl.nodes[i] + c2;
        double s = std::tan(th);
        double jac = 1.0 + s * s;
        double g = (y - rho * s) / t_cond_scale(s, rho, eta);
        acc += gl.weights[i] * special::student_t_pdf(s, eta) * jac *
               student_t_cdf(g, eta + 1.0);
    }
    return std::clamp(c1 * acc, 0.0, 1.0);
}

// --------------------------------------------------------------- clayton --

double clayton_logpdf_uv(double u, double v, double theta) {
    double lu = std::log(u), lv = std::log(v);
    double s = std::exp(-theta * lu) + std::exp(-theta * lv) - 1.0;
    return std::log1p(theta) - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * std::log(s);
}

double clayton_score_uv(double u, double v, double theta) {
    double lu = std::log(u), lv = std::log(v);
    double a = std::exp(-theta * lu), b = std::exp(-theta * lv);
    double s = a + b - 1.0;
    double ds = -a * lu - b * lv;
    return 1.0 / (1.0 + theta) - lu - lv + std::log(s) / (theta * theta) -
           (2.0 + 1.0 / theta) * ds / s;
}

double clayton_cdf_uv(double u, double v, double theta) {
    double s = std::pow(u, -theta) + std::pow(v, -theta) - 1.0;
    if (s <= 0.0) return 0.0;
    return std::pow(s, -1.0 / theta);
}

double clayton_cond_cdf(double u, double v, double theta) {
    // dC/du = u^{-theta-1} * S^{-1/theta - 1}
    double s = std::pow(u, -theta) + std::pow(v, -theta) - 1.0;
    if (s <= 0.0) return 0.0;
    return std::pow(u, -theta - 1.0) * std::pow(s, -1.0 / theta - 1.0);
}

double clayton_cond_quantile(double u, double w, double theta) {
    double t = (std::pow(w, -theta / (1.0 + theta)) - 1.0) * std::pow(u, -theta) + 1.0;
    return std::pow(t, -1.0 / theta);
}

// ---------------------------------------------------------------- gumbel --
// Plain Gumbel pieces; the rotated copula evaluates them at (1-u, 1-v).

double gumbel_logpdf_xt(double xt, double yt, double delta) {
    // xt = -log u, yt = -log v
    double lxt = std::log(xt), lyt = std::log(yt);
    double s = std::exp(delta * lxt) + std::exp(delta * lyt);
    double ls = std::log(s);
    double a = std::exp(ls / delta);  // S^{1/delta}
    return -a + xt + yt + (delta - 1.0) * (lxt + lyt) + (2.0 / delta - 2.0) * ls +
           std::log1p((delta - 1.0) / a);
}

double gumbel_cdf_uv(double u, double v, double delta) {
    double xt = -std::log(u), yt = -std::log(v);
    double s = std::pow(xt, delta) + std::pow(yt, delta);
    return std::exp(-std::pow(s, 1.0 / delta));
}

double gumbel_cond_cdf(double u, double v, double delta) {
    // dC/du = C(u,v) S^{1/delta - 1} (-log u)^{delta-1} / u
    double xt = -std::log(u), yt = -std::log(v);
    double s = std::pow(xt, delta) + std::pow(yt, delta);
    double a = std::pow(s, 1.0 / delta);
    return std::exp(-a + (1.0 / delta - 1.0) * std::log(s) + (delta - 1.0) * std::log(xt) + xt);
}

double rgumbel_cdf_uv(double u, double v, double delta) {
    return std::max(0.0, u + v - 1.0 + gumbel_cdf_uv(1.0 - u, 1.0 - v, delta));
}

double rgumbel_cond_cdf(double u, double v, double delta) {
    return 1.0 - gumbel_cond_cdf(clip_u(1.0 - u), clip_u(1.0 - v), delta);
}

// ------------------------------------------------------------------- sjc --

struct JcParams {
    double psi, gamma;
};

JcParams jc_from_taus(double tau_upper, double tau_lower) {
    JcParams p;
    p.psi = 1.0 / std::log2(2.0 - tau_upper);
    p.gamma = -1.0 / std::log2(tau_lower);
    return p;
}

// Shared Joe-Clayton intermediates, kept on the log scale. The expm1 /
// log1p chain keeps 1-B accurate in the corners where a and b round to 1.
struct JcEval {
    double la, lb;        // log a, log b with a = 1-(1-u)^psi
    double lup, lvp;      // log(1-u), log(1-v)
    double lbig;          // log A, A = a^-g + b^-g - 1 >= 1
    double l_one_m_b;     // log(1 - A^{-1/g})
};

// log(1 - e^x) for x < 0 without saturation at either end.
double log1mexp(double x) {
    if (x > -M_LN2) return std::log(-std::expm1(x));
    return std::log1p(-std::exp(x));
}

JcEval jc_eval(double u, double v, const JcParams& p) {
    JcEval e;
    e.lup = std::log1p(-u);
    e.lvp = std::log1p(-v);
    e.la = log1mexp(p.psi * e.lup);  // log(1 - (1-u)^psi)
    e.lb = log1mexp(p.psi * e.lvp);
    double d = std::expm1(-p.gamma * e.la) + std::expm1(-p.gamma * e.lb);  // A - 1 >= 0
    e.lbig = std::log1p(d);
    e.l_one_m_b = e.lbig > 0.0 ? log1mexp(-e.lbig / p.gamma) : std::log(1e-300);
    return e;
}

double jc_cdf(double u, double v, const JcParams& p) {
    JcEval e = jc_eval(u, v, p);
    // 1 - (1-B)^{1/psi}
    return -std::expm1(e.l_one_m_b / p.psi);
}

// log density of the Joe-Clayton copula.
double jc_logpdf(double u, double v, const JcParams& p) {
    double psi = p.psi, g = p.gamma;
    JcEval e = jc_eval(u, v, p);
    // bracket = (psi-1) + psi(1+g)(1-B) A^{1/g}, combined in log space
    // because A^{1/g} overflows for small gamma.
    double t2 = std::log(psi * (1.0 + g)) + e.l_one_m_b + e.lbig / g;
    double lbracket;
    if (psi > 1.0) {
        double t1 = std::log(psi - 1.0);
        double m = std::max(t1, t2);
        lbracket = m + std::log(std::exp(t1 - m) + std::exp(t2 - m));
    } else {
        lbracket = t2;
    }
    return (-g - 1.0) * (e.la + e.lb) + (psi - 1.0) * (e.lup + e.lvp) +
           (1.0 / psi - 2.0) * e.l_one_m_b + (-2.0 / g - 2.0) * e.lbig + lbracket;
}

// dC_JC/du (first argument).
double jc_cond_cdf(double u, double v, const JcParams& p) {
    double psi = p.psi, g = p.gamma;
    JcEval e = jc_eval(u, v, p);
    // (1-B)^{1/psi-1} A^{-1/g-1} a^{-g-1} (1-u)^{psi-1}
    double lh = (1.0 / psi - 1.0) * e.l_one_m_b + (-1.0 / g - 1.0) * e.lbig +
                (-g - 1.0) * e.la + (psi - 1.0) * e.lup;
    return std::exp(lh);
}

double sjc_cdf_uv(double u, double v, double tau_lower, double tau_upper) {
    JcParams p1 = jc_from_taus(tau_upper, tau_lower);
    JcParams p2 = jc_from_taus(tau_lower, tau_upper);
    return 0.5 * (jc_cdf(u, v, p1) + jc_cdf(1.0 - u, 1.0 - v, p2) + u + v - 1.0);
}

double sjc_logpdf_uv(double u, double v, double tau_lower, double tau_upper) {
    JcParams p1 = jc_from_taus(tau_upper, tau_lower);
    JcParams p2 = jc_from_taus(tau_lower, tau_upper);
    double l1 = jc_logpdf(u, v, p1);
    double l2 = jc_logpdf(1.0 - u, 1.0 - v, p2);
    double m = std::max(l1, l2);
    return std::log(0.5) + m + std::log(std::exp(l1 - m) + std::exp(l2 - m));
}

double sjc_cond_cdf(double u, double v, double tau_lower, double tau_upper) {
    JcParams p1 = jc_from_taus(tau_upper, tau_lower);
    JcParams p2 = jc_from_taus(tau_lower, tau_upper);
    return 0.5 * (jc_cond_cdf(u, v, p1) + 1.0 - jc_cond_cdf(1.0 - u, 1.0 - v, p2));
}

// Five-point central difference in the primary parameter, with the stencil
// shifted away from the domain edge when necessary.
double numeric_score(const Params& p, double u, double v, double lo_bound, double hi_bound) {
    double x0 = p.primary();
    double h = 1e-4 * std::max(1.0, std::fabs(x0));
    double lo = lo_bound + 1e-9, hi = hi_bound;
    double base = std::clamp(x0, lo + 2.0 * h, hi - 2.0 * h);
    auto f = [&](double val) {
        Params q = p.with_primary(val);
        return logpdf(q, u, v);
    };
    double d = (f(base - 2.0 * h) - 8.0 * f(base - h) + 8.0 * f(base + h) - f(base + 2.0 * h)) /
               (12.0 * h);
    return d;
}

}  // namespace

// ---------------------------------------------------------------- Params --

std::string family_name(Family f) {
    switch (f) {
        case Family::normal: return "normal";
        case Family::clayton: return "clayton";
        case Family::rotated_gumbel: return "rotated-gumbel";
        case Family::student_t: return "student-t";
        case Family::sjc: return "sjc";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    if (name == "normal") return Family::normal;
    if (name == "clayton") return Family::clayton;
    if (name == "rotated-gumbel" || name == "rgumbel") return Family::rotated_gumbel;
    if (name == "student-t" || name == "t") return Family::student_t;
    if (name == "sjc") return Family::sjc;
    throw std::domain_error("unknown copula family: " + name);
}

bool supports_gas(Family f) {
    return f == Family::normal || f == Family::rotated_gumbel || f == Family::student_t;
}

Params Params::normal(double rho) {
    Params p;
    p.family = Family::normal;
    p.rho = rho;
    p.validate();
    return p;
}

Params Params::student_t(double rho, double eta) {
    Params p;
    p.family = Family::student_t;
    p.rho = rho;
    p.eta = eta;
    p.validate();
    return p;
}

Params Params::clayton(double theta) {
    Params p;
    p.family = Family::clayton;
    p.theta = theta;
    p.validate();
    return p;
}

Params Params::rotated_gumbel(double delta) {
    Params p;
    p.family = Family::rotated_gumbel;
    p.delta = delta;
    p.validate();
    return p;
}

Params Params::sjc(double tau_lower, double tau_upper) {
    Params p;
    p.family = Family::sjc;
    p.tau_lower = tau_lower;
    p.tau_upper = tau_upper;
    p.validate();
    return p;
}

double Params::primary() const {
    switch (family) {
        case Family::normal:
        case Family::student_t: return rho;
        case Family::clayton: return theta;
        case Family::rotated_gumbel: return delta;
        case Family::sjc: return tau_lower;
    }
    return 0.0;
}

Params Params::with_primary(double value) const {
    Params p = *this;
    switch (family) {
        case Family::normal:
        case Family::student_t: p.rho = value; break;
        case Family::clayton: p.theta = value; break;
        case Family::rotated_gumbel: p.delta = value; break;
        case Family::sjc: p.tau_lower = value; break;
    }
    return p;
}

void Params::validate() const {
    switch (family) {
        case Family::normal:
            if (!(std::fabs(rho) < 1.0)) throw std::domain_error("normal copula: |rho| must be < 1");
            break;
        case Family::student_t:
            if (!(std::fabs(rho) < 1.0)) throw std::domain_error("t copula: |rho| must be < 1");
            if (!(eta > 0.0)) throw std::domain_error("t copula: eta must be positive");
            break;
        case Family::clayton:
            if (!(theta > 0.0)) throw std::domain_error("clayton copula: theta must be positive");
            break;
        case Family::rotated_gumbel:
            if (!(delta >= 1.0)) throw std::domain_error("gumbel copula: delta must be >= 1");
            break;
        case Family::sjc:
            if (!(tau_lower > 0.0 && tau_lower < 1.0 && tau_upper > 0.0 && tau_upper < 1.0))
                throw std::domain_error("sjc copula: tail parameters must lie in (0,1)");
            break;
    }
}

// ------------------------------------------------------------ evaluation --

double logpdf(const Params& p, double u, double v) {
    p.validate();
    require_interior(u, v);
    switch (p.family) {
        case Family::normal:
            return normal_logpdf_xy(norm_quantile(u), norm_quantile(v), p.rho);
        case Family::student_t: {
            TConsts c = t_consts(p.eta);
            double x = student_t_quantile(u, p.eta), y = student_t_quantile(v, p.eta);
            return t_logpdf_xy(x, y, p.rho, c, std::log1p(x * x / p.eta),
                               std::log1p(y * y / p.eta));
        }
        case Family::clayton: return clayton_logpdf_uv(u, v, p.theta);
        case Family::rotated_gumbel:
            if (p.delta == 1.0) return 0.0;
            return gumbel_logpdf_xt(-std::log(clip_u(1.0 - u)), -std::log(clip_u(1.0 - v)), p.delta);
        case Family::sjc: return sjc_logpdf_uv(u, v, p.tau_lower, p.tau_upper);
    }
    return 0.0;
}

double cdf(const Params& p, double u, double v) {
    p.validate();
    u = std::clamp(u, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    if (u == 0.0 || v == 0.0) return 0.0;
    if (u == 1.0) return v;
    if (v == 1.0) return u;
    switch (p.family) {
        case Family::normal: return normal_cdf_uv(u, v, p.rho);
        case Family::student_t: return t_cdf_uv(u, v, p.rho, p.eta);
        case Family::clayton: return clayton_cdf_uv(u, v, p.theta);
        case Family::rotated_gumbel: return rgumbel_cdf_uv(u, v, p.delta);
        case Family::sjc: return sjc_cdf_uv(u, v, p.tau_lower, p.tau_upper);
    }
    return 0.0;
}

double conditional_cdf(const Params& p, double u, double v) {
    p.validate();
    require_interior(u, v);
    switch (p.family) {
        case Family::normal: {
            double x = norm_quantile(u), y = norm_quantile(v);
            return norm_cdf((y - p.rho * x) / std::sqrt(1.0 - p.rho * p.rho));
        }
        case Family::student_t: {
            double x = student_t_quantile(u, p.eta), y = student_t_quantile(v, p.eta);
            return student_t_cdf((y - p.rho * x) / t_cond_scale(x, p.rho, p.eta), p.eta + 1.0);
        }
        case Family::clayton: return clayton_cond_cdf(u, v, p.theta);
        case Family::rotated_gumbel:
            if (p.delta == 1.0) return v;
            return rgumbel_cond_cdf(u, v, p.delta);
        case Family::sjc: return sjc_cond_cdf(u, v, p.tau_lower, p.tau_upper);
    }
    return 0.0;
}

double conditional_quantile(const Params& p, double u, double w) {
    p.validate();
    require_interior(u, w);
    switch (p.family) {
        case Family::normal: {
            double x = norm_quantile(u);
            return norm_cdf(p.rho * x + std::sqrt(1.0 - p.rho * p.rho) * norm_quantile(w));
        }
        case Family::student_t: {
            double x = student_t_quantile(u, p.eta);
            double y = p.rho * x + t_cond_scale(x, p.rho, p.eta) * student_t_quantile(w, p.eta + 1.0);
            return student_t_cdf(y, p.eta);
        }
        case Family::clayton: return clayton_cond_quantile(u, w, p.theta);
        case Family::rotated_gumbel:
        case Family::sjc: {
            // h is a CDF in v: invert by bisection.
            double lo = kUClip, hi = 1.0 - kUClip;
            for (int i = 0; i < 60; ++i) {
                double mid = 0.5 * (lo + hi);
                if (conditional_cdf(p, u, mid) < w) lo = mid; else hi = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return w;
}

// ------------------------------------------------------------------ link --

double link(Family f, double delta) {
    switch (f) {
        case Family::normal:
        case Family::student_t:
            if (!(std::fabs(delta) < 1.0)) throw std::domain_error("link: |rho| must be < 1");
            return std::log((1.0 + delta) / (1.0 - delta));
        case Family::rotated_gumbel:
            if (!(delta > 1.0)) throw std::domain_error("link: delta must exceed 1");
            return std::log(delta - 1.0);
        case Family::clayton:
            if (!(delta > 0.0)) throw std::domain_error("link: theta must be positive");
            return std::log(delta);
        case Family::sjc:
            if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("link: tau must be in (0,1)");
            return std::log(delta / (1.0 - delta));
    }
    return 0.0;
}

double link_inv(Family f, double kappa) {
    switch (f) {
        case Family::normal:
        case Family::student_t: {
            double rho = std::tanh(0.5 * kappa);  // (1-e^-k)/(1+e^-k)
            return std::clamp(rho, -kRhoMax, kRhoMax);
        }
        case Family::rotated_gumbel: {
            double delta = 1.0 + std::exp(kappa);
            return std::clamp(delta, 1.0 + 1e-10, kDeltaMax);
        }
        case Family::clayton:
            return std::clamp(std::exp(kappa), kThetaMin, kThetaMax);
        case Family::sjc: {
            double t = 1.0 / (1.0 + std::exp(-kappa));
            return std::clamp(t, 1e-8, 1.0 - 1e-8);
        }
    }
    return 0.0;
}

// ----------------------------------------------------------------- score --

double score(const Params& p, double u, double v) {
    p.validate();
    require_interior(u, v);
    switch (p.family) {
        case Family::normal:
            return normal_score_xy(norm_quantile(u), norm_quantile(v), p.rho);
        case Family::student_t:
            return t_score_xy(student_t_quantile(u, p.eta), student_t_quantile(v, p.eta), p.rho,
                              p.eta);
        case Family::clayton: return clayton_score_uv(u, v, p.theta);
        case Family::rotated_gumbel: return numeric_score(p, u, v, 1.0, kDeltaMax);
        case Family::sjc: return numeric_score(p, u, v, 0.0, 1.0);
    }
    return 0.0;
}

// ----------------------------------------------------------- fisher info --

namespace {

struct FisherGrid {
    std::vector<double> coord;  // query coordinate (family-specific transform)
    std::vector<double> value;
};

// 2-D quadrature of s^2 c over (0,1)^2 after the meta-Gaussian
// substitution u = Phi(x): nodes are fixed in x and shared across the
// whole parameter grid.
constexpr int kFisherNodes = 48;
constexpr double kFisherLim = 8.0;

struct FisherNodes {
    std::vector<double> g;   // Gaussian coordinates
    std::vector<double> wp;  // weight * phi(g)
    std::vector<double> u;   // Phi(g)
};

FisherNodes fisher_nodes() {
    FisherNodes n;
    auto gl = special::gauss_legendre(kFisherNodes);
    n.g.resize(gl.n);
    n.wp.resize(gl.n);
    n.u.resize(gl.n);
    for (int i = 0; i < gl.n; ++i) {
        double x = kFisherLim * gl.nodes[i];
        n.g[i] = x;
        n.wp[i] = kFisherLim * gl.weights[i] * special::norm_pdf(x);
        n.u[i] = norm_cdf(x);
    }
    return n;
}

double fisher_quad(const Params& base, const FisherNodes& nodes,
                   const std::vector<double>& xt) {
    // xt: family transform of nodes.u (equals nodes.g for normal).
    double acc = 0.0;
    const int n = static_cast<int>(nodes.u.size());
    switch (base.family) {
        case Family::normal: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double s = normal_score_xy(xt[i], xt[j], base.rho);
                    double c = normal_logpdf_xy(xt[i], xt[j], base.rho);
                    acc += nodes.wp[i] * nodes.wp[j] * s * s * std::exp(c);
                }
            }
            break;
        }
        case Family::student_t: {
            TConsts tc = t_consts(base.eta);
            std::vector<double> lx(n);
            for (int i = 0; i < n; ++i) lx[i] = std::log1p(xt[i] * xt[i] / base.eta);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double s = t_score_xy(xt[i], xt[j], base.rho, base.eta);
                    double c = t_logpdf_xy(xt[i], xt[j], base.rho, tc, lx[i], lx[j]);
                    acc += nodes.wp[i] * nodes.wp[j] * s * s * std::exp(c);
                }
            }
            break;
        }
        case Family::clayton: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double s = clayton_score_uv(nodes.u[i], nodes.u[j], base.theta);
                    double c = clayton_logpdf_uv(nodes.u[i], nodes.u[j], base.theta);
                    acc += nodes.wp[i] * nodes.wp[j] * s * s * std::exp(c);
                }
            }
            break;
        }
        case Family::rotated_gumbel: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double s = numeric_score(base, nodes.u[i], nodes.u[j], 1.0, kDeltaMax);
                    double c = gumbel_logpdf_xt(xt[i], xt[j], base.delta);
                    acc += nodes.wp[i] * nodes.wp[j] * s * s * std::exp(c);
                }
            }
            break;
        }
        case Family::sjc: break;
    }
    return acc;
}

std::shared_ptr<FisherGrid> build_fisher_grid(Family f, double eta) {
    auto grid = std::make_shared<FisherGrid>();
    static const FisherNodes nodes = fisher_nodes();
    const int n = static_cast<int>(nodes.u.size());
    std::vector<double> xt(nodes.g);
    Params base;
    base.family = f;
    int k = 0;
    double lo = 0.0, hi = 0.0;
    switch (f) {
        case Family::normal:
            k = 201; lo = -0.9995; hi = 0.9995;
            break;
        case Family::student_t:
            k = 161; lo = -0.9995; hi = 0.9995;
            base.eta = eta;
            for (int i = 0; i < n; ++i) xt[i] = student_t_quantile(nodes.u[i], eta);
            break;
        case Family::rotated_gumbel:
            // coordinate is kappa = log(delta - 1)
            k = 161; lo = std::log(5e-4); hi = std::log(kDeltaMax - 1.0);
            for (int i = 0; i < n; ++i) xt[i] = -std::log(1.0 - nodes.u[i]);
            break;
        case Family::clayton:
            k = 161; lo = std::log(1e-3); hi = std::log(kThetaMax);
            break;
        case Family::sjc:
            throw std::domain_error("fisher_info: sjc has no scalar dynamic parameter");
    }
    grid->coord.resize(k);
    grid->value.resize(k);
    for (int i = 0; i < k; ++i) {
        double c = lo + (hi - lo) * i / (k - 1.0);
        grid->coord[i] = c;
        double prim = c;
        if (f == Family::rotated_gumbel) prim = 1.0 + std::exp(c);
        if (f == Family::clayton) prim = std::exp(c);
        grid->value[i] = fisher_quad(base.with_primary(prim), nodes, xt);
    }
    return grid;
}

double grid_lookup(const FisherGrid& g, double c) {
    if (c <= g.coord.front()) return g.value.front();
    if (c >= g.coord.back()) return g.value.back();
    auto it = std::upper_bound(g.coord.begin(), g.coord.end(), c);
    std::size_t i = static_cast<std::size_t>(it - g.coord.begin()) - 1;
    double t = (c - g.coord[i]) / (g.coord[i + 1] - g.coord[i]);
    return (1.0 - t) * g.value[i] + t * g.value[i + 1];
}

}  // namespace

double fisher_info(const Params& p) {
    p.validate();
    if (p.family == Family::sjc)
        throw std::domain_error("fisher_info: sjc has no scalar dynamic parameter");

    static std::mutex mu;
    static std::map<std::pair<int, double>, std::shared_ptr<FisherGrid>> cache;
    static std::deque<std::pair<int, double>> order;
    const double eta_key = p.family == Family::student_t ? p.eta : 0.0;
    const std::pair<int, double> key{static_cast<int>(p.family), eta_key};

    std::shared_ptr<FisherGrid> grid;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) grid = it->second;
    }
    if (!grid) {
        grid = build_fisher_grid(p.family, eta_key);
        std::lock_guard<std::mutex> lock(mu);
        auto [it, inserted] = cache.emplace(key, grid);
        if (inserted) {
            order.push_back(key);
            if (order.size() > 64) {
                cache.erase(order.front());
                order.pop_front();
            }
        } else {
            grid = it->second;
        }
    }
    double c = p.primary();
    if (p.family == Family::rotated_gumbel) c = std::log(std::max(p.delta - 1.0, 1e-12));
    if (p.family == Family::clayton) c = std::log(std::max(p.theta, 1e-12));
    return std::max(grid_lookup(*grid, c), kFisherFloor);
}

// ------------------------------------------------------- tail dependence --

std::pair<double, double> tail_dependence(const Params& p) {
    p.validate();
    switch (p.family) {
        case Family::normal: return {0.0, 0.0};
        case Family::student_t: {
            double lam = 2.0 * student_t_cdf(
                -std::sqrt((p.eta + 1.0) * (1.0 - p.rho) / (1.0 + p.rho)), p.eta + 1.0);
            return {lam, lam};
        }
        case Family::clayton: return {std::pow(2.0, -1.0 / p.theta), 0.0};
        case Family::rotated_gumbel: return {2.0 - std::pow(2.0, 1.0 / p.delta), 0.0};
        case Family::sjc: return {p.tau_lower, p.tau_upper};
    }
    return {0.0, 0.0};
}

// -------------------------------------------------------------- sampling --

std::pair<double, double> sample_one(const Params& p, Rng& rng) {
    switch (p.family) {
        case Family::normal: {
            double z1 = rng.normal(), z2 = rng.normal();
            double w = p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2;
            return {norm_cdf(z1), norm_cdf(w)};
        }
        case Family::student_t: {
            double z1 = rng.normal(), z2 = rng.normal();
            double w = p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2;
            double g = std::sqrt(p.eta / rng.chisq(p.eta));
            return {student_t_cdf(z1 * g, p.eta), student_t_cdf(w * g, p.eta)};
        }
        case Family::clayton: {
            double u = rng.uniform(), w = rng.uniform();
            return {u, clayton_cond_quantile(u, w, p.theta)};
        }
        case Family::rotated_gumbel:
        case Family::sjc: {
            double u = rng.uniform(), w = rng.uniform();
            return {u, conditional_quantile(p, u, w)};
        }
    }
    return {0.5, 0.5};
}

void sample(const Params& p, std::size_t n, Rng& rng, std::vector<double>& u,
            std::vector<double>& v) {
    p.validate();
    u.resize(n);
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto [a, b] = sample_one(p, rng);
        u[i] = a;
        v[i] = b;
    }
}

// -------------------------------------------------------------- prepared --

PreparedU prepare(Family f, double shape, std::span<const double> u1,
                  std::span<const double> u2) {
    if (u1.size() != u2.size()) throw std::domain_error("prepare: length mismatch");
    PreparedU d;
    d.family = f;
    d.shape = shape;
    const std::size_t n = u1.size();
    d.u.resize(n);
    d.v.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        double a = clip_u(u1[t]), b = clip_u(u2[t]);
        if (a != u1[t]) ++d.clipped;
        if (b != u2[t]) ++d.clipped;
        d.u[t] = a;
        d.v[t] = b;
    }
    switch (f) {
        case Family::normal:
            d.x.resize(n);
            d.y.resize(n);
            for (std::size_t t = 0; t < n; ++t) {
                d.x[t] = norm_quantile(d.u[t]);
                d.y[t] = norm_quantile(d.v[t]);
            }
            break;
        case Family::student_t:
            d.x.resize(n);
            d.y.resize(n);
            d.lx.resize(n);
            d.ly.resize(n);
            for (std::size_t t = 0; t < n; ++t) {
                d.x[t] = student_t_quantile(d.u[t], shape);
                d.y[t] = student_t_quantile(d.v[t], shape);
                d.lx[t] = std::log1p(d.x[t] * d.x[t] / shape);
                d.ly[t] = std::log1p(d.y[t] * d.y[t] / shape);
            }
            break;
        case Family::rotated_gumbel:
            d.x.resize(n);
            d.y.resize(n);
            for (std::size_t t = 0; t < n; ++t) {
                d.x[t] = -std::log(1.0 - d.u[t]);
                d.y[t] = -std::log(1.0 - d.v[t]);
            }
            break;
        case Family::clayton:
        case Family::sjc:
            break;
    }
    return d;
}

double logpdf_prepared(const PreparedU& d, std::size_t t, double primary) {
    switch (d.family) {
        case Family::normal: return normal_logpdf_xy(d.x[t], d.y[t], primary);
        case Family::student_t: {
            TConsts c = t_consts(d.shape);
            return t_logpdf_xy(d.x[t], d.y[t], primary, c, d.lx[t], d.ly[t]);
        }
        case Family::rotated_gumbel: return gumbel_logpdf_xt(d.x[t], d.y[t], primary);
        case Family::clayton: return clayton_logpdf_uv(d.u[t], d.v[t], primary);
        case Family::sjc: break;
    }
    throw std::domain_error("logpdf_prepared: unsupported family");
}

double score_prepared(const PreparedU& d, std::size_t t, double primary) {
    switch (d.family) {
        case Family::normal: return normal_score_xy(d.x[t], d.y[t], primary);
        case Family::student_t: return t_score_xy(d.x[t], d.y[t], primary, d.shape);
        case Family::rotated_gumbel: {
            // 5-point stencil on the prepared gumbel log density
            double x0 = primary;
            double h = 1e-4 * std::max(1.0, std::fabs(x0));
            double base = std::clamp(x0, 1.0 + 1e-9 + 2.0 * h, kDeltaMax - 2.0 * h);
            auto f = [&](double del) { return gumbel_logpdf_xt(d.x[t], d.y[t], del); };
            return (f(base - 2.0 * h) - 8.0 * f(base - h) + 8.0 * f(base + h) -
                    f(base + 2.0 * h)) / (12.0 * h);
        }
        case Family::clayton: return clayton_score_uv(d.u[t], d.v[t], primary);
        case Family::sjc: break;
    }
    throw std::domain_error("score_prepared: unsupported family");
}

// ------------------------------------------------------------ gas filter --

DependencePath gas_filter_prepared(const GasParams& gp, const PreparedU& d, double kappa0) {
    if (!supports_gas(gp.family))
        throw std::domain_error("gas_filter: family " + family_name(gp.family) +
                                " admits constant parameters only");
    const std::size_t n = d.size();
    DependencePath path;
    path.kappa.resize(n);
    path.delta.resize(n);
    path.score.resize(n);
    path.lambda_lower.resize(n);
    path.lambda_upper.resize(n);
    path.loglik_t.resize(n);
    path.clipped_inputs = d.clipped;

    Params base;
    base.family = gp.family;
    base.eta = gp.shape;

    double kappa = kappa0;
    if (!std::isfinite(kappa)) throw std::domain_error("gas_filter: kappa0 must be finite");
    for (std::size_t t = 0; t < n; ++t) {
        if (std::fabs(kappa) > kKappaClamp) {
            kappa = std::clamp(kappa, -kKappaClamp, kKappaClamp);
            ++path.clamped_steps;
        }
        double delta = link_inv(gp.family, kappa);
        path.kappa[t] = kappa;
        path.delta[t] = delta;
        double ll = logpdf_prepared(d, t, delta);
        path.loglik_t[t] = ll;
        path.loglik += ll;
        double s = score_prepared(d, t, delta);
        path.score[t] = s;
        Params pt = base.with_primary(delta);
        auto lam = tail_dependence(pt);
        path.lambda_lower[t] = lam.first;
        path.lambda_upper[t] = lam.second;
        double info = fisher_info(pt);
        kappa = gp.w + gp.beta * kappa + gp.alpha * s / std::sqrt(info);
    }
    path.kappa_next = std::clamp(kappa, -kKappaClamp, kKappaClamp);
    return path;
}

DependencePath gas_filter(const GasParams& gp, std::span<const double> u1,
                          std::span<const double> u2, double kappa0) {
    return gas_filter_prepared(gp, prepare(gp.family, gp.shape, u1, u2), kappa0);
}

GasSimulation simulate_gas(const GasParams& gp, std::size_t n, double kappa0, Rng& rng) {
    if (!supports_gas(gp.family))
        throw std::domain_error("simulate_gas: family " + family_name(gp.family) +
                                " admits constant parameters only");
    GasSimulation sim;
    sim.u1.resize(n);
    sim.u2.resize(n);
    sim.kappa.resize(n);
    sim.delta.resize(n);
    Params base;
    base.family = gp.family;
    base.eta = gp.shape;
    double kappa = kappa0;
    for (std::size_t t = 0; t < n; ++t) {
        kappa = std::clamp(kappa, -kKappaClamp, kKappaClamp);
        double delta = link_inv(gp.family, kappa);
        Params pt = base.with_primary(delta);
        auto [u, v] = sample_one(pt, rng);
        u = clip_u(u);
        v = clip_u(v);
        sim.u1[t] = u;
        sim.u2[t] = v;
        sim.kappa[t] = kappa;
        sim.delta[t] = delta;
        double s = score(pt, u, v);
        double info = fisher_info(pt);
        kappa = gp.w + gp.beta * kappa + gp.alpha * s / std::sqrt(info);
    }
    return sim;
}

// ------------------------------------------------------------ rosenblatt --

RosenblattResult rosenblatt(const Params& p, std::span<const double> u1,
                            std::span<const double> u2,
                            std::span<const double> primary_path) {
    if (u1.size() != u2.size()) throw std::domain_error("rosenblatt: length mismatch");
    if (!primary_path.empty() && primary_path.size() != u1.size())
        throw std::domain_error("rosenblatt: parameter path not aligned with data");
    RosenblattResult r;
    const std::size_t n = u1.size();
    r.v1.resize(n);
    r.v2.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        Params pt = primary_path.empty() ? p : p.with_primary(primary_path[t]);
        double a = clip_u(u1[t]), b = clip_u(u2[t]);
        r.v1[t] = a;
        r.v2[t] = conditional_cdf(pt, a, b);
    }
    return r;
}

void write_dependence_path_csv(const DependencePath& path,
                               const std::vector<std::string>& dates, std::ostream& out,
                               const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "date,kappa,delta,score,lambdaL,lambdaU\n";
    char buf[256];
    for (std::size_t t = 0; t < path.kappa.size(); ++t) {
        std::string date = t < dates.size() ? dates[t] : std::to_string(t);
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", date.c_str(),
                      path.kappa[t], path.delta[t], path.score[t], path.lambda_lower[t],
                      path.lambda_upper[t]);
        out << buf;
    }
}

}  // namespace rgcop::copula
