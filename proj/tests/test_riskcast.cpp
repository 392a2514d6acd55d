#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rgcop/riskcast.hpp"
#include "rgcop/special.hpp"

using namespace rgcop;
using copula::Family;
using copula::Params;
using riskcast::ForecastDraws;
using riskcast::ForecastState;

namespace {

// Joint fit with standard-normal-like margins (huge nu, zero skew) and a
// constant normal copula, assembled without estimation.
estimate::JointFit normal_world(double rho) {
    margins::MarginSpec spec;
    spec.mean_lags = 0;
    spec.variance_model = margins::VarianceModel::realized_garch;
    spec.innovation = margins::Innovation::skew_t;
    auto margin = margins::MarginFit::make(spec, {{"mu", 0.0},
                                                  {"omega", 0.0},
                                                  {"beta", 0.0},
                                                  {"gamma", 0.0},
                                                  {"xi", 0.0},
                                                  {"phi", 1.0},
                                                  {"tau1", 0.0},
                                                  {"tau2", 0.0},
                                                  {"sigma_u", 0.4},
                                                  {"nu", 1e7},
                                                  {"lambda", 0.0}});
    estimate::JointFit jf;
    jf.margin1 = margin;
    jf.margin2 = margin;
    jf.mode = estimate::MarginsMode::parametric;
    jf.cop.family = Family::normal;
    jf.cop.time_varying = false;
    jf.cop.params = Params::normal(rho);
    jf.cop.param_names = {"rho"};
    jf.cop.param_values = {rho};
    jf.cop.converged = true;
    return jf;
}

ForecastState unit_state(double delta) {
    ForecastState st;
    st.mean1 = st.mean2 = 0.0;
    st.var1 = st.var2 = 1.0;
    st.delta = delta;
    return st;
}

margins::MarginFit rg_generator() {
    margins::MarginSpec spec;
    spec.mean_lags = 0;
    spec.variance_model = margins::VarianceModel::realized_garch;
    spec.innovation = margins::Innovation::skew_t;
    return margins::MarginFit::make(spec, {{"mu", 0.0},
                                           {"omega", 0.05},
                                           {"beta", 0.72},
                                           {"gamma", 0.22},
                                           {"xi", -0.3},
                                           {"phi", 1.05},
                                           {"tau1", -0.06},
                                           {"tau2", 0.10},
                                           {"sigma_u", 0.4},
                                           {"nu", 10.0},
                                           {"lambda", -0.1}});
}

}  // namespace

TEST_CASE("simulate_joint: independence copula decorrelates the margins") {
    estimate::JointFit jf = normal_world(0.0);
    Rng rng(401);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(0.0), 40000, rng);
    CHECK(std::fabs(oracles::correlation(d.x1, d.x2)) < 3.0 / std::sqrt(40000.0));
}

TEST_CASE("simulate_joint: degenerate weights reproduce asset one") {
    estimate::JointFit jf = normal_world(0.3);
    Rng rng(402);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(0.3), 2000, rng, 1.0, 0.0);
    for (std::size_t i = 0; i < d.y.size(); ++i) CHECK(d.y[i] == d.x1[i]);
}

TEST_CASE("simulate_joint: portfolio variance follows (1+rho)/2") {
    estimate::JointFit jf = normal_world(0.5);
    Rng rng(403);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(0.5), 100000, rng);
    CHECK(oracles::variance(d.y) == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("simulate_joint: refuses a non-converged fit") {
    estimate::JointFit jf = normal_world(0.2);
    jf.cop.converged = false;
    Rng rng(404);
    CHECK_THROWS_AS(riskcast::simulate_joint(jf, unit_state(0.2), 2000, rng), std::domain_error);
}

TEST_CASE("simulate_joint: PITs of the draws carry the copula dependence") {
    const double rho = 0.6;
    estimate::JointFit jf = normal_world(rho);
    Rng rng(405);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(rho), 100000, rng);
    // Rank (Spearman) correlation of the draws against the normal-copula
    // implied value 6/pi asin(rho/2).
    std::vector<double> u = margins::pit_empirical(d.x1);
    std::vector<double> v = margins::pit_empirical(d.x2);
    double implied = 6.0 / M_PI * std::asin(0.5 * rho);
    CHECK(oracles::correlation(u, v) == doctest::Approx(implied).epsilon(0.03 / implied));
}

TEST_CASE("var_forecast: normal quantile oracle and monotonicity") {
    estimate::JointFit jf = normal_world(0.0);
    Rng rng(406);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(0.0), 100000, rng, 1.0, 0.0);
    CHECK(riskcast::var_forecast(d, 0.05) == doctest::Approx(-1.645).epsilon(0.02 / 1.645));
    CHECK(std::fabs(riskcast::var_forecast(d, 0.5)) < 0.02);
    CHECK(riskcast::var_forecast(d, 0.01) <= riskcast::var_forecast(d, 0.05));
}

TEST_CASE("expected shortfall: closed-form normal oracle") {
    estimate::JointFit jf = normal_world(0.0);
    Rng rng(407);
    ForecastDraws d = riskcast::simulate_joint(jf, unit_state(0.0), 1000000, rng, 1.0, 0.0);
    double z = special::norm_quantile(0.05);
    double oracle = -special::norm_pdf(z) / 0.05;  // -2.0627
    CHECK(riskcast::expected_shortfall(d, 0.05) == doctest::Approx(oracle).epsilon(0.01 / 2.06));
    CHECK(riskcast::expected_shortfall(d, 0.05) <= riskcast::var_forecast(d, 0.05));
}

TEST_CASE("expected shortfall: constant draws and the tail-count guard") {
    ForecastDraws d;
    d.y.assign(500, -0.42);
    CHECK(riskcast::expected_shortfall(d, 0.2) == doctest::Approx(-0.42));
    ForecastDraws tiny;
    tiny.y.assign(100, 0.0);
    for (std::size_t i = 0; i < tiny.y.size(); ++i) tiny.y[i] = static_cast<double>(i);
    CHECK_THROWS_AS(riskcast::expected_shortfall(tiny, 0.05), std::domain_error);
}

TEST_CASE("cdb: degenerate weights collapse the measure to zero") {
    estimate::JointFit jf = normal_world(0.4);
    Rng rng(408);
    riskcast::CdbPoint p = riskcast::cdb(jf, unit_state(0.4), 1.0, 0.0, 0.05, 20000, rng);
    CHECK(p.cdb == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.es == doctest::Approx(p.es_upper).epsilon(1e-12));
}

TEST_CASE("cdb: near-comonotone identical margins have almost no benefit") {
    estimate::JointFit jf = normal_world(0.999);
    Rng rng(409);
    riskcast::CdbPoint p = riskcast::cdb(jf, unit_state(0.999), 0.5, 0.5, 0.05, 100000, rng);
    CHECK(p.cdb < 0.02);
}

TEST_CASE("cdb: decreases as the copula correlation rises, stays in [0,1]") {
    double prev = 2.0;
    for (double rho : {0.0, 0.3, 0.6, 0.9}) {
        estimate::JointFit jf = normal_world(rho);
        Rng rng(410);  // shared seed across the grid
        riskcast::CdbPoint p = riskcast::cdb(jf, unit_state(rho), 0.5, 0.5, 0.05, 100000, rng);
        CHECK(p.cdb >= -0.01);
        CHECK(p.cdb <= 1.01);
        CHECK(p.cdb < prev);
        CHECK(p.es_lower <= p.es + 1e-9);
        CHECK(p.es <= p.es_upper + 1e-9);
        prev = p.cdb;
    }
}

TEST_CASE("cdb_constant_band: brackets the mean and collapses at rho=1") {
    Rng rng(411);
    riskcast::CdbBand band = riskcast::cdb_constant_band(0.3, 600, 1000, 0.05, 0.90, rng);
    CHECK(band.lo <= band.mean);
    CHECK(band.mean <= band.hi);
    Rng rng2(412);
    riskcast::CdbBand tight = riskcast::cdb_constant_band(0.9999, 600, 1000, 0.05, 0.90, rng2);
    CHECK(tight.hi < 0.05);
}

TEST_CASE("var_backtest_series: coverage, determinism, day count") {
    // Simulated world: realized-GARCH margins linked by a constant normal
    // copula; forecasts made with the true parameters.
    estimate::CopulaSpec cspec{Family::normal, false};
    estimate::JointSimulation sim = estimate::simulate_joint_dgp(
        rg_generator(), rg_generator(), cspec, Params::normal(0.4), {}, 1300, 300, 413);
    estimate::JointFit jf;
    jf.margin1 = rg_generator();
    jf.margin2 = rg_generator();
    jf.mode = estimate::MarginsMode::parametric;
    jf.cop.family = Family::normal;
    jf.cop.time_varying = false;
    jf.cop.params = Params::normal(0.4);
    jf.cop.param_names = {"rho"};
    jf.cop.param_values = {0.4};
    jf.cop.converged = true;

    std::vector<double> alphas{0.01, 0.05, 0.95};
    riskcast::BacktestSeries bt =
        riskcast::var_backtest_series(jf, sim.panel, 700, alphas, 2000, 414);
    CHECK(bt.days.size() == sim.panel.size() - 700);

    riskcast::BacktestSeries bt2 =
        riskcast::var_backtest_series(jf, sim.panel, 700, alphas, 2000, 414);
    CHECK(bt.var == bt2.var);  // bit-exact reproducibility

    int hits = 0;
    for (std::size_t i = 0; i < bt.days.size(); ++i)
        if (bt.realized[i] < bt.var[1][i]) ++hits;
    double cov = static_cast<double>(hits) / bt.days.size();
    CHECK(cov > 0.03);
    CHECK(cov < 0.07);
}

TEST_CASE("var_backtest_series: oos_start validation") {
    estimate::JointFit jf = normal_world(0.2);
    marketdata::DailyPanel panel;
    for (int t = 0; t < 50; ++t) {
        panel.dates.push_back(marketdata::civil_from_days(18000 + t));
        panel.r1.push_back(0.01);
        panel.r2.push_back(-0.01);
        panel.rv1.push_back(1e-4);
        panel.rv2.push_back(1e-4);
        panel.rcorr.push_back(0.0);
        panel.bars.push_back(78);
    }
    std::vector<double> alphas{0.05};
    CHECK_THROWS_AS(riskcast::var_backtest_series(jf, panel, 500, alphas, 1000, 1),
                    std::domain_error);
}
