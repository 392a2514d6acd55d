#include "rgcop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rgcop/backtest.hpp"
#include "rgcop/diagnostics.hpp"
#include "rgcop/riskcast.hpp"

namespace rgcop::cli {

namespace fs = std::filesystem;
using marketdata::DailyPanel;

namespace {

// Stage seed tags.
enum SeedTag {
    kSeedMargins = 11,
    kSeedCopula = 23,
    kSeedGof = 37,
    kSeedForecast = 41,
    kSeedCdb = 59,
    kSeedDq = 67,
    kSeedBootstrap = 83,
};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

struct CopulaSpecEntry {
    estimate::CopulaSpec spec;
    std::string tag;  // file-name-friendly identifier
};

std::vector<CopulaSpecEntry> copula_specs(const RunConfig& cfg) {
    std::vector<CopulaSpecEntry> out;
    for (std::string item : cfg.get_list("copula.families")) {
        CopulaSpecEntry e;
        std::string name = item;
        const std::string gas_suffix = "-gas";
        if (name.size() > gas_suffix.size() &&
            name.compare(name.size() - gas_suffix.size(), gas_suffix.size(), gas_suffix) == 0) {
            e.spec.time_varying = true;
            name = name.substr(0, name.size() - gas_suffix.size());
        }
        e.spec.family = copula::family_from_name(name);
        e.tag = copula::family_name(e.spec.family) + (e.spec.time_varying ? "-gas" : "");
        std::replace(e.tag.begin(), e.tag.end(), '-', '_');
        out.push_back(e);
    }
    if (out.empty()) throw ConfigError("copula.families must list at least one family");
    return out;
}

margins::MarginSpec margin_spec(const RunConfig& cfg, int which) {
    margins::MarginSpec spec;
    std::string sfx = std::to_string(which);
    std::string model = cfg.get("margins.model" + sfx, "realized-garch");
    if (model == "realized-garch") spec.variance_model = margins::VarianceModel::realized_garch;
    else if (model == "gjr-garch") spec.variance_model = margins::VarianceModel::gjr_garch;
    else throw ConfigError("margins.model" + sfx + ": unknown model " + model);
    std::string lags = cfg.get("margins.mean_lags" + sfx, "0");
    spec.mean_lags = lags == "auto" ? margins::kAutoLags : std::stoi(lags);
    std::string innov = cfg.get("margins.innovation" + sfx, "skew-t");
    if (innov == "skew-t") spec.innovation = margins::Innovation::skew_t;
    else if (innov == "student-t") spec.innovation = margins::Innovation::student_t;
    else throw ConfigError("margins.innovation" + sfx + ": unknown innovation " + innov);
    return spec;
}

estimate::MarginsMode margins_mode(const RunConfig& cfg) {
    std::string mode = cfg.get("copula.mode", "parametric");
    if (mode == "parametric") return estimate::MarginsMode::parametric;
    if (mode == "empirical") return estimate::MarginsMode::empirical;
    throw ConfigError("copula.mode must be parametric or empirical");
}

DailyPanel load_panel(const RunConfig& cfg, bool scaled = true) {
    std::string path = cfg.path_in_out("panel.csv");
    if (cfg.has("data.panel")) path = cfg.get("data.panel");
    std::ifstream in(path);
    if (!in) throw ConfigError("panel file not found: " + path + " (run ingest first)");
    DailyPanel p = marketdata::read_panel_csv(in);
    if (p.size() == 0) throw ConfigError("panel file is empty: " + path);
    if (scaled) p.scale_returns(cfg.get_num("data.returns_scale", 100.0));
    return p;
}

std::size_t split_index(const RunConfig& cfg, const DailyPanel& panel) {
    std::string split = cfg.require("forecast.split_date");
    marketdata::Date d = marketdata::date_from_iso(split);
    if (d <= panel.dates.front() || d >= panel.dates.back())
        throw ConfigError("forecast.split_date " + split + " lies outside the panel range " +
                          marketdata::to_iso(panel.dates.front()) + ".." +
                          marketdata::to_iso(panel.dates.back()));
    std::size_t idx = 0;
    while (idx < panel.size() && !(d < panel.dates[idx])) ++idx;
    return idx;  // first out-of-sample index
}

DailyPanel panel_head(const DailyPanel& p, std::size_t n) {
    DailyPanel h;
    h.dates.assign(p.dates.begin(), p.dates.begin() + n);
    h.r1.assign(p.r1.begin(), p.r1.begin() + n);
    h.rv1.assign(p.rv1.begin(), p.rv1.begin() + n);
    h.r2.assign(p.r2.begin(), p.r2.begin() + n);
    h.rv2.assign(p.rv2.begin(), p.rv2.begin() + n);
    h.rcorr.assign(p.rcorr.begin(), p.rcorr.begin() + n);
    h.bars.assign(p.bars.begin(), p.bars.begin() + n);
    return h;
}

margins::MarginFit load_margin(const RunConfig& cfg, int which) {
    std::string path = cfg.path_in_out("margin" + std::to_string(which) + ".json");
    if (!fs::exists(path))
        throw ConfigError("margin fit not found: " + path + " (run fit-margins first)");
    return margins::MarginFit::from_json(read_file(path));
}

estimate::CopulaFit load_copula(const RunConfig& cfg, const std::string& tag) {
    std::string path = cfg.path_in_out("copula_" + tag + ".json");
    if (!fs::exists(path))
        throw ConfigError("copula fit not found: " + path + " (run fit-copula first)");
    return estimate::CopulaFit::from_json(read_file(path));
}

// Assembles the joint fit from stored margin and copula artifacts.
estimate::JointFit assemble_joint(const RunConfig& cfg, const estimate::CopulaFit& cop) {
    estimate::JointFit jf;
    jf.mode = margins_mode(cfg);
    jf.margin1 = load_margin(cfg, 1);
    jf.margin2 = load_margin(cfg, 2);
    jf.cop = cop;
    const int p1 = jf.margin1.spec.mean_lags, p2 = jf.margin2.spec.mean_lags;
    const int pmax = std::max(p1, p2);
    auto align = [&](const std::vector<double>& s, int p) {
        return std::vector<double>(s.begin() + (pmax - p), s.end());
    };
    if (jf.mode == estimate::MarginsMode::parametric) {
        jf.u1 = align(jf.margin1.u, p1);
        jf.u2 = align(jf.margin2.u, p2);
    } else {
        jf.u1 = margins::pit_empirical(align(jf.margin1.z, p1));
        jf.u2 = margins::pit_empirical(align(jf.margin2.z, p2));
    }
    jf.total_loglik = jf.margin1.loglik_joint + jf.margin2.loglik_joint + jf.cop.loglik;
    return jf;
}

nlohmann::json provenance_json(const RunConfig& cfg) {
    return {{"version", kVersion}, {"config", cfg.fingerprint}, {"seed", cfg.seed}};
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open csv: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
}

double RunConfig::get_num(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    return it->second == "true" || it->second == "1" || it->second == "yes";
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string raw = get(key);
    std::string cur;
    for (char c : raw + ",") {
        if (c == ',') {
            std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

std::string RunConfig::path_in_out(const std::string& name) const {
    return (fs::path(out_dir) / name).string();
}

std::string RunConfig::provenance() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "rgcop v%s config=%s seed=%llu", kVersion,
                  fingerprint.c_str(), static_cast<unsigned long long>(seed));
    return buf;
}

std::uint64_t RunConfig::stage_seed(int stage_tag) const {
    return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(stage_tag + 1));
}

void RunConfig::require_seed() const {
    if (!seed_set)
        throw ConfigError("no seed configured: set [run] seed or pass --seed "
                          "(stochastic stages refuse to run without one)");
}

RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    std::string content = read_file(path);
    std::istringstream in(content);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any [section]");
        cfg.kv[section + "." + key] = value;
    }
    if (cfg.has("run.seed")) {
        cfg.seed = static_cast<std::uint64_t>(std::stoull(cfg.get("run.seed")));
        cfg.seed_set = true;
    }
    cfg.out_dir = cfg.get("run.out_dir", "out");
    cfg.threads = cfg.get_int("run.threads", 1);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(content)));
    cfg.fingerprint = buf;
    return cfg;
}

// ------------------------------------------------------------- commands --

void cmd_ingest(const RunConfig& cfg) {
    std::string t1 = cfg.require("data.ticks1");
    std::string t2 = cfg.require("data.ticks2");
    if (!fs::exists(t1)) throw ConfigError("tick file not found: " + t1);
    if (!fs::exists(t2)) throw ConfigError("tick file not found: " + t2);

    marketdata::TickFormat fmt;
    std::string delim = cfg.get("data.delimiter", ",");
    fmt.delimiter = delim.empty() ? ',' : delim[0];
    fmt.timestamp_format = cfg.get("data.timestamp_format", "%Y-%m-%d %H:%M:%S");
    fmt.timestamp_col = cfg.get_int("data.timestamp_col", 0);
    fmt.price_col = cfg.get_int("data.price_col", 1);
    fmt.has_header = cfg.get_bool("data.has_header", true);

    marketdata::SessionWindow session;
    auto parse_minute = [](const std::string& s) {
        int h = 0, m = 0;
        if (std::sscanf(s.c_str(), "%d:%d", &h, &m) != 2)
            throw ConfigError("bad session time (expect HH:MM): " + s);
        return h * 60 + m;
    };
    session.open_minute = parse_minute(cfg.get("data.session_open", "14:30"));
    session.close_minute = parse_minute(cfg.get("data.session_close", "21:00"));
    session.bar_minutes = cfg.get_int("data.bar_minutes", 5);

    marketdata::Calendar cal;
    if (cfg.has("data.holidays")) cal = marketdata::Calendar::load(cfg.get("data.holidays"));

    std::ifstream f1(t1), f2(t2);
    marketdata::TickSeries s1 = marketdata::parse_ticks(f1, fmt);
    marketdata::TickSeries s2 = marketdata::parse_ticks(f2, fmt);

    marketdata::BuildReport report;
    std::vector<marketdata::IntradayGrid> grids = marketdata::build_grid(s1, s2, session, cal, &report);

    fs::create_directories(cfg.out_dir);
    nlohmann::json jrep;
    jrep["_provenance"] = provenance_json(cfg);
    jrep["rejected_rows_1"] = s1.rejected_rows;
    jrep["rejected_rows_2"] = s2.rejected_rows;
    jrep["days_dropped_gaps"] = report.days_dropped_gaps;
    jrep["days_excluded_calendar"] = report.days_excluded_calendar;
    jrep["empty_overlap"] = report.empty_overlap;
    jrep["days_kept"] = grids.size();

    if (grids.empty()) {
        std::cerr << "warning: no overlapping trading days after filtering\n";
        DailyPanel empty;
        std::ofstream out(cfg.path_in_out("panel.csv"));
        marketdata::write_panel_csv(empty, out, cfg.provenance());
        write_file(cfg.path_in_out("ingest_report.json"), jrep.dump(2));
        return;
    }

    DailyPanel panel = marketdata::daily_panel(grids);
    {
        std::ofstream out(cfg.path_in_out("panel.csv"));
        marketdata::write_panel_csv(panel, out, cfg.provenance());
    }
    write_file(cfg.path_in_out("ingest_report.json"), jrep.dump(2));

    // Plot data: normalized prices and annualized vol (figure-1 layout),
    // plus the per-day realized correlation.
    {
        std::ofstream out(cfg.path_in_out("plot_prices_vol.csv"));
        out << "# " << cfg.provenance() << "\n";
        out << "date,norm_price1,norm_price2,annvol1,annvol2\n";
        double c1 = 0.0, c2 = 0.0;
        char buf[256];
        for (std::size_t t = 0; t < panel.size(); ++t) {
            c1 += panel.r1[t];
            c2 += panel.r2[t];
            std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n",
                          marketdata::to_iso(panel.dates[t]).c_str(), std::exp(c1), std::exp(c2),
                          marketdata::annualize_vol(panel.rv1[t]),
                          marketdata::annualize_vol(panel.rv2[t]));
            out << buf;
        }
    }
    {
        std::ofstream out(cfg.path_in_out("realized_corr.csv"));
        out << "# " << cfg.provenance() << "\n";
        out << "date,rcorr\n";
        char buf[128];
        for (std::size_t t = 0; t < panel.size(); ++t) {
            std::snprintf(buf, sizeof buf, "%s,%.17g\n",
                          marketdata::to_iso(panel.dates[t]).c_str(), panel.rcorr[t]);
            out << buf;
        }
    }
    std::cout << "ingest: " << panel.size() << " days ("
              << report.days_dropped_gaps << " dropped, "
              << report.days_excluded_calendar << " excluded)\n";
}

void cmd_fit_margins(const RunConfig& cfg) {
    cfg.require_seed();
    DailyPanel panel = load_panel(cfg);
    std::size_t split = split_index(cfg, panel);
    DailyPanel in_sample = panel_head(panel, split);

    margins::OptimizerConfig mcfg;
    mcfg.n_starts = cfg.get_int("margins.starts", 5);
    mcfg.seed = cfg.stage_seed(kSeedMargins);

    fs::create_directories(cfg.out_dir);
    for (int which = 1; which <= 2; ++which) {
        margins::MarginSpec spec = margin_spec(cfg, which);
        const std::vector<double>& y = which == 1 ? in_sample.r1 : in_sample.r2;
        const std::vector<double>& rv = which == 1 ? in_sample.rv1 : in_sample.rv2;
        margins::MarginFit fit =
            spec.variance_model == margins::VarianceModel::realized_garch
                ? margins::fit_realized_garch(y, rv, spec, mcfg)
                : margins::fit_gjr_garch(y, spec, mcfg);
        nlohmann::json j = nlohmann::json::parse(fit.to_json());
        j["_provenance"] = provenance_json(cfg);
        write_file(cfg.path_in_out("margin" + std::to_string(which) + ".json"), j.dump(2));
        std::cout << "margin " << which << ": loglik " << fit.loglik_joint << " (partial "
                  << fit.loglik_partial << ")\n";
    }
}

void cmd_fit_copula(const RunConfig& cfg) {
    cfg.require_seed();
    DailyPanel panel = load_panel(cfg);
    std::size_t split = split_index(cfg, panel);
    DailyPanel in_sample = panel_head(panel, split);

    margins::MarginFit m1 = load_margin(cfg, 1);
    margins::MarginFit m2 = load_margin(cfg, 2);
    const int p1 = m1.spec.mean_lags, p2 = m2.spec.mean_lags;
    const int drop = std::max(p1, p2);
    auto align = [&](const std::vector<double>& s, int p) {
        return std::vector<double>(s.begin() + (drop - p), s.end());
    };
    std::vector<double> u1, u2;
    if (margins_mode(cfg) == estimate::MarginsMode::parametric) {
        u1 = align(m1.u, p1);
        u2 = align(m2.u, p2);
    } else {
        u1 = margins::pit_empirical(align(m1.z, p1));
        u2 = margins::pit_empirical(align(m2.z, p2));
    }

    estimate::FitConfig ccfg;
    ccfg.n_starts = cfg.get_int("copula.starts", 3);

    int family_idx = 0;
    for (const auto& entry : copula_specs(cfg)) {
        estimate::FitConfig fam_cfg = ccfg;
        fam_cfg.seed = cfg.stage_seed(kSeedCopula) + static_cast<std::uint64_t>(family_idx);
        ++family_idx;
        estimate::CopulaFit fit =
            entry.spec.time_varying
                ? estimate::fit_gas_copula(u1, u2, entry.spec.family, fam_cfg)
                : estimate::fit_constant_copula(u1, u2, entry.spec.family, fam_cfg);
        nlohmann::json j = nlohmann::json::parse(fit.to_json());
        j["_provenance"] = provenance_json(cfg);
        write_file(cfg.path_in_out("copula_" + entry.tag + ".json"), j.dump(2));
        std::cout << "copula " << entry.tag << ": loglik " << fit.loglik << "\n";

        if (fit.time_varying) {
            std::vector<std::string> dates;
            for (std::size_t t = drop; t < in_sample.size(); ++t)
                dates.push_back(marketdata::to_iso(in_sample.dates[t]));
            std::ofstream out(cfg.path_in_out("dependence_" + entry.tag + ".csv"));
            copula::write_dependence_path_csv(fit.path, dates, out, cfg.provenance());

            std::ofstream plot(cfg.path_in_out("plot_dependence_" + entry.tag + ".csv"));
            plot << "# " << cfg.provenance() << "\n";
            plot << "date,delta,lambdaL,lambdaU,rcorr\n";
            char buf[256];
            for (std::size_t i = 0; i < fit.path.delta.size(); ++i) {
                std::size_t t = i + drop;
                std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n",
                              marketdata::to_iso(in_sample.dates[t]).c_str(), fit.path.delta[i],
                              fit.path.lambda_lower[i], fit.path.lambda_upper[i],
                              in_sample.rcorr[t]);
                plot << buf;
            }
        }
    }
}

void cmd_gof(const RunConfig& cfg) {
    cfg.require_seed();
    diagnostics::GofConfig gcfg;
    gcfg.n_sim = cfg.get_int("gof.n_sim", 1000);
    gcfg.seed = cfg.stage_seed(kSeedGof);
    gcfg.threads = cfg.threads;

    nlohmann::json out;
    out["_provenance"] = provenance_json(cfg);
    for (const auto& entry : copula_specs(cfg)) {
        estimate::CopulaFit cop = load_copula(cfg, entry.tag);
        estimate::JointFit jf = assemble_joint(cfg, cop);
        diagnostics::GofReport rep = diagnostics::gof_test(cop, jf.u1, jf.u2, gcfg);
        out[entry.tag] = {{"ks_stat", rep.ks_stat}, {"ks_p", rep.ks_p},
                          {"cvm_stat", rep.cvm_stat}, {"cvm_p", rep.cvm_p},
                          {"n_sim", rep.n_sim}, {"failed_sims", rep.failed_sims},
                          {"partial", rep.partial}};
        std::cout << "gof " << entry.tag << ": KS p=" << rep.ks_p << " CvM p=" << rep.cvm_p
                  << "\n";
    }
    write_file(cfg.path_in_out("gof.json"), out.dump(2));
}

namespace {

std::vector<double> forecast_alphas(const RunConfig& cfg) {
    std::vector<double> alphas;
    for (const std::string& a : cfg.get_list("forecast.alphas")) alphas.push_back(std::stod(a));
    if (alphas.empty()) alphas = {0.01, 0.05, 0.1, 0.9, 0.95, 0.99};
    return alphas;
}

std::uint64_t family_seed(const RunConfig& cfg, int stage_tag, int family_idx) {
    return cfg.stage_seed(stage_tag) + 1000003ULL * static_cast<std::uint64_t>(family_idx);
}

}  // namespace

void cmd_forecast(const RunConfig& cfg) {
    cfg.require_seed();
    DailyPanel panel = load_panel(cfg);
    std::size_t split = split_index(cfg, panel);
    std::vector<double> alphas = forecast_alphas(cfg);
    std::size_t n_paths = static_cast<std::size_t>(cfg.get_int("forecast.n_paths", 10000));

    int family_idx = 0;
    for (const auto& entry : copula_specs(cfg)) {
        estimate::CopulaFit cop = load_copula(cfg, entry.tag);
        estimate::JointFit jf = assemble_joint(cfg, cop);
        std::uint64_t seed = family_seed(cfg, kSeedForecast, family_idx++);
        riskcast::BacktestSeries bt =
            riskcast::var_backtest_series(jf, panel, split, alphas, n_paths, seed);

        std::ofstream out(cfg.path_in_out("forecast_" + entry.tag + ".csv"));
        out << "# " << cfg.provenance() << " stage_seed=" << seed << "\n";
        out << "date,alpha,var,es,cdb\n";
        char buf[256];
        for (std::size_t i = 0; i < bt.days.size(); ++i) {
            std::size_t t = bt.days[i];
            for (std::size_t a = 0; a < alphas.size(); ++a) {
                std::snprintf(buf, sizeof buf, "%s,%g,%.17g,%.17g,%.17g\n",
                              marketdata::to_iso(panel.dates[t]).c_str(), alphas[a],
                              bt.var[a][i], bt.es[a][i], bt.cdb[a][i]);
                out << buf;
            }
        }
        std::cout << "forecast " << entry.tag << ": " << bt.days.size() << " days x "
                  << alphas.size() << " quantiles\n";
    }
}

namespace {

struct ForecastFile {
    // [alpha] -> per-day quantile forecasts, plus shared dates
    std::vector<double> alphas;
    std::vector<std::string> dates;
    std::vector<std::vector<double>> var, es, cdb;
};

ForecastFile read_forecast(const std::string& path) {
    ForecastFile f;
    auto rows = read_csv_rows(path);
    std::map<double, std::size_t> alpha_ix;
    for (std::size_t i = 1; i < rows.size(); ++i) {  // rows[0] is the header
        const auto& r = rows[i];
        if (r.size() < 5) continue;
        double a = std::stod(r[1]);
        auto it = alpha_ix.find(a);
        if (it == alpha_ix.end()) {
            it = alpha_ix.emplace(a, f.alphas.size()).first;
            f.alphas.push_back(a);
            f.var.emplace_back();
            f.es.emplace_back();
            f.cdb.emplace_back();
        }
        std::size_t k = it->second;
        if (k == 0) f.dates.push_back(r[0]);
        f.var[k].push_back(std::stod(r[2]));
        f.es[k].push_back(std::stod(r[3]));
        f.cdb[k].push_back(std::stod(r[4]));
    }
    return f;
}

}  // namespace

void cmd_backtest(const RunConfig& cfg) {
    cfg.require_seed();
    DailyPanel panel = load_panel(cfg);
    std::size_t split = split_index(cfg, panel);

    // Realized out-of-sample portfolio returns.
    std::vector<double> realized;
    for (std::size_t t = split; t < panel.size(); ++t)
        realized.push_back(0.5 * panel.r1[t] + 0.5 * panel.r2[t]);

    std::vector<CopulaSpecEntry> specs = copula_specs(cfg);
    std::string bench_tag = cfg.get("backtest.benchmark", specs.back().tag);
    int dq_lags = cfg.get_int("backtest.dq_lags", 4);
    int dq_sims = cfg.get_int("backtest.dq_sims", 1000);

    std::map<std::string, ForecastFile> forecasts;
    for (const auto& entry : specs) {
        std::string path = cfg.path_in_out("forecast_" + entry.tag + ".csv");
        if (!fs::exists(path))
            throw ConfigError("forecast file not found: " + path + " (run forecast first)");
        forecasts[entry.tag] = read_forecast(path);
    }
    if (!forecasts.count(bench_tag))
        throw ConfigError("backtest.benchmark " + bench_tag + " is not among the fitted families");

    std::ofstream out(cfg.path_in_out("backtest.csv"));
    out << "# " << cfg.provenance() << "\n";
    out << "model,alpha,coverage,tick_loss,dq_stat,dq_p,dq_note,"
           "dm_stat_bench_minus_model,dm_stat_model_minus_bench,dm_p\n";
    char buf[512];
    int dq_seed_ix = 0;
    for (const auto& entry : specs) {
        const ForecastFile& f = forecasts[entry.tag];
        const ForecastFile& bench = forecasts[bench_tag];
        for (std::size_t a = 0; a < f.alphas.size(); ++a) {
            double alpha = f.alphas[a];
            backtest::HitSeries hits = backtest::make_hits(realized, f.var[a], alpha);
            double cov = backtest::coverage(hits);
            double tl = backtest::mean_tick_loss(realized, f.var[a], alpha);
            backtest::DqResult dq = backtest::dq_test(
                hits, dq_lags, dq_sims, cfg.stage_seed(kSeedDq) + 131ULL * dq_seed_ix++);
            double dm_stat = std::nan(""), dm_p = std::nan("");
            if (entry.tag != bench_tag) {
                std::vector<double> loss_b =
                    backtest::tick_loss(realized, bench.var[a], alpha);
                std::vector<double> loss_m = backtest::tick_loss(realized, f.var[a], alpha);
                backtest::DmResult dm = backtest::dm_test(loss_b, loss_m);
                dm_stat = dm.stat;
                dm_p = dm.p_value;
            }
            std::snprintf(buf, sizeof buf, "%s,%g,%.6f,%.10g,%.6g,%.6g,%s,%.6g,%.6g,%.6g\n",
                          entry.tag.c_str(), alpha, cov, tl, dq.stat,
                          dq.testable ? dq.p_value : std::nan(""),
                          dq.testable ? "ok" : "untestable", dm_stat,
                          std::isnan(dm_stat) ? std::nan("") : -dm_stat, dm_p);
            out << buf;
        }
    }

    // Pairwise CPA on out-of-sample log copula densities.
    std::map<std::string, std::vector<double>> dens;
    for (const auto& entry : specs) {
        estimate::CopulaFit cop = load_copula(cfg, entry.tag);
        estimate::JointFit jf = assemble_joint(cfg, cop);
        dens[entry.tag] = riskcast::oos_copula_logdensity(jf, panel, split);
    }
    std::ofstream cpa_out(cfg.path_in_out("cpa.csv"));
    cpa_out << "# " << cfg.provenance() << "\n";
    cpa_out << "model_row,model_col,stat,p_two_sided\n";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            diagnostics::CpaResult r =
                diagnostics::cpa_test(dens[specs[i].tag], dens[specs[j].tag]);
            std::snprintf(buf, sizeof buf, "%s,%s,%.6g,%.6g\n", specs[i].tag.c_str(),
                          specs[j].tag.c_str(), r.stat, r.p_two_sided);
            cpa_out << buf;
        }
    }
    std::cout << "backtest: " << realized.size() << " out-of-sample days, benchmark "
              << bench_tag << "\n";
}

void cmd_cdb(const RunConfig& cfg) {
    cfg.require_seed();
    DailyPanel panel = load_panel(cfg);
    double cdb_alpha = cfg.get_num("forecast.cdb_alpha", 0.05);
    int band_sims = cfg.get_int("forecast.cdb_band_sims", 10000);

    // Unconditional correlation of the full sample drives the reference band.
    double rho = 0.0;
    {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t t = 0; t < panel.size(); ++t) {
            m1 += panel.r1[t];
            m2 += panel.r2[t];
        }
        m1 /= panel.size();
        m2 /= panel.size();
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t t = 0; t < panel.size(); ++t) {
            sxy += (panel.r1[t] - m1) * (panel.r2[t] - m2);
            sxx += (panel.r1[t] - m1) * (panel.r1[t] - m1);
            syy += (panel.r2[t] - m2) * (panel.r2[t] - m2);
        }
        rho = sxy / std::sqrt(sxx * syy);
    }
    Rng rng(cfg.stage_seed(kSeedCdb));
    riskcast::CdbBand band =
        riskcast::cdb_constant_band(rho, panel.size(), band_sims, cdb_alpha, 0.90, rng);

    nlohmann::json j;
    j["_provenance"] = provenance_json(cfg);
    j["unconditional_rho"] = rho;
    j["alpha"] = cdb_alpha;
    j["n_sim"] = band_sims;
    j["mean"] = band.mean;
    j["lo"] = band.lo;
    j["hi"] = band.hi;
    write_file(cfg.path_in_out("cdb_band.json"), j.dump(2));

    // Figure-3 style tidy file joining per-model CDB paths with the band.
    std::ofstream out(cfg.path_in_out("plot_cdb.csv"));
    out << "# " << cfg.provenance() << "\n";
    out << "date,model,cdb,band_mean,band_lo,band_hi\n";
    char buf[256];
    for (const auto& entry : copula_specs(cfg)) {
        std::string path = cfg.path_in_out("forecast_" + entry.tag + ".csv");
        if (!fs::exists(path))
            throw ConfigError("forecast file not found: " + path + " (run forecast first)");
        ForecastFile f = read_forecast(path);
        std::size_t a = 0;
        while (a < f.alphas.size() && std::fabs(f.alphas[a] - cdb_alpha) > 1e-12) ++a;
        if (a == f.alphas.size())
            throw ConfigError("forecast.cdb_alpha is not among forecast.alphas");
        for (std::size_t i = 0; i < f.dates.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g\n", f.dates[i].c_str(),
                          entry.tag.c_str(), f.cdb[a][i], band.mean, band.lo, band.hi);
            out << buf;
        }
    }
    std::cout << "cdb: band mean " << band.mean << " [" << band.lo << ", " << band.hi << "]\n";
}

void cmd_pipeline(const RunConfig& cfg) {
    cfg.require_seed();
    std::vector<std::string> stages = cfg.get_list("run.stages");
    if (stages.empty())
        stages = {"ingest", "margins", "copula", "gof", "forecast", "backtest", "cdb"};

    // Validate the whole configuration up front so nothing is written on
    // config errors.
    copula_specs(cfg);
    margin_spec(cfg, 1);
    margin_spec(cfg, 2);
    margins_mode(cfg);
    bool needs_panel = std::find(stages.begin(), stages.end(), "ingest") == stages.end();
    if (needs_panel) split_index(cfg, load_panel(cfg));

    nlohmann::json report;
    report["_provenance"] = provenance_json(cfg);
    report["stages"] = stages;
    for (const std::string& stage : stages) {
        try {
            if (stage == "ingest") cmd_ingest(cfg);
            else if (stage == "margins") cmd_fit_margins(cfg);
            else if (stage == "copula") cmd_fit_copula(cfg);
            else if (stage == "gof") cmd_gof(cfg);
            else if (stage == "forecast") cmd_forecast(cfg);
            else if (stage == "backtest") cmd_backtest(cfg);
            else if (stage == "cdb") cmd_cdb(cfg);
            else throw ConfigError("unknown stage: " + stage);
        } catch (const std::exception& e) {
            write_file(cfg.path_in_out("report.json"), report.dump(2));
            throw std::runtime_error("stage '" + stage + "' failed: " + e.what());
        }
        report["completed"].push_back(stage);
    }
    write_file(cfg.path_in_out("report.json"), report.dump(2));
    std::cout << "pipeline: all stages completed\n";
}

int run_cli(int argc, char** argv) {
    CLI::App app{"bivariate realized-GARCH dynamic copula risk toolkit"};
    app.require_subcommand(1);
    std::string config_path, out_dir_override;
    long long seed_override = -1;
    int threads_override = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file")->required();
        sub->add_option("--seed", seed_override, "master seed override");
        sub->add_option("--out-dir", out_dir_override, "output directory override");
        sub->add_option("--threads", threads_override, "worker threads");
    };
    std::vector<std::pair<std::string, void (*)(const RunConfig&)>> cmds = {
        {"ingest", cmd_ingest},       {"fit-margins", cmd_fit_margins},
        {"fit-copula", cmd_fit_copula}, {"gof", cmd_gof},
        {"forecast", cmd_forecast},   {"backtest", cmd_backtest},
        {"cdb", cmd_cdb},             {"pipeline", cmd_pipeline}};
    for (auto& [name, fn] : cmds) add_common(app.add_subcommand(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_override >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed_override);
            cfg.seed_set = true;
            cfg.fingerprint += "+s";
        }
        if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
        if (threads_override > 0) cfg.threads = threads_override;
        for (auto& [name, fn] : cmds) {
            if (app.get_subcommand(name)->parsed()) {
                fn(cfg);
                return 0;
            }
        }
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace rgcop::cli
