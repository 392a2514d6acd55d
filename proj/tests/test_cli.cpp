#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rgcop/pipeline.hpp"
#include "rgcop/synthetic.hpp"

using namespace rgcop;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("rgcop_test_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const {
        return sub.empty() ? path.string() : (path / sub).string();
    }
};

void write(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string small_config(const TempDir& dir, int days) {
    synthetic::SynthConfig scfg;
    scfg.days = days;
    scfg.seed = 99;
    synthetic::write_tick_files(scfg, dir.str("t1.csv"), dir.str("t2.csv"));
    std::ostringstream cfg;
    cfg << "[data]\n"
        << "ticks1 = " << dir.str("t1.csv") << "\n"
        << "ticks2 = " << dir.str("t2.csv") << "\n"
        << "returns_scale = 100\n"
        << "[margins]\n"
        << "model1 = realized-garch\nmodel2 = realized-garch\n"
        << "mean_lags1 = 0\nmean_lags2 = 0\n"
        << "starts = 2\n"
        << "[copula]\n"
        << "families = normal, normal-gas\n"
        << "mode = parametric\n"
        << "[gof]\n"
        << "n_sim = 100\n"
        << "[forecast]\n"
        << "split_date = 2017-06-01\n"
        << "alphas = 0.01,0.05,0.95\n"
        << "n_paths = 1500\n"
        << "cdb_alpha = 0.05\n"
        << "cdb_band_sims = 1000\n"
        << "[backtest]\n"
        << "dq_sims = 100\n"
        << "benchmark = normal_gas\n"
        << "[run]\n"
        << "seed = 4321\n"
        << "out_dir = " << dir.str("out") << "\n";
    std::string path = dir.str("run.cfg");
    write(path, cfg.str());
    return path;
}

}  // namespace

TEST_CASE("config loading: sections, types, errors") {
    TempDir dir("cfg");
    write(dir.str("a.cfg"), "[run]\nseed = 7\nthreads = 2\n[data]\nticks1 = x.csv\n");
    cli::RunConfig cfg = cli::load_config(dir.str("a.cfg"));
    CHECK(cfg.seed == 7);
    CHECK(cfg.threads == 2);
    CHECK(cfg.get("data.ticks1") == "x.csv");
    CHECK(cfg.get_int("data.missing", 5) == 5);
    CHECK_THROWS_AS(cfg.require("data.nope"), cli::ConfigError);

    write(dir.str("bad.cfg"), "keyoutside = 1\n");
    CHECK_THROWS_AS(cli::load_config(dir.str("bad.cfg")), cli::ConfigError);
    CHECK_THROWS_AS(cli::load_config(dir.str("missing.cfg")), cli::ConfigError);
}

TEST_CASE("ingest: synthetic ticks produce the expected day count") {
    TempDir dir("ingest");
    std::string cfg_path = small_config(dir, 30);
    cli::RunConfig cfg = cli::load_config(cfg_path);
    cli::cmd_ingest(cfg);
    std::ifstream panel_in(dir.str("out/panel.csv"));
    REQUIRE(panel_in.good());
    marketdata::DailyPanel p = marketdata::read_panel_csv(panel_in);
    CHECK(p.size() == 30);  // generator emits weekdays only, no exclusions listed
    CHECK(fs::exists(dir.str("out/ingest_report.json")));
    CHECK(fs::exists(dir.str("out/plot_prices_vol.csv")));
    CHECK(fs::exists(dir.str("out/realized_corr.csv")));
}

TEST_CASE("ingest: missing tick file is a config error (exit code 2 path)") {
    TempDir dir("missing");
    write(dir.str("c.cfg"),
          "[data]\nticks1 = /nonexistent/a.csv\nticks2 = /nonexistent/b.csv\n[run]\nseed = 1\n"
          "out_dir = " + dir.str("out") + "\n");
    cli::RunConfig cfg = cli::load_config(dir.str("c.cfg"));
    CHECK_THROWS_AS(cli::cmd_ingest(cfg), cli::ConfigError);
    CHECK_FALSE(fs::exists(dir.str("out/panel.csv")));
}

TEST_CASE("run_cli: exit codes for missing input and bad usage") {
    TempDir dir("exitcodes");
    write(dir.str("c.cfg"),
          "[data]\nticks1 = /nonexistent/a.csv\nticks2 = /nonexistent/b.csv\n[run]\nseed = 1\n"
          "out_dir = " + dir.str("out") + "\n");
    std::string cfg_path = dir.str("c.cfg");
    const char* argv1[] = {"rgcop", "ingest", "--config", cfg_path.c_str()};
    CHECK(cli::run_cli(4, const_cast<char**>(argv1)) == 2);
}

TEST_CASE("stochastic stages refuse to run without a seed") {
    TempDir dir("noseed");
    write(dir.str("c.cfg"), "[data]\npanel = nowhere.csv\n[forecast]\nsplit_date = 2017-01-01\n"
                            "[copula]\nfamilies = normal\n");
    cli::RunConfig cfg = cli::load_config(dir.str("c.cfg"));
    CHECK_FALSE(cfg.seed_set);
    CHECK_THROWS_AS(cli::cmd_fit_margins(cfg), cli::ConfigError);
}

TEST_CASE("weekend-only data yields an empty panel with a warning, not an error") {
    TempDir dir("weekend");
    // Hand-written ticks on a Saturday.
    write(dir.str("w1.csv"), "timestamp,price\n2020-01-04 15:00:00,10\n2020-01-04 15:05:00,11\n");
    write(dir.str("w2.csv"), "timestamp,price\n2020-01-04 15:00:00,20\n2020-01-04 15:05:00,21\n");
    write(dir.str("c.cfg"), "[data]\nticks1 = " + dir.str("w1.csv") + "\nticks2 = " +
                                dir.str("w2.csv") + "\n[run]\nseed = 1\nout_dir = " +
                                dir.str("out") + "\n");
    cli::RunConfig cfg = cli::load_config(dir.str("c.cfg"));
    cli::cmd_ingest(cfg);  // must not throw
    std::ifstream panel_in(dir.str("out/panel.csv"));
    marketdata::DailyPanel p = marketdata::read_panel_csv(panel_in);
    CHECK(p.size() == 0);
}

TEST_CASE("split date outside the panel is rejected before any work") {
    TempDir dir("badsplit");
    std::string cfg_path = small_config(dir, 30);
    cli::RunConfig cfg = cli::load_config(cfg_path);
    cli::cmd_ingest(cfg);
    cfg.kv["forecast.split_date"] = "2030-01-01";
    CHECK_THROWS_AS(cli::cmd_fit_margins(cfg), cli::ConfigError);
    CHECK_FALSE(fs::exists(dir.str("out/margin1.json")));
}

TEST_CASE("pipeline: full run on a small synthetic bundle, deterministic outputs") {
    TempDir dir("pipe");
    std::string cfg_path = small_config(dir, 320);
    cli::RunConfig cfg = cli::load_config(cfg_path);
    cli::cmd_pipeline(cfg);

    for (const char* f :
         {"panel.csv", "margin1.json", "margin2.json", "copula_normal.json",
          "copula_normal_gas.json", "dependence_normal_gas.csv", "gof.json",
          "forecast_normal.csv", "forecast_normal_gas.csv", "backtest.csv", "cpa.csv",
          "cdb_band.json", "plot_cdb.csv", "report.json"}) {
        INFO(f);
        CHECK(fs::exists(dir.str(std::string("out/") + f)));
    }

    // Byte-identical rerun into a fresh directory.
    std::string first_forecast = read(dir.str("out/forecast_normal_gas.csv"));
    std::string first_backtest = read(dir.str("out/backtest.csv"));
    cfg.out_dir = dir.str("out2");
    cli::cmd_pipeline(cfg);
    CHECK(read(dir.str("out2/forecast_normal_gas.csv")) == first_forecast);
    CHECK(read(dir.str("out2/backtest.csv")) == first_backtest);
}
