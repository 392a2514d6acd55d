#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rgcop/estimate.hpp"
#include "rgcop/margins.hpp"
#include "rgcop/marketdata.hpp"

namespace rgcop::cli {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Flat key-value configuration with [section] headers; keys are stored as
// "section.key".
struct RunConfig {
    std::map<std::string, std::string> kv;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::string fingerprint;  // hash of file content plus overrides

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const;
    std::string require(const std::string& key) const;
    double get_num(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;

    std::string path_in_out(const std::string& name) const;
    std::string provenance() const;  // header comment for numeric outputs
    std::uint64_t stage_seed(int stage_tag) const;
    void require_seed() const;
};

RunConfig load_config(const std::string& path);

// Individual pipeline stages; all artifacts live under out_dir.
void cmd_ingest(const RunConfig& cfg);
void cmd_fit_margins(const RunConfig& cfg);
void cmd_fit_copula(const RunConfig& cfg);
void cmd_gof(const RunConfig& cfg);
void cmd_forecast(const RunConfig& cfg);
void cmd_backtest(const RunConfig& cfg);
void cmd_cdb(const RunConfig& cfg);
void cmd_pipeline(const RunConfig& cfg);

int run_cli(int argc, char** argv);

}  // namespace rgcop::cli
