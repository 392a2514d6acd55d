#pragma once

#include <cstdint>
#include <string>

#include "rgcop/marketdata.hpp"

namespace rgcop::synthetic {

// Two-asset 5-minute tick generator: stochastic daily volatility, slowly
// moving intraday correlation, previous-tick-style irregular stamps.
struct SynthConfig {
    int days = 700;
    std::uint64_t seed = 1;
    marketdata::Date start{2016, 1, 4};
    marketdata::SessionWindow session{};
    double start_price1 = 100.0;
    double start_price2 = 50.0;
    double daily_vol1 = 0.018;
    double daily_vol2 = 0.011;
};

// Writes delimited tick files (timestamp,price) covering `days` trading
// days, weekends skipped.
void write_tick_files(const SynthConfig& cfg, const std::string& path1,
                      const std::string& path2);

}  // namespace rgcop::synthetic
