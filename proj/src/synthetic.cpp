#include "rgcop/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "rgcop/rng.hpp"

namespace rgcop::synthetic {

namespace {

std::string format_ts(std::int64_t epoch_s) {
    std::int64_t day = epoch_s / 86400;
    std::int64_t sec = epoch_s - day * 86400;
    marketdata::Date d = marketdata::civil_from_days(day);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02lld:%02lld:%02lld", d.y, d.m, d.d,
                  static_cast<long long>(sec / 3600), static_cast<long long>((sec / 60) % 60),
                  static_cast<long long>(sec % 60));
    return buf;
}

}  // namespace

void write_tick_files(const SynthConfig& cfg, const std::string& path1,
                      const std::string& path2) {
    std::ofstream f1(path1), f2(path2);
    if (!f1 || !f2) throw std::runtime_error("synthetic: cannot open output tick files");
    f1 << "timestamp,price\n";
    f2 << "timestamp,price\n";

    Rng rng(cfg.seed);
    const int nbars = cfg.session.bars_per_day();
    const double bar_frac = 1.0 / std::sqrt(static_cast<double>(nbars));

    double logp1 = std::log(cfg.start_price1);
    double logp2 = std::log(cfg.start_price2);
    double lv1 = std::log(cfg.daily_vol1);
    double lv2 = std::log(cfg.daily_vol2);
    const double mrev = 0.96, vol_of_vol = 0.18;

    std::int64_t day = marketdata::days_from_civil(cfg.start);
    int produced = 0, t = 0;
    char line[64];
    while (produced < cfg.days) {
        marketdata::Date d = marketdata::civil_from_days(day);
        int dow = marketdata::day_of_week(d);
        if (dow == 0 || dow == 6) {
            ++day;
            continue;
        }
        // Daily log-vol AR(1) and a slow correlation cycle.
        lv1 = (1.0 - mrev) * std::log(cfg.daily_vol1) + mrev * lv1 + vol_of_vol * rng.normal();
        lv2 = (1.0 - mrev) * std::log(cfg.daily_vol2) + mrev * lv2 + vol_of_vol * rng.normal();
        double sd1 = std::exp(lv1) * bar_frac;
        double sd2 = std::exp(lv2) * bar_frac;
        double rho = 0.30 + 0.25 * std::sin(2.0 * M_PI * t / 250.0);
        double rc = std::sqrt(1.0 - rho * rho);

        const std::int64_t open_s = day * 86400 + cfg.session.open_minute * 60;
        auto emit = [&](std::ofstream& f, std::int64_t ts, double logp) {
            std::snprintf(line, sizeof line, "%s,%.6f\n", format_ts(ts).c_str(), std::exp(logp));
            f << line;
        };
        // A tick right at the open for both assets.
        emit(f1, open_s, logp1);
        emit(f2, open_s, logp2);
        for (int k = 1; k <= nbars; ++k) {
            std::int64_t bar_end = open_s + static_cast<std::int64_t>(k) *
                                              cfg.session.bar_minutes * 60;
            double z1 = rng.normal(), z2 = rng.normal();
            double r1 = sd1 * z1;
            double r2 = sd2 * (rho * z1 + rc * z2);
            // Two interior ticks plus one at the bar close.
            double a = 0.35 + 0.2 * rng.uniform();
            double b = a + 0.25 + 0.2 * rng.uniform();
            std::int64_t span = cfg.session.bar_minutes * 60;
            emit(f1, bar_end - span + static_cast<std::int64_t>(a * span), logp1 + a * r1);
            emit(f2, bar_end - span + static_cast<std::int64_t>(a * span) + 3, logp2 + a * r2);
            emit(f1, bar_end - span + static_cast<std::int64_t>(b * span), logp1 + b * r1);
            emit(f2, bar_end - span + static_cast<std::int64_t>(b * span) + 2, logp2 + b * r2);
            logp1 += r1;
            logp2 += r2;
            emit(f1, bar_end, logp1);
            emit(f2, bar_end, logp2);
        }
        ++produced;
        ++t;
        ++day;
    }
}

}  // namespace rgcop::synthetic
