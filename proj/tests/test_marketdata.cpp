#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rgcop/marketdata.hpp"

using namespace rgcop::marketdata;

namespace {

std::int64_t ts(int y, int m, int d, int hh, int mm, int ss = 0) {
    return days_from_civil(Date{y, m, d}) * 86400 + hh * 3600 + mm * 60 + ss;
}

TickSeries make_series(std::vector<std::pair<std::int64_t, double>> rows) {
    TickSeries s;
    for (auto& [t, p] : rows) s.ticks.push_back({t, p});
    return s;
}

// One full trading day of ticks covering every 5-minute bar.
TickSeries full_day(const Date& d, double price, const SessionWindow& w) {
    TickSeries s;
    std::int64_t base = days_from_civil(d) * 86400 + w.open_minute * 60;
    for (int k = 0; k <= w.bars_per_day(); ++k)
        s.ticks.push_back({base + static_cast<std::int64_t>(k) * w.bar_minutes * 60,
                           price + 0.01 * k});
    return s;
}

}  // namespace

TEST_CASE("dates: civil conversion and weekday") {
    Date d{2008, 10, 9};
    CHECK(civil_from_days(days_from_civil(d)) == d);
    CHECK(day_of_week(Date{2023, 7, 2}) == 0);   // Sunday
    CHECK(day_of_week(Date{2023, 7, 8}) == 6);   // Saturday
    CHECK(to_iso(d) == "2008-10-09");
    CHECK(date_from_iso("2008-10-09") == d);
}

TEST_CASE("parse_ticks: two well-formed rows, sorted output") {
    std::istringstream in("timestamp,price\n2020-01-02 15:00:00,10.5\n2020-01-02 15:01:00,10.6\n");
    TickFormat fmt;
    TickSeries s = parse_ticks(in, fmt);
    CHECK(s.ticks.size() == 2);
    CHECK(s.rejected_rows == 0);
    CHECK(s.ticks[0].ts < s.ticks[1].ts);
    CHECK(s.ticks[0].price == doctest::Approx(10.5));
}

TEST_CASE("parse_ticks: out-of-order rows come back sorted") {
    std::istringstream in("timestamp,price\n2020-01-02 15:05:00,11\n2020-01-02 15:00:00,10\n");
    TickFormat fmt;
    TickSeries s = parse_ticks(in, fmt);
    CHECK(s.ticks.size() == 2);
    CHECK(s.ticks[0].price == doctest::Approx(10.0));
}

TEST_CASE("parse_ticks: non-positive price rejected with a count") {
    std::istringstream in("timestamp,price\n2020-01-02 15:00:00,0\n2020-01-02 15:01:00,10\n");
    TickFormat fmt;
    TickSeries s = parse_ticks(in, fmt);
    CHECK(s.ticks.size() == 1);
    CHECK(s.rejected_rows == 1);
}

TEST_CASE("parse_ticks: malformed rows rejected, bad header throws") {
    std::istringstream in("timestamp,price\nnot-a-time,10\n2020-01-02 15:00:00,abc\n");
    TickFormat fmt;
    TickSeries s = parse_ticks(in, fmt);
    CHECK(s.ticks.empty());
    CHECK(s.rejected_rows == 2);

    std::istringstream empty("");
    CHECK_THROWS(parse_ticks(empty, fmt));
    std::istringstream thin("justonecolumn\n");
    CHECK_THROWS(parse_ticks(thin, fmt));
}

TEST_CASE("parse_ticks: epoch timestamps") {
    std::istringstream in("ts,p\n1000,2.5\n999,2.4\n");
    TickFormat fmt;
    fmt.timestamp_format = "epoch";
    TickSeries s = parse_ticks(in, fmt);
    CHECK(s.ticks.size() == 2);
    CHECK(s.ticks[0].ts == 999);
}

TEST_CASE("build_grid: one complete weekday gives one grid") {
    SessionWindow w;
    Date mon{2020, 1, 6};
    TickSeries a = full_day(mon, 100.0, w);
    TickSeries b = full_day(mon, 50.0, w);
    Calendar cal;
    BuildReport rep;
    auto grids = build_grid(a, b, w, cal, &rep);
    REQUIRE(grids.size() == 1);
    CHECK(grids[0].day == mon);
    CHECK(grids[0].bar_times.size() == static_cast<std::size_t>(w.bars_per_day() + 1));
    CHECK(rep.days_dropped_gaps == 0);
}

TEST_CASE("build_grid: both assets share identical bar stamps") {
    SessionWindow w;
    Date mon{2020, 1, 6};
    TickSeries a = full_day(mon, 100.0, w);
    TickSeries b = full_day(mon, 50.0, w);
    // Jitter asset b's tick times inside the bars; stamps must still match.
    for (auto& t : b.ticks) t.ts -= 7;
    b.ticks.push_back({ts(2020, 1, 6, 20, 59, 59), 51.0});
    std::sort(b.ticks.begin(), b.ticks.end(),
              [](const TickRecord& x, const TickRecord& y) { return x.ts < y.ts; });
    Calendar cal;
    auto grids = build_grid(a, b, w, cal, nullptr);
    REQUIRE(grids.size() == 1);
    for (std::size_t k = 0; k < grids[0].bar_times.size(); ++k) {
        std::int64_t expect = days_from_civil(mon) * 86400 + w.open_minute * 60 +
                              static_cast<std::int64_t>(k) * w.bar_minutes * 60;
        CHECK(grids[0].bar_times[k] == expect);
    }
}

TEST_CASE("build_grid: Saturday-only data produces no grids") {
    SessionWindow w;
    Date sat{2020, 1, 4};
    TickSeries a = full_day(sat, 100.0, w);
    TickSeries b = full_day(sat, 50.0, w);
    Calendar cal;
    BuildReport rep;
    auto grids = build_grid(a, b, w, cal, &rep);
    CHECK(grids.empty());
    CHECK(rep.days_excluded_calendar == 1);
    CHECK(rep.empty_overlap);
}

TEST_CASE("build_grid: missing opening tick drops the day") {
    SessionWindow w;
    Date mon{2020, 1, 6};
    TickSeries a = full_day(mon, 100.0, w);
    TickSeries b = full_day(mon, 50.0, w);
    b.ticks.erase(b.ticks.begin());  // nothing at or before the first stamp
    Calendar cal;
    BuildReport rep;
    auto grids = build_grid(a, b, w, cal, &rep);
    CHECK(grids.empty());
    CHECK(rep.days_dropped_gaps == 1);
}

TEST_CASE("build_grid: year-end exclusions and holiday file rules") {
    Calendar cal;
    CHECK(cal.excluded(Date{2020, 12, 25}));
    CHECK(cal.excluded(Date{2020, 12, 31}));
    CHECK(cal.excluded(Date{2021, 1, 1}));
    CHECK(cal.excluded(Date{2021, 1, 4}) == false);  // Monday
    cal.add_holiday(Date{2021, 1, 18});
    CHECK(cal.excluded(Date{2021, 1, 18}));
}

TEST_CASE("realized_variance: exact arithmetic") {
    std::vector<double> r{0.01, -0.02, 0.005};
    CHECK(realized_variance(r) == doctest::Approx(0.000525).epsilon(1e-15));
    std::vector<double> zeros{0.0, 0.0, 0.0};
    CHECK(realized_variance(zeros) == 0.0);
    std::vector<double> one{0.3};
    CHECK(realized_variance(one) == doctest::Approx(0.09));
    std::vector<double> empty;
    CHECK_THROWS_AS(realized_variance(empty), std::domain_error);
}

TEST_CASE("realized_correlation: perfect, zero, inverse") {
    std::vector<double> r1{0.01, -0.01};
    CHECK(realized_correlation(r1, r1) == doctest::Approx(1.0));
    std::vector<double> a{1.0, -1.0}, b{1.0, 1.0};
    CHECK(realized_correlation(a, b) == doctest::Approx(0.0));
    std::vector<double> neg{-0.01, 0.01};
    CHECK(realized_correlation(r1, neg) == doctest::Approx(-1.0));
    std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS_AS(realized_correlation(r1, zeros), std::domain_error);
}

TEST_CASE("realized_correlation: scaling property") {
    std::vector<double> x{0.004, -0.002, 0.001, 0.0007};
    std::vector<double> up(x), down(x);
    for (auto& v : up) v *= 2.5;
    for (auto& v : down) v *= -0.7;
    CHECK(realized_correlation(x, up) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(realized_correlation(x, down) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("annualize_vol: convention 100*sqrt(250*rv)") {
    CHECK(annualize_vol(0.0004) == doctest::Approx(31.6228).epsilon(1e-4));
    CHECK(annualize_vol(0.0) == 0.0);
    CHECK(annualize_vol(1.0 / 250.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK_THROWS_AS(annualize_vol(-0.1), std::domain_error);
}

TEST_CASE("daily_panel: open-close identity and lengths") {
    SessionWindow w;
    Date mon{2020, 1, 6}, tue{2020, 1, 7};
    TickSeries a = full_day(mon, 100.0, w), b = full_day(mon, 50.0, w);
    TickSeries a2 = full_day(tue, 101.0, w), b2 = full_day(tue, 49.0, w);
    a.ticks.insert(a.ticks.end(), a2.ticks.begin(), a2.ticks.end());
    b.ticks.insert(b.ticks.end(), b2.ticks.begin(), b2.ticks.end());
    Calendar cal;
    auto grids = build_grid(a, b, w, cal, nullptr);
    REQUIRE(grids.size() == 2);
    DailyPanel p = daily_panel(grids);
    CHECK(p.size() == grids.size());
    for (std::size_t i = 0; i < grids.size(); ++i) {
        double open = grids[i].log_price1.front(), close = grids[i].log_price1.back();
        CHECK(p.r1[i] == doctest::Approx(close - open).epsilon(1e-12));
        CHECK(p.rv1[i] >= 0.0);
        CHECK(p.bars[i] == w.bars_per_day());
    }
}

TEST_CASE("daily_panel: flat prices give zero return and zero rv") {
    SessionWindow w;
    Date mon{2020, 1, 6};
    TickSeries a, b;
    std::int64_t base = days_from_civil(mon) * 86400 + w.open_minute * 60;
    for (int k = 0; k <= w.bars_per_day(); ++k) {
        a.ticks.push_back({base + static_cast<std::int64_t>(k) * 300, 100.0});
        b.ticks.push_back({base + static_cast<std::int64_t>(k) * 300, 55.0});
    }
    Calendar cal;
    auto grids = build_grid(a, b, w, cal, nullptr);
    DailyPanel p = daily_panel(grids);
    CHECK(p.r1[0] == 0.0);
    CHECK(p.rv1[0] == 0.0);
}

TEST_CASE("panel csv: write/read round trip") {
    DailyPanel p;
    p.dates = {Date{2020, 1, 6}, Date{2020, 1, 7}};
    p.r1 = {0.011234567891234567, -0.002};
    p.rv1 = {1.5e-4, 2.5e-4};
    p.r2 = {-0.004, 0.009};
    p.rv2 = {3.125e-5, 4e-5};
    p.rcorr = {0.1, 0.2};
    p.bars = {78, 78};
    std::ostringstream out;
    write_panel_csv(p, out, "test");
    std::istringstream in(out.str());
    DailyPanel q = read_panel_csv(in);
    REQUIRE(q.size() == 2);
    CHECK(q.dates[0] == p.dates[0]);
    CHECK(q.r1[0] == p.r1[0]);  // full-precision round trip
    CHECK(q.rv2[1] == p.rv2[1]);
}
