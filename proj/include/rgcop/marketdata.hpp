#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace rgcop::marketdata {

struct Date {
    int y = 1970, m = 1, d = 1;
    auto operator<=>(const Date&) const = default;
};

std::int64_t days_from_civil(const Date& d);
Date civil_from_days(std::int64_t days);
int day_of_week(const Date& d);  // 0=Sunday .. 6=Saturday
std::string to_iso(const Date& d);
Date date_from_iso(const std::string& s);

struct TickRecord {
    std::int64_t ts = 0;  // epoch seconds, UTC
    double price = 0.0;
};

struct TickSeries {
    std::vector<TickRecord> ticks;
    std::size_t rejected_rows = 0;
};

// Describes a delimited tick file: column positions, delimiter, and the
// timestamp layout (strptime format, or "epoch" for raw unix seconds).
struct TickFormat {
    char delimiter = ',';
    std::string timestamp_format = "%Y-%m-%d %H:%M:%S";
    int timestamp_col = 0;
    int price_col = 1;
    bool has_header = true;
};

TickSeries parse_ticks(std::istream& in, const TickFormat& fmt);

// Trading session in minutes-of-day, GMT. Defaults to the NYSE floor
// session expressed in GMT.
struct SessionWindow {
    int open_minute = 14 * 60 + 30;
    int close_minute = 21 * 60;
    int bar_minutes = 5;
    int bars_per_day() const { return (close_minute - open_minute) / bar_minutes; }
};

// Day-exclusion rules: weekends, the fixed year-end window (Dec 24-26 and
// Dec 31-Jan 2), and a holiday list loaded from a file of ISO dates.
struct Calendar {
    bool exclude_weekends = true;
    bool exclude_yearend = true;
    std::set<std::int64_t> holidays;  // days since epoch

    static Calendar load(const std::string& holiday_file);
    void add_holiday(const Date& d) { holidays.insert(days_from_civil(d)); }
    bool excluded(const Date& d) const;
};

struct IntradayGrid {
    Date day;
    std::vector<std::int64_t> bar_times;  // session open plus every bar close
    std::vector<double> log_price1;       // one per bar time
    std::vector<double> log_price2;

    std::vector<double> returns1() const;
    std::vector<double> returns2() const;
};

struct BuildReport {
    std::size_t days_dropped_gaps = 0;      // a bar had no prior same-day tick
    std::size_t days_excluded_calendar = 0;
    bool empty_overlap = false;
};

std::vector<IntradayGrid> build_grid(const TickSeries& a, const TickSeries& b,
                                     const SessionWindow& session, const Calendar& cal,
                                     BuildReport* report = nullptr);

double realized_variance(std::span<const double> returns);
double realized_correlation(std::span<const double> r1, std::span<const double> r2);
double annualize_vol(double rv);  // 100 * sqrt(250 * rv)

struct DailyPanel {
    std::vector<Date> dates;
    std::vector<double> r1, rv1, r2, rv2;
    std::vector<double> rcorr;  // per-day realized correlation (NaN when undefined)
    std::vector<int> bars;      // M per day

    std::size_t size() const { return dates.size(); }
    void scale_returns(double s);  // r *= s, rv *= s^2
};

DailyPanel daily_panel(const std::vector<IntradayGrid>& grids);

// Delimited text, header `date,r1,rv1,r2,rv2`, ISO dates, full precision.
// Lines starting with '#' are treated as comments on read.
void write_panel_csv(const DailyPanel& p, std::ostream& out, const std::string& header_comment = "");
DailyPanel read_panel_csv(std::istream& in);

}  // namespace rgcop::marketdata
