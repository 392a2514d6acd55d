#include "rgcop/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rgcop::marketdata {

std::int64_t days_from_civil(const Date& dt) {
    // Howard Hinnant's civil-days algorithm.
    int y = dt.y - (dt.m <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (dt.m + (dt.m > 2 ? -3 : 9)) + 2) / 5 + dt.d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097LL + static_cast<int>(doe) - 719468;
}

Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

int day_of_week(const Date& d) {
    return static_cast<int>(((days_from_civil(d) % 7) + 11) % 7);  // 0=Sunday
}

std::string to_iso(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.y, d.m, d.d);
    return buf;
}

Date date_from_iso(const std::string& s) {
    Date d;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &d.y, &d.m, &d.d) != 3)
        throw std::runtime_error("bad ISO date: " + s);
    return d;
}

namespace {

bool split_fields(const std::string& line, char delim, std::vector<std::string>& out) {
    out.clear();
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return !out.empty();
}

bool parse_timestamp(const std::string& field, const std::string& fmt, std::int64_t* out) {
    if (fmt == "epoch") {
        try {
            size_t pos = 0;
            long long v = std::stoll(field, &pos);
            if (pos != field.size()) return false;
            *out = v;
            return true;
        } catch (...) {
            return false;
        }
    }
    std::tm tm{};
    const char* end = strptime(field.c_str(), fmt.c_str(), &tm);
    if (end == nullptr || *end != '\0') return false;
    *out = timegm(&tm);
    return true;
}

}  // namespace

TickSeries parse_ticks(std::istream& in, const TickFormat& fmt) {
    TickSeries series;
    std::string line;
    std::vector<std::string> fields;
    const int need = std::max(fmt.timestamp_col, fmt.price_col) + 1;
    if (fmt.has_header) {
        if (!std::getline(in, line))
            throw std::runtime_error("tick format error: missing header line");
        split_fields(line, fmt.delimiter, fields);
        if (static_cast<int>(fields.size()) < need)
            throw std::runtime_error("tick format error: header has fewer columns than descriptor requires");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        split_fields(line, fmt.delimiter, fields);
        if (static_cast<int>(fields.size()) < need) {
            ++series.rejected_rows;
            continue;
        }
        TickRecord rec;
        if (!parse_timestamp(fields[fmt.timestamp_col], fmt.timestamp_format, &rec.ts)) {
            ++series.rejected_rows;
            continue;
        }
        try {
            size_t pos = 0;
            rec.price = std::stod(fields[fmt.price_col], &pos);
        } catch (...) {
            ++series.rejected_rows;
            continue;
        }
        if (!(rec.price > 0.0) || !std::isfinite(rec.price)) {
            ++series.rejected_rows;
            continue;
        }
        series.ticks.push_back(rec);
    }
    std::stable_sort(series.ticks.begin(), series.ticks.end(),
                     [](const TickRecord& x, const TickRecord& y) { return x.ts < y.ts; });
    return series;
}

Calendar Calendar::load(const std::string& holiday_file) {
    Calendar cal;
    std::ifstream in(holiday_file);
    if (!in) throw std::runtime_error("cannot open holiday file: " + holiday_file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        cal.add_holiday(date_from_iso(line));
    }
    return cal;
}

bool Calendar::excluded(const Date& d) const {
    if (exclude_weekends) {
        int dow = day_of_week(d);
        if (dow == 0 || dow == 6) return true;
    }
    if (exclude_yearend) {
        if (d.m == 12 && (d.d >= 24 && d.d <= 26)) return true;
        if (d.m == 12 && d.d == 31) return true;
        if (d.m == 1 && d.d <= 2) return true;
    }
    return holidays.count(days_from_civil(d)) > 0;
}

std::vector<double> IntradayGrid::returns1() const {
    std::vector<double> r(log_price1.size() > 0 ? log_price1.size() - 1 : 0);
    for (std::size_t i = 1; i < log_price1.size(); ++i) r[i - 1] = log_price1[i] - log_price1[i - 1];
    return r;
}

std::vector<double> IntradayGrid::returns2() const {
    std::vector<double> r(log_price2.size() > 0 ? log_price2.size() - 1 : 0);
    for (std::size_t i = 1; i < log_price2.size(); ++i) r[i - 1] = log_price2[i] - log_price2[i - 1];
    return r;
}

namespace {

using DayMap = std::map<std::int64_t, std::pair<std::size_t, std::size_t>>;  // day -> [first,last) tick index

DayMap index_days(const TickSeries& s) {
    DayMap m;
    for (std::size_t i = 0; i < s.ticks.size(); ++i) {
        std::int64_t ts = s.ticks[i].ts;
        std::int64_t day = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
        auto it = m.find(day);
        if (it == m.end())
            m.emplace(day, std::make_pair(i, i + 1));
        else
            it->second.second = i + 1;
    }
    return m;
}

// Price at the last tick at or before `when`, searching only ticks of the
// same calendar day. Returns NaN when no such tick exists.
double sample_bar(const TickSeries& s, std::size_t first, std::size_t last, std::int64_t when) {
    TickRecord probe{when, 0.0};
    auto begin = s.ticks.begin() + static_cast<std::ptrdiff_t>(first);
    auto end = s.ticks.begin() + static_cast<std::ptrdiff_t>(last);
    auto it = std::upper_bound(begin, end, probe,
                               [](const TickRecord& a, const TickRecord& b) { return a.ts < b.ts; });
    if (it == begin) return std::nan("");
    return std::prev(it)->price;
}

}  // namespace

std::vector<IntradayGrid> build_grid(const TickSeries& a, const TickSeries& b,
                                     const SessionWindow& session, const Calendar& cal,
                                     BuildReport* report) {
    BuildReport local;
    BuildReport& rep = report ? *report : local;
    rep = BuildReport{};
    DayMap da = index_days(a), db = index_days(b);

    std::vector<IntradayGrid> grids;
    const int nbars = session.bars_per_day();
    if (nbars <= 0) throw std::domain_error("build_grid: empty session window");

    for (const auto& [day, ra] : da) {
        auto itb = db.find(day);
        if (itb == db.end()) {
            ++rep.days_dropped_gaps;
            continue;
        }
        Date date = civil_from_days(day);
        if (cal.excluded(date)) {
            ++rep.days_excluded_calendar;
            continue;
        }
        IntradayGrid g;
        g.day = date;
        g.bar_times.reserve(nbars + 1);
        g.log_price1.reserve(nbars + 1);
        g.log_price2.reserve(nbars + 1);
        const std::int64_t base = day * 86400 + session.open_minute * 60;
        bool complete = true;
        for (int k = 0; k <= nbars; ++k) {
            std::int64_t t = base + static_cast<std::int64_t>(k) * session.bar_minutes * 60;
            double p1 = sample_bar(a, ra.first, ra.second, t);
            double p2 = sample_bar(b, itb->second.first, itb->second.second, t);
            if (std::isnan(p1) || std::isnan(p2)) {
                complete = false;
                break;
            }
            g.bar_times.push_back(t);
            g.log_price1.push_back(std::log(p1));
            g.log_price2.push_back(std::log(p2));
        }
        if (!complete) {
            ++rep.days_dropped_gaps;
            continue;
        }
        grids.push_back(std::move(g));
    }
    for (const auto& [day, rb] : db) {
        if (da.find(day) == da.end()) ++rep.days_dropped_gaps;
    }
    if (grids.empty()) rep.empty_overlap = true;
    return grids;
}

double realized_variance(std::span<const double> returns) {
    if (returns.empty()) throw std::domain_error("realized_variance: empty return vector");
    // Plain left-to-right sum: documented, bit-reproducible order.
    double acc = 0.0;
    for (double r : returns) acc += r * r;
    return acc;
}

double realized_correlation(std::span<const double> r1, std::span<const double> r2) {
    if (r1.size() != r2.size() || r1.size() < 2)
        throw std::domain_error("realized_correlation: need equal lengths >= 2");
    double s11 = 0.0, s22 = 0.0, s12 = 0.0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        s11 += r1[i] * r1[i];
        s22 += r2[i] * r2[i];
        s12 += r1[i] * r2[i];
    }
    double denom = std::sqrt(s11) * std::sqrt(s22);
    if (denom == 0.0) throw std::domain_error("realized_correlation: zero denominator");
    return s12 / denom;
}

double annualize_vol(double rv) {
    if (rv < 0.0) throw std::domain_error("annualize_vol: negative realized variance");
    return 100.0 * std::sqrt(250.0 * rv);
}

DailyPanel daily_panel(const std::vector<IntradayGrid>& grids) {
    if (grids.empty()) throw std::domain_error("daily_panel: no grids");
    DailyPanel p;
    p.dates.reserve(grids.size());
    for (const auto& g : grids) {
        std::vector<double> ret1 = g.returns1();
        std::vector<double> ret2 = g.returns2();
        p.dates.push_back(g.day);
        double sum1 = 0.0, sum2 = 0.0;
        for (double r : ret1) sum1 += r;
        for (double r : ret2) sum2 += r;
        p.r1.push_back(sum1);
        p.r2.push_back(sum2);
        p.rv1.push_back(realized_variance(ret1));
        p.rv2.push_back(realized_variance(ret2));
        double s11 = 0.0, s22 = 0.0;
        for (double r : ret1) s11 += r * r;
        for (double r : ret2) s22 += r * r;
        if (s11 > 0.0 && s22 > 0.0)
            p.rcorr.push_back(realized_correlation(ret1, ret2));
        else
            p.rcorr.push_back(std::nan(""));
        p.bars.push_back(static_cast<int>(ret1.size()));
    }
    return p;
}

void DailyPanel::scale_returns(double s) {
    for (auto& v : r1) v *= s;
    for (auto& v : r2) v *= s;
    for (auto& v : rv1) v *= s * s;
    for (auto& v : rv2) v *= s * s;
}

void write_panel_csv(const DailyPanel& p, std::ostream& out, const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "date,r1,rv1,r2,rv2\n";
    char buf[256];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n", to_iso(p.dates[i]).c_str(),
                      p.r1[i], p.rv1[i], p.r2[i], p.rv2[i]);
        out << buf;
    }
}

DailyPanel read_panel_csv(std::istream& in) {
    DailyPanel p;
    std::string line;
    bool header_seen = false;
    std::vector<std::string> f;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // assume first non-comment line is the header
            continue;
        }
        split_fields(line, ',', f);
        if (f.size() < 5) throw std::runtime_error("panel csv: malformed line: " + line);
        p.dates.push_back(date_from_iso(f[0]));
        p.r1.push_back(std::stod(f[1]));
        p.rv1.push_back(std::stod(f[2]));
        p.r2.push_back(std::stod(f[3]));
        p.rv2.push_back(std::stod(f[4]));
        p.rcorr.push_back(std::nan(""));
        p.bars.push_back(0);
    }
    return p;
}

}  // namespace rgcop::marketdata
