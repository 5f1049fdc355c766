#pragma once

#include "tailhawk/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tailhawk {

enum Tail : std::size_t { left = 0, right = 1 };
using TailPair = std::array<double, 2>;

inline const char* tail_name(Tail tail) { return tail == Tail::left ? "left" : "right"; }

/// Univariate log-return sample with an in/out-of-sample boundary.
///
/// In-sample is [0, split_index), out-of-sample is [split_index, size()).
struct ReturnSeries {
    std::vector<std::string> timestamps;
    std::vector<double> values;
    std::size_t split_index = 0;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] std::span<const double> in_sample() const { return {values.data(), split_index}; }
    [[nodiscard]] std::span<const double> out_of_sample() const {
        return {values.data() + split_index, values.size() - split_index};
    }

    /// Throws ValidationError when an invariant does not hold.
    void validate() const {
        if (timestamps.size() != values.size()) {
            throw ValidationError("return series: timestamp/value length mismatch");
        }
        if (values.empty()) throw ValidationError("return series: empty");
        if (split_index == 0 || split_index > values.size()) {
            throw ValidationError("return series: split index must lie in (0, length]");
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw ValidationError("return series: non-finite value at row " + std::to_string(i));
            }
            if (i > 0 && !(timestamps[i - 1] < timestamps[i])) {
                throw ValidationError("return series: timestamps not strictly increasing at " + timestamps[i]);
            }
        }
    }
};

enum class SeriesFormat { prices, returns };

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

inline bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{}) return false;
    if (std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc{}) return false;
    if (std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{}) return false;
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}.ok();
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace detail

/// ISO date `days` days after 1970-01-01.
inline std::string iso_date_from_days(long days) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Reads a two-column (date, value) CSV with a header row.
///
/// Lines starting with '#' are comments. Rows are sorted by date; duplicate
/// dates are rejected. With SeriesFormat::prices the values are converted to
/// log-returns ln(P_t / P_{t-1}) and the first row is consumed. The split
/// index is the first row whose date is >= split_date; an empty split_date
/// puts every row in-sample.
inline ReturnSeries load_returns(const std::string& path, SeriesFormat format, const std::string& split_date) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);

    std::vector<std::pair<std::string, double>> rows;
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (view.empty() || view.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto comma = view.find(',');
        if (comma == std::string_view::npos) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected two columns");
        }
        std::string_view date = detail::trim(view.substr(0, comma));
        std::string_view rest = view.substr(comma + 1);
        if (const auto c2 = rest.find(','); c2 != std::string_view::npos) rest = rest.substr(0, c2);
        if (!detail::is_iso_date(date)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad date '" + std::string(date) + "'");
        }
        double value = 0.0;
        if (!detail::parse_double(rest, value) || !std::isfinite(value)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + std::string(rest) + "'");
        }
        rows.emplace_back(std::string(date), value);
    }
    if (!header_seen) throw DataError(path + ": missing header row");

    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].first == rows[i - 1].first) throw DataError(path + ": duplicate date " + rows[i].first);
    }

    ReturnSeries series;
    if (format == SeriesFormat::prices) {
        for (const auto& [date, price] : rows) {
            if (!(price > 0.0)) throw DataError(path + ": non-positive price on " + date);
        }
        for (std::size_t i = 1; i < rows.size(); ++i) {
            series.timestamps.push_back(rows[i].first);
            series.values.push_back(std::log(rows[i].second / rows[i - 1].second));
        }
    } else {
        for (auto& [date, value] : rows) {
            series.timestamps.push_back(date);
            series.values.push_back(value);
        }
    }
    if (series.values.empty()) throw DataError(path + ": no observations");

    if (split_date.empty()) {
        series.split_index = series.size();
    } else {
        if (!detail::is_iso_date(split_date)) throw ValidationError("split date '" + split_date + "' is not ISO-8601");
        if (split_date <= series.timestamps.front() || split_date > series.timestamps.back()) {
            throw ValidationError("split date " + split_date + " outside data range " + series.timestamps.front() +
                                  " .. " + series.timestamps.back());
        }
        const auto it = std::lower_bound(series.timestamps.begin(), series.timestamps.end(), split_date);
        series.split_index = static_cast<std::size_t>(it - series.timestamps.begin());
    }
    series.validate();
    return series;
}

/// Writes (date, value) rows in the format load_returns reads, preceded by
/// optional '#' comment lines.
inline void write_returns(std::ostream& out, const ReturnSeries& series, std::span<const std::string> comments = {}) {
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "date,value\n";
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", series.values[i]);
        out << series.timestamps[i] << ',' << buf << '\n';
    }
}

/// Order-statistic quantile with linear interpolation between closest ranks
/// (h = (n - 1) q).
inline double empirical_quantile(std::span<const double> values, double q) {
    if (values.empty()) throw ValidationError("empirical_quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("empirical_quantile: q must lie in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0) return sorted[lo];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct ExceedanceEvent {
    std::size_t t = 0;      ///< arrival index
    double magnitude = 0;   ///< excess beyond the threshold, > 0

    friend bool operator==(const ExceedanceEvent&, const ExceedanceEvent&) = default;
};

/// Mirrored thresholds and the per-tail exceedance events they define.
struct ExceedancePair {
    double a_u = 0.0;
    double u_left = 0.0;
    double u_right = 0.0;
    std::vector<ExceedanceEvent> left;
    std::vector<ExceedanceEvent> right;

    [[nodiscard]] const std::vector<ExceedanceEvent>& events(Tail tail) const { return tail == Tail::left ? left : right; }
    [[nodiscard]] double threshold(Tail tail) const { return tail == Tail::left ? u_left : u_right; }

    /// Number of events of a tail with arrival index < end.
    [[nodiscard]] std::size_t count_before(Tail tail, std::size_t end) const {
        const auto& ev = events(tail);
        return static_cast<std::size_t>(
            std::lower_bound(ev.begin(), ev.end(), end, [](const ExceedanceEvent& e, std::size_t v) { return e.t < v; }) -
            ev.begin());
    }

    /// Copy restricted to arrivals in [0, end).
    [[nodiscard]] ExceedancePair truncated(std::size_t end) const {
        ExceedancePair out{a_u, u_left, u_right, {}, {}};
        out.left.assign(left.begin(), left.begin() + static_cast<std::ptrdiff_t>(count_before(Tail::left, end)));
        out.right.assign(right.begin(), right.begin() + static_cast<std::ptrdiff_t>(count_before(Tail::right, end)));
        return out;
    }
};

/// Events beyond fixed thresholds. Values equal to a threshold are not exceedances.
inline ExceedancePair exceedances_at(std::span<const double> values, double u_left, double u_right, double a_u) {
    if (!(u_left < u_right)) throw ValidationError("exceedances: left threshold must lie below right threshold");
    ExceedancePair pair{a_u, u_left, u_right, {}, {}};
    for (std::size_t t = 0; t < values.size(); ++t) {
        const double x = values[t];
        if (-(x - u_left) > 0.0) {
            pair.left.push_back({t, -(x - u_left)});
        } else if (x - u_right > 0.0) {
            pair.right.push_back({t, x - u_right});
        }
    }
    return pair;
}

/// Mirrored in-sample quantile thresholds and events over the full series.
///
/// u_left is the a_u-quantile of the in-sample values and u_right the
/// (1 - a_u)-quantile, computed as the negated a_u-quantile of the negated
/// sample so that mirroring the data mirrors the thresholds bit-for-bit.
inline ExceedancePair extract_exceedances(const ReturnSeries& series, double a_u, std::size_t min_events = 10) {
    if (!(a_u > 0.0 && a_u < 0.5)) throw ValidationError("threshold level a_u must lie in (0, 0.5)");
    const auto in = series.in_sample();
    if (in.empty()) throw ValidationError("extract_exceedances: empty in-sample period");
    std::vector<double> negated(in.size());
    std::transform(in.begin(), in.end(), negated.begin(), [](double v) { return -v; });
    const double u_left = empirical_quantile(in, a_u);
    const double u_right = -empirical_quantile(negated, a_u);
    ExceedancePair pair = exceedances_at(series.values, u_left, u_right, a_u);
    for (Tail tail : {Tail::left, Tail::right}) {
        const std::size_t n = pair.count_before(tail, series.split_index);
        if (n < min_events) {
            throw ValidationError(std::string("a_u = ") + std::to_string(a_u) + " leaves " + std::to_string(n) + " in-sample " +
                                  tail_name(tail) + "-tail events (< " + std::to_string(min_events) + ")");
        }
    }
    return pair;
}

}  // namespace tailhawk
