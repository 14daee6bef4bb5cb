#include "fpp/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fpp {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<long long> parse_int(std::string_view s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) {
        return std::nullopt;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

double to_seconds(double ts, TimestampFormat f) {
    return f == TimestampFormat::epoch_micros ? ts / 1e6 : ts;
}

std::string civil_date(double epoch_seconds) {
    using namespace std::chrono;
    const auto days = static_cast<long long>(std::floor(epoch_seconds / 86400.0));
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace

std::string to_string(TimestampFormat f) {
    switch (f) {
        case TimestampFormat::iso_datetime: return "iso_datetime";
        case TimestampFormat::epoch_seconds: return "epoch_seconds";
        case TimestampFormat::epoch_micros: return "epoch_micros";
    }
    return "unknown";
}

TimestampFormat parse_timestamp_format(const std::string& name) {
    for (auto f : {TimestampFormat::iso_datetime, TimestampFormat::epoch_seconds,
                   TimestampFormat::epoch_micros}) {
        if (to_string(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown timestamp format '" + name + "'");
}

std::string time_unit_of(TimestampFormat f) {
    return f == TimestampFormat::epoch_micros ? "microseconds" : "seconds";
}

std::optional<double> parse_iso_datetime(std::string_view text) {
    text = trim(text);
    if (!text.empty() && (text.back() == 'Z' || text.back() == 'z')) {
        text.remove_suffix(1);
    }
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        return std::nullopt;
    }
    const auto y = parse_int(text.substr(0, 4));
    const auto mo = parse_int(text.substr(5, 2));
    const auto d = parse_int(text.substr(8, 2));
    if (!y || !mo || !d) {
        return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{static_cast<int>(*y)}, month{static_cast<unsigned>(*mo)},
                             day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    const double day_seconds =
        static_cast<double>(sys_days{ymd}.time_since_epoch().count()) * 86400.0;
    if (text.size() == 10) {
        return day_seconds;
    }
    if ((text[10] != ' ' && text[10] != 'T') || text.size() < 19 || text[13] != ':' ||
        text[16] != ':') {
        return std::nullopt;
    }
    const auto hh = parse_int(text.substr(11, 2));
    const auto mm = parse_int(text.substr(14, 2));
    const auto ss = parse_int(text.substr(17, 2));
    if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 60 || *hh < 0 || *mm < 0 || *ss < 0) {
        return std::nullopt;
    }
    double frac = 0.0;
    if (text.size() > 19) {
        if (text[19] != '.') {
            return std::nullopt;
        }
        const std::string_view digits = text.substr(20);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                           [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
        const auto f = parse_number(std::string("0.") + std::string(digits));
        frac = f.value_or(0.0);
    }
    return day_seconds + static_cast<double>(*hh * 3600 + *mm * 60 + *ss) + frac;
}

std::vector<std::string> split_delimited(std::string_view line, char delimiter) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur.push_back('"');
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delimiter) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

InterArrivals interarrivals_from_timestamps(std::vector<double> timestamps, bool sort) {
    InterArrivals out;
    if (sort) {
        std::stable_sort(timestamps.begin(), timestamps.end());
    }
    if (!timestamps.empty()) {
        out.stats.t_start = timestamps.front();
        out.stats.t_end = timestamps.back();
    }
    for (std::size_t k = 1; k < timestamps.size(); ++k) {
        const double gap = timestamps[k] - timestamps[k - 1];
        ++out.stats.n_gaps;
        if (gap > 0.0) {
            out.gaps.push_back(gap);
        } else {
            ++out.stats.n_dropped_nonpositive;
        }
    }
    out.stats.n_valid = out.gaps.size();
    return out;
}

InterArrivals load_interarrivals(const TimestampSeriesSpec& spec) {
    std::ifstream in(spec.path);
    if (!in) {
        throw std::runtime_error("cannot open " + spec.path.string());
    }

    std::size_t col = 0;
    std::string line;
    if (spec.has_header) {
        if (!std::getline(in, line)) {
            throw ConfigError("file " + spec.path.string() + " is empty");
        }
        const auto names = split_delimited(line, spec.delimiter);
        if (const auto* name = std::get_if<std::string>(&spec.column)) {
            const auto it = std::find_if(names.begin(), names.end(), [&](const std::string& n) {
                return trim(n) == *name;
            });
            if (it == names.end()) {
                throw ConfigError("column '" + *name + "' not found in header");
            }
            col = static_cast<std::size_t>(it - names.begin());
        } else {
            col = std::get<std::size_t>(spec.column);
            if (col >= names.size()) {
                throw ConfigError("column index " + std::to_string(col) + " out of range");
            }
        }
    } else {
        if (std::holds_alternative<std::string>(spec.column)) {
            throw ConfigError("a named column requires a header row");
        }
        col = std::get<std::size_t>(spec.column);
    }

    std::vector<double> timestamps;
    std::size_t n_raw = 0;
    std::size_t n_bad = 0;
    std::size_t n_filtered = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        ++n_raw;
        const auto fields = split_delimited(line, spec.delimiter);
        std::optional<double> ts;
        if (col < fields.size()) {
            ts = spec.format == TimestampFormat::iso_datetime ? parse_iso_datetime(fields[col])
                                                              : parse_number(fields[col]);
        }
        if (!ts) {
            ++n_bad;
            continue;
        }
        if (spec.date_filter && civil_date(to_seconds(*ts, spec.format)) != *spec.date_filter) {
            ++n_filtered;
            continue;
        }
        timestamps.push_back(*ts);
    }

    if (n_raw == 0) {
        throw ConfigError("no data rows in " + spec.path.string());
    }
    if (static_cast<double>(n_bad) > spec.max_bad_fraction * static_cast<double>(n_raw)) {
        throw ConfigError("unparseable rows exceed tolerance: " + std::to_string(n_bad) + " of " +
                          std::to_string(n_raw));
    }
    if (timestamps.empty()) {
        throw ConfigError("no timestamps left after parsing and filtering");
    }

    InterArrivals out = interarrivals_from_timestamps(std::move(timestamps), spec.sort);
    out.stats.n_raw = n_raw;
    out.stats.n_unparseable = n_bad;
    out.stats.n_filtered_out = n_filtered;
    out.stats.time_unit = time_unit_of(spec.format);
    return out;
}

WindowSet make_windows(std::span<const double> gaps, std::size_t window_len, std::size_t stride,
                       const SourceStats& stats) {
    if (window_len < 3) {
        throw ConfigError("window_len must be at least 3");
    }
    if (stride < 1) {
        throw ConfigError("stride must be at least 1");
    }
    if (gaps.size() < window_len) {
        throw ConfigError("need at least window_len = " + std::to_string(window_len) +
                          " gaps, have " + std::to_string(gaps.size()));
    }
    for (double g : gaps) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw ConfigError("window input contains a non-positive or non-finite gap");
        }
    }
    WindowSet ws;
    ws.window_len = window_len;
    ws.stride = stride;
    ws.source_stats = stats;
    const std::size_t count = (gaps.size() - window_len) / stride + 1;
    ws.windows = Matrix(count, window_len);
    for (std::size_t w = 0; w < count; ++w) {
        const auto src = gaps.subspan(w * stride, window_len);
        std::copy(src.begin(), src.end(), ws.windows.row(w).begin());
    }
    return ws;
}

LabeledWindows label_windows_with_mom(const WindowSet& windows, const ClipPolicy& clip,
                                      unsigned threads) {
    const auto estimates = mom_estimate_windows(windows.windows, clip, threads);
    LabeledWindows out;
    out.summary = summarize(estimates);
    out.dataset.seq_len = windows.window_len;
    out.dataset.source = "ingest";
    out.dataset.time_unit = windows.source_stats.time_unit;
    for (std::size_t r = 0; r < estimates.size(); ++r) {
        if (!estimates[r].usable_as_label()) {
            ++out.n_excluded;
            continue;
        }
        out.kept_windows.push_back(r);
    }
    if (out.kept_windows.empty()) {
        throw ConfigError("no window produced a usable MOM label (" +
                          std::to_string(estimates.size()) + " windows, " +
                          std::to_string(out.n_excluded) + " excluded)");
    }
    out.dataset.windows = Matrix(out.kept_windows.size(), windows.window_len);
    out.dataset.labels = Matrix(out.kept_windows.size(), 2);
    for (std::size_t k = 0; k < out.kept_windows.size(); ++k) {
        const std::size_t r = out.kept_windows[k];
        const auto src = windows.windows.row(r);
        std::copy(src.begin(), src.end(), out.dataset.windows.row(k).begin());
        out.dataset.labels(k, 0) = estimates[r].mu_hat;
        out.dataset.labels(k, 1) = estimates[r].beta_hat;
    }
    return out;
}

std::string ingest_stats_json(const WindowSet& windows, const LabeledWindows& labeled) {
    const auto& s = windows.source_stats;
    nlohmann::json j{{"n_raw", s.n_raw},
                     {"n_unparseable", s.n_unparseable},
                     {"n_filtered_out", s.n_filtered_out},
                     {"n_gaps", s.n_gaps},
                     {"n_dropped_nonpositive", s.n_dropped_nonpositive},
                     {"n_valid", s.n_valid},
                     {"t_start", s.t_start},
                     {"t_end", s.t_end},
                     {"time_unit", s.time_unit},
                     {"window_len", windows.window_len},
                     {"stride", windows.stride},
                     {"n_windows", windows.windows.rows()},
                     {"n_labeled", labeled.kept_windows.size()},
                     {"n_excluded", labeled.n_excluded},
                     {"mom_valid", labeled.summary.n_valid},
                     {"mom_saturated", labeled.summary.n_saturated},
                     {"mom_invalid", labeled.summary.n_invalid}};
    return j.dump(2) + "\n";
}

}  // namespace fpp
