#pragma once

#include "fpp/errors.hpp"
#include "fpp/fpp_sim.hpp"
#include "fpp/mom.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fpp {

enum class TimestampFormat { iso_datetime, epoch_seconds, epoch_micros };

[[nodiscard]] std::string to_string(TimestampFormat f);
[[nodiscard]] TimestampFormat parse_timestamp_format(const std::string& name);
/// "seconds" or "microseconds".
[[nodiscard]] std::string time_unit_of(TimestampFormat f);

struct TimestampSeriesSpec {
    std::filesystem::path path;
    std::variant<std::string, std::size_t> column{std::size_t{0}};  // header name or 0-based index
    TimestampFormat format{TimestampFormat::iso_datetime};
    char delimiter{','};
    bool has_header{true};
    bool sort{true};
    double max_bad_fraction{0.01};
    std::optional<std::string> date_filter;  // keep rows on this YYYY-MM-DD only
};

/// Counts satisfy n_raw = n_gaps + 1 + n_unparseable + n_filtered_out and
/// n_gaps = n_valid + n_dropped_nonpositive (when at least one row parsed).
struct SourceStats {
    std::size_t n_raw{};
    std::size_t n_unparseable{};
    std::size_t n_filtered_out{};
    std::size_t n_gaps{};
    std::size_t n_dropped_nonpositive{};
    std::size_t n_valid{};
    double t_start{};
    double t_end{};
    std::string time_unit{"seconds"};
};

struct InterArrivals {
    std::vector<double> gaps;
    SourceStats stats;
};

/// Naive "YYYY-MM-DD[ T]HH:MM:SS[.frac][Z]" or "YYYY-MM-DD" to seconds since
/// 1970-01-01 00:00:00; nullopt when the text is not a valid datetime.
[[nodiscard]] std::optional<double> parse_iso_datetime(std::string_view text);

/// Splits one delimited line, honouring double-quoted fields with "" escapes.
[[nodiscard]] std::vector<std::string> split_delimited(std::string_view line, char delimiter);

/// Consecutive differences of (optionally sorted) timestamps; non-positive gaps dropped and counted.
[[nodiscard]] InterArrivals interarrivals_from_timestamps(std::vector<double> timestamps, bool sort);

/// Throws ConfigError for an unknown column or when unparseable rows exceed
/// max_bad_fraction of the data rows; std::runtime_error when unreadable.
[[nodiscard]] InterArrivals load_interarrivals(const TimestampSeriesSpec& spec);

struct WindowSet {
    Matrix windows;
    std::size_t window_len{};
    std::size_t stride{1};
    SourceStats source_stats;
};

/// floor((n - window_len) / stride) + 1 windows starting at 0, stride, ...
/// Throws ConfigError for window_len < 3, stride < 1 or too few gaps.
[[nodiscard]] WindowSet make_windows(std::span<const double> gaps, std::size_t window_len,
                                     std::size_t stride = 1, const SourceStats& stats = {});

struct LabeledWindows {
    LabeledDataset dataset;
    std::vector<std::size_t> kept_windows;  // index into the WindowSet per dataset row
    MomSummary summary;
    std::size_t n_excluded{};
};

/// MOM numbers become labels; rows without usable numbers are excluded and
/// counted (clamped rows are kept). Throws ConfigError when no row survives.
[[nodiscard]] LabeledWindows label_windows_with_mom(const WindowSet& windows,
                                                    const ClipPolicy& clip = {},
                                                    unsigned threads = 1);

[[nodiscard]] std::string ingest_stats_json(const WindowSet& windows, const LabeledWindows& labeled);

}  // namespace fpp
