#pragma once

#include "fpp/fpp_sim.hpp"

#include <filesystem>
#include <string>

namespace fpp {

inline constexpr int kDatasetFormatVersion = 1;

/// Writes `<stem>.bin` and the JSON sidecar `<stem>.json`.
///
/// The payload is the window matrix followed by the label matrix, both
/// row-major IEEE-754 binary64 little-endian with no padding:
///   n_samples * seq_len doubles, then n_samples * 2 doubles (mu, beta).
/// The sidecar records n_samples, seq_len, ranges, seed, format_version,
/// payload file name and byte size.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& stem);

/// Accepts either the sidecar path or the stem.
[[nodiscard]] LabeledDataset load_dataset(const std::filesystem::path& path);

/// Writes `text` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fpp
