#pragma once

#include "fpp/errors.hpp"
#include "fpp/matrix.hpp"
#include "fpp/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fpp {

/// Smallest beta accepted by configuration validation.
inline constexpr double kMinBeta = 0.05;

/// Target pair of a fractional Poisson process: mu > 0, 0 < beta <= 1.
struct FppParams {
    double mu{1.0};
    double beta{1.0};

    /// Throws DomainError unless mu > 0 and beta in (0, 1].
    void validate() const;
    friend bool operator==(const FppParams&, const FppParams&) = default;
};

struct EventPath {
    std::vector<double> inter_arrivals;
    std::vector<double> event_times;
    std::optional<FppParams> params;
};

struct ParamRange {
    double lo{};
    double hi{};
    friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

struct DatasetSpec {
    std::size_t n_samples{100000};
    std::size_t seq_len{50};
    ParamRange mu_range{0.5, 5.0};
    ParamRange beta_range{0.1, 0.9};
    std::uint64_t seed{0};

    /// Throws ConfigError for degenerate ranges or sizes.
    void validate() const;
};

/// Windows (n x seq_len inter-arrivals) with their (mu, beta) labels.
struct LabeledDataset {
    Matrix windows;
    Matrix labels;  // columns: mu, beta
    std::size_t seq_len{0};
    std::uint64_t rng_seed{0};
    std::optional<DatasetSpec> spec;  // present for simulated data
    std::string source{"simulated"};
    std::string time_unit{"unit"};

    [[nodiscard]] std::size_t size() const noexcept { return windows.rows(); }
    /// Throws ConfigError when row counts differ or seq_len < 2.
    void validate() const;
    /// Rows selected by `indices`, in that order.
    [[nodiscard]] LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

/// One Mittag-Leffler inter-arrival time from three open-interval uniforms:
///   S = sin(b pi u2) sin((1-b) pi u2)^{1/b-1} / (sin(pi u2)^{1/b} |ln u3|^{1/b-1})
///   T = |ln u1|^{1/b} / mu^{1/b} * S
/// At beta = 1 this is exactly -ln(u1) / mu.
[[nodiscard]] double sample_interarrival(const FppParams& params, double u1, double u2, double u3);

/// Draws the three uniforms from `rng` and applies sample_interarrival.
[[nodiscard]] double draw_interarrival(const FppParams& params, Rng& rng);

[[nodiscard]] EventPath simulate_path(const FppParams& params, std::size_t n_events,
                                      std::uint64_t seed);

/// N(t) = number of renewal epochs in [0, t] for one freshly simulated path.
[[nodiscard]] std::size_t count_events(const FppParams& params, double t, Rng& rng);

/// Row r draws (mu, beta) and its inter-arrivals from stream derive_seed(seed, r),
/// so the result is identical for any `threads` value.
[[nodiscard]] LabeledDataset generate_dataset(const DatasetSpec& spec, unsigned threads = 1);

}  // namespace fpp
