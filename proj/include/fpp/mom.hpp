#pragma once

#include "fpp/matrix.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fpp {

/// Numerical guards for the log-moment estimator.
struct ClipPolicy {
    double beta_lo{0.01};
    double beta_hi{1.0};
    double t_min{1e-12};  // values outside [t_min, t_max] are dropped before ln
    double t_max{1e12};
    std::size_t min_points{3};
};

enum class MomStatus {
    ok,
    saturated,    // beta clamp was active; numbers usable as labels, not for accuracy
    too_few,      // fewer than min_points values survived filtering
    nonpositive,  // a zero or negative inter-arrival
    nonfinite,    // NaN/inf in the input or the result
    degenerate,   // zero variance of ln T
};

[[nodiscard]] std::string to_string(MomStatus s);

struct MomEstimate {
    double mu_hat{};
    double beta_hat{};
    double beta_unclamped{};
    std::size_t n_used{};
    bool valid{false};
    MomStatus status{MomStatus::too_few};

    /// Finite numbers exist (ok or saturated).
    [[nodiscard]] bool usable_as_label() const noexcept {
        return status == MomStatus::ok || status == MomStatus::saturated;
    }
};

/// beta_hat = pi / sqrt(3 s^2 + pi^2 / 2) where s^2 is the unbiased sample
/// variance of ln T, and mu_hat = exp(-beta_hat (mean ln T + gamma_E)).
/// Never throws on bad data; the status field says what went wrong.
[[nodiscard]] MomEstimate mom_estimate(std::span<const double> inter_arrivals,
                                       const ClipPolicy& clip = {});

/// Row-wise mom_estimate; invalid rows stay in place with their status.
[[nodiscard]] std::vector<MomEstimate> mom_estimate_windows(const Matrix& windows,
                                                            const ClipPolicy& clip = {},
                                                            unsigned threads = 1);

struct MomSummary {
    std::size_t n_total{};
    std::size_t n_valid{};
    std::size_t n_saturated{};
    std::size_t n_invalid{};  // everything that is not usable as a label
};

[[nodiscard]] MomSummary summarize(std::span<const MomEstimate> estimates);

}  // namespace fpp
