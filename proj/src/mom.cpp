#include "fpp/mom.hpp"

#include "fpp/parallel.hpp"
#include "fpp/special_fn.hpp"

#include <algorithm>
#include <cmath>

namespace fpp {

std::string to_string(MomStatus s) {
    switch (s) {
        case MomStatus::ok: return "ok";
        case MomStatus::saturated: return "saturated";
        case MomStatus::too_few: return "too_few";
        case MomStatus::nonpositive: return "nonpositive";
        case MomStatus::nonfinite: return "nonfinite";
        case MomStatus::degenerate: return "degenerate";
    }
    return "unknown";
}

MomEstimate mom_estimate(std::span<const double> inter_arrivals, const ClipPolicy& clip) {
    MomEstimate est;
    const double nan = std::nan("");
    est.mu_hat = nan;
    est.beta_hat = nan;
    est.beta_unclamped = nan;

    double sum = 0.0;
    double lo = HUGE_VAL;
    double hi = -HUGE_VAL;
    std::size_t n = 0;
    for (double t : inter_arrivals) {
        if (std::isnan(t) || std::isinf(t)) {
            est.status = MomStatus::nonfinite;
            return est;
        }
        if (t <= 0.0) {
            est.status = MomStatus::nonpositive;
            return est;
        }
        if (t < clip.t_min || t > clip.t_max) {
            continue;
        }
        const double l = std::log(t);
        sum += l;
        lo = std::min(lo, l);
        hi = std::max(hi, l);
        ++n;
    }
    est.n_used = n;
    if (n < std::max<std::size_t>(clip.min_points, 2)) {
        est.status = MomStatus::too_few;
        return est;
    }
    if (lo == hi) {
        est.status = MomStatus::degenerate;
        return est;
    }

    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double t : inter_arrivals) {
        if (t < clip.t_min || t > clip.t_max) {
            continue;
        }
        const double d = std::log(t) - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);

    const double beta_raw = kPi / std::sqrt(3.0 * var + kPi * kPi / 2.0);
    const double beta = std::clamp(beta_raw, clip.beta_lo, clip.beta_hi);
    const double mu = std::exp(-beta * (mean + kEulerGamma));

    est.beta_unclamped = beta_raw;
    est.beta_hat = beta;
    est.mu_hat = mu;
    if (!std::isfinite(mu) || !(mu > 0.0)) {
        est.status = MomStatus::nonfinite;
        return est;
    }
    est.status = (beta != beta_raw) ? MomStatus::saturated : MomStatus::ok;
    est.valid = est.status == MomStatus::ok;
    return est;
}

std::vector<MomEstimate> mom_estimate_windows(const Matrix& windows, const ClipPolicy& clip,
                                              unsigned threads) {
    std::vector<MomEstimate> out(windows.rows());
    parallel_for(windows.rows(), threads,
                 [&](std::size_t r) { out[r] = mom_estimate(windows.row(r), clip); });
    return out;
}

MomSummary summarize(std::span<const MomEstimate> estimates) {
    MomSummary s;
    s.n_total = estimates.size();
    for (const auto& e : estimates) {
        if (e.valid) {
            ++s.n_valid;
        } else if (e.status == MomStatus::saturated) {
            ++s.n_saturated;
        } else {
            ++s.n_invalid;
        }
    }
    return s;
}

}  // namespace fpp
