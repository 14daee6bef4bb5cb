#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace fpp::testing {

/// Two-sided one-sample Kolmogorov-Smirnov statistic D_n.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

/// Asymptotic Kolmogorov survival function P(K > x).
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) {
        return 1.0;
    }
    double acc = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        acc += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-18) {
            break;
        }
    }
    return std::clamp(acc, 0.0, 1.0);
}

/// P-value of D_n with the Stephens small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d);
}

struct MeanSd {
    double mean{};
    double sd{};
    double se{};
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) {
        out.mean += x;
    }
    out.mean /= n;
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - out.mean) * (x - out.mean);
    }
    out.sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out.se = out.sd / std::sqrt(n);
    return out;
}

/// Standard error of the sample variance, sqrt((m4 - s^4) / n).
inline double variance_se(const std::vector<double>& xs) {
    const MeanSd ms = mean_sd(xs);
    double m4 = 0.0;
    for (double x : xs) {
        const double d = x - ms.mean;
        m4 += d * d * d * d;
    }
    m4 /= static_cast<double>(xs.size());
    const double s2 = ms.sd * ms.sd;
    return std::sqrt(std::max(0.0, m4 - s2 * s2) / static_cast<double>(xs.size()));
}

}  // namespace fpp::testing
