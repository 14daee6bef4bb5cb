#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace fpp {

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of stream `stream` under root `seed`. Every consumer of randomness
/// (dataset row, epoch shuffle, weight init, CLI subcommand) takes its own
/// stream so results do not depend on evaluation order or thread count.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// Named stream tags so independent consumers never collide.
namespace streams {
inline constexpr std::uint64_t dataset_rows = 0x1000;
inline constexpr std::uint64_t dataset_labels = 0x2000;
inline constexpr std::uint64_t weight_init = 0x3000;
inline constexpr std::uint64_t split = 0x4000;
inline constexpr std::uint64_t epoch_shuffle = 0x5000;
inline constexpr std::uint64_t study_paths = 0x6000;
}  // namespace streams

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1): 53-bit grid, exact 0 rejected.
    /// 1 is unreachable because the largest value is 1 - 2^-53.
    double open_uniform() {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) {
                return u;
            }
        }
    }

    /// Uniform on [lo, hi].
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection removes modulo bias.
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        for (;;) {
            const std::uint64_t v = engine_();
            if (v < limit) {
                return v % n;
            }
        }
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng::below, portable across standard libraries.
template <typename T>
void portable_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace fpp
