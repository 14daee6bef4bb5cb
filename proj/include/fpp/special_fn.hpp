#pragma once

#include "fpp/errors.hpp"

#include <cstddef>
#include <string>

namespace fpp {

inline constexpr double kEulerGamma = 0.57721566490153286061;
inline constexpr double kPi = 3.14159265358979323846;

// Lanczos approximation (g = 7, 9 coefficients), reflection below 1/2.
[[nodiscard]] double log_gamma(double x);
[[nodiscard]] double gamma_fn(double x);
[[nodiscard]] double beta_fn(double a, double b);

enum class MittagLefflerMethod { series, integral, exponential };

struct MittagLefflerOptions {
    double tol{1e-15};
    std::size_t max_terms{10000};
    // Series results whose estimated relative rounding error exceeds this
    // bound are flagged as precision-lost.
    double max_rounding_error{1e-10};
};

struct MittagLefflerEval {
    double a{};
    double b{};
    double z{};
    double value{};
    std::size_t terms_used{};
    bool converged{false};
    // Estimated relative error from cancellation in an alternating series.
    double rounding_error{};
    MittagLefflerMethod method{MittagLefflerMethod::series};
};

/// Partial sums of z^n / Gamma(a n + b) with compensated accumulation.
/// `converged` is false when the term cap is hit or when cancellation has
/// eaten the requested accuracy; the value is still returned for inspection.
[[nodiscard]] MittagLefflerEval mittag_leffler_series(double a, double b, double z,
                                                      const MittagLefflerOptions& opts = {});

/// Two-parameter Mittag-Leffler function on the real line.
///
/// Uses the power series when it is numerically reliable. For z < 0 with
/// 0 < a < 1 and b in {1, a} the completely monotone integral representation
///   E_a(-t^a)           = int_0^inf exp(-r t) K_a(r) dr
///   t^{a-1} E_{a,a}(-t^a) = int_0^inf r exp(-r t) K_a(r) dr
/// with K_a(r) = sin(a pi) r^{a-1} / (pi (r^{2a} + 2 r^a cos(a pi) + 1)) takes
/// over; a = b = 1 is exp(z). Throws ConvergenceError when no route can
/// deliver the value.
[[nodiscard]] MittagLefflerEval mittag_leffler(double a, double b, double z,
                                               const MittagLefflerOptions& opts = {});

/// P(T <= x) = 1 - M_beta(-mu x^beta).
[[nodiscard]] double ml_cdf(double beta, double mu, double x);

/// P(T > x) = M_beta(-mu x^beta), computed without the 1 - F cancellation.
[[nodiscard]] double ml_survival(double beta, double mu, double x);

/// f(x) = mu x^{beta-1} M_{beta,beta}(-mu x^beta). x = 0 is a domain error
/// for beta < 1 (integrable singularity) and gives mu for beta = 1.
[[nodiscard]] double ml_pdf(double beta, double mu, double x);

struct FppMoments {
    double mean{};
    double variance{};
    double q{};
    double t{};
    double beta{};
};

[[nodiscard]] double fpp_mean(double mu, double beta, double t);

/// Var N(t) = q t^b (1 + q t^b [b B(b, 1/2) 2^{1-2b} - 1]), q = mu / Gamma(1 + b).
[[nodiscard]] double fpp_variance(double mu, double beta, double t);

[[nodiscard]] FppMoments fpp_moments(double mu, double beta, double t);

[[nodiscard]] std::string to_string(MittagLefflerMethod m);

}  // namespace fpp
