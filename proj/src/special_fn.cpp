#include "fpp/special_fn.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace fpp {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
constexpr double kHalfLogTwoPi = 0.91893853320467274178;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double lanczos_sum(double xm1) {
    double acc = kLanczos[0];
    for (std::size_t i = 1; i < kLanczos.size(); ++i) {
        acc += kLanczos[i] / (xm1 + static_cast<double>(i));
    }
    return acc;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be finite");
    }
}

void require_ml_params(double beta, double mu) {
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw DomainError("beta must lie in (0, 1]");
    }
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw DomainError("mu must be positive and finite");
    }
}

// Neumaier variant of Kahan summation.
struct CompensatedSum {
    double sum{0.0};
    double carry{0.0};

    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    [[nodiscard]] double value() const { return sum + carry; }
};

// Integrand pieces in s = ln r. `weight` is sin(a pi)/pi * u / (u^2 + 2cu + 1)
// with u = exp(a s), written to stay finite for large |a s|.
double kernel_in_log(double a, double cos_api, double sin_api_over_pi, double s) {
    const double as = a * s;
    if (as > 0.0) {
        const double inv = std::exp(-as);
        return sin_api_over_pi * inv / (1.0 + 2.0 * cos_api * inv + inv * inv);
    }
    const double u = std::exp(as);
    return sin_api_over_pi * u / (1.0 + 2.0 * cos_api * u + u * u);
}

// int_0^inf r^power exp(-r t) K_a(r) dr for power in {0, 1}.
double laplace_kernel_integral(double a, double t, int power) {
    const double cos_api = std::cos(a * kPi);
    const double sin_api_over_pi = std::sin(a * kPi) / kPi;

    const double lo = std::log(1e-18 * a * kPi) / a;
    // exp(-60) is far below double resolution of any value reached here.
    double hi = std::log(60.0 / t);
    if (power == 0) {
        hi = std::min(hi, std::log(1e18 / (a * kPi)) / a);
    }
    hi = std::max(hi, lo + 1.0);

    std::vector<double> cuts{lo, hi, -std::log(t)};
    if (cos_api < 0.0) {
        cuts.push_back(std::log(-cos_api) / a);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::remove_if(cuts.begin(), cuts.end(),
                              [&](double c) { return c < lo || c > hi; }),
               cuts.end());

    auto integrand = [&](double s) {
        const double r_t = t * std::exp(s);
        double v = std::exp(-r_t) * kernel_in_log(a, cos_api, sin_api_over_pi, s);
        if (power == 1) {
            v *= std::exp(s);
        }
        return v;
    };

    // Each segment is mapped onto [-1, 1] here: Boost compares its unscaled
    // error estimate against a scaled tolerance, which never terminates on
    // narrow intervals.
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        const double half = 0.5 * (cuts[i + 1] - cuts[i]);
        auto mapped = [&](double x) { return half * integrand(mid + half * x); };
        double err = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            mapped, -1.0, 1.0, 20, 1e-13, &err);
    }
    return total;
}

}  // namespace

double log_gamma(double x) {
    require_finite(x, "log_gamma argument");
    if (x <= 0.0) {
        throw DomainError("log_gamma requires x > 0");
    }
    if (x < 0.5) {
        return std::log(kPi / std::sin(kPi * x)) - log_gamma(1.0 - x);
    }
    const double xm1 = x - 1.0;
    const double t = xm1 + kLanczosG + 0.5;
    return kHalfLogTwoPi + (xm1 + 0.5) * std::log(t) - t + std::log(lanczos_sum(xm1));
}

double gamma_fn(double x) {
    require_finite(x, "gamma argument");
    if (x <= 0.0 && x == std::floor(x)) {
        throw DomainError("gamma has poles at non-positive integers");
    }
    if (x < 0.5) {
        return kPi / (std::sin(kPi * x) * gamma_fn(1.0 - x));
    }
    if (x > 171.6) {
        return std::numeric_limits<double>::infinity();
    }
    if (x == std::floor(x) && x <= 30.0) {
        double f = 1.0;
        for (double k = 2.0; k < x; k += 1.0) {
            f *= k;
        }
        return f;
    }
    const double xm1 = x - 1.0;
    const double t = xm1 + kLanczosG + 0.5;
    // Split the power so t^(x-1/2) does not overflow before exp(-t) applies.
    const double half_pow = std::pow(t, 0.5 * (xm1 + 0.5));
    return std::sqrt(2.0 * kPi) * half_pow * (half_pow * std::exp(-t)) * lanczos_sum(xm1);
}

double beta_fn(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw DomainError("beta function requires positive arguments");
    }
    return std::exp(log_gamma(a) + log_gamma(b) - log_gamma(a + b));
}

namespace {

// Stops early once the accumulated rounding error exceeds `abandon_error`.
MittagLefflerEval series_impl(double a, double b, double z, const MittagLefflerOptions& opts,
                              double abandon_error) {
    require_finite(z, "Mittag-Leffler argument");
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("Mittag-Leffler indices must be positive");
    }
    if (!(opts.tol > 0.0)) {
        throw DomainError("tolerance must be positive");
    }

    MittagLefflerEval out{a, b, z};
    out.method = MittagLefflerMethod::series;
    if (z == 0.0) {
        out.value = 1.0 / gamma_fn(b);
        out.terms_used = 1;
        out.converged = true;
        return out;
    }

    const double log_abs_z = std::log(std::abs(z));
    CompensatedSum sum;
    double abs_error = 0.0;
    double prev_log_term = std::numeric_limits<double>::infinity();
    bool tail_small = false;

    std::size_t n = 0;
    for (; n < opts.max_terms; ++n) {
        const double nn = static_cast<double>(n);
        const double arg = a * nn + b;
        const double lg = log_gamma(arg);
        const double log_term = nn * log_abs_z - lg;
        double magnitude = 0.0;
        if (arg < 170.0 && std::abs(nn * log_abs_z) < 700.0) {
            magnitude = std::pow(std::abs(z), nn) / gamma_fn(arg);
            abs_error += magnitude * kEps * 4.0;
        } else {
            // Log-space term: the exponent's absolute error becomes a
            // relative error on the term.
            magnitude = std::exp(log_term);
            abs_error += magnitude * kEps * (2.0 + std::abs(nn * log_abs_z) + std::abs(lg));
        }
        const double term = (z < 0.0 && (n % 2 == 1)) ? -magnitude : magnitude;
        sum.add(term);

        if (abs_error > abandon_error) {
            ++n;
            break;
        }
        const bool decreasing = log_term < prev_log_term;
        prev_log_term = log_term;
        if (decreasing && magnitude <= opts.tol * std::abs(sum.value())) {
            tail_small = true;
            ++n;
            break;
        }
        if (magnitude == 0.0 && decreasing) {
            tail_small = true;
            ++n;
            break;
        }
    }

    out.terms_used = n;
    out.value = sum.value();
    out.rounding_error = out.value != 0.0 ? abs_error / std::abs(out.value)
                                          : std::numeric_limits<double>::infinity();
    out.converged = tail_small && out.rounding_error <= opts.max_rounding_error;
    return out;
}

}  // namespace

MittagLefflerEval mittag_leffler_series(double a, double b, double z,
                                        const MittagLefflerOptions& opts) {
    return series_impl(a, b, z, opts, std::numeric_limits<double>::infinity());
}

MittagLefflerEval mittag_leffler(double a, double b, double z, const MittagLefflerOptions& opts) {
    const bool integral_applies = z < 0.0 && a < 1.0 && (b == 1.0 || b == a);
    // For z < 0 these values are bounded by 1 / Gamma(b), so a larger error
    // bound can never meet the rounding budget.
    const double abandon = integral_applies
                               ? 2.0 * opts.max_rounding_error / gamma_fn(b)
                               : std::numeric_limits<double>::infinity();
    MittagLefflerEval series = series_impl(a, b, z, opts, abandon);
    if (series.converged) {
        return series;
    }

    MittagLefflerEval out{a, b, z};
    out.converged = true;
    out.terms_used = series.terms_used;
    if (z < 0.0 && a == 1.0 && b == 1.0) {
        out.method = MittagLefflerMethod::exponential;
        out.value = std::exp(z);
        return out;
    }
    if (integral_applies) {
        out.method = MittagLefflerMethod::integral;
        const double t = std::pow(-z, 1.0 / a);
        if (b == 1.0) {
            out.value = laplace_kernel_integral(a, t, 0);
        } else {
            out.value = std::pow(t, 1.0 - a) * laplace_kernel_integral(a, t, 1);
        }
        return out;
    }
    throw ConvergenceError("Mittag-Leffler series did not converge for a=" + std::to_string(a) +
                           ", b=" + std::to_string(b) + ", z=" + std::to_string(z) +
                           " and no alternative representation applies");
}

double ml_survival(double beta, double mu, double x) {
    require_ml_params(beta, mu);
    require_finite(x, "x");
    if (x < 0.0) {
        throw DomainError("x must be non-negative");
    }
    if (x == 0.0) {
        return 1.0;
    }
    if (beta == 1.0) {
        return std::exp(-mu * x);
    }
    return mittag_leffler(beta, 1.0, -mu * std::pow(x, beta)).value;
}

double ml_cdf(double beta, double mu, double x) {
    return 1.0 - ml_survival(beta, mu, x);
}

double ml_pdf(double beta, double mu, double x) {
    require_ml_params(beta, mu);
    require_finite(x, "x");
    if (x < 0.0) {
        throw DomainError("x must be non-negative");
    }
    if (beta == 1.0) {
        return mu * std::exp(-mu * x);
    }
    if (x == 0.0) {
        throw DomainError("Mittag-Leffler density is singular at x = 0 for beta < 1");
    }
    const double xb = std::pow(x, beta);
    return mu * (xb / x) * mittag_leffler(beta, beta, -mu * xb).value;
}

double fpp_mean(double mu, double beta, double t) {
    require_ml_params(beta, mu);
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw DomainError("t must be non-negative and finite");
    }
    const double q = mu / gamma_fn(1.0 + beta);
    return q * std::pow(t, beta);
}

double fpp_variance(double mu, double beta, double t) {
    const double m = fpp_mean(mu, beta, t);
    const double bracket =
        beta * beta_fn(beta, 0.5) * std::pow(2.0, 1.0 - 2.0 * beta) - 1.0;
    return m * (1.0 + m * bracket);
}

FppMoments fpp_moments(double mu, double beta, double t) {
    return FppMoments{fpp_mean(mu, beta, t), fpp_variance(mu, beta, t),
                      mu / gamma_fn(1.0 + beta), t, beta};
}

std::string to_string(MittagLefflerMethod m) {
    switch (m) {
        case MittagLefflerMethod::series: return "series";
        case MittagLefflerMethod::integral: return "integral";
        case MittagLefflerMethod::exponential: return "exponential";
    }
    return "unknown";
}

}  // namespace fpp
