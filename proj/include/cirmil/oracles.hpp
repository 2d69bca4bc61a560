#pragma once

// Exact references: the pathwise solution for delta = 1, b = 0 (sigma = 2),
// the law of X at x = 0, and closed-form Gaussian expectations.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "core_model.hpp"
#include "rng.hpp"
#include "schemes.hpp"

namespace cirmil {

inline double normal_pdf(double x) noexcept
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF through erfc, accurate in both tails.
inline double normal_cdf(double x) noexcept
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Value of the one-dimensional squared Bessel process
///   X^x_t = (W_t + sqrt(x) - min(0, m_t + sqrt(x)))^2
/// given W_t and the running minimum m_t = inf_{s <= t} W_s.
inline double bessel1_value(double sqrt_x0, double w, double running_min) noexcept
{
    const double r = w + sqrt_x0 - std::min(0.0, running_min + sqrt_x0);
    return r * r;
}

/// Brownian value and exact running minimum, advanced cell by cell.
struct BesselPathState {
    double w = 0.0;
    double m = 0.0;
    double sqrt_x0 = 0.0;

    explicit BesselPathState(double x0) : sqrt_x0(std::sqrt(x0)) {}

    /// Moves across a cell of length `duration` with Brownian increment `dw`,
    /// sampling the cell minimum from the bridge law.
    void advance(double dw, double duration, Stream& bridge_stream) noexcept
    {
        const double next = w + dw;
        m = std::min(m, bridge_minimum(bridge_stream, w, next, duration));
        w = next;
    }

    double value() const noexcept { return bessel1_value(sqrt_x0, w, m); }
};

/// Exact delta = 1, b = 0, sigma = 2 solution at the nodes of `g`, coupled to
/// the same increments. `bridge_stream` supplies one uniform per cell.
inline GridPath exact_bessel1_path(double x0, const BrownianGrid& g, Stream& bridge_stream)
{
    if (!(x0 >= 0.0))
        throw std::invalid_argument("exact_bessel1_path: x0 must be nonnegative");
    GridPath path{CirParams(1.0, 0.0, 2.0, g.horizon), g.level, x0, std::vector<double>(g.steps() + 1)};
    BesselPathState state(x0);
    path.values[0] = x0;
    const double h = g.step_size();
    for (std::size_t n = 0; n < g.steps(); ++n) {
        state.advance(g.increments[n], h, bridge_stream);
        path.values[n + 1] = state.value();
    }
    return path;
}

/// Draw from the law of X^0_t: psi(t) * chi^2_delta.
inline double marginal_sample_x0(const NormalizedParams& np, double t, Stream& stream)
{
    if (t == 0.0)
        return 0.0;
    return psi(np.b(), t) * stream.chi_square(np.delta());
}

/// f(x) = E[(max(1, x + Z))^2] = 1 + (1 + x) phi(1 - x) + x^2 Phi(x - 1).
inline double f_closed(double x) noexcept
{
    return 1.0 + (1.0 + x) * normal_pdf(1.0 - x) + x * x * normal_cdf(x - 1.0);
}

/// g(x) = f(sqrt(x)).
inline double g_of(double x) noexcept { return f_closed(std::sqrt(x)); }

/// g'(x) = phi(sqrt(x) - 1) / sqrt(x) + Phi(sqrt(x) - 1).
inline double g_prime(double x) noexcept
{
    const double r = std::sqrt(x);
    return normal_pdf(r - 1.0) / r + normal_cdf(r - 1.0);
}

} // namespace cirmil
