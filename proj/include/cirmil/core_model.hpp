#pragma once

// Parameter containers and exact scalar formulas for the CIR process
//
//   dX_t = (a - b X_t) dt + sigma sqrt(X_t) dW_t,   X_0 = x >= 0,
//
// together with its normalized form (sigma = 2, T = 1)
//
//   dX_t = (delta - b X_t) dt + 2 sqrt(X_t) dW_t,   delta = 4a / sigma^2.

#include <cmath>
#include <stdexcept>
#include <string>

namespace cirmil {

/// SDE coefficients (a, b, sigma) and the simulation horizon T.
/// Validated on construction: a > 0, sigma > 0, T > 0, b finite.
class CirParams {
public:
    CirParams(double a, double b, double sigma, double horizon = 1.0)
        : a_(a), b_(b), sigma_(sigma), horizon_(horizon)
    {
        if (!(a > 0.0) || !std::isfinite(a))
            throw std::invalid_argument("CirParams: a must be positive and finite, got " + std::to_string(a));
        if (!std::isfinite(b))
            throw std::invalid_argument("CirParams: b must be finite");
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw std::invalid_argument("CirParams: sigma must be positive and finite, got " + std::to_string(sigma));
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw std::invalid_argument("CirParams: T must be positive and finite, got " + std::to_string(horizon));
    }

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    double sigma() const noexcept { return sigma_; }
    double horizon() const noexcept { return horizon_; }

    /// Dimension 4a / sigma^2.
    double delta() const noexcept { return 4.0 * a_ / (sigma_ * sigma_); }

    friend bool operator==(const CirParams&, const CirParams&) = default;

private:
    double a_;
    double b_;
    double sigma_;
    double horizon_;
};

/// Reduced SDE with sigma = 2 on the unit interval, described by (delta, b).
class NormalizedParams {
public:
    NormalizedParams(double delta, double b) : delta_(delta), b_(b)
    {
        if (!(delta > 0.0) || !std::isfinite(delta))
            throw std::invalid_argument("NormalizedParams: delta must be positive and finite, got " + std::to_string(delta));
        if (!std::isfinite(b))
            throw std::invalid_argument("NormalizedParams: b must be finite");
    }

    double delta() const noexcept { return delta_; }
    double b() const noexcept { return b_; }

    friend bool operator==(const NormalizedParams&, const NormalizedParams&) = default;

private:
    double delta_;
    double b_;
};

inline double delta_of(const CirParams& p) noexcept { return p.delta(); }

/// Result of the sigma -> 2 reduction: X^x_t = scale * Xhat^{x_hat}_t pathwise.
struct SpaceReduction {
    NormalizedParams params;
    double horizon;
    double x_hat;
    double scale;
};

inline SpaceReduction reduce_space(const CirParams& p, double x)
{
    const double scale = 0.25 * p.sigma() * p.sigma();
    return {NormalizedParams(p.delta(), p.b()), p.horizon(), x / scale, scale};
}

/// Inverse of reduce_space on the parameter level.
inline CirParams expand_space(const NormalizedParams& np, double sigma, double horizon)
{
    return CirParams(0.25 * np.delta() * sigma * sigma, np.b(), sigma, horizon);
}

/// Result of the T -> 1 reduction. Callers map increments w -> w / sqrt(T)
/// and times t -> t / T.
struct TimeReduction {
    CirParams params;
    double time_scale;
};

inline TimeReduction reduce_time(const CirParams& p)
{
    const double T = p.horizon();
    return {CirParams(T * p.a(), T * p.b(), std::sqrt(T) * p.sigma(), 1.0), T};
}

/// Inverse of reduce_time.
inline CirParams expand_time(const CirParams& unit, double time_scale)
{
    return CirParams(unit.a() / time_scale, unit.b() / time_scale, unit.sigma() / std::sqrt(time_scale), time_scale);
}

/// (1 - exp(-b t)) / b, continuously extended by t at b = 0.
inline double psi(double b, double t) noexcept
{
    if (b == 0.0)
        return t;
    return -std::expm1(-b * t) / b;
}

/// E[X^x_t] for the normalized SDE.
inline double exact_mean(const NormalizedParams& np, double x, double t) noexcept
{
    return x * std::exp(-np.b() * t) + np.delta() * psi(np.b(), t);
}

/// E[X^x_t] for general (a, b, sigma); the a * psi term is the sigma^2/4 * delta * psi
/// term of the normalized formula mapped back.
inline double exact_mean(const CirParams& p, double x, double t) noexcept
{
    return x * std::exp(-p.b() * t) + p.a() * psi(p.b(), t);
}

/// Local error weight of a Milstein-type step, for x >= 0 and t in ]0, 1].
inline double delta_loc(double x, double t) noexcept
{
    if (x <= t)
        return t;
    const double t32 = t * std::sqrt(t);
    if (x <= 1.0)
        return t32 / std::sqrt(x);
    return t32 * x;
}

} // namespace cirmil
