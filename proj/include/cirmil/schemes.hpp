#pragma once

// One-step maps for the normalized CIR SDE and the grid driver.
//
// A one-step rule maps (x, t, w) -> Theta(x, t, w) >= 0, with t in ]0, 1] the
// step size and w the Brownian increment over the step. Paths are
// Y_{n+1} = Theta(Y_n, 1/N, dW_n) with constant interpolation in between.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "core_model.hpp"
#include "rng.hpp"

namespace cirmil {

/// (sqrt(x) + w)^2.
inline double h(double x, double /*t*/, double w) noexcept
{
    const double r = std::sqrt(x) + w;
    return r * r;
}

/// (max(sqrt(t), sqrt(max(t, x)) + w))^2; always >= t.
inline double h_tilde(double x, double t, double w) noexcept
{
    const double r = std::max(std::sqrt(t), std::sqrt(std::max(t, x)) + w);
    return r * r;
}

/// Untruncated Milstein step. Can be negative unless b <= 0 and delta >= 1.
inline double phi_mil(const NormalizedParams& np, double x, double t, double w) noexcept
{
    return h(x, t, w) + (np.delta() - 1.0 - np.b() * x) * t;
}

enum class Truncation {
    positive_part,  // (.)^+
    absolute_value, // |.|, admissible alternative
};

/// Truncated Milstein step in the normalized (sigma = 2) form.
inline double theta_mil(const NormalizedParams& np, double x, double t, double w,
                        Truncation truncation = Truncation::positive_part) noexcept
{
    const double v = h_tilde(x, t, w) + (np.delta() - 1.0 - np.b() * x) * t;
    return truncation == Truncation::positive_part ? std::max(v, 0.0) : std::abs(v);
}

/// Truncated Milstein step written directly in the coefficients (a, b, sigma),
/// for a step size t in ]0, T]. Kept separate from the normalized path so the
/// scaling identities can be checked between two independent formulas.
inline double theta_mil(const CirParams& p, double x, double t, double w,
                        Truncation truncation = Truncation::positive_part) noexcept
{
    const double q = 0.25 * p.sigma() * p.sigma();
    const double floor_root = std::sqrt(q * t);
    const double r = std::max(floor_root, std::sqrt(std::max(q * t, x)) + 0.5 * p.sigma() * w);
    const double v = r * r + (p.a() - q - p.b() * x) * t;
    return truncation == Truncation::positive_part ? std::max(v, 0.0) : std::abs(v);
}

/// Euler-Maruyama step clipped at zero: (x + (delta - b x) t + 2 sqrt(x) w)^+.
inline double clipped_euler(const NormalizedParams& np, double x, double t, double w) noexcept
{
    return std::max(x + (np.delta() - np.b() * x) * t + 2.0 * std::sqrt(x) * w, 0.0);
}

// ---------------------------------------------------------------------------
// Rule objects

template <class R>
concept OneStepRule = requires(const R& r, double x) {
    { r.step(x, x, x) } -> std::convertible_to<double>;
    { r.name() } -> std::convertible_to<std::string_view>;
    { r.params() } -> std::convertible_to<NormalizedParams>;
};

class TruncatedMilstein {
public:
    explicit TruncatedMilstein(NormalizedParams np, Truncation truncation = Truncation::positive_part) noexcept
        : np_(np), truncation_(truncation)
    {
    }

    double step(double x, double t, double w) const noexcept { return theta_mil(np_, x, t, w, truncation_); }
    std::string_view name() const noexcept { return "truncated-milstein"; }
    const NormalizedParams& params() const noexcept { return np_; }
    Truncation truncation() const noexcept { return truncation_; }

    /// Values of w at which w -> step(x, t, w) is not differentiable.
    std::vector<double> kinks(double x, double t) const
    {
        const double base = std::sqrt(std::max(t, x));
        std::vector<double> out{std::sqrt(t) - base};
        const double c = np_.delta() - 1.0 - np_.b() * x;
        // h_tilde + c t crosses zero only when -c t > t.
        if (c < -1.0)
            out.push_back(std::sqrt(-c * t) - base);
        return out;
    }

private:
    NormalizedParams np_;
    Truncation truncation_;
};

class ClippedEuler {
public:
    explicit ClippedEuler(NormalizedParams np) noexcept : np_(np) {}

    double step(double x, double t, double w) const noexcept { return clipped_euler(np_, x, t, w); }
    std::string_view name() const noexcept { return "clipped-euler"; }
    const NormalizedParams& params() const noexcept { return np_; }

    std::vector<double> kinks(double x, double t) const
    {
        if (x <= 0.0)
            return {};
        return {-(x + (np_.delta() - np_.b() * x) * t) / (2.0 * std::sqrt(x))};
    }

private:
    NormalizedParams np_;
};

static_assert(OneStepRule<TruncatedMilstein>);
static_assert(OneStepRule<ClippedEuler>);

enum class Scheme {
    truncated_milstein,
    clipped_euler,
};

inline std::string_view scheme_name(Scheme s) noexcept
{
    return s == Scheme::truncated_milstein ? "truncated-milstein" : "clipped-euler";
}

inline Scheme parse_scheme(std::string_view name)
{
    if (name == "truncated-milstein")
        return Scheme::truncated_milstein;
    if (name == "clipped-euler")
        return Scheme::clipped_euler;
    throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

using AnyRule = std::variant<TruncatedMilstein, ClippedEuler>;

inline AnyRule make_rule(Scheme s, const NormalizedParams& np, Truncation truncation = Truncation::positive_part)
{
    if (s == Scheme::truncated_milstein)
        return TruncatedMilstein(np, truncation);
    return ClippedEuler(np);
}

// ---------------------------------------------------------------------------
// Grid driver

/// Scheme or oracle values at the nodes n T / N, constant on [n T/N, (n+1) T/N[.
struct GridPath {
    CirParams params;
    unsigned level;
    double x0;
    std::vector<double> values; // N + 1 entries

    std::size_t steps() const noexcept { return values.size() - 1; }

    double evaluate(double t) const
    {
        const double T = params.horizon();
        if (!(t >= 0.0 && t <= T))
            throw std::out_of_range("GridPath::evaluate: t outside [0, T]");
        const std::size_t n_steps = steps();
        if (t == T)
            return values.back();
        const auto cell = static_cast<std::size_t>(std::floor(t * static_cast<double>(n_steps) / T));
        return values[std::min(cell, n_steps)];
    }
};

inline double evaluate(const GridPath& path, double t) { return path.evaluate(t); }

/// Runs `rule` with step size t over the given increments, writing
/// increments.size() + 1 node values into `out` (out[0] = x0).
template <OneStepRule Rule>
inline void advance(const Rule& rule, double x0, double t, std::span<const double> increments, std::span<double> out) noexcept
{
    double x = x0;
    out[0] = x;
    for (std::size_t n = 0; n < increments.size(); ++n) {
        x = rule.step(x, t, increments[n]);
        out[n + 1] = x;
    }
}

/// Simulates on the grid of `g` for general (a, b, sigma, T). The path is
/// computed in normalized coordinates (sigma = 2, T = 1) and scaled back, so
/// each step size passed to the rule lies in ]0, 1].
inline GridPath simulate(Scheme scheme, const CirParams& p, double x0, const BrownianGrid& g,
                         Truncation truncation = Truncation::positive_part)
{
    if (!(x0 >= 0.0))
        throw std::invalid_argument("simulate: x0 must be nonnegative");
    if (g.horizon != p.horizon())
        throw std::invalid_argument("simulate: grid horizon does not match parameters");
    const TimeReduction tr = reduce_time(p);
    const SpaceReduction sr = reduce_space(tr.params, x0);
    const std::size_t n = g.steps();
    const double inv_sqrt_T = 1.0 / std::sqrt(tr.time_scale);
    std::vector<double> unit_increments(g.increments.size());
    for (std::size_t i = 0; i < n; ++i)
        unit_increments[i] = g.increments[i] * inv_sqrt_T;

    GridPath path{p, g.level, x0, std::vector<double>(n + 1)};
    const double step = 1.0 / static_cast<double>(n);
    std::visit([&](const auto& rule) { advance(rule, sr.x_hat, step, unit_increments, path.values); },
               make_rule(scheme, sr.params, truncation));
    for (auto& v : path.values)
        v *= sr.scale;
    path.values[0] = x0;
    return path;
}

} // namespace cirmil
