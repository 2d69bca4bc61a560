#pragma once

// Monte Carlo estimators of strong errors, convergence-rate regression and
// executable checks of the one-step assumptions:
//   (A1) L1-Lipschitz continuity in the initial value,
//   (A2) Milstein-type local error bounded by delta_loc,
//   (A3) uniformly bounded moments.
//
// All estimators are deterministic in (seed, configuration); replications are
// processed in fixed blocks and reduced in block order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core_model.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "schemes.hpp"

namespace cirmil {

enum class Criterion {
    vs_oracle,
    consecutive_difference,
};

inline std::string_view criterion_name(Criterion c) noexcept
{
    return c == Criterion::vs_oracle ? "vs-oracle" : "consecutive-difference";
}

/// Time set over which the sup in the error criterion is taken.
inline constexpr std::string_view kEvalPolicy = "coarse-grid nodes including t=T";

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

struct LevelError {
    std::size_t steps = 0;  // N
    double error = 0.0;     // sup_t (E|.|^p)^(1/p)
    double std_error = 0.0; // delta-method stderr at the maximizing time
    double sup_time = 0.0;  // maximizing node time in [0, T]
};

struct ErrorCurve {
    double p = 1.0;
    std::vector<LevelError> levels;
    std::size_t replications = 0;
    Criterion criterion = Criterion::vs_oracle;
    std::string_view eval_policy = kEvalPolicy;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_max = 0.0;
    std::vector<double> levels_used;
};

struct CurveRequest {
    Scheme scheme = Scheme::truncated_milstein;
    unsigned level_lo = 4;
    unsigned level_hi = 12;
    std::vector<double> p_values{1.0};
    std::size_t replications = 10000;
    std::uint64_t seed = 0;
    Truncation truncation = Truncation::positive_part;
};

namespace detail {

inline double pow_p(double d, double p) noexcept
{
    if (p == 1.0)
        return d;
    if (p == 2.0)
        return d * d;
    return std::pow(d, p);
}

/// Per-node sums of |D|^p and |D|^(2p), one row per (p, level).
struct NodeMoments {
    std::vector<std::vector<double>> s1;
    std::vector<std::vector<double>> s2;

    void init(std::size_t rows, const std::vector<std::size_t>& sizes)
    {
        s1.assign(rows, {});
        s2.assign(rows, {});
        for (std::size_t r = 0; r < rows; ++r) {
            s1[r].assign(sizes[r], 0.0);
            s2[r].assign(sizes[r], 0.0);
        }
    }

    void add(std::size_t row, std::size_t node, double v) noexcept
    {
        s1[row][node] += v;
        s2[row][node] += v * v;
    }

    void merge(const NodeMoments& o)
    {
        for (std::size_t r = 0; r < s1.size(); ++r)
            for (std::size_t i = 0; i < s1[r].size(); ++i) {
                s1[r][i] += o.s1[r][i];
                s2[r][i] += o.s2[r][i];
            }
    }
};

/// Sup over nodes of the mean of |D|^p, returned as an L_p error with a
/// delta-method standard error at the maximizing node.
inline LevelError sup_statistic(const std::vector<double>& s1, const std::vector<double>& s2, double p,
                                std::size_t n_reps, double scale)
{
    const double n = static_cast<double>(n_reps);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s1.size(); ++i)
        if (s1[i] > s1[best])
            best = i;
    const double mean = s1[best] / n;
    LevelError out;
    out.steps = s1.size() - 1;
    out.sup_time = static_cast<double>(best) / static_cast<double>(out.steps);
    if (mean <= 0.0)
        return out;
    const double var = n_reps > 1 ? std::max(0.0, (s2[best] / n - mean * mean) * n / (n - 1.0)) : 0.0;
    const double se_mean = std::sqrt(var / n);
    out.error = scale * std::pow(mean, 1.0 / p);
    out.std_error = scale * (1.0 / p) * std::pow(mean, 1.0 / p - 1.0) * se_mean;
    return out;
}

struct UnitProblem {
    NormalizedParams np;
    double x_hat;
    double scale;
    double horizon;
};

/// Normalizes to sigma = 2 on [0, 1]. Errors computed there scale by `scale`.
inline UnitProblem to_unit(const CirParams& p, double x0)
{
    if (!(x0 >= 0.0))
        throw std::invalid_argument("x0 must be nonnegative");
    const TimeReduction tr = reduce_time(p);
    const SpaceReduction sr = reduce_space(tr.params, x0);
    return {sr.params, sr.x_hat, sr.scale, p.horizon()};
}

inline void check_request(const CurveRequest& req)
{
    if (req.level_lo > req.level_hi)
        throw std::invalid_argument("level range is empty");
    if (req.level_hi >= 26)
        throw std::invalid_argument("level range too large");
    if (req.p_values.empty())
        throw std::invalid_argument("at least one p value is required");
    for (double p : req.p_values)
        if (!(p >= 1.0) || !std::isfinite(p))
            throw std::invalid_argument("p must be >= 1");
    if (req.replications < 2)
        throw std::invalid_argument("at least two replications are required");
}

inline std::vector<ErrorCurve> finish_curves(const NodeMoments& total, const CurveRequest& req, Criterion criterion,
                                             double scale, double horizon)
{
    const std::size_t n_levels = req.level_hi - req.level_lo + 1;
    std::vector<ErrorCurve> curves;
    for (std::size_t ip = 0; ip < req.p_values.size(); ++ip) {
        ErrorCurve c;
        c.p = req.p_values[ip];
        c.replications = req.replications;
        c.criterion = criterion;
        for (std::size_t il = 0; il < n_levels; ++il) {
            const std::size_t row = ip * n_levels + il;
            LevelError e = sup_statistic(total.s1[row], total.s2[row], c.p, req.replications, scale);
            e.sup_time *= horizon;
            c.levels.push_back(e);
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

inline std::vector<std::size_t> row_sizes(const CurveRequest& req)
{
    std::vector<std::size_t> sizes;
    for (std::size_t ip = 0; ip < req.p_values.size(); ++ip)
        for (unsigned l = req.level_lo; l <= req.level_hi; ++l)
            sizes.push_back((std::size_t{1} << l) + 1);
    return sizes;
}

/// Unit-horizon Brownian increments at `level` for replication `rep`.
inline void unit_increments(Stream& s, unsigned level, std::vector<double>& out)
{
    const std::size_t n = std::size_t{1} << level;
    out.resize(n);
    const double sd = std::sqrt(1.0 / static_cast<double>(n));
    for (auto& dw : out)
        dw = sd * s.gaussian();
}

} // namespace detail

/// Error of the scheme against the exact squared Bessel path (delta = 1,
/// b = 0) for every level in the request, one curve per p. All levels of a
/// replication share one Brownian path and one set of bridge minima.
inline std::vector<ErrorCurve> oracle_error_curves(const CirParams& params, double x0, const CurveRequest& req,
                                                   const Executor& exec = {})
{
    detail::check_request(req);
    if (std::abs(params.delta() - 1.0) > 1e-12 || params.b() != 0.0)
        throw std::invalid_argument("oracle comparison requires delta = 1 and b = 0");
    const detail::UnitProblem unit = detail::to_unit(params, x0);
    const std::size_t n_levels = req.level_hi - req.level_lo + 1;
    const std::vector<std::size_t> sizes = detail::row_sizes(req);
    const AnyRule any_rule = make_rule(req.scheme, unit.np, req.truncation);

    auto block = [&](BlockRange range) {
        detail::NodeMoments acc;
        acc.init(sizes.size(), sizes);
        std::vector<double> fine;
        std::vector<double> oracle;
        std::vector<std::vector<double>> incr(req.level_hi + 1);
        std::vector<double> path;
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream grid_stream(req.seed, rep, Lane::brownian);
            Stream bridge_stream(req.seed, rep, Lane::bridge);
            detail::unit_increments(grid_stream, req.level_hi, incr[req.level_hi]);
            const std::vector<double>& finest = incr[req.level_hi];
            const std::size_t n_fine = finest.size();
            oracle.resize(n_fine + 1);
            BesselPathState state(unit.x_hat);
            oracle[0] = unit.x_hat;
            const double h_fine = 1.0 / static_cast<double>(n_fine);
            for (std::size_t n = 0; n < n_fine; ++n) {
                state.advance(finest[n], h_fine, bridge_stream);
                oracle[n + 1] = state.value();
            }
            for (unsigned l = req.level_hi; l > req.level_lo; --l) {
                incr[l - 1].resize(incr[l].size() / 2);
                coarsen_into(incr[l], incr[l - 1]);
            }
            for (std::size_t il = 0; il < n_levels; ++il) {
                const unsigned l = req.level_lo + static_cast<unsigned>(il);
                const std::size_t n = std::size_t{1} << l;
                const std::size_t stride = std::size_t{1} << (req.level_hi - l);
                path.resize(n + 1);
                std::visit([&](const auto& rule) { advance(rule, unit.x_hat, 1.0 / static_cast<double>(n), incr[l], path); },
                           any_rule);
                for (std::size_t k = 0; k <= n; ++k) {
                    const double d = std::abs(oracle[k * stride] - path[k]);
                    for (std::size_t ip = 0; ip < req.p_values.size(); ++ip)
                        acc.add(ip * n_levels + il, k, detail::pow_p(d, req.p_values[ip]));
                }
            }
        }
        return acc;
    };

    std::vector<detail::NodeMoments> parts = map_blocks<detail::NodeMoments>(req.replications, block, exec);
    detail::NodeMoments total = std::move(parts.front());
    for (std::size_t b = 1; b < parts.size(); ++b)
        total.merge(parts[b]);
    return detail::finish_curves(total, req, Criterion::vs_oracle, unit.scale, unit.horizon);
}

/// Consecutive differences |Y^N - Y^{2N}| on a shared Brownian path, for coarse
/// levels N = 2^level_lo .. 2^level_hi (the finest grid is at level_hi + 1).
inline std::vector<ErrorCurve> consecutive_difference_curves(const CirParams& params, double x0,
                                                             const CurveRequest& req, const Executor& exec = {})
{
    detail::check_request(req);
    const detail::UnitProblem unit = detail::to_unit(params, x0);
    const unsigned top = req.level_hi + 1;
    const std::size_t n_levels = req.level_hi - req.level_lo + 1;
    const std::vector<std::size_t> sizes = detail::row_sizes(req);
    const AnyRule any_rule = make_rule(req.scheme, unit.np, req.truncation);

    auto block = [&](BlockRange range) {
        detail::NodeMoments acc;
        acc.init(sizes.size(), sizes);
        std::vector<std::vector<double>> incr(top + 1);
        std::vector<std::vector<double>> paths(top + 1);
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream grid_stream(req.seed, rep, Lane::brownian);
            detail::unit_increments(grid_stream, top, incr[top]);
            for (unsigned l = top; l > req.level_lo; --l) {
                incr[l - 1].resize(incr[l].size() / 2);
                coarsen_into(incr[l], incr[l - 1]);
            }
            for (unsigned l = req.level_lo; l <= top; ++l) {
                const std::size_t n = std::size_t{1} << l;
                paths[l].resize(n + 1);
                std::visit(
                    [&](const auto& rule) { advance(rule, unit.x_hat, 1.0 / static_cast<double>(n), incr[l], paths[l]); },
                    any_rule);
            }
            for (std::size_t il = 0; il < n_levels; ++il) {
                const unsigned l = req.level_lo + static_cast<unsigned>(il);
                const std::vector<double>& coarse = paths[l];
                const std::vector<double>& fine = paths[l + 1];
                for (std::size_t k = 0; k < coarse.size(); ++k) {
                    const double d = std::abs(coarse[k] - fine[2 * k]);
                    for (std::size_t ip = 0; ip < req.p_values.size(); ++ip)
                        acc.add(ip * n_levels + il, k, detail::pow_p(d, req.p_values[ip]));
                }
            }
        }
        return acc;
    };

    std::vector<detail::NodeMoments> parts = map_blocks<detail::NodeMoments>(req.replications, block, exec);
    detail::NodeMoments total = std::move(parts.front());
    for (std::size_t b = 1; b < parts.size(); ++b)
        total.merge(parts[b]);
    return detail::finish_curves(total, req, Criterion::consecutive_difference, unit.scale, unit.horizon);
}

/// Single level of oracle_error_curves.
inline LevelError sup_lp_error_vs_oracle(double p_norm, const CirParams& params, double x0, unsigned level,
                                         std::size_t replications, std::uint64_t seed,
                                         Scheme scheme = Scheme::truncated_milstein, const Executor& exec = {})
{
    CurveRequest req{scheme, level, level, {p_norm}, replications, seed};
    return oracle_error_curves(params, x0, req, exec).front().levels.front();
}

/// D_p(N) with N = 2^(level - 1): the grid at `level` is coarsened once.
inline LevelError consecutive_difference_error(double p_norm, const CirParams& params, double x0, unsigned level,
                                               std::size_t replications, std::uint64_t seed,
                                               Scheme scheme = Scheme::truncated_milstein, const Executor& exec = {})
{
    if (level == 0)
        throw std::invalid_argument("consecutive_difference_error: level must be >= 1");
    CurveRequest req{scheme, level - 1, level - 1, {p_norm}, replications, seed};
    return consecutive_difference_curves(params, x0, req, exec).front().levels.front();
}

// ---------------------------------------------------------------------------
// Regression

/// Least-squares fit of log2(y) against log2(x); returns the raw slope.
inline RateFit fit_loglog(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size())
        throw std::invalid_argument("fit_loglog: size mismatch");
    if (xs.size() < 3)
        throw std::invalid_argument("fit_loglog: at least 3 points are required");
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("fit_loglog: values must be positive");
        lx.push_back(std::log2(xs[i]));
        ly.push_back(std::log2(ys[i]));
    }
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("fit_loglog: abscissae must not all coincide");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < lx.size(); ++i)
        fit.residual_max = std::max(fit.residual_max, std::abs(ly[i] - (fit.intercept + fit.slope * lx[i])));
    fit.levels_used.assign(xs.begin(), xs.end());
    return fit;
}

struct FitOptions {
    std::size_t drop_coarsest = 2;
};

/// Decay rate of an error curve: minus the log2-log2 slope of error against N,
/// after dropping the coarsest levels.
inline RateFit fit_rate(const ErrorCurve& curve, FitOptions opts = {})
{
    std::vector<LevelError> levels = curve.levels;
    std::sort(levels.begin(), levels.end(), [](const LevelError& a, const LevelError& b) { return a.steps < b.steps; });
    if (levels.size() < opts.drop_coarsest + 3)
        throw std::invalid_argument("fit_rate: fewer than 3 levels remain after dropping the coarsest");
    std::vector<double> ns;
    std::vector<double> errs;
    for (std::size_t i = opts.drop_coarsest; i < levels.size(); ++i) {
        if (!(levels[i].error > 0.0))
            throw std::invalid_argument("fit_rate: errors must be positive");
        ns.push_back(static_cast<double>(levels[i].steps));
        errs.push_back(levels[i].error);
    }
    RateFit fit = fit_loglog(ns, errs);
    fit.slope = -fit.slope;
    return fit;
}

/// Lyapunov interpolation on an empirical sample:
///   ||D||_p <= ||D||_1^(1 - theta) ||D||_q^theta,  theta = (1 - 1/p) / (1 - 1/q),
/// for 1 <= p <= q. Returns (lhs, rhs).
inline std::pair<double, double> interpolation_bound(std::span<const double> samples, double p, double q)
{
    if (samples.empty() || !(p >= 1.0) || !(q > p))
        throw std::invalid_argument("interpolation_bound: need samples and 1 <= p < q");
    double m1 = 0.0;
    double mp = 0.0;
    double mq = 0.0;
    for (double d : samples) {
        const double a = std::abs(d);
        m1 += a;
        mp += std::pow(a, p);
        mq += std::pow(a, q);
    }
    const double n = static_cast<double>(samples.size());
    const double theta = (1.0 - 1.0 / p) / (1.0 - 1.0 / q);
    const double lhs = std::pow(mp / n, 1.0 / p);
    const double rhs = std::pow(m1 / n, 1.0 - theta) * std::pow(mq / n, theta / q);
    return {lhs, rhs};
}

// ---------------------------------------------------------------------------
// (A1): L1-Lipschitz continuity by quadrature

namespace detail {

template <class Rule>
std::vector<double> rule_kinks(const Rule& rule, double x, double t)
{
    if constexpr (requires { rule.kinks(x, t); })
        return rule.kinks(x, t);
    else
        return {};
}

/// Breakpoints in z (w = sqrt(t) z) of z -> |F(z)|: the supplied kinks plus the
/// sign changes of F located by scanning and bisection.
template <class F>
std::vector<double> abs_breakpoints(F&& diff, std::vector<double> kinks, double cutoff = 12.0, int scan = 4096)
{
    double prev_z = -cutoff;
    double prev = diff(prev_z);
    for (int i = 1; i <= scan; ++i) {
        const double z = -cutoff + 2.0 * cutoff * i / scan;
        const double cur = diff(z);
        if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0)) {
            double lo = prev_z;
            double hi = z;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = diff(mid);
                if ((fm < 0.0) == (prev < 0.0))
                    lo = mid;
                else
                    hi = mid;
            }
            kinks.push_back(0.5 * (lo + hi));
        }
        prev_z = z;
        prev = cur;
    }
    return kinks;
}

} // namespace detail

/// E|step(x1, t, sqrt(t) Z) - step(x2, t, sqrt(t) Z)| by piecewise quadrature
/// with `nodes` panels.
template <OneStepRule Rule>
double l1_distance(const Rule& rule, double x1, double x2, double t, int nodes = 256)
{
    if (x1 == x2)
        return 0.0;
    const double rt = std::sqrt(t);
    auto diff = [&](double z) { return rule.step(x1, t, rt * z) - rule.step(x2, t, rt * z); };
    std::vector<double> kinks;
    for (double k : detail::rule_kinks(rule, x1, t))
        kinks.push_back(k / rt);
    for (double k : detail::rule_kinks(rule, x2, t))
        kinks.push_back(k / rt);
    const std::vector<double> breaks = detail::abs_breakpoints(diff, std::move(kinks));
    return normal_expectation_piecewise([&](double z) { return std::abs(diff(z)); }, breaks, nodes);
}

/// Same distance for the nonlinear part h_tilde alone.
inline double h_tilde_l1_distance(double x1, double x2, double t, int nodes = 256)
{
    if (x1 == x2)
        return 0.0;
    const double rt = std::sqrt(t);
    auto diff = [&](double z) { return h_tilde(x1, t, rt * z) - h_tilde(x2, t, rt * z); };
    std::vector<double> kinks{(rt - std::sqrt(std::max(t, x1))) / rt, (rt - std::sqrt(std::max(t, x2))) / rt};
    const std::vector<double> breaks = detail::abs_breakpoints(diff, std::move(kinks));
    return normal_expectation_piecewise([&](double z) { return std::abs(diff(z)); }, breaks, nodes);
}

struct A1Result {
    /// max of E|.|/|x1 - x2| - 1 - K t with K = max(b, 0) + 1.
    double max_excess = -std::numeric_limits<double>::infinity();
    /// max of E|.|/|x1 - x2| - (1 + max(b, 0) t), the bound without margin.
    double max_excess_sharp = -std::numeric_limits<double>::infinity();
    /// max of E|h_tilde(x1) - h_tilde(x2)|/|x1 - x2| - 1.
    double max_excess_h_tilde = -std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
};

template <OneStepRule Rule>
A1Result check_a1_l1_lipschitz(const Rule& rule, std::span<const std::pair<double, double>> x_pairs,
                               std::span<const double> t_grid, int nodes = 256)
{
    if (nodes < 100)
        throw std::invalid_argument("check_a1_l1_lipschitz: at least 100 quadrature panels are required");
    const double b_plus = std::max(rule.params().b(), 0.0);
    A1Result out;
    for (const auto& [x1, x2] : x_pairs) {
        if (x1 == x2)
            throw std::invalid_argument("check_a1_l1_lipschitz: degenerate pair x1 = x2");
        const double gap = std::abs(x1 - x2);
        for (double t : t_grid) {
            const double ratio = l1_distance(rule, x1, x2, t, nodes) / gap;
            const double ratio_h = h_tilde_l1_distance(x1, x2, t, nodes) / gap;
            out.max_excess = std::max(out.max_excess, ratio - 1.0 - (b_plus + 1.0) * t);
            out.max_excess_sharp = std::max(out.max_excess_sharp, ratio - 1.0 - b_plus * t);
            out.max_excess_h_tilde = std::max(out.max_excess_h_tilde, ratio_h - 1.0);
            ++out.evaluations;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// (A2): local error against a reference solution

struct A2Cell {
    double x = 0.0;
    double t = 0.0;
    Estimate local_error;
    double ratio = 0.0; // local_error / delta_loc(x, t)
};

struct A2Result {
    double max_ratio = 0.0;
    /// Largest normalized growth of the ratio as t decreases: least-squares
    /// slope of ratio against log2(1/t), divided by the largest ratio, maximized over x.
    double max_trend = 0.0;
    bool exact_reference = false;
    std::vector<A2Cell> cells;
};

/// Number of sub-steps (as a power of two) for the fine reference path.
inline constexpr unsigned kReferenceSubstepLevel = 14;

template <OneStepRule Rule>
A2Result check_a2_local_error(const Rule& rule, std::span<const double> x_grid, std::span<const double> t_grid,
                              std::size_t replications, std::uint64_t seed, const Executor& exec = {},
                              unsigned reference_level = kReferenceSubstepLevel)
{
    if (replications < 2)
        throw std::invalid_argument("check_a2_local_error: at least two replications are required");
    for (double t : t_grid)
        if (!(t > 0.0 && t <= 1.0))
            throw std::invalid_argument("check_a2_local_error: t must lie in ]0, 1]");
    const NormalizedParams np = rule.params();
    const bool exact = np.delta() == 1.0 && np.b() == 0.0;
    const TruncatedMilstein reference_rule(np);
    const std::size_t nx = x_grid.size();
    const std::size_t nt = t_grid.size();

    struct Sums {
        std::vector<double> s1, s2;
    };
    auto block = [&](BlockRange range) {
        Sums acc{std::vector<double>(nx * nt, 0.0), std::vector<double>(nx * nt, 0.0)};
        std::vector<double> sub;
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream s(seed, rep, Lane::brownian);
            Stream bridge(seed, rep, Lane::bridge);
            for (std::size_t it = 0; it < nt; ++it) {
                const double t = t_grid[it];
                if (exact) {
                    const double w = std::sqrt(t) * s.gaussian();
                    const double m = std::min(0.0, bridge_minimum(bridge, 0.0, w, t));
                    for (std::size_t ix = 0; ix < nx; ++ix) {
                        const double x = x_grid[ix];
                        const double d = std::abs(rule.step(x, t, w) - bessel1_value(std::sqrt(x), w, m));
                        acc.s1[ix * nt + it] += d;
                        acc.s2[ix * nt + it] += d * d;
                    }
                } else {
                    const std::size_t n_sub = std::size_t{1} << reference_level;
                    const double sd = std::sqrt(t / static_cast<double>(n_sub));
                    sub.resize(n_sub);
                    double w = 0.0;
                    for (auto& dw : sub) {
                        dw = sd * s.gaussian();
                        w += dw;
                    }
                    const double h_sub = t / static_cast<double>(n_sub);
                    for (std::size_t ix = 0; ix < nx; ++ix) {
                        const double x = x_grid[ix];
                        double y = x;
                        for (double dw : sub)
                            y = reference_rule.step(y, h_sub, dw);
                        const double d = std::abs(rule.step(x, t, w) - y);
                        acc.s1[ix * nt + it] += d;
                        acc.s2[ix * nt + it] += d * d;
                    }
                }
            }
        }
        return acc;
    };

    std::vector<Sums> parts = map_blocks<Sums>(replications, block, exec);
    Sums total = std::move(parts.front());
    for (std::size_t b = 1; b < parts.size(); ++b)
        for (std::size_t i = 0; i < total.s1.size(); ++i) {
            total.s1[i] += parts[b].s1[i];
            total.s2[i] += parts[b].s2[i];
        }

    A2Result out;
    out.exact_reference = exact;
    const double n = static_cast<double>(replications);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        std::vector<double> ks;
        std::vector<double> rs;
        for (std::size_t it = 0; it < nt; ++it) {
            const std::size_t i = ix * nt + it;
            const double mean = total.s1[i] / n;
            const double var = std::max(0.0, (total.s2[i] / n - mean * mean) * n / (n - 1.0));
            A2Cell cell{x_grid[ix], t_grid[it], {mean, std::sqrt(var / n)}, 0.0};
            cell.ratio = mean / delta_loc(cell.x, cell.t);
            out.max_ratio = std::max(out.max_ratio, cell.ratio);
            ks.push_back(-std::log2(cell.t));
            rs.push_back(cell.ratio);
            out.cells.push_back(cell);
        }
        const double peak = *std::max_element(rs.begin(), rs.end());
        if (ks.size() >= 2 && peak > 0.0) {
            const double mk = std::accumulate(ks.begin(), ks.end(), 0.0) / static_cast<double>(ks.size());
            const double mr = std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size());
            double skk = 0.0;
            double skr = 0.0;
            for (std::size_t j = 0; j < ks.size(); ++j) {
                skk += (ks[j] - mk) * (ks[j] - mk);
                skr += (ks[j] - mk) * (rs[j] - mr);
            }
            if (skk > 0.0)
                out.max_trend = std::max(out.max_trend, (skr / skk) / peak);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// (A3): moment boundedness

struct A3Cell {
    double x = 0.0;
    std::size_t steps = 0;
    double normalized_moment = 0.0; // max_t (E|Y_t|^q)^(1/q) / (1 + x)
};

struct A3Result {
    double max_normalized_moment = 0.0;
    /// max over x of the |log2-log2 slope| of the normalized moment in N.
    double max_level_slope = 0.0;
    /// max over x of max/min - 1 of the normalized moment across N.
    double max_level_spread = 0.0;
    /// max over N of (max - min) / max of the normalized moment across x.
    double max_cross_x_spread = 0.0;
    std::vector<A3Cell> cells;
};

template <OneStepRule Rule>
A3Result check_a3_boundedness(const Rule& rule, double q, std::span<const double> x_grid, unsigned level_lo,
                              unsigned level_hi, std::size_t replications, std::uint64_t seed,
                              const Executor& exec = {})
{
    if (q != 2.0 && q != 4.0 && q != 8.0)
        throw std::invalid_argument("check_a3_boundedness: q must be 2, 4 or 8");
    if (level_lo > level_hi || level_hi >= 26)
        throw std::invalid_argument("check_a3_boundedness: invalid level range");
    if (replications < 1 || x_grid.empty())
        throw std::invalid_argument("check_a3_boundedness: empty configuration");
    const std::size_t nx = x_grid.size();
    const std::size_t nl = level_hi - level_lo + 1;

    // rows indexed by (x, level), entries by node
    auto block = [&](BlockRange range) {
        std::vector<std::vector<double>> acc(nx * nl);
        for (std::size_t ix = 0; ix < nx; ++ix)
            for (std::size_t il = 0; il < nl; ++il)
                acc[ix * nl + il].assign((std::size_t{1} << (level_lo + il)) + 1, 0.0);
        std::vector<std::vector<double>> incr(level_hi + 1);
        std::vector<double> path;
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream s(seed, rep, Lane::brownian);
            detail::unit_increments(s, level_hi, incr[level_hi]);
            for (unsigned l = level_hi; l > level_lo; --l) {
                incr[l - 1].resize(incr[l].size() / 2);
                coarsen_into(incr[l], incr[l - 1]);
            }
            for (std::size_t ix = 0; ix < nx; ++ix)
                for (std::size_t il = 0; il < nl; ++il) {
                    const unsigned l = level_lo + static_cast<unsigned>(il);
                    const std::size_t n = std::size_t{1} << l;
                    path.resize(n + 1);
                    advance(rule, x_grid[ix], 1.0 / static_cast<double>(n), incr[l], path);
                    std::vector<double>& row = acc[ix * nl + il];
                    for (std::size_t k = 0; k <= n; ++k)
                        row[k] += detail::pow_p(path[k], q);
                }
        }
        return acc;
    };

    auto parts = map_blocks<std::vector<std::vector<double>>>(replications, block, exec);
    auto total = std::move(parts.front());
    for (std::size_t b = 1; b < parts.size(); ++b)
        for (std::size_t r = 0; r < total.size(); ++r)
            for (std::size_t k = 0; k < total[r].size(); ++k)
                total[r][k] += parts[b][r][k];

    A3Result out;
    const double n = static_cast<double>(replications);
    std::vector<double> moments(nx * nl);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = x_grid[ix];
        std::vector<double> ns;
        std::vector<double> ms;
        for (std::size_t il = 0; il < nl; ++il) {
            const std::vector<double>& row = total[ix * nl + il];
            const double peak = *std::max_element(row.begin(), row.end());
            const double m = std::pow(peak / n, 1.0 / q) / (1.0 + x);
            moments[ix * nl + il] = m;
            out.cells.push_back({x, row.size() - 1, m});
            out.max_normalized_moment = std::max(out.max_normalized_moment, m);
            ns.push_back(static_cast<double>(row.size() - 1));
            ms.push_back(m);
        }
        const auto [lo, hi] = std::minmax_element(ms.begin(), ms.end());
        if (*lo > 0.0)
            out.max_level_spread = std::max(out.max_level_spread, *hi / *lo - 1.0);
        if (nl >= 3 && *lo > 0.0)
            out.max_level_slope = std::max(out.max_level_slope, std::abs(fit_loglog(ns, ms).slope));
    }
    for (std::size_t il = 0; il < nl; ++il) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            lo = std::min(lo, moments[ix * nl + il]);
            hi = std::max(hi, moments[ix * nl + il]);
        }
        if (hi > 0.0)
            out.max_cross_x_spread = std::max(out.max_cross_x_spread, (hi - lo) / hi);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Moments of the scheme at the horizon

struct TerminalMoments {
    Estimate mean;
    Estimate variance;
};

/// Sample mean and variance of Y_N at t = T over `replications` paths with N = 2^level.
inline TerminalMoments terminal_moments(Scheme scheme, const CirParams& params, double x0, unsigned level,
                                        std::size_t replications, std::uint64_t seed, const Executor& exec = {})
{
    if (replications < 2)
        throw std::invalid_argument("terminal_moments: at least two replications are required");
    if (level >= 26)
        throw std::invalid_argument("terminal_moments: level too large");
    const detail::UnitProblem unit = detail::to_unit(params, x0);
    const AnyRule any_rule = make_rule(scheme, unit.np);
    const double step = std::ldexp(1.0, -static_cast<int>(level));
    struct Sums {
        double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    };
    auto block = [&](BlockRange range) {
        Sums acc;
        std::vector<double> incr;
        std::vector<double> path;
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream s(seed, rep, Lane::brownian);
            detail::unit_increments(s, level, incr);
            path.resize(incr.size() + 1);
            std::visit([&](const auto& rule) { advance(rule, unit.x_hat, step, incr, path); }, any_rule);
            const double y = unit.scale * path.back();
            acc.s1 += y;
            acc.s2 += y * y;
            acc.s3 += y * y * y;
            acc.s4 += y * y * y * y;
        }
        return acc;
    };
    Sums t;
    for (const Sums& part : map_blocks<Sums>(replications, block, exec)) {
        t.s1 += part.s1;
        t.s2 += part.s2;
        t.s3 += part.s3;
        t.s4 += part.s4;
    }
    const double n = static_cast<double>(replications);
    const double m1 = t.s1 / n;
    const double var = std::max(0.0, (t.s2 / n - m1 * m1) * n / (n - 1.0));
    // fourth central moment for the standard error of the variance
    const double m4 = t.s4 / n - 4.0 * m1 * t.s3 / n + 6.0 * m1 * m1 * t.s2 / n - 3.0 * m1 * m1 * m1 * m1;
    return {{m1, std::sqrt(var / n)}, {var, std::sqrt(std::max(0.0, m4 - var * var) / n)}};
}

// ---------------------------------------------------------------------------
// Average local error, Hoelder exponents and the initial-value identity

/// Monte Carlo E[delta_loc(X^0_s, t)] for each t, from `replications` exact
/// marginal draws shared across t.
inline std::vector<Estimate> avg_local_error_estimates(const NormalizedParams& np, std::span<const double> t_grid,
                                                       double s, std::size_t replications, std::uint64_t seed,
                                                       const Executor& exec = {})
{
    if (!(s > 0.0 && s <= 1.0))
        throw std::invalid_argument("avg_local_error: s must lie in ]0, 1]");
    for (double t : t_grid)
        if (!(t > 0.0 && t <= s))
            throw std::invalid_argument("avg_local_error: t must lie in ]0, s]");
    if (replications < 2)
        throw std::invalid_argument("avg_local_error: at least two replications are required");
    const std::size_t nt = t_grid.size();
    struct Sums {
        std::vector<double> s1, s2;
    };
    auto block = [&](BlockRange range) {
        Sums acc{std::vector<double>(nt, 0.0), std::vector<double>(nt, 0.0)};
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream stream(seed, rep, Lane::marginal);
            const double x = marginal_sample_x0(np, s, stream);
            for (std::size_t i = 0; i < nt; ++i) {
                const double v = delta_loc(x, t_grid[i]);
                acc.s1[i] += v;
                acc.s2[i] += v * v;
            }
        }
        return acc;
    };
    std::vector<Sums> parts = map_blocks<Sums>(replications, block, exec);
    std::vector<Estimate> out(nt);
    const double n = static_cast<double>(replications);
    for (std::size_t i = 0; i < nt; ++i) {
        double s1 = 0.0;
        double s2 = 0.0;
        for (const Sums& p : parts) {
            s1 += p.s1[i];
            s2 += p.s2[i];
        }
        const double mean = s1 / n;
        const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
        out[i] = {mean, std::sqrt(var / n)};
    }
    return out;
}

/// Fitted exponent of t in E[delta_loc(X^0_s, t)] (positive slope). At delta = 1
/// a logarithmic factor biases the fit; callers must opt in with allow_log_regime.
inline RateFit avg_local_error_scaling(const NormalizedParams& np, std::span<const double> t_grid, double s,
                                       std::size_t replications, std::uint64_t seed, bool allow_log_regime = false,
                                       const Executor& exec = {})
{
    if (np.delta() == 1.0 && !allow_log_regime)
        throw std::domain_error("avg_local_error_scaling: delta = 1 carries a log factor; pass allow_log_regime");
    const std::vector<Estimate> est = avg_local_error_estimates(np, t_grid, s, replications, seed, exec);
    std::vector<double> ys;
    for (const Estimate& e : est)
        ys.push_back(e.value);
    return fit_loglog(t_grid, ys);
}

struct HolderPoint {
    double x = 0.0;
    Estimate distance; // (E|X^x_1 - X^0_1|^p)^(1/p)
};

/// Coupled exact delta = 1, b = 0 solutions at t = 1 started from each x and from 0.
inline std::vector<HolderPoint> holder_curve(double p_norm, std::span<const double> x_grid, std::size_t replications,
                                             std::uint64_t seed, const Executor& exec = {})
{
    if (!(p_norm >= 1.0))
        throw std::invalid_argument("holder_curve: p must be >= 1");
    if (replications < 2)
        throw std::invalid_argument("holder_curve: at least two replications are required");
    const std::size_t nx = x_grid.size();
    struct Sums {
        std::vector<double> s1, s2;
    };
    auto block = [&](BlockRange range) {
        Sums acc{std::vector<double>(nx, 0.0), std::vector<double>(nx, 0.0)};
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream s(seed, rep, Lane::brownian);
            Stream bridge(seed, rep, Lane::bridge);
            const double w = s.gaussian();
            const double m = bridge_minimum(bridge, 0.0, w, 1.0);
            const double base = bessel1_value(0.0, w, m);
            for (std::size_t i = 0; i < nx; ++i) {
                const double d = detail::pow_p(std::abs(bessel1_value(std::sqrt(x_grid[i]), w, m) - base), p_norm);
                acc.s1[i] += d;
                acc.s2[i] += d * d;
            }
        }
        return acc;
    };
    std::vector<Sums> parts = map_blocks<Sums>(replications, block, exec);
    std::vector<HolderPoint> out;
    const double n = static_cast<double>(replications);
    for (std::size_t i = 0; i < nx; ++i) {
        double s1 = 0.0;
        double s2 = 0.0;
        for (const Sums& part : parts) {
            s1 += part.s1[i];
            s2 += part.s2[i];
        }
        const double mean = s1 / n;
        const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
        HolderPoint pt{x_grid[i], {}};
        if (mean > 0.0) {
            pt.distance.value = std::pow(mean, 1.0 / p_norm);
            pt.distance.std_error = (1.0 / p_norm) * std::pow(mean, 1.0 / p_norm - 1.0) * std::sqrt(var / n);
        }
        out.push_back(pt);
    }
    return out;
}

/// Slope of log (E|X^x_1 - X^0_1|^p)^(1/p) against log x.
inline RateFit holder_exponent(double p_norm, std::span<const double> x_grid, std::size_t replications,
                               std::uint64_t seed, const Executor& exec = {})
{
    for (double x : x_grid)
        if (!(x > 0.0 && x <= 1.0))
            throw std::invalid_argument("holder_exponent: x must lie in ]0, 1]");
    const std::vector<HolderPoint> pts = holder_curve(p_norm, x_grid, replications, seed, exec);
    std::vector<double> ys;
    for (const HolderPoint& pt : pts)
        ys.push_back(pt.distance.value);
    return fit_loglog(x_grid, ys);
}

/// Monte Carlo E|X^x_t - X^y_t| over coupled exact delta = 1, b = 0 solutions.
inline Estimate lemma_initial_value_check(double x, double y, double t, std::size_t replications, std::uint64_t seed,
                                          const Executor& exec = {})
{
    if (!(x >= 0.0 && y >= 0.0) || !(t > 0.0))
        throw std::invalid_argument("lemma_initial_value_check: need x, y >= 0 and t > 0");
    if (replications < 2)
        throw std::invalid_argument("lemma_initial_value_check: at least two replications are required");
    struct Sums {
        double s1 = 0.0;
        double s2 = 0.0;
    };
    const double rx = std::sqrt(x);
    const double ry = std::sqrt(y);
    auto block = [&](BlockRange range) {
        Sums acc;
        for (std::size_t rep = range.first; rep < range.last; ++rep) {
            Stream s(seed, rep, Lane::brownian);
            Stream bridge(seed, rep, Lane::bridge);
            const double w = std::sqrt(t) * s.gaussian();
            const double m = bridge_minimum(bridge, 0.0, w, t);
            const double d = std::abs(bessel1_value(rx, w, m) - bessel1_value(ry, w, m));
            acc.s1 += d;
            acc.s2 += d * d;
        }
        return acc;
    };
    std::vector<Sums> parts = map_blocks<Sums>(replications, block, exec);
    Sums total;
    for (const Sums& p : parts) {
        total.s1 += p.s1;
        total.s2 += p.s2;
    }
    const double n = static_cast<double>(replications);
    const double mean = total.s1 / n;
    const double var = std::max(0.0, (total.s2 / n - mean * mean) * n / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

} // namespace cirmil
