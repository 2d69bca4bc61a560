#pragma once

// Gaussian expectations E[f(Z)], Z ~ N(0, 1), by Gauss-Hermite and by
// composite Gauss-Legendre with user-supplied breakpoints (for kinked f).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cirmil {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

/// Eigenvalues of the symmetric tridiagonal matrix (diag, off) by implicit QL,
/// together with the first component of each normalized eigenvector.
/// off[i] couples rows i and i + 1; off.size() == diag.size().
inline void tridiagonal_eigen(std::vector<double>& diag, std::vector<double> off, std::vector<double>& first)
{
    const int n = static_cast<int>(diag.size());
    first.assign(n, 0.0);
    first[0] = 1.0;
    for (int l = 0; l < n; ++l) {
        for (int iter = 0; iter < 100; ++iter) {
            int m = l;
            for (; m < n - 1; ++m) {
                const double dd = std::abs(diag[m]) + std::abs(diag[m + 1]);
                if (std::abs(off[m]) <= 1e-17 * dd)
                    break;
            }
            if (m == l)
                break;
            double g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            double r = std::hypot(g, 1.0);
            g = diag[m] - diag[l] + off[l] / (g + std::copysign(r, g));
            double s = 1.0;
            double c = 1.0;
            double p = 0.0;
            int i = m - 1;
            for (; i >= l; --i) {
                double f = s * off[i];
                const double b = c * off[i];
                r = std::hypot(f, g);
                off[i + 1] = r;
                if (r == 0.0) {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                f = first[i + 1];
                first[i + 1] = s * first[i] + c * f;
                first[i] = c * first[i] - s * f;
            }
            if (r == 0.0 && i >= l)
                continue;
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}

} // namespace detail

/// Gauss-Hermite rule for the weight exp(-x^2) on the real line, by the
/// Golub-Welsch eigenvalue method. Nodes are sorted in increasing order.
inline QuadratureRule gauss_hermite_rule(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_hermite_rule: need at least one node");
    std::vector<double> diag(n, 0.0);
    std::vector<double> off(n, 0.0);
    for (int k = 1; k < n; ++k)
        off[k - 1] = std::sqrt(0.5 * k);
    std::vector<double> first;
    detail::tridiagonal_eigen(diag, off, first);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return diag[a] < diag[b]; });
    QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
    const double mass = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = diag[order[i]];
        rule.weights[i] = mass * first[order[i]] * first[order[i]];
    }
    return rule;
}

/// Gauss-Legendre rule on [-1, 1].
inline QuadratureRule gauss_legendre_rule(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_legendre_rule: need at least one node");
    QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0;
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-16)
                break;
        }
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return rule;
}

/// Gauss-Hermite approximation of E[fn(Z)] with `nodes` points.
template <class Fn>
double gauss_expectation(Fn&& fn, int nodes)
{
    if (nodes < 2)
        throw std::invalid_argument("gauss_expectation: nodes must be >= 2");
    const QuadratureRule rule = gauss_hermite_rule(nodes);
    double sum = 0.0;
    for (int i = 0; i < nodes; ++i)
        sum += rule.weights[i] * fn(std::numbers::sqrt2 * rule.nodes[i]);
    return sum / std::sqrt(std::numbers::pi);
}

/// E[fn(Z)] by composite Gauss-Legendre over [-cutoff, cutoff] with `panels`
/// equal panels, each additionally split at the given breakpoints. Accurate to
/// near machine precision when fn is smooth between breakpoints and of
/// polynomial growth.
template <class Fn>
double normal_expectation_piecewise(Fn&& fn, std::span<const double> breakpoints, int panels = 64,
                                    double cutoff = 12.0, int order = 20)
{
    if (panels < 1)
        throw std::invalid_argument("normal_expectation_piecewise: panels must be >= 1");
    static thread_local QuadratureRule cache;
    if (static_cast<int>(cache.nodes.size()) != order)
        cache = gauss_legendre_rule(order);
    const QuadratureRule& rule = cache;

    std::vector<double> cuts;
    cuts.reserve(panels + 1 + breakpoints.size());
    for (int i = 0; i <= panels; ++i)
        cuts.push_back(-cutoff + 2.0 * cutoff * i / panels);
    for (double b : breakpoints)
        if (b > -cutoff && b < cutoff)
            cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());

    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double lo = cuts[k];
        const double hi = cuts[k + 1];
        if (!(hi > lo))
            continue;
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        double part = 0.0;
        for (int i = 0; i < order; ++i) {
            const double z = mid + half * rule.nodes[i];
            part += rule.weights[i] * fn(z) * std::exp(-0.5 * z * z);
        }
        sum += half * part;
    }
    return norm * sum;
}

/// Breakpoint-aware variant of gauss_expectation: roughly `nodes` points in
/// total, spread over 20-point Gauss-Legendre panels split at the kinks of fn.
template <class Fn>
double gauss_expectation(Fn&& fn, int nodes, std::span<const double> breakpoints)
{
    if (nodes < 2)
        throw std::invalid_argument("gauss_expectation: nodes must be >= 2");
    return normal_expectation_piecewise(std::forward<Fn>(fn), breakpoints, std::max(1, nodes / 20));
}

} // namespace cirmil
