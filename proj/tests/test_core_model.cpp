#include <cirmil/core_model.hpp>

#include <cmath>
#include <random>

#include <gtest/gtest.h>

using namespace cirmil;

TEST(CirParams, RejectsInvalidValues)
{
    EXPECT_THROW(CirParams(0.0, 1.0, 2.0), std::invalid_argument);
    EXPECT_THROW(CirParams(-1.0, 1.0, 2.0), std::invalid_argument);
    EXPECT_THROW(CirParams(1.0, NAN, 2.0), std::invalid_argument);
    EXPECT_THROW(CirParams(1.0, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(CirParams(1.0, 1.0, 2.0, 0.0), std::invalid_argument);
    EXPECT_THROW(CirParams(1.0, 1.0, 2.0, INFINITY), std::invalid_argument);
    EXPECT_THROW(NormalizedParams(0.0, 1.0), std::invalid_argument);
    EXPECT_NO_THROW(CirParams(1.0, -3.0, 2.0));
}

TEST(Delta, Examples)
{
    EXPECT_DOUBLE_EQ(delta_of(CirParams(1.0, 0.0, 2.0)), 1.0);
    EXPECT_DOUBLE_EQ(delta_of(CirParams(0.5, 1.0, 2.0)), 0.5);
    EXPECT_DOUBLE_EQ(delta_of(CirParams(3.0, 0.0, 1.0)), 12.0);
}

TEST(SpaceReduction, Examples)
{
    const SpaceReduction r1 = reduce_space(CirParams(1.0, 0.0, 2.0), 5.0);
    EXPECT_DOUBLE_EQ(r1.x_hat, 5.0);
    EXPECT_DOUBLE_EQ(r1.scale, 1.0);

    const SpaceReduction r2 = reduce_space(CirParams(1.0, 0.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(r2.x_hat, 4.0);
    EXPECT_DOUBLE_EQ(r2.scale, 0.25);

    const SpaceReduction r3 = reduce_space(CirParams(4.0, 0.0, 4.0), 0.0);
    EXPECT_DOUBLE_EQ(r3.params.delta(), 1.0);
    EXPECT_DOUBLE_EQ(r3.x_hat, 0.0);
    EXPECT_DOUBLE_EQ(r3.scale, 4.0);
}

TEST(TimeReduction, Examples)
{
    const CirParams p(0.7, -0.3, 1.3, 1.0);
    EXPECT_EQ(reduce_time(p).params, p);

    const CirParams q = reduce_time(CirParams(1.0, 1.0, 2.0, 4.0)).params;
    EXPECT_DOUBLE_EQ(q.a(), 4.0);
    EXPECT_DOUBLE_EQ(q.b(), 4.0);
    EXPECT_DOUBLE_EQ(q.sigma(), 4.0);
    EXPECT_DOUBLE_EQ(q.horizon(), 1.0);

    const CirParams r = reduce_time(CirParams(0.5, 0.0, 2.0, 0.25)).params;
    EXPECT_DOUBLE_EQ(r.a(), 0.125);
    EXPECT_DOUBLE_EQ(r.b(), 0.0);
    EXPECT_DOUBLE_EQ(r.sigma(), 1.0);
}

TEST(Reductions, RoundTripProperty)
{
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        const CirParams p(std::exp(u(gen)), u(gen), std::exp(0.5 * u(gen)), std::exp(0.5 * u(gen)));
        const TimeReduction tr = reduce_time(p);
        const CirParams back = expand_time(tr.params, tr.time_scale);
        EXPECT_NEAR(back.a(), p.a(), 1e-13 * p.a());
        EXPECT_NEAR(back.b(), p.b(), 1e-13 * (1.0 + std::abs(p.b())));
        EXPECT_NEAR(back.sigma(), p.sigma(), 1e-13 * p.sigma());
        EXPECT_NEAR(back.horizon(), p.horizon(), 1e-13 * p.horizon());
        // time reduction keeps delta
        EXPECT_NEAR(tr.params.delta(), p.delta(), 1e-12 * p.delta());

        const SpaceReduction sr = reduce_space(p, 1.5);
        EXPECT_NEAR(sr.x_hat * sr.scale, 1.5, 1e-14);
        const CirParams expanded = expand_space(sr.params, p.sigma(), p.horizon());
        EXPECT_NEAR(expanded.a(), p.a(), 1e-13 * p.a());
        EXPECT_DOUBLE_EQ(expanded.b(), p.b());
    }
}

TEST(Psi, Examples)
{
    EXPECT_DOUBLE_EQ(psi(0.0, 0.3), 0.3);
    EXPECT_NEAR(psi(1.0, 1.0), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(psi(1e-14, 0.7), 0.7, 1e-12 * 0.7);
    EXPECT_NEAR(psi(-1e-14, 0.7), 0.7, 1e-12 * 0.7);
    EXPECT_NEAR(psi(-1.0, 1.0), std::exp(1.0) - 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(psi(2.0, 0.0), 0.0);
}

TEST(ExactMean, Examples)
{
    EXPECT_DOUBLE_EQ(exact_mean(NormalizedParams(2.0, 0.0), 1.0, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(exact_mean(NormalizedParams(0.3, 1.7), 0.4, 0.0), 0.4);
    EXPECT_NEAR(exact_mean(NormalizedParams(1.0, 1.0), 0.0, 1.0), 0.6321206, 1e-7);
}

// The mean solves m' = a - b m; integrate with RK4 as an independent oracle.
TEST(ExactMean, MatchesOdeIntegration)
{
    for (const auto& [a, b, sigma] : {std::tuple{0.5, 1.0, 2.0}, {1.3, -0.8, 0.7}, {0.2, 3.0, 1.5}}) {
        const CirParams p(a, b, sigma, 2.0);
        const double x = 0.9;
        double m = x;
        const int n = 20000;
        const double h = 2.0 / n;
        auto f = [&](double v) { return a - b * v; };
        for (int k = 0; k < n; ++k) {
            const double k1 = f(m), k2 = f(m + 0.5 * h * k1), k3 = f(m + 0.5 * h * k2), k4 = f(m + h * k3);
            m += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        EXPECT_NEAR(exact_mean(p, x, 2.0), m, 1e-10 * (1.0 + std::abs(m)));
    }
}

TEST(ExactMean, GeneralAgreesWithNormalized)
{
    const CirParams p(0.9, 0.6, 1.4, 1.0);
    const SpaceReduction sr = reduce_space(p, 0.3);
    EXPECT_NEAR(exact_mean(p, 0.3, 0.8), sr.scale * exact_mean(sr.params, sr.x_hat, 0.8), 1e-14);
}

TEST(DeltaLoc, Branches)
{
    EXPECT_DOUBLE_EQ(delta_loc(0.005, 0.01), 0.01);
    EXPECT_NEAR(delta_loc(0.25, 0.01), 0.002, 1e-15);
    EXPECT_NEAR(delta_loc(4.0, 0.01), 0.004, 1e-15);
    // continuity at x = t and x = 1
    EXPECT_NEAR(delta_loc(0.01, 0.01), 0.01, 1e-15);
    EXPECT_NEAR(delta_loc(1.0, 0.01), 0.001, 1e-15);
    EXPECT_NEAR(delta_loc(1.0 + 1e-12, 0.01), 0.001, 1e-14);
}
