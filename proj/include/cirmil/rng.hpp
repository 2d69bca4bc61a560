#pragma once

// Counter-based random streams (Philox4x32-10) keyed by
// (master seed, replication index, lane), plus the samplers built on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace cirmil {

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter generate(Counter ctr, Key key) noexcept
    {
        constexpr std::uint32_t kMul0 = 0xD2511F53u;
        constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

/// Purpose tags separating the streams used for one replication.
enum class Lane : std::uint16_t {
    brownian = 0,
    bridge = 1,
    marginal = 2,
    auxiliary = 3,
};

struct StreamKey {
    std::uint64_t master_seed = 0;
    std::uint64_t replication = 0;
    Lane lane = Lane::brownian;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Deterministic stream of random variates. A pure function of its key and the
/// number of draws taken so far; copying a Stream forks an identical sequence.
class Stream {
public:
    explicit Stream(StreamKey key) noexcept
        : key_{static_cast<std::uint32_t>(key.master_seed), static_cast<std::uint32_t>(key.master_seed >> 32)},
          replication_(key.replication),
          lane_(static_cast<std::uint16_t>(key.lane))
    {
        if (replication_ >= (std::uint64_t{1} << 48))
            replication_ &= (std::uint64_t{1} << 48) - 1;
    }

    Stream(std::uint64_t seed, std::uint64_t replication, Lane lane) noexcept
        : Stream(StreamKey{seed, replication, lane})
    {
    }

    std::uint32_t next_u32() noexcept
    {
        if (used_ == 4) {
            refill();
        }
        return buffer_[used_++];
    }

    std::uint64_t next_u64() noexcept
    {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    double gaussian() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    /// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1; for shape < 1 the
    /// boost Gamma(shape) = Gamma(shape + 1) * U^(1/shape) is used.
    double gamma(double shape)
    {
        if (!(shape > 0.0))
            throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform_open(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double z;
            double v;
            do {
                z = gaussian();
                v = 1.0 + c * z;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            const double z2 = z * z;
            if (u < 1.0 - 0.0331 * z2 * z2)
                return d * v;
            if (std::log(u) < 0.5 * z2 + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    /// Chi-square with (possibly non-integer) delta > 0 degrees of freedom.
    double chi_square(double delta) { return 2.0 * gamma(0.5 * delta); }

    std::uint64_t blocks_used() const noexcept { return counter_; }

private:
    void refill() noexcept
    {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                      static_cast<std::uint32_t>(replication_),
                                      static_cast<std::uint32_t>(replication_ >> 32) << 16 | lane_};
        buffer_ = Philox4x32::generate(ctr, key_);
        ++counter_;
        used_ = 0;
    }

    Philox4x32::Key key_;
    std::uint64_t replication_;
    std::uint16_t lane_;
    std::uint64_t counter_ = 0;
    Philox4x32::Counter buffer_{};
    unsigned used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Increments of one Brownian path on the uniform grid of 2^level cells over [0, T].
struct BrownianGrid {
    double horizon = 1.0;
    unsigned level = 0;
    std::vector<double> increments;

    std::size_t steps() const noexcept { return increments.size(); }
    double step_size() const noexcept { return horizon / static_cast<double>(increments.size()); }
};

inline constexpr unsigned kMaxLevel = 30;

inline BrownianGrid brownian_grid(Stream& stream, double horizon, unsigned level)
{
    if (!(horizon > 0.0))
        throw std::invalid_argument("brownian_grid: horizon must be positive");
    if (level > kMaxLevel)
        throw std::invalid_argument("brownian_grid: level too large");
    const std::size_t n = std::size_t{1} << level;
    const double sd = std::sqrt(horizon / static_cast<double>(n));
    BrownianGrid g{horizon, level, std::vector<double>(n)};
    for (auto& dw : g.increments)
        dw = sd * stream.gaussian();
    return g;
}

/// Pairwise sums of fine increments into `coarse` (size fine.size() / 2).
inline void coarsen_into(std::span<const double> fine, std::span<double> coarse) noexcept
{
    for (std::size_t n = 0; n < coarse.size(); ++n)
        coarse[n] = fine[2 * n] + fine[2 * n + 1];
}

inline BrownianGrid coarsen(const BrownianGrid& g)
{
    if (g.level == 0)
        throw std::invalid_argument("coarsen: grid at level 0 cannot be coarsened");
    BrownianGrid out{g.horizon, g.level - 1, std::vector<double>(g.increments.size() / 2)};
    coarsen_into(g.increments, out.increments);
    return out;
}

/// Minimum of a Brownian bridge from `start` to `end` over a cell of length
/// `duration`, given the uniform variate u in (0, 1]. Nondecreasing in u.
inline double bridge_minimum_from_uniform(double start, double end, double duration, double u) noexcept
{
    const double gap = start - end;
    const double m = 0.5 * (start + end - std::sqrt(gap * gap - 2.0 * duration * std::log(u)));
    return std::min(m, std::min(start, end));
}

inline double bridge_minimum(Stream& stream, double start, double end, double duration) noexcept
{
    return bridge_minimum_from_uniform(start, end, duration, stream.uniform_open());
}

} // namespace cirmil
