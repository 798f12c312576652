#pragma once

/// Deterministic random streams.
///
/// RngStream is a counter-based generator: draw k of a stream is
/// splitmix64_mix(key + k * 0x9E3779B97F4A7C15), where the key is derived from
/// (seed, stream id). Because a draw depends only on (key, k), results are
/// identical on every platform and independent of thread scheduling. All
/// distributions below are implemented here rather than taken from <random>,
/// whose distribution algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace clover {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
        : seed_(seed), stream_(stream_id),
          key_(detail::splitmix64_mix(detail::splitmix64_mix(seed) ^
                                      detail::splitmix64_mix(stream_id + detail::kGolden))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t position() const noexcept { return counter_; }

    /// Child stream that does not overlap this one; the parent's position is untouched.
    RngStream derive(std::uint64_t child_id) const noexcept { return RngStream(key_, child_id); }

    std::uint64_t next_u64() noexcept {
        return detail::splitmix64_mix(key_ + (counter_++) * detail::kGolden);
    }

    // UniformRandomBitGenerator interface, so std::shuffle etc. accept it.
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next_u64(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1); safe to feed into log().
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by Lemire's multiply-and-reject.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("below(0)");
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via the Box-Muller transform; the second variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    /// Gamma(shape, rate) by Marsaglia and Tsang; shape < 1 uses the u^(1/shape) boost.
    double gamma(double shape, double rate = 1.0) {
        if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("gamma: shape and rate must be positive");
        if (shape < 1.0) {
            const double u = uniform_open();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double z, v;
            do {
                z = normal();
                v = 1.0 + c * z;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * z * z * z * z) return d * v / rate;
            if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

    /// Student t with `dof` degrees of freedom, unit scale.
    double student_t(double dof) {
        const double z = normal();
        const double chi2 = 2.0 * gamma(dof / 2.0);
        return z / std::sqrt(chi2 / dof);
    }

    /// Laplace(location, scale) by inverse CDF.
    double laplace(double location, double scale) noexcept {
        const double u = uniform_open() - 0.5;
        const double sign = u < 0.0 ? -1.0 : 1.0;
        return location - scale * sign * std::log(1.0 - 2.0 * std::abs(u));
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace clover
