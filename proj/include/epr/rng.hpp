#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace epr::rng {

//! Philox4x32-10 block function (Salmon et al., counter-based).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

//! Independent sub-streams of one run. Each (seed, index, purpose) triple is its own stream.
enum class Purpose : std::uint32_t {
    NearFieldSource = 0,
    NearFieldDetector = 1,
    FarFieldSource = 2,
    FarFieldDetector = 3,
    Bootstrap = 4,
    Test = 0xFFFF,
};

/*!
 * Deterministic random stream keyed by (global seed, index, purpose).
 *
 * The seed is the Philox key; the counter holds (block, purpose, index lo, index hi).
 * Output for a given key never depends on how many other streams were consumed
 * or in what order, which is what makes frame generation worker-count independent.
 * Satisfies UniformRandomBitGenerator.
 */
class CounterStream {
public:
    using result_type = std::uint32_t;

    CounterStream(std::uint64_t seed, std::uint64_t index, Purpose purpose)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          purpose_(static_cast<std::uint32_t>(purpose)),
          index_lo_(static_cast<std::uint32_t>(index)),
          index_hi_(static_cast<std::uint32_t>(index >> 32)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (pos_ == 4) {
            buf_ = philox4x32({block_, purpose_, index_lo_, index_hi_}, key_);
            ++block_;
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    //! Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() {
        const std::uint64_t hi = (*this)();
        const std::uint64_t lo = (*this)();
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double phi = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    //! Poisson variate: sequential inversion below mean 10, PTRS (Hormann 1993) above.
    std::int64_t poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double limit = std::exp(-mean);
            std::int64_t k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        const double smu = std::sqrt(mean);
        const double b = 0.931 + 2.53 * smu;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mean = std::log(mean);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
            if (us >= 0.07 && v <= vr) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
            const double rhs = -mean + static_cast<double>(k) * log_mean - std::lgamma(static_cast<double>(k) + 1.0);
            if (lhs <= rhs) return k;
        }
    }

    //! Number of failures before the first success of a Bernoulli(p) sequence.
    std::uint64_t geometric_skip(double p) {
        if (p >= 1.0) return 0;
        const double g = std::floor(std::log(uniform()) / std::log1p(-p));
        if (g >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
        return static_cast<std::uint64_t>(g);
    }

    //! Integer uniform on [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        for (;;) {
            const std::uint64_t x = (std::uint64_t{(*this)()} << 32) | (*this)();
            if (x < limit) return x % n;
        }
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t purpose_;
    std::uint32_t index_lo_;
    std::uint32_t index_hi_;
    std::uint32_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace epr::rng
