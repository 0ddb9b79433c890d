#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "epr/error.hpp"
#include "epr/rng.hpp"
#include "epr/source.hpp"
#include "epr/types.hpp"

namespace epr {

/*!
 * Thresholded photon-counting camera: quantum efficiency, per-pixel false counts
 * (clock-induced charge and threshold errors) and gain-register smear, which copies
 * a detection one row toward the readout register (+y).
 */
struct DetectorParams {
    double quantum_efficiency = 0.9;
    double false_count_prob = 0.0;
    double smear_prob = 0.0;
    int width = 512;
    int height = 512;

    void validate() const {
        if (!(quantum_efficiency > 0.0 && quantum_efficiency <= 1.0))
            throw ConfigError("detector.quantum_efficiency must be in (0, 1]");
        if (!(false_count_prob >= 0.0 && false_count_prob < 1.0))
            throw ConfigError("detector.false_count_prob must be in [0, 1)");
        if (!(smear_prob >= 0.0 && smear_prob < 1.0)) throw ConfigError("detector.smear_prob must be in [0, 1)");
        if (width <= 0 || height <= 0) throw ConfigError("detector width and height must be > 0");
    }
};

/*!
 * One binary frame, stored 1 bit per pixel, row-major, each row padded to whole
 * bytes, most significant bit first. This is the on-disk payload layout as well.
 */
class Frame {
public:
    Frame() = default;
    Frame(int width, int height, std::int64_t index = 0)
        : width_(width), height_(height), stride_((width + 7) / 8), index_(index),
          bits_(static_cast<std::size_t>(stride_) * static_cast<std::size_t>(height), 0) {}

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int stride() const { return stride_; }
    [[nodiscard]] std::int64_t index() const { return index_; }
    void set_index(std::int64_t i) { index_ = i; }

    //! Photon events that fell outside the sensor during rasterization.
    [[nodiscard]] std::int64_t clipped() const { return clipped_; }
    void set_clipped(std::int64_t n) { clipped_ = n; }

    [[nodiscard]] bool get(int x, int y) const {
        return (bits_[offset(x, y)] >> (7 - (x & 7))) & 1u;
    }
    void set(int x, int y) { bits_[offset(x, y)] |= static_cast<std::uint8_t>(0x80u >> (x & 7)); }

    [[nodiscard]] std::span<const std::uint8_t> bytes() const { return bits_; }
    [[nodiscard]] std::span<std::uint8_t> bytes() { return bits_; }

    [[nodiscard]] std::int64_t popcount() const {
        std::int64_t n = 0;
        for (auto b : bits_) n += std::popcount(b);
        return n;
    }

    [[nodiscard]] std::int64_t count_in(const Rect& r) const {
        std::int64_t n = 0;
        for (int y = r.y0; y < r.y0 + r.h; ++y)
            for (int x = r.x0; x < r.x0 + r.w; ++x) n += get(x, y);
        return n;
    }

    friend bool operator==(const Frame& a, const Frame& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
    }

private:
    [[nodiscard]] std::size_t offset(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(stride_) + static_cast<std::size_t>(x >> 3);
    }

    int width_ = 0;
    int height_ = 0;
    int stride_ = 0;
    std::int64_t index_ = 0;
    std::int64_t clipped_ = 0;
    std::vector<std::uint8_t> bits_;
};

//! Ordered equal-sized frames from one measurement plane.
struct FrameStack {
    int width = 0;
    int height = 0;
    Plane plane = Plane::NearField;
    std::uint64_t seed = 0;
    std::vector<Frame> frames;

    [[nodiscard]] std::size_t size() const { return frames.size(); }
    [[nodiscard]] bool empty() const { return frames.empty(); }
};

/*!
 * Converts photon positions to a binary frame. Pixel (i, j) covers [i-0.5, i+0.5) in
 * continuous coordinates; positions are rounded half away from zero. Random draws
 * happen in a fixed order: one QE draw per event, one smear draw per event-set pixel
 * in raster order, then geometric skips over the pixels for false counts.
 */
inline Frame rasterize(const PhotonEventList& events, const DetectorParams& d, rng::CounterStream& rng,
                       std::int64_t frame_index = 0) {
    d.validate();
    Frame frame(d.width, d.height, frame_index);
    std::int64_t clipped = 0;
    for (const PhotonEvent& e : events.events) {
        if (d.quantum_efficiency < 1.0 && !rng.bernoulli(d.quantum_efficiency)) continue;
        const double rx = std::round(e.x);
        const double ry = std::round(e.y);
        if (!(rx >= 0.0 && ry >= 0.0 && rx < d.width && ry < d.height)) {
            ++clipped;
            continue;
        }
        frame.set(static_cast<int>(rx), static_cast<int>(ry));
    }
    frame.set_clipped(clipped);

    if (d.smear_prob > 0.0) {
        const Frame hits = frame;
        const auto bytes = hits.bytes();
        for (int y = 0; y < d.height; ++y)
            for (int bx = 0; bx < hits.stride(); ++bx) {
                if (bytes[static_cast<std::size_t>(y) * hits.stride() + bx] == 0) continue;
                for (int x = bx * 8; x < std::min(d.width, bx * 8 + 8); ++x)
                    if (hits.get(x, y) && rng.bernoulli(d.smear_prob) && y + 1 < d.height) frame.set(x, y + 1);
            }
    }

    if (d.false_count_prob > 0.0) {
        const std::uint64_t n = static_cast<std::uint64_t>(d.width) * static_cast<std::uint64_t>(d.height);
        std::uint64_t pos = rng.geometric_skip(d.false_count_prob);
        while (pos < n) {
            frame.set(static_cast<int>(pos % static_cast<std::uint64_t>(d.width)),
                      static_cast<int>(pos / static_cast<std::uint64_t>(d.width)));
            const std::uint64_t skip = rng.geometric_skip(d.false_count_prob);
            if (skip >= n) break;
            pos += skip + 1;
        }
    }
    return frame;
}

struct FluenceCheck {
    double fluence = 0.0;
    //! True when the fluence lies outside the photon-counting window [0.1, 0.2].
    bool out_of_regime = false;
};

inline constexpr double kFluenceLow = 0.1;
inline constexpr double kFluenceHigh = 0.2;

//! Mean detections per pixel over all frames and the given regions (whole sensor if none).
inline FluenceCheck check_fluence(const FrameStack& stack, std::span<const Rect> regions = {}) {
    if (stack.empty()) throw EstimatorError("check_fluence: empty frame stack");
    const Rect full{0, 0, stack.width, stack.height};
    if (regions.empty()) regions = std::span<const Rect>(&full, 1);
    double hits = 0.0, pixels = 0.0;
    for (const Frame& f : stack.frames)
        for (const Rect& r : regions) {
            hits += static_cast<double>(f.count_in(r));
            pixels += static_cast<double>(r.w) * r.h;
        }
    const double fl = hits / pixels;
    return {fl, fl < kFluenceLow || fl > kFluenceHigh};
}

namespace detail {

//! Probability mass of N(mu, sigma^2) in [a, b).
inline double gauss_mass(double a, double b, double mu, double sigma) {
    const double s = sigma * std::numbers::sqrt2;
    return 0.5 * (std::erf((b - mu) / s) - std::erf((a - mu) / s));
}

inline double pixel_mass(int x, int y, const Marginal& m) {
    return gauss_mass(x - 0.5, x + 0.5, m.center.x, m.sigma.x) * gauss_mass(y - 0.5, y + 0.5, m.center.y, m.sigma.y);
}

} // namespace detail

/*!
 * Expected photon-counting fluence over `regions` for a source/detector pair, from
 * the closed-form binarization of Poisson pixel counts:
 *   P(pixel dark) = (1 - false) * exp(-QE mu(r)) * (1 - smear * (1 - exp(-QE mu(r - y))))
 * The envelope option is ignored.
 */
inline double expected_fluence(const SourceParams& p, const DetectorParams& d, Plane plane,
                               std::span<const Rect> regions) {
    const Marginal m1 = arm_marginal(p, plane, Arm::Signal);
    const Marginal m2 = arm_marginal(p, plane, Arm::Idler);
    auto mu = [&](int x, int y) {
        if (y < 0) return 0.0;
        return p.mean_pairs_per_frame * (detail::pixel_mass(x, y, m1) + detail::pixel_mass(x, y, m2));
    };
    double acc = 0.0, pixels = 0.0;
    for (const Rect& r : regions)
        for (int y = r.y0; y < r.y0 + r.h; ++y)
            for (int x = r.x0; x < r.x0 + r.w; ++x) {
                const double here = std::exp(-d.quantum_efficiency * mu(x, y));
                const double above = 1.0 - std::exp(-d.quantum_efficiency * mu(x, y - 1));
                acc += 1.0 - (1.0 - d.false_count_prob) * here * (1.0 - d.smear_prob * above);
                pixels += 1.0;
            }
    return pixels > 0.0 ? acc / pixels : 0.0;
}

//! Mean pairs per frame giving the target expected fluence over `regions` (bisection).
inline double mean_pairs_for_fluence(double target, SourceParams p, const DetectorParams& d, Plane plane,
                                     std::span<const Rect> regions) {
    if (!(target > d.false_count_prob && target < 1.0))
        throw ConfigError("fluence target must exceed the false-count rate and be < 1");
    double lo = 0.0, hi = 1.0;
    auto at = [&](double pairs) {
        p.mean_pairs_per_frame = pairs;
        return expected_fluence(p, d, plane, regions);
    };
    while (at(hi) < target) {
        hi *= 2.0;
        if (hi > 1e9) throw ConfigError("fluence target unreachable for this source geometry");
    }
    for (int it = 0; it < 80 && hi - lo > 1e-9 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (at(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace epr
