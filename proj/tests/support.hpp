#pragma once

// Shared helpers for the test suites: independent oracles and synthetic inputs.

#include <cmath>
#include <cstdint>
#include <vector>

#include "epr/correlator.hpp"
#include "epr/detector.hpp"
#include "epr/rng.hpp"

namespace epr::test {

//! Stack of independent Bernoulli(p) pixels.
inline FrameStack random_stack(int w, int h, int n_frames, double p, std::uint64_t seed, Plane plane = Plane::NearField) {
    FrameStack s;
    s.width = w;
    s.height = h;
    s.plane = plane;
    s.seed = seed;
    for (int t = 0; t < n_frames; ++t) {
        rng::CounterStream r(seed, static_cast<std::uint64_t>(t), rng::Purpose::Test);
        Frame f(w, h, t);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (r.bernoulli(p)) f.set(x, y);
        s.frames.push_back(std::move(f));
    }
    return s;
}

/*!
 * Direct circular-correlation oracle, no FFT: for every displacement d,
 *   F(d) = [sum_t sum_r (I1_t(r) - m1(r)) (I2_t(r + d) - m2(r + d))] / (T n) / ((<N1> + <N2>) / 2)
 * with r + d wrapped inside the ROI and, in the far field, I2 read point-reversed.
 * Returned in the centered layout of CorrMap.
 */
inline std::vector<double> brute_force_corr(const FrameStack& s, const RoiPair& rois) {
    const int w = rois.roi1.w, h = rois.roi1.h;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const bool reverse = rois.plane == Plane::FarField;
    const auto T = static_cast<double>(s.size());
    auto i1 = [&](const Frame& f, int x, int y) { return double(f.get(rois.roi1.x0 + x, rois.roi1.y0 + y)); };
    auto i2 = [&](const Frame& f, int x, int y) {
        if (reverse) {
            x = w - 1 - x;
            y = h - 1 - y;
        }
        return double(f.get(rois.roi2.x0 + x, rois.roi2.y0 + y));
    };
    std::vector<double> m1(n, 0.0), m2(n, 0.0);
    for (const Frame& f : s.frames)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                m1[static_cast<std::size_t>(y * w + x)] += i1(f, x, y) / T;
                m2[static_cast<std::size_t>(y * w + x)] += i2(f, x, y) / T;
            }
    double mean1 = 0.0, mean2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean1 += m1[i] / static_cast<double>(n);
        mean2 += m2[i] / static_cast<double>(n);
    }
    const double norm = 0.5 * (mean1 + mean2);
    std::vector<double> out(n, 0.0);
    for (int dy = -(h / 2); dy < h - h / 2; ++dy)
        for (int dx = -(w / 2); dx < w - w / 2; ++dx) {
            double acc = 0.0;
            for (const Frame& f : s.frames)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const int x2 = ((x + dx) % w + w) % w, y2 = ((y + dy) % h + h) % h;
                        acc += (i1(f, x, y) - m1[static_cast<std::size_t>(y * w + x)]) *
                               (i2(f, x2, y2) - m2[static_cast<std::size_t>(y2 * w + x2)]);
                    }
            const std::size_t idx = static_cast<std::size_t>(dy + h / 2) * w + static_cast<std::size_t>(dx + w / 2);
            out[idx] = acc / (T * static_cast<double>(n)) / norm;
        }
    return out;
}

//! Map holding A exp(-(dx-x0)^2/2sx^2 - (dy-y0)^2/2sy^2) + b on the centered grid.
inline CorrMap gaussian_map(int w, int h, double A, double sx, double sy, double x0, double y0, double b) {
    CorrMap m;
    m.width = w;
    m.height = h;
    m.values.assign(static_cast<std::size_t>(w) * h, 0.0);
    m.std_error.assign(m.values.size(), 0.0);
    m.mask.assign(m.values.size(), 0);
    m.n_frames = 1;
    for (int dy = m.dy_min(); dy <= m.dy_max(); ++dy)
        for (int dx = m.dx_min(); dx <= m.dx_max(); ++dx)
            m.values[m.index(dx, dy)] =
                A * std::exp(-0.5 * ((dx - x0) * (dx - x0) / (sx * sx) + (dy - y0) * (dy - y0) / (sy * sy))) + b;
    return m;
}

} // namespace epr::test
