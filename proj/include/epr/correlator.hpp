#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "epr/detector.hpp"
#include "epr/error.hpp"
#include "epr/fft.hpp"
#include "epr/parallel.hpp"
#include "epr/types.hpp"

namespace epr {

//! Signal and idler regions of interest. Equal sizes; may overlap.
struct RoiPair {
    Rect roi1;
    Rect roi2;
    Plane plane = Plane::NearField;

    [[nodiscard]] int width() const { return roi1.w; }
    [[nodiscard]] int height() const { return roi1.h; }

    void validate(int sensor_width, int sensor_height) const {
        if (roi1.w != roi2.w || roi1.h != roi2.h) throw EstimatorError("RoiPair: roi1 and roi2 must have equal size");
        if (!roi1.inside(sensor_width, sensor_height) || !roi2.inside(sensor_width, sensor_height))
            throw EstimatorError("RoiPair: ROI outside the sensor");
    }

    [[nodiscard]] RoiPair swapped() const { return {roi2, roi1, plane}; }
};

/*!
 * Normalized intercorrelation F on the grid of circular displacements of a w x h ROI.
 *
 * Storage is centered: element (row j, column i) holds displacement
 * (dx, dy) = (i - w/2, j - h/2) with integer division, so dx is in
 * [-(w/2), w - w/2). Positive dx means the idler ROI is read dx pixels to the right
 * of the signal pixel.
 */
struct CorrMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    //! Per-displacement standard error of `values` under independent signal/idler counts.
    std::vector<double> std_error;
    //! 1 = displacement excluded from fitting.
    std::vector<std::uint8_t> mask;
    std::int64_t n_frames = 0;
    //! Per-pixel mean counts <N1>, <N2> over the ROI and the frames used.
    Vec2 mean_counts;
    Plane plane = Plane::NearField;

    [[nodiscard]] int dx_min() const { return -(width / 2); }
    [[nodiscard]] int dy_min() const { return -(height / 2); }
    [[nodiscard]] int dx_max() const { return width - width / 2 - 1; }
    [[nodiscard]] int dy_max() const { return height - height / 2 - 1; }

    //! Wraps a displacement into the stored range.
    [[nodiscard]] int wrap_x(int dx) const { return ((dx - dx_min()) % width + width) % width + dx_min(); }
    [[nodiscard]] int wrap_y(int dy) const { return ((dy - dy_min()) % height + height) % height + dy_min(); }

    [[nodiscard]] std::size_t index(int dx, int dy) const {
        return static_cast<std::size_t>(wrap_y(dy) - dy_min()) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(wrap_x(dx) - dx_min());
    }
    [[nodiscard]] double at(int dx, int dy) const { return values[index(dx, dy)]; }
    [[nodiscard]] bool masked(int dx, int dy) const { return !mask.empty() && mask[index(dx, dy)] != 0; }
};

namespace detail {

//! One correlated frame pair: signal ROI of frame `a`, idler ROI of frame `b`, counted `weight` times.
struct CorrTerm {
    std::int64_t a;
    std::int64_t b;
    double weight;
};

//! Circular distance between two displacements on an n-periodic axis.
inline int circ_dist(int d, int n) {
    const int m = ((d % n) + n) % n;
    return std::min(m, n - m);
}

class RoiReader {
public:
    RoiReader(const RoiPair& rois) : rois_(rois), w_(rois.width()), h_(rois.height()) {}

    void signal(const Frame& f, std::span<double> out) const {
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) out[idx(x, y)] = f.get(rois_.roi1.x0 + x, rois_.roi1.y0 + y);
    }

    //! Far field reads the idler ROI point-reversed through its center so that twins land at r2 = -r1.
    void idler(const Frame& f, std::span<double> out) const {
        const bool reverse = rois_.plane == Plane::FarField;
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                const int sx = reverse ? w_ - 1 - x : x;
                const int sy = reverse ? h_ - 1 - y : y;
                out[idx(x, y)] = f.get(rois_.roi2.x0 + sx, rois_.roi2.y0 + sy);
            }
    }

private:
    [[nodiscard]] std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }
    RoiPair rois_;
    int w_;
    int h_;
};

inline void check_inputs(const FrameStack& stack, const RoiPair& rois) {
    if (stack.empty()) throw EstimatorError("correlator: empty frame stack");
    if (stack.plane != rois.plane)
        throw EstimatorError("correlator: stack plane '" + std::string(to_string(stack.plane)) +
                             "' does not match ROI plane '" + std::string(to_string(rois.plane)) + "'");
    rois.validate(stack.width, stack.height);
}

//! Frames per accumulation block. Fixed so the summation order never depends on workers.
inline constexpr std::size_t kBlockTerms = 64;

//! Weighted per-pixel temporal means of the signal and idler ROIs.
struct TemporalMeans {
    std::vector<double> m1;
    std::vector<double> m2;
    double total_weight = 0.0;
};

/*!
 * Turns an accumulated cross-spectrum sum_t w_t conj(X1_t) X2_t into the normalized map:
 * subtracts the mean term, inverts, normalizes by (<N1> + <N2>) / 2 and attaches the
 * null-hypothesis standard errors.
 *
 *   sum_t a_t * b_t = sum_t I1_t * I2_t - T m1 * m2      (* = circular correlation)
 */
inline CorrMap finish_map(const Fft2d& fft, std::vector<Fft2d::Complex> acc, const TemporalMeans& tm, Plane plane) {
    using C = Fft2d::Complex;
    const int w = fft.width(), h = fft.height();
    const std::size_t n = fft.real_size(), ns = fft.spectrum_size();
    const double mean1 = std::accumulate(tm.m1.begin(), tm.m1.end(), 0.0) / static_cast<double>(n);
    const double mean2 = std::accumulate(tm.m2.begin(), tm.m2.end(), 0.0) / static_cast<double>(n);
    const double norm = 0.5 * (mean1 + mean2);
    if (!(norm > 0.0)) throw EstimatorError("correlator: mean counts are zero, normalization undefined");

    std::vector<C> mspec1(ns), mspec2(ns);
    fft.forward(tm.m1, mspec1);
    fft.forward(tm.m2, mspec2);
    for (std::size_t s = 0; s < ns; ++s) acc[s] -= tm.total_weight * (std::conj(mspec1[s]) * mspec2[s]);

    std::vector<double> cov(n);
    fft.inverse(acc, cov);
    const double scale = 1.0 / (tm.total_weight * static_cast<double>(n) * static_cast<double>(n) * norm);

    // null-hypothesis variance: Var C(d) = sum_r v1(r) v2(r+d) / (T n^2), v = m(1-m) for binary pixels
    std::vector<double> v1(n), v2(n), vcorr(n);
    for (std::size_t i = 0; i < n; ++i) {
        v1[i] = tm.m1[i] * (1.0 - tm.m1[i]);
        v2[i] = tm.m2[i] * (1.0 - tm.m2[i]);
    }
    std::vector<C> vs1(ns), vs2(ns);
    fft.forward(v1, vs1);
    fft.forward(v2, vs2);
    for (std::size_t s = 0; s < ns; ++s) vs1[s] = std::conj(vs1[s]) * vs2[s];
    fft.inverse(vs1, vcorr);

    CorrMap map;
    map.width = w;
    map.height = h;
    map.values.assign(n, 0.0);
    map.std_error.assign(n, 0.0);
    map.mask.assign(n, 0);
    map.n_frames = static_cast<std::int64_t>(std::llround(tm.total_weight));
    map.mean_counts = {mean1, mean2};
    map.plane = plane;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t src = static_cast<std::size_t>(y) * w + x;
            const std::size_t dst = map.index(x, y);
            map.values[dst] = cov[src] * scale;
            const double var = std::max(0.0, vcorr[src] / static_cast<double>(n));
            map.std_error[dst] = std::sqrt(var / tm.total_weight) / (static_cast<double>(n) * norm);
        }
    return map;
}

/*!
 * Sums per-term spectra in fixed blocks of kBlockTerms, each block summed in term
 * order and the blocks added in block order, so the result is independent of workers.
 * `term_spectrum(k, out)` writes w_k conj(X1_k) X2_k into `out`.
 */
template <typename TermSpectrum>
std::vector<Fft2d::Complex> accumulate_blocks(std::size_t n_terms, std::size_t ns, unsigned workers,
                                              TermSpectrum&& term_spectrum) {
    using C = Fft2d::Complex;
    const std::size_t n_blocks = (n_terms + kBlockTerms - 1) / kBlockTerms;
    const std::size_t wave = std::max<std::size_t>(1, 4 * std::max(1u, workers));
    std::vector<C> acc(ns, C{0.0, 0.0});
    std::vector<std::vector<C>> partial(std::min(wave, n_blocks));
    for (std::size_t first = 0; first < n_blocks; first += wave) {
        const std::size_t count = std::min(wave, n_blocks - first);
        parallel_for(count, workers, [&](std::size_t slot) {
            const std::size_t blk = first + slot;
            std::vector<C>& part = partial[slot];
            part.assign(ns, C{0.0, 0.0});
            std::vector<C> term(ns);
            const std::size_t end = std::min(n_terms, (blk + 1) * kBlockTerms);
            for (std::size_t k = blk * kBlockTerms; k < end; ++k) {
                term_spectrum(k, term);
                for (std::size_t s = 0; s < ns; ++s) part[s] += term[s];
            }
        });
        for (std::size_t slot = 0; slot < count; ++slot)
            for (std::size_t s = 0; s < ns; ++s) acc[s] += partial[slot][s];
    }
    return acc;
}

/*!
 * Core estimator. Centers each pixel on its temporal mean over the terms, forms the
 * circular cross-covariance through the frequency domain (no zero padding), averages
 * over terms and ROI pixels, and normalizes by (<N1> + <N2>) / 2.
 */
inline CorrMap correlate_terms(const FrameStack& stack, const RoiPair& rois, std::span<const CorrTerm> terms,
                               unsigned workers) {
    check_inputs(stack, rois);
    if (terms.empty()) throw EstimatorError("correlator: no frame pairs to correlate");
    const int w = rois.width(), h = rois.height();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const RoiReader reader(rois);
    const Fft2d fft(w, h);
    const std::size_t ns = fft.spectrum_size();

    TemporalMeans tm;
    for (const CorrTerm& t : terms) tm.total_weight += t.weight;
    if (!(tm.total_weight > 0.0)) throw EstimatorError("correlator: zero total frame weight");
    tm.m1.assign(n, 0.0);
    tm.m2.assign(n, 0.0);
    {
        std::vector<double> buf(n);
        for (const CorrTerm& t : terms) {
            reader.signal(stack.frames[static_cast<std::size_t>(t.a)], buf);
            for (std::size_t i = 0; i < n; ++i) tm.m1[i] += t.weight * buf[i];
            reader.idler(stack.frames[static_cast<std::size_t>(t.b)], buf);
            for (std::size_t i = 0; i < n; ++i) tm.m2[i] += t.weight * buf[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            tm.m1[i] /= tm.total_weight;
            tm.m2[i] /= tm.total_weight;
        }
    }

    using C = Fft2d::Complex;
    auto acc = accumulate_blocks(terms.size(), ns, workers, [&](std::size_t k, std::vector<C>& out) {
        thread_local std::vector<double> i1, i2;
        thread_local std::vector<C> x1, x2;
        i1.resize(n);
        i2.resize(n);
        x1.resize(ns);
        x2.resize(ns);
        reader.signal(stack.frames[static_cast<std::size_t>(terms[k].a)], i1);
        reader.idler(stack.frames[static_cast<std::size_t>(terms[k].b)], i2);
        fft.forward(i1, x1);
        fft.forward(i2, x2);
        for (std::size_t s = 0; s < ns; ++s) out[s] = terms[k].weight * (std::conj(x1[s]) * x2[s]);
    });
    return finish_map(fft, std::move(acc), tm, rois.plane);
}

} // namespace detail

//! Normalized signal/idler intercorrelation over the stack (same-frame pairs).
inline CorrMap intercorrelation(const FrameStack& stack, const RoiPair& rois, unsigned workers = 1) {
    detail::check_inputs(stack, rois);
    std::vector<detail::CorrTerm> terms(stack.size());
    for (std::size_t t = 0; t < stack.size(); ++t)
        terms[t] = {static_cast<std::int64_t>(t), static_cast<std::int64_t>(t), 1.0};
    return detail::correlate_terms(stack, rois, terms, workers);
}

//! Intercorrelation with frame multiplicities (bootstrap resampling). counts.size() == stack.size().
inline CorrMap intercorrelation_weighted(const FrameStack& stack, const RoiPair& rois,
                                         std::span<const std::uint32_t> counts, unsigned workers = 1) {
    detail::check_inputs(stack, rois);
    if (counts.size() != stack.size()) throw EstimatorError("intercorrelation_weighted: counts size mismatch");
    std::vector<detail::CorrTerm> terms;
    for (std::size_t t = 0; t < counts.size(); ++t)
        if (counts[t] > 0)
            terms.push_back({static_cast<std::int64_t>(t), static_cast<std::int64_t>(t), static_cast<double>(counts[t])});
    return detail::correlate_terms(stack, rois, terms, workers);
}

/*!
 * Witness map: signal ROI of frame i against idler ROI of frame i+1. Pairs never
 * straddle frames, so any structure here is deterministic artifact.
 */
inline CorrMap witness(const FrameStack& stack, const RoiPair& rois, unsigned workers = 1) {
    detail::check_inputs(stack, rois);
    if (stack.size() < 2) throw EstimatorError("witness: needs at least 2 frames");
    std::vector<detail::CorrTerm> terms(stack.size() - 1);
    for (std::size_t t = 0; t + 1 < stack.size(); ++t)
        terms[t] = {static_cast<std::int64_t>(t), static_cast<std::int64_t>(t + 1), 1.0};
    return detail::correlate_terms(stack, rois, terms, workers);
}

/*!
 * Same-frame intercorrelation under many frame reweightings. Holds each frame's
 * cross-spectrum and unpacked ROI pixels, so a reweighted map costs one pass over
 * the cached spectra instead of two forward FFTs per frame. weighted(counts) equals
 * intercorrelation_weighted(stack, rois, counts) bit for bit.
 * Memory: frames * (16 * h * (w/2+1) + 2 * w * h) bytes.
 */
class CorrelationCache {
public:
    CorrelationCache(const FrameStack& stack, const RoiPair& rois, unsigned workers = 1)
        : plane_(rois.plane), n_frames_(stack.size()), fft_(rois.width(), rois.height()) {
        detail::check_inputs(stack, rois);
        const std::size_t n = fft_.real_size(), ns = fft_.spectrum_size();
        const detail::RoiReader reader(rois);
        spectra_.resize(n_frames_ * ns);
        pixels1_.resize(n_frames_ * n);
        pixels2_.resize(n_frames_ * n);
        parallel_for(n_frames_, workers, [&](std::size_t t) {
            std::vector<double> i1(n), i2(n);
            std::vector<Fft2d::Complex> x1(ns), x2(ns);
            reader.signal(stack.frames[t], i1);
            reader.idler(stack.frames[t], i2);
            fft_.forward(i1, x1);
            fft_.forward(i2, x2);
            for (std::size_t s = 0; s < ns; ++s) spectra_[t * ns + s] = std::conj(x1[s]) * x2[s];
            for (std::size_t i = 0; i < n; ++i) {
                pixels1_[t * n + i] = static_cast<std::uint8_t>(i1[i]);
                pixels2_[t * n + i] = static_cast<std::uint8_t>(i2[i]);
            }
        });
    }

    [[nodiscard]] std::size_t size() const { return n_frames_; }

    [[nodiscard]] CorrMap weighted(std::span<const std::uint32_t> counts, unsigned workers = 1) const {
        if (counts.size() != n_frames_) throw EstimatorError("CorrelationCache: counts size mismatch");
        std::vector<std::size_t> used;
        for (std::size_t t = 0; t < counts.size(); ++t)
            if (counts[t] > 0) used.push_back(t);
        if (used.empty()) throw EstimatorError("correlator: no frame pairs to correlate");
        const std::size_t n = fft_.real_size(), ns = fft_.spectrum_size();

        detail::TemporalMeans tm;
        for (std::size_t t : used) tm.total_weight += static_cast<double>(counts[t]);
        tm.m1.assign(n, 0.0);
        tm.m2.assign(n, 0.0);
        for (std::size_t t : used) {
            const double wt = static_cast<double>(counts[t]);
            for (std::size_t i = 0; i < n; ++i) tm.m1[i] += wt * static_cast<double>(pixels1_[t * n + i]);
            for (std::size_t i = 0; i < n; ++i) tm.m2[i] += wt * static_cast<double>(pixels2_[t * n + i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            tm.m1[i] /= tm.total_weight;
            tm.m2[i] /= tm.total_weight;
        }
        auto acc = detail::accumulate_blocks(used.size(), ns, workers, [&](std::size_t k, std::vector<Fft2d::Complex>& out) {
            const std::size_t t = used[k];
            const double wt = static_cast<double>(counts[t]);
            for (std::size_t s = 0; s < ns; ++s) out[s] = wt * spectra_[t * ns + s];
        });
        return detail::finish_map(fft_, std::move(acc), tm, plane_);
    }

private:
    Plane plane_;
    std::size_t n_frames_;
    Fft2d fft_;
    std::vector<Fft2d::Complex> spectra_;
    std::vector<std::uint8_t> pixels1_;
    std::vector<std::uint8_t> pixels2_;
};

//! Largest |F| / std_error over unmasked displacements.
inline double max_abs_z(const CorrMap& map) {
    double z = 0.0;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (!map.mask.empty() && map.mask[i]) continue;
        if (map.std_error[i] > 0.0) z = std::max(z, std::fabs(map.values[i]) / map.std_error[i]);
    }
    return z;
}

enum class SmearAxis : std::uint8_t { X, Y };

struct MaskOptions {
    //! Disk radius around the autocorrelation displacement (overlapping near-field ROIs).
    double radius = 3.0;
    //! Half-size of the fit window; the quantum peak must stay clear of the disk by this much.
    int fit_half_window = 7;
    SmearAxis smear_axis = SmearAxis::Y;
};

//! Displacement at which a sensor pixel shared by both ROIs correlates with itself.
inline std::pair<int, int> autocorrelation_displacement(const CorrMap& map, const RoiPair& rois) {
    return {map.wrap_x(rois.roi1.x0 - rois.roi2.x0), map.wrap_y(rois.roi1.y0 - rois.roi2.y0)};
}

/*!
 * Masks the autocorrelation disk (only when the near-field ROIs overlap) and the
 * one-pixel smear line through the autocorrelation displacement along the smear axis.
 * Throws MaskOverlapError if the strongest remaining value lies within
 * fit_half_window + radius of the disk.
 */
inline CorrMap build_mask(const CorrMap& in, const RoiPair& rois, const MaskOptions& opt = {}) {
    CorrMap map = in;
    map.mask.assign(map.values.size(), 0);
    const auto [ax, ay] = autocorrelation_displacement(map, rois);
    const bool disk = rois.plane == Plane::NearField && rois.roi1.intersects(rois.roi2);
    for (int dy = map.dy_min(); dy <= map.dy_max(); ++dy)
        for (int dx = map.dx_min(); dx <= map.dx_max(); ++dx) {
            const int ex = detail::circ_dist(dx - ax, map.width);
            const int ey = detail::circ_dist(dy - ay, map.height);
            bool m = opt.smear_axis == SmearAxis::Y ? ex == 0 : ey == 0;
            if (disk && std::hypot(ex, ey) <= opt.radius) m = true;
            if (m) map.mask[map.index(dx, dy)] = 1;
        }
    if (disk) {
        double best = -std::numeric_limits<double>::infinity();
        int px = 0, py = 0;
        for (int dy = map.dy_min(); dy <= map.dy_max(); ++dy)
            for (int dx = map.dx_min(); dx <= map.dx_max(); ++dx)
                if (!map.masked(dx, dy) && map.at(dx, dy) > best) {
                    best = map.at(dx, dy);
                    px = dx;
                    py = dy;
                }
        const int sep = std::max(detail::circ_dist(px - ax, map.width), detail::circ_dist(py - ay, map.height));
        if (sep <= opt.fit_half_window + static_cast<int>(std::ceil(opt.radius)))
            throw MaskOverlapError("build_mask: quantum peak at (" + std::to_string(px) + ", " + std::to_string(py) +
                                   ") is within the fit window of the autocorrelation mask at (" +
                                   std::to_string(ax) + ", " + std::to_string(ay) + ")");
    }
    return map;
}

struct VarianceOfDifference {
    /*!
     * Variance of N1 - N2 in shot-noise units, with the shot-noise reference taken
     * from the measured single-arm variances:
     *   ratio = 1 - 2 Cov(N1, N2) / <N1 + N2>
     * Equal to <(N1-N2)^2>/<N1+N2> whenever the single-arm counts are Poissonian.
     */
    double ratio = 0.0;
    //! The literal <(N1 - N2)^2> / <N1 + N2> over superpixels and frames, uncorrected.
    double raw_ratio = 0.0;
    //! Standard error of `ratio` from the frame-to-frame spread.
    double std_error = 0.0;
    int bin = 1;
    int n_superpixels = 0;
    std::int64_t n_frames = 0;
};

/*!
 * Aggregates each ROI into bin x bin superpixels (far field: idler ROI reversed first)
 * and compares the superpixel counts frame by frame.
 */
inline VarianceOfDifference variance_of_difference(const FrameStack& stack, const RoiPair& rois, int bin) {
    detail::check_inputs(stack, rois);
    const int w = rois.width(), h = rois.height();
    if (bin < 1 || w % bin != 0 || h % bin != 0)
        throw EstimatorError("variance_of_difference: bin " + std::to_string(bin) + " does not divide the ROI " +
                             std::to_string(w) + "x" + std::to_string(h));
    const int bw = w / bin, bh = h / bin;
    const std::size_t nsp = static_cast<std::size_t>(bw) * bh;
    const std::size_t T = stack.size();
    const detail::RoiReader reader(rois);

    std::vector<double> n1(T * nsp, 0.0), n2(T * nsp, 0.0);
    std::vector<double> buf1(static_cast<std::size_t>(w) * h), buf2(buf1.size());
    for (std::size_t t = 0; t < T; ++t) {
        reader.signal(stack.frames[t], buf1);
        reader.idler(stack.frames[t], buf2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t k = t * nsp + static_cast<std::size_t>(y / bin) * bw + static_cast<std::size_t>(x / bin);
                n1[k] += buf1[static_cast<std::size_t>(y) * w + x];
                n2[k] += buf2[static_cast<std::size_t>(y) * w + x];
            }
    }

    std::vector<double> mean1(nsp, 0.0), mean2(nsp, 0.0);
    double sq_diff = 0.0, sum = 0.0;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < nsp; ++k) {
            const double a = n1[t * nsp + k], b = n2[t * nsp + k];
            mean1[k] += a;
            mean2[k] += b;
            sq_diff += (a - b) * (a - b);
            sum += a + b;
        }
    if (!(sum > 0.0)) throw EstimatorError("variance_of_difference: no detections in the ROIs");
    for (std::size_t k = 0; k < nsp; ++k) {
        mean1[k] /= static_cast<double>(T);
        mean2[k] /= static_cast<double>(T);
    }

    // per-frame covariance sums q_t = sum_k dN1 dN2
    std::vector<double> q(T, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < nsp; ++k)
            q[t] += (n1[t * nsp + k] - mean1[k]) * (n2[t * nsp + k] - mean2[k]);
    const double q_mean = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(T);
    double q_var = 0.0;
    for (double v : q) q_var += (v - q_mean) * (v - q_mean);
    q_var = T > 1 ? q_var / static_cast<double>(T - 1) : 0.0;
    const double per_frame_sum = sum / static_cast<double>(T);

    VarianceOfDifference out;
    out.raw_ratio = sq_diff / sum;
    out.ratio = 1.0 - 2.0 * q_mean / per_frame_sum;
    out.std_error = 2.0 * std::sqrt(q_var / static_cast<double>(T)) / per_frame_sum;
    out.bin = bin;
    out.n_superpixels = static_cast<int>(nsp);
    out.n_frames = static_cast<std::int64_t>(T);
    return out;
}

} // namespace epr
