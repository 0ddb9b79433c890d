#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "epr/error.hpp"
#include "epr/optics.hpp"
#include "epr/rng.hpp"
#include "epr/types.hpp"

namespace epr {

//! Centers of the two polarization spots (signal = 1, idler = 2) in one plane, in sensor pixels.
struct BeamCenters {
    Vec2 c1;
    Vec2 c2;
};

//! Spots at the quarter and three-quarter columns of the sensor, on the middle row.
inline BeamCenters default_centers(int sensor_width, int sensor_height) {
    const double y = sensor_height / 2.0;
    return {{sensor_width / 4.0, y}, {3.0 * sensor_width / 4.0, y}};
}

/*!
 * Deterministic intensity ramp along x, applied by thinning pairs on the signal
 * photon's offset from its beam center. The ratio of the brightest to the dimmest
 * intensity across `span` pixels is `contrast`; outside the span the ramp is flat.
 * contrast == 1 disables it (and consumes no random numbers).
 */
struct Envelope {
    double contrast = 1.0;
    double span = 64.0;

    [[nodiscard]] bool enabled() const { return contrast != 1.0; }
    [[nodiscard]] double slope() const { return (contrast - 1.0) / (contrast + 1.0); }
    //! Keep probability in (0, 1] for a signal photon at x offset dx from its center.
    [[nodiscard]] double keep_probability(double dx) const {
        const double k = slope();
        const double t = std::clamp(2.0 * dx / span, -1.0, 1.0);
        return (1.0 + k * t) / (1.0 + std::fabs(k));
    }
};

/*!
 * Double-Gaussian biphoton model.
 *
 * Near field: signal ~ N(c1, pump^2); idler at the same transverse position in the
 * other spot, blurred by the pair-separation width. Far field: signal ~ N(c1, marginal^2);
 * idler at the mirrored position about c2, blurred by the momentum-sum width.
 * All widths are standard deviations in the pixels of the respective plane.
 */
struct SourceParams {
    Vec2 pump_sigma{16.0, 16.0};
    Vec2 nf_pair_sigma{1.53, 2.2};
    Vec2 ff_sum_sigma{2.35, 1.85};
    Vec2 ff_marginal_sigma{16.0, 16.0};
    double mean_pairs_per_frame = 0.0;
    //! Fraction of photons whose twin is never detected as a pair partner, in [0, 1).
    double unpaired_fraction = 0.0;
    BeamCenters near = default_centers(512, 512);
    BeamCenters far = default_centers(512, 512);
    Envelope envelope;

    [[nodiscard]] const BeamCenters& centers(Plane p) const { return p == Plane::NearField ? near : far; }

    void validate() const {
        auto pos = [](Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y) && v.x > 0.0 && v.y > 0.0; };
        if (!pos(pump_sigma)) throw ConfigError("source.pump_sigma must be > 0 on both axes");
        if (!pos(nf_pair_sigma)) throw ConfigError("source.nf_pair_sigma must be > 0 on both axes");
        if (!pos(ff_sum_sigma)) throw ConfigError("source.ff_sum_sigma must be > 0 on both axes");
        if (!pos(ff_marginal_sigma)) throw ConfigError("source.ff_marginal_sigma must be > 0 on both axes");
        if (ff_marginal_sigma.x < ff_sum_sigma.x || ff_marginal_sigma.y < ff_sum_sigma.y)
            throw ConfigError("source.ff_marginal_sigma must be >= ff_sum_sigma componentwise");
        if (!(mean_pairs_per_frame >= 0.0) || !std::isfinite(mean_pairs_per_frame))
            throw ConfigError("source.mean_pairs_per_frame must be >= 0");
        if (!(unpaired_fraction >= 0.0 && unpaired_fraction < 1.0))
            throw ConfigError("source.unpaired_fraction must be in [0, 1)");
        if (!(envelope.contrast > 0.0) || !(envelope.span > 0.0))
            throw ConfigError("source.envelope_contrast and envelope_span must be > 0");
    }

    /*!
     * Probability that a photon is re-drawn from its marginal. Both photons of a pair
     * stay paired with probability (1-q)^2 = 1 - unpaired_fraction.
     */
    [[nodiscard]] double redraw_probability() const { return 1.0 - std::sqrt(1.0 - unpaired_fraction); }
};

enum class Arm : std::uint8_t { Signal = 0, Idler = 1 };

struct PhotonEvent {
    double x;
    double y;
    Arm arm;
};

//! Photon positions for one frame. Pairs are adjacent but nothing downstream may rely on it.
struct PhotonEventList {
    Plane plane = Plane::NearField;
    std::vector<PhotonEvent> events;
};

//! Single-photon marginal of one arm: independent Gaussian per axis.
struct Marginal {
    Vec2 center;
    Vec2 sigma;
};

inline Marginal arm_marginal(const SourceParams& p, Plane plane, Arm arm) {
    const BeamCenters& c = p.centers(plane);
    const Vec2 base = plane == Plane::NearField ? p.pump_sigma : p.ff_marginal_sigma;
    if (arm == Arm::Signal) return {c.c1, base};
    const Vec2 pair = plane == Plane::NearField ? p.nf_pair_sigma : p.ff_sum_sigma;
    return {c.c2, {std::hypot(base.x, pair.x), std::hypot(base.y, pair.y)}};
}

/*!
 * Draws one frame's photons. K ~ Poisson(mean_pairs_per_frame) pairs; each photon is
 * independently replaced by a fresh draw from its own marginal with probability
 * redraw_probability(), which keeps both marginals unchanged while breaking the pair.
 */
inline PhotonEventList sample_frame(const SourceParams& p, Plane plane, rng::CounterStream& rng) {
    p.validate();
    PhotonEventList out;
    out.plane = plane;
    const std::int64_t pairs = rng.poisson(p.mean_pairs_per_frame);
    out.events.reserve(static_cast<std::size_t>(2 * pairs));

    const BeamCenters& c = p.centers(plane);
    const double q = p.redraw_probability();
    const Marginal m1 = arm_marginal(p, plane, Arm::Signal);
    const Marginal m2 = arm_marginal(p, plane, Arm::Idler);
    auto draw = [&](const Marginal& m) {
        return Vec2{rng.normal(m.center.x, m.sigma.x), rng.normal(m.center.y, m.sigma.y)};
    };

    for (std::int64_t k = 0; k < pairs; ++k) {
        const Vec2 r1 = draw(m1);
        Vec2 r2;
        if (plane == Plane::NearField) {
            r2 = {r1.x - c.c1.x + c.c2.x + rng.normal(0.0, p.nf_pair_sigma.x),
                  r1.y - c.c1.y + c.c2.y + rng.normal(0.0, p.nf_pair_sigma.y)};
        } else {
            r2 = {c.c2.x - (r1.x - c.c1.x) + rng.normal(0.0, p.ff_sum_sigma.x),
                  c.c2.y - (r1.y - c.c1.y) + rng.normal(0.0, p.ff_sum_sigma.y)};
        }
        if (p.envelope.enabled() && !rng.bernoulli(p.envelope.keep_probability(r1.x - c.c1.x))) continue;
        const Vec2 e1 = (q > 0.0 && rng.bernoulli(q)) ? draw(m1) : r1;
        const Vec2 e2 = (q > 0.0 && rng.bernoulli(q)) ? draw(m2) : r2;
        out.events.push_back({e1.x, e1.y, Arm::Signal});
        out.events.push_back({e2.x, e2.y, Arm::Idler});
    }
    return out;
}

/*!
 * Shape of a calibrated source: per-plane x/y width ratios and the ratio of the
 * near-field rms width to the far-field rms width (both in their own pixels).
 */
struct CalibrationShape {
    double nf_aspect = 1.0;      // sigma_x / sigma_y, near field
    double ff_aspect = 1.0;      // sigma_x / sigma_y, far field
    double near_far_ratio = 1.0; // rms(nf) / rms(ff)

    //! Aspect ratios and rms split of the widths measured in the original experiment.
    static CalibrationShape experiment() {
        const double dr = std::sqrt((1.53 * 1.53 + 2.2 * 2.2) / 2.0);
        const double dp = std::sqrt((2.35 * 2.35 + 1.85 * 1.85) / 2.0);
        return {1.53 / 2.2, 2.35 / 1.85, dr / dp};
    }
};

/*!
 * Violation factor (hbar^2/4) / (Delta^2 r Delta^2 p) that an ideal, distortion-free
 * measurement of this source would report, using the isotropic combination
 *   Delta^2 r Delta^2 p = 1/4 (sx^2 + sy^2)(spx^2 + spy^2) unit^2.
 */
inline double expected_violation(const SourceParams& p, const OpticalGeometry& g) {
    const double u = g.product_unit();
    const double nf = p.nf_pair_sigma.x * p.nf_pair_sigma.x + p.nf_pair_sigma.y * p.nf_pair_sigma.y;
    const double ff = p.ff_sum_sigma.x * p.ff_sum_sigma.x + p.ff_sum_sigma.y * p.ff_sum_sigma.y;
    return heisenberg_bound.value() / (0.25 * nf * ff * u * u);
}

/*!
 * Returns `base` with the near-field pair widths and far-field sum widths replaced
 * so that expected_violation(result, g) == target_violation.
 */
inline SourceParams calibrate_to_violation(double target_violation, const CalibrationShape& shape,
                                           const OpticalGeometry& g, SourceParams base = {}) {
    if (!(target_violation > 0.0) || !std::isfinite(target_violation))
        throw ConfigError("calibration.violation must be > 0");
    if (!(shape.nf_aspect > 0.0) || !(shape.ff_aspect > 0.0) || !(shape.near_far_ratio > 0.0))
        throw ConfigError("calibration: anisotropy and near/far ratio must be > 0");
    g.validate();
    const double u = g.product_unit();
    // rms_nf * rms_ff = 1 / (2 sqrt(V) u)
    const double k = 1.0 / (2.0 * std::sqrt(target_violation) * u);
    const double rms_nf = std::sqrt(k * shape.near_far_ratio);
    const double rms_ff = std::sqrt(k / shape.near_far_ratio);
    auto split = [](double rms, double aspect) {
        const double sy = rms * std::sqrt(2.0 / (aspect * aspect + 1.0));
        return Vec2{aspect * sy, sy};
    };
    base.nf_pair_sigma = split(rms_nf, shape.nf_aspect);
    base.ff_sum_sigma = split(rms_ff, shape.ff_aspect);
    return base;
}

} // namespace epr
