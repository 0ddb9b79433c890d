#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "epr/source.hpp"

using namespace epr;

namespace {

SourceParams small_source(double pairs, double unpaired = 0.0) {
    SourceParams p;
    p.mean_pairs_per_frame = pairs;
    p.unpaired_fraction = unpaired;
    p.near = p.far = BeamCenters{{128.0, 256.0}, {384.0, 256.0}};
    return p;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

std::vector<double> arm_x(const PhotonEventList& ev, Arm arm) {
    std::vector<double> out;
    for (const auto& e : ev.events)
        if (e.arm == arm) out.push_back(e.x);
    return out;
}

// Violation-factor oracle written out directly from the four widths.
double violation_oracle(double sx, double sy, double spx, double spy, const OpticalGeometry& g) {
    const double unit = 2.0 * 3.14159265358979323846 * g.pixel_pitch * g.pixel_pitch / (g.focal_length * g.wavelength);
    return 0.25 / (0.25 * (sx * sx + sy * sy) * (spx * spx + spy * spy) * unit * unit);
}

} // namespace

TEST(SampleFrame, ZeroRateGivesNoEvents) {
    rng::CounterStream r(1, 0, rng::Purpose::Test);
    EXPECT_TRUE(sample_frame(small_source(0.0), Plane::NearField, r).events.empty());
}

TEST(SampleFrame, PerfectCorrelationLimitPlacesTwinsExactly) {
    SourceParams p = small_source(500.0);
    p.nf_pair_sigma = {1e-12, 1e-12};
    p.ff_sum_sigma = {1e-12, 1e-12};
    for (Plane plane : {Plane::NearField, Plane::FarField}) {
        rng::CounterStream r(2, 0, rng::Purpose::Test);
        const auto ev = sample_frame(p, plane, r);
        ASSERT_GT(ev.events.size(), 0u);
        const BeamCenters& c = p.centers(plane);
        for (std::size_t k = 0; k + 1 < ev.events.size(); k += 2) {
            const auto& s = ev.events[k];
            const auto& i = ev.events[k + 1];
            ASSERT_EQ(s.arm, Arm::Signal);
            ASSERT_EQ(i.arm, Arm::Idler);
            const double ex = plane == Plane::NearField ? s.x - c.c1.x + c.c2.x : c.c2.x - (s.x - c.c1.x);
            const double ey = plane == Plane::NearField ? s.y - c.c1.y + c.c2.y : c.c2.y - (s.y - c.c1.y);
            EXPECT_NEAR(i.x, ex, 1e-9);
            EXPECT_NEAR(i.y, ey, 1e-9);
        }
    }
}

TEST(SampleFrame, ConditionalWidthMatchesCalibratedSigma) {
    const OpticalGeometry g;
    const SourceParams p = calibrate_to_violation(5.16, CalibrationShape::experiment(), g, small_source(1e5));
    for (Plane plane : {Plane::NearField, Plane::FarField}) {
        rng::CounterStream r(3, static_cast<std::uint64_t>(plane), rng::Purpose::Test);
        const auto ev = sample_frame(p, plane, r);
        const BeamCenters& c = p.centers(plane);
        double sx = 0.0, sy = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k + 1 < ev.events.size(); k += 2, ++n) {
            const auto& s = ev.events[k];
            const auto& i = ev.events[k + 1];
            const double ex = plane == Plane::NearField ? s.x - c.c1.x + c.c2.x : c.c2.x - (s.x - c.c1.x);
            const double ey = plane == Plane::NearField ? s.y - c.c1.y + c.c2.y : c.c2.y - (s.y - c.c1.y);
            sx += (i.x - ex) * (i.x - ex);
            sy += (i.y - ey) * (i.y - ey);
        }
        ASSERT_GT(n, 90000u);
        const Vec2 want = plane == Plane::NearField ? p.nf_pair_sigma : p.ff_sum_sigma;
        EXPECT_NEAR(std::sqrt(sx / n), want.x, 0.02 * want.x);
        EXPECT_NEAR(std::sqrt(sy / n), want.y, 0.02 * want.y);
    }
}

TEST(SampleFrame, UnpairedPhotonsLeaveMarginalsUnchanged) {
    rng::CounterStream r0(4, 0, rng::Purpose::Test), r1(4, 1, rng::Purpose::Test);
    const auto a = sample_frame(small_source(1e5, 0.0), Plane::FarField, r0);
    const auto b = sample_frame(small_source(1e5, 0.5), Plane::FarField, r1);
    for (Arm arm : {Arm::Signal, Arm::Idler}) {
        const auto xa = arm_x(a, arm), xb = arm_x(b, arm);
        const double n = static_cast<double>(xa.size()) * xb.size() / (xa.size() + xb.size());
        // 1% critical value of the two-sample KS test
        EXPECT_LT(ks_distance(xa, xb), 1.63 / std::sqrt(n));
    }
}

TEST(SampleFrame, UnpairedFractionDegradesPairingAsConfigured) {
    // With pair widths far below the marginal width, a twin lands within 1 px of its
    // ideal position only if neither photon was re-drawn: probability 1 - u.
    SourceParams p = small_source(5e4, 0.6);
    p.nf_pair_sigma = {1e-6, 1e-6};
    rng::CounterStream r(5, 0, rng::Purpose::Test);
    const auto ev = sample_frame(p, Plane::NearField, r);
    std::size_t kept = 0, n = 0;
    for (std::size_t k = 0; k + 1 < ev.events.size(); k += 2, ++n) {
        const auto& s = ev.events[k];
        const auto& i = ev.events[k + 1];
        if (std::hypot(i.x - (s.x + 256.0), i.y - s.y) < 1.0) ++kept;
    }
    const double frac = double(kept) / n;
    EXPECT_NEAR(frac, 0.4, 5 * std::sqrt(0.24 / n));
}

TEST(SampleFrame, PairingSignPerPlane) {
    for (Plane plane : {Plane::NearField, Plane::FarField}) {
        rng::CounterStream r(6, static_cast<std::uint64_t>(plane), rng::Purpose::Test);
        SourceParams p = small_source(2e4);
        const auto ev = sample_frame(p, plane, r);
        const BeamCenters& c = p.centers(plane);
        double cx = 0.0, cy = 0.0;
        for (std::size_t k = 0; k + 1 < ev.events.size(); k += 2) {
            cx += (ev.events[k].x - c.c1.x) * (ev.events[k + 1].x - c.c2.x);
            cy += (ev.events[k].y - c.c1.y) * (ev.events[k + 1].y - c.c2.y);
        }
        if (plane == Plane::NearField) {
            EXPECT_GT(cx, 0.0);
            EXPECT_GT(cy, 0.0);
        } else {
            EXPECT_LT(cx, 0.0);
            EXPECT_LT(cy, 0.0);
        }
    }
}

TEST(SampleFrame, PairCountsArePoisson) {
    const SourceParams p = small_source(25.0);
    const int frames = 4000;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < frames; ++t) {
        rng::CounterStream r(7, static_cast<std::uint64_t>(t), rng::Purpose::Test);
        const double k = static_cast<double>(sample_frame(p, Plane::NearField, r).events.size() / 2);
        s += k;
        s2 += k * k;
    }
    const double mean = s / frames, var = s2 / frames - mean * mean;
    EXPECT_NEAR(mean, 25.0, 5 * std::sqrt(25.0 / frames));
    EXPECT_NEAR(var / mean, 1.0, 5 * std::sqrt(2.0 / frames));
}

TEST(SampleFrame, SameStreamSameEvents) {
    const SourceParams p = small_source(100.0, 0.3);
    rng::CounterStream a(8, 3, rng::Purpose::NearFieldSource), b(8, 3, rng::Purpose::NearFieldSource);
    const auto ea = sample_frame(p, Plane::NearField, a), eb = sample_frame(p, Plane::NearField, b);
    ASSERT_EQ(ea.events.size(), eb.events.size());
    for (std::size_t i = 0; i < ea.events.size(); ++i) {
        EXPECT_EQ(ea.events[i].x, eb.events[i].x);
        EXPECT_EQ(ea.events[i].y, eb.events[i].y);
    }
}

TEST(SourceParams, ValidationErrors) {
    SourceParams p = small_source(1.0);
    EXPECT_NO_THROW(p.validate());
    p.nf_pair_sigma = {0.0, 1.0};
    EXPECT_THROW(p.validate(), ConfigError);
    p = small_source(1.0);
    p.ff_marginal_sigma = {1.0, 1.0};
    EXPECT_THROW(p.validate(), ConfigError);
    p = small_source(-1.0);
    EXPECT_THROW(p.validate(), ConfigError);
    p = small_source(1.0, 1.0);
    EXPECT_THROW(p.validate(), ConfigError);
    rng::CounterStream r(9, 0, rng::Purpose::Test);
    p = small_source(1.0);
    p.pump_sigma = {0.0, 0.0};
    EXPECT_THROW(sample_frame(p, Plane::NearField, r), ConfigError);
}

TEST(Envelope, RampHasConfiguredContrast) {
    Envelope e{2.0, 64.0};
    EXPECT_NEAR(e.keep_probability(32.0) / e.keep_probability(-32.0), 2.0, 1e-12);
    EXPECT_NEAR(e.keep_probability(100.0), e.keep_probability(32.0), 1e-15);
    EXPECT_LE(e.keep_probability(32.0), 1.0);
    Envelope flat;
    EXPECT_FALSE(flat.enabled());
    EXPECT_EQ(flat.keep_probability(10.0), 1.0);
}

TEST(Calibration, RoundTripsThroughExpectedViolation) {
    const OpticalGeometry g;
    for (double v : {0.5, 1.0, 4.15, 5.16, 20.0}) {
        const SourceParams p = calibrate_to_violation(v, CalibrationShape::experiment(), g);
        EXPECT_NEAR(expected_violation(p, g), v, 1e-6 * v);
        EXPECT_NEAR(p.nf_pair_sigma.x / p.nf_pair_sigma.y, 1.53 / 2.2, 1e-12);
        EXPECT_NEAR(p.ff_sum_sigma.x / p.ff_sum_sigma.y, 2.35 / 1.85, 1e-12);
    }
}

TEST(Calibration, UnitViolationIsotropicSitsOnTheBound) {
    const OpticalGeometry g;
    const SourceParams p = calibrate_to_violation(1.0, CalibrationShape{}, g);
    EXPECT_NEAR(p.nf_pair_sigma.x, p.nf_pair_sigma.y, 1e-12);
    const double u = g.product_unit();
    const double product = 0.25 * (2 * p.nf_pair_sigma.x * p.nf_pair_sigma.x) * (2 * p.ff_sum_sigma.x * p.ff_sum_sigma.x) * u * u;
    EXPECT_NEAR(product, 0.25, 1e-12);
}

TEST(Calibration, PublishedWidthsAreRecoveredFromTheirOwnViolation) {
    const OpticalGeometry g;
    const double v = violation_oracle(1.53, 2.2, 2.35, 1.85, g);
    const SourceParams p = calibrate_to_violation(v, CalibrationShape::experiment(), g);
    EXPECT_NEAR(p.nf_pair_sigma.x, 1.53, 1e-9);
    EXPECT_NEAR(p.nf_pair_sigma.y, 2.2, 1e-9);
    EXPECT_NEAR(p.ff_sum_sigma.x, 2.35, 1e-9);
    EXPECT_NEAR(p.ff_sum_sigma.y, 1.85, 1e-9);
    const double px = std::pow(p.nf_pair_sigma.x * p.ff_sum_sigma.x * g.product_unit(), 2);
    EXPECT_NEAR(px, 0.0485, 5e-5);
}

TEST(Calibration, Rejections) {
    const OpticalGeometry g;
    EXPECT_THROW(calibrate_to_violation(0.0, CalibrationShape{}, g), ConfigError);
    EXPECT_THROW(calibrate_to_violation(1.0, CalibrationShape{-1.0, 1.0, 1.0}, g), ConfigError);
    EXPECT_THROW(calibrate_to_violation(1.0, CalibrationShape{1.0, 0.0, 1.0}, g), ConfigError);
}

TEST(ExpectedViolation, PublishedWidths) {
    const OpticalGeometry g;
    SourceParams p;
    p.nf_pair_sigma = {1.53, 2.2};
    p.ff_sum_sigma = {2.35, 1.85};
    EXPECT_NEAR(expected_violation(p, g), violation_oracle(1.53, 2.2, 2.35, 1.85, g), 1e-12);
    EXPECT_NEAR(expected_violation(p, g), 4.15, 5e-3);
    const double v = expected_violation(p, g);
    p.nf_pair_sigma = {3.06, 4.4};
    EXPECT_NEAR(expected_violation(p, g), v / 4.0, 1e-12);
}
