#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "epr/config.hpp"
#include "epr/eprreport.hpp"
#include "epr/pipeline.hpp"
#include "support.hpp"

using namespace epr;

namespace {

GaussFit fit_with(double sx, double sy, double var_sx = 0.0, double var_sy = 0.0) {
    GaussFit f;
    f.converged = true;
    f.amplitude = 0.01;
    f.sigma = {sx, sy};
    f.covariance[GaussFit::kSigmaX * 6 + GaussFit::kSigmaX] = var_sx;
    f.covariance[GaussFit::kSigmaY * 6 + GaussFit::kSigmaY] = var_sy;
    return f;
}

//! hbar^2 per (near-field pixel x far-field pixel)^2, written out from the optics:
//! near-field pixel = pitch, far-field pixel = hbar 2 pi pitch / (lambda f).
double unit_sq(const OpticalGeometry& g) {
    const double u = g.pixel_pitch * 2 * std::numbers::pi * g.pixel_pitch / (g.wavelength * g.focal_length);
    return u * u;
}

} // namespace

TEST(BuildReport, ReproducesTheReferenceWidths) {
    const OpticalGeometry g;
    const EprReport r = build_report(fit_with(1.53, 2.2), fit_with(2.35, 1.85), g);
    EXPECT_NEAR(r.products.x, 0.0485, 5e-5);
    EXPECT_NEAR(r.products.y, 0.0621, 5e-5);
    EXPECT_NEAR(r.products.iso, 0.0602, 5e-5);
    EXPECT_NEAR(r.factors.x, 5.16, 5e-3);
    EXPECT_NEAR(r.factors.y, 4.03, 5e-3);
    EXPECT_NEAR(r.factors.iso, 4.15, 5e-3);
    EXPECT_NEAR(r.products.x, 1.53 * 1.53 * 2.35 * 2.35 * unit_sq(g), 1e-12);
    EXPECT_TRUE(r.verdict.x && r.verdict.y && r.verdict.iso);
}

TEST(BuildReport, IsotropicProductUsesCombinedWidths) {
    const OpticalGeometry g;
    const EprReport r = build_report(fit_with(1.2, 3.1), fit_with(2.7, 0.9), g);
    const double a2 = 0.5 * (1.2 * 1.2 + 3.1 * 3.1), b2 = 0.5 * (2.7 * 2.7 + 0.9 * 0.9);
    EXPECT_NEAR(r.products.iso, a2 * b2 * unit_sq(g), 1e-12);
    EXPECT_NEAR(r.delta_r * r.delta_r, a2, 1e-12);
    // Cauchy-Schwarz: the combined product never beats the geometric mean of the axes
    EXPECT_GE(r.products.iso, std::sqrt(r.products.x * r.products.y));
}

TEST(BuildReport, HeisenbergBoundIsNotAViolation) {
    OpticalGeometry g;
    const double a = 2.0, b = 0.5 / (a * std::sqrt(unit_sq(g)));
    const EprReport r = build_report(fit_with(a, a), fit_with(b, b), g);
    EXPECT_NEAR(r.products.iso, 0.25, 1e-12);
    EXPECT_NEAR(r.factors.iso, 1.0, 1e-12);
    EXPECT_FALSE(r.verdict.x || r.verdict.y || r.verdict.iso);
}

TEST(BuildReport, UncertaintyDecidesTheVerdict) {
    const OpticalGeometry g;
    const double u = std::sqrt(unit_sq(g));
    // product 0.2 on both axes, one-sigma width error pushes it over the bound
    const double a = 2.0, b = std::sqrt(0.2) / (a * u);
    const EprReport tight = build_report(fit_with(a, a), fit_with(b, b), g);
    EXPECT_TRUE(tight.verdict.iso);
    const EprReport loose = build_report(fit_with(a, a, 0.09, 0.09), fit_with(b, b), g);
    // d(P)/P = 2 d(a)/a
    EXPECT_NEAR(loose.products_err.x, 0.2 * 2 * 0.3 / a, 1e-12);
    EXPECT_FALSE(loose.verdict.x);
    EprReport boot = tight;
    boot.bootstrap = BootstrapSpread{};
    boot.bootstrap->products = {0.06, 0.0, 0.06};
    apply_verdict(boot);
    EXPECT_FALSE(boot.verdict.x);
    EXPECT_TRUE(boot.verdict.y);
    EXPECT_FALSE(boot.verdict.iso);
}

TEST(BuildReport, ErrorsPropagateAndVanishWithoutCovariance) {
    const OpticalGeometry g;
    const EprReport zero = build_report(fit_with(1.53, 2.2), fit_with(2.35, 1.85), g);
    EXPECT_EQ(zero.products_err.x, 0.0);
    EXPECT_EQ(zero.products_err.iso, 0.0);
    EXPECT_EQ(zero.delta_r_err, 0.0);
    const double va = 0.01, vb = 0.02;
    const EprReport r = build_report(fit_with(1.53, 2.2, va, 0.0), fit_with(2.35, 1.85, vb, 0.0), g);
    const double rel = 2 * std::hypot(std::sqrt(va) / 1.53, std::sqrt(vb) / 2.35);
    EXPECT_NEAR(r.products_err.x, r.products.x * rel, 1e-12);
    EXPECT_NEAR(r.factors_err.x, r.factors.x * rel, 1e-9);
    EXPECT_EQ(r.products_err.y, 0.0);
}

TEST(BuildReport, ProductsGrowWithEitherWidth) {
    const OpticalGeometry g;
    const EprReport base = build_report(fit_with(1.5, 1.5), fit_with(2.0, 2.0), g);
    const EprReport wider_nf = build_report(fit_with(1.6, 1.5), fit_with(2.0, 2.0), g);
    const EprReport wider_ff = build_report(fit_with(1.5, 1.5), fit_with(2.0, 2.1), g);
    EXPECT_GT(wider_nf.products.x, base.products.x);
    EXPECT_EQ(wider_nf.products.y, base.products.y);
    EXPECT_GT(wider_ff.products.y, base.products.y);
    EXPECT_GT(wider_nf.products.iso, base.products.iso);
    EXPECT_GT(wider_ff.products.iso, base.products.iso);
}

TEST(BuildReport, RejectsUnconvergedFits) {
    GaussFit bad = fit_with(1.0, 1.0);
    bad.converged = false;
    EXPECT_THROW(build_report(bad, fit_with(1.0, 1.0), OpticalGeometry{}), FitError);
    EXPECT_THROW(build_report(fit_with(1.0, 1.0), bad, OpticalGeometry{}), FitError);
}

TEST(Bootstrap, NeedsEnoughResamples) {
    const FrameStack s = test::random_stack(32, 16, 4, 0.2, 1);
    const RoiPair rois{{0, 0, 16, 16}, {16, 0, 16, 16}, Plane::NearField};
    EXPECT_THROW(bootstrap_errors(s, s, rois, rois, OpticalGeometry{}, AnalysisOptions{}, 49, 1), ConfigError);
}

TEST(Bootstrap, AbortsWhenResamplesCannotBeFitted) {
    // identical frames carry no covariance, so every resample fails to find a peak
    FrameStack nf = test::random_stack(32, 16, 1, 0.2, 2);
    for (int i = 0; i < 9; ++i) nf.frames.push_back(nf.frames[0]);
    FrameStack ff = nf;
    ff.plane = Plane::FarField;
    const RoiPair rn{{0, 0, 16, 16}, {16, 0, 16, 16}, Plane::NearField};
    const RoiPair rf{{0, 0, 16, 16}, {16, 0, 16, 16}, Plane::FarField};
    try {
        bootstrap_errors(nf, ff, rn, rf, OpticalGeometry{}, AnalysisOptions{}, 50, 3);
        FAIL() << "expected BootstrapError";
    } catch (const BootstrapError& e) {
        EXPECT_NE(std::string(e.what()).find("50 of 50"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("near field"), std::string::npos) << e.what();
    }
}

class BootstrapOnSimulation : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        cfg_ = new RunConfig(load_config(std::filesystem::path(CONFIG_DIR) / "desk.ini"));
        cfg_->n_frames = 1500;
        nf_ = new FrameStack(simulate_stack(*cfg_, Plane::NearField));
        ff_ = new FrameStack(simulate_stack(*cfg_, Plane::FarField));
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete nf_;
        delete ff_;
    }
    static BootstrapSpread run(int n, unsigned workers) {
        return bootstrap_errors(*nf_, *ff_, cfg_->rois_near, cfg_->rois_far, cfg_->geometry, cfg_->analysis, n, 7,
                                workers);
    }
    static RunConfig* cfg_;
    static FrameStack* nf_;
    static FrameStack* ff_;
};
RunConfig* BootstrapOnSimulation::cfg_ = nullptr;
FrameStack* BootstrapOnSimulation::nf_ = nullptr;
FrameStack* BootstrapOnSimulation::ff_ = nullptr;

TEST_F(BootstrapOnSimulation, SpreadIsStableAndIndependentOfWorkers) {
    const BootstrapSpread a = run(50, 1), b = run(50, 2), c = run(150, 1);
    EXPECT_EQ(a.n_failed, 0);
    EXPECT_EQ(a.products.iso, b.products.iso);
    EXPECT_EQ(a.nf_sigma.x, b.nf_sigma.x);
    EXPECT_EQ(a.ff_sigma.y, b.ff_sigma.y);
    EXPECT_GT(a.products.iso, 0.0);
    EXPECT_NEAR(a.products.iso / c.products.iso, 1.0, 0.3);
    EXPECT_NEAR(a.nf_sigma.x / c.nf_sigma.x, 1.0, 0.3);
    EXPECT_NEAR(a.ff_sigma.x / c.ff_sigma.x, 1.0, 0.3);
}

TEST_F(BootstrapOnSimulation, SpreadIsComparableToFitErrors) {
    const CorrMap mn = intercorrelation(*nf_, cfg_->rois_near), mf = intercorrelation(*ff_, cfg_->rois_far);
    const EprReport r = build_report(analyze_map(mn, cfg_->rois_near, cfg_->analysis),
                                     analyze_map(mf, cfg_->rois_far, cfg_->analysis), cfg_->geometry);
    const BootstrapSpread s = run(50, 1);
    EXPECT_GT(s.products.iso / r.products_err.iso, 0.5);
    EXPECT_LT(s.products.iso / r.products_err.iso, 2.0);
}
