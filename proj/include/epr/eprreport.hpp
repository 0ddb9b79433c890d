#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "epr/correlator.hpp"
#include "epr/error.hpp"
#include "epr/optics.hpp"
#include "epr/parallel.hpp"
#include "epr/peakfit.hpp"
#include "epr/rng.hpp"

namespace epr {

//! One value per inequality: horizontal, vertical, isotropic.
struct AxisTriple {
    double x = 0.0;
    double y = 0.0;
    double iso = 0.0;
};

//! Resampling spread of every reported quantity.
struct BootstrapSpread {
    int n_resamples = 0;
    int n_failed = 0;
    std::vector<std::string> failures;
    Vec2 nf_sigma;
    Vec2 ff_sigma;
    double delta_r = 0.0;
    double delta_p = 0.0;
    double r_n = 0.0;
    double r_p = 0.0;
    AxisTriple products;
    AxisTriple factors;
};

struct Verdict {
    bool x = false;
    bool y = false;
    bool iso = false;
};

/*!
 * EPR test from a near-field and a far-field peak fit. Products are in hbar^2,
 * factors are (hbar^2/4) / product. `*_err` are first-order propagations of the fit
 * covariances; `bootstrap` holds resampling spreads when they were computed.
 */
struct EprReport {
    GaussFit nf;
    GaussFit ff;
    double delta_r = 0.0;
    double delta_p = 0.0;
    double delta_r_err = 0.0;
    double delta_p_err = 0.0;
    double r_n = 0.0;
    double r_p = 0.0;
    double r_n_err = 0.0;
    double r_p_err = 0.0;
    AxisTriple products;
    AxisTriple products_err;
    AxisTriple factors;
    AxisTriple factors_err;
    std::optional<BootstrapSpread> bootstrap;
    std::optional<double> fluence_nf;
    std::optional<double> fluence_ff;
    std::int64_t n_frames_nf = 0;
    std::int64_t n_frames_ff = 0;
    OpticalGeometry geometry;
    Verdict verdict;
};

//! Uncertainty used by the verdict: the larger of fit covariance and bootstrap spread.
inline AxisTriple verdict_uncertainty(const EprReport& r) {
    AxisTriple u = r.products_err;
    if (r.bootstrap) {
        u.x = std::max(u.x, r.bootstrap->products.x);
        u.y = std::max(u.y, r.bootstrap->products.y);
        u.iso = std::max(u.iso, r.bootstrap->products.iso);
    }
    return u;
}

//! Conservative one-sided rule: violated iff product + 1 sigma < hbar^2/4.
inline void apply_verdict(EprReport& r) {
    const AxisTriple u = verdict_uncertainty(r);
    const double bound = heisenberg_bound.value();
    r.verdict = {r.products.x + u.x < bound, r.products.y + u.y < bound, r.products.iso + u.iso < bound};
}

namespace detail {

inline AxisTriple products_from_widths(Vec2 nf, Vec2 ff, const OpticalGeometry& g) {
    const double u2 = g.product_unit() * g.product_unit();
    return {heisenberg_product_1d(NfPixels{nf.x}, FfPixels{ff.x}, g).value(),
            heisenberg_product_1d(NfPixels{nf.y}, FfPixels{ff.y}, g).value(),
            0.25 * (nf.x * nf.x + nf.y * nf.y) * (ff.x * ff.x + ff.y * ff.y) * u2};
}

inline AxisTriple factors_from_products(const AxisTriple& p) {
    const double b = heisenberg_bound.value();
    return {b / p.x, b / p.y, b / p.iso};
}

//! Variance of g . (sx, sy) under a fit's width covariance block.
inline double width_quadratic(const GaussFit& f, double gx, double gy) {
    return gx * gx * f.cov(GaussFit::kSigmaX, GaussFit::kSigmaX) +
           2.0 * gx * gy * f.cov(GaussFit::kSigmaX, GaussFit::kSigmaY) +
           gy * gy * f.cov(GaussFit::kSigmaY, GaussFit::kSigmaY);
}

} // namespace detail

/*!
 * Combines the two fits into products, violation factors and their first-order
 * uncertainties. Widths are read as near-field and far-field pixels respectively;
 * the two fits are treated as independent.
 */
inline EprReport build_report(const GaussFit& nf_fit, const GaussFit& ff_fit, const OpticalGeometry& g) {
    if (!nf_fit.converged) throw FitError("build_report: near-field fit did not converge");
    if (!ff_fit.converged) throw FitError("build_report: far-field fit did not converge");
    g.validate();

    EprReport r;
    r.nf = nf_fit;
    r.ff = ff_fit;
    r.geometry = g;
    const Vec2 a = nf_fit.sigma, b = ff_fit.sigma;
    r.delta_r = combine_axes(a.x, a.y);
    r.delta_p = combine_axes(b.x, b.y);
    r.delta_r_err = std::sqrt(std::max(0.0, detail::width_quadratic(nf_fit, a.x / (2 * r.delta_r), a.y / (2 * r.delta_r))));
    r.delta_p_err = std::sqrt(std::max(0.0, detail::width_quadratic(ff_fit, b.x / (2 * r.delta_p), b.y / (2 * r.delta_p))));
    r.r_n = integrate_R(nf_fit);
    r.r_p = integrate_R(ff_fit);
    r.r_n_err = integrate_R_error(nf_fit);
    r.r_p_err = integrate_R_error(ff_fit);

    r.products = detail::products_from_widths(a, b, g);
    r.factors = detail::factors_from_products(r.products);

    const double u2 = g.product_unit() * g.product_unit();
    const double sn = a.x * a.x + a.y * a.y, sp = b.x * b.x + b.y * b.y;
    const double var_x = detail::width_quadratic(nf_fit, 2 * r.products.x / a.x, 0.0) +
                         detail::width_quadratic(ff_fit, 2 * r.products.x / b.x, 0.0);
    const double var_y = detail::width_quadratic(nf_fit, 0.0, 2 * r.products.y / a.y) +
                         detail::width_quadratic(ff_fit, 0.0, 2 * r.products.y / b.y);
    const double var_iso = detail::width_quadratic(nf_fit, 0.5 * a.x * sp * u2, 0.5 * a.y * sp * u2) +
                           detail::width_quadratic(ff_fit, 0.5 * b.x * sn * u2, 0.5 * b.y * sn * u2);
    r.products_err = {std::sqrt(std::max(0.0, var_x)), std::sqrt(std::max(0.0, var_y)),
                      std::sqrt(std::max(0.0, var_iso))};
    r.factors_err = {r.factors.x * r.products_err.x / r.products.x, r.factors.y * r.products_err.y / r.products.y,
                     r.factors.iso * r.products_err.iso / r.products.iso};
    apply_verdict(r);
    return r;
}

//! Knobs shared by the pipeline and the bootstrap.
struct AnalysisOptions {
    MaskOptions mask;
    FitOptions fit;
    int bin = 8;
    int n_resamples = 100;
};

//! Mask, window and fit one intercorrelation map; unconverged fits are an error.
inline GaussFit analyze_map(const CorrMap& map, const RoiPair& rois, const AnalysisOptions& opt) {
    const CorrMap masked = build_mask(map, rois, opt.mask);
    GaussFit fit = fit_gaussian(masked, opt.mask.fit_half_window, opt.fit);
    if (!fit.converged)
        throw FitError("fit did not converge after " + std::to_string(fit.iterations) +
                       " iterations (gradient ratio " + std::to_string(fit.gradient_ratio) + ")");
    return fit;
}

namespace detail {

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::vector<std::uint32_t> resample_counts(std::size_t n, rng::CounterStream& rng) {
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[rng.below(n)];
    return counts;
}

} // namespace detail

/*!
 * Frame bootstrap: resample both stacks with replacement, rerun correlate -> mask ->
 * fit -> report for each resample, and return the standard deviations. Resample b
 * draws from stream (seed, b), so results do not depend on `workers`. Failed
 * resamples are recorded and skipped; more than 10% failures aborts.
 */
inline BootstrapSpread bootstrap_errors(const FrameStack& stack_nf, const FrameStack& stack_ff, const RoiPair& rois_nf,
                                        const RoiPair& rois_ff, const OpticalGeometry& g, const AnalysisOptions& opt,
                                        int n_resamples, std::uint64_t seed, unsigned workers = 1) {
    if (n_resamples < 50) throw ConfigError("analysis.n_resamples must be >= 50");
    struct Outcome {
        bool ok = false;
        std::string error;
        EprReport report;
    };
    std::vector<Outcome> out(static_cast<std::size_t>(n_resamples));
    std::vector<GaussFit> nf_fits(out.size());
    // one plane at a time keeps a single spectrum cache alive
    for (int plane = 0; plane < 2; ++plane) {
        const FrameStack& stack = plane == 0 ? stack_nf : stack_ff;
        const RoiPair& rois = plane == 0 ? rois_nf : rois_ff;
        const CorrelationCache cache(stack, rois, workers);
        parallel_for(out.size(), workers, [&](std::size_t b) {
            if (plane == 1 && !out[b].error.empty()) return;
            rng::CounterStream rng(seed, b, rng::Purpose::Bootstrap);
            auto counts = detail::resample_counts(stack_nf.size(), rng);
            if (plane == 1) counts = detail::resample_counts(stack_ff.size(), rng);
            try {
                const GaussFit fit = analyze_map(cache.weighted(counts), rois, opt);
                if (plane == 0) {
                    nf_fits[b] = fit;
                } else {
                    out[b].report = build_report(nf_fits[b], fit, g);
                    out[b].ok = true;
                }
            } catch (const Error& e) {
                out[b].error = std::string(plane == 0 ? "near field: " : "far field: ") + e.what();
            }
        });
    }

    BootstrapSpread s;
    s.n_resamples = n_resamples;
    std::vector<double> nsx, nsy, fsx, fsy, dr, dp, rn, rp, px, py, pi, fx, fy, fi;
    for (std::size_t b = 0; b < out.size(); ++b) {
        if (!out[b].ok) {
            ++s.n_failed;
            s.failures.push_back("resample " + std::to_string(b) + ": " + out[b].error);
            continue;
        }
        const EprReport& r = out[b].report;
        nsx.push_back(r.nf.sigma.x);
        nsy.push_back(r.nf.sigma.y);
        fsx.push_back(r.ff.sigma.x);
        fsy.push_back(r.ff.sigma.y);
        dr.push_back(r.delta_r);
        dp.push_back(r.delta_p);
        rn.push_back(r.r_n);
        rp.push_back(r.r_p);
        px.push_back(r.products.x);
        py.push_back(r.products.y);
        pi.push_back(r.products.iso);
        fx.push_back(r.factors.x);
        fy.push_back(r.factors.y);
        fi.push_back(r.factors.iso);
    }
    if (10 * s.n_failed > n_resamples) {
        std::string msg = "bootstrap: " + std::to_string(s.n_failed) + " of " + std::to_string(n_resamples) +
                          " resamples failed";
        if (!s.failures.empty()) msg += " (first: " + s.failures.front() + ")";
        throw BootstrapError(msg);
    }
    using detail::sample_sd;
    s.nf_sigma = {sample_sd(nsx), sample_sd(nsy)};
    s.ff_sigma = {sample_sd(fsx), sample_sd(fsy)};
    s.delta_r = sample_sd(dr);
    s.delta_p = sample_sd(dp);
    s.r_n = sample_sd(rn);
    s.r_p = sample_sd(rp);
    s.products = {sample_sd(px), sample_sd(py), sample_sd(pi)};
    s.factors = {sample_sd(fx), sample_sd(fy), sample_sd(fi)};
    return s;
}

//! Plain-text summary with the three inequalities.
inline std::string summary_text(const EprReport& r) {
    std::string out;
    char line[256];
    auto add = [&](const char* fmt, auto... args) {
        std::snprintf(line, sizeof line, fmt, args...);
        out += line;
    };
    add("near field: dx = %.3f +- %.3f px, dy = %.3f +- %.3f px, dr = %.3f +- %.3f px, R_n = %.4g\n", r.nf.sigma.x,
        r.nf.sd(GaussFit::kSigmaX), r.nf.sigma.y, r.nf.sd(GaussFit::kSigmaY), r.delta_r, r.delta_r_err, r.r_n);
    add("far field:  dpx = %.3f +- %.3f px, dpy = %.3f +- %.3f px, dp = %.3f +- %.3f px, R_p = %.4g\n", r.ff.sigma.x,
        r.ff.sd(GaussFit::kSigmaX), r.ff.sigma.y, r.ff.sd(GaussFit::kSigmaY), r.delta_p, r.delta_p_err, r.r_p);
    const AxisTriple u = verdict_uncertainty(r);
    auto row = [&](const char* name, double p, double e, double f, double fe, bool v) {
        add("%-22s = (%.4f +- %.4f) hbar^2 %s hbar^2/4   violation factor %.2f +- %.2f\n", name, p, e,
            v ? "<" : "not <", f, fe);
    };
    row("d2x d2px", r.products.x, u.x, r.factors.x, r.factors_err.x, r.verdict.x);
    row("d2y d2py", r.products.y, u.y, r.factors.y, r.factors_err.y, r.verdict.y);
    row("d2r d2p", r.products.iso, u.iso, r.factors.iso, r.factors_err.iso, r.verdict.iso);
    if (r.bootstrap)
        add("bootstrap: %d resamples (%d failed), factor spread x %.2f y %.2f iso %.2f\n", r.bootstrap->n_resamples,
            r.bootstrap->n_failed, r.bootstrap->factors.x, r.bootstrap->factors.y, r.bootstrap->factors.iso);
    add("EPR violation (isotropic): %s\n", r.verdict.iso ? "yes" : "no");
    return out;
}

} // namespace epr
