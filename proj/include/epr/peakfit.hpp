#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "epr/correlator.hpp"
#include "epr/error.hpp"
#include "epr/types.hpp"

namespace epr {

/*!
 * Axis-aligned 2D Gaussian on a constant baseline,
 *   F(dx, dy) = A exp(-(dx-x0)^2 / 2 sx^2 - (dy-y0)^2 / 2 sy^2) + b,
 * fitted to the unmasked displacements of a window. Parameter order for the
 * covariance is (A, sx, sy, x0, y0, b).
 */
struct GaussFit {
    enum Param : int { kAmplitude = 0, kSigmaX, kSigmaY, kCenterX, kCenterY, kBaseline, kNumParams };

    double amplitude = 0.0;
    Vec2 sigma;
    Vec2 center;
    double baseline = 0.0;
    std::array<double, kNumParams * kNumParams> covariance{};
    //! Displacement window: [x0, x0+w) x [y0, y0+h) in displacement pixels.
    Rect window;
    bool converged = false;
    double residual_rms = 0.0;
    int iterations = 0;
    int n_points = 0;
    //! |gradient| at the solution over |gradient| at the initial point.
    double gradient_ratio = 0.0;

    [[nodiscard]] double cov(int i, int j) const { return covariance[static_cast<std::size_t>(i * kNumParams + j)]; }
    [[nodiscard]] double sd(int i) const { return std::sqrt(std::max(0.0, cov(i, i))); }
    [[nodiscard]] double significance() const {
        const double s = sd(kAmplitude);
        return s > 0.0 ? amplitude / s : std::numeric_limits<double>::infinity();
    }
};

struct FitOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;
    double gradient_tolerance = 1e-8;
    //! Peaks whose amplitude is below this many standard errors are reported as "no peak".
    double min_significance = 5.0;
};

inline constexpr int kMinFitPoints = 25;

namespace detail {

struct FitPoint {
    double x;
    double y;
    double v;
};

inline double gauss_model(const std::array<double, 6>& p, double x, double y, std::array<double, 6>* grad) {
    const double ux = x - p[3], uy = y - p[4];
    const double sx2 = p[1] * p[1], sy2 = p[2] * p[2];
    const double e = std::exp(-0.5 * (ux * ux / sx2 + uy * uy / sy2));
    if (grad) {
        const double ae = p[0] * e;
        (*grad)[0] = e;
        (*grad)[1] = ae * ux * ux / (sx2 * p[1]);
        (*grad)[2] = ae * uy * uy / (sy2 * p[2]);
        (*grad)[3] = ae * ux / sx2;
        (*grad)[4] = ae * uy / sy2;
        (*grad)[5] = 1.0;
    }
    return p[0] * e + p[5];
}

} // namespace detail

//! Analytic model value and gradient, exposed for gradient checks.
inline double gaussian_model(const std::array<double, 6>& params, double dx, double dy,
                             std::array<double, 6>* gradient = nullptr) {
    return detail::gauss_model(params, dx, dy, gradient);
}

/*!
 * Displacement of the largest 5x5 box average of unmasked values (circular). Averaging
 * keeps a single noisy displacement from outranking a peak a few pixels wide.
 */
inline std::pair<int, int> smoothed_argmax(const CorrMap& map, int radius = 2) {
    double best = -std::numeric_limits<double>::infinity();
    int px = 0, py = 0;
    for (int dy = map.dy_min(); dy <= map.dy_max(); ++dy)
        for (int dx = map.dx_min(); dx <= map.dx_max(); ++dx) {
            if (map.masked(dx, dy)) continue;
            double sum = 0.0;
            int n = 0;
            for (int ky = -radius; ky <= radius; ++ky)
                for (int kx = -radius; kx <= radius; ++kx)
                    if (!map.masked(dx + kx, dy + ky)) {
                        sum += map.at(dx + kx, dy + ky);
                        ++n;
                    }
            if (n > 0 && sum / n > best) {
                best = sum / n;
                px = dx;
                py = dy;
            }
        }
    return {px, py};
}

//! Window of (2 half + 1)^2 displacements centered on smoothed_argmax, clipped to the map.
inline Rect default_window(const CorrMap& map, int half = 7) {
    const auto [px, py] = smoothed_argmax(map);
    const int x0 = std::max(map.dx_min(), px - half), x1 = std::min(map.dx_max(), px + half);
    const int y0 = std::max(map.dy_min(), py - half), y1 = std::min(map.dy_max(), py + half);
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

/*!
 * Damped Gauss-Newton (Levenberg-Marquardt) least squares over the unmasked points
 * of `window`. Masked points are excluded, never imputed.
 *
 * Initialization: b = window median, (x0, y0) = argmax, A = max - b, widths from the
 * second moments of max(v - b, 0), clamped to [0.5, window/4]. Stops when the relative
 * parameter step drops below step_tolerance (converged if the gradient has also
 * fallen by gradient_tolerance) or after max_iterations. The covariance is the
 * residual variance times the inverse normal matrix.
 *
 * Throws FitError for windows with fewer than 25 usable points and NoPeakError when
 * the solution has A <= 0 or an insignificant amplitude.
 */
inline GaussFit fit_gaussian(const CorrMap& map, const Rect& window, const FitOptions& opt = {}) {
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    using Mat6 = Eigen::Matrix<double, 6, 6>;

    std::vector<detail::FitPoint> pts;
    for (int dy = window.y0; dy < window.y0 + window.h; ++dy)
        for (int dx = window.x0; dx < window.x0 + window.w; ++dx) {
            if (dx < map.dx_min() || dx > map.dx_max() || dy < map.dy_min() || dy > map.dy_max()) continue;
            if (map.masked(dx, dy)) continue;
            const double v = map.at(dx, dy);
            if (std::isfinite(v)) pts.push_back({static_cast<double>(dx), static_cast<double>(dy), v});
        }
    if (static_cast<int>(pts.size()) < kMinFitPoints)
        throw FitError("fit_gaussian: window has " + std::to_string(pts.size()) + " usable points, need " +
                       std::to_string(kMinFitPoints));

    std::vector<double> vals;
    vals.reserve(pts.size());
    for (const auto& q : pts) vals.push_back(q.v);
    std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2), vals.end());
    double median = vals[vals.size() / 2];
    if (vals.size() % 2 == 0) {
        const double lower = *std::max_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2));
        median = 0.5 * (median + lower);
    }
    const auto peak = std::max_element(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.v < b.v; });
    if (!(peak->v - median > 0.0)) throw NoPeakError("fit_gaussian: no peak above the window median");

    std::array<double, 6> p{peak->v - median, 1.0, 1.0, peak->x, peak->y, median};
    {
        double wsum = 0.0, mx = 0.0, my = 0.0;
        for (const auto& q : pts) {
            const double wgt = std::max(0.0, q.v - median);
            wsum += wgt;
            mx += wgt * (q.x - p[3]) * (q.x - p[3]);
            my += wgt * (q.y - p[4]) * (q.y - p[4]);
        }
        p[1] = std::clamp(std::sqrt(mx / wsum), 0.5, std::max(0.5, window.w / 4.0));
        p[2] = std::clamp(std::sqrt(my / wsum), 0.5, std::max(0.5, window.h / 4.0));
    }

    auto evaluate = [&](const std::array<double, 6>& par, Mat6* jtj, Vec6* jtr) {
        double cost = 0.0;
        if (jtj) jtj->setZero();
        if (jtr) jtr->setZero();
        std::array<double, 6> g{};
        for (const auto& q : pts) {
            const double r = detail::gauss_model(par, q.x, q.y, jtj ? &g : nullptr) - q.v;
            cost += r * r;
            if (jtj) {
                const Eigen::Map<const Vec6> gv(g.data());
                jtj->noalias() += gv * gv.transpose();
                *jtr += r * gv;
            }
        }
        return 0.5 * cost;
    };

    Mat6 jtj;
    Vec6 jtr;
    double cost = evaluate(p, &jtj, &jtr);
    const double g0 = std::max(jtr.norm(), std::numeric_limits<double>::min());
    double lambda = 1e-3;
    GaussFit fit;
    bool step_small = false;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        Mat6 a = jtj;
        for (int i = 0; i < 6; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-300);
        const Vec6 step = a.ldlt().solve(-jtr);
        std::array<double, 6> trial = p;
        for (int i = 0; i < 6; ++i) trial[static_cast<std::size_t>(i)] += step(i);
        const bool valid = step.allFinite() && trial[1] > 1e-3 && trial[2] > 1e-3;
        const double trial_cost = valid ? evaluate(trial, nullptr, nullptr) : std::numeric_limits<double>::infinity();
        if (trial_cost <= cost) {
            // centers are compared against one pixel, the baseline against the amplitude
            const std::array<double, 6> floor{1e-300, 1e-300, 1e-300, 1.0, 1.0, std::fabs(p[0]) + 1e-300};
            double rel = 0.0;
            for (std::size_t i = 0; i < 6; ++i)
                rel = std::max(rel, std::fabs(step(static_cast<int>(i))) / std::max(std::fabs(p[i]), floor[i]));
            p = trial;
            cost = evaluate(p, &jtj, &jtr);
            lambda = std::max(lambda * 0.1, 1e-12);
            if (rel < opt.step_tolerance) {
                step_small = true;
                if (jtr.norm() < opt.gradient_tolerance * g0) {
                    ++it;
                    break;
                }
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e16) {
                step_small = true;
                break;
            }
        }
    }

    fit.amplitude = p[0];
    fit.sigma = {p[1], p[2]};
    fit.center = {p[3], p[4]};
    fit.baseline = p[5];
    fit.window = window;
    fit.iterations = it;
    fit.n_points = static_cast<int>(pts.size());
    fit.gradient_ratio = jtr.norm() / g0;
    fit.converged = step_small && fit.gradient_ratio < opt.gradient_tolerance;
    fit.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(pts.size()));

    if (!(fit.amplitude > 0.0))
        throw NoPeakError("fit_gaussian: fitted amplitude " + std::to_string(fit.amplitude) + " is not positive");

    const double dof = static_cast<double>(pts.size()) - 6.0;
    const double s2 = 2.0 * cost / dof;
    const Mat6 inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) fit.covariance[static_cast<std::size_t>(i * 6 + j)] = s2 * inv(i, j);

    if (fit.significance() < opt.min_significance)
        throw NoPeakError("fit_gaussian: peak amplitude is only " + std::to_string(fit.significance()) +
                          " standard errors above baseline");
    return fit;
}

//! Fits in default_window(map, half).
inline GaussFit fit_gaussian(const CorrMap& map, int half_window = 7, const FitOptions& opt = {}) {
    return fit_gaussian(map, default_window(map, half_window), opt);
}

//! Integral of the fitted peak without baseline: 2 pi A sx sy.
inline double integrate_R(const GaussFit& fit) {
    if (!fit.converged) throw FitError("integrate_R: fit did not converge");
    if (fit.amplitude < 0.0 || !(fit.sigma.x > 0.0) || !(fit.sigma.y > 0.0))
        throw FitError("integrate_R: invalid fit parameters");
    return 2.0 * std::numbers::pi * fit.amplitude * fit.sigma.x * fit.sigma.y;
}

//! First-order standard error of integrate_R from the fit covariance.
inline double integrate_R_error(const GaussFit& fit) {
    const double k = 2.0 * std::numbers::pi;
    const std::array<double, 3> g{k * fit.sigma.x * fit.sigma.y, k * fit.amplitude * fit.sigma.y,
                                  k * fit.amplitude * fit.sigma.x};
    double var = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) var += g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)] * fit.cov(i, j);
    return std::sqrt(std::max(0.0, var));
}

//! Isotropic width sqrt((sx^2 + sy^2) / 2).
inline double combine_axes(double sx, double sy) { return std::sqrt(0.5 * (sx * sx + sy * sy)); }

} // namespace epr
