#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "epr/error.hpp"
#include "epr/units.hpp"

namespace epr {

/*!
 * Imaging geometry shared by the near-field and far-field configurations.
 *
 * Near-field pixels map to object-plane position at unit magnification; far-field
 * pixels map to transverse wavevector through the Fourier lens:
 *   k = 2*pi * pixel_pitch / (focal_length * wavelength)   [per pixel]
 * Momentum is kept in hbar*m^-1, so variance products come out in hbar^2.
 */
struct OpticalGeometry {
    double pixel_pitch = 16e-6;  // m
    double focal_length = 37e-3; // m
    double wavelength = 710e-9;  // m
    int sensor_width = 512;
    int sensor_height = 512;

    void validate() const {
        auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!positive(pixel_pitch)) throw ConfigError("geometry.pixel_pitch must be > 0");
        if (!positive(focal_length)) throw ConfigError("geometry.focal_length must be > 0");
        if (!positive(wavelength)) throw ConfigError("geometry.wavelength must be > 0");
        if (sensor_width < 16 || sensor_height < 16)
            throw ConfigError("geometry.sensor_width/sensor_height must be >= 16");
        if (!positive(momentum_per_ff_pixel()))
            throw ConfigError("geometry: momentum per far-field pixel is not finite");
    }

    //! hbar*m^-1 per far-field pixel.
    [[nodiscard]] double momentum_per_ff_pixel() const {
        return 2.0 * std::numbers::pi * pixel_pitch / (focal_length * wavelength);
    }

    //! Dimensionless position*momentum per (near-field pixel * far-field pixel).
    [[nodiscard]] double product_unit() const { return pixel_pitch * momentum_per_ff_pixel(); }
};

inline Meters nf_pixels_to_meters(NfPixels d, const OpticalGeometry& g) {
    return Meters{d.value() * g.pixel_pitch};
}

inline Momentum ff_pixels_to_momentum(FfPixels d, const OpticalGeometry& g) {
    return Momentum{d.value() * g.momentum_per_ff_pixel()};
}

//! (dx * dp)^2 with dx in near-field pixels and dp in far-field pixels, in hbar^2.
inline HbarSq heisenberg_product_1d(NfPixels dx, FfPixels dp, const OpticalGeometry& g) {
    const double s = dx.value() * dp.value() * g.product_unit();
    return HbarSq{s * s};
}

//! The single-particle bound hbar^2/4.
inline constexpr HbarSq heisenberg_bound{0.25};

} // namespace epr
