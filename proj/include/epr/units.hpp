#pragma once

#include <compare>

namespace epr {

/*!
 * Thin strong type over double. Each tag is a distinct unit; values only mix
 * with values of the same unit, and `value()` is the explicit escape hatch.
 */
template <typename Tag>
class Quantity {
public:
    constexpr Quantity() = default;
    constexpr explicit Quantity(double v) : v_(v) {}

    [[nodiscard]] constexpr double value() const { return v_; }

    constexpr Quantity& operator+=(Quantity o) { v_ += o.v_; return *this; }
    constexpr Quantity& operator-=(Quantity o) { v_ -= o.v_; return *this; }
    constexpr Quantity& operator*=(double s) { v_ *= s; return *this; }

    friend constexpr Quantity operator+(Quantity a, Quantity b) { return Quantity{a.v_ + b.v_}; }
    friend constexpr Quantity operator-(Quantity a, Quantity b) { return Quantity{a.v_ - b.v_}; }
    friend constexpr Quantity operator*(Quantity a, double s) { return Quantity{a.v_ * s}; }
    friend constexpr Quantity operator*(double s, Quantity a) { return Quantity{a.v_ * s}; }
    friend constexpr Quantity operator/(Quantity a, double s) { return Quantity{a.v_ / s}; }
    friend constexpr double operator/(Quantity a, Quantity b) { return a.v_ / b.v_; }
    friend constexpr auto operator<=>(Quantity, Quantity) = default;

private:
    double v_ = 0.0;
};

namespace unit_tags {
struct NearFieldPixels;
struct FarFieldPixels;
struct Meters;
struct Momentum; // hbar / m
struct HbarSquared;
} // namespace unit_tags

using NfPixels = Quantity<unit_tags::NearFieldPixels>;
using FfPixels = Quantity<unit_tags::FarFieldPixels>;
using Meters = Quantity<unit_tags::Meters>;
//! Transverse momentum in units of hbar per meter (hbar itself is never a number here).
using Momentum = Quantity<unit_tags::Momentum>;
//! Position-momentum variance product in units of hbar^2.
using HbarSq = Quantity<unit_tags::HbarSquared>;

} // namespace epr
