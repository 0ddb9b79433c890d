#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "epr/error.hpp"

namespace epr {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

//! Measurement plane: image of the crystal (positions) or Fourier plane (momenta).
enum class Plane : std::uint8_t { NearField = 0, FarField = 1 };

inline std::string_view to_string(Plane p) { return p == Plane::NearField ? "near" : "far"; }

inline Plane plane_from_string(std::string_view s) {
    if (s == "near" || s == "nf" || s == "near_field") return Plane::NearField;
    if (s == "far" || s == "ff" || s == "far_field") return Plane::FarField;
    throw ConfigError("unknown plane '" + std::string(s) + "' (expected near|far)");
}

//! Integer rectangle, half-open: [x0, x0+w) x [y0, y0+h).
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] bool contains(int x, int y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
    [[nodiscard]] bool inside(int width, int height) const {
        return w > 0 && h > 0 && x0 >= 0 && y0 >= 0 && x0 + w <= width && y0 + h <= height;
    }
    [[nodiscard]] bool intersects(const Rect& o) const {
        return x0 < o.x0 + o.w && o.x0 < x0 + w && y0 < o.y0 + o.h && o.y0 < y0 + h;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

} // namespace epr
