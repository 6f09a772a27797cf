#pragma once

#include <cmath>

namespace rasterfix {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double norm_sq() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm_sq()); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

/// Row-major 2x2 matrix.
struct Mat2 {
  double a00 = 1.0, a01 = 0.0;
  double a10 = 0.0, a11 = 1.0;

  static Mat2 rotation(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c, -s, s, c};
  }

  constexpr Vec2 operator*(Vec2 v) const {
    return {a00 * v.x + a01 * v.y, a10 * v.x + a11 * v.y};
  }
  constexpr Mat2 transposed() const { return {a00, a10, a01, a11}; }
  constexpr double det() const { return a00 * a11 - a01 * a10; }
};

}  // namespace rasterfix
