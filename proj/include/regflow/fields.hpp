#ifndef REGFLOW_FIELDS_HPP
#define REGFLOW_FIELDS_HPP

#include <cmath>
#include <functional>
#include <string>

#include "regflow/core.hpp"

namespace regflow {

/// Scalar field with its gradient, defined on a hold-all region.
struct ScalarField {
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;
  std::string tag = "custom";
};

inline ScalarField constant_field(double c) {
  return {[c](const Vec2&) { return c; }, [](const Vec2&) -> Vec2 { return Vec2::Zero(); }, "constant"};
}

/// amplitude * exp(-|x - center|^2 / (2 width^2))
inline ScalarField gaussian_bump(const Vec2& center, double width, double amplitude = 1.0) {
  if (!(width > 0.0)) throw ValidationError("gaussian_bump: width must be positive");
  const double s2 = width * width;
  return {[=](const Vec2& x) { return amplitude * std::exp(-(x - center).squaredNorm() / (2.0 * s2)); },
          [=](const Vec2& x) -> Vec2 {
            const double u = amplitude * std::exp(-(x - center).squaredNorm() / (2.0 * s2));
            return -u * (x - center) / s2;
          },
          "gaussian_bump"};
}

/// Gaussian ridge along the line through `point` with unit normal `normal`:
/// amplitude * exp(-d^2 / (2 width^2)), d = (x - point) . normal.
inline ScalarField gaussian_ridge(const Vec2& point, const Vec2& normal, double width, double amplitude = 1.0) {
  if (!(width > 0.0)) throw ValidationError("gaussian_ridge: width must be positive");
  const Vec2 n = normal.normalized();
  const double s2 = width * width;
  return {[=](const Vec2& x) {
            const double d = (x - point).dot(n);
            return amplitude * std::exp(-d * d / (2.0 * s2));
          },
          [=](const Vec2& x) -> Vec2 {
            const double d = (x - point).dot(n);
            return -amplitude * std::exp(-d * d / (2.0 * s2)) * d / s2 * n;
          },
          "gaussian_ridge"};
}

/// Smoothed step across the line through `point` with unit normal `normal`:
/// tanh(d / width).
inline ScalarField smoothed_step(const Vec2& point, const Vec2& normal, double width) {
  if (!(width > 0.0)) throw ValidationError("smoothed_step: width must be positive");
  const Vec2 n = normal.normalized();
  return {[=](const Vec2& x) { return std::tanh((x - point).dot(n) / width); },
          [=](const Vec2& x) -> Vec2 {
            const double th = std::tanh((x - point).dot(n) / width);
            return (1.0 - th * th) / width * n;
          },
          "smoothed_step"};
}

/// Monomial x1^i x2^j.
inline ScalarField monomial_field(int i, int j) {
  return {[=](const Vec2& x) { return std::pow(x.x(), i) * std::pow(x.y(), j); },
          [=](const Vec2& x) -> Vec2 {
            const double gx = i == 0 ? 0.0 : i * std::pow(x.x(), i - 1) * std::pow(x.y(), j);
            const double gy = j == 0 ? 0.0 : j * std::pow(x.x(), i) * std::pow(x.y(), j - 1);
            return Vec2(gx, gy);
          },
          "monomial"};
}

}  // namespace regflow

#endif  // REGFLOW_FIELDS_HPP
