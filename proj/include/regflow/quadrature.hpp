#ifndef REGFLOW_QUADRATURE_HPP
#define REGFLOW_QUADRATURE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "regflow/core.hpp"
#include "regflow/geometry.hpp"

namespace regflow {

struct QuadPoint {
  Vec2 point;
  double weight;
};

using QuadratureRule = std::vector<QuadPoint>;

/// Reference-triangle rule in barycentric form; weights sum to one.
struct BarycentricRule {
  std::vector<std::array<double, 3>> lambda;
  std::vector<double> weight;
};

namespace detail {

inline void add_orbit_111(BarycentricRule& r, double w) {
  r.lambda.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r.weight.push_back(w);
}

inline void add_orbit_21(BarycentricRule& r, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  r.lambda.push_back({a, a, b});
  r.lambda.push_back({a, b, a});
  r.lambda.push_back({b, a, a});
  for (int i = 0; i < 3; ++i) r.weight.push_back(w);
}

// Duffy-collapsed Gauss-Legendre product rule, exact to any requested degree.
inline BarycentricRule collapsed_gauss_rule(int degree) {
  const int n = (degree + 3) / 2;
  const auto g = gauss_legendre_01(n);
  BarycentricRule r;
  for (const auto& [u, wu] : g) {
    for (const auto& [v, wv] : g) {
      const double x = u;
      const double y = v * (1.0 - u);
      r.lambda.push_back({1.0 - x - y, x, y});
      r.weight.push_back(2.0 * wu * wv * (1.0 - u));
    }
  }
  return r;
}

}  // namespace detail

/// Symmetric triangle rules for orders 1..5: centroid, 3-point interior,
/// the 6-point degree-4 rule (orders 3 and 4) and the 7-point Radon rule.
inline BarycentricRule symmetric_triangle_rule(int order) {
  BarycentricRule r;
  switch (order) {
    case 1:
      detail::add_orbit_111(r, 1.0);
      break;
    case 2:
      detail::add_orbit_21(r, 1.0 / 6.0, 1.0 / 3.0);
      break;
    case 3:
    case 4:
      detail::add_orbit_21(r, 0.44594849091596488632, 0.22338158967801146570);
      detail::add_orbit_21(r, 0.091576213509770743460, 0.10995174365532186764);
      break;
    case 5: {
      const double s15 = std::sqrt(15.0);
      detail::add_orbit_111(r, 9.0 / 40.0);
      detail::add_orbit_21(r, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
      detail::add_orbit_21(r, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
      break;
    }
    default:
      throw UnsupportedError("quadrature order " + std::to_string(order) + " unsupported (expected 1..5)");
  }
  return r;
}

/// Rule exact to the given degree: the symmetric rules up to 5, collapsed
/// Gauss products beyond.
inline BarycentricRule triangle_rule_exact_to(int degree) {
  if (degree < 1) degree = 1;
  return degree <= 5 ? symmetric_triangle_rule(degree) : detail::collapsed_gauss_rule(degree);
}

inline QuadratureRule map_rule(const Triangulation& tri, const BarycentricRule& ref) {
  QuadratureRule out;
  out.reserve(tri.triangles.size() * ref.weight.size());
  for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
    const auto& v = tri.triangles[t];
    const double area = tri.triangle_area(t);
    for (std::size_t q = 0; q < ref.weight.size(); ++q) {
      const auto& l = ref.lambda[q];
      out.push_back({l[0] * tri.nodes[v[0]] + l[1] * tri.nodes[v[1]] + l[2] * tri.nodes[v[2]],
                     ref.weight[q] * area});
    }
  }
  return out;
}

/// Quadrature over a triangulation with a symmetric rule of order 1..5.
inline QuadratureRule quadrature(const Triangulation& tri, int order) {
  return map_rule(tri, symmetric_triangle_rule(order));
}

/// Quadrature of any exactness degree (collapsed Gauss above 5).
inline QuadratureRule quadrature_exact_to(const Triangulation& tri, int degree) {
  return map_rule(tri, triangle_rule_exact_to(degree));
}

/// Facet-wise Gauss-Legendre rule along a polygon boundary.
struct BoundaryQuadPoint {
  Vec2 point;
  double weight;
  std::size_t facet_id;
  double s;  // facet parameter in [0, 1]
};

inline std::vector<BoundaryQuadPoint> boundary_quadrature(const PolygonalDomain& domain, int points_per_facet) {
  const auto g = gauss_legendre_01(points_per_facet);
  std::vector<BoundaryQuadPoint> out;
  for (std::size_t f = 0; f < domain.num_facets(); ++f) {
    const Facet& fa = domain.facet(f);
    for (const auto& [s, w] : g) out.push_back({fa.point(s), w * fa.length(), f, s});
  }
  return out;
}

template <typename Fn>
double integrate(const QuadratureRule& rule, Fn&& f) {
  std::vector<double> terms(rule.size());
  for (std::size_t q = 0; q < rule.size(); ++q) terms[q] = rule[q].weight * f(rule[q].point);
  return pairwise_sum(terms);
}

}  // namespace regflow

#endif  // REGFLOW_QUADRATURE_HPP
