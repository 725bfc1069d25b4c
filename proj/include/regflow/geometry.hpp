#ifndef REGFLOW_GEOMETRY_HPP
#define REGFLOW_GEOMETRY_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regflow/core.hpp"

namespace regflow {

using Loop = std::vector<Vec2>;

/// A boundary segment of a polygon. The normal points out of the domain
/// (into the hole for hole facets).
struct Facet {
  std::size_t loop_id = 0;  // 0 = outer loop, 1.. = holes
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
  Vec2 normal = Vec2::Zero();

  double length() const { return (b - a).norm(); }
  Vec2 tangent() const { return (b - a) / length(); }
  Vec2 point(double s) const { return a + s * (b - a); }
};

struct Rect {
  double x0, x1, y0, y1;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

enum class PointClass { interior, boundary, exterior };

inline const char* to_string(PointClass c) {
  switch (c) {
    case PointClass::interior: return "interior";
    case PointClass::boundary: return "boundary";
    case PointClass::exterior: return "exterior";
  }
  return "?";
}

namespace detail {

inline double signed_area(const Loop& loop) {
  double s = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2& p = loop[i];
    const Vec2& q = loop[(i + 1) % loop.size()];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * s;
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double point_segment_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.squaredNorm();
  double s = len2 > 0.0 ? (x - a).dot(d) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return (x - (a + s * d)).norm();
}

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  const auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return std::min(a.x(), b.x()) <= c.x() && c.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= c.y() && c.y() <= std::max(a.y(), b.y());
  };
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

// Crossing-number test against a single closed loop (boundary excluded).
inline bool inside_loop(const Loop& loop, const Vec2& x) {
  bool inside = false;
  for (std::size_t i = 0, j = loop.size() - 1; i < loop.size(); j = i++) {
    const Vec2& a = loop[i];
    const Vec2& b = loop[j];
    if ((a.y() > x.y()) != (b.y() > x.y())) {
      const double xc = a.x() + (x.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (x.x() < xc) inside = !inside;
    }
  }
  return inside;
}

inline void check_simple(const Loop& loop, const std::string& name) {
  if (loop.size() < 3) throw ValidationError(name + ": a loop needs at least 3 vertices");
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((loop[i] - loop[j]).norm() == 0.0) throw ValidationError(name + ": repeated vertex");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(loop[i], loop[(i + 1) % n], loop[j], loop[(j + 1) % n]))
        throw ValidationError(name + ": loop is self-intersecting");
    }
  }
}

}  // namespace detail

/// Bounded polygon with an outer counter-clockwise loop and optional clockwise
/// hole loops. Immutable after construction.
class PolygonalDomain {
 public:
  explicit PolygonalDomain(Loop outer, std::vector<Loop> holes = {})
      : outer_(std::move(outer)), holes_(std::move(holes)) {
    detail::check_simple(outer_, "outer loop");
    if (detail::signed_area(outer_) <= 0.0)
      throw ValidationError("outer loop must be counter-clockwise");
    for (std::size_t h = 0; h < holes_.size(); ++h) {
      const std::string name = "hole loop " + std::to_string(h);
      detail::check_simple(holes_[h], name);
      if (detail::signed_area(holes_[h]) >= 0.0) throw ValidationError(name + " must be clockwise");
    }
    build_facets();
    for (std::size_t h = 0; h < holes_.size(); ++h) {
      for (const Vec2& p : holes_[h]) {
        if (!detail::inside_loop(outer_, p) || distance_to_loop(0, p) == 0.0)
          throw ValidationError("hole loop " + std::to_string(h) + " is not strictly inside the outer loop");
      }
      for (std::size_t g = h + 1; g < holes_.size(); ++g) {
        if (loops_touch(h + 1, g + 1) || detail::inside_loop(holes_[g], holes_[h][0]) ||
            detail::inside_loop(holes_[h], holes_[g][0]))
          throw ValidationError("hole loops " + std::to_string(h) + " and " + std::to_string(g) +
                                " overlap");
      }
    }
  }

  static PolygonalDomain rectangle(double x0, double x1, double y0, double y1) {
    if (!(x1 > x0 && y1 > y0)) throw ValidationError("degenerate rectangle");
    return PolygonalDomain({Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)});
  }

  static PolygonalDomain unit_square() { return rectangle(0.0, 1.0, 0.0, 1.0); }

  const Loop& outer_loop() const { return outer_; }
  const std::vector<Loop>& hole_loops() const { return holes_; }
  const std::vector<Facet>& facets() const { return facets_; }
  std::size_t num_facets() const { return facets_.size(); }

  const Facet& facet(std::size_t id) const {
    if (id >= facets_.size())
      throw IndexError("facet id " + std::to_string(id) + " out of range (" +
                       std::to_string(facets_.size()) + " facets)");
    return facets_[id];
  }

  double area() const {
    double a = detail::signed_area(outer_);
    for (const Loop& h : holes_) a += detail::signed_area(h);
    return a;
  }

  Rect bounding_box() const {
    Rect r{outer_[0].x(), outer_[0].x(), outer_[0].y(), outer_[0].y()};
    for (const Vec2& p : outer_) {
      r.x0 = std::min(r.x0, p.x()); r.x1 = std::max(r.x1, p.x());
      r.y0 = std::min(r.y0, p.y()); r.y1 = std::max(r.y1, p.y());
    }
    return r;
  }

  double diameter() const {
    double d = 0.0;
    for (const Vec2& p : outer_)
      for (const Vec2& q : outer_) d = std::max(d, (p - q).norm());
    return d;
  }

  /// The rectangle this domain represents, if it is an axis-aligned one.
  std::optional<Rect> as_axis_aligned_rectangle() const {
    if (!holes_.empty() || outer_.size() != 4) return std::nullopt;
    const Rect r = bounding_box();
    for (const Vec2& p : outer_) {
      const bool cx = p.x() == r.x0 || p.x() == r.x1;
      const bool cy = p.y() == r.y0 || p.y() == r.y1;
      if (!cx || !cy) return std::nullopt;
    }
    return r;
  }

  double distance_to_boundary(const Vec2& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Facet& f : facets_) d = std::min(d, detail::point_segment_distance(x, f.a, f.b));
    return d;
  }

  /// Index of the nearest facet to x.
  std::size_t nearest_facet(const Vec2& x) const {
    std::size_t best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < facets_.size(); ++i) {
      const double di = detail::point_segment_distance(x, facets_[i].a, facets_[i].b);
      if (di < d) { d = di; best = i; }
    }
    return best;
  }

  bool strictly_inside(const Vec2& x) const {
    if (!detail::inside_loop(outer_, x)) return false;
    for (const Loop& h : holes_)
      if (detail::inside_loop(h, x)) return false;
    return true;
  }

 private:
  void build_facets() {
    const auto add_loop = [this](const Loop& loop, std::size_t id) {
      for (std::size_t i = 0; i < loop.size(); ++i) {
        Facet f;
        f.loop_id = id;
        f.a = loop[i];
        f.b = loop[(i + 1) % loop.size()];
        f.normal = rotate_cw(f.b - f.a).normalized();
        facets_.push_back(f);
      }
    };
    add_loop(outer_, 0);
    for (std::size_t h = 0; h < holes_.size(); ++h) add_loop(holes_[h], h + 1);
  }

  double distance_to_loop(std::size_t id, const Vec2& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Facet& f : facets_)
      if (f.loop_id == id) d = std::min(d, detail::point_segment_distance(x, f.a, f.b));
    return d;
  }

  bool loops_touch(std::size_t i, std::size_t j) const {
    for (const Facet& f : facets_) {
      if (f.loop_id != i) continue;
      for (const Facet& g : facets_)
        if (g.loop_id == j && detail::segments_intersect(f.a, f.b, g.a, g.b)) return true;
    }
    return false;
  }

  Loop outer_;
  std::vector<Loop> holes_;
  std::vector<Facet> facets_;
};

/// Outward unit normal of a facet; rotating the facet direction by -90 degrees.
inline Vec2 outward_normal(const PolygonalDomain& domain, std::size_t facet_id) {
  return domain.facet(facet_id).normal;
}

/// Boundary if within tol of some facet, otherwise a crossing-parity test.
inline PointClass classify_point(const PolygonalDomain& domain, const Vec2& x, double tol) {
  if (tol < 0.0) throw ValidationError("classify_point: tol must be non-negative");
  if (domain.distance_to_boundary(x) <= tol) return PointClass::boundary;
  return domain.strictly_inside(x) ? PointClass::interior : PointClass::exterior;
}

/// Conforming triangulation of a polygon. Boundary nodes carry the ids of the
/// facets they lie on (corners carry two).
struct Triangulation {
  std::vector<Vec2> nodes;
  std::vector<std::array<std::size_t, 3>> triangles;
  std::vector<std::set<std::size_t>> boundary_facets;  // per node

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * detail::cross(nodes[tri[1]] - nodes[tri[0]], nodes[tri[2]] - nodes[tri[0]]);
  }

  double area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
    return a;
  }

  /// Checks orientation, index ranges and the area match against a domain.
  void validate(const PolygonalDomain* domain = nullptr) const {
    if (boundary_facets.size() != nodes.size())
      throw ValidationError("triangulation: boundary flags do not match node count");
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (std::size_t v : triangles[t])
        if (v >= nodes.size()) throw ValidationError("triangulation: node index out of range");
      if (!(triangle_area(t) > 0.0))
        throw ValidationError("triangulation: triangle " + std::to_string(t) + " is not positively oriented");
    }
    if (domain) {
      const double a = domain->area();
      if (std::abs(area() - a) > 1e-12 * a)
        throw ValidationError("triangulation area does not match the polygon area");
    }
  }
};

/// Structured triangulation of an axis-aligned rectangle: nx*ny cells, each
/// split along its diagonal. Facet ids follow the CCW loop (bottom, right, top, left).
inline Triangulation structured_triangulation(const Rect& r, std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw ValidationError("structured_triangulation: nx, ny must be positive");
  Triangulation tri;
  const auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j <= ny; ++j) {
    for (std::size_t i = 0; i <= nx; ++i) {
      const double x = i == nx ? r.x1 : r.x0 + r.width() * static_cast<double>(i) / static_cast<double>(nx);
      const double y = j == ny ? r.y1 : r.y0 + r.height() * static_cast<double>(j) / static_cast<double>(ny);
      tri.nodes.emplace_back(x, y);
      std::set<std::size_t> f;
      if (j == 0) f.insert(0);
      if (i == nx) f.insert(1);
      if (j == ny) f.insert(2);
      if (i == 0) f.insert(3);
      tri.boundary_facets.push_back(std::move(f));
    }
  }
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      tri.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tri.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return tri;
}

/// Fixed bijection between a polytope and a curved domain. All three callables
/// are analytic and supplied by the user.
struct CurvedMap {
  std::function<Vec2(const Vec2&)> forward;
  std::function<Vec2(const Vec2&)> inverse;
  std::function<Mat2(const Vec2&)> forward_gradient;
  std::string tag = "custom";
};

/// x -> B x + c.
inline CurvedMap affine_curved_map(const Mat2& b, const Vec2& c) {
  if (std::abs(det2(b)) < 1e-14) throw ValidationError("affine map matrix is singular");
  const Mat2 binv = b.inverse();
  return {[b, c](const Vec2& x) -> Vec2 { return b * x + c; },
          [binv, c](const Vec2& x) -> Vec2 { return binv * (x - c); },
          [b](const Vec2&) -> Mat2 { return b; }, "affine"};
}

/// Maps the rectangle r onto a domain whose top edge bulges upward:
/// y -> y0 + (y - y0) (1 + delta sin(pi s)), s = (x - x0)/(x1 - x0).
inline CurvedMap sine_bulge_map(const Rect& r, double delta) {
  if (!(delta > -1.0)) throw ValidationError("sine_bulge: delta must exceed -1");
  const auto g = [r, delta](double x) { return 1.0 + delta * std::sin(M_PI * (x - r.x0) / r.width()); };
  const auto dg = [r, delta](double x) {
    return delta * M_PI / r.width() * std::cos(M_PI * (x - r.x0) / r.width());
  };
  return {[r, g](const Vec2& p) -> Vec2 { return Vec2(p.x(), r.y0 + (p.y() - r.y0) * g(p.x())); },
          [r, g](const Vec2& p) -> Vec2 { return Vec2(p.x(), r.y0 + (p.y() - r.y0) / g(p.x())); },
          [r, g, dg](const Vec2& p) -> Mat2 {
            Mat2 m;
            m << 1.0, 0.0, (p.y() - r.y0) * dg(p.x()), g(p.x());
            return m;
          },
          "sine_bulge"};
}

}  // namespace regflow

#endif  // REGFLOW_GEOMETRY_HPP
