#ifndef REGFLOW_COMPOSITIONAL_HPP
#define REGFLOW_COMPOSITIONAL_HPP

#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "regflow/basis.hpp"
#include "regflow/geometry.hpp"
#include "regflow/targets.hpp"
#include "regflow/vectorflow.hpp"

namespace regflow {

/// N_p(xi; a) = xi + sum_i a_i phi_i(xi) on the polytope, optionally
/// conjugated by a curved-domain bijection: N = Psi o N_p o Psi^{-1}.
class DisplacementModel {
 public:
  DisplacementModel(BasisPtr basis, VectorXd coefficients, std::optional<CurvedMap> curved = std::nullopt)
      : basis_(std::move(basis)), a_(std::move(coefficients)), curved_(std::move(curved)) {
    if (!basis_) throw ValidationError("displacement model needs a basis");
    if (basis_->kind() != BasisKind::spatial) throw ValidationError("displacement model needs a spatial basis");
    if (static_cast<std::size_t>(a_.size()) != basis_->size())
      throw SizeError("coefficient vector has " + std::to_string(a_.size()) + " entries, basis has " +
                      std::to_string(basis_->size()));
  }

  const BasisPtr& basis() const { return basis_; }
  const VectorXd& coefficients() const { return a_; }
  std::size_t size() const { return basis_->size(); }
  const PolygonalDomain& polytope() const { return *basis_->domain(); }
  const std::optional<CurvedMap>& curved_map() const { return curved_; }

  DisplacementModel with_coefficients(VectorXd a) const { return DisplacementModel(basis_, std::move(a), curved_); }

  /// Displacement and its gradient on the polytope.
  void displacement(const Vec2& x, Vec2& d, Mat2* grad) const {
    thread_local std::vector<Vec2> vals;
    thread_local std::vector<Mat2> grads;
    basis_->eval_all(x, 0.0, vals, grad ? &grads : nullptr);
    d.setZero();
    if (grad) grad->setZero();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double ai = a_[static_cast<Eigen::Index>(i)];
      d += ai * vals[i];
      if (grad) *grad += ai * grads[i];
    }
  }

  /// I + sum_i a_i grad phi_i at x.
  Mat2 map_gradient(const Vec2& x) const {
    Vec2 d;
    Mat2 g;
    displacement(x, d, &g);
    return Mat2::Identity() + g;
  }

 private:
  BasisPtr basis_;
  VectorXd a_;
  std::optional<CurvedMap> curved_;
};

namespace detail {

inline void require_closure(const PolygonalDomain& dom, const Vec2& x, std::size_t i, double tol = 1e-12) {
  if (classify_point(dom, x, tol) == PointClass::exterior)
    throw DomainError("point " + std::to_string(i) + " lies outside the polytope closure");
}

}  // namespace detail

/// xi + sum_i a_i phi_i(xi) for points in the closure of the polytope.
inline std::vector<Vec2> evaluate_cm(const DisplacementModel& model, const std::vector<Vec2>& points) {
  std::vector<Vec2> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::require_closure(model.polytope(), points[i], i);
    Vec2 d;
    model.displacement(points[i], d, nullptr);
    out[i] = points[i] + d;
  }
  return out;
}

/// Psi(N_p(Psi^{-1}(x))) for points of the curved domain.
inline std::vector<Vec2> evaluate_cm_curved(const DisplacementModel& model, const std::vector<Vec2>& points) {
  if (!model.curved_map()) throw ValidationError("evaluate_cm_curved: model has no curved map");
  const CurvedMap& psi = *model.curved_map();
  std::vector<Vec2> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 xi = psi.inverse(points[i]);
    if (!xi.allFinite()) throw DomainError("curved map inverse failed at point " + std::to_string(i));
    detail::require_closure(model.polytope(), xi, i, 1e-10);
    Vec2 d;
    model.displacement(xi, d, nullptr);
    out[i] = psi.forward(xi + d);
  }
  return out;
}

/// det(I + sum_i a_i grad phi_i) at each point.
inline std::vector<double> jacobian_field(const DisplacementModel& model, const std::vector<Vec2>& points) {
  std::vector<double> j(points.size());
  for (std::size_t q = 0; q < points.size(); ++q) j[q] = det2(model.map_gradient(points[q]));
  return j;
}

/// f_pen(a) = (1/Q) sum_q max(0, eps - J_q(a))^2 and its gradient, using
/// dJ/da_i = tr(adj(I + grad phi_a) grad phi_i) which is defined even where J = 0.
inline ValueAndGradient penalty(const DisplacementModel& model, const std::vector<Vec2>& points,
                                double eps_j = 0.01) {
  if (!(eps_j > 0.0)) throw ValidationError("penalty: threshold must be positive");
  const std::size_t m = model.size();
  ValueAndGradient out;
  out.gradient = VectorXd::Zero(static_cast<Eigen::Index>(m));
  if (points.empty()) return out;
  std::vector<double> terms(points.size(), 0.0);
  std::vector<Vec2> vals;
  std::vector<Mat2> grads;
  const double inv_q = 1.0 / static_cast<double>(points.size());
  for (std::size_t q = 0; q < points.size(); ++q) {
    const Mat2 a = model.map_gradient(points[q]);
    const double gap = eps_j - det2(a);
    if (gap <= 0.0) continue;
    terms[q] = gap * gap;
    const Mat2 adj = adjugate2(a);
    model.basis()->eval_all(points[q], 0.0, vals, &grads);
    for (std::size_t i = 0; i < m; ++i)
      out.gradient[static_cast<Eigen::Index>(i)] -= 2.0 * gap * inv_q * (adj * grads[i]).trace();
  }
  out.value = inv_q * pairwise_sum(terms);
  return out;
}

/// Target value and gradient through the chain rule. Polytope case:
/// dN/da_i = phi_i. Curved case: dN/da_i(x) = grad Psi(N_p(xi')) phi_i(xi'),
/// xi' = Psi^{-1}(x).
inline ValueAndGradient cm_target_gradient(const DisplacementModel& model, const Target& target) {
  const std::vector<Vec2>& pts = target.sample_points();
  const std::vector<Vec2> images = model.curved_map() ? evaluate_cm_curved(model, pts) : evaluate_cm(model, pts);
  ValueAndGradient out;
  out.value = target.value(images);
  const std::vector<Vec2> g = target.dual(images);
  const std::size_t m = model.size();
  MatrixXd per_point = MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(pts.size()));
  std::vector<Vec2> vals;
  for (std::size_t q = 0; q < pts.size(); ++q) {
    Vec2 xi = pts[q];
    Mat2 dpsi = Mat2::Identity();
    if (model.curved_map()) {
      xi = model.curved_map()->inverse(pts[q]);
      Vec2 d;
      model.displacement(xi, d, nullptr);
      dpsi = model.curved_map()->forward_gradient(xi + d);
    }
    model.basis()->eval_all(xi, 0.0, vals, nullptr);
    const Vec2 gq = dpsi.transpose() * g[q];
    for (std::size_t k = 0; k < m; ++k)
      per_point(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q)) = gq.dot(vals[k]);
  }
  out.gradient = VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (Eigen::Index q = 0; q < per_point.cols(); ++q) out.gradient += per_point.col(q);
  return out;
}

enum class Verdict { bijective, violated, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::bijective: return "bijective";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct BijectivityReport {
  Verdict verdict = Verdict::bijective;
  double min_jacobian = std::numeric_limits<double>::infinity();
  Vec2 location = Vec2::Zero();
};

/// Sampled minimum of J over an n x n grid of the polytope closure plus any
/// extra points (typically quadrature nodes). Sampling is not a proof, hence
/// the inconclusive band (0, margin].
inline BijectivityReport bijectivity_check(const DisplacementModel& model, std::size_t grid_density = 101,
                                           const std::vector<Vec2>& extra_points = {}, double margin = 1e-6) {
  std::vector<Vec2> pts = closure_grid(model.polytope(), grid_density);
  pts.insert(pts.end(), extra_points.begin(), extra_points.end());
  BijectivityReport r;
  const std::vector<double> j = jacobian_field(model, pts);
  for (std::size_t q = 0; q < pts.size(); ++q) {
    if (j[q] < r.min_jacobian) {
      r.min_jacobian = j[q];
      r.location = pts[q];
    }
  }
  if (r.min_jacobian > margin)
    r.verdict = Verdict::bijective;
  else if (r.min_jacobian <= 0.0)
    r.verdict = Verdict::violated;
  else
    r.verdict = Verdict::inconclusive;
  return r;
}

/// Signed areas of the images of the cells of an n x n grid over the polytope
/// bounding box (cells leaving the closure are skipped).
struct FoldReport {
  std::size_t positive_cells = 0;
  std::size_t negative_cells = 0;
  bool fold_found() const { return positive_cells > 0 && negative_cells > 0; }
};

inline FoldReport detect_fold(const DisplacementModel& model, std::size_t n = 100) {
  const PolygonalDomain& dom = model.polytope();
  const Rect r = dom.bounding_box();
  const auto node = [&](std::size_t i, std::size_t j) {
    return Vec2(r.x0 + r.width() * static_cast<double>(i) / static_cast<double>(n),
                r.y0 + r.height() * static_cast<double>(j) / static_cast<double>(n));
  };
  FoldReport rep;
  std::vector<Vec2> img((n + 1) * (n + 1));
  std::vector<char> inside((n + 1) * (n + 1));
  for (std::size_t j = 0; j <= n; ++j) {
    for (std::size_t i = 0; i <= n; ++i) {
      const Vec2 x = node(i, j);
      const std::size_t k = j * (n + 1) + i;
      inside[k] = classify_point(dom, x, 1e-12) != PointClass::exterior;
      if (inside[k]) {
        Vec2 d;
        model.displacement(x, d, nullptr);
        img[k] = x + d;
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c[4] = {j * (n + 1) + i, j * (n + 1) + i + 1, (j + 1) * (n + 1) + i + 1, (j + 1) * (n + 1) + i};
      if (!(inside[c[0]] && inside[c[1]] && inside[c[2]] && inside[c[3]])) continue;
      double a = 0.0;
      for (int k = 0; k < 4; ++k) a += detail::cross(img[c[k]], img[c[(k + 1) % 4]]);
      if (a > 0.0) ++rep.positive_cells;
      if (a < 0.0) ++rep.negative_cells;
    }
  }
  return rep;
}

/// Smallest pairwise distance between images of an n x n grid (injectivity proxy).
inline double min_image_separation(const DisplacementModel& model, std::size_t n = 100) {
  std::vector<Vec2> pts = closure_grid(model.polytope(), n);
  std::vector<Vec2> img = evaluate_cm(model, pts);
  std::sort(img.begin(), img.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x(); });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < img.size(); ++i)
    for (std::size_t j = i + 1; j < img.size() && img[j].x() - img[i].x() < best; ++j)
      best = std::min(best, (img[j] - img[i]).norm());
  return best;
}

/// CSV `x1,x2,y1,y2` of source points and their images.
inline void write_deformed_csv(std::ostream& out, const std::vector<Vec2>& src, const std::vector<Vec2>& img) {
  out << "x1,x2,y1,y2\n";
  char buf[160];
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", src[i].x(), src[i].y(), img[i].x(), img[i].y());
    out << buf;
  }
}

}  // namespace regflow

#endif  // REGFLOW_COMPOSITIONAL_HPP
