#ifndef REGFLOW_BASIS_HPP
#define REGFLOW_BASIS_HPP

#include <memory>
#include <string>
#include <vector>

#include "regflow/core.hpp"
#include "regflow/geometry.hpp"
#include "regflow/quadrature.hpp"

namespace regflow {

enum class BasisKind { spatial, space_time };

/// Second spatial derivatives of a vector field, ordered (d11, d12, d22);
/// each entry holds both field components.
using Hessian2 = std::array<Vec2, 3>;

/// A finite family of boundary-tangent vector fields on a polygon.
///
/// Spatial members ignore the time argument. The gradient convention is
/// (grad phi)(r, c) = d phi_r / d x_c, so that phi(x + dx) ~ phi(x) + grad phi dx.
class BasisSet {
 public:
  explicit BasisSet(std::shared_ptr<const PolygonalDomain> domain) : domain_(std::move(domain)) {}
  virtual ~BasisSet() = default;

  virtual std::size_t size() const = 0;
  virtual BasisKind kind() const = 0;
  virtual Vec2 eval(std::size_t i, const Vec2& x, double t = 0.0) const = 0;
  virtual Mat2 eval_grad(std::size_t i, const Vec2& x, double t = 0.0) const = 0;

  virtual bool has_hessian() const { return false; }
  virtual Hessian2 eval_hessian(std::size_t, const Vec2&) const {
    throw UnsupportedError("basis does not provide second derivatives");
  }

  /// Largest total polynomial degree of the members, or -1 if not polynomial.
  virtual int polynomial_degree() const { return -1; }

  /// Values (and optionally gradients) of every member at (x, t).
  virtual void eval_all(const Vec2& x, double t, std::vector<Vec2>& values, std::vector<Mat2>* grads) const {
    values.resize(size());
    if (grads) grads->resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
      values[i] = eval(i, x, t);
      if (grads) (*grads)[i] = eval_grad(i, x, t);
    }
  }

  const std::shared_ptr<const PolygonalDomain>& domain() const { return domain_; }

  void check_index(std::size_t i) const {
    if (i >= size()) throw IndexError("basis index " + std::to_string(i) + " out of range");
  }

 private:
  std::shared_ptr<const PolygonalDomain> domain_;
};

using BasisPtr = std::shared_ptr<const BasisSet>;

/// Bubble-times-tensor-polynomial fields on an axis-aligned rectangle:
/// (b1(x1) q(x), 0) and (0, b2(x2) r(x)) with b1 = (x1-a)(b-x1),
/// b2 = (x2-c)(d-x2) and q, r spanned by products of Legendre polynomials of
/// per-variable degree <= p. The bubble kills the normal component on every facet.
class TangentialPolynomialBasis final : public BasisSet {
 public:
  TangentialPolynomialBasis(std::shared_ptr<const PolygonalDomain> domain, int degree, bool normalize)
      : BasisSet(std::move(domain)), degree_(degree) {
    const auto rect = this->domain()->as_axis_aligned_rectangle();
    if (!rect) throw UnsupportedError("tangential polynomial basis requires an axis-aligned rectangle");
    if (degree < 0) throw ValidationError("basis degree must be non-negative");
    rect_ = *rect;
    const std::size_t per = per_component();
    scale_.assign(2 * per, 1.0);
    if (normalize) {
      // Squared L2 norms factor into 1-D integrals.
      const auto g = gauss_legendre_01(degree_ + 3);
      const auto bubble_moment = [&](double a, double b, int k) {
        double s = 0.0;
        for (const auto& [u, w] : g) {
          const double x = a + u * (b - a);
          const double bub = (x - a) * (b - x);
          const double l = legendre(k, 2.0 * u - 1.0).p;
          s += w * (b - a) * bub * bub * l * l;
        }
        return s;
      };
      const auto legendre_moment = [](double a, double b, int k) { return (b - a) / (2.0 * k + 1.0); };
      for (std::size_t j = 0; j < 2 * per; ++j) {
        const auto [c, k1, k2] = decode(j);
        double n2 = 0.0;
        if (c == 0)
          n2 = bubble_moment(rect_.x0, rect_.x1, k1) * legendre_moment(rect_.y0, rect_.y1, k2);
        else
          n2 = legendre_moment(rect_.x0, rect_.x1, k1) * bubble_moment(rect_.y0, rect_.y1, k2);
        scale_[j] = 1.0 / std::sqrt(n2);
      }
    }
  }

  std::size_t size() const override { return 2 * per_component(); }
  BasisKind kind() const override { return BasisKind::spatial; }
  int polynomial_degree() const override { return 2 * degree_ + 2; }
  bool has_hessian() const override { return true; }
  int degree() const { return degree_; }
  double scale(std::size_t i) const { return scale_.at(i); }

  Vec2 eval(std::size_t i, const Vec2& x, double = 0.0) const override {
    check_index(i);
    const Tables tb = tables(x);
    return value(i, tb);
  }

  Mat2 eval_grad(std::size_t i, const Vec2& x, double = 0.0) const override {
    check_index(i);
    const Tables tb = tables(x);
    return gradient(i, tb);
  }

  Hessian2 eval_hessian(std::size_t i, const Vec2& x) const override {
    check_index(i);
    const Tables tb = tables(x);
    const auto [c, k1, k2] = decode(i);
    // Field component c equals B(x_c) * l1(x1) * l2(x2).
    const Axis& ax1 = tb.axis[0];
    const Axis& ax2 = tb.axis[1];
    const double l1 = ax1.l[k1], dl1 = ax1.dl[k1], d2l1 = ax1.d2l[k1];
    const double l2 = ax2.l[k2], dl2 = ax2.dl[k2], d2l2 = ax2.d2l[k2];
    double f11, f12, f22;
    if (c == 0) {
      const double b = ax1.bubble, db = ax1.dbubble, d2b = -2.0;
      f11 = (d2b * l1 + 2.0 * db * dl1 + b * d2l1) * l2;
      f12 = (db * l1 + b * dl1) * dl2;
      f22 = b * l1 * d2l2;
    } else {
      const double b = ax2.bubble, db = ax2.dbubble, d2b = -2.0;
      f11 = d2l1 * b * l2;
      f12 = dl1 * (db * l2 + b * dl2);
      f22 = l1 * (d2b * l2 + 2.0 * db * dl2 + b * d2l2);
    }
    const double s = scale_[i];
    Hessian2 h;
    for (auto& e : h) e.setZero();
    h[0][c] = s * f11;
    h[1][c] = s * f12;
    h[2][c] = s * f22;
    return h;
  }

  void eval_all(const Vec2& x, double, std::vector<Vec2>& values, std::vector<Mat2>* grads) const override {
    const Tables tb = tables(x);
    values.resize(size());
    if (grads) grads->resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
      values[i] = value(i, tb);
      if (grads) (*grads)[i] = gradient(i, tb);
    }
  }

 private:
  struct Axis {
    std::vector<double> l, dl, d2l;
    double bubble = 0.0, dbubble = 0.0;
  };
  struct Tables {
    std::array<Axis, 2> axis;
  };
  struct Code {
    int c, k1, k2;
  };

  std::size_t per_component() const {
    return static_cast<std::size_t>((degree_ + 1) * (degree_ + 1));
  }

  Code decode(std::size_t j) const {
    const std::size_t per = per_component();
    const int c = static_cast<int>(j / per);
    const int r = static_cast<int>(j % per);
    return {c, r % (degree_ + 1), r / (degree_ + 1)};
  }

  Tables tables(const Vec2& x) const {
    Tables tb;
    const double lo[2] = {rect_.x0, rect_.y0};
    const double hi[2] = {rect_.x1, rect_.y1};
    for (int d = 0; d < 2; ++d) {
      Axis& ax = tb.axis[static_cast<std::size_t>(d)];
      const double len = hi[d] - lo[d];
      const double s = 2.0 * (x[d] - lo[d]) / len - 1.0;
      const double j = 2.0 / len;
      ax.l.resize(static_cast<std::size_t>(degree_ + 1));
      ax.dl.resize(ax.l.size());
      ax.d2l.resize(ax.l.size());
      for (int k = 0; k <= degree_; ++k) {
        const LegendreValue v = legendre(k, s);
        ax.l[static_cast<std::size_t>(k)] = v.p;
        ax.dl[static_cast<std::size_t>(k)] = v.dp * j;
        ax.d2l[static_cast<std::size_t>(k)] = v.d2p * j * j;
      }
      ax.bubble = (x[d] - lo[d]) * (hi[d] - x[d]);
      ax.dbubble = lo[d] + hi[d] - 2.0 * x[d];
    }
    return tb;
  }

  Vec2 value(std::size_t i, const Tables& tb) const {
    const auto [c, k1, k2] = decode(i);
    const double f = tb.axis[static_cast<std::size_t>(c)].bubble * tb.axis[0].l[k1] * tb.axis[1].l[k2];
    Vec2 v = Vec2::Zero();
    v[c] = scale_[i] * f;
    return v;
  }

  Mat2 gradient(std::size_t i, const Tables& tb) const {
    const auto [c, k1, k2] = decode(i);
    const Axis& ax1 = tb.axis[0];
    const Axis& ax2 = tb.axis[1];
    double d1, d2;
    if (c == 0) {
      d1 = (ax1.dbubble * ax1.l[k1] + ax1.bubble * ax1.dl[k1]) * ax2.l[k2];
      d2 = ax1.bubble * ax1.l[k1] * ax2.dl[k2];
    } else {
      d1 = ax2.bubble * ax1.dl[k1] * ax2.l[k2];
      d2 = ax1.l[k1] * (ax2.dbubble * ax2.l[k2] + ax2.bubble * ax2.dl[k2]);
    }
    Mat2 g = Mat2::Zero();
    g(c, 0) = scale_[i] * d1;
    g(c, 1) = scale_[i] * d2;
    return g;
  }

  int degree_;
  Rect rect_{};
  std::vector<double> scale_;
};

/// Space-time family phi_{(i,k)}(x, t) = phi_i(x) L_k(t), with L_k the
/// Legendre polynomial shifted to [0, 1]. Flat index is k * M_spatial + i.
class SpaceTimeBasis final : public BasisSet {
 public:
  SpaceTimeBasis(BasisPtr spatial, int temporal_degree)
      : BasisSet(spatial->domain()), spatial_(std::move(spatial)), pt_(temporal_degree) {
    if (spatial_->kind() != BasisKind::spatial) throw ValidationError("tensorize_time needs a spatial basis");
    if (pt_ < 0) throw ValidationError("temporal degree must be non-negative");
  }

  std::size_t size() const override { return spatial_->size() * static_cast<std::size_t>(pt_ + 1); }
  BasisKind kind() const override { return BasisKind::space_time; }
  int polynomial_degree() const override { return spatial_->polynomial_degree(); }
  int temporal_degree() const { return pt_; }
  const BasisPtr& spatial() const { return spatial_; }

  Vec2 eval(std::size_t i, const Vec2& x, double t) const override {
    check_index(i);
    const std::size_t ms = spatial_->size();
    return spatial_->eval(i % ms, x) * shifted_legendre(static_cast<int>(i / ms), t);
  }

  Mat2 eval_grad(std::size_t i, const Vec2& x, double t) const override {
    check_index(i);
    const std::size_t ms = spatial_->size();
    return spatial_->eval_grad(i % ms, x) * shifted_legendre(static_cast<int>(i / ms), t);
  }

  void eval_all(const Vec2& x, double t, std::vector<Vec2>& values, std::vector<Mat2>* grads) const override {
    thread_local std::vector<Vec2> sv;
    thread_local std::vector<Mat2> sg;
    spatial_->eval_all(x, 0.0, sv, grads ? &sg : nullptr);
    const std::size_t ms = spatial_->size();
    values.resize(size());
    if (grads) grads->resize(size());
    for (int k = 0; k <= pt_; ++k) {
      const double lk = shifted_legendre(k, t);
      for (std::size_t i = 0; i < ms; ++i) {
        const std::size_t j = static_cast<std::size_t>(k) * ms + i;
        values[j] = sv[i] * lk;
        if (grads) (*grads)[j] = sg[i] * lk;
      }
    }
  }

 private:
  BasisPtr spatial_;
  int pt_;
};

/// Basis defined by user callables; used for analytic test fields.
class FunctionBasis final : public BasisSet {
 public:
  struct Member {
    std::function<Vec2(const Vec2&, double)> value;
    std::function<Mat2(const Vec2&, double)> gradient;
    std::function<Hessian2(const Vec2&)> hessian;  // optional
  };

  FunctionBasis(std::shared_ptr<const PolygonalDomain> domain, BasisKind kind, std::vector<Member> members,
                int degree = -1)
      : BasisSet(std::move(domain)), kind_(kind), members_(std::move(members)), degree_(degree) {}

  std::size_t size() const override { return members_.size(); }
  BasisKind kind() const override { return kind_; }
  int polynomial_degree() const override { return degree_; }

  Vec2 eval(std::size_t i, const Vec2& x, double t) const override {
    check_index(i);
    return members_[i].value(x, t);
  }
  Mat2 eval_grad(std::size_t i, const Vec2& x, double t) const override {
    check_index(i);
    return members_[i].gradient(x, t);
  }
  bool has_hessian() const override {
    return std::all_of(members_.begin(), members_.end(), [](const Member& m) { return bool(m.hessian); });
  }
  Hessian2 eval_hessian(std::size_t i, const Vec2& x) const override {
    check_index(i);
    if (!members_[i].hessian) throw UnsupportedError("member has no second derivatives");
    return members_[i].hessian(x);
  }

 private:
  BasisKind kind_;
  std::vector<Member> members_;
  int degree_;
};

inline BasisPtr build_tangential_polynomial_basis(std::shared_ptr<const PolygonalDomain> domain, int degree,
                                                  bool normalize = true) {
  return std::make_shared<TangentialPolynomialBasis>(std::move(domain), degree, normalize);
}

inline BasisPtr tensorize_time(BasisPtr spatial, int temporal_degree) {
  return std::make_shared<SpaceTimeBasis>(std::move(spatial), temporal_degree);
}

/// Largest |phi_i(x, t) . n| over members, facet sample points and times.
inline double max_normal_component(const BasisSet& basis, int points_per_facet = 20,
                                   const std::vector<double>& times = {0.0, 0.25, 0.5, 0.75, 1.0}) {
  double worst = 0.0;
  const PolygonalDomain& dom = *basis.domain();
  std::vector<Vec2> vals;
  for (const Facet& f : dom.facets()) {
    for (int s = 0; s < points_per_facet; ++s) {
      const Vec2 x = f.point((s + 0.5) / points_per_facet);
      for (double t : times) {
        basis.eval_all(x, t, vals, nullptr);
        for (const Vec2& v : vals) worst = std::max(worst, std::abs(v.dot(f.normal)));
      }
    }
  }
  return worst;
}

}  // namespace regflow

#endif  // REGFLOW_BASIS_HPP
