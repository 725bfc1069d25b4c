#ifndef REGFLOW_TARGETS_HPP
#define REGFLOW_TARGETS_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "regflow/core.hpp"
#include "regflow/fields.hpp"
#include "regflow/quadrature.hpp"

namespace regflow {

/// A target functional sampled at a fixed set of reference points.
///
/// value() receives the images Phi(x_q) of the sample points. dual() returns
/// vectors g_q with D f[Phi](h) = sum_q g_q . h(x_q), which is all the map
/// modules need to form coefficient gradients and adjoint terminal data.
class Target {
 public:
  virtual ~Target() = default;
  virtual const std::vector<Vec2>& sample_points() const = 0;
  virtual double value(const std::vector<Vec2>& images) const = 0;
  virtual std::vector<Vec2> dual(const std::vector<Vec2>& images) const = 0;

  /// Frechet derivative D f[Phi](h), h sampled at the same points.
  double frechet(const std::vector<Vec2>& images, const std::vector<Vec2>& h) const {
    if (h.size() != sample_points().size()) throw SizeError("frechet: h has the wrong number of samples");
    const std::vector<Vec2> g = dual(images);
    std::vector<double> terms(g.size());
    for (std::size_t q = 0; q < g.size(); ++q) terms[q] = g[q].dot(h[q]);
    return pairwise_sum(terms);
  }

 protected:
  void check_count(const std::vector<Vec2>& images) const {
    if (images.size() != sample_points().size())
      throw SizeError("target expects " + std::to_string(sample_points().size()) + " images, got " +
                      std::to_string(images.size()));
  }
};

/// f(Phi) = min_{zeta in Z_N} 1/2 int (u o Phi - zeta)^2, by quadrature.
class DistributedTarget final : public Target {
 public:
  DistributedTarget(ScalarField u, std::vector<ScalarField> z_basis, QuadratureRule quad)
      : u_(std::move(u)), z_(std::move(z_basis)), quad_(std::move(quad)) {
    points_.reserve(quad_.size());
    for (const QuadPoint& q : quad_) points_.push_back(q.point);
    const Eigen::Index nz = static_cast<Eigen::Index>(z_.size());
    z_values_.resize(static_cast<Eigen::Index>(quad_.size()), nz);
    for (std::size_t q = 0; q < quad_.size(); ++q)
      for (Eigen::Index k = 0; k < nz; ++k)
        z_values_(static_cast<Eigen::Index>(q), k) = z_[static_cast<std::size_t>(k)].value(quad_[q].point);
    weights_.resize(static_cast<Eigen::Index>(quad_.size()));
    for (std::size_t q = 0; q < quad_.size(); ++q) weights_[static_cast<Eigen::Index>(q)] = quad_[q].weight;
    if (nz > 0) {
      const MatrixXd gram = z_values_.transpose() * weights_.asDiagonal() * z_values_;
      gram_llt_.compute(gram);
      if (gram_llt_.info() != Eigen::Success) throw DecompositionError("Z_N Gram matrix is singular");
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
      if (!(lo > 0.0)) throw DecompositionError("Z_N Gram matrix is singular");
      condition_ = hi / lo;
      if (condition_ > 1e14) throw DecompositionError("Z_N Gram matrix is numerically singular");
    }
  }

  const std::vector<Vec2>& sample_points() const override { return points_; }
  const QuadratureRule& quadrature_rule() const { return quad_; }
  const ScalarField& field() const { return u_; }
  std::size_t z_dimension() const { return z_.size(); }
  double z_gram_condition() const { return condition_; }

  /// u o Phi - zeta_Phi at each quadrature node.
  VectorXd residual(const std::vector<Vec2>& images) const {
    check_count(images);
    VectorXd w(static_cast<Eigen::Index>(images.size()));
    for (std::size_t q = 0; q < images.size(); ++q) w[static_cast<Eigen::Index>(q)] = u_.value(images[q]);
    if (z_.empty()) return w;
    const VectorXd coeffs = gram_llt_.solve(z_values_.transpose() * weights_.asDiagonal() * w);
    return w - z_values_ * coeffs;
  }

  double value(const std::vector<Vec2>& images) const override {
    const VectorXd r = residual(images);
    std::vector<double> terms(static_cast<std::size_t>(r.size()));
    for (Eigen::Index q = 0; q < r.size(); ++q) terms[static_cast<std::size_t>(q)] = weights_[q] * r[q] * r[q];
    return 0.5 * pairwise_sum(terms);
  }

  std::vector<Vec2> dual(const std::vector<Vec2>& images) const override {
    const VectorXd r = residual(images);
    std::vector<Vec2> g(images.size());
    for (std::size_t q = 0; q < images.size(); ++q) {
      const Eigen::Index i = static_cast<Eigen::Index>(q);
      g[q] = weights_[i] * r[i] * u_.gradient(images[q]);
    }
    return g;
  }

 private:
  ScalarField u_;
  std::vector<ScalarField> z_;
  QuadratureRule quad_;
  std::vector<Vec2> points_;
  MatrixXd z_values_;
  VectorXd weights_;
  Eigen::LLT<MatrixXd> gram_llt_;
  double condition_ = 1.0;
};

enum class WeightMode { row_stochastic, doubly_stochastic };

/// f(Phi) = 1/2 sum_i sum_j P_ij |Phi(x_i) - y_j|^2.
class PointwiseTarget final : public Target {
 public:
  PointwiseTarget(std::vector<Vec2> source, std::vector<Vec2> target, MatrixXd weights,
                  WeightMode mode = WeightMode::row_stochastic)
      : source_(std::move(source)), target_(std::move(target)), mode_(mode) {
    set_weights(std::move(weights));
  }

  /// One-to-one correspondence (P = identity); requires equal counts.
  static PointwiseTarget matched(std::vector<Vec2> source, std::vector<Vec2> target,
                                 WeightMode mode = WeightMode::row_stochastic) {
    if (source.size() != target.size()) throw SizeError("matched target needs equal point counts");
    const Eigen::Index n = static_cast<Eigen::Index>(source.size());
    return PointwiseTarget(std::move(source), std::move(target), MatrixXd::Identity(n, n), mode);
  }

  const std::vector<Vec2>& sample_points() const override { return source_; }
  const std::vector<Vec2>& target_points() const { return target_; }
  const MatrixXd& weights() const { return p_; }
  WeightMode mode() const { return mode_; }

  void set_weights(MatrixXd p) {
    const Eigen::Index n0 = static_cast<Eigen::Index>(source_.size());
    const Eigen::Index n1 = static_cast<Eigen::Index>(target_.size());
    if (p.rows() != n0 || p.cols() != n1) throw SizeError("weight matrix must be N0 x N1");
    if (mode_ == WeightMode::doubly_stochastic && n0 != n1)
      throw ValidationError("doubly-stochastic weights require N0 == N1");
    if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
      throw ValidationError("weights must lie in [0, 1]");
    if (((p.rowwise().sum().array() - 1.0).abs() > 1e-8).any())
      throw ValidationError("weight rows must sum to one");
    if (mode_ == WeightMode::doubly_stochastic && ((p.colwise().sum().array() - 1.0).abs() > 1e-8).any())
      throw ValidationError("weight columns must sum to one");
    p_ = std::move(p);
  }

  /// sum_j P_ij y_j for every source point.
  std::vector<Vec2> barycenters() const {
    std::vector<Vec2> b(source_.size(), Vec2::Zero());
    for (std::size_t i = 0; i < source_.size(); ++i)
      for (std::size_t j = 0; j < target_.size(); ++j)
        b[i] += p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * target_[j];
    return b;
  }

  double value(const std::vector<Vec2>& images) const override {
    check_count(images);
    std::vector<double> terms(source_.size());
    for (std::size_t i = 0; i < source_.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < target_.size(); ++j)
        s += p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (images[i] - target_[j]).squaredNorm();
      terms[i] = s;
    }
    return 0.5 * pairwise_sum(terms);
  }

  /// Phi(x_i) - sum_j P_ij y_j (rows of P sum to one).
  std::vector<Vec2> dual(const std::vector<Vec2>& images) const override {
    check_count(images);
    std::vector<Vec2> g = barycenters();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double row = p_.row(static_cast<Eigen::Index>(i)).sum();
      g[i] = row * images[i] - g[i];
    }
    return g;
  }

  /// EM responsibilities R_ij ~ exp(-|Phi(x_i) - y_j|^2 / (2 sigma^2)),
  /// row-normalized; Sinkhorn-balanced in doubly-stochastic mode.
  MatrixXd em_update_weights(const std::vector<Vec2>& images, double sigma) const {
    check_count(images);
    if (!(sigma > 0.0)) throw ValidationError("em_update_weights: sigma must be positive");
    const Eigen::Index n0 = static_cast<Eigen::Index>(source_.size());
    const Eigen::Index n1 = static_cast<Eigen::Index>(target_.size());
    MatrixXd r(n0, n1);
    for (Eigen::Index i = 0; i < n0; ++i)
      for (Eigen::Index j = 0; j < n1; ++j)
        r(i, j) = std::exp(-(images[static_cast<std::size_t>(i)] - target_[static_cast<std::size_t>(j)]).squaredNorm() /
                           (2.0 * sigma * sigma));
    for (Eigen::Index i = 0; i < n0; ++i) {
      const double s = r.row(i).sum();
      if (!(s > 0.0))
        throw NumericalError("em_update_weights: responsibilities of point " + std::to_string(i) +
                             " underflowed to zero; increase sigma");
      r.row(i) /= s;
    }
    if (mode_ == WeightMode::doubly_stochastic) {
      for (int it = 0;; ++it) {
        const double dev = std::max((r.rowwise().sum().array() - 1.0).abs().maxCoeff(),
                                    (r.colwise().sum().array() - 1.0).abs().maxCoeff());
        if (dev < 1e-8) break;
        if (it == 500)
          throw NumericalError("em_update_weights: Sinkhorn balancing did not converge in 500 iterations "
                               "(deviation " + std::to_string(dev) + "); increase sigma");
        for (Eigen::Index j = 0; j < n1; ++j) {
          const double s = r.col(j).sum();
          if (!(s > 0.0)) throw NumericalError("em_update_weights: empty column; increase sigma");
          r.col(j) /= s;
        }
        for (Eigen::Index i = 0; i < n0; ++i) r.row(i) /= r.row(i).sum();
      }
    }
    return r.cwiseMin(1.0);
  }

  /// Mean distance between images and target points; the annealing start.
  double initial_sigma(const std::vector<Vec2>& images) const {
    check_count(images);
    double s = 0.0;
    for (const Vec2& x : images)
      for (const Vec2& y : target_) s += (x - y).norm();
    return s / static_cast<double>(images.size() * target_.size());
  }

 private:
  std::vector<Vec2> source_;
  std::vector<Vec2> target_;
  MatrixXd p_;
  WeightMode mode_;
};

/// Deterministic annealing step: max(0.92 sigma, sigma_min).
inline double anneal_sigma(double sigma, double sigma_min) { return std::max(0.92 * sigma, sigma_min); }

}  // namespace regflow

#endif  // REGFLOW_TARGETS_HPP
