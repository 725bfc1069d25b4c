#ifndef REGFLOW_CORE_HPP
#define REGFLOW_CORE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace regflow {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Error hierarchy. Every failure raised by the library derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition (bad index, bad size, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IndexError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A point (or a mapped point) falls outside the closure of its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: failed factorization, singular matrix, underflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DecompositionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A discrete flow trajectory left the domain closure beyond the leak tolerance.
class BoundaryLeakError : public NumericalError {
 public:
  BoundaryLeakError(std::size_t seed, std::size_t step, const std::string& what)
      : NumericalError(what), seed_(seed), step_(step) {}

  std::size_t seed() const { return seed_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t seed_;
  std::size_t step_;
};

inline double det2(const Mat2& a) { return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0); }

/// Adjugate of a 2x2 matrix; adj(A) = det(A) A^{-1} whenever A is invertible.
inline Mat2 adjugate2(const Mat2& a) {
  Mat2 r;
  r << a(1, 1), -a(0, 1), -a(1, 0), a(0, 0);
  return r;
}

inline Vec2 rotate_cw(const Vec2& d) { return Vec2(d.y(), -d.x()); }

// Process-wide worker count used by the per-point loops. Results never depend
// on it: work items are independent and reductions happen afterwards in order.
inline std::size_t& thread_count_storage() {
  static std::size_t n = 1;
  return n;
}

inline void set_num_threads(std::size_t n) { thread_count_storage() = std::max<std::size_t>(1, n); }
inline std::size_t num_threads() { return thread_count_storage(); }

/// Runs fn(i) for i in [0, n). Exceptions from workers are rethrown; when
/// several items fail, the one with the smallest index wins.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(num_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> first_bad(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          first_bad[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  std::size_t best = workers;
  for (std::size_t w = 0; w < workers; ++w)
    if (errors[w] && (best == workers || first_bad[w] < first_bad[best])) best = w;
  if (best != workers) std::rethrow_exception(errors[best]);
}

/// Legendre polynomial P_k on [-1, 1] and its first two derivatives.
struct LegendreValue {
  double p = 1.0;
  double dp = 0.0;
  double d2p = 0.0;
};

inline LegendreValue legendre(int k, double s) {
  if (k == 0) return {};
  double p0 = 1.0, p1 = s;
  double d0 = 0.0, d1 = 1.0;
  double e0 = 0.0, e1 = 0.0;
  for (int n = 1; n < k; ++n) {
    const double p2 = ((2.0 * n + 1.0) * s * p1 - n * p0) / (n + 1.0);
    const double d2 = ((2.0 * n + 1.0) * (p1 + s * d1) - n * d0) / (n + 1.0);
    const double e2 = ((2.0 * n + 1.0) * (2.0 * d1 + s * e1) - n * e0) / (n + 1.0);
    p0 = p1; p1 = p2;
    d0 = d1; d1 = d2;
    e0 = e1; e1 = e2;
  }
  return {p1, d1, e1};
}

/// Legendre polynomial shifted to [0, 1]: L_k(t) = P_k(2t - 1).
inline double shifted_legendre(int k, double t) { return legendre(k, 2.0 * t - 1.0).p; }

/// Gauss-Legendre rule with n points on [0, 1] (exact to degree 2n-1).
inline std::vector<std::pair<double, double>> gauss_legendre_01(int n) {
  std::vector<std::pair<double, double>> rule(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const LegendreValue v = legendre(n, x);
      const double dx = v.p / v.dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(n, x).dp;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule[static_cast<std::size_t>(n - 1 - i)] = {0.5 * (x + 1.0), 0.5 * w};
  }
  return rule;
}

/// Pairwise (cascade) summation, used wherever a reduction must be reproducible.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace regflow

#endif  // REGFLOW_CORE_HPP
