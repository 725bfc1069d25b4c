#ifndef REGFLOW_VECTORFLOW_HPP
#define REGFLOW_VECTORFLOW_HPP

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "regflow/basis.hpp"
#include "regflow/geometry.hpp"
#include "regflow/targets.hpp"

namespace regflow {

enum class Scheme { rk4, rk2 };

inline const char* to_string(Scheme s) { return s == Scheme::rk4 ? "RK4" : "RK2"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "RK4" || s == "rk4") return Scheme::rk4;
  if (s == "RK2" || s == "rk2") return Scheme::rk2;
  throw ValidationError("unknown integrator '" + s + "' (expected RK4 or RK2)");
}

/// v(x, t; a) = sum_i a_i phi_i(x, t) over a (space-time or spatial) basis.
class VelocityModel {
 public:
  VelocityModel(BasisPtr basis, VectorXd coefficients) : basis_(std::move(basis)), a_(std::move(coefficients)) {
    if (!basis_) throw ValidationError("velocity model needs a basis");
    if (static_cast<std::size_t>(a_.size()) != basis_->size())
      throw SizeError("coefficient vector has " + std::to_string(a_.size()) + " entries, basis has " +
                      std::to_string(basis_->size()));
  }

  const BasisPtr& basis() const { return basis_; }
  const VectorXd& coefficients() const { return a_; }
  std::size_t size() const { return basis_->size(); }
  const PolygonalDomain& domain() const { return *basis_->domain(); }

  VelocityModel with_coefficients(VectorXd a) const { return VelocityModel(basis_, std::move(a)); }

  /// Velocity and, optionally, its spatial gradient at (x, t).
  void evaluate(const Vec2& x, double t, Vec2& v, Mat2* grad) const {
    thread_local std::vector<Vec2> vals;
    thread_local std::vector<Mat2> grads;
    basis_->eval_all(x, t, vals, grad ? &grads : nullptr);
    v.setZero();
    if (grad) grad->setZero();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double ai = a_[static_cast<Eigen::Index>(i)];
      v += ai * vals[i];
      if (grad) *grad += ai * grads[i];
    }
  }

  Vec2 velocity(const Vec2& x, double t) const {
    Vec2 v;
    evaluate(x, t, v, nullptr);
    return v;
  }

  Mat2 velocity_gradient(const Vec2& x, double t) const {
    Vec2 v;
    Mat2 g;
    evaluate(x, t, v, &g);
    return g;
  }

 private:
  BasisPtr basis_;
  VectorXd a_;
};

struct FlowOptions {
  std::size_t steps = 1000;
  Scheme scheme = Scheme::rk4;
  double leak_tol = 1e-6;
  bool gradient = false;      // co-integrate grad X
  bool log_jacobian = false;  // co-integrate log J
  bool reversed = false;      // integrate -v(x, 1 - t) instead of v
};

/// Trajectories of a set of seeds on the uniform grid t_n = n / K.
struct FlowSolution {
  std::vector<Vec2> seeds;
  std::vector<double> times;
  std::vector<std::vector<Vec2>> x;        // [seed][node]
  std::vector<std::vector<Mat2>> grad_x;   // empty unless requested
  std::vector<std::vector<double>> log_j;  // empty unless requested
  std::vector<std::vector<Vec2>> velocity; // v(X, t) at the nodes, for interpolation
  Scheme scheme = Scheme::rk4;
  std::size_t steps = 0;

  std::size_t num_seeds() const { return seeds.size(); }
  const Vec2& end_point(std::size_t i) const { return x.at(i).back(); }
  const Mat2& end_gradient(std::size_t i) const { return grad_x.at(i).back(); }
  double end_log_j(std::size_t i) const { return log_j.at(i).back(); }

  std::vector<Vec2> end_points() const {
    std::vector<Vec2> out;
    out.reserve(x.size());
    for (const auto& tr : x) out.push_back(tr.back());
    return out;
  }
};

namespace detail {

struct FlowState {
  Vec2 x = Vec2::Zero();
  Mat2 g = Mat2::Identity();
  double l = 0.0;
};

struct FlowRhs {
  const VelocityModel& model;
  bool reversed;
  bool need_grad;

  FlowState operator()(const FlowState& s, double t, Vec2* v_out = nullptr) const {
    FlowState d;
    Mat2 jac;
    const double tt = reversed ? 1.0 - t : t;
    model.evaluate(s.x, tt, d.x, need_grad ? &jac : nullptr);
    if (reversed) {
      d.x = -d.x;
      jac = -jac;
    }
    if (need_grad) {
      d.g = jac * s.g;
      d.l = jac.trace();
    } else {
      d.g.setZero();
    }
    if (v_out) *v_out = d.x;
    return d;
  }
};

inline FlowState axpy(const FlowState& s, double h, const FlowState& d) {
  return {s.x + h * d.x, s.g + h * d.g, s.l + h * d.l};
}

inline void check_leak(const PolygonalDomain& dom, const Vec2& x, double tol, std::size_t seed, std::size_t step) {
  if (classify_point(dom, x, tol) == PointClass::exterior) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "trajectory of seed %zu left the domain at step %zu (x = %.6g, %.6g)", seed,
                  step, x.x(), x.y());
    throw BoundaryLeakError(seed, step, buf);
  }
}

inline std::vector<double> trapezoid_weights(std::size_t steps) {
  const double h = 1.0 / static_cast<double>(steps);
  std::vector<double> w(steps + 1, h);
  w.front() = w.back() = 0.5 * h;
  return w;
}

inline std::vector<double> time_grid(std::size_t steps) {
  std::vector<double> t(steps + 1);
  for (std::size_t n = 0; n <= steps; ++n) t[n] = static_cast<double>(n) / static_cast<double>(steps);
  return t;
}

}  // namespace detail

/// Integrates dX/dt = v(X, t), X(0) = seed, on K uniform steps. With
/// options.gradient / options.log_jacobian the matrix ODE
/// d(grad X)/dt = grad_x v(X, t) grad X and d(log J)/dt = div v(X, t) are
/// advanced with the same stages.
inline FlowSolution integrate(const VelocityModel& model, const std::vector<Vec2>& seeds, const FlowOptions& opt) {
  if (opt.steps < 1) throw ValidationError("integrate_flow: need at least one step");
  const PolygonalDomain& dom = model.domain();
  for (std::size_t s = 0; s < seeds.size(); ++s)
    if (classify_point(dom, seeds[s], opt.leak_tol) == PointClass::exterior)
      throw DomainError("seed " + std::to_string(s) + " lies outside the domain closure");

  FlowSolution sol;
  sol.seeds = seeds;
  sol.times = detail::time_grid(opt.steps);
  sol.scheme = opt.scheme;
  sol.steps = opt.steps;
  const std::size_t n_seeds = seeds.size();
  sol.x.assign(n_seeds, {});
  sol.velocity.assign(n_seeds, {});
  const bool need_grad = opt.gradient || opt.log_jacobian;
  if (opt.gradient) sol.grad_x.assign(n_seeds, {});
  if (opt.log_jacobian) sol.log_j.assign(n_seeds, {});
  const detail::FlowRhs rhs{model, opt.reversed, need_grad};
  const double h = 1.0 / static_cast<double>(opt.steps);

  parallel_for(n_seeds, [&](std::size_t s) {
    auto& xs = sol.x[s];
    auto& vs = sol.velocity[s];
    xs.resize(opt.steps + 1);
    vs.resize(opt.steps + 1);
    if (opt.gradient) sol.grad_x[s].resize(opt.steps + 1);
    if (opt.log_jacobian) sol.log_j[s].resize(opt.steps + 1);
    detail::FlowState st;
    st.x = seeds[s];
    for (std::size_t n = 0; n < opt.steps; ++n) {
      const double t = sol.times[n];
      xs[n] = st.x;
      if (opt.gradient) sol.grad_x[s][n] = st.g;
      if (opt.log_jacobian) sol.log_j[s][n] = st.l;
      const detail::FlowState k1 = rhs(st, t, &vs[n]);
      if (opt.scheme == Scheme::rk4) {
        const detail::FlowState k2 = rhs(detail::axpy(st, 0.5 * h, k1), t + 0.5 * h);
        const detail::FlowState k3 = rhs(detail::axpy(st, 0.5 * h, k2), t + 0.5 * h);
        const detail::FlowState k4 = rhs(detail::axpy(st, h, k3), t + h);
        st.x += (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
        if (need_grad) {
          st.g += (h / 6.0) * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g);
          st.l += (h / 6.0) * (k1.l + 2.0 * k2.l + 2.0 * k3.l + k4.l);
        }
      } else {
        const detail::FlowState k2 = rhs(detail::axpy(st, h, k1), t + h);
        st.x += 0.5 * h * (k1.x + k2.x);
        if (need_grad) {
          st.g += 0.5 * h * (k1.g + k2.g);
          st.l += 0.5 * h * (k1.l + k2.l);
        }
      }
      detail::check_leak(dom, st.x, opt.leak_tol, s, n + 1);
    }
    xs[opt.steps] = st.x;
    if (opt.gradient) sol.grad_x[s][opt.steps] = st.g;
    if (opt.log_jacobian) sol.log_j[s][opt.steps] = st.l;
    rhs(st, 1.0, &vs[opt.steps]);
  });
  return sol;
}

inline FlowSolution integrate_flow(const VelocityModel& v, const std::vector<Vec2>& seeds, std::size_t steps,
                                   Scheme scheme = Scheme::rk4, double leak_tol = 1e-6) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.leak_tol = leak_tol;
  return integrate(v, seeds, o);
}

inline FlowSolution integrate_flow_gradient(const VelocityModel& v, const std::vector<Vec2>& seeds,
                                            std::size_t steps, Scheme scheme = Scheme::rk4) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.gradient = true;
  return integrate(v, seeds, o);
}

/// log J(xi, t) = int_0^t div v(X(xi, s), s) ds, co-integrated with X.
inline FlowSolution jacobian_logdet(const VelocityModel& v, const std::vector<Vec2>& seeds, std::size_t steps,
                                    Scheme scheme = Scheme::rk4) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.log_jacobian = true;
  return integrate(v, seeds, o);
}

/// dN/da_i(xi) = grad X(xi, 1) int_0^1 grad X(xi, tau)^{-1} phi_i(X(xi, tau), tau) dtau,
/// trapezoid in time on the step grid. Returns [seed][i].
inline std::vector<std::vector<Vec2>> coefficient_sensitivity(const VelocityModel& v, const std::vector<Vec2>& seeds,
                                                              std::size_t steps, Scheme scheme = Scheme::rk4) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.gradient = true;
  o.log_jacobian = true;
  const FlowSolution sol = integrate(v, seeds, o);
  const std::vector<double> w = detail::trapezoid_weights(steps);
  const std::size_t m = v.size();
  std::vector<std::vector<Vec2>> out(seeds.size(), std::vector<Vec2>(m, Vec2::Zero()));
  parallel_for(seeds.size(), [&](std::size_t s) {
    std::vector<Vec2> vals;
    std::vector<Vec2>& acc = out[s];
    for (std::size_t n = 0; n <= steps; ++n) {
      const double j = std::exp(sol.log_j[s][n]);
      if (!(j > 1e-300) || !std::isfinite(j))
        throw NumericalError("coefficient_sensitivity: grad X is numerically singular at seed " + std::to_string(s));
      const Mat2 ginv = adjugate2(sol.grad_x[s][n]) / j;
      v.basis()->eval_all(sol.x[s][n], sol.times[n], vals, nullptr);
      for (std::size_t i = 0; i < m; ++i) acc[i] += w[n] * (ginv * vals[i]);
    }
    const Mat2& g1 = sol.grad_x[s].back();
    for (Vec2& a : acc) a = g1 * a;
  });
  return out;
}

struct ValueAndGradient {
  double value = 0.0;
  VectorXd gradient;
};

/// Target value and coefficient gradient of E(a) = f(F[v(a)]) by the adjoint
/// method: forward X on the grid, backward
///   d Lambda/dt = -grad_x v(X(t), t)^T Lambda,  Lambda(1) = dual of f at F[v],
/// then (grad E)_k = sum_q int_0^1 Lambda_q . phi_k(X_q(t), t) dt (trapezoid).
/// The target's dual already carries quadrature weights, so the distributed
/// and pointwise cases share this routine. RK4 stages at half steps use cubic
/// Hermite interpolation of the stored trajectory.
inline ValueAndGradient adjoint_gradient(const VelocityModel& v, const Target& target, std::size_t steps,
                                         Scheme scheme = Scheme::rk4, double leak_tol = 1e-6) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.leak_tol = leak_tol;
  const FlowSolution sol = integrate(v, target.sample_points(), o);
  const std::vector<Vec2> images = sol.end_points();
  ValueAndGradient out;
  out.value = target.value(images);
  const std::vector<Vec2> lambda1 = target.dual(images);
  const std::vector<double> w = detail::trapezoid_weights(steps);
  const std::size_t m = v.size();
  const std::size_t nq = images.size();
  const double h = 1.0 / static_cast<double>(steps);
  MatrixXd per_seed = MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nq));

  parallel_for(nq, [&](std::size_t q) {
    const auto& xs = sol.x[q];
    const auto& vs = sol.velocity[q];
    std::vector<Vec2> vals;
    const auto jac_t = [&](const Vec2& x, double t) { return v.velocity_gradient(x, t).transpose().eval(); };
    Vec2 lam = lambda1[q];
    auto col = per_seed.col(static_cast<Eigen::Index>(q));
    const auto accumulate = [&](std::size_t n, const Vec2& l) {
      v.basis()->eval_all(xs[n], sol.times[n], vals, nullptr);
      for (std::size_t k = 0; k < m; ++k) col[static_cast<Eigen::Index>(k)] += w[n] * l.dot(vals[k]);
    };
    accumulate(steps, lam);
    for (std::size_t n = steps; n-- > 0;) {
      const double t1 = sol.times[n + 1], t0 = sol.times[n];
      if (scheme == Scheme::rk4) {
        const Vec2 xm = 0.5 * (xs[n] + xs[n + 1]) + (h / 8.0) * (vs[n] - vs[n + 1]);
        const double tm = 0.5 * (t0 + t1);
        const Mat2 a1 = jac_t(xs[n + 1], t1), am = jac_t(xm, tm), a0 = jac_t(xs[n], t0);
        const Vec2 k1 = -a1 * lam;
        const Vec2 k2 = -am * (lam - 0.5 * h * k1);
        const Vec2 k3 = -am * (lam - 0.5 * h * k2);
        const Vec2 k4 = -a0 * (lam - h * k3);
        lam -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      } else {
        const Mat2 a1 = jac_t(xs[n + 1], t1), a0 = jac_t(xs[n], t0);
        const Vec2 k1 = -a1 * lam;
        const Vec2 k2 = -a0 * (lam - h * k1);
        lam -= 0.5 * h * (k1 + k2);
      }
      accumulate(n, lam);
    }
  });
  out.gradient = VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t q = 0; q < nq; ++q) out.gradient += per_seed.col(static_cast<Eigen::Index>(q));
  return out;
}

inline ValueAndGradient adjoint_gradient_pointwise(const VelocityModel& v, const PointwiseTarget& target,
                                                   std::size_t steps, Scheme scheme = Scheme::rk4) {
  return adjoint_gradient(v, target, steps, scheme);
}

inline ValueAndGradient adjoint_gradient_distributed(const VelocityModel& v, const DistributedTarget& target,
                                                     std::size_t steps, Scheme scheme = Scheme::rk4) {
  return adjoint_gradient(v, target, steps, scheme);
}

/// Same gradient through the direct (state-transition) sensitivities and the
/// chain rule: (grad E)_k = sum_q g_q . dN/da_k(x_q).
inline ValueAndGradient direct_gradient(const VelocityModel& v, const Target& target, std::size_t steps,
                                       Scheme scheme = Scheme::rk4) {
  const FlowSolution sol = integrate_flow(v, target.sample_points(), steps, scheme);
  const std::vector<Vec2> images = sol.end_points();
  ValueAndGradient out;
  out.value = target.value(images);
  const std::vector<Vec2> g = target.dual(images);
  const auto sens = coefficient_sensitivity(v, target.sample_points(), steps, scheme);
  out.gradient = VectorXd::Zero(static_cast<Eigen::Index>(v.size()));
  for (std::size_t q = 0; q < g.size(); ++q)
    for (std::size_t k = 0; k < v.size(); ++k) out.gradient[static_cast<Eigen::Index>(k)] += g[q].dot(sens[q][k]);
  return out;
}

/// Preimages under F[v]: the flow of the reversed field -v(x, 1 - t).
inline std::vector<Vec2> inverse_map(const VelocityModel& v, const std::vector<Vec2>& points, std::size_t steps,
                                     Scheme scheme = Scheme::rk4) {
  FlowOptions o;
  o.steps = steps;
  o.scheme = scheme;
  o.reversed = true;
  return integrate(v, points, o).end_points();
}

/// Both sides of |F[v] - F[w]|_inf <= (e^L - 1)/L |v - w|_inf.
struct ContinuityGap {
  double lhs = 0.0;
  double rhs = 0.0;
  double lipschitz = 0.0;
  double sup_difference = 0.0;
};

/// Points of an n x n grid over the bounding box that lie in the closure.
inline std::vector<Vec2> closure_grid(const PolygonalDomain& dom, std::size_t n) {
  if (n < 2) throw ValidationError("closure_grid: need at least 2 points per direction");
  const Rect r = dom.bounding_box();
  std::vector<Vec2> pts;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 x(r.x0 + r.width() * static_cast<double>(i) / static_cast<double>(n - 1),
                   r.y0 + r.height() * static_cast<double>(j) / static_cast<double>(n - 1));
      if (classify_point(dom, x, 1e-12) != PointClass::exterior) pts.push_back(x);
    }
  }
  return pts;
}

/// L and |v - w|_inf are sampled on a dense space-time grid (n x n points,
/// 11 time levels); lhs is measured on the given seeds.
inline ContinuityGap continuity_gap(const VelocityModel& v, const VelocityModel& w, const std::vector<Vec2>& seeds,
                                    std::size_t steps, std::size_t density = 41) {
  ContinuityGap gap;
  const std::vector<Vec2> fv = integrate_flow(v, seeds, steps).end_points();
  const std::vector<Vec2> fw = integrate_flow(w, seeds, steps).end_points();
  for (std::size_t i = 0; i < seeds.size(); ++i) gap.lhs = std::max(gap.lhs, (fv[i] - fw[i]).norm());
  const std::vector<Vec2> grid = closure_grid(v.domain(), density);
  for (int k = 0; k <= 10; ++k) {
    const double t = k / 10.0;
    for (const Vec2& x : grid) {
      Vec2 vv, ww;
      Mat2 g;
      v.evaluate(x, t, vv, &g);
      w.evaluate(x, t, ww, nullptr);
      Eigen::JacobiSVD<Mat2> svd(g);
      gap.lipschitz = std::max(gap.lipschitz, svd.singularValues()[0]);
      gap.sup_difference = std::max(gap.sup_difference, (vv - ww).norm());
    }
  }
  const double factor = gap.lipschitz > 1e-12 ? std::expm1(gap.lipschitz) / gap.lipschitz : 1.0;
  gap.rhs = factor * gap.sup_difference;
  return gap;
}

/// CSV with columns seed_id,t,x1,x2[,logJ]; one row per (seed, time node).
inline void write_flow_csv(std::ostream& out, const FlowSolution& sol) {
  const bool lj = !sol.log_j.empty();
  out << "seed_id,t,x1,x2" << (lj ? ",logJ" : "") << '\n';
  char buf[160];
  for (std::size_t s = 0; s < sol.num_seeds(); ++s) {
    for (std::size_t n = 0; n < sol.times.size(); ++n) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", s, sol.times[n], sol.x[s][n].x(), sol.x[s][n].y());
      out << buf;
      if (lj) {
        std::snprintf(buf, sizeof buf, ",%.17g", sol.log_j[s][n]);
        out << buf;
      }
      out << '\n';
    }
  }
}

}  // namespace regflow

#endif  // REGFLOW_VECTORFLOW_HPP
