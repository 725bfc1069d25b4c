#ifndef REGFLOW_OPTIMIZER_HPP
#define REGFLOW_OPTIMIZER_HPP

#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "regflow/compositional.hpp"
#include "regflow/vectorflow.hpp"

namespace regflow {

using ObjectiveFn = std::function<ValueAndGradient(const VectorXd&)>;

/// Metric used to precondition the gradient; factorized once.
class Metric {
 public:
  Metric() = default;
  explicit Metric(MatrixXd h) : h_(std::move(h)) {
    if (h_.rows() != h_.cols()) throw SizeError("metric must be square");
    llt_.compute(h_);
    if (llt_.info() != Eigen::Success) throw DecompositionError("metric is not positive definite");
  }

  static Metric identity(std::size_t n) { return Metric(MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))); }

  const MatrixXd& matrix() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(h_.rows()); }
  VectorXd solve(const VectorXd& g) const { return llt_.solve(g); }

 private:
  MatrixXd h_;
  Eigen::LLT<MatrixXd> llt_;
};

/// objective(a) = E(a) + lambda a^T A a + lambda_pen f_pen(a).
///
/// `data` supplies E and its gradient (adjoint for vector flows, chain rule for
/// compositional maps). `penalty` and `feasible` are only set for compositional
/// maps; `feasible` drives the penalty-weight continuation in minimize().
struct RegistrationProblem {
  ObjectiveFn data;
  ObjectiveFn penalty;
  double penalty_weight = 0.0;
  double tikhonov_weight = 0.0;
  MatrixXd tikhonov_matrix;
  Metric metric;
  std::function<Verdict(const VectorXd&)> feasibility;

  std::size_t size() const { return metric.size(); }
};

inline ValueAndGradient objective_and_gradient(const RegistrationProblem& p, const VectorXd& a) {
  if (static_cast<std::size_t>(a.size()) != p.size()) throw SizeError("coefficient vector size mismatch");
  ValueAndGradient out;
  if (p.data) {
    out = p.data(a);
  } else {
    out.gradient = VectorXd::Zero(a.size());
  }
  if (p.tikhonov_weight != 0.0) {
    const VectorXd aa = p.tikhonov_matrix * a;
    out.value += p.tikhonov_weight * a.dot(aa);
    out.gradient += 2.0 * p.tikhonov_weight * aa;
  }
  if (p.penalty && p.penalty_weight != 0.0) {
    const ValueAndGradient pen = p.penalty(a);
    out.value += p.penalty_weight * pen.value;
    out.gradient += p.penalty_weight * pen.gradient;
  }
  return out;
}

/// a - gamma H^{-1} grad through the cached factorization.
inline VectorXd preconditioned_step(const RegistrationProblem& p, const VectorXd& a, const VectorXd& grad,
                                    double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("step size must be positive");
  return a - gamma * p.metric.solve(grad);
}

/// Central differences of the full objective, one coordinate at a time.
inline VectorXd finite_difference_gradient(const RegistrationProblem& p, const VectorXd& a, double h = 1e-5) {
  VectorXd g(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    VectorXd ap = a, am = a;
    ap[i] += h;
    am[i] -= h;
    g[i] = (objective_and_gradient(p, ap).value - objective_and_gradient(p, am).value) / (2.0 * h);
  }
  return g;
}

struct OptimizerConfig {
  std::size_t max_iters = 200;
  double grad_tol = 1e-8;
  double step0 = 1.0;
  double rho = 0.5;
  double armijo_c = 1e-4;
  double min_step = 1e-14;
  std::size_t max_continuations = 20;
  std::function<void(std::size_t, double)> on_iteration;  // optional progress hook
};

enum class Termination { grad_tol, max_iters, line_search_failure, numerical_failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::grad_tol: return "grad_tol";
    case Termination::max_iters: return "max_iters";
    case Termination::line_search_failure: return "line_search_failure";
    case Termination::numerical_failure: return "numerical_failure";
  }
  return "?";
}

struct IterateRecord {
  std::size_t iteration;
  double objective;
  double grad_norm;  // sqrt(g^T H^{-1} g)
  double step;       // accepted step, 0 for the initial record
};

struct OptimizerReport {
  std::vector<IterateRecord> iterates;
  VectorXd final_a;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_penalty_weight = 0.0;
  std::size_t continuations = 0;
  Termination reason = Termination::max_iters;
  std::string message;
};

namespace detail {

// One preconditioned descent run at fixed penalty weight, continuing the
// iteration count from `iter` and stopping at `iter_end`; appends records.
inline Termination descend(const RegistrationProblem& p, VectorXd& a, const OptimizerConfig& cfg,
                           OptimizerReport& rep, std::size_t& iter, std::size_t iter_end) {
  ValueAndGradient cur;
  try {
    cur = objective_and_gradient(p, a);
  } catch (const NumericalError& e) {
    rep.message = e.what();
    return Termination::numerical_failure;
  }
  VectorXd dir = p.metric.solve(cur.gradient);
  double gnorm = std::sqrt(std::max(0.0, cur.gradient.dot(dir)));
  if (rep.iterates.empty()) rep.initial_objective = cur.value;
  rep.iterates.push_back({iter, cur.value, gnorm, 0.0});
  while (true) {
    if (gnorm <= cfg.grad_tol) return Termination::grad_tol;
    if (iter >= iter_end) return Termination::max_iters;
    const double slope = cur.gradient.dot(dir);
    double gamma = cfg.step0;
    bool accepted = false;
    ValueAndGradient next;
    VectorXd trial;
    while (gamma >= cfg.min_step) {
      trial = a - gamma * dir;
      bool ok = true;
      try {
        next = objective_and_gradient(p, trial);
      } catch (const NumericalError&) {
        ok = false;  // e.g. a boundary leak at an overly long step: shrink
      }
      if (ok && std::isfinite(next.value) && next.value <= cur.value - cfg.armijo_c * gamma * slope) {
        accepted = true;
        break;
      }
      gamma *= cfg.rho;
    }
    if (!accepted) return Termination::line_search_failure;
    a = trial;
    cur = next;
    dir = p.metric.solve(cur.gradient);
    gnorm = std::sqrt(std::max(0.0, cur.gradient.dot(dir)));
    ++iter;
    rep.iterates.push_back({iter, cur.value, gnorm, gamma});
    if (cfg.on_iteration) cfg.on_iteration(iter, cur.value);
  }
}

}  // namespace detail

/// Metric-preconditioned gradient descent with Armijo backtracking along
/// d = H^{-1} grad. When the problem has a feasibility oracle, the penalty
/// weight is doubled and descent restarts from the incumbent for as long as
/// the incumbent is not certified bijective.
inline OptimizerReport minimize(RegistrationProblem p, const VectorXd& a0, const OptimizerConfig& cfg = {}) {
  if (static_cast<std::size_t>(a0.size()) != p.size()) throw SizeError("initial coefficients size mismatch");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0) || !(cfg.armijo_c > 0.0 && cfg.armijo_c < 1.0) || !(cfg.step0 > 0.0))
    throw ValidationError("invalid line-search configuration");
  OptimizerReport rep;
  VectorXd a = a0;
  std::size_t iter = 0;
  rep.reason = detail::descend(p, a, cfg, rep, iter, cfg.max_iters);
  if (p.feasibility && p.penalty) {
    while (rep.reason != Termination::numerical_failure && rep.continuations < cfg.max_continuations &&
           p.feasibility(a) != Verdict::bijective) {
      p.penalty_weight = p.penalty_weight > 0.0 ? 2.0 * p.penalty_weight : 1.0;
      ++rep.continuations;
      // The objective changes with the weight, so the iteration budget restarts.
      rep.reason = detail::descend(p, a, cfg, rep, iter, iter + cfg.max_iters);
    }
  }
  rep.final_a = a;
  // a failure at the very first evaluation leaves no record
  if (rep.iterates.empty()) rep.initial_objective = std::numeric_limits<double>::quiet_NaN();
  rep.final_objective = rep.iterates.empty() ? rep.initial_objective : rep.iterates.back().objective;
  rep.final_penalty_weight = p.penalty_weight;
  return rep;
}

/// CSV `iter,objective,grad_norm,step`.
inline void write_report_csv(std::ostream& out, const OptimizerReport& rep) {
  out << "iter,objective,grad_norm,step\n";
  char buf[128];
  for (const IterateRecord& r : rep.iterates) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.iteration, r.objective, r.grad_norm, r.step);
    out << buf;
  }
}

inline void write_vector(std::ostream& out, const VectorXd& v) {
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v[i]);
    out << buf;
  }
}

inline VectorXd read_vector(std::istream& in) {
  std::vector<double> vals;
  double x;
  while (in >> x) vals.push_back(x);
  if (!in.eof()) throw ValidationError("malformed vector file");
  return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// Problem for a vector-flow map: E by the adjoint method on K steps.
inline RegistrationProblem make_vf_problem(const VelocityModel& model, std::shared_ptr<const Target> target,
                                           Metric metric, std::size_t steps, Scheme scheme = Scheme::rk4) {
  RegistrationProblem p;
  p.metric = std::move(metric);
  if (p.metric.size() != model.size()) throw SizeError("metric size does not match the basis");
  p.data = [model, target, steps, scheme](const VectorXd& a) {
    return adjoint_gradient(model.with_coefficients(a), *target, steps, scheme);
  };
  return p;
}

/// Problem for a compositional map with the Jacobian penalty evaluated at
/// `penalty_points` and bijectivity checked on a grid plus those points.
inline RegistrationProblem make_cm_problem(const DisplacementModel& model, std::shared_ptr<const Target> target,
                                           Metric metric, std::vector<Vec2> penalty_points, double penalty_weight,
                                           double eps_j = 0.01, std::size_t check_density = 101) {
  RegistrationProblem p;
  p.metric = std::move(metric);
  if (p.metric.size() != model.size()) throw SizeError("metric size does not match the basis");
  p.data = [model, target](const VectorXd& a) { return cm_target_gradient(model.with_coefficients(a), *target); };
  auto pts = std::make_shared<const std::vector<Vec2>>(std::move(penalty_points));
  p.penalty = [model, pts, eps_j](const VectorXd& a) { return penalty(model.with_coefficients(a), *pts, eps_j); };
  p.penalty_weight = penalty_weight;
  p.feasibility = [model, pts, check_density](const VectorXd& a) {
    return bijectivity_check(model.with_coefficients(a), check_density, *pts).verdict;
  };
  return p;
}

}  // namespace regflow

#endif  // REGFLOW_OPTIMIZER_HPP
