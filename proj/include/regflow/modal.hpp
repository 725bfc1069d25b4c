#ifndef REGFLOW_MODAL_HPP
#define REGFLOW_MODAL_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "regflow/basis.hpp"
#include "regflow/gram.hpp"
#include "regflow/optimizer.hpp"
#include "regflow/quadrature.hpp"

namespace regflow {

/// N x m reduced basis with M-orthonormal columns. `eigenvalues` is empty for
/// gfem bases.
struct ModalBasis {
  MatrixXd w;
  std::vector<double> eigenvalues;
  std::shared_ptr<const MatrixXd> m_matrix;
  std::shared_ptr<const MatrixXd> a_matrix;
  FormTag form;

  std::size_t full_size() const { return static_cast<std::size_t>(w.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(w.cols()); }
  bool has_eigenvalues() const { return !eigenvalues.empty(); }
};

namespace detail {

inline void fix_signs(MatrixXd& w) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    Eigen::Index imax = 0;
    w.col(j).cwiseAbs().maxCoeff(&imax);
    if (w(imax, j) < 0.0) w.col(j) *= -1.0;
  }
}

inline void check_square(const MatrixXd& a, const char* name) {
  if (a.rows() != a.cols()) throw SizeError(std::string(name) + " must be square");
}

}  // namespace detail

/// Lowest m eigenpairs of A phi = lambda M phi, ascending, M-orthonormal.
inline ModalBasis solve_generalized_eig(const GramMatrix& a, const GramMatrix& m, std::size_t count) {
  detail::check_square(a.entries, "A");
  detail::check_square(m.entries, "M");
  if (a.size() != m.size()) throw SizeError("A and M differ in size");
  if (count > a.size()) throw SizeError("requested more modes than the space dimension");
  Eigen::LLT<MatrixXd> llt(m.entries);
  if (llt.info() != Eigen::Success) throw DecompositionError("M is not positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(a.entries, m.entries, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw DecompositionError("generalized eigensolver failed");
  ModalBasis out;
  const auto n = static_cast<Eigen::Index>(count);
  out.w = es.eigenvectors().leftCols(n);
  detail::fix_signs(out.w);
  out.eigenvalues.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    double lam = es.eigenvalues()[static_cast<Eigen::Index>(i)];
    if (lam < -1e-10) throw NumericalError("A has a negative eigenvalue " + std::to_string(lam));
    out.eigenvalues[i] = lam;
  }
  out.m_matrix = std::make_shared<const MatrixXd>(m.entries);
  out.a_matrix = std::make_shared<const MatrixXd>(a.entries);
  out.form = a.form;
  return out;
}

/// First m columns; the nested sub-basis.
inline ModalBasis truncate(const ModalBasis& b, std::size_t m) {
  if (m > b.size()) throw SizeError("cannot truncate to more columns than available");
  ModalBasis out = b;
  out.w = b.w.leftCols(static_cast<Eigen::Index>(m));
  if (b.has_eigenvalues()) out.eigenvalues.resize(m);
  return out;
}

struct Projection {
  VectorXd coefficients;
  double residual_m_norm = 0.0;
};

inline double m_norm(const MatrixXd& m, const VectorXd& u) { return std::sqrt(std::max(0.0, u.dot(m * u))); }

inline Projection project(const ModalBasis& b, const VectorXd& u) {
  if (static_cast<std::size_t>(u.size()) != b.full_size()) throw SizeError("vector size does not match the basis");
  const MatrixXd& m = *b.m_matrix;
  Projection p;
  p.coefficients = b.w.transpose() * (m * u);
  p.residual_m_norm = m_norm(m, u - b.w * p.coefficients);
  return p;
}

/// E_m for m = 0..m_max using the leading columns of `b`.
inline std::vector<double> projection_error_sweep(const std::vector<VectorXd>& snapshots, const ModalBasis& b,
                                                  std::size_t m_max) {
  if (m_max > b.size()) throw SizeError("m_max exceeds the basis size");
  const MatrixXd& m = *b.m_matrix;
  std::vector<double> norms;
  std::vector<VectorXd> coeffs;
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    if (static_cast<std::size_t>(snapshots[s].size()) != b.full_size()) throw SizeError("snapshot size mismatch");
    const double nrm = m_norm(m, snapshots[s]);
    if (!(nrm > 0.0)) throw NumericalError("snapshot " + std::to_string(s) + " has zero M-norm");
    norms.push_back(nrm);
    coeffs.push_back(b.w.transpose() * (m * snapshots[s]));
  }
  std::vector<double> out(m_max + 1, 0.0);
  parallel_for(m_max + 1, [&](std::size_t k) {
    double worst = 0.0;
    const auto kk = static_cast<Eigen::Index>(k);
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
      const VectorXd r = snapshots[s] - b.w.leftCols(kk) * coeffs[s].head(kk);
      worst = std::max(worst, m_norm(m, r) / norms[s]);
    }
    out[k] = worst;
  });
  return out;
}

/// max over snapshots of target(P_W u), m = 0..m_max.
inline std::vector<double> objective_error_sweep(const std::vector<VectorXd>& snapshots, const ModalBasis& b,
                                                 std::size_t m_max,
                                                 const std::function<double(std::size_t, const VectorXd&)>& target) {
  if (m_max > b.size()) throw SizeError("m_max exceeds the basis size");
  const MatrixXd& m = *b.m_matrix;
  std::vector<VectorXd> coeffs;
  for (const VectorXd& u : snapshots) {
    if (static_cast<std::size_t>(u.size()) != b.full_size()) throw SizeError("snapshot size mismatch");
    coeffs.push_back(b.w.transpose() * (m * u));
  }
  std::vector<double> out(m_max + 1, 0.0);
  for (std::size_t k = 0; k <= m_max; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < snapshots.size(); ++s)
      worst = std::max(worst, target(s, b.w.leftCols(kk) * coeffs[s].head(kk)));
    out[k] = snapshots.empty() ? 0.0 : worst;
  }
  return out;
}

struct RegularizedSolution {
  VectorXd u;  // full-space vector W a
  double value = 0.0;
  OptimizerReport report;
};

/// min over a of f(W a) + xi |W a|_A^2, by preconditioned descent in the
/// metric W^T (M + xi A) W started from a = 0.
inline RegularizedSolution minimize_regularized(const ObjectiveFn& f, double xi, const MatrixXd& a_mat,
                                                const MatrixXd& m_mat, const MatrixXd& w, double tol = 1e-12,
                                                std::size_t max_iters = 10000) {
  RegularizedSolution out;
  RegistrationProblem p;
  p.metric = Metric(w.transpose() * (m_mat + xi * a_mat) * w);
  p.data = [&f, &w](const VectorXd& a) {
    ValueAndGradient full = f(w * a);
    return ValueAndGradient{full.value, w.transpose() * full.gradient};
  };
  p.tikhonov_weight = xi;
  p.tikhonov_matrix = w.transpose() * a_mat * w;
  OptimizerConfig cfg;
  cfg.grad_tol = tol;
  cfg.max_iters = max_iters;
  out.report = minimize(p, VectorXd::Zero(w.cols()), cfg);
  out.u = w * out.report.final_a;
  out.value = out.report.final_objective;
  return out;
}

struct EigenBoundReport {
  double lhs_residual = 0.0;  // |P_W^perp u*|_M
  double bound1 = 0.0;        // L* / (xi lambda_{m+1})
  double lhs_gap = 0.0;       // E_m - E
  double bound2 = 0.0;        // L*^2 / (xi lambda_{m+1})
  double full_minimum = 0.0;
  double reduced_minimum = 0.0;
  bool holds() const { return lhs_residual <= bound1 && lhs_gap <= bound2; }
};

/// Truncation bounds for the first m columns of `b`, which must carry at least
/// m + 1 eigenvalues. `u_star` is the full-space minimizer; the reduced
/// minimum is computed by minimize_regularized.
inline EigenBoundReport eigen_bound_report(const ObjectiveFn& f, double xi, const VectorXd& u_star,
                                           const ModalBasis& b, std::size_t m, double l_star) {
  if (!(xi > 0.0)) throw ValidationError("xi must be positive");
  if (!b.has_eigenvalues() || b.eigenvalues.size() < m + 1)
    throw SizeError("the bound needs lambda_{m+1}: compute m + 1 modes");
  const MatrixXd& mm = *b.m_matrix;
  const MatrixXd& aa = *b.a_matrix;
  EigenBoundReport r;
  const ModalBasis wm = truncate(b, m);
  r.lhs_residual = project(wm, u_star).residual_m_norm;
  const double lam = b.eigenvalues[m];
  const double inf = std::numeric_limits<double>::infinity();
  r.bound1 = lam > 0.0 ? l_star / (xi * lam) : inf;
  r.bound2 = lam > 0.0 ? l_star * l_star / (xi * lam) : inf;
  r.full_minimum = f(u_star).value + xi * u_star.dot(aa * u_star);
  r.reduced_minimum = m == 0 ? f(VectorXd::Zero(u_star.size())).value
                             : minimize_regularized(f, xi, aa, mm, wm.w).value;
  r.lhs_gap = r.reduced_minimum - r.full_minimum;
  return r;
}

/// Component-wise monomial sources of total degree <= p: (x^i y^j) e_c.
inline std::vector<std::function<Vec2(const Vec2&)>> polynomial_sources(int p) {
  std::vector<std::function<Vec2(const Vec2&)>> out;
  for (int deg = 0; deg <= p; ++deg)
    for (int j = 0; j <= deg; ++j)
      for (int c = 0; c < 2; ++c) {
        const int i = deg - j;
        out.push_back([i, j, c](const Vec2& x) {
          Vec2 v = Vec2::Zero();
          v[c] = std::pow(x.x(), i) * std::pow(x.y(), j);
          return v;
        });
      }
  return out;
}

/// M-orthonormal basis of span(U), dropping directions whose M-weighted
/// singular value is below rel_cut times the largest.
inline MatrixXd m_orthonormalize(const MatrixXd& u, const MatrixXd& m, double rel_cut = 1e-10) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw DecompositionError("M is not positive definite");
  const MatrixXd y = llt.matrixU() * u;  // M = U^T U
  Eigen::JacobiSVD<MatrixXd> svd(y, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index keep = 0;
  const double smax = s.size() > 0 ? s[0] : 0.0;
  while (keep < s.size() && smax > 0.0 && s[keep] >= rel_cut * smax) ++keep;
  MatrixXd q = svd.matrixU().leftCols(keep);
  MatrixXd w = llt.matrixU().solve(q);
  detail::fix_signs(w);
  return w;
}

struct GfemOptions {
  bool include_boundary = true;
  bool shift = false;  // add 1e-10 trace(A)/N * M when A is only semi-definite
  int quad_degree = -1;  // -1: exact for the basis times a degree-p source
  int boundary_points = 12;
};

/// gfem space: solutions of A u = b(f, g) for vector monomial sources f
/// (volume) and g (boundary) of total degree <= p, M-orthonormalized.
inline ModalBasis build_gfem_basis(const GramMatrix& a, const GramMatrix& m, const BasisSet& basis,
                                   const Triangulation& tri, int p, const GfemOptions& opt = {}) {
  if (basis.kind() != BasisKind::spatial) throw UnsupportedError("gfem bases are built from spatial bases");
  if (p < 0) throw ValidationError("source degree must be nonnegative");
  const std::size_t n = basis.size();
  if (a.size() != n || m.size() != n) throw SizeError("Gram matrices do not match the basis size");
  MatrixXd amat = a.entries;
  if (opt.shift) amat += (1e-10 * amat.trace() / static_cast<double>(n)) * m.entries;
  Eigen::LLT<MatrixXd> llt(amat);
  if (llt.info() != Eigen::Success) throw DecompositionError("A is singular; enable the shift");

  const auto sources = polynomial_sources(p);
  const int bdeg = basis.polynomial_degree();
  const int qdeg = opt.quad_degree > 0 ? opt.quad_degree : (bdeg >= 0 ? bdeg + p : 10);
  const QuadratureRule vol = quadrature_exact_to(tri, qdeg);
  const auto bnd = boundary_quadrature(*basis.domain(), opt.boundary_points);
  const std::size_t ns = sources.size();
  const std::size_t cols = opt.include_boundary ? 2 * ns : ns;
  MatrixXd rhs = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  std::vector<Vec2> vals;
  for (const QuadPoint& q : vol) {
    basis.eval_all(q.point, 0.0, vals, nullptr);
    for (std::size_t s = 0; s < ns; ++s) {
      const Vec2 f = sources[s](q.point);
      for (std::size_t i = 0; i < n; ++i)
        rhs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) += q.weight * f.dot(vals[i]);
    }
  }
  if (opt.include_boundary) {
    for (const BoundaryQuadPoint& q : bnd) {
      basis.eval_all(q.point, 0.0, vals, nullptr);
      for (std::size_t s = 0; s < ns; ++s) {
        const Vec2 g = sources[s](q.point);
        for (std::size_t i = 0; i < n; ++i)
          rhs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ns + s)) += q.weight * g.dot(vals[i]);
      }
    }
  }
  const MatrixXd sol = llt.solve(rhs);
  ModalBasis out;
  out.w = m_orthonormalize(sol, m.entries);
  out.m_matrix = std::make_shared<const MatrixXd>(m.entries);
  out.a_matrix = std::make_shared<const MatrixXd>(a.entries);
  out.form = a.form;
  return out;
}

/// Text form: `N m form_tag`, an eigenvalue line (`none` for gfem bases),
/// then W row-major.
inline void write_modal_basis(std::ostream& out, const ModalBasis& b) {
  out << b.full_size() << ' ' << b.size() << ' ' << b.form.str() << '\n';
  char buf[32];
  if (b.has_eigenvalues()) {
    for (std::size_t i = 0; i < b.eigenvalues.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", b.eigenvalues[i] + 0.0);
      out << (i ? " " : "") << buf;
    }
  } else {
    out << "none";
  }
  out << '\n';
  for (Eigen::Index r = 0; r < b.w.rows(); ++r) {
    for (Eigen::Index c = 0; c < b.w.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", b.w(r, c) + 0.0);
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

/// Reads W, eigenvalues and the form tag; the Gram handles stay empty.
inline ModalBasis read_modal_basis(std::istream& in) {
  ModalBasis b;
  std::size_t n = 0, m = 0;
  std::string tag;
  if (!(in >> n >> m >> tag)) throw ValidationError("modal basis: bad header");
  b.form = FormTag::parse(tag);
  std::string first;
  if (!(in >> first)) throw ValidationError("modal basis: missing eigenvalue line");
  if (first != "none") {
    b.eigenvalues.push_back(std::stod(first));
    for (std::size_t i = 1; i < m; ++i) {
      double v;
      if (!(in >> v)) throw ValidationError("modal basis: truncated eigenvalue line");
      b.eigenvalues.push_back(v);
    }
  }
  b.w.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index r = 0; r < b.w.rows(); ++r)
    for (Eigen::Index c = 0; c < b.w.cols(); ++c)
      if (!(in >> b.w(r, c))) throw ValidationError("modal basis: truncated matrix");
  return b;
}

}  // namespace regflow

#endif  // REGFLOW_MODAL_HPP
