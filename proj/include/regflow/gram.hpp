#ifndef REGFLOW_GRAM_HPP
#define REGFLOW_GRAM_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "regflow/basis.hpp"
#include "regflow/quadrature.hpp"

namespace regflow {

enum class FormKind { l2, h1_semi, elasticity, h2_semi };

/// Bilinear form selector. `youngs` and `poisson` only matter for elasticity.
struct FormTag {
  FormKind kind = FormKind::l2;
  double youngs = 1.0;
  double poisson = 1.0 / 3.0;

  static FormTag l2() { return {FormKind::l2}; }
  static FormTag h1_semi() { return {FormKind::h1_semi}; }
  static FormTag h2_semi() { return {FormKind::h2_semi}; }
  static FormTag elasticity(double e, double nu) { return {FormKind::elasticity, e, nu}; }

  std::string str() const {
    switch (kind) {
      case FormKind::l2: return "L2";
      case FormKind::h1_semi: return "H1semi";
      case FormKind::h2_semi: return "H2semi";
      case FormKind::elasticity: {
        char buf[96];
        std::snprintf(buf, sizeof buf, "elasticity(%.17g,%.17g)", youngs, poisson);
        return buf;
      }
    }
    return "?";
  }

  static FormTag parse(const std::string& s) {
    if (s == "L2") return l2();
    if (s == "H1semi") return h1_semi();
    if (s == "H2semi") return h2_semi();
    double e = 0.0, nu = 0.0;
    if (std::sscanf(s.c_str(), "elasticity(%lf,%lf)", &e, &nu) == 2) return elasticity(e, nu);
    throw ValidationError("unknown form tag '" + s + "'");
  }

  bool operator==(const FormTag& o) const {
    return kind == o.kind && (kind != FormKind::elasticity || (youngs == o.youngs && poisson == o.poisson));
  }
};

struct GramMatrix {
  MatrixXd entries;
  FormTag form;

  std::size_t size() const { return static_cast<std::size_t>(entries.rows()); }
};

/// The two coefficients multiplying the symmetric-gradient and divergence
/// terms of the elasticity form: E nu / ((1 + nu)(1 - 2 nu)) and E / (2 (1 + nu)).
inline std::pair<double, double> elasticity_coefficients(double e, double nu) {
  if (!(e > 0.0)) throw ValidationError("elasticity: Young's modulus must be positive");
  if (nu == 0.5) throw NumericalError("elasticity: nu = 0.5 makes the Lame coefficient singular");
  if (!(nu > -1.0 && nu < 0.5)) throw ValidationError("elasticity: nu must lie in (-1, 0.5)");
  return {e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu))};
}

/// Assembles the Gram matrix of a spatial basis for the requested form.
///
/// Every form is written as G = F^T F where the rows of F collect
/// sqrt(w_q)-weighted integrand features at each quadrature node, so the
/// result is symmetric positive semi-definite by construction. `quad_order`
/// is the polynomial exactness degree of the rule on every triangle; orders
/// above 5 use collapsed Gauss products.
///
/// Elasticity: int c1 grad_s u : grad_s v + c2 (div u)(div v) with (c1, c2)
/// from elasticity_coefficients(). H2 semi-norm: sum over the multi-indices
/// (2,0), (1,1), (0,2) of int D^a u . D^a v.
inline GramMatrix assemble_gram(const BasisSet& basis, const FormTag& form, const Triangulation& tri,
                                int quad_order) {
  if (basis.kind() != BasisKind::spatial) throw UnsupportedError("assemble_gram: space-time basis");
  if (form.kind == FormKind::h2_semi && !basis.has_hessian())
    throw UnsupportedError("assemble_gram: H2 semi-norm needs second derivatives");
  double c_sym = 0.0, c_div = 0.0;
  if (form.kind == FormKind::elasticity) std::tie(c_sym, c_div) = elasticity_coefficients(form.youngs, form.poisson);

  const QuadratureRule rule = quadrature_exact_to(tri, quad_order);
  const std::size_t m = basis.size();
  int rows_per_point = 0;
  switch (form.kind) {
    case FormKind::l2: rows_per_point = 2; break;
    case FormKind::h1_semi: rows_per_point = 4; break;
    case FormKind::elasticity: rows_per_point = 4; break;
    case FormKind::h2_semi: rows_per_point = 6; break;
  }
  MatrixXd features(static_cast<Eigen::Index>(rule.size()) * rows_per_point, static_cast<Eigen::Index>(m));
  std::vector<Vec2> vals;
  std::vector<Mat2> grads;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const double sw = std::sqrt(rule[q].weight);
    const Eigen::Index r0 = static_cast<Eigen::Index>(q) * rows_per_point;
    basis.eval_all(rule[q].point, 0.0, vals, form.kind == FormKind::l2 ? nullptr : &grads);
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::Index c = static_cast<Eigen::Index>(i);
      switch (form.kind) {
        case FormKind::l2:
          features(r0, c) = sw * vals[i].x();
          features(r0 + 1, c) = sw * vals[i].y();
          break;
        case FormKind::h1_semi:
          features(r0, c) = sw * grads[i](0, 0);
          features(r0 + 1, c) = sw * grads[i](0, 1);
          features(r0 + 2, c) = sw * grads[i](1, 0);
          features(r0 + 3, c) = sw * grads[i](1, 1);
          break;
        case FormKind::elasticity: {
          const Mat2& g = grads[i];
          const double s1 = std::sqrt(c_sym) * sw, s2 = std::sqrt(c_div) * sw;
          features(r0, c) = s1 * g(0, 0);
          features(r0 + 1, c) = s1 * g(1, 1);
          features(r0 + 2, c) = s1 * std::sqrt(2.0) * 0.5 * (g(0, 1) + g(1, 0));
          features(r0 + 3, c) = s2 * (g(0, 0) + g(1, 1));
          break;
        }
        case FormKind::h2_semi: {
          const Hessian2 h = basis.eval_hessian(i, rule[q].point);
          for (int a = 0; a < 3; ++a) {
            features(r0 + 2 * a, c) = sw * h[static_cast<std::size_t>(a)].x();
            features(r0 + 2 * a + 1, c) = sw * h[static_cast<std::size_t>(a)].y();
          }
          break;
        }
      }
    }
  }
  MatrixXd g = MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  g.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return {g, form};
}

/// Metric on a space-time coefficient space (index k * Ms + i) from a spatial
/// Gram matrix: G_t kron G_s with G_t the mass matrix of the shifted Legendre
/// polynomials on [0, 1], diag(1 / (2k + 1)).
inline MatrixXd space_time_gram(const MatrixXd& spatial, int temporal_degree) {
  if (temporal_degree < 0) throw ValidationError("temporal degree must be non-negative");
  const Eigen::Index ms = spatial.rows();
  MatrixXd g = MatrixXd::Zero(ms * (temporal_degree + 1), ms * (temporal_degree + 1));
  for (int k = 0; k <= temporal_degree; ++k) g.block(k * ms, k * ms, ms, ms) = spatial / (2.0 * k + 1.0);
  return g;
}

// Plain-text symmetric matrix: one row per line, entries printed with %.17g.
inline void write_matrix(std::ostream& out, const MatrixXd& a) {
  char buf[32];
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

inline MatrixXd read_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  MatrixXd a(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != static_cast<std::size_t>(a.cols())) throw ValidationError("ragged matrix file");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return a;
}

inline void write_matrix_file(const std::string& path, const MatrixXd& a) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_matrix(out, a);
}

}  // namespace regflow

#endif  // REGFLOW_GRAM_HPP
