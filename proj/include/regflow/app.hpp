#ifndef REGFLOW_APP_HPP
#define REGFLOW_APP_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "regflow/config.hpp"
#include "regflow/regflow.hpp"

namespace regflow {

enum ExitCode { exit_ok = 0, exit_validation = 1, exit_numerical = 2, exit_property = 3 };

/// Everything a run needs, built once from a config.
struct Setup {
  std::shared_ptr<const PolygonalDomain> domain;
  Triangulation tri;
  BasisPtr spatial;
  BasisPtr basis;  // spatial (cm) or space-time (vf)
  std::optional<CurvedMap> curved;
  int gram_degree = 0;
};

namespace app_detail {

inline std::string resolve(const RunConfig& c, const std::string& f) {
  if (f.empty() || f.front() == '/' || c.base_dir.empty()) return f;
  return c.base_dir + "/" + f;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v + 0.0);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << s;
}

inline std::vector<Vec2> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open point file " + path);
  std::vector<Vec2> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a)) continue;
    if (lineno == 1 && a == "x1") continue;  // header
    double x = 0.0, y = 0.0;
    try {
      std::size_t ea = 0, eb = 0;
      if (!(ls >> b)) throw std::invalid_argument("short");
      x = std::stod(a, &ea);
      y = std::stod(b, &eb);
      if (ea != a.size() || eb != b.size()) throw std::invalid_argument("junk");
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected two coordinates");
    }
    pts.emplace_back(x, y);
  }
  if (pts.empty()) throw ValidationError(path + ": no points");
  return pts;
}

inline std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

}  // namespace app_detail

inline Setup build_setup(const RunConfig& c) {
  Setup s;
  if (c.domain.type == "mesh") {
    s.tri = read_mesh_file(app_detail::resolve(c, c.domain.mesh_file));
    Rect bb{s.tri.nodes[0].x(), s.tri.nodes[0].x(), s.tri.nodes[0].y(), s.tri.nodes[0].y()};
    for (const Vec2& p : s.tri.nodes) {
      bb.x0 = std::min(bb.x0, p.x());
      bb.x1 = std::max(bb.x1, p.x());
      bb.y0 = std::min(bb.y0, p.y());
      bb.y1 = std::max(bb.y1, p.y());
    }
    s.domain = std::make_shared<const PolygonalDomain>(PolygonalDomain::rectangle(bb.x0, bb.x1, bb.y0, bb.y1));
    s.tri.validate(s.domain.get());
  } else {
    const auto& r = c.domain.rect;
    s.domain = std::make_shared<const PolygonalDomain>(PolygonalDomain::rectangle(r[0], r[1], r[2], r[3]));
    s.tri = structured_triangulation(Rect{r[0], r[1], r[2], r[3]}, c.domain.grid, c.domain.grid);
  }
  if (c.domain.curved) {
    const CurvedSpec& cs = *c.domain.curved;
    if (c.family != "cm") throw UnsupportedError("curved maps are only supported for compositional maps");
    if (cs.tag == "sine_bulge") {
      s.curved = sine_bulge_map(*s.domain->as_axis_aligned_rectangle(), cs.delta);
    } else {
      Mat2 b;
      b << cs.matrix[0], cs.matrix[1], cs.matrix[2], cs.matrix[3];
      if (!(det2(b) > 0.0)) throw ValidationError("affine curved map must preserve orientation");
      s.curved = affine_curved_map(b, Vec2(cs.offset[0], cs.offset[1]));
    }
  }
  s.spatial = build_tangential_polynomial_basis(s.domain, c.basis.degree, c.basis.normalize);
  s.basis = c.family == "vf" ? tensorize_time(s.spatial, c.basis.temporal_degree) : s.spatial;
  s.gram_degree = 2 * s.spatial->polynomial_degree();
  return s;
}

/// Gram matrix of `tag` on the run's coefficient space.
inline MatrixXd coefficient_gram(const RunConfig& c, const Setup& s, const FormTag& tag) {
  const MatrixXd g = assemble_gram(*s.spatial, tag, s.tri, s.gram_degree).entries;
  return c.family == "vf" ? space_time_gram(g, c.basis.temporal_degree) : g;
}

inline ScalarField make_field(const FieldSpec& f, double mu) {
  const Vec2 shift = mu * Vec2(f.direction[0], f.direction[1]);
  const Vec2 p = Vec2(f.point[0], f.point[1]) + shift;
  const Vec2 n(f.normal[0], f.normal[1]);
  if (f.tag == "gaussian_ridge") return gaussian_ridge(p, n, f.width, f.amplitude);
  if (f.tag == "gaussian_bump") return gaussian_bump(p, f.width, f.amplitude);
  if (f.tag == "smoothed_step") return smoothed_step(p, n, f.width);
  if (f.tag == "constant") return constant_field(f.amplitude);
  return monomial_field(f.powers[0], f.powers[1]);
}

/// Quadrature on the physical domain: the polytope rule, pushed through the
/// curved map when there is one.
inline QuadratureRule physical_quadrature(const Setup& s, int order) {
  QuadratureRule q = quadrature(s.tri, order);
  if (s.curved) {
    for (QuadPoint& p : q) {
      p.weight *= std::abs(det2(s.curved->forward_gradient(p.point)));
      p.point = s.curved->forward(p.point);
    }
  }
  return q;
}

inline std::shared_ptr<DistributedTarget> make_distributed_target(const RunConfig& c, const Setup& s, double mu) {
  std::vector<ScalarField> z;
  for (double zm : c.target.z_mu) z.push_back(make_field(c.target.field, zm));
  for (int d = 0; d <= c.target.z_polynomial_degree; ++d)
    for (int j = 0; j <= d; ++j) z.push_back(monomial_field(d - j, j));
  return std::make_shared<DistributedTarget>(make_field(c.target.field, mu), std::move(z),
                                             physical_quadrature(s, c.target.quad_order));
}

struct RegisterResult {
  OptimizerReport report;
  VectorXd coefficients;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double min_jacobian = 0.0;
  Verdict verdict = Verdict::bijective;
  std::vector<Vec2> grid, images;
};

namespace app_detail {

inline Metric make_metric(const RunConfig& c, const Setup& s) {
  MatrixXd h = coefficient_gram(c, s, FormTag::parse(c.optimizer.metric));
  if (c.optimizer.metric_shift > 0.0) h += c.optimizer.metric_shift * coefficient_gram(c, s, FormTag::l2());
  return Metric(std::move(h));
}

inline OptimizerConfig optimizer_config(const RunConfig& c) {
  OptimizerConfig oc;
  oc.max_iters = c.optimizer.max_iters;
  oc.grad_tol = c.optimizer.grad_tol;
  oc.step0 = c.optimizer.step0;
  if (!c.optimizer.continuation) oc.max_continuations = 0;
  return oc;
}

inline RegistrationProblem make_problem(const RunConfig& c, const Setup& s, const Metric& metric,
                                        std::shared_ptr<const Target> target) {
  RegistrationProblem p;
  if (c.family == "vf") {
    p = make_vf_problem(VelocityModel(s.basis, VectorXd::Zero(s.basis->size())), std::move(target), metric,
                        c.flow.steps, parse_scheme(c.flow.scheme));
  } else {
    p = make_cm_problem(DisplacementModel(s.basis, VectorXd::Zero(s.basis->size()), s.curved), std::move(target),
                        metric, closure_grid(*s.domain, c.optimizer.penalty_grid), c.optimizer.penalty_weight,
                        c.optimizer.eps_j, c.optimizer.check_grid);
  }
  if (c.optimizer.tikhonov > 0.0) {
    p.tikhonov_weight = c.optimizer.tikhonov;
    p.tikhonov_matrix = coefficient_gram(c, s, FormTag::parse(c.optimizer.tikhonov_form));
  }
  return p;
}

inline std::vector<Vec2> apply_map(const RunConfig& c, const Setup& s, const VectorXd& a,
                                   const std::vector<Vec2>& pts) {
  if (c.family == "vf")
    return integrate_flow(VelocityModel(s.basis, a), pts, c.flow.steps, parse_scheme(c.flow.scheme)).end_points();
  const DisplacementModel m(s.basis, a, s.curved);
  return s.curved ? evaluate_cm_curved(m, pts) : evaluate_cm(m, pts);
}

}  // namespace app_detail

/// Registration for target parameter `mu`; no files are written.
inline RegisterResult register_once(const RunConfig& c, const Setup& s, double mu) {
  RegisterResult res;
  const Metric metric = app_detail::make_metric(c, s);
  const OptimizerConfig oc = app_detail::optimizer_config(c);
  VectorXd a = VectorXd::Zero(s.basis->size());
  if (!c.optimizer.initial_file.empty()) {
    std::ifstream in(app_detail::resolve(c, c.optimizer.initial_file));
    a = read_vector(in);
    if (static_cast<std::size_t>(a.size()) != s.basis->size())
      throw SizeError("initial coefficients have " + std::to_string(a.size()) + " entries, basis has " +
                      std::to_string(s.basis->size()));
  }
  const auto checked = [](OptimizerReport r) {
    if (r.iterates.empty()) throw NumericalError("objective evaluation failed at the start point: " + r.message);
    return r;
  };
  if (c.target.type == "distributed") {
    auto target = make_distributed_target(c, s, mu);
    res.report = checked(minimize(app_detail::make_problem(c, s, metric, target), a, oc));
    res.initial_objective = res.report.initial_objective;
    res.final_objective = res.report.final_objective;
  } else {
    const auto src = app_detail::read_points(app_detail::resolve(c, c.target.source_file));
    const auto dst = app_detail::read_points(app_detail::resolve(c, c.target.target_file));
    const WeightMode mode =
        c.target.weight_mode == "doubly_stochastic" ? WeightMode::doubly_stochastic : WeightMode::row_stochastic;
    const auto n0 = static_cast<Eigen::Index>(src.size()), n1 = static_cast<Eigen::Index>(dst.size());
    auto target = std::make_shared<PointwiseTarget>(src, dst, MatrixXd::Constant(n0, n1, 1.0 / static_cast<double>(n1)),
                                                    mode);
    double sigma = 0.0;
    const double sigma_min = c.target.sigma_min > 0.0 ? c.target.sigma_min : 1e-3 * s.domain->diameter();
    for (std::size_t it = 0; it < std::max<std::size_t>(1, c.target.em_outer_iters); ++it) {
      const std::vector<Vec2> imgs = app_detail::apply_map(c, s, a, src);
      if (it == 0) sigma = c.target.sigma_init > 0.0 ? c.target.sigma_init : target->initial_sigma(imgs);
      target->set_weights(target->em_update_weights(imgs, sigma));
      OptimizerReport r = checked(minimize(app_detail::make_problem(c, s, metric, target), a, oc));
      if (it == 0) res.initial_objective = r.initial_objective;
      const std::size_t offset = res.report.iterates.empty() ? 0 : res.report.iterates.back().iteration + 1;
      for (IterateRecord rec : r.iterates) {
        rec.iteration += offset;
        res.report.iterates.push_back(rec);
      }
      res.report.reason = r.reason;
      res.report.continuations += r.continuations;
      res.report.final_penalty_weight = r.final_penalty_weight;
      a = r.final_a;
      res.final_objective = r.final_objective;
      sigma = anneal_sigma(sigma, sigma_min);
    }
    res.report.initial_objective = res.initial_objective;
    res.report.final_objective = res.final_objective;
    res.report.final_a = a;
  }
  res.coefficients = res.report.final_a;
  res.grid = closure_grid(*s.domain, 21);
  if (c.family == "vf") {
    const FlowSolution sol =
        jacobian_logdet(VelocityModel(s.basis, res.coefficients), res.grid, c.flow.steps, parse_scheme(c.flow.scheme));
    res.images = sol.end_points();
    res.min_jacobian = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < res.grid.size(); ++k) res.min_jacobian = std::min(res.min_jacobian, std::exp(sol.end_log_j(k)));
    res.verdict = res.min_jacobian > 1e-6 ? Verdict::bijective : Verdict::inconclusive;
  } else {
    const DisplacementModel m(s.basis, res.coefficients, s.curved);
    const BijectivityReport br =
        bijectivity_check(m, c.optimizer.check_grid, closure_grid(*s.domain, c.optimizer.penalty_grid));
    res.min_jacobian = br.min_jacobian;
    res.verdict = br.verdict;
    res.images = s.curved ? evaluate_cm_curved(m, res.grid) : evaluate_cm(m, res.grid);
    if (s.curved)
      for (Vec2& g : res.grid) g = s.curved->forward(g);
  }
  return res;
}

/// Writes report.csv, coefficients.txt, deformed_grid.csv and summary.json.
inline int run_register(const RunConfig& c, const std::filesystem::path& out_dir, std::optional<double> mu = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const Setup s = build_setup(c);
  const RegisterResult r = register_once(c, s, mu.value_or(c.target.mu));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "report.csv");
    write_report_csv(f, r.report);
  }
  {
    std::ofstream f(out_dir / "coefficients.txt");
    write_vector(f, r.coefficients);
  }
  {
    std::ofstream f(out_dir / "deformed_grid.csv");
    write_deformed_csv(f, r.grid, r.images);
  }
  std::ostringstream js;
  js << "{\n"
     << "  \"initial_objective\": " << app_detail::fmt(r.initial_objective) << ",\n"
     << "  \"final_objective\": " << app_detail::fmt(r.final_objective) << ",\n"
     << "  \"min_jacobian\": " << app_detail::fmt(r.min_jacobian) << ",\n"
     << "  \"bijectivity_verdict\": \"" << to_string(r.verdict) << "\",\n"
     << "  \"termination\": \"" << to_string(r.report.reason) << "\",\n"
     << "  \"wall_time\": " << app_detail::fmt(wall) << "\n}\n";
  app_detail::write_text(out_dir / "summary.json", js.str());
  if (r.report.reason == Termination::numerical_failure) {
    std::cerr << "registration stopped on a numerical failure: " << r.report.message << "\n";
    return exit_numerical;
  }
  return exit_ok;
}

/// Snapshots of optimal coefficients: one line per snapshot in the file, or
/// registrations at each snapshot parameter.
inline std::vector<VectorXd> modal_snapshots(const RunConfig& c, const Setup& s) {
  std::vector<VectorXd> snaps;
  if (!c.modal.snapshot_file.empty()) {
    std::ifstream in(app_detail::resolve(c, c.modal.snapshot_file));
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::vector<double> v;
      double x;
      while (ls >> x) v.push_back(x);
      if (v.empty()) continue;
      if (v.size() != s.basis->size())
        throw SizeError("snapshot has " + std::to_string(v.size()) + " entries, expected " +
                        std::to_string(s.basis->size()));
      snaps.push_back(Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  } else {
    for (double mu : c.modal.snapshot_mu) snaps.push_back(register_once(c, s, mu).coefficients);
  }
  if (snaps.empty()) throw ValidationError("no snapshots");
  return snaps;
}

/// Per form tag: modal_<tag>.csv (m, E_proj, E_obj) and basis_<tag>.txt.
inline int run_modal(const RunConfig& c, const std::filesystem::path& out_dir) {
  const Setup s = build_setup(c);
  std::filesystem::create_directories(out_dir);
  const std::vector<VectorXd> snaps = modal_snapshots(c, s);
  const GramMatrix mass{coefficient_gram(c, s, FormTag::parse(c.modal.mass_form)), FormTag::parse(c.modal.mass_form)};
  const std::size_t n = s.basis->size();
  const std::size_t m_max = c.modal.m_max == 0 ? n : std::min(c.modal.m_max, n);

  // Objective of snapshot k at projected coefficients; only defined when the
  // snapshots come from registrations with the configured target.
  std::function<double(std::size_t, const VectorXd&)> objective;
  std::vector<std::shared_ptr<const Target>> targets;
  if (c.modal.snapshot_file.empty() && c.target.type == "distributed") {
    for (double mu : c.modal.snapshot_mu) targets.push_back(make_distributed_target(c, s, mu));
    objective = [&](std::size_t k, const VectorXd& a) {
      const Target& t = *targets[k];
      return t.value(app_detail::apply_map(c, s, a, t.sample_points()));
    };
  }
  for (const std::string& tag_str : c.modal.forms) {
    const FormTag tag = FormTag::parse(tag_str);
    const GramMatrix a{coefficient_gram(c, s, tag), tag};
    const ModalBasis b = solve_generalized_eig(a, mass, m_max);
    const std::vector<double> ep = projection_error_sweep(snaps, b, m_max);
    std::vector<double> eo(ep.size(), std::numeric_limits<double>::quiet_NaN());
    if (objective) eo = objective_error_sweep(snaps, b, m_max, objective);
    std::ostringstream csv;
    csv << "m,E_proj,E_obj\n";
    for (std::size_t m = 0; m < ep.size(); ++m)
      csv << m << ',' << app_detail::fmt(ep[m]) << ',' << app_detail::fmt(eo[m]) << '\n';
    app_detail::write_text(out_dir / ("modal_" + app_detail::slug(tag.str()) + ".csv"), csv.str());
    std::ofstream bf(out_dir / ("basis_" + app_detail::slug(tag.str()) + ".txt"));
    write_modal_basis(bf, b);
  }
  if (c.modal.gfem_degree >= 0) {
    if (c.family == "vf") throw UnsupportedError("gfem bases are built for spatial coefficient spaces");
    const FormTag tag = FormTag::parse(c.modal.forms.empty() ? "H1semi" : c.modal.forms.front());
    GfemOptions go;
    go.shift = true;
    const ModalBasis g =
        build_gfem_basis({coefficient_gram(c, s, tag), tag}, mass, *s.spatial, s.tri, c.modal.gfem_degree, go);
    std::ofstream bf(out_dir / "basis_gfem.txt");
    write_modal_basis(bf, g);
  }
  return exit_ok;
}

struct CheckResult {
  std::string name;
  double value;
  double tolerance;
  bool passed() const { return value <= tolerance; }
};

/// Property suite on random coefficients drawn from the seed. Writes
/// check.json; returns exit_property when any property fails.
inline int run_check(const RunConfig& c, const std::filesystem::path& out_dir, std::ostream& log = std::cout) {
  RunConfig vc = c;
  vc.family = "vf";
  vc.domain.curved.reset();
  const Setup s = build_setup(vc);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const auto random_vec = [&](std::size_t n, double scale) {
    VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = c.check.zero_coefficients ? 0.0 : scale * unif(rng);
    return v;
  };
  const Scheme scheme = parse_scheme(c.flow.scheme);
  const std::size_t k = c.check.steps;
  const VectorXd a = random_vec(s.basis->size(), c.check.coefficient_scale);
  const VelocityModel v(s.basis, a);
  const std::vector<Vec2> seeds = closure_grid(*s.domain, c.check.seed_grid);
  std::vector<CheckResult> results;

  FlowOptions fo;
  fo.steps = k;
  fo.scheme = scheme;
  fo.gradient = fo.log_jacobian = true;
  const FlowSolution fwd = integrate(v, seeds, fo);
  {
    const std::vector<Vec2> back = inverse_map(v, fwd.end_points(), k, scheme);
    double gap = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) gap = std::max(gap, (back[i] - seeds[i]).cwiseAbs().maxCoeff());
    results.push_back({"flow_round_trip", gap, 1e-6});
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const double j = std::exp(fwd.end_log_j(i));
      worst = std::max(worst, std::abs(det2(fwd.end_gradient(i)) - j) / j);
    }
    results.push_back({"jacobian_consistency", worst, 1e-6});
  }
  {
    const double bump = c.check.zero_coefficients ? 0.0 : 0.1 * c.check.coefficient_scale;
    const VelocityModel w(s.basis, a + random_vec(s.basis->size(), bump));
    const ContinuityGap g = continuity_gap(v, w, seeds, k);
    results.push_back({"continuity_bound", std::max(0.0, g.lhs - g.rhs), 1e-6});
  }
  {
    const auto target = make_distributed_target(vc, s, c.target.mu);
    const std::size_t kg = c.check.gradient_steps;
    const ValueAndGradient adj = adjoint_gradient(v, *target, kg, scheme);
    VectorXd fd(a.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      VectorXd ap = a, am = a;
      ap[i] += h;
      am[i] -= h;
      const double fp = target->value(integrate_flow(v.with_coefficients(ap), target->sample_points(), kg, scheme).end_points());
      const double fm = target->value(integrate_flow(v.with_coefficients(am), target->sample_points(), kg, scheme).end_points());
      fd[i] = (fp - fm) / (2.0 * h);
    }
    const double scale = std::max(fd.norm(), 1e-12);
    results.push_back({"adjoint_gradient", (adj.gradient - fd).norm() / scale, 1e-4});
  }
  {
    const DisplacementModel m(s.spatial, random_vec(s.spatial->size(), c.check.coefficient_scale));
    RunConfig cc = c;
    cc.family = "cm";
    cc.domain.curved.reset();
    const auto target = make_distributed_target(cc, s, c.target.mu);
    RegistrationProblem p = make_cm_problem(m, target, Metric::identity(m.size()),
                                            closure_grid(*s.domain, c.optimizer.penalty_grid), 1.0, 1.5);
    const VectorXd g = objective_and_gradient(p, m.coefficients()).gradient;
    const VectorXd fd = finite_difference_gradient(p, m.coefficients());
    results.push_back({"cm_gradient", (g - fd).norm() / std::max(fd.norm(), 1e-12), 1e-6});
  }

  bool all = true;
  std::ostringstream js;
  js << "{\n  \"checks\": [\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const CheckResult& r = results[i];
    all = all && r.passed();
    js << "    {\"name\": \"" << r.name << "\", \"value\": " << app_detail::fmt(r.value)
       << ", \"tolerance\": " << app_detail::fmt(r.tolerance) << ", \"passed\": " << (r.passed() ? "true" : "false")
       << "}" << (i + 1 < results.size() ? "," : "") << "\n";
    log << (r.passed() ? "ok   " : "FAIL ") << r.name << " " << app_detail::fmt(r.value) << " (tol "
        << app_detail::fmt(r.tolerance) << ")\n";
  }
  js << "  ],\n  \"passed\": " << (all ? "true" : "false") << "\n}\n";
  std::filesystem::create_directories(out_dir);
  app_detail::write_text(out_dir / "check.json", js.str());
  return all ? exit_ok : exit_property;
}

/// Integrates the configured flow for `a` (zero if empty) from a closure grid
/// and writes flow.csv.
inline int flow_eval(const RunConfig& c, const std::filesystem::path& out_dir, const VectorXd& a_in) {
  RunConfig vc = c;
  vc.family = "vf";
  vc.domain.curved.reset();
  const Setup s = build_setup(vc);
  const VectorXd a = a_in.size() == 0 ? VectorXd::Zero(s.basis->size()) : a_in;
  const VelocityModel v(s.basis, a);
  FlowOptions fo;
  fo.steps = c.flow.steps;
  fo.scheme = parse_scheme(c.flow.scheme);
  fo.log_jacobian = true;
  const FlowSolution sol = integrate(v, closure_grid(*s.domain, c.check.seed_grid), fo);
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "flow.csv");
  write_flow_csv(f, sol);
  return exit_ok;
}

}  // namespace regflow

#endif  // REGFLOW_APP_HPP
