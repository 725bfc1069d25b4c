#ifndef REGFLOW_CONFIG_HPP
#define REGFLOW_CONFIG_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regflow/gram.hpp"

namespace regflow {

using Json = nlohmann::ordered_json;

struct FieldSpec {
  std::string tag = "gaussian_ridge";  // gaussian_ridge | gaussian_bump | smoothed_step | constant | monomial
  std::array<double, 2> point{0.35, 0.5};
  std::array<double, 2> normal{1.0, 0.0};
  double width = 0.1;
  double amplitude = 1.0;
  std::array<int, 2> powers{0, 0};
  // The field at parameter mu is the base field translated by mu * direction.
  std::array<double, 2> direction{1.0, 0.0};
};

struct CurvedSpec {
  std::string tag = "sine_bulge";  // sine_bulge | affine
  double delta = 0.0;
  std::array<double, 4> matrix{1.0, 0.0, 0.0, 1.0};
  std::array<double, 2> offset{0.0, 0.0};
};

struct DomainSpec {
  std::string type = "rectangle";  // rectangle | mesh
  std::array<double, 4> rect{0.0, 1.0, 0.0, 1.0};  // x0 x1 y0 y1
  std::string mesh_file;
  std::size_t grid = 16;  // structured triangulation used for quadrature
  std::optional<CurvedSpec> curved;
};

struct BasisSpec {
  int degree = 2;
  int temporal_degree = 0;
  bool normalize = true;
};

struct TargetSpec {
  std::string type = "distributed";  // distributed | pointwise
  FieldSpec field;
  double mu = 0.0;
  std::vector<double> z_mu{0.0};
  int z_polynomial_degree = -1;  // >= 0 adds monomials of total degree <= this to Z_N
  int quad_order = 5;
  std::string source_file;
  std::string target_file;
  std::size_t em_outer_iters = 5;
  double sigma_init = 0.0;  // 0: mean distance between initial images and target points
  double sigma_min = 0.0;  // 0: 1e-3 times the domain diameter
  std::string weight_mode = "row_stochastic";  // row_stochastic | doubly_stochastic
};

struct FlowSpec {
  std::size_t steps = 100;
  std::string scheme = "rk4";
};

struct OptimizerSpec {
  std::size_t max_iters = 100;
  double grad_tol = 1e-8;
  double step0 = 1.0;
  std::string metric = "H1semi";
  double metric_shift = 1e-6;
  double tikhonov = 0.0;
  std::string tikhonov_form = "H1semi";
  double penalty_weight = 0.0;
  double eps_j = 0.01;
  std::size_t penalty_grid = 21;
  std::size_t check_grid = 101;
  bool continuation = true;
  std::string initial_file;  // warm start; zero (identity map) when empty
};

struct ModalSpec {
  std::vector<std::string> forms{"H1semi", "elasticity(1,0.33333333333333331)", "H2semi"};
  std::string mass_form = "L2";
  std::size_t m_max = 0;  // 0: full dimension
  std::vector<double> snapshot_mu{0.05, 0.1, 0.2, 0.3};
  std::string snapshot_file;
  int gfem_degree = -1;  // >= 0 also writes a gfem basis
};

struct CheckSpec {
  std::size_t steps = 1000;
  double coefficient_scale = 0.05;
  bool zero_coefficients = false;
  std::size_t seed_grid = 10;
  std::size_t gradient_steps = 200;
};

struct RunConfig {
  DomainSpec domain;
  std::string family = "vf";  // vf | cm
  BasisSpec basis;
  TargetSpec target;
  FlowSpec flow;
  OptimizerSpec optimizer;
  ModalSpec modal;
  CheckSpec check;
  std::string output = "out";
  std::uint64_t seed = 0;
  std::string base_dir;  // directory of the config file, for relative paths; not serialized
};

/// Config error carrying the 1-based line of the offending key (0 if unknown).
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& msg, std::size_t line)
      : ValidationError(line ? "config line " + std::to_string(line) + ": " + msg : "config: " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

struct ConfigReader {
  const std::string& text;

  // Line of the first occurrence of "key" at or after `from`; 0 if absent.
  std::size_t line_of(const std::string& key, std::size_t* pos = nullptr) const {
    const std::size_t p = text.find("\"" + key + "\"", pos ? *pos : 0);
    if (p == std::string::npos) return 0;
    if (pos) *pos = p;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(p), '\n'));
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError("'" + key + "': " + msg, line_of(key));
  }

  void allow(const Json& j, const std::string& where, std::initializer_list<const char*> keys) const {
    if (!j.is_object()) fail(where, "expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!ok.count(it.key())) fail(it.key(), "unknown key in " + where);
  }

  template <typename T>
  void get(const Json& j, const char* key, T& out) const {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(key, "wrong value type");
    }
  }

  void positive(const char* key, double v) const {
    if (!(v > 0.0)) fail(key, "must be positive");
  }
  void nonnegative(const char* key, double v) const {
    if (!(v >= 0.0)) fail(key, "must be nonnegative");
  }
  void one_of(const char* key, const std::string& v, std::initializer_list<const char*> allowed) const {
    for (const char* a : allowed)
      if (v == a) return;
    fail(key, "invalid value '" + v + "'");
  }
};

inline FieldSpec read_field(const ConfigReader& r, const Json& j) {
  r.allow(j, "field", {"tag", "point", "normal", "width", "amplitude", "powers", "direction"});
  FieldSpec f;
  r.get(j, "tag", f.tag);
  r.one_of("tag", f.tag, {"gaussian_ridge", "gaussian_bump", "smoothed_step", "constant", "monomial"});
  r.get(j, "point", f.point);
  r.get(j, "normal", f.normal);
  r.get(j, "width", f.width);
  r.get(j, "amplitude", f.amplitude);
  r.get(j, "powers", f.powers);
  r.get(j, "direction", f.direction);
  if (f.tag != "constant" && f.tag != "monomial") r.positive("width", f.width);
  if (f.powers[0] < 0 || f.powers[1] < 0) r.fail("powers", "must be nonnegative");
  return f;
}

inline Json write_field(const FieldSpec& f) {
  return Json{{"tag", f.tag},           {"point", f.point},   {"normal", f.normal},
              {"width", f.width},       {"amplitude", f.amplitude}, {"powers", f.powers},
              {"direction", f.direction}};
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys are errors.
inline RunConfig parse_config(const std::string& text, const std::string& base_dir = "") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line =
        1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto ? upto - 1 : 0), '\n'));
    throw ConfigError(std::string("malformed JSON: ") + e.what(), line);
  }
  const detail::ConfigReader r{text};
  RunConfig c;
  c.base_dir = base_dir;
  r.allow(j, "config", {"domain", "family", "basis", "target", "flow", "optimizer", "modal", "check", "output", "seed"});

  if (j.contains("domain")) {
    const Json& d = j["domain"];
    r.allow(d, "domain", {"type", "rect", "mesh_file", "grid", "curved"});
    r.get(d, "type", c.domain.type);
    r.one_of("type", c.domain.type, {"rectangle", "mesh"});
    r.get(d, "rect", c.domain.rect);
    r.get(d, "mesh_file", c.domain.mesh_file);
    r.get(d, "grid", c.domain.grid);
    if (!(c.domain.rect[1] > c.domain.rect[0] && c.domain.rect[3] > c.domain.rect[2]))
      r.fail("rect", "expects [x0, x1, y0, y1] with x0 < x1 and y0 < y1");
    if (c.domain.grid < 1) r.fail("grid", "must be at least 1");
    if (c.domain.type == "mesh") {
      if (c.domain.mesh_file.empty()) r.fail("mesh_file", "required for a mesh domain");
      const std::string path = c.domain.mesh_file.front() == '/' || base_dir.empty()
                                   ? c.domain.mesh_file
                                   : base_dir + "/" + c.domain.mesh_file;
      if (!std::ifstream(path)) r.fail("mesh_file", "file not found: " + path);
    }
    if (d.contains("curved")) {
      const Json& cv = d["curved"];
      r.allow(cv, "curved", {"tag", "delta", "matrix", "offset"});
      CurvedSpec s;
      r.get(cv, "tag", s.tag);
      r.one_of("tag", s.tag, {"sine_bulge", "affine"});
      r.get(cv, "delta", s.delta);
      r.get(cv, "matrix", s.matrix);
      r.get(cv, "offset", s.offset);
      if (s.tag == "sine_bulge" && !(std::abs(s.delta) < 1.0)) r.fail("delta", "must lie in (-1, 1)");
      c.domain.curved = s;
    }
  }
  r.get(j, "family", c.family);
  r.one_of("family", c.family, {"vf", "cm"});

  if (j.contains("basis")) {
    const Json& b = j["basis"];
    r.allow(b, "basis", {"degree", "temporal_degree", "normalize"});
    r.get(b, "degree", c.basis.degree);
    r.get(b, "temporal_degree", c.basis.temporal_degree);
    r.get(b, "normalize", c.basis.normalize);
    if (c.basis.degree < 0) r.fail("degree", "must be nonnegative");
    if (c.basis.temporal_degree < 0) r.fail("temporal_degree", "must be nonnegative");
  }

  if (j.contains("target")) {
    const Json& t = j["target"];
    r.allow(t, "target", {"type", "field", "mu", "z_mu", "z_polynomial_degree", "quad_order", "source_file", "target_file",
                          "em_outer_iters", "sigma_init", "sigma_min", "weight_mode"});
    TargetSpec& s = c.target;
    r.get(t, "type", s.type);
    r.one_of("type", s.type, {"distributed", "pointwise"});
    if (t.contains("field")) s.field = detail::read_field(r, t["field"]);
    r.get(t, "mu", s.mu);
    r.get(t, "z_mu", s.z_mu);
    r.get(t, "z_polynomial_degree", s.z_polynomial_degree);
    r.get(t, "quad_order", s.quad_order);
    r.get(t, "source_file", s.source_file);
    r.get(t, "target_file", s.target_file);
    r.get(t, "em_outer_iters", s.em_outer_iters);
    r.get(t, "sigma_init", s.sigma_init);
    r.get(t, "sigma_min", s.sigma_min);
    r.get(t, "weight_mode", s.weight_mode);
    if (s.quad_order < 1 || s.quad_order > 5) r.fail("quad_order", "must be between 1 and 5");
    r.nonnegative("sigma_init", s.sigma_init);
    r.nonnegative("sigma_min", s.sigma_min);
    r.one_of("weight_mode", s.weight_mode, {"row_stochastic", "doubly_stochastic"});
    if (s.type == "pointwise") {
      for (const char* key : {"source_file", "target_file"}) {
        const std::string& f = key[0] == 's' ? s.source_file : s.target_file;
        if (f.empty()) r.fail(key, "required for a pointwise target");
        const std::string path = f.front() == '/' || base_dir.empty() ? f : base_dir + "/" + f;
        if (!std::ifstream(path)) r.fail(key, "file not found: " + path);
      }
    }
  }

  if (j.contains("flow")) {
    const Json& f = j["flow"];
    r.allow(f, "flow", {"steps", "scheme"});
    r.get(f, "steps", c.flow.steps);
    r.get(f, "scheme", c.flow.scheme);
    if (c.flow.steps < 1) r.fail("steps", "must be at least 1");
    r.one_of("scheme", c.flow.scheme, {"rk4", "rk2"});
  }

  if (j.contains("optimizer")) {
    const Json& o = j["optimizer"];
    r.allow(o, "optimizer", {"max_iters", "grad_tol", "step0", "metric", "metric_shift", "tikhonov", "tikhonov_form",
                             "penalty_weight", "eps_j", "penalty_grid", "check_grid", "continuation", "initial_file"});
    OptimizerSpec& s = c.optimizer;
    r.get(o, "max_iters", s.max_iters);
    r.get(o, "grad_tol", s.grad_tol);
    r.get(o, "step0", s.step0);
    r.get(o, "metric", s.metric);
    r.get(o, "metric_shift", s.metric_shift);
    r.get(o, "tikhonov", s.tikhonov);
    r.get(o, "tikhonov_form", s.tikhonov_form);
    r.get(o, "penalty_weight", s.penalty_weight);
    r.get(o, "eps_j", s.eps_j);
    r.get(o, "penalty_grid", s.penalty_grid);
    r.get(o, "check_grid", s.check_grid);
    r.get(o, "continuation", s.continuation);
    r.get(o, "initial_file", s.initial_file);
    if (!s.initial_file.empty()) {
      const std::string path =
          s.initial_file.front() == '/' || base_dir.empty() ? s.initial_file : base_dir + "/" + s.initial_file;
      if (!std::ifstream(path)) r.fail("initial_file", "file not found: " + path);
    }
    r.nonnegative("grad_tol", s.grad_tol);
    r.positive("step0", s.step0);
    r.nonnegative("metric_shift", s.metric_shift);
    r.nonnegative("tikhonov", s.tikhonov);
    r.nonnegative("penalty_weight", s.penalty_weight);
    r.positive("eps_j", s.eps_j);
    if (s.penalty_grid < 2) r.fail("penalty_grid", "must be at least 2");
    if (s.check_grid < 2) r.fail("check_grid", "must be at least 2");
    for (const char* key : {"metric", "tikhonov_form"}) {
      try {
        FormTag::parse(key[0] == 'm' ? s.metric : s.tikhonov_form);
      } catch (const ValidationError& e) {
        r.fail(key, e.what());
      }
    }
  }

  if (j.contains("modal")) {
    const Json& m = j["modal"];
    r.allow(m, "modal", {"forms", "mass_form", "m_max", "snapshot_mu", "snapshot_file", "gfem_degree"});
    ModalSpec& s = c.modal;
    r.get(m, "forms", s.forms);
    r.get(m, "mass_form", s.mass_form);
    r.get(m, "m_max", s.m_max);
    r.get(m, "snapshot_mu", s.snapshot_mu);
    r.get(m, "snapshot_file", s.snapshot_file);
    r.get(m, "gfem_degree", s.gfem_degree);
    for (const std::string& f : s.forms) {
      try {
        FormTag::parse(f);
      } catch (const ValidationError& e) {
        r.fail("forms", e.what());
      }
    }
    try {
      FormTag::parse(s.mass_form);
    } catch (const ValidationError& e) {
      r.fail("mass_form", e.what());
    }
    if (!s.snapshot_file.empty()) {
      const std::string path =
          s.snapshot_file.front() == '/' || base_dir.empty() ? s.snapshot_file : base_dir + "/" + s.snapshot_file;
      if (!std::ifstream(path)) r.fail("snapshot_file", "file not found: " + path);
    }
  }

  if (j.contains("check")) {
    const Json& k = j["check"];
    r.allow(k, "check", {"steps", "coefficient_scale", "zero_coefficients", "seed_grid", "gradient_steps"});
    r.get(k, "steps", c.check.steps);
    r.get(k, "coefficient_scale", c.check.coefficient_scale);
    r.get(k, "zero_coefficients", c.check.zero_coefficients);
    r.get(k, "seed_grid", c.check.seed_grid);
    r.get(k, "gradient_steps", c.check.gradient_steps);
    if (c.check.steps < 1) r.fail("steps", "must be at least 1");
    if (c.check.gradient_steps < 1) r.fail("gradient_steps", "must be at least 1");
    if (c.check.seed_grid < 2) r.fail("seed_grid", "must be at least 2");
    r.nonnegative("coefficient_scale", c.check.coefficient_scale);
  }
  r.get(j, "output", c.output);
  r.get(j, "seed", c.seed);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto slash = path.find_last_of('/');
  return parse_config(ss.str(), slash == std::string::npos ? "" : path.substr(0, slash));
}

inline Json config_to_json(const RunConfig& c) {
  Json d{{"type", c.domain.type}, {"rect", c.domain.rect}, {"mesh_file", c.domain.mesh_file}, {"grid", c.domain.grid}};
  if (c.domain.curved) {
    const CurvedSpec& s = *c.domain.curved;
    d["curved"] = Json{{"tag", s.tag}, {"delta", s.delta}, {"matrix", s.matrix}, {"offset", s.offset}};
  }
  const TargetSpec& t = c.target;
  const OptimizerSpec& o = c.optimizer;
  return Json{
      {"domain", d},
      {"family", c.family},
      {"basis", {{"degree", c.basis.degree}, {"temporal_degree", c.basis.temporal_degree}, {"normalize", c.basis.normalize}}},
      {"target",
       {{"type", t.type},
        {"field", detail::write_field(t.field)},
        {"mu", t.mu},
        {"z_mu", t.z_mu},
        {"z_polynomial_degree", t.z_polynomial_degree},
        {"quad_order", t.quad_order},
        {"source_file", t.source_file},
        {"target_file", t.target_file},
        {"em_outer_iters", t.em_outer_iters},
        {"sigma_init", t.sigma_init},
        {"sigma_min", t.sigma_min},
        {"weight_mode", t.weight_mode}}},
      {"flow", {{"steps", c.flow.steps}, {"scheme", c.flow.scheme}}},
      {"optimizer",
       {{"max_iters", o.max_iters},
        {"grad_tol", o.grad_tol},
        {"step0", o.step0},
        {"metric", o.metric},
        {"metric_shift", o.metric_shift},
        {"tikhonov", o.tikhonov},
        {"tikhonov_form", o.tikhonov_form},
        {"penalty_weight", o.penalty_weight},
        {"eps_j", o.eps_j},
        {"penalty_grid", o.penalty_grid},
        {"check_grid", o.check_grid},
        {"continuation", o.continuation},
        {"initial_file", o.initial_file}}},
      {"modal",
       {{"forms", c.modal.forms},
        {"mass_form", c.modal.mass_form},
        {"m_max", c.modal.m_max},
        {"snapshot_mu", c.modal.snapshot_mu},
        {"snapshot_file", c.modal.snapshot_file},
        {"gfem_degree", c.modal.gfem_degree}}},
      {"check",
       {{"steps", c.check.steps},
        {"coefficient_scale", c.check.coefficient_scale},
        {"zero_coefficients", c.check.zero_coefficients},
        {"seed_grid", c.check.seed_grid},
        {"gradient_steps", c.check.gradient_steps}}},
      {"output", c.output},
      {"seed", c.seed}};
}

/// Serialized form; doubles use the shortest representation that reads back
/// to the same value.
inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

}  // namespace regflow

#endif  // REGFLOW_CONFIG_HPP
