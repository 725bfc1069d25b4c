#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include "regflow/app.hpp"

using namespace regflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("regflow_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(REGFLOW_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small distributed ridge registration, fast enough for unit tests.
const char* ridge_config = R"j({
  "family": "vf",
  "basis": {"degree": 1, "temporal_degree": 0},
  "domain": {"grid": 8},
  "target": {"type": "distributed", "mu": 0.15, "z_mu": [0.0], "quad_order": 4,
             "field": {"tag": "gaussian_ridge", "point": [0.35, 0.5], "normal": [1, 0], "width": 0.15}},
  "flow": {"steps": 20},
  "optimizer": {"max_iters": 8},
  "modal": {"snapshot_mu": [0.05, 0.15]},
  "check": {"steps": 200, "gradient_steps": 100, "seed_grid": 6}
})j";

RunConfig ridge(const std::string& patch = "{}") {
  Json j = Json::parse(ridge_config);
  j.merge_patch(Json::parse(patch));
  return parse_config(j.dump(2), "");
}

Json read_json(const fs::path& p) { return Json::parse(read_file(p)); }

}  // namespace

TEST(Config, RoundTrip) {
  const fs::path dir = scratch("roundtrip");
  write_file(dir / "src.csv", "x1,x2\n0.1,0.2\n0.3,0.4\n");
  write_file(dir / "dst.csv", "0.2 0.2\n0.35 0.45\n");
  const std::string text = R"j({
  "family": "cm",
  "domain": {"type": "rectangle", "rect": [0, 2, 0, 1], "grid": 10,
             "curved": {"tag": "sine_bulge", "delta": 0.2}},
  "basis": {"degree": 3, "temporal_degree": 0, "normalize": false},
  "target": {"type": "pointwise", "source_file": "src.csv", "target_file": "dst.csv",
             "em_outer_iters": 3, "sigma_init": 0.2, "sigma_min": 0.01, "weight_mode": "doubly_stochastic"},
  "optimizer": {"max_iters": 7, "metric": "elasticity(2,0.25)", "tikhonov": 0.5, "penalty_weight": 2,
                "eps_j": 0.05, "continuation": false},
  "modal": {"forms": ["H1semi"], "m_max": 5, "gfem_degree": 1},
  "seed": 42
})j";
  const RunConfig a = parse_config(text, dir.string());
  EXPECT_EQ(a.family, "cm");
  EXPECT_EQ(a.basis.degree, 3);
  EXPECT_FALSE(a.basis.normalize);
  ASSERT_TRUE(a.domain.curved.has_value());
  EXPECT_EQ(a.domain.curved->delta, 0.2);
  EXPECT_EQ(a.target.weight_mode, "doubly_stochastic");
  EXPECT_EQ(a.optimizer.tikhonov, 0.5);
  EXPECT_FALSE(a.optimizer.continuation);
  EXPECT_EQ(a.seed, 42u);

  const std::string once = serialize_config(a);
  const RunConfig b = parse_config(once, dir.string());
  EXPECT_EQ(serialize_config(b), once);
  EXPECT_EQ(config_to_json(b), config_to_json(a));

  const std::string defaults = serialize_config(parse_config("{}", ""));
  EXPECT_EQ(serialize_config(parse_config(defaults, "")), defaults);
}

TEST(Config, ErrorsNameTheLine) {
  const std::string text = "{\n  \"family\": \"vf\",\n  \"flow\": {\n    \"stpes\": 10\n  }\n}\n";
  try {
    parse_config(text, "");
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("config line 4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"j({"family": "spline"})j", ""), ConfigError);
  EXPECT_THROW(parse_config(R"j({"flow": {"steps": 0}})j", ""), ConfigError);
  EXPECT_THROW(parse_config(R"j({"flow": {"scheme": "euler"}})j", ""), ConfigError);
  EXPECT_THROW(parse_config(R"j({"target": {"type": "pointwise", "source_file": "nope.csv"}})j", ""), ConfigError);
  EXPECT_THROW(parse_config("{ not json", ""), ValidationError);
}

TEST(Register, ZeroIterationsKeepsInitialObjective) {
  const fs::path out = scratch("zero_iters");
  std::ostringstream log;
  ASSERT_EQ(run_register(ridge(R"j({"optimizer": {"max_iters": 0}})j"), out), exit_ok);
  const Json s = read_json(out / "summary.json");
  EXPECT_EQ(s["final_objective"], s["initial_objective"]);
  EXPECT_EQ(s["termination"], "max_iters");
  EXPECT_EQ(s["bijectivity_verdict"], "bijective");
  for (const char* f : {"report.csv", "coefficients.txt", "deformed_grid.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(read_file(out / "report.csv").substr(0, 30), "iter,objective,grad_norm,step\n");
}

TEST(Register, ReducesObjective) {
  const fs::path out = scratch("reduce");
  ASSERT_EQ(run_register(ridge(), out), exit_ok);
  const Json s = read_json(out / "summary.json");
  EXPECT_LT(s["final_objective"].get<double>(), s["initial_objective"].get<double>());
  EXPECT_GT(s["min_jacobian"].get<double>(), 0.0);
}

TEST(Register, FoldedStartIsRepairedByContinuation) {
  const fs::path dir = scratch("fold");
  // the first member of the unnormalized degree-0 basis is (x1 (1 - x1), 0): det = 1 + 2 (1 - 2 x1)
  write_file(dir / "start.txt", "2\n0\n");
  Json j = Json::parse(ridge_config);
  j.merge_patch(Json::parse(R"j({"family": "cm", "basis": {"degree": 0, "normalize": false},
                                "optimizer": {"max_iters": 30, "initial_file": "start.txt"}})j"));
  const RunConfig c = parse_config(j.dump(2), dir.string());
  ASSERT_EQ(run_register(c, dir / "out"), exit_ok);
  const Json s = read_json(dir / "out" / "summary.json");
  EXPECT_EQ(s["bijectivity_verdict"], "bijective");
  EXPECT_GT(s["min_jacobian"].get<double>(), 1e-6);
}

TEST(Register, Pointwise) {
  const fs::path dir = scratch("pointwise");
  std::string src = "x1,x2\n", dst = "x1,x2\n";
  for (int i = 1; i <= 4; ++i)
    for (int k = 1; k <= 4; ++k) {
      const double x = i / 5.0, y = k / 5.0;
      src += std::to_string(x) + "," + std::to_string(y) + "\n";
      dst += std::to_string(x + 0.3 * x * (1 - x)) + "," + std::to_string(y) + "\n";
    }
  write_file(dir / "src.csv", src);
  write_file(dir / "dst.csv", dst);
  Json j = Json::parse(ridge_config);
  j["target"] = Json::parse(R"j({"type": "pointwise", "source_file": "src.csv", "target_file": "dst.csv",
                                "em_outer_iters": 2})j");
  const RunConfig c = parse_config(j.dump(2), dir.string());
  ASSERT_EQ(run_register(c, dir / "out"), exit_ok);
  const Json s = read_json(dir / "out" / "summary.json");
  EXPECT_LT(s["final_objective"].get<double>(), s["initial_objective"].get<double>());
}

TEST(Check, DefaultPassesAndCoarseFails) {
  const fs::path out = scratch("check");
  std::ostringstream log;
  EXPECT_EQ(run_check(ridge(), out / "ok", log), exit_ok) << log.str();
  EXPECT_TRUE(read_json(out / "ok" / "check.json")["passed"].get<bool>());

  EXPECT_EQ(run_check(ridge(R"j({"check": {"steps": 5, "coefficient_scale": 0.2}})j"), out / "coarse", log),
            exit_property);
  const Json r = read_json(out / "coarse" / "check.json");
  EXPECT_FALSE(r["passed"].get<bool>());
  bool found = false;
  for (const Json& c : r["checks"])
    if (c["name"] == "flow_round_trip") {
      found = true;
      EXPECT_FALSE(c["passed"].get<bool>());
      EXPECT_GT(c["value"].get<double>(), 1e-6);
    }
  EXPECT_TRUE(found);

  EXPECT_EQ(run_check(ridge(R"j({"check": {"zero_coefficients": true}})j"), out / "zero", log), exit_ok) << log.str();
  for (const Json& c : read_json(out / "zero" / "check.json")["checks"])
    if (c["name"] != "adjoint_gradient" && c["name"] != "cm_gradient") EXPECT_EQ(c["value"].get<double>(), 0.0);
}

TEST(Modal, ThreeFormsWithNestedErrors) {
  const fs::path out = scratch("modal");
  ASSERT_EQ(run_modal(ridge(), out), exit_ok);
  for (const char* slug : {"H1semi", "elasticity", "H2semi"}) {
    fs::path csv;
    for (const auto& e : fs::directory_iterator(out))
      if (e.path().filename().string().rfind(std::string("modal_") + slug, 0) == 0) csv = e.path();
    ASSERT_FALSE(csv.empty()) << slug;
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "m,E_proj,E_obj");
    double prev = 1e300, last = 0.0;
    int rows = 0;
    while (std::getline(in, line)) {
      const double e = std::stod(line.substr(line.find(',') + 1));
      EXPECT_LE(e, prev + 1e-15);
      prev = last = e;
      ++rows;
    }
    EXPECT_EQ(rows, 9);  // m = 0..8
    EXPECT_LE(last, 1e-10);
  }
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch("exit");
  const fs::path good = write_file(dir / "good.json", ridge_config);
  EXPECT_EQ(run_cli("register"), exit_validation);
  EXPECT_EQ(run_cli("register --config " + (dir / "missing.json").string()), exit_validation);
  EXPECT_EQ(run_cli("register --config " + write_file(dir / "bad.json", "{\"colour\": 1}").string()),
            exit_validation);
  EXPECT_EQ(run_cli("modal --config " + good.string() + " --out " + (dir / "m").string()), exit_ok);

  Json coarse = Json::parse(ridge_config);
  coarse["check"]["steps"] = 5;
  coarse["check"]["coefficient_scale"] = 0.2;
  EXPECT_EQ(run_cli("check --config " + write_file(dir / "coarse.json", coarse.dump()).string() + " --out " +
                    (dir / "c").string()),
            exit_property);

  // a snapshot at the identity has zero norm
  Json degenerate = Json::parse(ridge_config);
  degenerate["modal"]["snapshot_mu"] = {0.0};
  EXPECT_EQ(run_cli("modal --config " + write_file(dir / "degenerate.json", degenerate.dump()).string() + " --out " +
                    (dir / "d").string()),
            exit_numerical);
}

TEST(Binary, SweepAndFlowEval) {
  const fs::path dir = scratch("sweep");
  const fs::path cfg = write_file(dir / "c.json", ridge_config);
  ASSERT_EQ(run_cli("register --config " + cfg.string() + " --out " + (dir / "s").string() + " --param-sweep 0.05,0.1"),
            exit_ok);
  EXPECT_TRUE(fs::exists(dir / "s" / "mu_0" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "s" / "mu_1" / "summary.json"));
  ASSERT_EQ(run_cli("flow-eval --config " + cfg.string() + " --out " + (dir / "f").string() + " --coeffs " +
                    (dir / "s" / "mu_1" / "coefficients.txt").string()),
            exit_ok);
  EXPECT_EQ(read_file(dir / "f" / "flow.csv").substr(0, 21), "seed_id,t,x1,x2,logJ\n");
}

TEST(Binary, Deterministic) {
  const fs::path dir = scratch("determinism");
  const fs::path cfg = write_file(dir / "c.json", ridge_config);
  ASSERT_EQ(run_cli("register --config " + cfg.string() + " --out " + (dir / "a").string() + " --threads 1"), exit_ok);
  ASSERT_EQ(run_cli("register --config " + cfg.string() + " --out " + (dir / "b").string() + " --threads 3"), exit_ok);
  for (const char* f : {"report.csv", "coefficients.txt", "deformed_grid.csv"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}
