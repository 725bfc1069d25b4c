#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regflow/app.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

regflow::RunConfig load(const Common& c) {
  regflow::RunConfig cfg = regflow::load_config(c.config);
  if (!c.out.empty()) cfg.output = c.out;
  if (c.seed) cfg.seed = *c.seed;
  regflow::set_num_threads(c.threads);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric diffeomorphic registration in 2-D domains"};
  app.require_subcommand(1);
  Common common;
  std::vector<double> sweep;
  std::string coeffs;

  CLI::App* reg = app.add_subcommand("register", "run a registration");
  add_common(reg, common);
  reg->add_option("--param-sweep", sweep, "target parameters; one run per value")->delimiter(',');
  CLI::App* modal = app.add_subcommand("modal", "build modal bases and error sweeps");
  add_common(modal, common);
  CLI::App* check = app.add_subcommand("check", "run the property checks");
  add_common(check, common);
  CLI::App* flow = app.add_subcommand("flow-eval", "dump a flow solution");
  add_common(flow, common);
  flow->add_option("--coeffs", coeffs, "coefficient file (default: zero)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help and version requests exit 0; every usage error is a validation failure
    return app.exit(e) == 0 ? regflow::exit_ok : regflow::exit_validation;
  }

  try {
    const regflow::RunConfig cfg = load(common);
    const std::filesystem::path out = cfg.output;
    if (*reg) {
      if (sweep.empty()) return regflow::run_register(cfg, out);
      int status = regflow::exit_ok;
      for (std::size_t k = 0; k < sweep.size(); ++k) {
        const int s = regflow::run_register(cfg, out / ("mu_" + std::to_string(k)), sweep[k]);
        if (s != regflow::exit_ok) status = s;
      }
      return status;
    }
    if (*modal) return regflow::run_modal(cfg, out);
    if (*check) return regflow::run_check(cfg, out);
    regflow::VectorXd a;
    if (!coeffs.empty()) {
      std::ifstream in(coeffs);
      a = regflow::read_vector(in);
    }
    return regflow::flow_eval(cfg, out, a);
  } catch (const regflow::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return regflow::exit_validation;
  } catch (const regflow::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return regflow::exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return regflow::exit_numerical;
  }
}
