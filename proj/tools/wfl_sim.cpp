#include "wfl/harness.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

void configure_logging()
{
  spdlog::set_default_logger(spdlog::stderr_color_mt("wfl"));
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("SIM_LOG");
  std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") { spdlog::warn("unknown SIM_LOG value '{}', using info", level); }
  }
}

} // namespace

int main(int argc, char** argv)
{
  configure_logging();

  CLI::App app{"Client selection for federated learning via Whittle index learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> policy_names;
  std::vector<double> taus;
  std::string seeds;
  std::string out_dir;
  int workers = 0;

  auto* simulate = app.add_subcommand("simulate", "Run the policy x tau x seed matrix");
  simulate->add_option("--config", config_path, "Config file")->required();
  simulate->add_option("--policy", policy_names, "Policy name (repeatable): ran, ef, cql, ucb, fi, wilfq");
  simulate->add_option("--tau", taus, "Dirichlet concentration (repeatable)");
  simulate->add_option("--seeds", seeds, "Seed range a..b or comma list");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--workers", workers, "Parallel runs");

  auto* exact = app.add_subcommand("exact-index", "Print the exact Whittle index per (class, state)");
  exact->add_option("--config", config_path, "Config file")->required();

  auto* validate = app.add_subcommand("validate", "Check a config file and exit");
  validate->add_option("--config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  wfl::ExperimentSpec spec;
  try {
    spec = wfl::parse_config(config_path);
    if (!policy_names.empty()) {
      spec.policies.clear();
      for (const auto& name : policy_names) {
        auto p = wfl::parse_policy(name);
        if (!p) { throw wfl::ConfigError("policy", "unknown policy '" + name + "'"); }
        spec.policies.push_back(*p);
      }
    }
    if (!taus.empty()) { spec.tau_values = taus; }
    if (!seeds.empty()) {
      try {
        spec.seeds = wfl::parse_seed_range(seeds);
      } catch (const std::invalid_argument& e) {
        throw wfl::ConfigError("seeds", e.what());
      }
    }
    if (!out_dir.empty()) { spec.output_dir = out_dir; }
    if (workers != 0) { spec.workers = workers; }
    spec.validate();
  } catch (const wfl::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("config error: {}", e.what());
    return 1;
  }

  if (*validate) {
    std::cout << "ok: " << spec.base.n_clients << " clients, " << spec.base.classes.size() << " classes, "
              << spec.policies.size() << " policies, " << spec.tau_values.size() << " tau values, "
              << spec.seeds.size() << " seeds\n";
    return 0;
  }
  if (*exact) {
    try {
      wfl::print_exact_indices(spec, std::cout);
      return 0;
    } catch (const std::exception& e) {
      spdlog::error("runtime error: {}", e.what());
      return 2;
    }
  }
  return wfl::run_experiment(spec);
}
