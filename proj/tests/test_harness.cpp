#include "wfl/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wfl;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
n_clients = 12
budget = 3
classes.1.population = 4
classes.2.population = 4
classes.3.population = 4
task.n_train = 240
task.n_test = 60
task.dim = 5
task.classes = 3
task.lr = 0.05
task.separation = 8
max_rounds = 15
)";

fs::path fresh_dir(const std::string& name)
{
  fs::path dir = fs::temp_directory_path() / ("wfl_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text)
{
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) { out.push_back(line); }
  return out;
}

std::vector<std::string> split(const std::string& line)
{
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) { out.push_back(cell); }
  if (!line.empty() && line.back() == ',') { out.emplace_back(); }
  return out;
}

} // namespace

TEST_CASE("empty config gives the default experiment")
{
  ExperimentSpec spec = parse_config_text("");
  CHECK(spec.base.n_clients == 100);
  REQUIRE(spec.base.classes.size() == 3);
  CHECK(spec.base.classes[0].population == 30);
  CHECK(spec.base.classes[1].population == 40);
  CHECK(spec.base.classes[2].population == 30);
  CHECK(spec.base.budget == 10);
  CHECK(spec.base.discount == 0.9);
  CHECK(spec.base.alpha == 0.15);
  CHECK(spec.base.subsidies.values() == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(spec.base.task.batch == 32);
  CHECK(spec.base.task.lr == 1e-3);
  CHECK(spec.policies.size() == 6);
  CHECK(spec.tau_values == std::vector<double>{0.1, 10.0});
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("config errors name the key")
{
  try {
    parse_config_text("policies = ran, foo");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("foo") != std::string::npos);
  }
  try {
    ExperimentSpec s = parse_config_text("alpha = 1.5");
    s.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key == "alpha");
  }
  CHECK_THROWS_AS(parse_config_text("not_a_key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("budget = ten"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just words"), ConfigError);
  CHECK_THROWS_AS(parse_config(fs::temp_directory_path() / "wfl_no_such_file.conf"), ConfigError);
}

TEST_CASE("config values are applied")
{
  ExperimentSpec s = parse_config_text(R"(
# comment
subsidies = 0.2, 0.4
classes.2.p_selected = 0.5,0.25,0.25, 0.25,0.5,0.25, 0.25,0.25,0.5
q_sharing = client
observability = oracle
seeds = 3..6
taus = 1
)");
  CHECK(s.base.subsidies.values() == std::vector<double>{0.2, 0.4});
  CHECK(s.base.classes[1].transitions.selected(0, 1) == 0.25);
  CHECK(s.base.sharing == QSharing::Client);
  CHECK(s.base.observability == Observability::Oracle);
  CHECK(s.seeds == std::vector<std::uint64_t>{3, 4, 5, 6});
  CHECK(s.tau_values == std::vector<double>{1.0});
}

TEST_CASE("seed ranges")
{
  CHECK(parse_seed_range("1..3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(parse_seed_range("7, 2") == std::vector<std::uint64_t>{7, 2});
  CHECK_THROWS(parse_seed_range("5..1"));
}

TEST_CASE("round csv has one row per round and round-trips")
{
  ExperimentSpec spec = parse_config_text(std::string(kSmall) + "max_rounds = 3\nalpha = 0.01\n");
  SimConfig c = spec.base;
  RunResult r = run_simulation(c, PolicyKind::Random);
  REQUIRE(r.records.size() == 3);
  std::ostringstream out;
  write_round_csv(r, out);
  auto lines = lines_of(out.str());
  CHECK(lines.size() == 4);

  fs::path dir = fresh_dir("roundtrip");
  fs::create_directories(dir);
  write_round_csv(r, dir / "r.csv");
  RunResult back = read_round_csv(dir / "r.csv");
  REQUIRE(back.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].cumulative_delay == doctest::Approx(r.records[i].cumulative_delay).epsilon(1e-8));
    CHECK(back.records[i].test_accuracy == doctest::Approx(r.records[i].test_accuracy).epsilon(1e-8));
  }
  fs::remove_all(dir);
}

TEST_CASE("summary arithmetic")
{
  auto make_cell = [](PolicyKind p, double tau, std::vector<double> delays) {
    CellResult cell;
    cell.policy = p;
    cell.tau = tau;
    for (double d : delays) {
      RunResult r;
      r.converged = true;
      r.total_delay = d;
      r.rounds_to_threshold = 5;
      RoundRecord rec;
      rec.cumulative_delay = d;
      rec.test_accuracy = 0.9;
      r.records.push_back(rec);
      cell.runs.push_back(r);
    }
    return cell;
  };
  std::vector<CellResult> cells{make_cell(PolicyKind::Random, 1.0, {90, 110}),
                                make_cell(PolicyKind::WilfQ, 1.0, {58, 60}),
                                make_cell(PolicyKind::Cql, 2.0, {10, 12})};
  auto rows = summarize(cells);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].delay_reduction_pct.value() == doctest::Approx(0.0));
  CHECK(rows[1].delay_reduction_pct.value() == doctest::Approx(41.0));
  CHECK_FALSE(rows[2].delay_reduction_pct.has_value());
  CHECK(rows[1].total_delay.ci95_half_width == doctest::Approx(12.706204736174707 * std::sqrt(2.0) / std::sqrt(2.0)));

  std::ostringstream out;
  write_summary_csv(rows, out);
  auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] ==
        "policy,tau,runs,converged,convergence_rate,mean_total_delay_s,ci95_total_delay_s,mean_rounds,ci95_rounds,"
        "mean_final_acc,ci95_final_acc,delay_reduction_vs_ran_pct");
  CHECK(split(lines[3]).back().empty());
}

TEST_CASE("experiment file contract and determinism")
{
  fs::path dir = fresh_dir("contract");
  ExperimentSpec spec = parse_config_text(std::string(kSmall) + "policies = wilfq\ntaus = 0.1\nseeds = 1..2\n");
  spec.output_dir = dir;
  CHECK(run_experiment(spec) == 0);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) { files.push_back(e.path()); }
  CHECK(files.size() == 4);
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / ("aggregate_" + cell_label(PolicyKind::WilfQ, 0.1) + ".csv")));
  std::map<fs::path, std::string> first;
  for (const auto& f : files) { first[f.filename()] = slurp(f); }

  fs::path dir2 = fresh_dir("contract2");
  spec.output_dir = dir2;
  CHECK(run_experiment(spec) == 0);
  for (const auto& [name, text] : first) { CHECK(slurp(dir2 / name) == text); }

  // Every round file: monotone delay and state fractions summing to one.
  for (const auto& f : files) {
    if (f.filename().string().rfind("rounds_", 0) != 0) { continue; }
    auto lines = lines_of(slurp(f));
    auto header = split(lines[0]);
    auto col = [&](const std::string& name) {
      return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    double prev = 0.0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto cells = split(lines[i]);
      double cum = std::stod(cells[col("cum_delay_s")]);
      CHECK(cum >= prev);
      prev = cum;
      double fsum = std::stod(cells[col("frac_normal")]) + std::stod(cells[col("frac_limited")]) +
                    std::stod(cells[col("frac_busy")]);
      CHECK(fsum == doctest::Approx(1.0).epsilon(1e-8));
    }
  }

  // The summary can be recomputed from the round files alone.
  std::vector<RunResult> runs;
  for (int seed = 1; seed <= 2; ++seed) {
    RunResult r = read_round_csv(dir / ("rounds_" + cell_label(PolicyKind::WilfQ, 0.1) + "_seed" + std::to_string(seed) + ".csv"));
    r.converged = r.records.back().loss_gap <= spec.base.alpha;
    r.total_delay = r.records.back().cumulative_delay;
    runs.push_back(r);
  }
  CellResult cell{PolicyKind::WilfQ, 0.1, {1, 2}, runs};
  auto rows = summarize(std::span<const CellResult>(&cell, 1));
  std::ostringstream recomputed;
  write_summary_csv(rows, recomputed);
  auto want = lines_of(first.at("summary.csv"));
  auto got = lines_of(recomputed.str());
  REQUIRE(got.size() == want.size());
  CHECK(got[0] == want[0]);
  auto w = split(want[1]), g = split(got[1]);
  REQUIRE(w.size() == g.size());
  for (std::size_t i = 2; i < w.size(); ++i) {
    if (w[i].empty()) {
      CHECK(g[i].empty());
    } else {
      CHECK(std::stod(g[i]) == doctest::Approx(std::stod(w[i])).epsilon(1e-7));
    }
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("summary has one row per policy and tau")
{
  fs::path dir = fresh_dir("matrix");
  ExperimentSpec spec = parse_config_text(std::string(kSmall) + "max_rounds = 4\ntaus = 0.1, 10\nseeds = 1..2\n");
  spec.output_dir = dir;
  CHECK(run_experiment(spec) == 0);
  auto lines = lines_of(slurp(dir / "summary.csv"));
  REQUIRE(lines.size() == 13);
  int low = 0, high = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split(lines[i]);
    if (std::stod(cells[1]) == 0.1) { ++low; }
    if (std::stod(cells[1]) == 10.0) { ++high; }
  }
  CHECK(low == 6);
  CHECK(high == 6);
  fs::remove_all(dir);
}

TEST_CASE("exact index table printout")
{
  ExperimentSpec spec = parse_config_text(kSmall);
  std::ostringstream out;
  print_exact_indices(spec, out);
  auto lines = lines_of(out.str());
  CHECK(lines[0] == "class,state,expected_capped_latency_s,exact_index");
  CHECK(lines.size() >= 10);
}
