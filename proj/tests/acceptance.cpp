// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include "wfl/harness.hpp"
#include "wfl/sim_engine.hpp"
#include "wfl/stats.hpp"
#include "wfl/whittle_core.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace wfl;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

ExperimentSpec desk_spec()
{
  return parse_config(fs::path(WFL_SOURCE_DIR) / "configs" / "desk.conf");
}

// Policy iteration on the 3-state arm, used as the grid-search oracle.
Eigen::Matrix<double, 3, 2> oracle_q(const ArmMdpd& mdp, double m)
{
  std::array<int, 3> policy{0, 0, 0};
  Eigen::Matrix<double, 3, 2> q;
  for (int it = 0; it < 100; ++it) {
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    Eigen::Vector3d r;
    for (int s = 0; s < 3; ++s) {
      int act = policy[static_cast<std::size_t>(s)];
      a.row(s) -= mdp.discount * (act == 1 ? mdp.p_active : mdp.p_passive).row(s);
      r(s) = mdp.reward(s, act) + (act == 0 ? m : 0.0);
    }
    Eigen::Vector3d v = a.fullPivLu().solve(r);
    for (int s = 0; s < 3; ++s) {
      q(s, 0) = mdp.reward(s, 0) + m + mdp.discount * mdp.p_passive.row(s).dot(v);
      q(s, 1) = mdp.reward(s, 1) + mdp.discount * mdp.p_active.row(s).dot(v);
    }
    std::array<int, 3> next{};
    for (int s = 0; s < 3; ++s) { next[static_cast<std::size_t>(s)] = q(s, 1) > q(s, 0) ? 1 : 0; }
    if (next == policy) { break; }
    policy = next;
  }
  return q;
}

ArmMdpd sample_arm()
{
  SimConfig cfg = default_config();
  World w = build_world(cfg);
  // The middle class carries the printed sample matrices.
  return w.class_arms[1];
}

Outcome sampler_fidelity()
{
  World w = build_world(default_config());
  Rng rng = make_stream(2024, 1);
  double worst = 1.0;
  int passed = 0;
  for (std::size_t k = 0; k < w.classes.size(); ++k) {
    const Client* rep = nullptr;
    for (const Client& c : w.clients) {
      if (static_cast<std::size_t>(c.class_id) == k) {
        rep = &c;
        break;
      }
    }
    for (ClientState s : kAllStates) {
      std::vector<double> xs;
      xs.reserve(10000);
      for (int i = 0; i < 10000; ++i) { xs.push_back(sample_training_time(*rep, s, w.classes[k], rng)); }
      auto ks = stats::ks_test(xs, [&](double t) { return training_time_cdf(*rep, s, w.classes[k], t); });
      worst = std::min(worst, ks.p_value);
      passed += ks.p_value > 0.01 ? 1 : 0;
    }
  }
  return {passed == 9, fmt::format("{}/9 pairs with p > 0.01, smallest p {:.3f}", passed, worst)};
}

Outcome exact_solver()
{
  double single_err = 0.0;
  for (double d : {-0.4, 0.0, 0.3, 1.7}) {
    ArmMdpd mdp;
    mdp.reward.col(0).setConstant(-0.5);
    mdp.reward.col(1).setConstant(-0.5 + d);
    for (ClientState s : kAllStates) { single_err = std::max(single_err, std::abs(exact_whittle(mdp, s, 1e-10) - d)); }
  }

  ArmMdpd arm = sample_arm();
  const double half = 2.0 * arm.max_abs_reward();
  double grid_err = 0.0;
  for (ClientState s : kAllStates) {
    const auto i = static_cast<Eigen::Index>(index_of(s));
    double w = exact_whittle(arm, s, 1e-10);
    double found = half;
    const long steps = std::lround(2.0 * half / 1e-4);
    for (long k = 0; k <= steps; ++k) {
      double m = -half + 1e-4 * static_cast<double>(k);
      auto q = oracle_q(arm, m);
      if (q(i, 0) >= q(i, 1)) {
        found = m;
        break;
      }
    }
    grid_err = std::max(grid_err, std::abs(w - found));
  }

  std::vector<double> grid;
  for (int k = 0; k < 200; ++k) { grid.push_back(-half + 2.0 * half * k / 199.0); }
  bool indexable = check_indexability<double>(arm, grid);
  bool pass = single_err < 1e-6 && grid_err < 2e-4 && indexable;
  return {pass, fmt::format("single-state error {:.1e}, grid error {:.1e}, indexable {}", single_err, grid_err,
                            indexable)};
}

Outcome q_learning_convergence()
{
  ArmMdpd arm = sample_arm();
  double lo = 0.0, hi = -1e9;
  for (ClientState s : kAllStates) {
    double w = exact_whittle(arm, s, 1e-10);
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  const double m = 0.5 * (lo + hi);
  auto vi = value_iteration(arm, m, 1e-12);
  const double range = vi.q.maxCoeff() - vi.q.minCoeff();

  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng = make_stream(seed, 77);
    SubsidizedQTable table(1, 1, 0.0);
    std::uniform_int_distribution<int> coin(0, 1);
    ClientState s = ClientState::Normal;
    TransitionPair t{arm.p_active, arm.p_passive};
    for (int k = 0; k < 200000; ++k) {
      int a = coin(rng);
      ClientState next = step_state(s, a == 1, t, rng);
      QKey key{0, s, a, 0};
      double eta = std::pow(1.0 + static_cast<double>(table.visits(key)), -0.6);
      q_update(table, key, arm.reward(static_cast<Eigen::Index>(index_of(s)), a), m, next, eta, arm.discount);
      s = next;
    }
    double err = 0.0;
    for (ClientState st : kAllStates) {
      for (int a = 0; a < 2; ++a) {
        err = std::max(err, std::abs(table.value(0, st, a, 0) - vi.q(static_cast<Eigen::Index>(index_of(st)), a)));
      }
    }
    worst = std::max(worst, err / range);
    good += err < 0.05 * range ? 1 : 0;
  }
  return {good >= 9, fmt::format("{}/10 seeds within 5% of the Q range, worst {:.2f}%", good, 100.0 * worst)};
}

double ordering_accuracy(const std::map<std::pair<int, ClientState>, double>& learned, const ExactIndexTable& exact)
{
  std::vector<std::pair<int, ClientState>> keys;
  for (const auto& [k, v] : exact) { keys.push_back(k); }
  int agree = 0, comparable = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (std::size_t j = i + 1; j < keys.size(); ++j) {
      double e = exact.at(keys[i]) - exact.at(keys[j]);
      double l = learned.at(keys[i]) - learned.at(keys[j]);
      if (e == 0.0 || l == 0.0) { continue; }
      ++comparable;
      agree += (e > 0.0) == (l > 0.0) ? 1 : 0;
    }
  }
  return comparable > 0 ? static_cast<double>(agree) / comparable : 0.0;
}

Outcome index_ordering()
{
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimConfig cfg = desk_spec().base;
    cfg.seed = seed;
    cfg.observability = Observability::Oracle;
    cfg.sharing = QSharing::Class;
    cfg.lambda = 0.0;
    cfg.max_rounds = 500;
    Simulation sim(cfg, PolicyKind::WilfQ);
    for (int r = 0; r < 500; ++r) { sim.run_round(); }
    total += ordering_accuracy(sim.learned_class_indices(), sim.world().exact_indices);
  }
  double mean = total / 10.0;
  return {mean >= 0.8, fmt::format("mean pairwise ordering accuracy {:.3f}", mean)};
}

Outcome policy_ordering()
{
  ExperimentSpec spec = desk_spec();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) { seeds.push_back(s); }
  const std::array<PolicyKind, 4> chain{PolicyKind::FullInformation, PolicyKind::WilfQ, PolicyKind::Cql,
                                        PolicyKind::Random};
  bool pass = true;
  std::string detail;
  for (double tau : {0.1, 10.0}) {
    SimConfig cfg = spec.base;
    cfg.task.tau = tau;
    std::array<stats::Summary, 4> res;
    std::size_t converged = 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      ReplicateResult r = replicate(cfg, chain[i], seeds, spec.workers);
      res[i] = r.total_delay;
      converged += r.converged;
    }
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      double slack = std::max(res[i].ci95_half_width, res[i + 1].ci95_half_width);
      if (res[i].mean > res[i + 1].mean + slack) { pass = false; }
    }
    double reduction = 100.0 * (1.0 - res[1].mean / res[3].mean);
    if (reduction < 15.0) { pass = false; }
    detail += fmt::format("tau={}: fi {:.2f}, wilfq {:.2f}, cql {:.2f}, ran {:.2f} s, wilfq vs ran -{:.1f}%, "
                          "{}/80 converged; ",
                          tau, res[0].mean, res[1].mean, res[2].mean, res[3].mean, reduction, converged);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Outcome state_distribution()
{
  ExperimentSpec spec = desk_spec();
  auto busy_fraction = [&](PolicyKind p) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SimConfig cfg = spec.base;
      cfg.seed = seed;
      cfg.task.tau = 0.1;
      Simulation sim(cfg, p);
      double busy = 0.0;
      int n = 0;
      for (int r = 1; r <= 300; ++r) {
        RoundRecord rec = sim.run_round();
        if (r >= 100) {
          busy += rec.state_fraction[index_of(ClientState::Busy)];
          ++n;
        }
      }
      total += busy / n;
    }
    return total / 10.0;
  };
  double w = busy_fraction(PolicyKind::WilfQ);
  double c = busy_fraction(PolicyKind::Cql);
  double f = busy_fraction(PolicyKind::FullInformation);
  bool pass = w < c && std::abs(w - f) <= 0.05;
  return {pass, fmt::format("busy fraction wilfq {:.4f}, cql {:.4f}, fi {:.4f}", w, c, f)};
}

Outcome convergence_rate()
{
  ExperimentSpec spec = desk_spec();
  int good = 0;
  double lo = 0.0, hi = -10.0, min_r2 = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimConfig cfg = spec.base;
    cfg.seed = seed;
    cfg.task.tau = 10.0;
    Simulation sim(cfg, PolicyKind::FullInformation);
    std::vector<double> x, y;
    while (!sim.converged() && sim.round() < cfg.max_rounds) {
      RoundRecord rec = sim.run_round();
      if (rec.round >= 10 && rec.loss_gap > 0.0) {
        x.push_back(std::log(static_cast<double>(rec.round)));
        y.push_back(std::log(rec.loss_gap));
      }
    }
    auto fit = stats::linear_fit(x, y);
    lo = std::min(lo, fit.slope);
    hi = std::max(hi, fit.slope);
    min_r2 = std::min(min_r2, fit.r_squared);
    good += (fit.slope >= -1.6 && fit.slope <= -0.6 && fit.r_squared >= 0.8) ? 1 : 0;
  }
  return {good >= 8, fmt::format("{}/10 seeds in range, slopes [{:.2f}, {:.2f}], min R^2 {:.3f}", good, lo, hi, min_r2)};
}

std::map<std::string, std::string> read_dir(const fs::path& dir)
{
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

fs::path scratch(const std::string& name)
{
  fs::path p = fs::temp_directory_path() / ("wfl_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentSpec small_matrix()
{
  ExperimentSpec spec = desk_spec();
  spec.base.max_rounds = 60;
  spec.tau_values = {0.1};
  spec.seeds = {1, 2};
  return spec;
}

Outcome determinism()
{
  ExperimentSpec spec = small_matrix();
  const fs::path first = scratch("a");
  spec.output_dir = first;
  spec.workers = 1;
  if (run_experiment(spec) != 0) { return {false, "first run failed"}; }
  spec.output_dir = scratch("b");
  spec.workers = 2;
  if (run_experiment(spec) != 0) { return {false, "second run failed"}; }
  auto a = read_dir(first);
  auto b = read_dir(spec.output_dir);
  std::size_t rounds = 0, same = 0;
  for (const auto& [name, text] : a) {
    if (name.rfind("rounds_", 0) != 0) { continue; }
    ++rounds;
    auto it = b.find(name);
    same += (it != b.end() && it->second == text) ? 1 : 0;
  }
  bool pass = rounds == 12 && same == rounds && a == b;
  return {pass, fmt::format("{}/{} round files byte-identical across reruns (1 vs 2 workers)", same, rounds)};
}

Outcome statistical_reporting()
{
  SimConfig cfg = desk_spec().base;
  cfg.max_rounds = 20;
  std::vector<std::uint64_t> seeds{1, 2};
  std::vector<RunResult> runs;
  ReplicateResult r = replicate(cfg, PolicyKind::Random, seeds, 1, &runs);
  const double x1 = runs[0].total_delay, x2 = runs[1].total_delay;
  const double mean = 0.5 * (x1 + x2);
  const double sd = std::abs(x1 - x2) / std::sqrt(2.0);
  const double t975_1 = 12.706204736174707;
  const double half = t975_1 * sd / std::sqrt(2.0);
  bool interval_ok = std::abs(r.total_delay.mean - mean) <= 1e-12 * mean &&
                     std::abs(r.total_delay.ci95_half_width - half) <= 1e-12 * half;

  // Every summary metric carries a CI column, filled whenever a cell has two or more converged runs.
  ExperimentSpec spec = small_matrix();
  spec.base.max_rounds = 2000;
  spec.policies = {PolicyKind::Random, PolicyKind::FullInformation};
  spec.output_dir = scratch("ci");
  if (run_experiment(spec) != 0) { return {false, "summary run failed"}; }
  std::ifstream in(spec.output_dir / "summary.csv");
  std::string header, line;
  std::getline(in, header);
  bool columns = header.find("ci95_total_delay_s") != std::string::npos &&
                 header.find("ci95_rounds") != std::string::npos && header.find("ci95_final_acc") != std::string::npos;
  int rows = 0, filled = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string c; std::getline(row, c, ',');) { cells.push_back(c); }
    if (cells.size() >= 11 && !cells[6].empty() && !cells[8].empty() && !cells[10].empty() &&
        std::isfinite(std::stod(cells[6])) && std::isfinite(std::stod(cells[10]))) {
      ++filled;
    }
  }
  bool pass = interval_ok && columns && rows == 2 && filled == rows;
  return {pass, fmt::format("two-seed interval {:.6f} +/- {:.6f} (hand {:.6f} +/- {:.6f}), {}/{} summary rows with CIs",
                            r.total_delay.mean, r.total_delay.ci95_half_width, mean, half, filled, rows)};
}

} // namespace

int main()
{
  spdlog::set_level(spdlog::level::err);
  struct Criterion
  {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "sampler fidelity", sampler_fidelity},
      {2, "exact solver correctness", exact_solver},
      {3, "Q-learning convergence", q_learning_convergence},
      {4, "index ordering recovery", index_ordering},
      {5, "end-to-end policy ordering", policy_ordering},
      {6, "state distribution", state_distribution},
      {7, "convergence rate", convergence_rate},
      {8, "determinism", determinism},
      {9, "statistical reporting", statistical_reporting},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail
              << fmt::format(" [{:.1f} s]", secs) << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
