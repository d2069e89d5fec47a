#include "wfl/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <sstream>

namespace wfl {

namespace {

std::string trim(std::string_view s)
{
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) { return {}; }
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_list(const std::string& value)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) { out.push_back(t); }
  }
  return out;
}

double to_double(const std::string& key, const std::string& value)
{
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out)) {
    throw ConfigError(key, "invalid number '" + value + "'");
  }
  return out;
}

long to_long(const std::string& key, const std::string& value)
{
  long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(key, "invalid integer '" + value + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& value)
{
  long v = to_long(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key, "integer out of range");
  }
  return static_cast<int>(v);
}

std::vector<double> to_doubles(const std::string& key, const std::string& value)
{
  std::vector<double> out;
  for (const auto& item : split_list(value)) { out.push_back(to_double(key, item)); }
  return out;
}

Matrix3 to_matrix(const std::string& key, const std::string& value)
{
  auto v = to_doubles(key, value);
  if (v.size() != 9) { throw ConfigError(key, "expected 9 row-major probabilities"); }
  Matrix3 m;
  for (int i = 0; i < 9; ++i) { m(i / 3, i % 3) = v[static_cast<std::size_t>(i)]; }
  return m;
}

using Setter = std::function<void(ExperimentSpec&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& top_level_setters()
{
  static const std::map<std::string, Setter> setters = {
      {"n_clients", [](auto& s, auto& k, auto& v) { s.base.n_clients = to_int(k, v); }},
      {"budget", [](auto& s, auto& k, auto& v) { s.base.budget = to_int(k, v); }},
      {"participation_fraction",
       [](auto& s, auto& k, auto& v) {
         double rho = to_double(k, v);
         if (!(rho > 0.0 && rho <= 1.0)) { throw ConfigError(k, "must lie in (0, 1]"); }
         s.base.budget = std::max(1, static_cast<int>(std::lround(rho * s.base.n_clients)));
       }},
      {"subsidies",
       [](auto& s, auto& k, auto& v) {
         try {
           s.base.subsidies = SubsidySet(to_doubles(k, v));
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"discount", [](auto& s, auto& k, auto& v) { s.base.discount = to_double(k, v); }},
      {"lambda", [](auto& s, auto& k, auto& v) { s.base.lambda = to_double(k, v); }},
      {"alpha", [](auto& s, auto& k, auto& v) { s.base.alpha = to_double(k, v); }},
      {"eta.scale", [](auto& s, auto& k, auto& v) { s.base.eta.scale = to_double(k, v); }},
      {"eta.exponent", [](auto& s, auto& k, auto& v) { s.base.eta.exponent = to_double(k, v); }},
      {"gamma.scale", [](auto& s, auto& k, auto& v) { s.base.gamma.scale = to_double(k, v); }},
      {"gamma.exponent", [](auto& s, auto& k, auto& v) { s.base.gamma.exponent = to_double(k, v); }},
      {"latency_cap", [](auto& s, auto& k, auto& v) { s.base.latency_cap = to_double(k, v); }},
      {"cap_multiplier", [](auto& s, auto& k, auto& v) { s.base.cap_multiplier = to_double(k, v); }},
      {"noise_power_w", [](auto& s, auto& k, auto& v) { s.base.noise_power_w = to_double(k, v); }},
      {"transmit_power_dbm", [](auto& s, auto& k, auto& v) { s.base.transmit_power_dbm = to_double(k, v); }},
      {"base_seconds_per_sample", [](auto& s, auto& k, auto& v) { s.base.base_seconds_per_sample = to_double(k, v); }},
      {"max_rounds", [](auto& s, auto& k, auto& v) { s.base.max_rounds = to_int(k, v); }},
      {"subsidy_offset", [](auto& s, auto& k, auto& v) { s.base.subsidy_offset = to_double(k, v); }},
      {"subsidy_unit", [](auto& s, auto& k, auto& v) { s.base.subsidy_unit = to_double(k, v); }},
      {"observability",
       [](auto& s, auto& k, auto& v) {
         if (v == "oracle") {
           s.base.observability = Observability::Oracle;
         } else if (v == "inferred") {
           s.base.observability = Observability::Inferred;
         } else {
           throw ConfigError(k, "expected 'oracle' or 'inferred', got '" + v + "'");
         }
       }},
      {"q_sharing",
       [](auto& s, auto& k, auto& v) {
         if (v == "class") {
           s.base.sharing = QSharing::Class;
         } else if (v == "client") {
           s.base.sharing = QSharing::Client;
         } else {
           throw ConfigError(k, "expected 'class' or 'client', got '" + v + "'");
         }
       }},
      {"task.n_train", [](auto& s, auto& k, auto& v) { s.base.task.n_train = to_int(k, v); }},
      {"task.n_test", [](auto& s, auto& k, auto& v) { s.base.task.n_test = to_int(k, v); }},
      {"task.dim", [](auto& s, auto& k, auto& v) { s.base.task.dim = to_int(k, v); }},
      {"task.classes", [](auto& s, auto& k, auto& v) { s.base.task.classes = to_int(k, v); }},
      {"task.cluster_spread", [](auto& s, auto& k, auto& v) { s.base.task.cluster_spread = to_double(k, v); }},
      {"task.separation", [](auto& s, auto& k, auto& v) { s.base.task.separation = to_double(k, v); }},
      {"task.lr", [](auto& s, auto& k, auto& v) { s.base.task.lr = to_double(k, v); }},
      {"task.batch", [](auto& s, auto& k, auto& v) { s.base.task.batch = to_int(k, v); }},
      {"task.epochs", [](auto& s, auto& k, auto& v) { s.base.task.epochs = to_int(k, v); }},
      {"task.oracle_tolerance", [](auto& s, auto& k, auto& v) { s.base.task.oracle_tolerance = to_double(k, v); }},
      {"task.dataset_path", [](auto& s, auto&, auto& v) { s.base.task.dataset_path = v; }},
      {"policies",
       [](auto& s, auto& k, auto& v) {
         s.policies.clear();
         for (const auto& name : split_list(v)) {
           auto p = parse_policy(name);
           if (!p) { throw ConfigError(k, "unknown policy '" + name + "'"); }
           s.policies.push_back(*p);
         }
       }},
      {"taus", [](auto& s, auto& k, auto& v) { s.tau_values = to_doubles(k, v); }},
      {"seeds",
       [](auto& s, auto& k, auto& v) {
         try {
           s.seeds = parse_seed_range(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"output_dir", [](auto& s, auto&, auto& v) { s.output_dir = v; }},
      {"workers", [](auto& s, auto& k, auto& v) { s.workers = to_int(k, v); }},
  };
  return setters;
}

void set_class_field(ExperimentSpec& spec, const std::string& key, const std::string& value)
{
  // classes.<n>.<field>, n counted from 1
  auto first = key.find('.');
  auto second = key.find('.', first + 1);
  if (second == std::string::npos) { throw ConfigError(key, "unknown key"); }
  std::string number = key.substr(first + 1, second - first - 1);
  std::string field = key.substr(second + 1);
  long n = 0;
  auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), n);
  if (ec != std::errc{} || ptr != number.data() + number.size() || n < 1 || n > 64) {
    throw ConfigError(key, "class number must be an integer in [1, 64]");
  }
  auto& classes = spec.base.classes;
  while (classes.size() < static_cast<std::size_t>(n)) {
    ClientClass extra;
    extra.id = static_cast<int>(classes.size()) + 1;
    classes.push_back(extra);
  }
  ClientClass& cls = classes[static_cast<std::size_t>(n - 1)];
  if (field == "population") {
    cls.population = to_int(key, value);
  } else if (field == "capacity_lo") {
    cls.capacity_lo = to_double(key, value);
  } else if (field == "capacity_hi") {
    cls.capacity_hi = to_double(key, value);
  } else if (field == "bandwidth_bps") {
    cls.bandwidth_bps = to_double(key, value);
  } else if (field == "channel_gain_mean") {
    cls.channel_gain_mean = to_double(key, value);
  } else if (field == "state_coefficients") {
    auto v = to_doubles(key, value);
    if (v.size() != 3) { throw ConfigError(key, "expected three coefficients (normal, limited, busy)"); }
    std::copy(v.begin(), v.end(), cls.state_coefficients.begin());
  } else if (field == "p_selected") {
    cls.transitions.selected = to_matrix(key, value);
  } else if (field == "p_unselected") {
    cls.transitions.unselected = to_matrix(key, value);
  } else {
    throw ConfigError(key, "unknown key");
  }
}

std::string policy_tau_suffix(double tau) { return fmt::format("tau{}", format_float(tau)); }

} // namespace

void ExperimentSpec::validate() const
{
  base.validate();
  if (policies.empty()) { throw ConfigError("policies", "at least one policy is required"); }
  if (tau_values.empty()) { throw ConfigError("taus", "at least one tau is required"); }
  for (double tau : tau_values) {
    if (!(tau > 0.0)) { throw ConfigError("taus", "tau values must be positive"); }
  }
  if (seeds.empty()) { throw ConfigError("seeds", "at least one seed is required"); }
  if (workers < 1) { throw ConfigError("workers", "must be at least 1"); }
}

ExperimentSpec default_experiment()
{
  ExperimentSpec spec;
  spec.base = default_config();
  spec.policies.assign(kAllPolicies.begin(), kAllPolicies.end());
  spec.tau_values = {0.1, 10.0};
  spec.seeds = {1, 2, 3, 4, 5};
  return spec;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text)
{
  std::vector<std::uint64_t> out;
  auto parse_u64 = [](const std::string& s) {
    std::uint64_t v = 0;
    auto t = trim(s);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
      throw std::invalid_argument("invalid seed '" + t + "'");
    }
    return v;
  };
  auto dots = text.find("..");
  if (dots != std::string::npos) {
    std::uint64_t a = parse_u64(text.substr(0, dots));
    std::uint64_t b = parse_u64(text.substr(dots + 2));
    if (b < a || b - a > 100000) { throw std::invalid_argument("invalid seed range '" + text + "'"); }
    for (std::uint64_t s = a; s <= b; ++s) { out.push_back(s); }
    return out;
  }
  for (const auto& item : split_list(text)) { out.push_back(parse_u64(item)); }
  if (out.empty()) { throw std::invalid_argument("empty seed list"); }
  return out;
}

ExperimentSpec parse_config_text(const std::string& text)
{
  ExperimentSpec spec = default_experiment();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) { line.resize(hash); }
    auto content = trim(line);
    if (content.empty()) { continue; }
    auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    std::string key = trim(std::string_view(content).substr(0, eq));
    std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.rfind("classes.", 0) == 0) {
      set_class_field(spec, key, value);
      continue;
    }
    auto it = top_level_setters().find(key);
    if (it == top_level_setters().end()) { throw ConfigError(key, "unknown key"); }
    it->second(spec, key, value);
  }
  spec.validate();
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("path", "cannot read config file '" + path.string() + "'"); }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string format_float(double value) { return fmt::format("{:.9g}", value); }

std::string cell_label(PolicyKind policy, double tau)
{
  return fmt::format("{}_{}", policy_name(policy), policy_tau_suffix(tau));
}

void write_round_csv(const RunResult& result, std::ostream& out)
{
  if (result.records.empty()) { throw std::invalid_argument("write_round_csv: empty result"); }
  out << "round,cum_delay_s,round_latency_s,loss_gap,full_loss,test_acc,n_selected,n_included,"
         "frac_normal,frac_limited,frac_busy,explored\n";
  for (const RoundRecord& r : result.records) {
    out << r.round << ',' << format_float(r.cumulative_delay) << ',' << format_float(r.round_latency) << ','
        << format_float(r.loss_gap) << ',' << format_float(r.full_loss) << ',' << format_float(r.test_accuracy) << ','
        << r.selected.size() << ',' << r.included.size() << ',' << format_float(r.state_fraction[0]) << ','
        << format_float(r.state_fraction[1]) << ',' << format_float(r.state_fraction[2]) << ','
        << (r.explored ? 1 : 0) << '\n';
  }
}

void write_round_csv(const RunResult& result, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) { throw std::runtime_error("cannot write " + path.string()); }
  write_round_csv(result, out);
  if (!out) { throw std::runtime_error("I/O failure writing " + path.string()); }
}

RunResult read_round_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) { throw std::runtime_error("cannot read " + path.string()); }
  std::string line;
  std::getline(in, line);
  RunResult result;
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) { cells.push_back(cell); }
    if (cells.size() != 12) { throw std::runtime_error("malformed round row in " + path.string()); }
    RoundRecord r;
    r.round = std::stoi(cells[0]);
    r.cumulative_delay = std::stod(cells[1]);
    r.round_latency = std::stod(cells[2]);
    r.loss_gap = std::stod(cells[3]);
    r.full_loss = std::stod(cells[4]);
    r.test_accuracy = std::stod(cells[5]);
    r.selected.resize(std::stoul(cells[6]));
    r.included.resize(std::stoul(cells[7]));
    for (std::size_t s = 0; s < kNumStates; ++s) { r.state_fraction[s] = std::stod(cells[8 + s]); }
    r.explored = cells[11] == "1";
    result.total_delay += r.round_latency;
    result.records.push_back(std::move(r));
  }
  result.rounds_to_threshold = static_cast<int>(result.records.size());
  return result;
}

std::vector<SummaryRow> summarize(std::span<const CellResult> cells)
{
  if (cells.empty()) { throw std::invalid_argument("summarize: no cells"); }
  std::vector<SummaryRow> rows;
  for (const CellResult& cell : cells) {
    SummaryRow row;
    row.policy = cell.policy;
    row.tau = cell.tau;
    row.runs = cell.runs.size();
    std::vector<double> delays, rounds, accs;
    for (const RunResult& r : cell.runs) {
      accs.push_back(r.records.empty() ? 0.0 : r.records.back().test_accuracy);
      if (!r.converged) { continue; }
      ++row.converged;
      delays.push_back(r.total_delay);
      rounds.push_back(static_cast<double>(r.rounds_to_threshold));
    }
    row.total_delay = stats::summarize(delays);
    row.rounds = stats::summarize(rounds);
    row.final_accuracy = stats::summarize(accs);
    row.convergence_rate = row.runs > 0 ? static_cast<double>(row.converged) / static_cast<double>(row.runs) : 0.0;
    rows.push_back(row);
  }
  for (SummaryRow& row : rows) {
    auto ran = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) {
      return r.policy == PolicyKind::Random && r.tau == row.tau;
    });
    if (ran == rows.end() || ran->total_delay.count == 0 || row.total_delay.count == 0) {
      spdlog::warn("no converged RAN cell for tau={}; delay reduction left empty", row.tau);
      continue;
    }
    row.delay_reduction_pct = 100.0 * (1.0 - row.total_delay.mean / ran->total_delay.mean);
  }
  return rows;
}

void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out)
{
  out << "policy,tau,runs,converged,convergence_rate,mean_total_delay_s,ci95_total_delay_s,mean_rounds,ci95_rounds,"
         "mean_final_acc,ci95_final_acc,delay_reduction_vs_ran_pct\n";
  for (const SummaryRow& r : rows) {
    out << policy_name(r.policy) << ',' << format_float(r.tau) << ',' << r.runs << ',' << r.converged << ','
        << format_float(r.convergence_rate) << ',' << format_float(r.total_delay.mean) << ','
        << format_float(r.total_delay.ci95_half_width) << ',' << format_float(r.rounds.mean) << ','
        << format_float(r.rounds.ci95_half_width) << ',' << format_float(r.final_accuracy.mean) << ','
        << format_float(r.final_accuracy.ci95_half_width) << ','
        << (r.delay_reduction_pct ? format_float(*r.delay_reduction_pct) : std::string()) << '\n';
  }
}

void write_aggregate_csv(const CellResult& cell, std::ostream& out)
{
  ReplicateResult agg = aggregate_runs(cell.runs);
  out << "delay_s,mean_test_acc\n";
  for (std::size_t i = 0; i < agg.delay_grid.size(); ++i) {
    out << format_float(agg.delay_grid[i]) << ',' << format_float(agg.mean_accuracy[i]) << '\n';
  }
}

int run_experiment(const ExperimentSpec& spec)
{
  try {
    spec.validate();
    std::filesystem::create_directories(spec.output_dir);
    {
      std::ofstream probe(spec.output_dir / ".write_probe");
      if (!probe) { throw std::runtime_error("output directory is not writable: " + spec.output_dir.string()); }
    }
    std::filesystem::remove(spec.output_dir / ".write_probe");

    std::vector<CellResult> cells;
    for (double tau : spec.tau_values) {
      for (PolicyKind policy : spec.policies) {
        SimConfig config = spec.base;
        config.task.tau = tau;
        CellResult cell;
        cell.policy = policy;
        cell.tau = tau;
        cell.seeds = spec.seeds;
        cell.runs.resize(spec.seeds.size());
        const auto pool = static_cast<std::size_t>(spec.workers);
        for (std::size_t begin = 0; begin < spec.seeds.size(); begin += pool) {
          std::vector<std::future<RunResult>> batch;
          for (std::size_t i = begin; i < std::min(spec.seeds.size(), begin + pool); ++i) {
            SimConfig c = config;
            c.seed = spec.seeds[i];
            batch.push_back(std::async(pool > 1 ? std::launch::async : std::launch::deferred,
                                       [c, policy] { return run_simulation(c, policy); }));
          }
          for (std::size_t i = 0; i < batch.size(); ++i) { cell.runs[begin + i] = batch[i].get(); }
        }
        for (std::size_t i = 0; i < cell.runs.size(); ++i) {
          auto path = spec.output_dir / fmt::format("rounds_{}_seed{}.csv", cell_label(policy, tau), spec.seeds[i]);
          write_round_csv(cell.runs[i], path);
        }
        {
          auto path = spec.output_dir / fmt::format("aggregate_{}.csv", cell_label(policy, tau));
          std::ofstream out(path, std::ios::binary);
          if (!out) { throw std::runtime_error("cannot write " + path.string()); }
          write_aggregate_csv(cell, out);
        }
        spdlog::info("finished {} ({} runs)", cell_label(policy, tau), cell.runs.size());
        cells.push_back(std::move(cell));
      }
    }
    auto rows = summarize(cells);
    auto path = spec.output_dir / "summary.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) { throw std::runtime_error("cannot write " + path.string()); }
    write_summary_csv(rows, out);
    for (const SummaryRow& r : rows) {
      spdlog::info("{:>6} tau={:<5} converged {}/{} delay {:.4f} +/- {:.4f} s rounds {:.1f} reduction {}",
                   policy_name(r.policy), r.tau, r.converged, r.runs, r.total_delay.mean, r.total_delay.ci95_half_width,
                   r.rounds.mean, r.delay_reduction_pct ? fmt::format("{:.1f}%", *r.delay_reduction_pct) : "n/a");
    }
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("runtime error: {}", e.what());
    return 2;
  }
}

void print_exact_indices(const ExperimentSpec& spec, std::ostream& out)
{
  SimConfig config = spec.base;
  config.task.tau = spec.tau_values.front();
  config.seed = spec.seeds.front();
  World world = build_world(config);
  out << "class,state,expected_capped_latency_s,exact_index\n";
  for (std::size_t k = 0; k < world.classes.size(); ++k) {
    for (ClientState s : kAllStates) {
      out << world.classes[k].id << ',' << to_string(s) << ','
          << format_float(-world.class_arms[k].reward(static_cast<Eigen::Index>(index_of(s)), 1)) << ','
          << format_float(world.exact_indices.at({static_cast<int>(k), s})) << '\n';
    }
  }
  out << "# latency_cap_s=" << format_float(world.noise.latency_cap_s)
      << " oracle_loss=" << format_float(world.oracle_loss) << '\n';
}

} // namespace wfl
