#include "wfl/sim_engine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace wfl {

namespace {

// Stream labels for make_stream.
enum : std::uint64_t { kSetupStream = 1, kEnvStream = 2, kTrainStream = 3, kPolicyStream = 4, kCapStream = 5 };

std::uint64_t tau_bits(double tau)
{
  std::uint64_t bits = 0;
  static_assert(sizeof(bits) == sizeof(tau));
  std::memcpy(&bits, &tau, sizeof(bits));
  return bits;
}

double capped(double value, double cap) { return std::min(value, cap); }

// Median over sampled rounds of the slowest of `budget` random clients, all in the normal state.
double derive_latency_cap(const std::vector<Client>& clients, const std::vector<ClientClass>& classes,
                          const NoiseAndCap& noise, int budget, double multiplier, Rng& rng)
{
  constexpr int kSampledRounds = 2001;
  std::vector<double> maxima;
  maxima.reserve(kSampledRounds);
  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto k = std::min(static_cast<std::size_t>(budget), clients.size());
  for (int i = 0; i < kSampledRounds; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, order.size() - 1);
      std::swap(order[j], order[pick(rng)]);
    }
    double slowest = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const Client& c = clients[order[j]];
      const ClientClass& cls = classes[static_cast<std::size_t>(c.class_id)];
      double t = sample_training_time(c, ClientState::Normal, cls, rng) +
                 communication_time(c, cls, sample_channel_gain_sq(cls, rng), noise);
      slowest = std::max(slowest, t);
    }
    maxima.push_back(slowest);
  }
  auto mid = maxima.begin() + static_cast<std::ptrdiff_t>(maxima.size() / 2);
  std::nth_element(maxima.begin(), mid, maxima.end());
  return multiplier * *mid;
}

} // namespace

double Schedule::at(int round) const
{
  return std::min(1.0, scale * std::pow(static_cast<double>(std::max(round, 1)), -exponent));
}

void SimConfig::validate() const
{
  if (n_clients < 1) { throw ConfigError("n_clients", "must be at least 1"); }
  if (classes.empty()) { throw ConfigError("classes", "at least one class is required"); }
  int population = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    try {
      classes[i].validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("classes." + std::to_string(i + 1), e.what());
    }
    population += classes[i].population;
  }
  if (population != n_clients) { throw ConfigError("classes", "class populations must sum to n_clients"); }
  if (budget < 1 || budget > n_clients) { throw ConfigError("budget", "must lie in [1, n_clients]"); }
  if (!(discount > 0.0 && discount < 1.0)) { throw ConfigError("discount", "must lie in (0, 1)"); }
  if (!(alpha > 0.0 && alpha < 1.0)) { throw ConfigError("alpha", "must lie in (0, 1)"); }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) { throw ConfigError("lambda", "must be a non-negative number"); }
  if (max_rounds < 1) { throw ConfigError("max_rounds", "must be at least 1"); }
  if (!(eta.scale > 0.0) || eta.exponent < 0.0) { throw ConfigError("eta", "scale must be positive and exponent >= 0"); }
  if (!(gamma.scale >= 0.0) || gamma.exponent < 0.0) { throw ConfigError("gamma", "scale and exponent must be >= 0"); }
  if (latency_cap && !(*latency_cap > 0.0)) { throw ConfigError("latency_cap", "must be positive"); }
  if (!(cap_multiplier > 0.0)) { throw ConfigError("cap_multiplier", "must be positive"); }
  if (!(noise_power_w > 0.0)) { throw ConfigError("noise_power_w", "must be positive"); }
  if (!(base_seconds_per_sample > 0.0)) { throw ConfigError("base_seconds_per_sample", "must be positive"); }
  if (subsidy_unit && !(*subsidy_unit > 0.0)) { throw ConfigError("subsidy_unit", "must be positive"); }
  if (task.classes < 2) { throw ConfigError("task.classes", "must be at least 2"); }
  if (task.dim < 1) { throw ConfigError("task.dim", "must be at least 1"); }
  if (task.n_train < std::max(task.classes, n_clients)) { throw ConfigError("task.n_train", "must be >= classes and n_clients"); }
  if (task.n_test < task.classes) { throw ConfigError("task.n_test", "must be >= classes"); }
  if (!(task.tau > 0.0)) { throw ConfigError("task.tau", "must be positive"); }
  if (!(task.lr > 0.0)) { throw ConfigError("task.lr", "must be positive"); }
  if (task.batch < 1) { throw ConfigError("task.batch", "must be at least 1"); }
  if (task.epochs < 0) { throw ConfigError("task.epochs", "must be non-negative"); }
  if (!(task.cluster_spread >= 0.0)) { throw ConfigError("task.cluster_spread", "must be non-negative"); }
  if (!(task.oracle_tolerance > 0.0)) { throw ConfigError("task.oracle_tolerance", "must be positive"); }
}

std::vector<ClientClass> default_classes()
{
  std::vector<ClientClass> classes(3);

  classes[0].id = 1;
  classes[0].population = 30;
  classes[0].capacity_lo = 0.7;
  classes[0].capacity_hi = 1.0;
  classes[0].bandwidth_bps = 100e6;
  classes[0].transitions.selected << 0.6, 0.3, 0.1,
                                     0.4, 0.4, 0.2,
                                     0.3, 0.3, 0.4;
  classes[0].transitions.unselected << 0.8, 0.1, 0.1,
                                       0.5, 0.4, 0.1,
                                       0.4, 0.3, 0.3;

  classes[1].id = 2;
  classes[1].population = 40;
  classes[1].capacity_lo = 0.4;
  classes[1].capacity_hi = 0.7;
  classes[1].bandwidth_bps = 50e6;
  classes[1].transitions = sample_transitions();

  classes[2].id = 3;
  classes[2].population = 30;
  classes[2].capacity_lo = 0.2;
  classes[2].capacity_hi = 0.4;
  classes[2].bandwidth_bps = 20e6;
  classes[2].transitions.selected << 0.3, 0.4, 0.3,
                                     0.1, 0.5, 0.4,
                                     0.1, 0.2, 0.7;
  classes[2].transitions.unselected << 0.5, 0.3, 0.2,
                                       0.2, 0.5, 0.3,
                                       0.1, 0.3, 0.6;
  return classes;
}

SimConfig default_config()
{
  SimConfig config;
  config.classes = default_classes();
  return config;
}

double reward(double training_time, double comm_time, double loss_gap, double lambda, int action)
{
  double accuracy_cost = lambda * loss_gap;
  if (action == 1) { return -(training_time + comm_time + accuracy_cost); }
  return -accuracy_cost;
}

ClientState estimate_state(const Client& client, Observability mode, std::optional<double> last_training_latency,
                           const ClientClass& cls, ClientState previous)
{
  if (mode == Observability::Oracle) { return client.true_state; }
  if (!last_training_latency) { return previous; }
  ClientState best = ClientState::Normal;
  double best_distance = std::numeric_limits<double>::infinity();
  for (ClientState s : kAllStates) {
    double distance = std::abs(*last_training_latency - expected_training_time(client, s, cls));
    if (distance < best_distance) {
      best = s;
      best_distance = distance;
    }
  }
  return best;
}

double nominal_comm_time(const Client& client, const ClientClass& cls, const NoiseAndCap& noise)
{
  return communication_time(client, cls, cls.channel_gain_mean, noise);
}

std::vector<ArmMdpd> build_class_arms(const std::vector<Client>& clients, const std::vector<ClientClass>& classes,
                                      const NoiseAndCap& noise, double discount)
{
  std::vector<ArmMdpd> arms;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    Vector3 cost = Vector3::Zero();
    int members = 0;
    for (const Client& c : clients) {
      if (static_cast<std::size_t>(c.class_id) != k) { continue; }
      ++members;
      for (ClientState s : kAllStates) {
        cost(static_cast<Eigen::Index>(index_of(s))) +=
            expected_capped_latency(c, s, classes[k], nominal_comm_time(c, classes[k], noise), noise.latency_cap_s);
      }
    }
    if (members > 0) { cost /= members; }
    arms.push_back(make_arm<double>(classes[k].transitions, Vector3::Zero(), -cost, discount));
  }
  return arms;
}

ExactIndexTable compute_exact_indices(const std::vector<ArmMdpd>& arms, double tol)
{
  ExactIndexTable table;
  for (std::size_t k = 0; k < arms.size(); ++k) {
    for (ClientState s : kAllStates) { table[{static_cast<int>(k), s}] = exact_whittle(arms[k], s, tol); }
  }
  return table;
}

World build_world(const SimConfig& config)
{
  config.validate();
  World world;
  Rng rng = make_stream(config.seed ^ (tau_bits(config.task.tau) * 0x9e3779b97f4a7c15ull), kSetupStream);

  const TaskConfig& task = config.task;
  SyntheticTask data = generate_synthetic_task(task.n_train, task.n_test, task.classes, task.dim, task.cluster_spread,
                                               task.separation, rng);
  world.train = std::move(data.train);
  world.test = std::move(data.test);
  if (!task.dataset_path.empty()) {
    world.train = load_dataset_csv(task.dataset_path);
    if (world.train.rows() < config.n_clients) { throw ConfigError("task.dataset_path", "fewer rows than clients"); }
    // Hold out every fifth row as the test set.
    std::vector<Eigen::Index> keep, hold;
    for (Eigen::Index i = 0; i < world.train.rows(); ++i) { (i % 5 == 4 ? hold : keep).push_back(i); }
    Dataset full = std::move(world.train);
    auto take = [&](const std::vector<Eigen::Index>& rows) {
      Dataset ds;
      ds.num_classes = full.num_classes;
      ds.features = full.features(rows, Eigen::all);
      for (auto r : rows) { ds.labels.push_back(full.labels[static_cast<std::size_t>(r)]); }
      return ds;
    };
    world.train = take(keep);
    world.test = take(hold);
  }

  world.shards = dirichlet_partition(world.train, config.n_clients, task.tau, rng);
  world.classes = config.classes;

  const double model_bits = static_cast<double>(world.train.param_count()) * 32.0;
  const double power = dbm_to_watts(config.transmit_power_dbm);
  int id = 0;
  for (std::size_t k = 0; k < world.classes.size(); ++k) {
    const ClientClass& cls = world.classes[k];
    std::uniform_real_distribution<double> capacity(cls.capacity_lo, cls.capacity_hi);
    for (int i = 0; i < cls.population; ++i, ++id) {
      Client c;
      c.id = id;
      c.class_id = static_cast<int>(k);
      double kappa = cls.capacity_lo == cls.capacity_hi ? cls.capacity_lo : capacity(rng);
      c.compute_coefficient = config.base_seconds_per_sample / kappa;
      c.dataset_size = world.shards[static_cast<std::size_t>(id)].size();
      c.transmit_power_w = power;
      c.model_size_bits = model_bits;
      // Start each client from the stationary law of its unselected chain.
      Vector3 pi = stationary_distribution(cls.transitions.unselected);
      std::discrete_distribution<int> initial({pi(0), pi(1), pi(2)});
      c.true_state = state_from_index(static_cast<std::size_t>(initial(rng)));
      c.validate();
      world.clients.push_back(c);
    }
  }

  world.noise.noise_power_w = config.noise_power_w;
  if (config.latency_cap) {
    world.noise.latency_cap_s = *config.latency_cap;
  } else {
    Rng cap_rng = make_stream(config.seed ^ (tau_bits(config.task.tau) * 0x9e3779b97f4a7c15ull), kCapStream);
    world.noise.latency_cap_s =
        derive_latency_cap(world.clients, world.classes, world.noise, config.budget, config.cap_multiplier, cap_rng);
  }
  world.noise.validate();

  world.oracle_loss = optimal_loss_oracle(world.train, task.oracle_tolerance).loss;

  world.class_arms = build_class_arms(world.clients, world.classes, world.noise, config.discount);
  world.exact_indices = compute_exact_indices(world.class_arms);

  for (const Client& c : world.clients) {
    const ClientClass& cls = world.classes[static_cast<std::size_t>(c.class_id)];
    Vector3 pi = stationary_distribution(cls.transitions.unselected);
    double expected = nominal_comm_time(c, cls, world.noise);
    for (ClientState s : kAllStates) {
      expected += pi(static_cast<Eigen::Index>(index_of(s))) * expected_training_time(c, s, cls);
    }
    world.expected_latency[c.id] = expected;
  }

  const SubsidySet& lambda_set = config.subsidies;
  world.subsidy_offset = config.subsidy_offset.value_or(lambda_set.min() + lambda_set.max());
  double slowest = 0.0;
  for (const ArmMdpd& arm : world.class_arms) { slowest = std::max(slowest, -arm.reward.col(1).minCoeff()); }
  world.subsidy_unit = config.subsidy_unit.value_or(slowest / std::max(std::abs(lambda_set.max()), 1e-12));
  return world;
}

Simulation::Simulation(SimConfig config, PolicyKind policy)
  : Simulation(config, policy, build_world(config))
{
}

Simulation::Simulation(SimConfig config, PolicyKind policy, World world)
  : config_(std::move(config)), policy_(policy), world_(std::move(world)),
    env_rng_(make_stream(config_.seed, kEnvStream)), train_rng_(make_stream(config_.seed, kTrainStream)),
    policy_rng_(make_stream(config_.seed, kPolicyStream)), global_(zero_model(world_.train)),
    ucb_(world_.clients.size()), estimates_(world_.clients.size(), ClientState::Normal),
    last_training_latency_(world_.clients.size())
{
  config_.validate();
  const std::size_t scopes = config_.sharing == QSharing::Class ? world_.classes.size() : world_.clients.size();
  const std::size_t columns = policy_ == PolicyKind::WilfQ ? config_.subsidies.size() : 1;
  qtable_ = SubsidizedQTable(scopes, columns, 0.0);
  index_table_ = IndexTable(world_.clients.size(), config_.subsidies);
  if (policy_ == PolicyKind::WilfQ) {
    // Random initial indices.
    std::uniform_int_distribution<std::size_t> pick(0, config_.subsidies.size() - 1);
    for (std::size_t c = 0; c < world_.clients.size(); ++c) {
      for (ClientState s : kAllStates) { index_table_.set_position(c, s, pick(policy_rng_)); }
    }
  }
}

std::size_t Simulation::scope_of(const Client& c) const
{
  return config_.sharing == QSharing::Class ? static_cast<std::size_t>(c.class_id) : static_cast<std::size_t>(c.id);
}

double Simulation::applied_subsidy(std::size_t m) const
{
  if (policy_ != PolicyKind::WilfQ) { return 0.0; }
  return (config_.subsidies[m] - world_.subsidy_offset) * world_.subsidy_unit;
}

std::vector<ClientState> Simulation::true_states() const
{
  std::vector<ClientState> out;
  for (const Client& c : world_.clients) { out.push_back(c.true_state); }
  return out;
}

void Simulation::apply_pending()
{
  // The learner's next state is this round's estimate.
  for (const PendingUpdate& u : pending_) {
    const Client& c = world_.clients[static_cast<std::size_t>(u.client)];
    const ClientState next = estimates_[static_cast<std::size_t>(u.client)];
    for (std::size_t m = 0; m < qtable_.subsidies(); ++m) {
      q_update(qtable_, {scope_of(c), u.state, u.action, m}, u.reward, applied_subsidy(m), next, u.eta,
               config_.discount);
    }
  }
  pending_.clear();
}

Selection Simulation::select(bool& explored)
{
  SelectionContext ctx;
  ctx.round = round_;
  ctx.budget = static_cast<std::size_t>(config_.budget);
  for (const Client& c : world_.clients) {
    ctx.available.push_back({c.id, c.class_id, last_training_latency_[static_cast<std::size_t>(c.id)],
                             estimates_[static_cast<std::size_t>(c.id)]});
  }
  explored = false;
  switch (policy_) {
  case PolicyKind::Random: return select_random(ctx, policy_rng_);
  case PolicyKind::EfficiencyFirst: return select_efficiency_first(ctx, world_.expected_latency);
  case PolicyKind::Ucb: return select_ucb(ctx, ucb_);
  case PolicyKind::Cql: return select_cql(ctx, qtable_, config_.gamma.at(round_), policy_rng_, config_.sharing == QSharing::Client);
  case PolicyKind::FullInformation: {
    std::map<int, ClientState> truth;
    for (const Client& c : world_.clients) { truth[c.id] = c.true_state; }
    return select_fi(ctx, world_.exact_indices, truth);
  }
  case PolicyKind::WilfQ: {
    auto out = select_wilfq(ctx, index_table_, config_.gamma.at(round_), policy_rng_, tie_order_);
    explored = out.explored;
    tie_order_ = std::move(out.permuted_order);
    return out.selected;
  }
  }
  throw std::logic_error("unknown policy");
}

RoundRecord Simulation::run_round()
{
  ++round_;
  const double cap = world_.noise.latency_cap_s;
  const std::size_t n = world_.clients.size();

  // 1. State estimates; selected clients from last round are re-classified.
  for (std::size_t j = 0; j < n; ++j) {
    const Client& c = world_.clients[j];
    estimates_[j] = estimate_state(c, config_.observability, last_training_latency_[j],
                                   world_.classes[static_cast<std::size_t>(c.class_id)], estimates_[j]);
  }
  apply_pending();

  // 2. Index refresh from the Q table, unless last round's exploration perturbed it.
  if (policy_ == PolicyKind::WilfQ && !skip_index_refresh_) {
    for (std::size_t j = 0; j < n; ++j) {
      index_table_.set_position(j, estimates_[j], whittle_position(qtable_, scope_of(world_.clients[j]), estimates_[j]));
    }
  }

  // 3. Selection.
  RoundRecord rec;
  rec.round = round_;
  bool explored = false;
  rec.selected = select(explored);
  rec.explored = explored;
  skip_index_refresh_ = explored;

  for (ClientState s : kAllStates) { rec.state_fraction[index_of(s)] = 0.0; }
  for (const Client& c : world_.clients) { rec.state_fraction[index_of(c.true_state)] += 1.0 / static_cast<double>(n); }

  // 4. Local training and latency realization.
  std::vector<char> is_selected(n, 0);
  std::vector<double> totals;
  std::map<int, ModelParams> local_models;
  std::vector<const Shard*> included_shards;
  std::fill(last_training_latency_.begin(), last_training_latency_.end(), std::nullopt);
  for (int id : rec.selected) {
    const auto j = static_cast<std::size_t>(id);
    is_selected[j] = 1;
    const Client& c = world_.clients[j];
    const ClientClass& cls = world_.classes[static_cast<std::size_t>(c.class_id)];
    ModelParams local = local_train(global_, world_.train, world_.shards[j], config_.task.epochs, config_.task.lr,
                                    config_.task.batch, train_rng_);
    double t_train = sample_training_time(c, c.true_state, cls, env_rng_);
    double t_comm = communication_time(c, cls, sample_channel_gain_sq(cls, env_rng_), world_.noise);
    rec.training_times.push_back(t_train);
    rec.comm_times.push_back(t_comm);
    totals.push_back(t_train + t_comm);
    last_training_latency_[j] = t_train;
    ucb_.observe(id, capped(t_train + t_comm, cap));
    if (on_estimate) { on_estimate(c.true_state, estimates_[j]); }
    if (t_train + t_comm <= cap) {
      rec.included.push_back(id);
      local_models.emplace(id, std::move(local));
      included_shards.push_back(&world_.shards[j]);
    }
  }
  rec.round_latency = round_latency(totals, cap);
  cumulative_delay_ += rec.round_latency;
  rec.cumulative_delay = cumulative_delay_;

  // 5. Aggregation over included clients with renormalized data weights.
  if (!rec.included.empty()) {
    AggregationWeights weights = data_proportional_weights(included_shards);
    std::vector<ModelParams> models;
    std::vector<double> w;
    std::map<int, const Shard*> shard_map;
    for (int id : rec.included) {
      models.push_back(local_models.at(id));
      w.push_back(weights.at(id));
      shard_map[id] = &world_.shards[static_cast<std::size_t>(id)];
    }
    rec.participant_loss = global_loss(local_models, shard_map, weights, world_.train);
    global_ = aggregate(models, w);
  } else {
    rec.participant_loss = full_loss(global_, world_.train);
  }
  rec.full_loss = full_loss(global_, world_.train);
  rec.test_accuracy = accuracy(global_, world_.test);
  rec.loss_gap = std::max(0.0, rec.full_loss - world_.oracle_loss);
  rec.reward_loss_gap = std::max(0.0, rec.participant_loss - world_.oracle_loss);

  // 6. Rewards; Q updates wait for next round's state estimates.
  if (policy_ == PolicyKind::WilfQ || policy_ == PolicyKind::Cql) {
    const double eta = config_.eta.at(round_);
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      PendingUpdate u{static_cast<int>(j), estimates_[j], is_selected[j] ? 1 : 0, 0.0, eta};
      if (is_selected[j]) {
        double t_train = capped(rec.training_times[k], cap);
        double t_comm = capped(rec.comm_times[k], cap - t_train);
        u.reward = reward(t_train, t_comm, rec.reward_loss_gap, config_.lambda, 1);
        ++k;
      } else {
        u.reward = reward(0.0, 0.0, rec.reward_loss_gap, config_.lambda, 0);
      }
      pending_.push_back(u);
    }
  }

  // 7. Every client's true state moves: selected by P_s, others by P_n.
  for (std::size_t j = 0; j < n; ++j) {
    Client& c = world_.clients[j];
    c.true_state = step_state(c.true_state, is_selected[j] != 0,
                              world_.classes[static_cast<std::size_t>(c.class_id)].transitions, env_rng_);
  }

  if (rec.loss_gap <= config_.alpha) { converged_ = true; }
  spdlog::debug("round {} T={:.4f} gap={:.4f} acc={:.3f}", round_, rec.round_latency, rec.loss_gap, rec.test_accuracy);
  return rec;
}

RunResult Simulation::run()
{
  RunResult result;
  result.oracle_loss = world_.oracle_loss;
  result.latency_cap = world_.noise.latency_cap_s;
  while (!converged_ && round_ < config_.max_rounds) {
    result.records.push_back(run_round());
    result.total_delay += result.records.back().round_latency;
  }
  result.converged = converged_;
  result.rounds_to_threshold = round_;
  return result;
}

std::map<std::pair<int, ClientState>, double> Simulation::learned_class_indices() const
{
  std::map<std::pair<int, ClientState>, double> out;
  for (std::size_t k = 0; k < world_.classes.size(); ++k) {
    for (ClientState s : kAllStates) {
      double value = 0.0;
      if (config_.sharing == QSharing::Class) {
        value = config_.subsidies[whittle_position(qtable_, k, s)];
      } else {
        int members = 0;
        for (const Client& c : world_.clients) {
          if (static_cast<std::size_t>(c.class_id) != k) { continue; }
          value += config_.subsidies[whittle_position(qtable_, static_cast<std::size_t>(c.id), s)];
          ++members;
        }
        value /= std::max(members, 1);
      }
      out[{static_cast<int>(k), s}] = value;
    }
  }
  return out;
}

RunResult run_simulation(const SimConfig& config, PolicyKind policy)
{
  Simulation sim(config, policy);
  return sim.run();
}

double accuracy_at_delay(const RunResult& run, double delay)
{
  if (run.records.empty()) { return 0.0; }
  double acc = run.records.front().test_accuracy;
  for (const RoundRecord& r : run.records) {
    if (r.cumulative_delay > delay) { break; }
    acc = r.test_accuracy;
  }
  return acc;
}

ReplicateResult aggregate_runs(std::span<const RunResult> runs)
{
  ReplicateResult out;
  out.runs = runs.size();
  std::vector<double> delay, rounds, acc;
  double max_delay = 0.0;
  for (const RunResult& r : runs) {
    delay.push_back(r.total_delay);
    rounds.push_back(static_cast<double>(r.rounds_to_threshold));
    acc.push_back(r.records.empty() ? 0.0 : r.records.back().test_accuracy);
    out.converged += r.converged ? 1 : 0;
    max_delay = std::max(max_delay, r.total_delay);
  }
  out.total_delay = stats::summarize(delay);
  out.rounds = stats::summarize(rounds);
  out.final_accuracy = stats::summarize(acc);
  if (max_delay > 0.0) {
    const double step = 0.01 * max_delay;
    for (int i = 0; i <= 100; ++i) {
      double x = step * i;
      double sum = 0.0;
      for (const RunResult& r : runs) { sum += accuracy_at_delay(r, x); }
      out.delay_grid.push_back(x);
      out.mean_accuracy.push_back(sum / static_cast<double>(runs.size()));
    }
  }
  return out;
}

ReplicateResult replicate(const SimConfig& config, PolicyKind policy, std::span<const std::uint64_t> seeds,
                          int workers, std::vector<RunResult>* runs_out)
{
  if (seeds.size() < 2) { throw std::invalid_argument("replicate: need at least two seeds"); }
  std::vector<RunResult> runs(seeds.size());
  const std::size_t pool = static_cast<std::size_t>(std::max(workers, 1));
  for (std::size_t begin = 0; begin < seeds.size(); begin += pool) {
    std::vector<std::future<RunResult>> batch;
    for (std::size_t i = begin; i < std::min(seeds.size(), begin + pool); ++i) {
      SimConfig c = config;
      c.seed = seeds[i];
      batch.push_back(std::async(pool > 1 ? std::launch::async : std::launch::deferred,
                                 [c, policy] { return run_simulation(c, policy); }));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) { runs[begin + i] = batch[i].get(); }
  }
  ReplicateResult out = aggregate_runs(runs);
  if (runs_out != nullptr) { *runs_out = std::move(runs); }
  return out;
}

} // namespace wfl
