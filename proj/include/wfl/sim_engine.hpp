#pragma once

#include "wfl/env_model.hpp"
#include "wfl/fl_task.hpp"
#include "wfl/policies.hpp"
#include "wfl/q_table.hpp"
#include "wfl/stats.hpp"
#include "wfl/whittle_core.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wfl {

enum class Observability { Oracle, Inferred };
enum class QSharing { Class, Client };

/// rate(r) = min(1, scale * r^-exponent)
struct Schedule
{
  double scale = 1.0;
  double exponent = 0.5;

  double at(int round) const;
};

struct TaskConfig
{
  int n_train = 2000;
  int n_test = 500;
  int dim = 20;
  int classes = 10;
  double cluster_spread = 1.0;
  double separation = 2.0; // distance of every cluster mean from the origin
  double tau = 10.0;
  double lr = 1e-3;
  int batch = 32;
  int epochs = 1;
  double oracle_tolerance = 1e-7;
  std::string dataset_path; // optional CSV import replaces the synthetic train set
};

struct SimConfig
{
  int n_clients = 100;
  std::vector<ClientClass> classes;
  int budget = 10;
  SubsidySet subsidies;
  double discount = 0.9;
  double lambda = 1.0;
  double alpha = 0.15;
  Schedule eta{1.0, 0.5};
  Schedule gamma{1.0, 1.0};
  std::optional<double> latency_cap; // computed at setup when empty
  double cap_multiplier = 3.0;
  double noise_power_w = 1e-5;
  double transmit_power_dbm = 23.0;
  double base_seconds_per_sample = 1e-3;
  TaskConfig task;
  int max_rounds = 1000;
  Observability observability = Observability::Inferred;
  QSharing sharing = QSharing::Class;
  // Applied passive subsidy for a subsidy-set value m is (m - offset) * unit.
  // Unset fields are derived from the subsidy set and the latency cap.
  std::optional<double> subsidy_offset;
  std::optional<double> subsidy_unit;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Three client classes of high, medium and low capacity (30/40/30 clients).
std::vector<ClientClass> default_classes();

SimConfig default_config();

struct RoundRecord
{
  int round = 0;
  std::vector<int> selected;
  std::vector<int> included;
  std::vector<double> training_times; // per selected client, same order
  std::vector<double> comm_times;
  double round_latency = 0.0;
  double cumulative_delay = 0.0;
  double participant_loss = 0.0; // sum k_j F_j(w_j) over included clients
  double full_loss = 0.0;        // F(w^r) on the full training set
  double test_accuracy = 0.0;
  double loss_gap = 0.0;         // full_loss - F(w*), clipped at 0; drives stopping
  double reward_loss_gap = 0.0;  // participant_loss - F(w*), clipped at 0; enters rewards
  std::array<double, kNumStates> state_fraction{};
  bool explored = false;
};

struct RunResult
{
  std::vector<RoundRecord> records;
  bool converged = false;
  int rounds_to_threshold = 0; // R^phi, or the number of rounds run when not converged
  double total_delay = 0.0;    // sum of T_r
  double oracle_loss = 0.0;
  double latency_cap = 0.0;
};

/// Per-state reward of the learner: action 1 costs the latency and the loss
/// gap, action 0 only the loss gap.
double reward(double training_time, double comm_time, double loss_gap, double lambda, int action);

/// Oracle mode returns the true state. Inferred mode classifies a training
/// latency observed last round by the nearest analytic per-state mean, and
/// otherwise carries `previous` forward.
ClientState estimate_state(const Client& client, Observability mode, std::optional<double> last_training_latency,
                           const ClientClass& cls, ClientState previous);

/// Everything fixed for a run: data, partition, clients and derived constants.
struct World
{
  Dataset train;
  Dataset test;
  std::vector<Shard> shards;
  std::vector<Client> clients;
  std::vector<ClientClass> classes; // indexed by position; Client::class_id refers to the position
  NoiseAndCap noise;
  double oracle_loss = 0.0;
  ExactIndexTable exact_indices;
  std::vector<ArmMdpd> class_arms;          // per class, rewards = -expected capped latency
  std::map<int, double> expected_latency;   // per client, for efficiency-first
  double subsidy_offset = 0.0;
  double subsidy_unit = 1.0;
};

/// Builds the world for `config`. Deterministic in (seed, tau).
World build_world(const SimConfig& config);

/// Communication time at the mean channel gain.
double nominal_comm_time(const Client& client, const ClientClass& cls, const NoiseAndCap& noise);

/// Per-class arm with passive reward 0 and active reward -E[min(cap, latency)]
/// averaged over the class members.
std::vector<ArmMdpd> build_class_arms(const std::vector<Client>& clients, const std::vector<ClientClass>& classes,
                                      const NoiseAndCap& noise, double discount);

ExactIndexTable compute_exact_indices(const std::vector<ArmMdpd>& arms, double tol = 1e-10);

class Simulation
{
public:
  Simulation(SimConfig config, PolicyKind policy);
  Simulation(SimConfig config, PolicyKind policy, World world);

  RoundRecord run_round();
  RunResult run();

  int round() const { return round_; }
  bool converged() const { return converged_; }
  const SimConfig& config() const { return config_; }
  const World& world() const { return world_; }
  const ModelParams& global_model() const { return global_; }
  const SubsidizedQTable& q_table() const { return qtable_; }
  const IndexTable& index_table() const { return index_table_; }
  const std::vector<ClientState>& estimated_states() const { return estimates_; }
  std::vector<ClientState> true_states() const;
  PolicyKind policy() const { return policy_; }

  /// Replaces the learner's index table; used to inject exact indices.
  IndexTable& mutable_index_table() { return index_table_; }

  /// Applied passive subsidy for subsidy-set position `m`.
  double applied_subsidy(std::size_t m) const;

  /// Learned index per (class, state) from the shared Q table (class sharing)
  /// or from the per-client table averaged over class members.
  std::map<std::pair<int, ClientState>, double> learned_class_indices() const;

  /// Observer hook invoked for every state estimate made for a selected client: (true, estimated).
  std::function<void(ClientState, ClientState)> on_estimate;

private:
  struct PendingUpdate
  {
    int client;
    ClientState state;
    int action;
    double reward;
    double eta;
  };

  std::size_t scope_of(const Client& c) const;
  void apply_pending();
  Selection select(bool& explored);

  SimConfig config_;
  PolicyKind policy_;
  World world_;
  Rng env_rng_;
  Rng train_rng_;
  Rng policy_rng_;
  ModelParams global_;
  SubsidizedQTable qtable_;
  IndexTable index_table_;
  UcbStats ucb_;
  std::vector<ClientState> estimates_;
  std::vector<std::optional<double>> last_training_latency_;
  std::vector<PendingUpdate> pending_;
  bool skip_index_refresh_ = false;
  std::vector<int> tie_order_; // exploration permutation used for the next ranking only
  int round_ = 0;
  double cumulative_delay_ = 0.0;
  bool converged_ = false;
};

RunResult run_simulation(const SimConfig& config, PolicyKind policy);

struct ReplicateResult
{
  stats::Summary total_delay;
  stats::Summary rounds;
  stats::Summary final_accuracy;
  std::size_t converged = 0;
  std::size_t runs = 0;
  std::vector<double> delay_grid;
  std::vector<double> mean_accuracy; // accuracy vs cumulative delay, averaged over runs
};

/// Statistics over already-finished runs.
ReplicateResult aggregate_runs(std::span<const RunResult> runs);

/// Runs `config` once per seed (in parallel up to `workers`) and aggregates. Requires >= 2 seeds.
ReplicateResult replicate(const SimConfig& config, PolicyKind policy, std::span<const std::uint64_t> seeds,
                          int workers = 1, std::vector<RunResult>* runs_out = nullptr);

/// Accuracy of a run at cumulative delay `delay` (last completed round at or before it).
double accuracy_at_delay(const RunResult& run, double delay);

} // namespace wfl
