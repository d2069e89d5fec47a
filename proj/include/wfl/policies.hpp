#pragma once

#include "wfl/q_table.hpp"
#include "wfl/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace wfl {

enum class PolicyKind { Random, EfficiencyFirst, Cql, Ucb, FullInformation, WilfQ };

inline constexpr std::array<PolicyKind, 6> kAllPolicies{PolicyKind::Random, PolicyKind::EfficiencyFirst,
                                                       PolicyKind::Cql,    PolicyKind::Ucb,
                                                       PolicyKind::FullInformation, PolicyKind::WilfQ};

std::string_view policy_name(PolicyKind kind);

/// Parses one of ran, ef, cql, ucb, fi, wilfq.
std::optional<PolicyKind> parse_policy(std::string_view name);

/// What the server can see about a client when choosing.
struct ClientSnapshot
{
  int id = 0;
  int class_id = 0;
  std::optional<double> last_latency;
  ClientState estimated_state = ClientState::Normal;
};

struct SelectionContext
{
  int round = 1;
  std::vector<ClientSnapshot> available;
  std::size_t budget = 1;

  void validate() const;
};

/// Selected client ids, ascending.
using Selection = std::vector<int>;

/// Per-client latency statistics for UCB, keyed by client id.
class UcbStats
{
public:
  explicit UcbStats(std::size_t clients = 0) : count_(clients, 0), mean_(clients, 0.0) {}

  std::size_t count(int id) const { return count_[static_cast<std::size_t>(id)]; }
  /// Only meaningful when count(id) > 0.
  double mean(int id) const { return mean_[static_cast<std::size_t>(id)]; }
  void observe(int id, double latency);

  /// mean - sqrt(2 ln r / n); -infinity for never-selected clients.
  double index(int id, int round) const;

private:
  std::vector<std::size_t> count_;
  std::vector<double> mean_;
};

/// Exact Whittle index per (class, state).
using ExactIndexTable = std::map<std::pair<int, ClientState>, double>;

/// The `k` ids with the largest score (or smallest when `descending` is false); ties by ascending id,
/// or by ascending `tie_rank` when one is given (parallel to `ids`).
Selection top_k(std::span<const int> ids, std::span<const double> scores, std::size_t k, bool descending,
                std::span<const std::size_t> tie_rank = {});

Selection select_random(const SelectionContext& ctx, Rng& rng);

Selection select_efficiency_first(const SelectionContext& ctx, const std::map<int, double>& expected_latency);

Selection select_ucb(const SelectionContext& ctx, const UcbStats& stats);

/// `qtable` has a single subsidy column and one scope per class, or one per client when `per_client`.
Selection select_cql(const SelectionContext& ctx, const SubsidizedQTable& qtable, double gamma_r, Rng& rng,
                     bool per_client = false);

Selection select_fi(const SelectionContext& ctx, const ExactIndexTable& exact_indices,
                    const std::map<int, ClientState>& true_states);

struct WilfqSelection
{
  Selection selected;
  bool explored = false;
  std::vector<int> permuted_order; // random order of the available ids, drawn only when exploring
};

/// Top-budget clients by estimated index at their estimated state. With
/// probability gamma_r the stored index of every available client at its
/// estimated state is then redrawn uniformly from the subsidy set and the
/// available ids are randomly permuted; passing that permutation back as
/// `tie_order` on the next call ranks ties by it instead of by id.
WilfqSelection select_wilfq(const SelectionContext& ctx, IndexTable& index_table, double gamma_r, Rng& rng,
                            std::span<const int> tie_order = {});

} // namespace wfl
