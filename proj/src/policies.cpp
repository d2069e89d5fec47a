#include "wfl/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace wfl {

namespace {

std::vector<int> ids_of(const SelectionContext& ctx)
{
  std::vector<int> ids;
  ids.reserve(ctx.available.size());
  for (const auto& c : ctx.available) { ids.push_back(c.id); }
  return ids;
}

bool fires(double probability, Rng& rng)
{
  // Always consume one draw so the stream advances identically whatever the probability.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < probability;
}

} // namespace

std::string_view policy_name(PolicyKind kind)
{
  switch (kind) {
  case PolicyKind::Random: return "ran";
  case PolicyKind::EfficiencyFirst: return "ef";
  case PolicyKind::Cql: return "cql";
  case PolicyKind::Ucb: return "ucb";
  case PolicyKind::FullInformation: return "fi";
  case PolicyKind::WilfQ: return "wilfq";
  }
  return "?";
}

std::optional<PolicyKind> parse_policy(std::string_view name)
{
  for (PolicyKind k : kAllPolicies) {
    if (policy_name(k) == name) { return k; }
  }
  return std::nullopt;
}

void SelectionContext::validate() const
{
  if (budget < 1 || budget > available.size()) {
    throw std::invalid_argument("selection budget must lie in [1, |available|]");
  }
}

void UcbStats::observe(int id, double latency)
{
  auto i = static_cast<std::size_t>(id);
  ++count_[i];
  mean_[i] += (latency - mean_[i]) / static_cast<double>(count_[i]);
}

double UcbStats::index(int id, int round) const
{
  auto n = count(id);
  if (n == 0) { return -std::numeric_limits<double>::infinity(); }
  double log_r = std::log(static_cast<double>(std::max(round, 1)));
  return mean(id) - std::sqrt(2.0 * log_r / static_cast<double>(n));
}

Selection top_k(std::span<const int> ids, std::span<const double> scores, std::size_t k, bool descending,
                std::span<const std::size_t> tie_rank)
{
  if (ids.size() != scores.size()) { throw std::invalid_argument("top_k: ids and scores differ in length"); }
  if (!tie_rank.empty() && tie_rank.size() != ids.size()) { throw std::invalid_argument("top_k: bad tie ranks"); }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) { return descending ? scores[a] > scores[b] : scores[a] < scores[b]; }
    if (!tie_rank.empty()) { return tie_rank[a] < tie_rank[b]; }
    return ids[a] < ids[b];
  });
  Selection out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) { out.push_back(ids[order[i]]); }
  std::sort(out.begin(), out.end());
  return out;
}

Selection select_random(const SelectionContext& ctx, Rng& rng)
{
  ctx.validate();
  auto ids = ids_of(ctx);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < ctx.budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  Selection out(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ctx.budget));
  std::sort(out.begin(), out.end());
  return out;
}

Selection select_efficiency_first(const SelectionContext& ctx, const std::map<int, double>& expected_latency)
{
  ctx.validate();
  auto ids = ids_of(ctx);
  std::vector<double> scores;
  for (int id : ids) {
    auto it = expected_latency.find(id);
    if (it == expected_latency.end()) { throw std::invalid_argument("select_efficiency_first: missing latency"); }
    scores.push_back(it->second);
  }
  return top_k(ids, scores, ctx.budget, false);
}

Selection select_ucb(const SelectionContext& ctx, const UcbStats& stats)
{
  ctx.validate();
  auto ids = ids_of(ctx);
  std::vector<double> scores;
  for (int id : ids) { scores.push_back(stats.index(id, ctx.round)); }
  return top_k(ids, scores, ctx.budget, false);
}

Selection select_cql(const SelectionContext& ctx, const SubsidizedQTable& qtable, double gamma_r, Rng& rng,
                     bool per_client)
{
  ctx.validate();
  if (fires(gamma_r, rng)) { return select_random(ctx, rng); }
  auto ids = ids_of(ctx);
  std::vector<double> advantage;
  for (const auto& c : ctx.available) {
    auto scope = static_cast<std::size_t>(per_client ? c.id : c.class_id);
    advantage.push_back(qtable.value(scope, c.estimated_state, 1, 0) - qtable.value(scope, c.estimated_state, 0, 0));
  }
  return top_k(ids, advantage, ctx.budget, true);
}

Selection select_fi(const SelectionContext& ctx, const ExactIndexTable& exact_indices,
                    const std::map<int, ClientState>& true_states)
{
  ctx.validate();
  auto ids = ids_of(ctx);
  std::vector<double> scores;
  for (const auto& c : ctx.available) {
    auto it = exact_indices.find({c.class_id, true_states.at(c.id)});
    if (it == exact_indices.end()) { throw std::invalid_argument("select_fi: missing exact index"); }
    scores.push_back(it->second);
  }
  return top_k(ids, scores, ctx.budget, true);
}

WilfqSelection select_wilfq(const SelectionContext& ctx, IndexTable& index_table, double gamma_r, Rng& rng,
                            std::span<const int> tie_order)
{
  ctx.validate();
  auto ids = ids_of(ctx);
  std::vector<double> scores;
  for (const auto& c : ctx.available) {
    scores.push_back(index_table.value(static_cast<std::size_t>(c.id), c.estimated_state));
  }
  std::vector<std::size_t> rank;
  if (!tie_order.empty()) {
    std::map<int, std::size_t> position;
    for (std::size_t i = 0; i < tie_order.size(); ++i) { position[tie_order[i]] = i; }
    for (int id : ids) {
      auto it = position.find(id);
      rank.push_back(it == position.end() ? tie_order.size() + static_cast<std::size_t>(id) : it->second);
    }
  }
  WilfqSelection out{top_k(ids, scores, ctx.budget, true, rank), false, {}};
  if (fires(gamma_r, rng)) {
    out.explored = true;
    std::uniform_int_distribution<std::size_t> pick(0, index_table.subsidies().size() - 1);
    for (const auto& c : ctx.available) {
      index_table.set_position(static_cast<std::size_t>(c.id), c.estimated_state, pick(rng));
    }
    out.permuted_order = ids;
    std::shuffle(out.permuted_order.begin(), out.permuted_order.end(), rng);
  }
  return out;
}

} // namespace wfl
