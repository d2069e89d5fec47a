#pragma once

#include "wfl/types.hpp"

#include <iosfwd>
#include <vector>

namespace wfl {

/// Strictly increasing, non-empty list of candidate subsidies.
class SubsidySet
{
public:
  SubsidySet() = default;
  explicit SubsidySet(std::vector<double> values);

  static SubsidySet standard() { return SubsidySet({0.1, 0.2, 0.3, 0.4, 0.5}); }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }
  const std::vector<double>& values() const { return values_; }

private:
  std::vector<double> values_{0.1, 0.2, 0.3, 0.4, 0.5};
};

struct QKey
{
  std::size_t scope = 0;
  ClientState state = ClientState::Normal;
  int action = 0;
  std::size_t subsidy = 0;
};

/// Q-values indexed by (scope, state, action, subsidy position) with visit counts.
/// A scope is a client or a class depending on the sharing mode.
class SubsidizedQTable
{
public:
  SubsidizedQTable() = default;
  SubsidizedQTable(std::size_t scopes, std::size_t subsidies, double initial = 0.0);

  std::size_t scopes() const { return scopes_; }
  std::size_t subsidies() const { return subsidies_; }

  double value(const QKey& key) const { return values_[offset(key)]; }
  double value(std::size_t scope, ClientState s, int action, std::size_t m) const { return value({scope, s, action, m}); }
  std::size_t visits(const QKey& key) const { return visits_[offset(key)]; }

  void set(const QKey& key, double v) { values_[offset(key)] = v; }

  /// max_a Q(scope, s, a; m)
  double best(std::size_t scope, ClientState s, std::size_t m) const;

  /// Q <- (1 - eta) Q + eta [reward + 1{a=0} subsidy + beta max_a Q(next, a; same m)].
  void update(const QKey& key, double reward, double subsidy, ClientState next_state, double eta, double beta);

  /// Flat CSV: scope,state,action,subsidy,value,visits
  void write_csv(std::ostream& out, const std::vector<double>& subsidy_values) const;

private:
  std::size_t offset(const QKey& key) const;

  std::size_t scopes_ = 0;
  std::size_t subsidies_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> visits_;
};

/// Free-function form of SubsidizedQTable::update.
inline void q_update(SubsidizedQTable& table, const QKey& key, double reward, double subsidy, ClientState next_state,
                     double eta, double beta)
{
  table.update(key, reward, subsidy, next_state, eta, beta);
}

/// Position in the subsidy set minimizing |Q(s,1;m) - Q(s,0;m)|; ties go to the smallest m.
std::size_t whittle_position(const SubsidizedQTable& table, std::size_t scope, ClientState state);

double estimate_whittle(const SubsidizedQTable& table, std::size_t scope, ClientState state,
                        const SubsidySet& subsidies);

/// Estimated index per (client, state), stored as a position into the subsidy set.
class IndexTable
{
public:
  IndexTable() = default;
  IndexTable(std::size_t clients, const SubsidySet& subsidies) : positions_(clients), subsidies_(subsidies) {}

  std::size_t clients() const { return positions_.size(); }
  std::size_t position(std::size_t client, ClientState s) const { return positions_[client][index_of(s)]; }
  double value(std::size_t client, ClientState s) const { return subsidies_[position(client, s)]; }
  void set_position(std::size_t client, ClientState s, std::size_t pos);
  const SubsidySet& subsidies() const { return subsidies_; }

  void write_csv(std::ostream& out) const;

private:
  std::vector<std::array<std::size_t, kNumStates>> positions_;
  SubsidySet subsidies_;
};

} // namespace wfl
