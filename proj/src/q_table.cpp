#include "wfl/q_table.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace wfl {

SubsidySet::SubsidySet(std::vector<double> values) : values_(std::move(values))
{
  if (values_.empty()) { throw std::invalid_argument("subsidy set must be non-empty"); }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) { throw std::invalid_argument("subsidy values must be finite"); }
    if (i > 0 && !(values_[i] > values_[i - 1])) { throw std::invalid_argument("subsidy set must be strictly increasing"); }
  }
}

SubsidizedQTable::SubsidizedQTable(std::size_t scopes, std::size_t subsidies, double initial)
  : scopes_(scopes), subsidies_(subsidies), values_(scopes * kNumStates * 2 * subsidies, initial),
    visits_(values_.size(), 0)
{
  if (subsidies == 0) { throw std::invalid_argument("Q table needs at least one subsidy"); }
}

std::size_t SubsidizedQTable::offset(const QKey& key) const
{
  if (key.scope >= scopes_ || key.subsidy >= subsidies_ || (key.action != 0 && key.action != 1)) {
    throw std::out_of_range("Q table key out of range");
  }
  return ((key.scope * kNumStates + index_of(key.state)) * 2 + static_cast<std::size_t>(key.action)) * subsidies_ +
         key.subsidy;
}

double SubsidizedQTable::best(std::size_t scope, ClientState s, std::size_t m) const
{
  return std::max(value(scope, s, 0, m), value(scope, s, 1, m));
}

void SubsidizedQTable::update(const QKey& key, double reward, double subsidy, ClientState next_state, double eta,
                              double beta)
{
  if (!(eta >= 0.0 && eta <= 1.0)) { throw std::invalid_argument("q_update: eta outside [0, 1]"); }
  const std::size_t at = offset(key);
  const double target = reward + (key.action == 0 ? subsidy : 0.0) + beta * best(key.scope, next_state, key.subsidy);
  if (eta > 0.0) { values_[at] = (1.0 - eta) * values_[at] + eta * target; }
  ++visits_[at];
}

void SubsidizedQTable::write_csv(std::ostream& out, const std::vector<double>& subsidy_values) const
{
  out << "scope,state,action,subsidy,value,visits\n";
  for (std::size_t scope = 0; scope < scopes_; ++scope) {
    for (ClientState s : kAllStates) {
      for (int a = 0; a < 2; ++a) {
        for (std::size_t m = 0; m < subsidies_; ++m) {
          QKey key{scope, s, a, m};
          double subsidy = m < subsidy_values.size() ? subsidy_values[m] : static_cast<double>(m);
          out << scope << ',' << to_string(s) << ',' << a << ',' << subsidy << ',' << value(key) << ','
              << visits(key) << '\n';
        }
      }
    }
  }
}

std::size_t whittle_position(const SubsidizedQTable& table, std::size_t scope, ClientState state)
{
  std::size_t best = 0;
  double best_gap = std::abs(table.value(scope, state, 1, 0) - table.value(scope, state, 0, 0));
  for (std::size_t m = 1; m < table.subsidies(); ++m) {
    double gap = std::abs(table.value(scope, state, 1, m) - table.value(scope, state, 0, m));
    if (gap < best_gap) {
      best = m;
      best_gap = gap;
    }
  }
  return best;
}

double estimate_whittle(const SubsidizedQTable& table, std::size_t scope, ClientState state,
                        const SubsidySet& subsidies)
{
  if (subsidies.size() != table.subsidies()) { throw std::invalid_argument("subsidy set does not match Q table"); }
  return subsidies[whittle_position(table, scope, state)];
}

void IndexTable::set_position(std::size_t client, ClientState s, std::size_t pos)
{
  if (pos >= subsidies_.size()) { throw std::out_of_range("index position outside the subsidy set"); }
  positions_[client][index_of(s)] = pos;
}

void IndexTable::write_csv(std::ostream& out) const
{
  out << "client,state,index\n";
  for (std::size_t c = 0; c < positions_.size(); ++c) {
    for (ClientState s : kAllStates) { out << c << ',' << to_string(s) << ',' << value(c, s) << '\n'; }
  }
}

} // namespace wfl
