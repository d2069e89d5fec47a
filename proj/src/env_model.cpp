#include "wfl/env_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace wfl {

namespace {

void validate_stochastic(const Matrix3& m, const char* name)
{
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      double p = m(r, c);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string(name) + ": entry outside [0, 1]");
      }
    }
    if (std::abs(m.row(r).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument(std::string(name) + ": row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

} // namespace

void TransitionPair::validate() const
{
  validate_stochastic(selected, "p_selected");
  validate_stochastic(unselected, "p_unselected");
}

void ClientClass::validate() const
{
  if (!(capacity_lo > 0.0 && capacity_lo <= capacity_hi && capacity_hi <= 1.0)) {
    throw std::invalid_argument("capacity range must lie within (0, 1]");
  }
  if (!(bandwidth_bps > 0.0)) { throw std::invalid_argument("bandwidth must be positive"); }
  if (!(channel_gain_mean > 0.0)) { throw std::invalid_argument("channel gain mean must be positive"); }
  if (!(state_coefficients[0] > 0.0 && state_coefficients[0] < state_coefficients[1] &&
        state_coefficients[1] < state_coefficients[2] && std::isfinite(state_coefficients[2]))) {
    throw std::invalid_argument("state coefficients must be positive and strictly increasing");
  }
  if (population < 0) { throw std::invalid_argument("population must be non-negative"); }
  transitions.validate();
}

void Client::validate() const
{
  if (!(compute_coefficient > 0.0)) { throw std::invalid_argument("compute coefficient must be positive"); }
  if (dataset_size < 1) { throw std::invalid_argument("dataset size must be at least 1"); }
  if (!(transmit_power_w > 0.0)) { throw std::invalid_argument("transmit power must be positive"); }
}

void NoiseAndCap::validate() const
{
  if (!(noise_power_w > 0.0)) { throw std::invalid_argument("noise power must be positive"); }
  if (!(latency_cap_s > 0.0)) { throw std::invalid_argument("latency cap must be positive"); }
}

TransitionPair sample_transitions()
{
  TransitionPair p;
  p.selected << 1.0 / 2, 1.0 / 3, 1.0 / 6,
                1.0 / 6, 1.0 / 2, 1.0 / 3,
                1.0 / 6, 1.0 / 6, 2.0 / 3;
  p.unselected << 2.0 / 3, 1.0 / 6, 1.0 / 6,
                  1.0 / 3, 1.0 / 2, 1.0 / 6,
                  1.0 / 6, 1.0 / 3, 1.0 / 2;
  return p;
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double training_shift(const Client& client)
{
  return client.compute_coefficient * static_cast<double>(client.dataset_size);
}

double training_tail_mean(const Client& client, ClientState state, const ClientClass& cls)
{
  return cls.state_coefficient(state) * training_shift(client);
}

double training_time_from_unit_draw(const Client& client, ClientState state, const ClientClass& cls,
                                    double unit_exponential)
{
  return training_shift(client) + unit_exponential * training_tail_mean(client, state, cls);
}

double sample_training_time(const Client& client, ClientState state, const ClientClass& cls, Rng& rng)
{
  std::exponential_distribution<double> unit(1.0);
  return training_time_from_unit_draw(client, state, cls, unit(rng));
}

double expected_training_time(const Client& client, ClientState state, const ClientClass& cls)
{
  return training_shift(client) + training_tail_mean(client, state, cls);
}

double training_time_cdf(const Client& client, ClientState state, const ClientClass& cls, double t)
{
  double shift = training_shift(client);
  if (t < shift) { return 0.0; }
  return -std::expm1(-(t - shift) / training_tail_mean(client, state, cls));
}

double expected_capped_latency(const Client& client, ClientState state, const ClientClass& cls,
                               double extra_delay, double cap)
{
  double shift = training_shift(client) + extra_delay;
  if (shift >= cap) { return cap; }
  double mean = training_tail_mean(client, state, cls);
  // E[min(cap, shift + X)] = shift + mean (1 - exp(-(cap - shift)/mean)) for X ~ Exp(mean)
  return shift - mean * std::expm1(-(cap - shift) / mean);
}

double sample_channel_gain_sq(const ClientClass& cls, Rng& rng)
{
  std::exponential_distribution<double> gain(1.0 / cls.channel_gain_mean);
  double g;
  do {
    g = gain(rng);
  } while (g <= 0.0);
  return g;
}

double communication_time(const Client& client, const ClientClass& cls, double gain_sq,
                          const NoiseAndCap& noise)
{
  double snr = client.transmit_power_w * gain_sq / noise.noise_power_w;
  double rate = cls.bandwidth_bps * std::log2(1.0 + snr);
  if (!(rate > 0.0)) { return std::numeric_limits<double>::infinity(); }
  double t = client.model_size_bits / rate;
  return std::isfinite(t) ? t : std::numeric_limits<double>::infinity();
}

ClientState step_state(ClientState state, bool selected, const TransitionPair& transitions, Rng& rng)
{
  const auto row = transitions.for_action(selected).row(static_cast<Eigen::Index>(index_of(state)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  double acc = 0.0;
  for (std::size_t next = 0; next < kNumStates; ++next) {
    acc += row(static_cast<Eigen::Index>(next));
    if (x < acc) { return state_from_index(next); }
  }
  // Rounding left x above the accumulated mass; fall back to the last state with mass.
  for (std::size_t next = kNumStates; next-- > 0;) {
    if (row(static_cast<Eigen::Index>(next)) > 0.0) { return state_from_index(next); }
  }
  return state;
}

double round_latency(std::span<const double> selected_latencies, double cap)
{
  if (selected_latencies.empty()) { throw std::invalid_argument("round_latency: no clients selected"); }
  double slowest = *std::max_element(selected_latencies.begin(), selected_latencies.end());
  return std::min(cap, slowest);
}

Vector3 stationary_distribution(const Matrix3& matrix)
{
  // Irreducible iff every state reaches every other within two steps.
  Matrix3 adjacency = (matrix.array() > 0.0).cast<double>().matrix() + Matrix3::Identity();
  if (((adjacency * adjacency).array() <= 0.0).any()) {
    throw std::domain_error("stationary_distribution: reducible chain");
  }

  Eigen::RowVector3d pi = Eigen::RowVector3d::Constant(1.0 / 3.0);
  constexpr int kMaxIterations = 1'000'000;
  for (int it = 0; it < kMaxIterations; ++it) {
    // Lazy chain (P + I)/2 shares the fixed point and removes periodicity.
    Eigen::RowVector3d next = 0.5 * (pi * matrix + pi);
    next /= next.sum();
    double delta = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (delta < 1e-13) { return pi.transpose(); }
  }
  throw std::domain_error("stationary_distribution: power iteration did not converge");
}

} // namespace wfl
