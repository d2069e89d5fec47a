#pragma once

#include "wfl/types.hpp"

#include <span>

namespace wfl {

// Row = current state, column = next state.
struct TransitionPair
{
  Matrix3 selected = Matrix3::Identity();
  Matrix3 unselected = Matrix3::Identity();

  const Matrix3& for_action(bool is_selected) const { return is_selected ? selected : unselected; }

  // Throws std::invalid_argument unless both matrices are row-stochastic.
  void validate() const;
};

struct ClientClass
{
  int id = 0;
  int population = 0;
  double capacity_lo = 1.0;
  double capacity_hi = 1.0;
  double bandwidth_bps = 1e8;
  std::array<double, kNumStates> state_coefficients{1.0, 2.0, 4.0};
  double channel_gain_mean = 1.0;
  TransitionPair transitions;

  double state_coefficient(ClientState s) const { return state_coefficients[index_of(s)]; }
  void validate() const;
};

struct Client
{
  int id = 0;
  int class_id = 0;
  double compute_coefficient = 1e-3; // seconds per sample
  std::size_t dataset_size = 1;
  double transmit_power_w = 0.19953;
  ClientState true_state = ClientState::Normal;
  double model_size_bits = 0.0;

  void validate() const;
};

struct NoiseAndCap
{
  double noise_power_w = 1e-5;
  double latency_cap_s = 1.0;

  void validate() const;
};

/// The two transition matrices printed for a sample client class.
TransitionPair sample_transitions();

double dbm_to_watts(double dbm);

/// Deterministic part of the training time: compute_coefficient * dataset_size.
double training_shift(const Client& client);

/// Mean of the exponential tail. The tail mean grows with the state
/// coefficient so that busier states are slower.
double training_tail_mean(const Client& client, ClientState state, const ClientClass& cls);

/// Maps a unit-mean exponential draw onto a training time.
double training_time_from_unit_draw(const Client& client, ClientState state, const ClientClass& cls,
                                    double unit_exponential);

double sample_training_time(const Client& client, ClientState state, const ClientClass& cls, Rng& rng);

double expected_training_time(const Client& client, ClientState state, const ClientClass& cls);

/// P[t_train <= t] for the shifted exponential.
double training_time_cdf(const Client& client, ClientState state, const ClientClass& cls, double t);

/// E[min(cap, t_train + extra)] for a deterministic extra delay.
double expected_capped_latency(const Client& client, ClientState state, const ClientClass& cls,
                               double extra_delay, double cap);

double sample_channel_gain_sq(const ClientClass& cls, Rng& rng);

/// Uplink time U / (B log2(1 + p g^2 / noise)). Returns +infinity when the
/// rate is zero or underflows.
double communication_time(const Client& client, const ClientClass& cls, double gain_sq,
                          const NoiseAndCap& noise);

ClientState step_state(ClientState state, bool selected, const TransitionPair& transitions, Rng& rng);

/// min(cap, max(latencies)). Throws std::invalid_argument when empty.
double round_latency(std::span<const double> selected_latencies, double cap);

/// Stationary distribution by power iteration to 1e-10.
/// Throws std::domain_error for reducible or non-converging chains.
Vector3 stationary_distribution(const Matrix3& matrix);

} // namespace wfl
