#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wfl {

// Every stochastic routine takes an explicit stream; nothing draws from global state.
using Rng = std::mt19937_64;

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

enum class ClientState : std::uint8_t { Normal = 0, Limited = 1, Busy = 2 };

inline constexpr std::size_t kNumStates = 3;
inline constexpr std::array<ClientState, kNumStates> kAllStates{
    ClientState::Normal, ClientState::Limited, ClientState::Busy};

constexpr std::size_t index_of(ClientState s) { return static_cast<std::size_t>(s); }
constexpr ClientState state_from_index(std::size_t i) { return static_cast<ClientState>(i); }

constexpr std::string_view to_string(ClientState s)
{
  switch (s) {
  case ClientState::Normal: return "normal";
  case ClientState::Limited: return "limited";
  case ClientState::Busy: return "busy";
  }
  return "?";
}

// Builds an independent stream from a run seed and a stream label so that
// data generation, environment draws, local training and policy randomness
// never perturb one another.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

struct ConfigError : std::runtime_error
{
  ConfigError(std::string key, const std::string& what)
    : std::runtime_error(key.empty() ? what : key + ": " + what), key(std::move(key))
  {
  }
  std::string key;
};

} // namespace wfl
