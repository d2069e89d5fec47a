#pragma once

// Single-arm subsidized MDP machinery: Bellman solver, exact Whittle index by
// bisection on the passive subsidy, and an indexability sweep. Templated on the
// scalar so the solvers can be cross-checked in extended precision.

#include "wfl/env_model.hpp"
#include "wfl/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace wfl {

template <typename Scalar>
struct ArmMdp
{
  using Matrix = Eigen::Matrix<Scalar, 3, 3>;
  using Rewards = Eigen::Matrix<Scalar, 3, 2>; // column 0 passive, column 1 active

  Rewards reward = Rewards::Zero();
  Matrix p_passive = Matrix::Identity();
  Matrix p_active = Matrix::Identity();
  Scalar discount = Scalar(0.9);

  const Matrix& transitions(int action) const { return action == 1 ? p_active : p_passive; }

  Scalar max_abs_reward() const { return reward.cwiseAbs().maxCoeff(); }

  void validate() const
  {
    if (!(discount > Scalar(0) && discount < Scalar(1))) { throw std::invalid_argument("ArmMdp: discount outside (0, 1)"); }
    if (!reward.allFinite()) { throw std::invalid_argument("ArmMdp: non-finite reward"); }
  }
};

using ArmMdpd = ArmMdp<double>;

/// Builds the arm from a transition pair (selected = active) and per-state rewards.
template <typename Scalar = double>
ArmMdp<Scalar> make_arm(const TransitionPair& transitions, const Eigen::Matrix<Scalar, 3, 1>& passive_reward,
                        const Eigen::Matrix<Scalar, 3, 1>& active_reward, Scalar discount)
{
  ArmMdp<Scalar> mdp;
  mdp.p_active = transitions.selected.cast<Scalar>();
  mdp.p_passive = transitions.unselected.cast<Scalar>();
  mdp.reward.col(0) = passive_reward;
  mdp.reward.col(1) = active_reward;
  mdp.discount = discount;
  mdp.validate();
  return mdp;
}

template <typename Scalar>
struct ValueIterationResult
{
  Eigen::Matrix<Scalar, 3, 1> values;
  Eigen::Matrix<Scalar, 3, 2> q; // q(s, a) at the returned values
  int iterations = 0;
  std::vector<Scalar> sup_norm_steps; // ||V_{k+1} - V_k|| per sweep

  /// Greedy action with ties resolved toward passivity.
  int greedy_action(std::size_t s) const
  {
    const auto i = static_cast<Eigen::Index>(s);
    return q(i, 1) > q(i, 0) ? 1 : 0;
  }

  /// True when `action` attains the maximum at `s` within `eps`.
  bool is_optimal(std::size_t s, int action, Scalar eps) const
  {
    const auto i = static_cast<Eigen::Index>(s);
    return q(i, action) >= q.row(i).maxCoeff() - eps;
  }

  Scalar gap(std::size_t s) const
  {
    const auto i = static_cast<Eigen::Index>(s);
    return q(i, 1) - q(i, 0);
  }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 2> bellman_q(const ArmMdp<Scalar>& mdp, Scalar subsidy,
                                      const Eigen::Matrix<Scalar, 3, 1>& values)
{
  Eigen::Matrix<Scalar, 3, 2> q;
  q.col(0) = mdp.reward.col(0).array() + subsidy;
  q.col(0) += mdp.discount * (mdp.p_passive * values);
  q.col(1) = mdp.reward.col(1) + mdp.discount * (mdp.p_active * values);
  return q;
}

/// Iterates V <- max_a { R(s,a) + 1{a=0} m + beta P_a(s,.) V } until the
/// sup-norm Bellman residual falls below `tol`.
template <typename Scalar>
ValueIterationResult<Scalar> value_iteration(const ArmMdp<Scalar>& mdp, Scalar subsidy, Scalar tol)
{
  if (!(tol > Scalar(0))) { throw std::invalid_argument("value_iteration: tol must be positive"); }
  ValueIterationResult<Scalar> out;
  Eigen::Matrix<Scalar, 3, 1> v = Eigen::Matrix<Scalar, 3, 1>::Zero();
  constexpr int kMaxSweeps = 1'000'000;
  for (int it = 1; it <= kMaxSweeps; ++it) {
    auto q = bellman_q(mdp, subsidy, v);
    Eigen::Matrix<Scalar, 3, 1> next = q.rowwise().maxCoeff();
    Scalar step = (next - v).cwiseAbs().maxCoeff();
    out.sup_norm_steps.push_back(step);
    v = next;
    out.iterations = it;
    // ||T V_k - V_k|| < tol, and the residual at V_{k+1} is at most beta times that.
    if (step < tol) { break; }
  }
  out.values = v;
  out.q = bellman_q(mdp, subsidy, v);
  return out;
}

/// Exact policy evaluation by a linear solve; `policy[s]` is the action in s.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> evaluate_policy(const ArmMdp<Scalar>& mdp, Scalar subsidy, const std::array<int, 3>& policy)
{
  Eigen::Matrix<Scalar, 3, 3> p;
  Eigen::Matrix<Scalar, 3, 1> r;
  for (Eigen::Index s = 0; s < 3; ++s) {
    int a = policy[static_cast<std::size_t>(s)];
    p.row(s) = mdp.transitions(a).row(s);
    r(s) = mdp.reward(s, a) + (a == 0 ? subsidy : Scalar(0));
  }
  Eigen::Matrix<Scalar, 3, 3> lhs = Eigen::Matrix<Scalar, 3, 3>::Identity() - mdp.discount * p;
  return lhs.partialPivLu().solve(r);
}

struct NotBracketed : std::runtime_error
{
  NotBracketed(double lo, double hi)
    : std::runtime_error("exact_whittle: not bracketed"), lo(lo), hi(hi)
  {
  }
  double lo;
  double hi;
};

template <typename Scalar>
Scalar indifference_gap(const ArmMdp<Scalar>& mdp, std::size_t state, Scalar subsidy)
{
  const Scalar scale = std::max(Scalar(1), mdp.max_abs_reward() + std::abs(subsidy)) / (Scalar(1) - mdp.discount);
  const Scalar tol = scale * Scalar(64) * std::numeric_limits<Scalar>::epsilon();
  return value_iteration(mdp, subsidy, std::max(tol, Scalar(1e-300))).gap(state);
}

/// Root of g(m) = Q(s,1;m) - Q(s,0;m) by bisection to bracket width below `tol`.
template <typename Scalar>
Scalar exact_whittle(const ArmMdp<Scalar>& mdp, ClientState state, Scalar lo, Scalar hi, Scalar tol)
{
  mdp.validate();
  if (!(lo < hi) || !(tol > Scalar(0))) { throw std::invalid_argument("exact_whittle: invalid bracket or tolerance"); }
  const std::size_t s = index_of(state);
  Scalar g_lo = indifference_gap(mdp, s, lo);
  Scalar g_hi = indifference_gap(mdp, s, hi);
  if (g_lo == Scalar(0)) { return lo; }
  if (g_hi == Scalar(0)) { return hi; }
  if ((g_lo > Scalar(0)) == (g_hi > Scalar(0))) {
    throw NotBracketed(static_cast<double>(lo), static_cast<double>(hi));
  }
  while (hi - lo >= tol) {
    Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mid <= lo || mid >= hi) { break; }
    Scalar g_mid = indifference_gap(mdp, s, mid);
    if (g_mid == Scalar(0)) { return mid; }
    if ((g_mid > Scalar(0)) == (g_lo > Scalar(0))) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
    }
  }
  return lo + (hi - lo) / Scalar(2);
}

/// Default bracket [-2|R|max, 2|R|max], widened geometrically until the gap changes sign.
template <typename Scalar>
Scalar exact_whittle(const ArmMdp<Scalar>& mdp, ClientState state, Scalar tol)
{
  Scalar half = Scalar(2) * mdp.max_abs_reward();
  if (!(half > Scalar(0))) { half = Scalar(1); }
  for (int widen = 0; widen < 64; ++widen) {
    try {
      return exact_whittle(mdp, state, -half, half, tol);
    } catch (const NotBracketed&) {
      half *= Scalar(4);
    }
  }
  throw NotBracketed(static_cast<double>(-half), static_cast<double>(half));
}

/// Passive set {s : greedy action is passive} at subsidy m, as a bitmask.
template <typename Scalar>
unsigned passive_set(const ArmMdp<Scalar>& mdp, Scalar subsidy)
{
  auto vi = value_iteration(mdp, subsidy, Scalar(1e-12) * std::max(Scalar(1), mdp.max_abs_reward()));
  unsigned mask = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (vi.greedy_action(s) == 0) { mask |= 1u << s; }
  }
  return mask;
}

/// True iff the passive set grows monotonically (by inclusion) along `m_grid`.
template <typename Scalar>
bool check_indexability(const ArmMdp<Scalar>& mdp, std::span<const Scalar> m_grid)
{
  if (!std::is_sorted(m_grid.begin(), m_grid.end())) {
    throw std::invalid_argument("check_indexability: grid must be increasing");
  }
  unsigned previous = 0;
  bool first = true;
  for (Scalar m : m_grid) {
    unsigned current = passive_set(mdp, m);
    if (!first && (previous & ~current) != 0) { return false; }
    previous = current;
    first = false;
  }
  return true;
}

} // namespace wfl
