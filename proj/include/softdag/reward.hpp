#pragma once

#include <optional>
#include <string>
#include <vector>

#include "softdag/environments.hpp"
#include "softdag/graph.hpp"

namespace softdag {

// P_B(s | s') over the parents of each s' != s0, stored with cached logs.
class BackwardPolicy {
 public:
  BackwardPolicy() = default;
  BackwardPolicy(const SoftMdpGraph& graph, std::vector<std::vector<double>> rows);

  std::span<const double> row(StateId child) const { return probs_[child]; }
  std::span<const double> log_row(StateId child) const { return logs_[child]; }

  // log P_B(from | to) for the edge from -> children(from)[a].
  double log_prob(const SoftMdpGraph& graph, StateId from, std::size_t a) const {
    return logs_[graph.action_target(from, a)][graph.parent_slot(from, a)];
  }

 private:
  std::vector<std::vector<double>> probs_;
  std::vector<std::vector<double>> logs_;
};

enum class BackwardKind { kUniform, kCounting };

BackwardPolicy uniform_backward_policy(const SoftMdpGraph& graph);
// P_B(s | s') = n(s) / n(s'); propagates kLimit from trajectory counting.
BackwardPolicy counting_backward_policy(const SoftMdpGraph& graph);
BackwardPolicy make_backward_policy(const SoftMdpGraph& graph, BackwardKind kind);

enum class RewardKind { kUncorrected, kTerminalCorrected, kDenseCorrected, kForwardLooking };

const char* to_string(RewardKind kind);
const char* to_string(BackwardKind kind);
std::optional<RewardKind> parse_reward_kind(const std::string& name);
std::optional<BackwardKind> parse_backward_kind(const std::string& name);

// A reward function r(s, s') compiled into a per-action table.
//
//   Uncorrected        interior 0                          sink -E(s)
//   TerminalCorrected  interior a log P_B(s|s')            sink -E(s)
//   DenseCorrected     interior E(s)-E(s') + a log P_B     sink 0
//   ForwardLooking     interior -E(s->s') + a log P_B      sink 0
//
// Uncorrected may still carry a reference P_B, used only by the return-identity
// diagnostic.
class RewardScheme {
 public:
  RewardScheme(const SoftMdpGraph& graph, const EnergyModel& energy, RewardKind kind,
               std::optional<BackwardPolicy> backward, double alpha);

  RewardKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const std::optional<BackwardPolicy>& backward() const { return backward_; }

  double reward(const SoftMdpGraph& graph, StateId from, std::size_t action) const {
    return table_[graph.action_offset(from) + action];
  }
  // Throws kInvalidArgument if the transition is not an edge or legal termination.
  double reward(const SoftMdpGraph& graph, const Transition& t) const;

  std::span<const double> table() const { return table_; }
  double terminal_energy(StateId x) const { return terminal_[x]; }

 private:
  RewardKind kind_;
  double alpha_;
  std::optional<BackwardPolicy> backward_;
  std::vector<double> table_;
  std::vector<double> terminal_;
};

// sum_t r(s_t, s_t+1) - (-E(s_T) + alpha sum_t log P_B(s_t | s_t+1)).
// `backward` overrides the scheme's own P_B (required when the scheme has none).
double verify_return_identity(const SoftMdpGraph& graph, const RewardScheme& scheme, const Trajectory& complete,
                              const BackwardPolicy* backward = nullptr);

}  // namespace softdag
