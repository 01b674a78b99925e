#pragma once

#include <span>
#include <vector>

#include "softdag/environments.hpp"
#include "softdag/graph.hpp"
#include "softdag/reward.hpp"

namespace softdag {

// Optimal soft values. v is per state (V(s_f) = 0 is implicit); q is per action slot.
struct SoftValues {
  std::vector<double> v;
  std::vector<double> q;
  double alpha = 1.0;
};

// Forward policy as log-probabilities over each state's action slots.
struct PolicyTable {
  std::vector<double> log_probs;

  double log_prob(const SoftMdpGraph& g, StateId s, std::size_t a) const { return log_probs[g.action_offset(s) + a]; }
  std::span<const double> row(const SoftMdpGraph& g, StateId s) const {
    return std::span<const double>(log_probs).subspan(g.action_offset(s), g.num_actions(s));
  }
};

// Probabilities over the terminating states, in graph.terminating_states() order.
struct DistributionTable {
  std::vector<StateId> states;
  std::vector<double> probs;
  double log_z = 0.0;  // log normalizer where one applies, NaN otherwise
};

// Single reverse-topological sweep of the soft Bellman optimality equations.
SoftValues soft_value_iteration(const SoftMdpGraph& graph, const RewardScheme& scheme);

// pi*(s'|s) = exp((Q*(s,s') - V*(s)) / alpha)
PolicyTable optimal_policy(const SoftMdpGraph& graph, const SoftValues& values);

PolicyTable uniform_policy(const SoftMdpGraph& graph);

// Forward DP over state-visit mass: prob(x) = m(x) * pi(sink | x).
DistributionTable terminating_distribution(const SoftMdpGraph& graph, const PolicyTable& policy);

// P(x) proportional to exp(-E(x) / alpha).
DistributionTable gibbs_target(const SoftMdpGraph& graph, const EnergyModel& energy, double alpha);

// Jensen-Shannon divergence in nats with 0 log 0 = 0. Throws kInvalidArgument on a support mismatch.
double jsd(const DistributionTable& p, const DistributionTable& q);

// Pearson correlation. Throws kPrecondition with < 2 samples or zero variance.
double pearson_logprob_return(std::span<const double> log_probs, std::span<const double> returns);

}  // namespace softdag
