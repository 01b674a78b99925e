#include "softdag/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "softdag/error.hpp"
#include "softdag/logmath.hpp"

namespace softdag {

SoftValues soft_value_iteration(const SoftMdpGraph& g, const RewardScheme& scheme) {
  const double alpha = scheme.alpha();
  SoftValues out;
  out.alpha = alpha;
  out.v.assign(g.num_states(), 0.0);
  out.q.assign(g.total_actions(), 0.0);
  const auto order = topological_order(g);
  std::vector<double> scaled;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const StateId s = *it;
    const std::size_t off = g.action_offset(s);
    const std::size_t k = g.num_actions(s);
    scaled.resize(k);
    for (std::size_t a = 0; a < k; ++a) {
      const StateId next = g.action_target(s, a);
      const double q = scheme.reward(g, s, a) + (next == kSink ? 0.0 : out.v[next]);
      out.q[off + a] = q;
      scaled[a] = q / alpha;
    }
    out.v[s] = alpha * log_sum_exp(scaled);
  }
  return out;
}

PolicyTable optimal_policy(const SoftMdpGraph& g, const SoftValues& values) {
  PolicyTable pi;
  pi.log_probs.resize(g.total_actions());
  for (StateId s = 0; s < g.num_states(); ++s) {
    const std::size_t off = g.action_offset(s);
    for (std::size_t a = 0; a < g.num_actions(s); ++a)
      pi.log_probs[off + a] = (values.q[off + a] - values.v[s]) / values.alpha;
  }
  return pi;
}

PolicyTable uniform_policy(const SoftMdpGraph& g) {
  PolicyTable pi;
  pi.log_probs.resize(g.total_actions());
  for (StateId s = 0; s < g.num_states(); ++s)
    for (std::size_t a = 0; a < g.num_actions(s); ++a)
      pi.log_probs[g.action_offset(s) + a] = -std::log(static_cast<double>(g.num_actions(s)));
  return pi;
}

DistributionTable terminating_distribution(const SoftMdpGraph& g, const PolicyTable& policy) {
  require(policy.log_probs.size() == g.total_actions(), ErrorCode::kInvalidArgument,
          "policy table does not match the graph");
  std::vector<double> mass(g.num_states(), 0.0);
  mass[g.initial_state()] = 1.0;
  for (StateId s : topological_order(g)) {
    if (mass[s] == 0.0) continue;
    for (std::size_t a = 0; a < g.children(s).size(); ++a)
      mass[g.children(s)[a]] += mass[s] * std::exp(policy.log_prob(g, s, a));
  }
  DistributionTable out;
  out.log_z = std::numeric_limits<double>::quiet_NaN();
  for (StateId x : g.terminating_states()) {
    out.states.push_back(x);
    out.probs.push_back(mass[x] * std::exp(policy.log_prob(g, x, g.sink_action(x))));
  }
  return out;
}

DistributionTable gibbs_target(const SoftMdpGraph& g, const EnergyModel& energy, double alpha) {
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "alpha must be positive");
  DistributionTable out;
  std::vector<double> logits;
  for (StateId x : g.terminating_states()) {
    require(std::isfinite(energy.terminal[x]), ErrorCode::kPrecondition,
            "terminal energy of state " + std::to_string(x) + " is not finite");
    out.states.push_back(x);
    logits.push_back(-energy.terminal[x] / alpha);
  }
  out.log_z = log_sum_exp(logits);
  for (double l : logits) out.probs.push_back(std::exp(l - out.log_z));
  return out;
}

double jsd(const DistributionTable& p, const DistributionTable& q) {
  require(p.states == q.states && p.probs.size() == q.probs.size() && p.probs.size() == p.states.size(),
          ErrorCode::kInvalidArgument, "JSD between distributions with different supports");
  auto term = [](double a, double m) { return a > 0.0 ? a * std::log(a / m) : 0.0; };
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    const double m = 0.5 * (p.probs[i] + q.probs[i]);
    kl_p += term(p.probs[i], m);
    kl_q += term(q.probs[i], m);
  }
  return std::max(0.0, 0.5 * kl_p + 0.5 * kl_q);
}

double pearson_logprob_return(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kInvalidArgument, "Pearson inputs differ in length");
  require(x.size() >= 2, ErrorCode::kPrecondition, "Pearson needs at least two samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorCode::kPrecondition, "Pearson correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace softdag
