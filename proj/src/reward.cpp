#include "softdag/reward.hpp"

#include <cmath>

#include "softdag/error.hpp"

namespace softdag {

BackwardPolicy::BackwardPolicy(const SoftMdpGraph& graph, std::vector<std::vector<double>> rows)
    : probs_(std::move(rows)) {
  require(probs_.size() == graph.num_states(), ErrorCode::kInvalidArgument, "backward policy needs one row per state");
  logs_.resize(probs_.size());
  for (StateId s = 0; s < probs_.size(); ++s) {
    require(probs_[s].size() == graph.parents(s).size(), ErrorCode::kInvalidArgument,
            "backward policy row " + std::to_string(s) + " does not match the parent count");
    double total = 0.0;
    logs_[s].reserve(probs_[s].size());
    for (double p : probs_[s]) {
      require(p >= 0.0, ErrorCode::kInvalidArgument, "negative backward probability");
      total += p;
      logs_[s].push_back(std::log(p));
    }
    if (!probs_[s].empty())
      require(std::abs(total - 1.0) < 1e-12, ErrorCode::kInvalidArgument,
              "backward policy row " + std::to_string(s) + " does not sum to 1");
  }
}

BackwardPolicy uniform_backward_policy(const SoftMdpGraph& graph) {
  std::vector<std::vector<double>> rows(graph.num_states());
  for (StateId s = 0; s < graph.num_states(); ++s) {
    const auto k = graph.parents(s).size();
    rows[s].assign(k, 1.0 / static_cast<double>(k));
  }
  return BackwardPolicy(graph, std::move(rows));
}

BackwardPolicy counting_backward_policy(const SoftMdpGraph& graph) {
  const auto n = count_trajectories(graph);
  std::vector<std::vector<double>> rows(graph.num_states());
  for (StateId s = 0; s < graph.num_states(); ++s) {
    const auto pa = graph.parents(s);
    rows[s].reserve(pa.size());
    const long double denom = static_cast<long double>(n[s]);
    for (StateId p : pa) rows[s].push_back(static_cast<double>(static_cast<long double>(n[p]) / denom));
    // The ratios sum to 1 exactly in real arithmetic; renormalize away rounding.
    long double total = 0;
    for (double v : rows[s]) total += v;
    for (double& v : rows[s]) v = static_cast<double>(v / total);
  }
  return BackwardPolicy(graph, std::move(rows));
}

BackwardPolicy make_backward_policy(const SoftMdpGraph& graph, BackwardKind kind) {
  return kind == BackwardKind::kCounting ? counting_backward_policy(graph) : uniform_backward_policy(graph);
}

const char* to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::kUncorrected: return "uncorrected";
    case RewardKind::kTerminalCorrected: return "terminal";
    case RewardKind::kDenseCorrected: return "dense";
    case RewardKind::kForwardLooking: return "fl";
  }
  return "?";
}

const char* to_string(BackwardKind kind) { return kind == BackwardKind::kCounting ? "counting" : "uniform"; }

std::optional<RewardKind> parse_reward_kind(const std::string& name) {
  if (name == "uncorrected") return RewardKind::kUncorrected;
  if (name == "terminal") return RewardKind::kTerminalCorrected;
  if (name == "dense") return RewardKind::kDenseCorrected;
  if (name == "fl") return RewardKind::kForwardLooking;
  return std::nullopt;
}

std::optional<BackwardKind> parse_backward_kind(const std::string& name) {
  if (name == "uniform") return BackwardKind::kUniform;
  if (name == "counting") return BackwardKind::kCounting;
  return std::nullopt;
}

RewardScheme::RewardScheme(const SoftMdpGraph& graph, const EnergyModel& energy, RewardKind kind,
                           std::optional<BackwardPolicy> backward, double alpha)
    : kind_(kind), alpha_(alpha), backward_(std::move(backward)), terminal_(energy.terminal) {
  require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::kInvalidArgument, "alpha must be positive");
  require(kind == RewardKind::kUncorrected || backward_.has_value(), ErrorCode::kPrecondition,
          std::string("reward scheme '") + to_string(kind) + "' needs a backward policy");
  require(energy.terminal.size() == graph.num_states(), ErrorCode::kPrecondition,
          "energy model does not match the graph");
  for (StateId x : graph.terminating_states())
    require(std::isfinite(energy.terminal[x]), ErrorCode::kPrecondition,
            "terminal energy missing for state " + std::to_string(x));
  if (kind == RewardKind::kDenseCorrected) {
    require(energy.state.has_value(), ErrorCode::kPrecondition, "dense reward needs per-state energies");
    require(graph.terminating_states().size() == graph.num_states(), ErrorCode::kPrecondition,
            "dense reward needs every state to be terminating");
  }
  if (kind == RewardKind::kForwardLooking)
    require(energy.edge.has_value(), ErrorCode::kPrecondition, "forward-looking reward needs edge energies");

  table_.assign(graph.total_actions(), 0.0);
  for (StateId s = 0; s < graph.num_states(); ++s) {
    const std::size_t off = graph.action_offset(s);
    const std::size_t deg = graph.children(s).size();
    for (std::size_t a = 0; a < deg; ++a) {
      const double log_pb = backward_ ? backward_->log_prob(graph, s, a) : 0.0;
      const StateId c = graph.children(s)[a];
      switch (kind) {
        case RewardKind::kUncorrected: table_[off + a] = 0.0; break;
        case RewardKind::kTerminalCorrected: table_[off + a] = alpha * log_pb; break;
        case RewardKind::kDenseCorrected:
          table_[off + a] = (*energy.state)[s] - (*energy.state)[c] + alpha * log_pb;
          break;
        case RewardKind::kForwardLooking: table_[off + a] = -(*energy.edge)[off + a] + alpha * log_pb; break;
      }
    }
    if (graph.terminating(s)) {
      const bool sparse = kind == RewardKind::kUncorrected || kind == RewardKind::kTerminalCorrected;
      table_[off + deg] = sparse ? -energy.terminal[s] : 0.0;
    }
  }
}

double RewardScheme::reward(const SoftMdpGraph& graph, const Transition& t) const {
  const auto a = graph.action_of(t.from, t.to);
  require(a.has_value(), ErrorCode::kInvalidArgument,
          "transition " + std::to_string(t.from) + "->" + (t.to_sink() ? std::string("sink") : std::to_string(t.to)) +
              " is not an edge of the graph");
  return reward(graph, t.from, *a);
}

double verify_return_identity(const SoftMdpGraph& graph, const RewardScheme& scheme, const Trajectory& complete,
                              const BackwardPolicy* backward) {
  const BackwardPolicy* pb = backward ? backward : (scheme.backward() ? &*scheme.backward() : nullptr);
  require(pb != nullptr, ErrorCode::kPrecondition, "return identity needs a backward policy");
  require(complete.ends_at_sink && !complete.states.empty() && complete.states.front() == graph.initial_state(),
          ErrorCode::kInvalidArgument, "return identity needs a complete trajectory");
  double ret = 0.0, log_pb = 0.0;
  for (std::size_t i = 0; i < complete.num_edges(); ++i) {
    const Transition t = complete.edge(i);
    const auto a = graph.action_of(t.from, t.to);
    require(a.has_value(), ErrorCode::kInvalidArgument, "trajectory contains a non-edge");
    ret += scheme.reward(graph, t.from, *a);
    if (!t.to_sink()) log_pb += pb->log_prob(graph, t.from, *a);
  }
  return ret - (-scheme.terminal_energy(complete.states.back()) + scheme.alpha() * log_pb);
}

}  // namespace softdag
