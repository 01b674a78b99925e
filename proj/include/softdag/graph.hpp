#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace softdag {

using StateId = std::uint32_t;

// The abstract terminal state s_f. Never stored in the graph; a transition
// into it is the reserved "terminate" action of a terminating state.
inline constexpr StateId kSink = std::numeric_limits<StateId>::max();

// Number of distinct partial trajectories s0 ~> s. Grows factorially.
using TrajectoryCount = unsigned __int128;

std::string to_string(TrajectoryCount n);

struct Transition {
  StateId from = 0;
  StateId to = kSink;
  bool to_sink() const { return to == kSink; }
  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
  std::vector<StateId> states;
  bool ends_at_sink = false;

  // Number of edges, counting the final transition into the sink.
  std::size_t num_edges() const {
    if (states.empty()) return 0;
    return states.size() - 1 + (ends_at_sink ? 1 : 0);
  }
  Transition edge(std::size_t i) const {
    return {states[i], i + 1 < states.size() ? states[i + 1] : kSink};
  }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Immutable DAG over states with an implicit sink.
//
// Every state s owns a contiguous block of "action slots" in a flat table:
// one slot per child (in children order) followed by one sink slot when s is
// terminating. Per-action tables (policy logits, Q-values, rewards, edge
// energies) all share this layout.
class SoftMdpGraph {
 public:
  SoftMdpGraph() = default;

  // Indices must be in range; acyclicity and reachability are checked by
  // validate_dag, not here, so that invalid graphs can still be reported on.
  SoftMdpGraph(std::size_t num_states, StateId initial_state, std::vector<std::vector<StateId>> children,
               std::vector<bool> terminating, std::vector<std::string> labels = {});

  static SoftMdpGraph from_edges(std::size_t num_states, StateId initial_state,
                                 std::span<const std::pair<StateId, StateId>> edges, std::vector<bool> terminating,
                                 std::vector<std::string> labels = {});

  std::size_t num_states() const { return children_.size(); }
  StateId initial_state() const { return initial_; }
  std::span<const StateId> children(StateId s) const { return children_[s]; }
  std::span<const StateId> parents(StateId s) const { return parents_[s]; }
  bool terminating(StateId s) const { return terminating_[s]; }
  const std::string& label(StateId s) const { return labels_[s]; }
  std::size_t num_edges() const { return num_edges_; }

  // Terminating states in increasing index order (the sample space).
  std::span<const StateId> terminating_states() const { return terminating_list_; }

  std::size_t num_actions(StateId s) const { return action_offset_[s + 1] - action_offset_[s]; }
  std::size_t action_offset(StateId s) const { return action_offset_[s]; }
  std::size_t total_actions() const { return action_offset_.back(); }
  // Local index of the sink action within the state's block (== out-degree).
  std::size_t sink_action(StateId s) const { return children_[s].size(); }

  // Local action index of s -> to (to may be kSink); nullopt if not an edge.
  std::optional<std::size_t> action_of(StateId s, StateId to) const;
  // Target of local action a of state s (kSink for the terminate action).
  StateId action_target(StateId s, std::size_t a) const {
    return a < children_[s].size() ? children_[s][a] : kSink;
  }
  // Position of parent `from` in parents(children(from)[a]).
  std::size_t parent_slot(StateId from, std::size_t a) const { return parent_slot_[action_offset_[from] + a]; }

  bool is_edge(const Transition& t) const { return action_of(t.from, t.to).has_value(); }

  // Flattened [from, to] edge list in state/child order.
  std::vector<std::pair<StateId, StateId>> edges() const;

 private:
  StateId initial_ = 0;
  std::vector<std::vector<StateId>> children_;
  std::vector<std::vector<StateId>> parents_;
  std::vector<bool> terminating_;
  std::vector<std::string> labels_;
  std::vector<StateId> terminating_list_;
  std::vector<std::size_t> action_offset_{0};
  std::vector<std::size_t> parent_slot_;
  std::size_t num_edges_ = 0;
};

enum class ViolationKind {
  kCycle,
  kUnreachable,          // not reachable from the initial state
  kNoTerminatingReach,   // cannot reach any terminating state
  kInitialHasParents,
  kParentMismatch,
  kDuplicateEdge,
  kSelfLoop,
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  StateId state;
  StateId other = kSink;  // second endpoint for edge-level violations
};

struct ValidationReport {
  bool is_valid = true;
  std::vector<Violation> violations;
};

ValidationReport validate_dag(const SoftMdpGraph& graph);

// Kahn order seeded with the initial state. Throws kPrecondition on a cycle.
std::vector<StateId> topological_order(const SoftMdpGraph& graph);

// n(s) by forward DP; n(s0) = 1. Throws kLimit on 128-bit overflow.
std::vector<TrajectoryCount> count_trajectories(const SoftMdpGraph& graph);

// Every complete trajectory s0 ~> x -> s_f exactly once. Throws kLimit when
// the total count exceeds cap.
std::vector<Trajectory> enumerate_complete_trajectories(const SoftMdpGraph& graph, std::size_t cap);

}  // namespace softdag
