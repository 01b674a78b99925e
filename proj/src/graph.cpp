#include "softdag/graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>

#include "softdag/error.hpp"

namespace softdag {

std::string to_string(TrajectoryCount n) {
  if (n == 0) return "0";
  std::string digits;
  while (n > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(n % 10)));
    n /= 10;
  }
  std::reverse(digits.begin(), digits.end());
  return digits;
}

SoftMdpGraph::SoftMdpGraph(std::size_t num_states, StateId initial_state, std::vector<std::vector<StateId>> children,
                           std::vector<bool> terminating, std::vector<std::string> labels)
    : initial_(initial_state), children_(std::move(children)), terminating_(std::move(terminating)),
      labels_(std::move(labels)) {
  require(num_states > 0, ErrorCode::kInvalidArgument, "graph must have at least one state");
  require(num_states < kSink, ErrorCode::kInvalidArgument, "too many states");
  require(children_.size() == num_states, ErrorCode::kInvalidArgument, "children list size != num_states");
  require(terminating_.size() == num_states, ErrorCode::kInvalidArgument, "terminating flags size != num_states");
  require(initial_ < num_states, ErrorCode::kInvalidArgument, "initial_state out of range");
  if (labels_.empty()) {
    labels_.reserve(num_states);
    for (std::size_t s = 0; s < num_states; ++s) labels_.push_back(std::to_string(s));
  }
  require(labels_.size() == num_states, ErrorCode::kInvalidArgument, "labels size != num_states");

  parents_.assign(num_states, {});
  action_offset_.assign(num_states + 1, 0);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (StateId c : children_[s]) {
      require(c < num_states, ErrorCode::kInvalidArgument,
              "edge " + std::to_string(s) + "->" + std::to_string(c) + " out of range");
      parents_[c].push_back(static_cast<StateId>(s));
    }
    num_edges_ += children_[s].size();
    action_offset_[s + 1] = action_offset_[s] + children_[s].size() + (terminating_[s] ? 1 : 0);
    if (terminating_[s]) terminating_list_.push_back(static_cast<StateId>(s));
  }

  parent_slot_.assign(action_offset_.back(), 0);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < children_[s].size(); ++a) {
      const auto& pa = parents_[children_[s][a]];
      const auto it = std::find(pa.begin(), pa.end(), static_cast<StateId>(s));
      parent_slot_[action_offset_[s] + a] = static_cast<std::size_t>(it - pa.begin());
    }
  }
}

SoftMdpGraph SoftMdpGraph::from_edges(std::size_t num_states, StateId initial_state,
                                      std::span<const std::pair<StateId, StateId>> edges,
                                      std::vector<bool> terminating, std::vector<std::string> labels) {
  std::vector<std::vector<StateId>> children(num_states);
  for (const auto& [from, to] : edges) {
    require(from < num_states && to < num_states, ErrorCode::kInvalidArgument,
            "edge " + std::to_string(from) + "->" + std::to_string(to) + " out of range");
    children[from].push_back(to);
  }
  return SoftMdpGraph(num_states, initial_state, std::move(children), std::move(terminating), std::move(labels));
}

std::optional<std::size_t> SoftMdpGraph::action_of(StateId s, StateId to) const {
  if (s >= num_states()) return std::nullopt;
  if (to == kSink) {
    if (!terminating_[s]) return std::nullopt;
    return children_[s].size();
  }
  const auto& ch = children_[s];
  const auto it = std::find(ch.begin(), ch.end(), to);
  if (it == ch.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ch.begin());
}

std::vector<std::pair<StateId, StateId>> SoftMdpGraph::edges() const {
  std::vector<std::pair<StateId, StateId>> out;
  out.reserve(num_edges_);
  for (std::size_t s = 0; s < children_.size(); ++s)
    for (StateId c : children_[s]) out.emplace_back(static_cast<StateId>(s), c);
  return out;
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kCycle: return "cycle";
    case ViolationKind::kUnreachable: return "unreachable";
    case ViolationKind::kNoTerminatingReach: return "no_terminating_reach";
    case ViolationKind::kInitialHasParents: return "initial_has_parents";
    case ViolationKind::kParentMismatch: return "parent_mismatch";
    case ViolationKind::kDuplicateEdge: return "duplicate_edge";
    case ViolationKind::kSelfLoop: return "self_loop";
  }
  return "unknown";
}

namespace {

// Kahn's algorithm; returns the partial order and leaves `indegree` > 0 on
// states that sit on or behind a cycle.
std::vector<StateId> kahn(const SoftMdpGraph& g, std::vector<std::size_t>& indegree) {
  const std::size_t n = g.num_states();
  indegree.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (StateId c : g.children(static_cast<StateId>(s))) ++indegree[c];

  std::deque<StateId> ready;
  if (indegree[g.initial_state()] == 0) ready.push_back(g.initial_state());
  for (std::size_t s = 0; s < n; ++s)
    if (indegree[s] == 0 && s != g.initial_state()) ready.push_back(static_cast<StateId>(s));

  std::vector<StateId> order;
  order.reserve(n);
  while (!ready.empty()) {
    const StateId s = ready.front();
    ready.pop_front();
    order.push_back(s);
    for (StateId c : g.children(s))
      if (--indegree[c] == 0) ready.push_back(c);
  }
  return order;
}

}  // namespace

ValidationReport validate_dag(const SoftMdpGraph& g) {
  ValidationReport report;
  const std::size_t n = g.num_states();
  auto add = [&](ViolationKind k, StateId s, StateId o = kSink) { report.violations.push_back({k, s, o}); };

  for (std::size_t s = 0; s < n; ++s) {
    const auto ch = g.children(static_cast<StateId>(s));
    std::set<StateId> seen;
    for (StateId c : ch) {
      if (c == s) add(ViolationKind::kSelfLoop, static_cast<StateId>(s), c);
      if (!seen.insert(c).second) add(ViolationKind::kDuplicateEdge, static_cast<StateId>(s), c);
      const auto pa = g.parents(c);
      if (std::count(pa.begin(), pa.end(), static_cast<StateId>(s)) != std::count(ch.begin(), ch.end(), c))
        add(ViolationKind::kParentMismatch, static_cast<StateId>(s), c);
    }
    for (StateId p : g.parents(static_cast<StateId>(s))) {
      const auto pch = g.children(p);
      if (std::find(pch.begin(), pch.end(), static_cast<StateId>(s)) == pch.end())
        add(ViolationKind::kParentMismatch, p, static_cast<StateId>(s));
    }
  }
  if (!g.parents(g.initial_state()).empty()) add(ViolationKind::kInitialHasParents, g.initial_state());

  std::vector<std::size_t> indegree;
  kahn(g, indegree);
  for (std::size_t s = 0; s < n; ++s)
    if (indegree[s] > 0 && g.children(static_cast<StateId>(s)).size() > 0) {
      // Only report states that lie on a cycle: those reachable from themselves.
      std::vector<bool> vis(n, false);
      std::vector<StateId> stack(g.children(static_cast<StateId>(s)).begin(), g.children(static_cast<StateId>(s)).end());
      bool on_cycle = false;
      while (!stack.empty() && !on_cycle) {
        const StateId u = stack.back();
        stack.pop_back();
        if (u == s) on_cycle = true;
        if (vis[u]) continue;
        vis[u] = true;
        for (StateId c : g.children(u)) stack.push_back(c);
      }
      if (on_cycle) add(ViolationKind::kCycle, static_cast<StateId>(s));
    }

  std::vector<bool> reach(n, false);
  std::vector<StateId> stack{g.initial_state()};
  while (!stack.empty()) {
    const StateId u = stack.back();
    stack.pop_back();
    if (reach[u]) continue;
    reach[u] = true;
    for (StateId c : g.children(u)) stack.push_back(c);
  }
  std::vector<bool> coreach(n, false);
  for (StateId x : g.terminating_states()) stack.push_back(x);
  while (!stack.empty()) {
    const StateId u = stack.back();
    stack.pop_back();
    if (coreach[u]) continue;
    coreach[u] = true;
    for (StateId p : g.parents(u)) stack.push_back(p);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!reach[s]) add(ViolationKind::kUnreachable, static_cast<StateId>(s));
    if (!coreach[s]) add(ViolationKind::kNoTerminatingReach, static_cast<StateId>(s));
  }

  report.is_valid = report.violations.empty();
  return report;
}

std::vector<StateId> topological_order(const SoftMdpGraph& g) {
  std::vector<std::size_t> indegree;
  auto order = kahn(g, indegree);
  if (order.size() != g.num_states()) {
    std::string stuck;
    for (std::size_t s = 0, shown = 0; s < indegree.size() && shown < 8; ++s)
      if (indegree[s] > 0) {
        stuck += (shown++ ? "," : "") + std::to_string(s);
      }
    fail(ErrorCode::kPrecondition, "cycle detected; states not orderable include {" + stuck + "}");
  }
  return order;
}

std::vector<TrajectoryCount> count_trajectories(const SoftMdpGraph& g) {
  const auto order = topological_order(g);
  std::vector<TrajectoryCount> n(g.num_states(), 0);
  n[g.initial_state()] = 1;
  for (StateId s : order) {
    for (StateId c : g.children(s)) {
      if (__builtin_add_overflow(n[c], n[s], &n[c]))
        fail(ErrorCode::kLimit, "trajectory count overflows 128 bits at state " + std::to_string(c));
    }
  }
  return n;
}

std::vector<Trajectory> enumerate_complete_trajectories(const SoftMdpGraph& g, std::size_t cap) {
  const auto counts = count_trajectories(g);
  TrajectoryCount total = 0;
  for (StateId x : g.terminating_states())
    if (__builtin_add_overflow(total, counts[x], &total))
      fail(ErrorCode::kLimit, "complete trajectory count overflows 128 bits");
  if (total > static_cast<TrajectoryCount>(cap))
    fail(ErrorCode::kLimit,
         "complete trajectory count " + to_string(total) + " exceeds cap " + std::to_string(cap));

  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<StateId> path{g.initial_state()};
  std::function<void(StateId)> walk = [&](StateId s) {
    if (g.terminating(s)) out.push_back({path, true});
    for (StateId c : g.children(s)) {
      path.push_back(c);
      walk(c);
      path.pop_back();
    }
  };
  walk(g.initial_state());
  return out;
}

}  // namespace softdag
