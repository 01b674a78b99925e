#include "softdag/environments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "softdag/error.hpp"

namespace softdag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> nan_terminal(std::size_t n) { return std::vector<double>(n, kNaN); }

// Checked integer power; nullopt when the result would exceed `bound`.
std::optional<std::size_t> bounded_pow(std::size_t base, std::size_t exp, std::size_t bound) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && r > bound / base) return std::nullopt;
    r *= base;
  }
  if (r > bound) return std::nullopt;
  return r;
}

}  // namespace

Environment build_fig1_toy(const std::array<double, 3>& e) {
  // s0=0, s1=1, s2=2, x3=3, x4=4, x5=5
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 4}, {2, 5}};
  Environment env;
  env.kind = "fig1";
  env.graph = SoftMdpGraph::from_edges(6, 0, edges, {false, false, false, true, true, true},
                                       {"s0", "s1", "s2", "x3", "x4", "x5"});
  env.energy.terminal = nan_terminal(6);
  env.energy.terminal[3] = e[0];
  env.energy.terminal[4] = e[1];
  env.energy.terminal[5] = e[2];

  const auto& g = env.graph;
  std::vector<double> edge(g.total_actions(), 0.0);
  for (StateId s = 0; s < g.num_states(); ++s)
    for (std::size_t a = 0; a < g.children(s).size(); ++a) {
      const StateId c = g.children(s)[a];
      if (g.terminating(c)) edge[g.action_offset(s) + a] = env.energy.terminal[c];
    }
  env.energy.edge = std::move(edge);
  return env;
}

FactorGraphSpec random_factor_graph(std::size_t d, std::size_t k, const std::string& structure, std::uint64_t seed) {
  require(d >= 1 && k >= 1, ErrorCode::kInvalidArgument, "factor graph needs d >= 1 and K >= 1");
  FactorGraphSpec spec;
  spec.num_vars = d;
  spec.num_values = k;
  std::vector<std::vector<std::size_t>> scopes;
  if (structure != "none") {
    for (std::size_t i = 0; i < d; ++i) scopes.push_back({i});
    if (structure == "chain") {
      for (std::size_t i = 0; i + 1 < d; ++i) scopes.push_back({i, i + 1});
    } else if (structure == "star") {
      for (std::size_t i = 1; i < d; ++i) scopes.push_back({0, i});
    } else if (structure == "complete") {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) scopes.push_back({i, j});
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown factor graph structure '" + structure + "'");
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& scope : scopes) {
    Factor f;
    f.table.resize(static_cast<std::size_t>(std::pow(static_cast<double>(k), static_cast<double>(scope.size()))));
    for (double& v : f.table) v = normal(rng);
    f.scope = std::move(scope);
    spec.factors.push_back(std::move(f));
  }
  return spec;
}

Environment build_factor_graph_env(const FactorGraphSpec& spec, const EnvLimits& limits) {
  const std::size_t d = spec.num_vars;
  const std::size_t k = spec.num_values;
  require(d >= 1 && k >= 1, ErrorCode::kInvalidArgument, "factor graph needs d >= 1 and K >= 1");
  const auto num_states = bounded_pow(k + 1, d, limits.max_states);
  require(num_states.has_value(), ErrorCode::kLimit,
          "factor graph state count (K+1)^d exceeds max_states " + std::to_string(limits.max_states));
  require(bounded_pow(k, d, limits.max_terminating).has_value(), ErrorCode::kLimit,
          "factor graph sample space K^d exceeds max_terminating " + std::to_string(limits.max_terminating));

  for (const auto& f : spec.factors) {
    require(!f.scope.empty(), ErrorCode::kInvalidArgument, "factor with empty scope");
    std::vector<std::size_t> sorted = f.scope;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::kInvalidArgument,
            "factor scope has repeated variables");
    require(sorted.back() < d, ErrorCode::kInvalidArgument, "factor scope variable out of range");
    const auto expect = bounded_pow(k, f.scope.size(), std::numeric_limits<std::size_t>::max() / 2);
    require(expect && f.table.size() == *expect, ErrorCode::kInvalidArgument,
            "factor table must have K^|scope| entries");
  }

  const std::size_t n = *num_states;
  std::vector<std::size_t> place(d);
  for (std::size_t i = 0; i < d; ++i) place[i] = i == 0 ? 1 : place[i - 1] * (k + 1);
  auto digit = [&](std::size_t s, std::size_t i) { return (s / place[i]) % (k + 1); };

  // Potential of factor f under state s; only meaningful when its scope is set.
  auto potential = [&](const Factor& f, std::size_t s) {
    std::size_t idx = 0;
    for (std::size_t v : f.scope) idx = idx * k + (digit(s, v) - 1);
    return f.table[idx];
  };
  auto scope_set = [&](const Factor& f, std::size_t s) {
    return std::all_of(f.scope.begin(), f.scope.end(), [&](std::size_t v) { return digit(s, v) != 0; });
  };

  std::vector<std::vector<StateId>> children(n);
  std::vector<bool> terminating(n);
  std::vector<std::string> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    bool complete = true;
    std::string label;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t di = digit(s, i);
      if (di == 0) {
        complete = false;
        for (std::size_t v = 0; v < k; ++v) children[s].push_back(static_cast<StateId>(s + (v + 1) * place[i]));
      }
      if (k > 10 && i > 0) label += '-';
      label += di == 0 ? std::string(".") : std::to_string(di - 1);
    }
    terminating[s] = complete;
    labels[s] = std::move(label);
  }

  Environment env;
  env.kind = "factor_graph";
  env.graph = SoftMdpGraph(n, 0, std::move(children), std::move(terminating), std::move(labels));
  const auto& g = env.graph;

  env.energy.terminal = nan_terminal(n);
  for (StateId x : g.terminating_states()) {
    double e = 0.0;
    for (const auto& f : spec.factors) e -= potential(f, x);
    env.energy.terminal[x] = e;
  }
  std::vector<double> edge(g.total_actions(), 0.0);
  for (StateId s = 0; s < n; ++s) {
    const auto ch = g.children(s);
    for (std::size_t a = 0; a < ch.size(); ++a) {
      const std::size_t c = ch[a];
      std::size_t var = 0;
      while (digit(s, var) == digit(c, var)) ++var;
      double e = 0.0;
      for (const auto& f : spec.factors) {
        if (std::find(f.scope.begin(), f.scope.end(), var) == f.scope.end()) continue;
        if (scope_set(f, c)) e -= potential(f, c);
      }
      edge[g.action_offset(s) + a] = e;
    }
  }
  env.energy.edge = std::move(edge);
  return env;
}

Environment build_subset_env(std::size_t n, std::vector<double> energies, const EnvLimits& limits) {
  require(n < 31, ErrorCode::kLimit, "subset ground set too large");
  const std::size_t m = std::size_t{1} << n;
  require(m <= limits.max_states && m <= limits.max_terminating, ErrorCode::kLimit,
          "subset state count 2^n exceeds max_states " + std::to_string(limits.max_states));
  require(energies.size() == m, ErrorCode::kInvalidArgument,
          "subset env needs 2^n = " + std::to_string(m) + " energies, got " + std::to_string(energies.size()));
  for (double e : energies) require(std::isfinite(e), ErrorCode::kInvalidArgument, "subset energies must be finite");
  const double offset = energies[0];
  for (double& e : energies) e -= offset;

  std::vector<std::vector<StateId>> children(m);
  std::vector<std::string> labels(m);
  for (std::size_t s = 0; s < m; ++s) {
    std::string label = "{";
    for (std::size_t j = 0; j < n; ++j) {
      if (s & (std::size_t{1} << j)) {
        if (label.size() > 1) label += ',';
        label += std::to_string(j);
      } else {
        children[s].push_back(static_cast<StateId>(s | (std::size_t{1} << j)));
      }
    }
    labels[s] = label + "}";
  }

  Environment env;
  env.kind = "subset";
  env.graph = SoftMdpGraph(m, 0, std::move(children), std::vector<bool>(m, true), std::move(labels));
  const auto& g = env.graph;
  env.energy.terminal = energies;
  std::vector<double> edge(g.total_actions(), 0.0);
  for (StateId s = 0; s < m; ++s)
    for (std::size_t a = 0; a < g.children(s).size(); ++a)
      edge[g.action_offset(s) + a] = energies[g.children(s)[a]] - energies[s];
  env.energy.edge = std::move(edge);
  env.energy.state = std::move(energies);
  return env;
}

std::vector<CharSet> encode_sequence(const std::string& seq) {
  std::vector<CharSet> out;
  out.reserve(seq.size());
  for (char ch : seq) {
    switch (ch) {
      case 'A': case 'a': out.push_back(1); break;
      case 'C': case 'c': out.push_back(2); break;
      case 'G': case 'g': out.push_back(4); break;
      case 'T': case 't': out.push_back(8); break;
      default: fail(ErrorCode::kInvalidArgument, std::string("sequence character '") + ch + "' is not in {A,C,G,T}");
    }
  }
  return out;
}

FitchResult fitch_root_mutations(const std::vector<CharSet>& left, const std::vector<CharSet>& right) {
  require(left.size() == right.size(), ErrorCode::kInvalidArgument,
          "Fitch merge of sequences with different lengths (" + std::to_string(left.size()) + " vs " +
              std::to_string(right.size()) + ")");
  FitchResult r;
  r.root.resize(left.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    const CharSet both = left[i] & right[i];
    if (both != 0) {
      r.root[i] = both;
    } else {
      r.root[i] = left[i] | right[i];
      ++r.mutations;
    }
  }
  return r;
}

std::uint64_t num_rooted_binary_trees(std::size_t leaves) {
  if (leaves < 2) return 1;
  std::uint64_t r = 1;
  for (std::uint64_t f = 2 * leaves - 3; f > 1; f -= 2) {
    if (r > std::numeric_limits<std::uint64_t>::max() / f) return 0;
    r *= f;
  }
  return r;
}

namespace {

struct TreeNode {
  int left = -1, right = -1;
  std::uint32_t leaves = 0;     // leaf bitmask
  std::size_t min_leaf = 0;
  std::vector<CharSet> sets;    // Fitch sets at the root of this subtree
  std::size_t mutations = 0;    // parsimony score of the subtree
  std::size_t root_mutations = 0;
  std::string canonical;
};

// Number of forests of rooted binary trees on n labelled leaves.
std::uint64_t forest_count(std::size_t n) {
  // a(1)=1, a(2)=2, a(n) = (2n-3) a(n-1) + a(n-2)
  if (n <= 1) return 1;
  std::uint64_t a = 1, b = 2;
  for (std::size_t i = 3; i <= n; ++i) {
    const std::uint64_t c = (2 * i - 3) * b + a;
    a = b;
    b = c;
  }
  return b;
}

}  // namespace

Environment build_phylo_env(const PhyloSpec& spec, const EnvLimits& limits) {
  const std::size_t d = spec.sequences.size();
  require(d >= 2, ErrorCode::kInvalidArgument, "phylogeny needs at least 2 species");
  require(d <= 16, ErrorCode::kLimit, "phylogeny species count exceeds 16");
  require(spec.scale > 0.0, ErrorCode::kInvalidArgument, "phylogeny scale C must be positive");
  const std::size_t len = spec.sequences[0].size();
  for (const auto& s : spec.sequences)
    require(s.size() == len, ErrorCode::kInvalidArgument, "all sequences must have the same length");
  const std::uint64_t trees = num_rooted_binary_trees(d);
  require(trees != 0 && trees <= limits.max_terminating, ErrorCode::kLimit,
          "phylogeny sample space (2d-3)!! exceeds max_terminating " + std::to_string(limits.max_terminating));
  require(forest_count(d) <= limits.max_states, ErrorCode::kLimit,
          "phylogeny state count " + std::to_string(forest_count(d)) + " exceeds max_states " +
              std::to_string(limits.max_states));

  std::vector<std::string> names = spec.names;
  if (names.empty())
    for (std::size_t i = 0; i < d; ++i) names.push_back("s" + std::to_string(i));
  require(names.size() == d, ErrorCode::kInvalidArgument, "names must match the number of sequences");

  std::vector<TreeNode> nodes;
  std::map<std::pair<int, int>, int> merged;
  for (std::size_t i = 0; i < d; ++i) {
    TreeNode leaf;
    leaf.leaves = 1u << i;
    leaf.min_leaf = i;
    leaf.sets = encode_sequence(spec.sequences[i]);
    leaf.canonical = names[i];
    nodes.push_back(std::move(leaf));
  }
  auto merge = [&](int a, int b) {
    if (nodes[a].min_leaf > nodes[b].min_leaf) std::swap(a, b);
    const auto key = std::make_pair(a, b);
    if (auto it = merged.find(key); it != merged.end()) return it->second;
    TreeNode t;
    t.left = a;
    t.right = b;
    t.leaves = nodes[a].leaves | nodes[b].leaves;
    t.min_leaf = nodes[a].min_leaf;
    auto fitch = fitch_root_mutations(nodes[a].sets, nodes[b].sets);
    t.sets = std::move(fitch.root);
    t.root_mutations = fitch.mutations;
    t.mutations = nodes[a].mutations + nodes[b].mutations + fitch.mutations;
    t.canonical = "(" + nodes[a].canonical + "," + nodes[b].canonical + ")";
    nodes.push_back(std::move(t));
    const int id = static_cast<int>(nodes.size() - 1);
    merged.emplace(key, id);
    return id;
  };

  // A forest is the list of its tree ids ordered by minimum leaf.
  using Forest = std::vector<int>;
  std::map<Forest, StateId> index;
  std::vector<Forest> forests;
  Forest initial(d);
  for (std::size_t i = 0; i < d; ++i) initial[i] = static_cast<int>(i);
  index.emplace(initial, 0);
  forests.push_back(initial);

  std::vector<std::vector<StateId>> children;
  std::vector<std::vector<double>> child_energy;
  for (std::size_t s = 0; s < forests.size(); ++s) {
    const Forest f = forests[s];
    children.emplace_back();
    child_energy.emplace_back();
    for (std::size_t i = 0; i < f.size(); ++i)
      for (std::size_t j = i + 1; j < f.size(); ++j) {
        const int t = merge(f[i], f[j]);
        Forest next;
        for (std::size_t k = 0; k < f.size(); ++k)
          if (k != i && k != j) next.push_back(f[k]);
        next.push_back(t);
        std::sort(next.begin(), next.end(),
                  [&](int a, int b) { return nodes[a].min_leaf < nodes[b].min_leaf; });
        auto [it, inserted] = index.emplace(next, static_cast<StateId>(forests.size()));
        if (inserted) forests.push_back(next);
        children[s].push_back(it->second);
        child_energy[s].push_back(static_cast<double>(nodes[t].root_mutations) / spec.scale);
      }
  }

  const std::size_t n = forests.size();
  std::vector<bool> terminating(n);
  std::vector<std::string> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    terminating[s] = forests[s].size() == 1;
    std::string label;
    for (int t : forests[s]) label += (label.empty() ? "" : " ") + nodes[t].canonical;
    labels[s] = std::move(label);
  }

  Environment env;
  env.kind = "phylo";
  env.graph = SoftMdpGraph(n, 0, std::move(children), std::move(terminating), std::move(labels));
  const auto& g = env.graph;
  env.energy.terminal = nan_terminal(n);
  for (StateId x : g.terminating_states())
    env.energy.terminal[x] = static_cast<double>(nodes[forests[x][0]].mutations) / spec.scale;
  std::vector<double> edge(g.total_actions(), 0.0);
  for (StateId s = 0; s < n; ++s)
    for (std::size_t a = 0; a < child_energy[s].size(); ++a) edge[g.action_offset(s) + a] = child_energy[s][a];
  env.energy.edge = std::move(edge);
  return env;
}

}  // namespace softdag
