#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softdag/graph.hpp"

namespace softdag {

// Energies in nats. All per-action tables follow SoftMdpGraph's action layout.
struct EnergyModel {
  // Per state; NaN on non-terminating states.
  std::vector<double> terminal;
  // Forward-looking decomposition E(s -> s'), per action slot (sink slots 0).
  std::optional<std::vector<double>> edge;
  // Per-state energy when every state is terminating; normalized to E(s0) = 0.
  std::optional<std::vector<double>> state;

  double terminal_energy(StateId x) const { return terminal[x]; }
};

struct Environment {
  std::string kind;
  SoftMdpGraph graph;
  EnergyModel energy;
  std::string config_echo;  // resolved JSON config, seeds included
};

struct EnvLimits {
  std::size_t max_states = 200'000;
  std::size_t max_terminating = 100'000;
};

// Six-state DAG with two routes into x4. Energies are for (x3, x4, x5).
// Exposes an edge decomposition charging E(x) on the edge entering x.
Environment build_fig1_toy(const std::array<double, 3>& energies);

struct Factor {
  std::vector<std::size_t> scope;  // 0-based variable indices, distinct
  std::vector<double> table;       // K^|scope| potentials, first scope variable most significant
};

struct FactorGraphSpec {
  std::size_t num_vars = 0;    // d
  std::size_t num_values = 0;  // K
  std::vector<Factor> factors;
};

// Random factor tables with i.i.d. standard normal entries. Structures:
// "chain" (unary + consecutive pairs), "star" (unary + pairs with variable 0),
// "complete" (unary + all pairs), "none".
FactorGraphSpec random_factor_graph(std::size_t d, std::size_t k, const std::string& structure, std::uint64_t seed);

// E(v) = -sum_m psi_m(v[m]); each factor is charged on the transition that
// assigns the last unset variable of its scope.
Environment build_factor_graph_env(const FactorGraphSpec& spec, const EnvLimits& limits = {});

// Subsets of {0..n-1}; every state terminating. `energies` is indexed by
// bitmask and is shifted so that E(empty) = 0.
Environment build_subset_env(std::size_t n, std::vector<double> energies, const EnvLimits& limits = {});

// Nucleotide sets per site; bit 0 = A, 1 = C, 2 = G, 3 = T.
using CharSet = std::uint8_t;

std::vector<CharSet> encode_sequence(const std::string& seq);

struct FitchResult {
  std::size_t mutations = 0;
  std::vector<CharSet> root;
};

// One Fitch step: per site, intersection at cost 0 if nonempty, else union at cost 1.
FitchResult fitch_root_mutations(const std::vector<CharSet>& left, const std::vector<CharSet>& right);

struct PhyloSpec {
  std::vector<std::string> sequences;
  std::vector<std::string> names;  // optional; defaults to s0..s{d-1}
  double scale = 4.0;              // energy divisor C
};

// (2d-3)!!, saturating to 0 on overflow.
std::uint64_t num_rooted_binary_trees(std::size_t leaves);

// States are forests of rooted binary trees over the species; actions merge
// two trees under a new root. E(T) = parsimony(T) / C.
Environment build_phylo_env(const PhyloSpec& spec, const EnvLimits& limits = {});

}  // namespace softdag
