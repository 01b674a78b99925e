#include <doctest.h>

#include <cmath>
#include <random>

#include "softdag/environments.hpp"
#include "softdag/error.hpp"
#include "softdag/reward.hpp"
#include "support/brute_force.hpp"

using namespace softdag;

namespace {

Environment chain_tree() {
  // s0 -> a -> {x1, x2}, s0 -> x3; a tree, so every P_B row is {1}.
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}, {1, 2}, {1, 3}, {0, 4}};
  Environment env;
  env.graph = SoftMdpGraph::from_edges(5, 0, edges, {false, false, true, true, true});
  env.energy.terminal = {NAN, NAN, 0.3, -0.4, 1.1};
  return env;
}

}  // namespace

TEST_CASE("uniform backward policy on a tree is identically one") {
  const auto env = chain_tree();
  const auto pb = uniform_backward_policy(env.graph);
  for (StateId s = 1; s < env.graph.num_states(); ++s) {
    REQUIRE(pb.row(s).size() == 1);
    CHECK(pb.row(s)[0] == 1.0);
    CHECK(pb.log_row(s)[0] == 0.0);
  }
  CHECK(pb.row(0).empty());
}

TEST_CASE("counting backward policy: hand-checked rows") {
  const auto fig1 = build_fig1_toy({0, 0, 0});
  const auto pb = counting_backward_policy(fig1.graph);
  CHECK(pb.row(4)[0] == doctest::Approx(0.5));
  CHECK(pb.row(4)[1] == doctest::Approx(0.5));
  const auto sub = build_subset_env(2, {0, 0, 0, 0});
  const auto pb2 = counting_backward_policy(sub.graph);
  CHECK(pb2.row(3)[0] == doctest::Approx(0.5));
  CHECK(pb2.row(3)[1] == doctest::Approx(0.5));
  // Unbalanced: x reachable through a (1 way) and b (2 ways) -> (1/3, 2/3).
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}, {0, 2}, {0, 3}, {2, 3}, {1, 4}, {3, 4}};
  const auto g = SoftMdpGraph::from_edges(5, 0, edges, {false, false, false, false, true});
  const auto pb3 = counting_backward_policy(g);
  // parents(4) = {1, 3}; n(1) = 1, n(3) = 2, n(4) = 3
  CHECK(pb3.row(4)[0] == doctest::Approx(1.0 / 3.0));
  CHECK(pb3.row(4)[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("backward policy rows are validated") {
  const auto g = build_fig1_toy({0, 0, 0}).graph;
  std::vector<std::vector<double>> rows{{}, {1.0}, {1.0}, {1.0}, {0.7, 0.7}, {1.0}};
  CHECK_THROWS_AS(BackwardPolicy(g, rows), Error);
  rows[4] = {1.5, -0.5};
  CHECK_THROWS_AS(BackwardPolicy(g, rows), Error);
  rows[4] = {0.5};
  CHECK_THROWS_AS(BackwardPolicy(g, rows), Error);
}

TEST_CASE("property: backward measure over trajectories into each state sums to one") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto env = bf::random_dag(rng, 3 + trial % 8);
    for (BackwardKind k : {BackwardKind::kUniform, BackwardKind::kCounting}) {
      const auto pb = make_backward_policy(env.graph, k);
      for (StateId s = 1; s < env.graph.num_states(); ++s) {
        double total = 0.0;
        for (double p : pb.row(s)) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
      }
      for (const auto& [x, mass] : bf::backward_mass(env.graph, pb)) CHECK(std::abs(mass - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("reward table entries") {
  const auto env = build_fig1_toy({0.0, 2.0, 0.0});
  const auto& g = env.graph;
  const RewardScheme terminal(g, env.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 1.0);
  CHECK(terminal.reward(g, {1, 4}) == doctest::Approx(std::log(0.5)));
  CHECK(terminal.reward(g, {0, 1}) == 0.0);
  CHECK(terminal.reward(g, {4, kSink}) == -2.0);
  const RewardScheme hot(g, env.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 2.0);
  CHECK(hot.reward(g, {1, 4}) == doctest::Approx(2.0 * std::log(0.5)));
  const RewardScheme plain(g, env.energy, RewardKind::kUncorrected, std::nullopt, 1.0);
  CHECK(plain.reward(g, {1, 4}) == 0.0);
  CHECK(plain.reward(g, {4, kSink}) == -2.0);
  CHECK_THROWS_AS(plain.reward(g, {0, 4}), Error);
  CHECK_THROWS_AS(plain.reward(g, {1, kSink}), Error);

  const RewardScheme fl(g, env.energy, RewardKind::kForwardLooking, uniform_backward_policy(g), 1.0);
  CHECK(fl.reward(g, {1, 4}) == doctest::Approx(-2.0 + std::log(0.5)));
  CHECK(fl.reward(g, {4, kSink}) == 0.0);

  const auto sub = build_subset_env(2, {0.0, 0.3, -0.2, 1.0});
  const RewardScheme dense(sub.graph, sub.energy, RewardKind::kDenseCorrected,
                           uniform_backward_policy(sub.graph), 1.0);
  for (StateId s = 0; s < 4; ++s) CHECK(dense.reward(sub.graph, {s, kSink}) == 0.0);
  CHECK(dense.reward(sub.graph, {1, 3}) == doctest::Approx(0.3 - 1.0 + std::log(0.5)));
  CHECK(dense.reward(sub.graph, {0, 1}) == doctest::Approx(-0.3));
}

TEST_CASE("scheme preconditions") {
  const auto env = build_fig1_toy({0, 0, 0});
  const auto& g = env.graph;
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kViolation;  // sentinel: nothing thrown
  };
  CHECK(code_of([&] { RewardScheme(g, env.energy, RewardKind::kTerminalCorrected, std::nullopt, 1.0); }) ==
        ErrorCode::kPrecondition);
  CHECK(code_of([&] {
          RewardScheme(g, env.energy, RewardKind::kDenseCorrected, uniform_backward_policy(g), 1.0);
        }) == ErrorCode::kPrecondition);
  CHECK(code_of([&] {
          RewardScheme(g, env.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 0.0);
        }) == ErrorCode::kInvalidArgument);
  EnergyModel no_edges = env.energy;
  no_edges.edge.reset();
  CHECK(code_of([&] {
          RewardScheme(g, no_edges, RewardKind::kForwardLooking, uniform_backward_policy(g), 1.0);
        }) == ErrorCode::kPrecondition);
}

TEST_CASE("return identity: zero under corrected schemes, log-multiplicity gap when uncorrected") {
  const auto env = build_fig1_toy({0.2, -0.7, 1.3});
  const auto& g = env.graph;
  const auto pb = uniform_backward_policy(g);
  const RewardScheme plain(g, env.energy, RewardKind::kUncorrected, std::nullopt, 1.5);
  for (const auto& t : bf::trajectories(g)) {
    const double gap = verify_return_identity(g, plain, t, &pb);
    if (t.states.back() == 4) CHECK(gap == doctest::Approx(-1.5 * std::log(0.5)));
    else CHECK(std::abs(gap) < 1e-14);
  }
  CHECK_THROWS_AS(verify_return_identity(g, plain, bf::trajectories(g).front()), Error);

  const auto tree = chain_tree();
  const RewardScheme tplain(tree.graph, tree.energy, RewardKind::kUncorrected, uniform_backward_policy(tree.graph), 1.0);
  for (const auto& t : bf::trajectories(tree.graph)) CHECK(std::abs(verify_return_identity(tree.graph, tplain, t)) < 1e-14);
}

TEST_CASE("property: corrected schemes satisfy the return identity on random environments") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> alpha_dist(0.2, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const bool all_term = trial % 3 == 0;
    const auto env = all_term ? bf::random_subset(rng, 2 + trial % 3) : bf::random_dag(rng, 3 + trial % 8);
    const auto& g = env.graph;
    const double alpha = alpha_dist(rng);
    std::vector<RewardKind> kinds{RewardKind::kTerminalCorrected, RewardKind::kForwardLooking};
    if (env.energy.state && g.terminating_states().size() == g.num_states()) kinds.push_back(RewardKind::kDenseCorrected);
    for (BackwardKind bk : {BackwardKind::kUniform, BackwardKind::kCounting})
      for (RewardKind rk : kinds) {
        const RewardScheme scheme(g, env.energy, rk, make_backward_policy(g, bk), alpha);
        for (const auto& t : bf::trajectories(g)) CHECK(std::abs(verify_return_identity(g, scheme, t)) < 1e-11);
      }
  }
}

TEST_CASE("names round-trip") {
  for (RewardKind k : {RewardKind::kUncorrected, RewardKind::kTerminalCorrected, RewardKind::kDenseCorrected,
                       RewardKind::kForwardLooking})
    CHECK(parse_reward_kind(to_string(k)) == k);
  for (BackwardKind k : {BackwardKind::kUniform, BackwardKind::kCounting}) CHECK(parse_backward_kind(to_string(k)) == k);
  CHECK_FALSE(parse_reward_kind("sparse").has_value());
  CHECK_FALSE(parse_backward_kind("").has_value());
}
