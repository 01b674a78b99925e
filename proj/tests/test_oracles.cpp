#include <doctest.h>

#include <cmath>
#include <random>

#include "softdag/environments.hpp"
#include "softdag/error.hpp"
#include "softdag/oracles.hpp"
#include "softdag/reward.hpp"
#include "support/brute_force.hpp"

using namespace softdag;

namespace {

Environment two_arm(double e0, double e1) {
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}, {0, 2}};
  Environment env;
  env.graph = SoftMdpGraph::from_edges(3, 0, edges, {false, true, true});
  env.energy.terminal = {NAN, e0, e1};
  return env;
}

RewardScheme scheme_for(const Environment& env, RewardKind k, BackwardKind b, double alpha) {
  return RewardScheme(env.graph, env.energy, k, make_backward_policy(env.graph, b), alpha);
}

// Number of complete trajectories starting at s.
double paths_from(const SoftMdpGraph& g, StateId s) {
  double n = g.terminating(s) ? 1.0 : 0.0;
  for (StateId c : g.children(s)) n += paths_from(g, c);
  return n;
}

}  // namespace

TEST_CASE("soft values on a one-edge chain") {
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}};
  Environment env;
  env.graph = SoftMdpGraph::from_edges(2, 0, edges, {false, true});
  env.energy.terminal = {NAN, 0.8};
  const auto v = soft_value_iteration(env.graph, scheme_for(env, RewardKind::kTerminalCorrected, BackwardKind::kUniform, 1.0));
  CHECK(v.v[1] == doctest::Approx(-0.8));
  CHECK(v.v[0] == doctest::Approx(-0.8));
}

TEST_CASE("fig1: optimal value at s0 is log Z under the corrected reward") {
  const auto env = build_fig1_toy({0, 0, 0});
  const auto v = soft_value_iteration(env.graph, scheme_for(env, RewardKind::kTerminalCorrected, BackwardKind::kUniform, 1.0));
  CHECK(v.v[0] == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("property: zero rewards at alpha 1 give V*(s) = log(number of paths from s)") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    auto env = bf::random_dag(rng, 3 + trial % 9);
    for (StateId x : env.graph.terminating_states()) env.energy.terminal[x] = 0.0;
    const RewardScheme zero(env.graph, env.energy, RewardKind::kUncorrected, std::nullopt, 1.0);
    const auto v = soft_value_iteration(env.graph, zero);
    for (StateId s = 0; s < env.graph.num_states(); ++s)
      CHECK(v.v[s] == doctest::Approx(std::log(paths_from(env.graph, s))).epsilon(1e-12));
  }
}

TEST_CASE("fig1 uncorrected optimal policy is symmetric") {
  const auto env = build_fig1_toy({0, 0, 0});
  const RewardScheme plain(env.graph, env.energy, RewardKind::kUncorrected, std::nullopt, 1.0);
  const auto pi = optimal_policy(env.graph, soft_value_iteration(env.graph, plain));
  CHECK(std::exp(pi.log_prob(env.graph, 0, 0)) == doctest::Approx(0.5));
  CHECK(std::exp(pi.log_prob(env.graph, 1, 1)) == doctest::Approx(0.5));
}

TEST_CASE("lower temperature concentrates on the low-energy arm") {
  const auto env = two_arm(0.0, 1.0);
  auto p_low = [&](double alpha) {
    const RewardScheme s(env.graph, env.energy, RewardKind::kUncorrected, std::nullopt, alpha);
    return std::exp(optimal_policy(env.graph, soft_value_iteration(env.graph, s)).log_prob(env.graph, 0, 0));
  };
  CHECK(p_low(1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(p_low(0.1) > p_low(1.0));
  CHECK(p_low(0.01) > 1.0 - 1e-12);
}

TEST_CASE("fig1 terminating distributions: biased without correction, uniform with it") {
  const auto env = build_fig1_toy({0, 0, 0});
  const auto& g = env.graph;
  const RewardScheme plain(g, env.energy, RewardKind::kUncorrected, std::nullopt, 1.0);
  const auto biased = terminating_distribution(g, optimal_policy(g, soft_value_iteration(g, plain)));
  REQUIRE(biased.states == std::vector<StateId>{3, 4, 5});
  CHECK(std::abs(biased.probs[0] - 0.25) < 1e-12);
  CHECK(std::abs(biased.probs[1] - 0.5) < 1e-12);
  CHECK(std::abs(biased.probs[2] - 0.25) < 1e-12);
  const auto fixed = terminating_distribution(
      g, optimal_policy(g, soft_value_iteration(g, scheme_for(env, RewardKind::kTerminalCorrected, BackwardKind::kUniform, 1.0))));
  for (double p : fixed.probs) CHECK(std::abs(p - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("uniform policy marginal on the subset env matches enumeration") {
  const auto env = build_subset_env(2, {0, 0, 0, 0});
  const auto d = terminating_distribution(env.graph, uniform_policy(env.graph));
  // {} stops w.p. 1/3; {0} and {1} each reached w.p. 1/3 and stop w.p. 1/2; {0,1} gets the rest.
  CHECK(d.probs[0] == doctest::Approx(1.0 / 3.0));
  CHECK(d.probs[1] == doctest::Approx(1.0 / 6.0));
  CHECK(d.probs[2] == doctest::Approx(1.0 / 6.0));
  CHECK(d.probs[3] == doctest::Approx(1.0 / 3.0));
  const auto ref = bf::policy_marginal(env.graph, uniform_policy(env.graph));
  CHECK(bf::max_abs_gap(bf::as_map(d), ref) < 1e-14);
}

TEST_CASE("Gibbs target") {
  const auto env = two_arm(0.0, std::log(3.0));
  const auto gt = gibbs_target(env.graph, env.energy, 1.0);
  CHECK(gt.probs[0] == doctest::Approx(0.75));
  CHECK(gt.probs[1] == doctest::Approx(0.25));
  CHECK(gt.log_z == doctest::Approx(std::log(4.0 / 3.0)));
  auto bad = env;
  bad.energy.terminal[2] = NAN;
  CHECK_THROWS_AS(gibbs_target(bad.graph, bad.energy, 1.0), Error);
}

TEST_CASE("Jensen-Shannon divergence") {
  DistributionTable p{{1, 2}, {0.5, 0.5}, NAN}, q{{1, 2}, {1.0, 0.0}, NAN};
  const double expected = 0.5 * (0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25)) + 0.5 * std::log(1.0 / 0.75);
  CHECK(jsd(p, q) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::abs(jsd(p, q) - 0.2158) < 1e-3);
  CHECK(jsd(p, q) == doctest::Approx(jsd(q, p)));
  CHECK(jsd(p, p) == 0.0);
  DistributionTable a{{1, 2}, {1.0, 0.0}, NAN}, b{{1, 2}, {0.0, 1.0}, NAN};
  CHECK(jsd(a, b) == doctest::Approx(std::log(2.0)));
  DistributionTable other{{1, 3}, {0.5, 0.5}, NAN};
  CHECK_THROWS_AS(jsd(p, other), Error);
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4}, y{-2, -1, 0, 1}, z{4, 3, 2, 1};
  CHECK(pearson_logprob_return(x, y) == doctest::Approx(1.0));
  CHECK(pearson_logprob_return(x, z) == doctest::Approx(-1.0));
  // log pi = -E - log Z exactly
  const std::vector<double> e{0.3, 1.7, -0.2, 0.9};
  std::vector<double> lp, ret;
  for (double v : e) {
    lp.push_back(-v - 1.234);
    ret.push_back(-v);
  }
  CHECK(pearson_logprob_return(lp, ret) == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<double> one{1.0}, flat{2, 2, 2, 2};
  CHECK_THROWS_AS(pearson_logprob_return(one, one), Error);
  CHECK_THROWS_AS(pearson_logprob_return(x, flat), Error);
}

TEST_CASE("property: oracle distributions match trajectory enumeration and the Gibbs target") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const bool all_term = trial % 4 == 0;
    const auto env = all_term ? bf::random_subset(rng, 2 + trial % 3) : bf::random_dag(rng, 3 + trial % 9);
    const auto& g = env.graph;
    for (double alpha : {0.5, 1.0, 2.0}) {
      const auto gt = gibbs_target(g, env.energy, alpha);
      CHECK(bf::max_abs_gap(bf::as_map(gt), bf::gibbs(g, env.energy, alpha)) < 1e-14);
      std::vector<RewardKind> kinds{RewardKind::kUncorrected, RewardKind::kTerminalCorrected,
                                    RewardKind::kForwardLooking};
      if (all_term) kinds.push_back(RewardKind::kDenseCorrected);
      for (BackwardKind bk : {BackwardKind::kUniform, BackwardKind::kCounting})
        for (RewardKind rk : kinds) {
          const auto scheme = scheme_for(env, rk, bk, alpha);
          const auto values = soft_value_iteration(g, scheme);
          const auto pi = optimal_policy(g, values);
          const auto dist = terminating_distribution(g, pi);
          double log_z = 0.0;
          const auto ref = bf::maxent_marginal(g, scheme, &log_z);
          CHECK(bf::max_abs_gap(bf::as_map(dist), ref) < 1e-12);
          CHECK(bf::max_abs_gap(bf::as_map(dist), bf::policy_marginal(g, pi)) < 1e-12);
          CHECK(values.v[g.initial_state()] / alpha == doctest::Approx(log_z).epsilon(1e-12));
          double mass = 0.0;
          for (double p : dist.probs) mass += p;
          CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
          if (rk != RewardKind::kUncorrected) {
            CHECK(jsd(dist, gt) < 1e-10);
            CHECK(log_z == doctest::Approx(gt.log_z).epsilon(1e-12));
          }
        }
    }
  }
}

TEST_CASE("property: policy rows are normalized and marginals of random policies match enumeration") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto env = bf::random_dag(rng, 3 + trial % 9);
    const auto& g = env.graph;
    PolicyTable pi;
    pi.log_probs.resize(g.total_actions());
    for (StateId s = 0; s < g.num_states(); ++s) {
      double lse = -INFINITY;
      const std::size_t off = g.action_offset(s);
      for (std::size_t a = 0; a < g.num_actions(s); ++a) {
        pi.log_probs[off + a] = z(rng);
        lse = std::max(lse, pi.log_probs[off + a]) +
              std::log1p(std::exp(-std::abs(lse - pi.log_probs[off + a])));
      }
      for (std::size_t a = 0; a < g.num_actions(s); ++a) pi.log_probs[off + a] -= lse;
    }
    const auto d = terminating_distribution(g, pi);
    CHECK(bf::max_abs_gap(bf::as_map(d), bf::policy_marginal(g, pi)) < 1e-12);
    const auto u = uniform_policy(g);
    for (StateId s = 0; s < g.num_states(); ++s) {
      double t = 0.0;
      for (double lp : u.row(g, s)) t += std::exp(lp);
      CHECK(t == doctest::Approx(1.0));
    }
  }
}
