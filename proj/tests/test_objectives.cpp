#include <doctest.h>

#include <cmath>
#include <random>

#include "softdag/environments.hpp"
#include "softdag/error.hpp"
#include "softdag/objectives.hpp"
#include "softdag/oracles.hpp"
#include "softdag/reward.hpp"
#include "softdag/training.hpp"
#include "support/brute_force.hpp"
#include "support/gradient_audit.hpp"

using namespace softdag;

namespace {

// s0 -> {x1, x2}, both terminating leaves.
Environment fork(double e1 = 0.0, double e2 = 0.0) {
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}, {0, 2}};
  Environment env;
  env.graph = SoftMdpGraph::from_edges(3, 0, edges, {false, true, true});
  env.energy.terminal = {NAN, e1, e2};
  return env;
}

Environment chain(double e) {
  const std::vector<std::pair<StateId, StateId>> edges{{0, 1}};
  Environment env;
  env.graph = SoftMdpGraph::from_edges(2, 0, edges, {false, true});
  env.energy.terminal = {NAN, e};
  return env;
}

RewardScheme terminal_scheme(const Environment& env, double alpha) {
  return RewardScheme(env.graph, env.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(env.graph), alpha);
}

void set_row(const SoftMdpGraph& g, std::vector<double>& table, StateId s, std::vector<double> row) {
  REQUIRE(row.size() == g.num_actions(s));
  for (std::size_t a = 0; a < row.size(); ++a) table[g.action_offset(s) + a] = row[a];
}

}  // namespace

TEST_CASE("PCL residual on a one-edge subtrajectory") {
  const auto env = fork();
  const auto& g = env.graph;
  const auto scheme = terminal_scheme(env, 1.0);
  auto p = make_params(g, ParamMode::kPolicyValue);
  p.log_flow[0] = 0.5;
  p.log_flow[1] = -0.2;
  const double pi = std::exp(-0.1);
  set_row(g, p.policy_logits, 0, {std::log(pi), std::log(1 - pi)});
  const ParamView view(g, p, 1.0);
  CHECK(residual_pcl({{0, 1}, false}, view, scheme) == doctest::Approx(-0.6));
}

TEST_CASE("PCL residual on a complete chain trajectory") {
  const auto env = chain(0.7);
  auto p = make_params(env.graph, ParamMode::kPolicyValue);
  p.log_flow[0] = 1.3;
  const ParamView view(env.graph, p, 1.0);
  CHECK(residual_pcl({{0, 1}, true}, view, terminal_scheme(env, 1.0)) == doctest::Approx(-1.3 - 0.7));
}

TEST_CASE("DB residuals at uniform flows") {
  const auto env = build_fig1_toy({0, 0, 0});
  const auto& g = env.graph;
  const auto p = make_params(g, ParamMode::kPolicyFlow);
  const ParamView view(g, p, 1.0);
  const auto pb = uniform_backward_policy(g);
  // s1 has a single parent, so P_B(s0|s1) = 1 and only log P_F = log 1/2 remains.
  CHECK(residual_db({0, 1}, view, nullptr, pb, env.energy) == doctest::Approx(std::log(0.5)));
  // s1 -> x4: log F(s1) + log 1/2 - log F(x4) - log P_B(s1|x4) = log 1/2 - log 1/2.
  CHECK(residual_db({1, 4}, view, nullptr, pb, env.energy) == doctest::Approx(0.0));
  // Sink edge with F = 1, P_F(sink) = 1, E = 0.
  CHECK(residual_db({4, kSink}, view, nullptr, pb, env.energy) == doctest::Approx(0.0));
  const auto hot = build_fig1_toy({0, 2.0, 0});
  CHECK(residual_db({4, kSink}, view, nullptr, pb, hot.energy) == doctest::Approx(2.0));
}

TEST_CASE("SQL residual on a chain sink edge") {
  const auto env = chain(0.9);
  const auto p = make_params(env.graph, ParamMode::kQ);
  const ParamView view(env.graph, p, 1.0);
  CHECK(residual_sql({1, kSink}, view, nullptr, terminal_scheme(env, 1.0)) == doctest::Approx(0.9));
}

TEST_CASE("FL-DB residual with uniform policies") {
  // {0} -> {0,1} in the 2-subset env: P_F = 1/2 (child or stop), P_B = 1/2.
  const auto env = build_subset_env(2, {0.0, 0.1, -0.3, 0.5});
  const auto& g = env.graph;
  const auto p = make_params(g, ParamMode::kPolicyFlow);
  const ParamView view(g, p, 2.0);
  CHECK(residual_fldb({1, 3}, view, nullptr, uniform_backward_policy(g), env.energy) == doctest::Approx(-0.2));
  CHECK_THROWS_AS(residual_fldb({1, kSink}, view, nullptr, uniform_backward_policy(g), env.energy), Error);
  // Zero edge energy: the interior DB residual with the sign flipped.
  auto flat = env;
  std::fill(flat.energy.edge->begin(), flat.energy.edge->end(), 0.0);
  auto q = init_params(g, ParamMode::kPolicyFlow, InitMode::kSmallNormal, 1.0, 3);
  const ParamView qv(g, q, 1.0);
  const auto pb = uniform_backward_policy(g);
  for (auto t : {Transition{0, 1}, Transition{1, 3}, Transition{2, 3}})
    CHECK(residual_fldb(t, qv, nullptr, pb, flat.energy) ==
          doctest::Approx(-residual_db(t, qv, nullptr, pb, flat.energy)).epsilon(1e-12));
}

TEST_CASE("pi-SQL residual with hand-set policy") {
  // s = {} , s' = {0}, E({0}) = 1 so r = 0 - 1 + log P_B({}|{0}) = -1.
  const auto env = build_subset_env(2, {0.0, 1.0, 0.0, 0.0});
  const auto& g = env.graph;
  const RewardScheme dense(g, env.energy, RewardKind::kDenseCorrected, uniform_backward_policy(g), 1.0);
  auto p = make_params(g, ParamMode::kPolicy);
  const double a = std::exp(-1.0), stop = std::exp(-0.5);
  set_row(g, p.policy_logits, 0, {std::log(a), std::log(1 - a - stop), std::log(stop)});
  const double stop1 = std::exp(-0.7);
  set_row(g, p.policy_logits, 1, {std::log(1 - stop1), std::log(stop1)});
  const ParamView view(g, p, 1.0);
  CHECK(dense.reward(g, {0, 1}) == doctest::Approx(-1.0));
  CHECK(residual_pisql({0, 1}, view, nullptr, dense) == doctest::Approx(-0.2));
}

TEST_CASE("Q parametrization: zero Q on out-degree two") {
  const auto env = fork();
  const auto p = make_params(env.graph, ParamMode::kQ);
  for (double alpha : {0.5, 1.0, 3.0}) {
    const ParamView view(env.graph, p, alpha);
    CHECK(std::exp(view.log_pf(0, 0)) == doctest::Approx(0.5));
    CHECK(std::exp(view.log_flow(0)) == doctest::Approx(2.0));
  }
}

TEST_CASE("SAC losses on a single transition") {
  const auto env = fork(0.3, -0.4);
  const auto& g = env.graph;
  const auto scheme = terminal_scheme(env, 1.0);
  auto p = make_params(g, ParamMode::kPolicyQ);
  set_row(g, p.policy_logits, 0, {0.2, -0.5});
  set_row(g, p.q_values, 0, {0.7, 0.1});
  set_row(g, p.q_values, 1, {-0.25});
  const std::vector<Transition> batch{{0, 1}};
  const auto l = sac_step_losses(g, batch, p, nullptr, scheme);
  // y = r(s0, x1) + Q(x1, sink) - log 1 = 0 - 0.25
  CHECK(l.critic == doctest::Approx(0.5 * (0.7 + 0.25) * (0.7 + 0.25)));
  const double z = std::exp(0.2) + std::exp(-0.5);
  const double p0 = std::exp(0.2) / z, p1 = std::exp(-0.5) / z;
  const double zq = std::exp(0.7) + std::exp(0.1);
  const double q0 = std::exp(0.7) / zq, q1 = std::exp(0.1) / zq;
  CHECK(l.actor == doctest::Approx(p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1)));
}

TEST_CASE("subtrajectory enumeration") {
  const Trajectory t{{0, 1, 4}, true};
  const auto subs = all_subtrajectories(t);
  CHECK(subs.size() == 6);  // 3 edges -> 3*4/2
  int to_sink = 0;
  for (const auto& s : subs) to_sink += s.ends_at_sink;
  CHECK(to_sink == 3);
}

TEST_CASE("TB gradient with respect to log F(s0) is linear in the residual") {
  const auto env = build_fig1_toy({0.3, -0.2, 0.8});
  const auto& g = env.graph;
  const auto scheme = terminal_scheme(env, 1.0);
  const auto p = init_params(g, ParamMode::kPolicyFlow, InitMode::kSmallNormal, 1.0, 8);
  ObjectiveContext ctx{&g, &env.energy, &scheme, ObjectiveKind::kTB, false};
  Batch b;
  b.trajectories.push_back({{0, 2, 4}, true});
  const auto e = analytic_gradient(ctx, b, p, nullptr);
  const double delta = residual_subtb(b.trajectories[0], ParamView(g, p, 1.0), *scheme.backward(), env.energy);
  // The residual carries -log F(s0).
  CHECK(e.grad.log_flow[0] == doctest::Approx(-delta));
  CHECK(e.loss == doctest::Approx(0.5 * delta * delta));
  for (StateId s = 1; s < g.num_states(); ++s) CHECK(e.grad.log_flow[s] == 0.0);
}

TEST_CASE("optimal parameters zero every consistency residual") {
  const auto env = build_factor_graph_env(random_factor_graph(2, 3, "chain", 2));
  const auto& g = env.graph;
  const double alpha = 0.7;
  const RewardScheme scheme(g, env.energy, RewardKind::kTerminalCorrected, counting_backward_policy(g), alpha);
  const auto values = soft_value_iteration(g, scheme);
  const auto pi = optimal_policy(g, values);
  auto pf = make_params(g, ParamMode::kPolicyFlow);
  pf.policy_logits = pi.log_probs;
  for (StateId s = 0; s < g.num_states(); ++s) pf.log_flow[s] = values.v[s] / alpha;
  auto q = make_params(g, ParamMode::kQ);
  q.q_values = values.q;
  std::mt19937_64 rng(1);
  for (ObjectiveKind k : {ObjectiveKind::kPCL, ObjectiveKind::kSubTB, ObjectiveKind::kTB, ObjectiveKind::kDB,
                          ObjectiveKind::kSQL}) {
    ObjectiveContext ctx{&g, &env.energy, &scheme, k, true};
    const auto& params = k == ObjectiveKind::kSQL ? q : pf;
    Batch b;
    for (int i = 0; i < 5; ++i) append_units(ctx, sample_trajectory(g, params, alpha, 1.0, rng), b);
    const auto e = analytic_gradient(ctx, b, params, &params);
    CHECK(e.loss < 1e-24);
    for (double x : audit::flatten(e.grad)) CHECK(std::abs(x) < 1e-11);
  }
}

TEST_CASE("correspondences round-trip") {
  const auto env = build_fig1_toy({0.1, 0.2, 0.3});
  const auto& g = env.graph;
  const double alpha = 1.7;
  const auto q = init_params(g, ParamMode::kQ, InitMode::kSmallNormal, 1.0, 5);
  const auto pf = apply_correspondence(g, Correspondence::kQToPfFlow, q, alpha);
  const auto back = apply_correspondence(g, Correspondence::kPfFlowToQ, pf, alpha);
  for (std::size_t i = 0; i < q.q_values.size(); ++i) CHECK(back.q_values[i] == doctest::Approx(q.q_values[i]));
  const ParamView qv(g, q, alpha), pv(g, pf, alpha);
  for (StateId s = 0; s < g.num_states(); ++s) {
    CHECK(qv.log_flow(s) == doctest::Approx(pv.log_flow(s)));
    for (std::size_t a = 0; a < g.num_actions(s); ++a) CHECK(qv.log_pf(s, a) == doctest::Approx(pv.log_pf(s, a)));
  }
  auto pv_params = init_params(g, ParamMode::kPolicyValue, InitMode::kSmallNormal, 1.0, 6);
  const auto mapped = apply_correspondence(g, Correspondence::kPclToSubtb, pv_params, alpha);
  CHECK(mapped.mode == ParamMode::kPolicyFlow);
  CHECK(mapped.log_flow[2] == doctest::Approx(pv_params.log_flow[2] / alpha));
  CHECK_THROWS_AS(apply_correspondence(g, Correspondence::kPclToSubtb, q, alpha), Error);
}

TEST_CASE("property: residual proportionality under mapped parameters") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto env = bf::random_subset(rng, 2 + trial % 2);
    const auto& g = env.graph;
    const double alpha = 0.5 + 0.25 * (trial % 7);
    const auto pb = trial % 2 ? counting_backward_policy(g) : uniform_backward_policy(g);
    const RewardScheme terminal(g, env.energy, RewardKind::kTerminalCorrected, pb, alpha);
    const RewardScheme dense(g, env.energy, RewardKind::kDenseCorrected, pb, alpha);
    const RewardScheme fl(g, env.energy, RewardKind::kForwardLooking, pb, alpha);

    const auto pvp = init_params(g, ParamMode::kPolicyValue, InitMode::kSmallNormal, 1.0, trial);
    const auto pfp = apply_correspondence(g, Correspondence::kPclToSubtb, pvp, alpha);
    const auto qp = init_params(g, ParamMode::kQ, InitMode::kSmallNormal, 1.0, 100 + trial);
    const auto qpf = apply_correspondence(g, Correspondence::kQToPfFlow, qp, alpha);
    const auto pol = init_params(g, ParamMode::kPolicy, InitMode::kSmallNormal, 1.0, 200 + trial);
    const ParamView vpv(g, pvp, alpha), vpf(g, pfp, alpha), vq(g, qp, alpha), vqpf(g, qpf, alpha), vpol(g, pol, alpha);

    for (const auto& t : bf::trajectories(g)) {
      for (const auto& sub : all_subtrajectories(t))
        CHECK(residual_pcl(sub, vpv, terminal) ==
              doctest::Approx(alpha * residual_subtb(sub, vpf, pb, env.energy)).epsilon(1e-10));
      for (std::size_t i = 0; i < t.num_edges(); ++i) {
        const Transition e = t.edge(i);
        CHECK(residual_sql(e, vq, nullptr, terminal) ==
              doctest::Approx(alpha * residual_db(e, vqpf, nullptr, pb, env.energy)).epsilon(1e-10));
        if (!e.to_sink()) {
          CHECK(residual_pisql(e, vpol, nullptr, dense) ==
                doctest::Approx(-alpha * residual_mdb(e, vpol, nullptr, pb, env.energy)).epsilon(1e-10));
          CHECK(residual_sql(e, vq, nullptr, fl) ==
                doctest::Approx(-alpha * residual_fldb(e, vqpf, nullptr, pb, env.energy)).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("equivalence checker") {
  const auto fig1 = build_fig1_toy({0.4, -0.1, 0.9});
  const auto& g = fig1.graph;
  for (double alpha : {0.5, 1.0, 2.0}) {
    const RewardScheme t(g, fig1.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), alpha);
    const RewardScheme f(g, fig1.energy, RewardKind::kForwardLooking, uniform_backward_policy(g), alpha);
    for (auto [pair, scheme] : {std::pair{EquivalencePair::kPclSubtb, &t}, std::pair{EquivalencePair::kSqlDb, &t},
                                std::pair{EquivalencePair::kSqlFldb, &f}}) {
      const auto rep = check_equivalence(pair, g, fig1.energy, *scheme, 100, 1e-9, 1e-8, 7);
      CHECK(rep.passed);
      CHECK(rep.trials == 100);
      CHECK(rep.units_checked >= 100);
      CHECK(rep.num_violations == 0);
    }
  }
  SUBCASE("pi-SQL/MDB needs every state terminating") {
    const RewardScheme t(g, fig1.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 1.0);
    try {
      check_equivalence(EquivalencePair::kPiSqlMdb, g, fig1.energy, t, 10, 1e-9, 1e-8, 0);
      FAIL("expected precondition error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kPrecondition);
    }
  }
  SUBCASE("pi-SQL/MDB on the subset env") {
    const auto sub = build_subset_env(3, {0.0, 0.4, -0.3, 1.1, 0.2, -0.8, 0.6, 0.1});
    const RewardScheme d(sub.graph, sub.energy, RewardKind::kDenseCorrected, counting_backward_policy(sub.graph), 2.0);
    CHECK(check_equivalence(EquivalencePair::kPiSqlMdb, sub.graph, sub.energy, d, 100, 1e-9, 1e-8, 3).passed);
  }
  SUBCASE("the uncorrected reward breaks the identity") {
    const RewardScheme plain(g, fig1.energy, RewardKind::kUncorrected, uniform_backward_policy(g), 1.0);
    const auto rep = check_equivalence(EquivalencePair::kPclSubtb, g, fig1.energy, plain, 100, 1e-9, 1e-8, 7);
    CHECK_FALSE(rep.passed);
    CHECK(rep.num_violations > 0);
    CHECK_FALSE(rep.violations.empty());
  }
  SUBCASE("zero tolerance trips on rounding") {
    const RewardScheme t(g, fig1.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 0.5);
    const auto rep = check_equivalence(EquivalencePair::kSqlDb, g, fig1.energy, t, 100, 0.0, 0.0, 7);
    CHECK_FALSE(rep.passed);
    CHECK(rep.max_residual_gap < 1e-12);
  }
}

TEST_CASE("objective compatibility") {
  const auto fig1 = build_fig1_toy({0, 0, 0});
  const auto& g = fig1.graph;
  const RewardScheme t(g, fig1.energy, RewardKind::kTerminalCorrected, uniform_backward_policy(g), 1.0);
  auto code = [&](ObjectiveKind k, ParamMode m) {
    ObjectiveContext ctx{&g, &fig1.energy, &t, k, false};
    try {
      check_objective_compatible(ctx, m);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kViolation;  // sentinel: accepted
  };
  CHECK(code(ObjectiveKind::kTB, ParamMode::kPolicyFlow) == ErrorCode::kViolation);
  CHECK(code(ObjectiveKind::kSQL, ParamMode::kPolicyFlow) == ErrorCode::kPrecondition);
  CHECK(code(ObjectiveKind::kMDB, ParamMode::kPolicy) == ErrorCode::kPrecondition);
  CHECK(code(ObjectiveKind::kSAC, ParamMode::kPolicyQ) == ErrorCode::kViolation);
  CHECK(code(ObjectiveKind::kSAC, ParamMode::kQ) == ErrorCode::kPrecondition);
  for (ObjectiveKind k : audit::all_objectives()) {
    CHECK(parse_objective_kind(to_string(k)) == k);
    const auto modes = audit::compatible_modes(k);
    CHECK(std::find(modes.begin(), modes.end(), default_param_mode(k)) != modes.end());
  }
}

TEST_CASE("gradient audit: analytic matches central differences for every objective and mode") {
  for (ObjectiveKind k : audit::all_objectives())
    for (ParamMode m : audit::compatible_modes(k)) {
      CAPTURE(to_string(k));
      CAPTURE(to_string(m));
      const auto r = audit::run(k, m, 25, 1 + static_cast<std::uint64_t>(k));
      CHECK(r.max_rel_error < 1e-6);
    }
}
