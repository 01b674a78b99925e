#include "softdag/training.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "softdag/logmath.hpp"

namespace softdag {

const char* to_string(InitMode mode) { return mode == InitMode::kZeros ? "zeros" : "small_normal"; }
const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const char* field, const char* what) {
    require(ok, ErrorCode::kInvalidArgument, std::string("train.") + field + " " + what);
  };
  need(c.iterations > 0, "iterations", "must be positive");
  need(c.batch_size > 0, "batch_size", "must be positive");
  need(c.learning_rate > 0.0 && std::isfinite(c.learning_rate), "learning_rate", "must be positive");
  need(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0, "epsilon_start", "must lie in [0, 1]");
  need(c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0, "epsilon_end", "must lie in [0, 1]");
  need(c.epsilon_start >= c.epsilon_end, "epsilon_start", "must be >= epsilon_end");
  need(c.epsilon_decay_fraction > 0.0 && c.epsilon_decay_fraction <= 1.0, "epsilon_decay_fraction",
       "must lie in (0, 1]");
  need(c.target_update_period > 0, "target_update_period", "must be positive");
  need(c.buffer_capacity > 0, "buffer_capacity", "must be positive");
  need(c.eval_interval > 0, "eval_interval", "must be positive");
  need(c.onpolicy_fraction >= 0.0 && c.onpolicy_fraction <= 1.0, "onpolicy_fraction", "must lie in [0, 1]");
  need(c.init_scale >= 0.0, "init_scale", "must be nonnegative");
  need(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  need(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  need(c.adam_eps > 0.0, "adam_eps", "must be positive");
}

TabularParams init_params(const SoftMdpGraph& graph, ParamMode mode, InitMode init, double scale,
                          std::uint64_t seed) {
  TabularParams p = make_params(graph, mode);
  if (init == InitMode::kSmallNormal) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto* v : {&p.policy_logits, &p.log_flow, &p.q_values})
      for (double& x : *v) x = n(rng);
  }
  return p;
}

double epsilon_at(const TrainConfig& c, std::size_t iteration) {
  const double horizon = c.epsilon_decay_fraction * static_cast<double>(c.iterations);
  const double t = static_cast<double>(iteration);
  if (t >= horizon) return c.epsilon_end;
  return c.epsilon_start + (c.epsilon_end - c.epsilon_start) * (t / horizon);
}

PolicyTable learned_policy(const SoftMdpGraph& graph, const TabularParams& params, double alpha) {
  const ParamView view(graph, params, alpha);
  PolicyTable pi;
  pi.log_probs.resize(graph.total_actions());
  for (StateId s = 0; s < graph.num_states(); ++s)
    for (std::size_t a = 0; a < graph.num_actions(s); ++a) pi.log_probs[graph.action_offset(s) + a] = view.log_pf(s, a);
  return pi;
}

Trajectory sample_trajectory(const SoftMdpGraph& graph, const TabularParams& params, double alpha, double epsilon,
                             std::mt19937_64& rng) {
  const ParamView view(graph, params, alpha);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Trajectory t;
  StateId s = graph.initial_state();
  t.states.push_back(s);
  for (;;) {
    const std::size_t k = graph.num_actions(s);
    require(k > 0, ErrorCode::kPrecondition, "state " + std::to_string(s) + " has no actions");
    std::size_t a = k - 1;
    if (unit(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      a = pick(rng);
    } else {
      const double u = unit(rng);
      double cum = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        cum += std::exp(view.log_pf(s, b));
        if (u < cum) {
          a = b;
          break;
        }
      }
    }
    const StateId next = graph.action_target(s, a);
    if (next == kSink) break;
    s = next;
    t.states.push_back(s);
  }
  t.ends_at_sink = true;
  return t;
}

LossEval analytic_gradient(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                           const TabularParams* target) {
  return evaluate_objective(ctx, batch, params, target, true);
}

TabularParams finite_diff_gradient(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                                   const TabularParams* target, double step) {
  require(step > 0.0, ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  TabularParams grad = params.zeros_like();
  TabularParams probe = params;
  const TabularParams held = params;
  auto loss = [&] { return evaluate_objective(ctx, batch, probe, target, false, &held).loss; };
  auto sweep = [&](std::vector<double> TabularParams::*field) {
    auto& xs = probe.*field;
    auto& gs = grad.*field;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x0 = xs[i];
      xs[i] = x0 + step;
      const double up = loss();
      xs[i] = x0 - step;
      const double down = loss();
      xs[i] = x0;
      gs[i] = (up - down) / (2.0 * step);
    }
  };
  sweep(&TabularParams::policy_logits);
  sweep(&TabularParams::log_flow);
  sweep(&TabularParams::q_values);
  return grad;
}

MetricsRow evaluate_params(const SoftMdpGraph& graph, const EnergyModel& energy, const TabularParams& params,
                           double alpha) {
  MetricsRow row;
  const DistributionTable learned = terminating_distribution(graph, learned_policy(graph, params, alpha));
  const DistributionTable target = gibbs_target(graph, energy, alpha);
  row.jsd = jsd(learned, target);
  std::vector<double> logp, neg_e;
  for (std::size_t i = 0; i < learned.states.size(); ++i) {
    logp.push_back(std::log(learned.probs[i]));
    neg_e.push_back(-energy.terminal[learned.states[i]]);
  }
  try {
    row.pearson = pearson_logprob_return(logp, neg_e);
  } catch (const Error&) {
    row.pearson = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

namespace {

bool all_finite(const TabularParams& p) {
  for (const auto* v : {&p.policy_logits, &p.log_flow, &p.q_values})
    for (double x : *v)
      if (!std::isfinite(x)) return false;
  return true;
}

void for_each_entry(TabularParams& a, const TabularParams& b, const std::function<void(double&, double)>& fn) {
  for (auto field : {&TabularParams::policy_logits, &TabularParams::log_flow, &TabularParams::q_values}) {
    auto& xs = a.*field;
    const auto& ys = b.*field;
    for (std::size_t i = 0; i < xs.size(); ++i) fn(xs[i], ys[i]);
  }
}

}  // namespace

TrainResult train(const SoftMdpGraph& graph, const EnergyModel& energy, const RewardScheme& scheme,
                  const TrainConfig& config) {
  validate(config);
  ObjectiveContext ctx{&graph, &energy, &scheme, config.objective, config.pcl_all_subtrajectories};
  const ParamMode mode = config.resolved_mode();
  check_objective_compatible(ctx, mode);
  const double alpha = scheme.alpha();
  const bool traj_level = is_trajectory_level(config.objective);
  const bool with_target = uses_target(config.objective);

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.params = init_params(graph, mode, config.init, config.init_scale, config.seed ^ 0x9e3779b97f4a7c15ULL);
  TabularParams target = result.params;
  TabularParams adam_m = result.params.zeros_like(), adam_v = result.params.zeros_like();

  ReplayBuffer<Trajectory> traj_buffer(config.buffer_capacity);
  ReplayBuffer<Transition> step_buffer(config.buffer_capacity);

  const std::size_t batch = config.batch_size;
  const auto planned_fresh =
      static_cast<std::size_t>(std::llround(static_cast<double>(batch) * config.onpolicy_fraction));

  double window_loss = 0.0;
  std::size_t window_count = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double eps = epsilon_at(config, it);
    const bool buffer_empty = traj_level ? traj_buffer.empty() : step_buffer.empty();
    const std::size_t n_fresh = buffer_empty ? std::max<std::size_t>(planned_fresh, 1) : planned_fresh;

    Batch fresh;
    auto fresh_size = [&] { return traj_level ? fresh.trajectories.size() : fresh.transitions.size(); };
    std::size_t guard = 0;
    while (fresh_size() < n_fresh) {
      append_units(ctx, sample_trajectory(graph, result.params, alpha, eps, rng), fresh);
      // MDB / pi-SQL units can be empty when s0 terminates at once.
      require(++guard < 100 * batch + 1000, ErrorCode::kPrecondition, "could not collect residual units");
    }

    Batch b;
    if (traj_level) {
      for (const auto& t : fresh.trajectories) traj_buffer.push(t);
      b.trajectories.assign(fresh.trajectories.begin(), fresh.trajectories.begin() + n_fresh);
      while (b.trajectories.size() < batch) b.trajectories.push_back(traj_buffer.sample(rng));
    } else {
      for (const auto& t : fresh.transitions) step_buffer.push(t);
      b.transitions.assign(fresh.transitions.begin(), fresh.transitions.begin() + n_fresh);
      while (b.transitions.size() < batch) b.transitions.push_back(step_buffer.sample(rng));
    }

    LossEval ev = evaluate_objective(ctx, b, result.params, with_target ? &target : nullptr, true);
    if (!std::isfinite(ev.loss) || !all_finite(ev.grad)) {
      result.diverged = true;
      result.diagnostic = "non-finite " + std::string(std::isfinite(ev.loss) ? "gradient" : "loss") +
                          " at iteration " + std::to_string(it + 1);
      MetricsRow row;
      row.iteration = it + 1;
      row.loss = ev.loss;
      row.jsd = row.pearson = std::numeric_limits<double>::quiet_NaN();
      row.epsilon = eps;
      result.rows.push_back(row);
      break;
    }

    if (config.optimizer == OptimizerKind::kSgd) {
      for_each_entry(result.params, ev.grad, [&](double& x, double g) { x -= config.learning_rate * g; });
    } else {
      const double t = static_cast<double>(it + 1);
      const double c1 = 1.0 - std::pow(config.adam_beta1, t), c2 = 1.0 - std::pow(config.adam_beta2, t);
      for_each_entry(adam_m, ev.grad, [&](double& m, double g) { m = config.adam_beta1 * m + (1 - config.adam_beta1) * g; });
      for_each_entry(adam_v, ev.grad,
                     [&](double& v, double g) { v = config.adam_beta2 * v + (1 - config.adam_beta2) * g * g; });
      TabularParams step = adam_m;
      for_each_entry(step, adam_v, [&](double& m, double v) {
        m = config.learning_rate * (m / c1) / (std::sqrt(v / c2) + config.adam_eps);
      });
      for_each_entry(result.params, step, [](double& x, double s) { x -= s; });
    }

    if (with_target && (it + 1) % config.target_update_period == 0) target = result.params;

    window_loss += ev.loss;
    ++window_count;
    if ((it + 1) % config.eval_interval == 0 || it + 1 == config.iterations) {
      MetricsRow row = evaluate_params(graph, energy, result.params, alpha);
      row.iteration = it + 1;
      row.loss = window_loss / static_cast<double>(window_count);
      row.epsilon = eps;
      result.rows.push_back(row);
      window_loss = 0.0;
      window_count = 0;
    }
  }
  return result;
}

}  // namespace softdag
