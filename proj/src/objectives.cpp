#include "softdag/objectives.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "softdag/error.hpp"
#include "softdag/logmath.hpp"

namespace softdag {

namespace {

std::size_t action_or_throw(const SoftMdpGraph& g, const Transition& t) {
  require(t.from < g.num_states() && (t.to == kSink || t.to < g.num_states()), ErrorCode::kInvalidArgument,
          "transition references an unknown state");
  const auto a = g.action_of(t.from, t.to);
  if (!a) {
    fail(ErrorCode::kInvalidArgument, "illegal transition " + std::to_string(t.from) + "->" +
                                          (t.to_sink() ? std::string("sink") : std::to_string(t.to)));
  }
  return *a;
}

bool all_terminating(const SoftMdpGraph& g) { return g.terminating_states().size() == g.num_states(); }

std::string describe(const Trajectory& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.states.size(); ++i) os << (i ? ">" : "") << t.states[i];
  if (t.ends_at_sink) os << ">sink";
  return os.str();
}

std::string describe(const Transition& t) {
  return std::to_string(t.from) + "->" + (t.to_sink() ? std::string("sink") : std::to_string(t.to));
}

}  // namespace

const char* to_string(ParamMode mode) {
  switch (mode) {
    case ParamMode::kPolicyFlow: return "policy_flow";
    case ParamMode::kPolicyValue: return "policy_value";
    case ParamMode::kQ: return "q";
    case ParamMode::kPolicy: return "policy";
    case ParamMode::kPolicyQ: return "policy_q";
  }
  return "?";
}

std::optional<ParamMode> parse_param_mode(const std::string& name) {
  for (auto m : {ParamMode::kPolicyFlow, ParamMode::kPolicyValue, ParamMode::kQ, ParamMode::kPolicy,
                 ParamMode::kPolicyQ})
    if (name == to_string(m)) return m;
  return std::nullopt;
}

bool TabularParams::has_logits() const {
  return mode == ParamMode::kPolicyFlow || mode == ParamMode::kPolicyValue || mode == ParamMode::kPolicy ||
         mode == ParamMode::kPolicyQ;
}
bool TabularParams::has_flow() const { return mode == ParamMode::kPolicyFlow || mode == ParamMode::kPolicyValue; }
bool TabularParams::has_q() const { return mode == ParamMode::kQ || mode == ParamMode::kPolicyQ; }

TabularParams TabularParams::zeros_like() const {
  TabularParams z;
  z.mode = mode;
  z.policy_logits.assign(policy_logits.size(), 0.0);
  z.log_flow.assign(log_flow.size(), 0.0);
  z.q_values.assign(q_values.size(), 0.0);
  return z;
}

TabularParams make_params(const SoftMdpGraph& graph, ParamMode mode) {
  TabularParams p;
  p.mode = mode;
  if (p.has_logits()) p.policy_logits.assign(graph.total_actions(), 0.0);
  if (p.has_flow()) p.log_flow.assign(graph.num_states(), 0.0);
  if (p.has_q()) p.q_values.assign(graph.total_actions(), 0.0);
  return p;
}

const char* to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kPCL: return "pcl";
    case ObjectiveKind::kSubTB: return "subtb";
    case ObjectiveKind::kTB: return "tb";
    case ObjectiveKind::kDB: return "db";
    case ObjectiveKind::kSQL: return "sql";
    case ObjectiveKind::kFLDB: return "fldb";
    case ObjectiveKind::kMDB: return "mdb";
    case ObjectiveKind::kPiSQL: return "pisql";
    case ObjectiveKind::kSAC: return "sac";
  }
  return "?";
}

std::optional<ObjectiveKind> parse_objective_kind(const std::string& name) {
  for (auto k : {ObjectiveKind::kPCL, ObjectiveKind::kSubTB, ObjectiveKind::kTB, ObjectiveKind::kDB,
                 ObjectiveKind::kSQL, ObjectiveKind::kFLDB, ObjectiveKind::kMDB, ObjectiveKind::kPiSQL,
                 ObjectiveKind::kSAC})
    if (name == to_string(k)) return k;
  return std::nullopt;
}

bool is_trajectory_level(ObjectiveKind kind) {
  return kind == ObjectiveKind::kPCL || kind == ObjectiveKind::kSubTB || kind == ObjectiveKind::kTB;
}

ParamMode default_param_mode(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kSQL: return ParamMode::kQ;
    case ObjectiveKind::kMDB:
    case ObjectiveKind::kPiSQL: return ParamMode::kPolicy;
    case ObjectiveKind::kSAC: return ParamMode::kPolicyQ;
    default: return ParamMode::kPolicyFlow;
  }
}

bool uses_target(ObjectiveKind kind) { return !is_trajectory_level(kind); }

// ---------------------------------------------------------------------------
// ParamView

ParamView::ParamView(const SoftMdpGraph& graph, const TabularParams& params, double alpha)
    : graph_(&graph), params_(&params), alpha_(alpha) {
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "alpha must be positive");
  if (params.has_logits())
    require(params.policy_logits.size() == graph.total_actions(), ErrorCode::kInvalidArgument,
            "policy_logits size does not match the graph");
  if (params.has_flow())
    require(params.log_flow.size() == graph.num_states(), ErrorCode::kInvalidArgument,
            "log_flow size does not match the graph");
  if (params.has_q())
    require(params.q_values.size() == graph.total_actions(), ErrorCode::kInvalidArgument,
            "q_values size does not match the graph");
}

bool ParamView::policy_from_q() const { return params_->mode == ParamMode::kQ; }

double ParamView::row_lse(StateId s) const {
  const std::size_t off = graph_->action_offset(s), k = graph_->num_actions(s);
  if (policy_from_q()) {
    double m = kNegInf;
    for (std::size_t a = 0; a < k; ++a) m = std::max(m, params_->q_values[off + a] / alpha_);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (std::size_t a = 0; a < k; ++a) acc += std::exp(params_->q_values[off + a] / alpha_ - m);
    return m + std::log(acc);
  }
  return log_sum_exp(std::span<const double>(params_->policy_logits).subspan(off, k));
}

double ParamView::log_pf(StateId s, std::size_t a) const {
  const std::size_t i = graph_->action_offset(s) + a;
  if (policy_from_q()) return params_->q_values[i] / alpha_ - row_lse(s);
  require(params_->has_logits(), ErrorCode::kPrecondition, "parameters carry no policy");
  return params_->policy_logits[i] - row_lse(s);
}

double ParamView::log_flow(StateId s) const {
  switch (params_->mode) {
    case ParamMode::kPolicyFlow: return params_->log_flow[s];
    case ParamMode::kPolicyValue: return params_->log_flow[s] / alpha_;
    case ParamMode::kQ: return row_lse(s);
    default: fail(ErrorCode::kPrecondition, std::string("parameter mode '") + to_string(params_->mode) + "' has no flow");
  }
}

double ParamView::value(StateId s) const {
  switch (params_->mode) {
    case ParamMode::kPolicyFlow: return alpha_ * params_->log_flow[s];
    case ParamMode::kPolicyValue: return params_->log_flow[s];
    case ParamMode::kQ: return alpha_ * row_lse(s);
    default:
      fail(ErrorCode::kPrecondition, std::string("parameter mode '") + to_string(params_->mode) + "' has no value");
  }
}

double ParamView::q(StateId s, std::size_t a) const {
  require(params_->has_q(), ErrorCode::kPrecondition,
          std::string("parameter mode '") + to_string(params_->mode) + "' has no Q table");
  return params_->q_values[graph_->action_offset(s) + a];
}

void ParamView::d_log_pf(StateId s, std::size_t a, double coef, Terms* terms) const {
  if (!terms) return;
  const std::size_t off = graph_->action_offset(s), k = graph_->num_actions(s);
  const double lse = row_lse(s);
  if (policy_from_q()) {
    for (std::size_t b = 0; b < k; ++b) {
      const double p = std::exp(params_->q_values[off + b] / alpha_ - lse);
      terms->push_back({Field::kQ, off + b, coef * ((b == a ? 1.0 : 0.0) - p) / alpha_});
    }
  } else {
    for (std::size_t b = 0; b < k; ++b) {
      const double p = std::exp(params_->policy_logits[off + b] - lse);
      terms->push_back({Field::kLogits, off + b, coef * ((b == a ? 1.0 : 0.0) - p)});
    }
  }
}

void ParamView::d_log_flow(StateId s, double coef, Terms* terms) const {
  if (!terms) return;
  switch (params_->mode) {
    case ParamMode::kPolicyFlow: terms->push_back({Field::kLogFlow, s, coef}); break;
    case ParamMode::kPolicyValue: terms->push_back({Field::kLogFlow, s, coef / alpha_}); break;
    case ParamMode::kQ: {
      const std::size_t off = graph_->action_offset(s), k = graph_->num_actions(s);
      const double lse = row_lse(s);
      for (std::size_t b = 0; b < k; ++b)
        terms->push_back({Field::kQ, off + b, coef * std::exp(params_->q_values[off + b] / alpha_ - lse) / alpha_});
      break;
    }
    default: fail(ErrorCode::kPrecondition, "parameter mode has no flow");
  }
}

void ParamView::d_value(StateId s, double coef, Terms* terms) const {
  if (!terms) return;
  switch (params_->mode) {
    case ParamMode::kPolicyFlow: terms->push_back({Field::kLogFlow, s, coef * alpha_}); break;
    case ParamMode::kPolicyValue: terms->push_back({Field::kLogFlow, s, coef}); break;
    case ParamMode::kQ: {
      const std::size_t off = graph_->action_offset(s), k = graph_->num_actions(s);
      const double lse = row_lse(s);
      for (std::size_t b = 0; b < k; ++b)
        terms->push_back({Field::kQ, off + b, coef * std::exp(params_->q_values[off + b] / alpha_ - lse)});
      break;
    }
    default: fail(ErrorCode::kPrecondition, "parameter mode has no value");
  }
}

void ParamView::d_q(StateId s, std::size_t a, double coef, Terms* terms) const {
  if (!terms) return;
  terms->push_back({Field::kQ, graph_->action_offset(s) + a, coef});
}

// ---------------------------------------------------------------------------
// Residuals

double residual_pcl(const Trajectory& sub, const ParamView& view, const RewardScheme& scheme, Terms* terms) {
  require(sub.num_edges() >= 1, ErrorCode::kInvalidArgument, "PCL needs a subtrajectory with at least one edge");
  const auto& g = view.graph();
  const double alpha = view.alpha();
  double delta = -view.value(sub.states.front());
  view.d_value(sub.states.front(), -1.0, terms);
  for (std::size_t i = 0; i < sub.num_edges(); ++i) {
    const Transition t = sub.edge(i);
    const std::size_t a = action_or_throw(g, t);
    delta += scheme.reward(g, t.from, a) - alpha * view.log_pf(t.from, a);
    view.d_log_pf(t.from, a, -alpha, terms);
  }
  if (!sub.ends_at_sink) {
    delta += view.value(sub.states.back());
    view.d_value(sub.states.back(), 1.0, terms);
  }
  return delta;
}

double residual_subtb(const Trajectory& sub, const ParamView& view, const BackwardPolicy& backward,
                      const EnergyModel& energy, Terms* terms) {
  require(sub.num_edges() >= 1, ErrorCode::kInvalidArgument, "SubTB needs a subtrajectory with at least one edge");
  const auto& g = view.graph();
  double delta = -view.log_flow(sub.states.front());
  view.d_log_flow(sub.states.front(), -1.0, terms);
  for (std::size_t i = 0; i < sub.num_edges(); ++i) {
    const Transition t = sub.edge(i);
    const std::size_t a = action_or_throw(g, t);
    delta -= view.log_pf(t.from, a);
    view.d_log_pf(t.from, a, -1.0, terms);
    if (!t.to_sink()) delta += backward.log_prob(g, t.from, a);
  }
  if (sub.ends_at_sink) {
    delta -= energy.terminal[sub.states.back()] / view.alpha();
  } else {
    delta += view.log_flow(sub.states.back());
    view.d_log_flow(sub.states.back(), 1.0, terms);
  }
  return delta;
}

double residual_db(const Transition& t, const ParamView& view, const ParamView* target, const BackwardPolicy& backward,
                   const EnergyModel& energy, Terms* terms) {
  const auto& g = view.graph();
  const std::size_t a = action_or_throw(g, t);
  double delta = view.log_flow(t.from) + view.log_pf(t.from, a);
  view.d_log_flow(t.from, 1.0, terms);
  view.d_log_pf(t.from, a, 1.0, terms);
  if (t.to_sink()) return delta + energy.terminal[t.from] / view.alpha();
  if (target) {
    delta -= target->log_flow(t.to);
  } else {
    delta -= view.log_flow(t.to);
    view.d_log_flow(t.to, -1.0, terms);
  }
  return delta - backward.log_prob(g, t.from, a);
}

double residual_sql(const Transition& t, const ParamView& view, const ParamView* target, const RewardScheme& scheme,
                    Terms* terms) {
  const auto& g = view.graph();
  const std::size_t a = action_or_throw(g, t);
  double delta = view.q(t.from, a) - scheme.reward(g, t.from, a);
  view.d_q(t.from, a, 1.0, terms);
  if (t.to_sink()) return delta;
  if (target) return delta - target->value(t.to);
  view.d_value(t.to, -1.0, terms);
  return delta - view.value(t.to);
}

double residual_fldb(const Transition& t, const ParamView& view, const ParamView* target,
                     const BackwardPolicy& backward, const EnergyModel& energy, Terms* terms) {
  require(!t.to_sink(), ErrorCode::kInvalidArgument, "FL-DB has no residual for transitions into the sink");
  require(energy.edge.has_value(), ErrorCode::kPrecondition, "FL-DB needs edge energies");
  const auto& g = view.graph();
  const std::size_t a = action_or_throw(g, t);
  double next;
  if (target) {
    next = target->log_flow(t.to);
  } else {
    next = view.log_flow(t.to);
    view.d_log_flow(t.to, 1.0, terms);
  }
  view.d_log_flow(t.from, -1.0, terms);
  view.d_log_pf(t.from, a, -1.0, terms);
  return next + backward.log_prob(g, t.from, a) - view.log_flow(t.from) - view.log_pf(t.from, a) -
         (*energy.edge)[g.action_offset(t.from) + a] / view.alpha();
}

double residual_fldb_boundary(StateId x, const ParamView& view, Terms* terms) {
  const auto& g = view.graph();
  require(x < g.num_states() && g.terminating(x), ErrorCode::kInvalidArgument,
          "FL-DB boundary needs a terminating state");
  const std::size_t a = g.sink_action(x);
  view.d_log_flow(x, -1.0, terms);
  view.d_log_pf(x, a, -1.0, terms);
  return -(view.log_flow(x) + view.log_pf(x, a));
}

double residual_mdb(const Transition& t, const ParamView& view, const ParamView* target,
                    const BackwardPolicy& backward, const EnergyModel& energy, Terms* terms) {
  const auto& g = view.graph();
  require(all_terminating(g), ErrorCode::kPrecondition, "modified DB needs every state to be terminating");
  require(!t.to_sink(), ErrorCode::kInvalidArgument, "modified DB is defined on interior transitions only");
  const std::size_t a = action_or_throw(g, t);
  const double alpha = view.alpha();
  double delta = -energy.terminal[t.to] / alpha + backward.log_prob(g, t.from, a) +
                 view.log_pf(t.from, g.sink_action(t.from)) + energy.terminal[t.from] / alpha -
                 view.log_pf(t.from, a);
  view.d_log_pf(t.from, g.sink_action(t.from), 1.0, terms);
  view.d_log_pf(t.from, a, -1.0, terms);
  if (target) {
    delta -= target->log_pf(t.to, g.sink_action(t.to));
  } else {
    delta -= view.log_pf(t.to, g.sink_action(t.to));
    view.d_log_pf(t.to, g.sink_action(t.to), -1.0, terms);
  }
  return delta;
}

double residual_pisql(const Transition& t, const ParamView& view, const ParamView* target, const RewardScheme& scheme,
                      Terms* terms) {
  const auto& g = view.graph();
  require(scheme.kind() == RewardKind::kDenseCorrected, ErrorCode::kPrecondition,
          "pi-SQL needs the dense corrected reward");
  require(!t.to_sink(), ErrorCode::kInvalidArgument, "pi-SQL is defined on interior transitions only");
  const std::size_t a = action_or_throw(g, t);
  const double alpha = view.alpha();
  double inner = view.log_pf(t.from, a) - view.log_pf(t.from, g.sink_action(t.from));
  view.d_log_pf(t.from, a, alpha, terms);
  view.d_log_pf(t.from, g.sink_action(t.from), -alpha, terms);
  if (target) {
    inner += target->log_pf(t.to, g.sink_action(t.to));
  } else {
    inner += view.log_pf(t.to, g.sink_action(t.to));
    view.d_log_pf(t.to, g.sink_action(t.to), alpha, terms);
  }
  return alpha * inner - scheme.reward(g, t.from, a);
}

// ---------------------------------------------------------------------------
// Discrete SAC

namespace {

// `held` supplies every quantity treated as a constant: the policy inside the
// soft target and the actor's Q. `q_next` supplies Q(s', .) for the target.
SacLosses sac_eval(const SoftMdpGraph& g, std::span<const Transition> batch, const TabularParams& params,
                   const TabularParams& held, const TabularParams& q_next, const RewardScheme& scheme,
                   TabularParams* grad) {
  require(params.mode == ParamMode::kPolicyQ && held.mode == ParamMode::kPolicyQ && q_next.has_q(),
          ErrorCode::kPrecondition, "SAC needs policy logits and a Q table");
  ParamView cur(g, params, scheme.alpha());
  ParamView fixed(g, held, scheme.alpha());
  const double alpha = scheme.alpha();
  SacLosses out;
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const Transition& t : batch) {
    const std::size_t a = action_or_throw(g, t);
    double y = scheme.reward(g, t.from, a);
    if (!t.to_sink()) {
      const std::size_t off = g.action_offset(t.to);
      for (std::size_t b = 0; b < g.num_actions(t.to); ++b) {
        const double lp = fixed.log_pf(t.to, b);
        y += std::exp(lp) * (q_next.q_values[off + b] - alpha * lp);
      }
    }
    const double delta = cur.q(t.from, a) - y;
    out.critic += 0.5 * delta * delta;
    if (grad) grad->q_values[g.action_offset(t.from) + a] += delta * inv_n;

    const std::size_t off = g.action_offset(t.from), k = g.num_actions(t.from);
    std::vector<double> target_logp(k), logp(k);
    for (std::size_t b = 0; b < k; ++b) {
      target_logp[b] = held.q_values[off + b];
      logp[b] = cur.log_pf(t.from, b);
    }
    log_softmax_inplace(target_logp, 1.0 / alpha);
    double kl = 0.0;
    for (std::size_t b = 0; b < k; ++b) kl += std::exp(logp[b]) * (logp[b] - target_logp[b]);
    out.actor += kl;
    if (grad)
      for (std::size_t b = 0; b < k; ++b)
        grad->policy_logits[off + b] += std::exp(logp[b]) * (logp[b] - target_logp[b] - kl) * inv_n;
  }
  out.critic *= inv_n;
  out.actor *= inv_n;
  return out;
}

}  // namespace

SacLosses sac_step_losses(const SoftMdpGraph& graph, std::span<const Transition> batch, const TabularParams& params,
                          const TabularParams* target, const RewardScheme& scheme) {
  return sac_eval(graph, batch, params, params, target ? *target : params, scheme, nullptr);
}

// ---------------------------------------------------------------------------
// Correspondences

TabularParams apply_correspondence(const SoftMdpGraph& g, Correspondence kind, const TabularParams& p, double alpha) {
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "alpha must be positive");
  TabularParams out;
  switch (kind) {
    case Correspondence::kPclToSubtb:
      require(p.mode == ParamMode::kPolicyValue && p.log_flow.size() == g.num_states(), ErrorCode::kInvalidArgument,
              "pcl_to_subtb needs policy logits and state values");
      out = p;
      out.mode = ParamMode::kPolicyFlow;
      for (double& v : out.log_flow) v /= alpha;
      return out;
    case Correspondence::kQToPfFlow: {
      require(p.has_q() && p.q_values.size() == g.total_actions(), ErrorCode::kInvalidArgument,
              "q_to_pf_flow needs a Q table");
      out = make_params(g, ParamMode::kPolicyFlow);
      for (StateId s = 0; s < g.num_states(); ++s) {
        const std::size_t off = g.action_offset(s), k = g.num_actions(s);
        std::vector<double> row(p.q_values.begin() + off, p.q_values.begin() + off + k);
        for (double& x : row) x /= alpha;
        const double lse = log_sum_exp(row);
        out.log_flow[s] = lse;
        for (std::size_t b = 0; b < k; ++b) out.policy_logits[off + b] = row[b] - lse;
      }
      return out;
    }
    case Correspondence::kPfFlowToQ: {
      require(p.mode == ParamMode::kPolicyFlow && p.log_flow.size() == g.num_states() &&
                  p.policy_logits.size() == g.total_actions(),
              ErrorCode::kInvalidArgument, "pf_flow_to_q needs policy logits and log flows");
      out = make_params(g, ParamMode::kQ);
      ParamView view(g, p, alpha);
      for (StateId s = 0; s < g.num_states(); ++s)
        for (std::size_t b = 0; b < g.num_actions(s); ++b)
          out.q_values[g.action_offset(s) + b] = alpha * (view.log_pf(s, b) + p.log_flow[s]);
      return out;
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown correspondence");
}

// ---------------------------------------------------------------------------
// Objective dispatch

void check_objective_compatible(const ObjectiveContext& ctx, ParamMode mode) {
  require(ctx.graph && ctx.energy && ctx.scheme, ErrorCode::kInvalidArgument, "objective context is incomplete");
  const auto name = std::string(to_string(ctx.kind));
  auto allow = [&](std::initializer_list<ParamMode> modes) {
    for (auto m : modes)
      if (m == mode) return;
    fail(ErrorCode::kPrecondition,
         "objective '" + name + "' cannot use parameter mode '" + to_string(mode) + "'");
  };
  const bool gfn = ctx.kind == ObjectiveKind::kSubTB || ctx.kind == ObjectiveKind::kTB ||
                   ctx.kind == ObjectiveKind::kDB || ctx.kind == ObjectiveKind::kFLDB ||
                   ctx.kind == ObjectiveKind::kMDB;
  if (gfn)
    require(ctx.scheme->backward().has_value(), ErrorCode::kPrecondition,
            "objective '" + name + "' needs a backward policy");
  switch (ctx.kind) {
    case ObjectiveKind::kPCL:
    case ObjectiveKind::kSubTB:
    case ObjectiveKind::kTB:
    case ObjectiveKind::kDB: allow({ParamMode::kPolicyFlow, ParamMode::kPolicyValue, ParamMode::kQ}); break;
    case ObjectiveKind::kFLDB:
      allow({ParamMode::kPolicyFlow, ParamMode::kQ});
      require(ctx.energy->edge.has_value(), ErrorCode::kPrecondition, "FL-DB needs edge energies");
      break;
    case ObjectiveKind::kSQL: allow({ParamMode::kQ}); break;
    case ObjectiveKind::kMDB:
    case ObjectiveKind::kPiSQL:
      allow({ParamMode::kPolicy, ParamMode::kPolicyFlow, ParamMode::kQ});
      require(all_terminating(*ctx.graph), ErrorCode::kPrecondition,
              "objective '" + name + "' needs every state to be terminating");
      if (ctx.kind == ObjectiveKind::kPiSQL)
        require(ctx.scheme->kind() == RewardKind::kDenseCorrected, ErrorCode::kPrecondition,
                "pi-SQL needs the dense corrected reward");
      break;
    case ObjectiveKind::kSAC:
      allow({ParamMode::kPolicyQ});
      require(ctx.scheme->kind() != RewardKind::kUncorrected, ErrorCode::kPrecondition,
              "SAC needs a corrected reward");
      break;
  }
}

std::vector<Trajectory> all_subtrajectories(const Trajectory& complete) {
  std::vector<Trajectory> out;
  const std::size_t len = complete.num_edges();
  const std::size_t last = complete.states.empty() ? 0 : complete.states.size() - 1;
  for (std::size_t m = 0; m < len; ++m) {
    for (std::size_t n = m + 1; n <= len; ++n) {
      Trajectory sub;
      const std::size_t stop = std::min(n, last);
      sub.states.assign(complete.states.begin() + m, complete.states.begin() + stop + 1);
      sub.ends_at_sink = complete.ends_at_sink && n == len;
      out.push_back(std::move(sub));
    }
  }
  return out;
}

void append_units(const ObjectiveContext& ctx, const Trajectory& complete, Batch& batch) {
  if (is_trajectory_level(ctx.kind)) {
    batch.trajectories.push_back(complete);
    return;
  }
  const bool interior_only = ctx.kind == ObjectiveKind::kMDB || ctx.kind == ObjectiveKind::kPiSQL;
  for (std::size_t i = 0; i < complete.num_edges(); ++i) {
    const Transition t = complete.edge(i);
    if (interior_only && t.to_sink()) continue;
    batch.transitions.push_back(t);
  }
}

LossEval evaluate_objective(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                            const TabularParams* target, bool with_grad, const TabularParams* held) {
  check_objective_compatible(ctx, params.mode);
  const auto& g = *ctx.graph;
  const double alpha = ctx.scheme->alpha();
  LossEval out;
  if (with_grad) out.grad = params.zeros_like();

  if (ctx.kind == ObjectiveKind::kSAC) {
    out.units = batch.transitions.size();
    const TabularParams& h = held ? *held : params;
    out.sac = sac_eval(g, batch.transitions, params, h, target ? *target : h, *ctx.scheme,
                       with_grad ? &out.grad : nullptr);
    out.loss = out.sac.critic + out.sac.actor;
    return out;
  }

  const ParamView view(g, params, alpha);
  std::optional<ParamView> tview;
  if (target && uses_target(ctx.kind)) tview.emplace(g, *target, alpha);
  const ParamView* tv = tview ? &*tview : nullptr;
  const BackwardPolicy* pb = ctx.scheme->backward() ? &*ctx.scheme->backward() : nullptr;

  Terms terms;
  double sum_sq = 0.0;
  std::vector<std::pair<double, Terms>> pending;
  auto record = [&](double delta) {
    sum_sq += delta * delta;
    ++out.units;
    if (with_grad) pending.emplace_back(delta, terms);
  };
  Terms* tp = with_grad ? &terms : nullptr;

  if (is_trajectory_level(ctx.kind)) {
    for (const Trajectory& traj : batch.trajectories) {
      const bool complete = traj.ends_at_sink && !traj.states.empty() && traj.states.front() == g.initial_state();
      if (ctx.kind == ObjectiveKind::kTB)
        require(complete, ErrorCode::kInvalidArgument, "TB needs complete trajectories from the initial state");
      const bool expand = ctx.kind == ObjectiveKind::kSubTB ||
                          (ctx.kind == ObjectiveKind::kPCL && ctx.pcl_all_subtrajectories);
      const std::vector<Trajectory> units = expand ? all_subtrajectories(traj) : std::vector<Trajectory>{traj};
      for (const Trajectory& u : units) {
        terms.clear();
        const double d = ctx.kind == ObjectiveKind::kPCL ? residual_pcl(u, view, *ctx.scheme, tp)
                                                         : residual_subtb(u, view, *pb, *ctx.energy, tp);
        record(d);
      }
    }
  } else {
    for (const Transition& t : batch.transitions) {
      terms.clear();
      double d = 0.0;
      switch (ctx.kind) {
        case ObjectiveKind::kDB: d = residual_db(t, view, tv, *pb, *ctx.energy, tp); break;
        case ObjectiveKind::kSQL: d = residual_sql(t, view, tv, *ctx.scheme, tp); break;
        case ObjectiveKind::kFLDB:
          d = t.to_sink() ? residual_fldb_boundary(t.from, view, tp) : residual_fldb(t, view, tv, *pb, *ctx.energy, tp);
          break;
        case ObjectiveKind::kMDB: d = residual_mdb(t, view, tv, *pb, *ctx.energy, tp); break;
        case ObjectiveKind::kPiSQL: d = residual_pisql(t, view, tv, *ctx.scheme, tp); break;
        default: fail(ErrorCode::kInvalidArgument, "unexpected objective");
      }
      record(d);
    }
  }
  if (out.units == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(out.units);
  out.loss = 0.5 * sum_sq * inv_n;
  if (with_grad) {
    for (const auto& [delta, ts] : pending) {
      for (const Term& term : ts) {
        const double v = delta * term.coef * inv_n;
        switch (term.field) {
          case Field::kLogits: out.grad.policy_logits[term.index] += v; break;
          case Field::kLogFlow: out.grad.log_flow[term.index] += v; break;
          case Field::kQ: out.grad.q_values[term.index] += v; break;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equivalence certification

const char* to_string(EquivalencePair pair) {
  switch (pair) {
    case EquivalencePair::kPclSubtb: return "pcl-subtb";
    case EquivalencePair::kSqlDb: return "sql-db";
    case EquivalencePair::kPiSqlMdb: return "pisql-mdb";
    case EquivalencePair::kSqlFldb: return "sql-fldb";
  }
  return "?";
}

std::optional<EquivalencePair> parse_equivalence_pair(const std::string& name) {
  for (auto p : {EquivalencePair::kPclSubtb, EquivalencePair::kSqlDb, EquivalencePair::kPiSqlMdb,
                 EquivalencePair::kSqlFldb})
    if (name == to_string(p)) return p;
  return std::nullopt;
}

namespace {

Trajectory uniform_rollout(const SoftMdpGraph& g, std::mt19937_64& rng) {
  Trajectory t;
  StateId s = g.initial_state();
  t.states.push_back(s);
  for (;;) {
    std::uniform_int_distribution<std::size_t> pick(0, g.num_actions(s) - 1);
    const StateId next = g.action_target(s, pick(rng));
    if (next == kSink) break;
    s = next;
    t.states.push_back(s);
  }
  t.ends_at_sink = true;
  return t;
}

void fill_normal(std::vector<double>& v, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : v) x = n(rng);
}

}  // namespace

EquivalenceReport check_equivalence(EquivalencePair pair, const SoftMdpGraph& g, const EnergyModel& energy,
                                    const RewardScheme& scheme, int trials, double tol, double ratio_tol,
                                    std::uint64_t seed) {
  require(trials > 0, ErrorCode::kInvalidArgument, "trials must be positive");
  require(tol >= 0.0 && ratio_tol >= 0.0, ErrorCode::kInvalidArgument, "tolerances must be nonnegative");
  if (pair == EquivalencePair::kPiSqlMdb) {
    require(all_terminating(g), ErrorCode::kPrecondition, "pisql-mdb needs every state to be terminating");
    require(scheme.kind() == RewardKind::kDenseCorrected, ErrorCode::kPrecondition,
            "pisql-mdb needs the dense corrected reward");
  }
  if (pair == EquivalencePair::kSqlFldb)
    require(energy.edge.has_value(), ErrorCode::kPrecondition, "sql-fldb needs edge energies");

  const BackwardPolicy pb = scheme.backward() ? *scheme.backward() : uniform_backward_policy(g);
  const double alpha = scheme.alpha();
  const double sign = (pair == EquivalencePair::kPiSqlMdb || pair == EquivalencePair::kSqlFldb) ? -1.0 : 1.0;
  std::mt19937_64 rng(seed);

  EquivalenceReport rep;
  rep.pair = pair;
  rep.alpha = alpha;
  rep.trials = trials;
  auto violate = [&](EquivalenceViolation v) {
    rep.passed = false;
    ++rep.num_violations;
    if (rep.violations.size() < 10) rep.violations.push_back(std::move(v));
  };

  for (int trial = 0; trial < trials; ++trial) {
    Trajectory traj = uniform_rollout(g, rng);
    if (pair == EquivalencePair::kPiSqlMdb)
      for (int retry = 0; retry < 100 && traj.states.size() < 2; ++retry) traj = uniform_rollout(g, rng);

    TabularParams rl, gfn;
    switch (pair) {
      case EquivalencePair::kPclSubtb:
        rl = make_params(g, ParamMode::kPolicyValue);
        fill_normal(rl.policy_logits, rng);
        fill_normal(rl.log_flow, rng);
        gfn = apply_correspondence(g, Correspondence::kPclToSubtb, rl, alpha);
        break;
      case EquivalencePair::kSqlDb:
        rl = make_params(g, ParamMode::kQ);
        fill_normal(rl.q_values, rng);
        gfn = apply_correspondence(g, Correspondence::kQToPfFlow, rl, alpha);
        break;
      case EquivalencePair::kPiSqlMdb:
        rl = make_params(g, ParamMode::kPolicy);
        fill_normal(rl.policy_logits, rng);
        gfn = rl;
        break;
      case EquivalencePair::kSqlFldb:
        gfn = make_params(g, ParamMode::kPolicyFlow);
        fill_normal(gfn.policy_logits, rng);
        fill_normal(gfn.log_flow, rng);
        rl = apply_correspondence(g, Correspondence::kPfFlowToQ, gfn, alpha);
        break;
    }
    const ParamView rv(g, rl, alpha), gv(g, gfn, alpha);

    double sq_rl = 0.0, sq_gfn = 0.0;
    std::size_t n = 0;
    auto compare = [&](double d_rl, double d_gfn, const std::string& unit) {
      ++n;
      sq_rl += d_rl * d_rl;
      sq_gfn += d_gfn * d_gfn;
      const double gap = std::abs(d_rl - sign * alpha * d_gfn) / std::max(1.0, std::abs(d_rl));
      rep.max_residual_gap = std::max(rep.max_residual_gap, gap);
      if (!(gap <= tol)) violate({trial, unit, d_rl, d_gfn, gap, "residual identity"});
    };

    if (pair == EquivalencePair::kPclSubtb) {
      for (const Trajectory& sub : all_subtrajectories(traj))
        compare(residual_pcl(sub, rv, scheme), residual_subtb(sub, gv, pb, energy), describe(sub));
    } else {
      for (std::size_t i = 0; i < traj.num_edges(); ++i) {
        const Transition t = traj.edge(i);
        switch (pair) {
          case EquivalencePair::kSqlDb:
            compare(residual_sql(t, rv, nullptr, scheme), residual_db(t, gv, nullptr, pb, energy), describe(t));
            break;
          case EquivalencePair::kPiSqlMdb:
            if (t.to_sink()) break;
            compare(residual_pisql(t, rv, nullptr, scheme), residual_mdb(t, gv, nullptr, pb, energy), describe(t));
            break;
          case EquivalencePair::kSqlFldb:
            compare(residual_sql(t, rv, nullptr, scheme),
                    t.to_sink() ? residual_fldb_boundary(t.from, gv) : residual_fldb(t, gv, nullptr, pb, energy),
                    describe(t));
            break;
          default: break;
        }
      }
    }
    rep.units_checked += n;
    if (n > 0 && sq_gfn > 0.0) {
      const double ratio = sq_rl / sq_gfn;  // the 1/(2n) factors cancel
      const double err = std::abs(ratio - alpha * alpha) / (alpha * alpha);
      rep.max_loss_ratio_error = std::max(rep.max_loss_ratio_error, err);
      if (!(err <= ratio_tol)) violate({trial, "batch of " + std::to_string(n), sq_rl / (2.0 * n),
                                        sq_gfn / (2.0 * n), err, "loss ratio"});
    }
  }
  return rep;
}

}  // namespace softdag
