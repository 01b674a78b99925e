#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softdag/environments.hpp"
#include "softdag/graph.hpp"
#include "softdag/reward.hpp"

namespace softdag {

// Which fields of TabularParams are live.
//   kPolicyFlow   policy_logits + log_flow (log F; V = alpha log F)
//   kPolicyValue  policy_logits + log_flow holding V directly
//   kQ            q_values only (P_F = softmax(Q/alpha), F = sum exp(Q/alpha))
//   kPolicy       policy_logits only
//   kPolicyQ      policy_logits + q_values (actor-critic)
enum class ParamMode { kPolicyFlow, kPolicyValue, kQ, kPolicy, kPolicyQ };

const char* to_string(ParamMode mode);
std::optional<ParamMode> parse_param_mode(const std::string& name);

// Per-action tables follow the graph's action-slot layout; log_flow is per state.
struct TabularParams {
  ParamMode mode = ParamMode::kPolicyFlow;
  std::vector<double> policy_logits;
  std::vector<double> log_flow;
  std::vector<double> q_values;

  // Same shape and mode, every entry zero.
  TabularParams zeros_like() const;
  bool has_logits() const;
  bool has_flow() const;
  bool has_q() const;
};

// Allocates the fields a mode uses, zero-filled.
TabularParams make_params(const SoftMdpGraph& graph, ParamMode mode);

enum class ObjectiveKind { kPCL, kSubTB, kTB, kDB, kSQL, kFLDB, kMDB, kPiSQL, kSAC };

const char* to_string(ObjectiveKind kind);
std::optional<ObjectiveKind> parse_objective_kind(const std::string& name);
bool is_trajectory_level(ObjectiveKind kind);
ParamMode default_param_mode(ObjectiveKind kind);
bool uses_target(ObjectiveKind kind);

// Sparse derivative of a residual with respect to raw parameter entries.
enum class Field { kLogits, kLogFlow, kQ };
struct Term {
  Field field;
  std::size_t index;
  double coef;
};
using Terms = std::vector<Term>;

// Read access to the derived quantities of a parameter table (log P_F, log F,
// V, Q) plus their chain rule back to raw entries.
class ParamView {
 public:
  ParamView(const SoftMdpGraph& graph, const TabularParams& params, double alpha);

  const SoftMdpGraph& graph() const { return *graph_; }
  const TabularParams& params() const { return *params_; }
  double alpha() const { return alpha_; }

  double log_pf(StateId s, std::size_t a) const;
  double log_flow(StateId s) const;
  double value(StateId s) const;
  double q(StateId s, std::size_t a) const;

  // Append coef * d(quantity)/d(raw) to terms; no-op when terms is null.
  void d_log_pf(StateId s, std::size_t a, double coef, Terms* terms) const;
  void d_log_flow(StateId s, double coef, Terms* terms) const;
  void d_value(StateId s, double coef, Terms* terms) const;
  void d_q(StateId s, std::size_t a, double coef, Terms* terms) const;

 private:
  bool policy_from_q() const;
  double row_lse(StateId s) const;

  const SoftMdpGraph* graph_;
  const TabularParams* params_;
  double alpha_;
};

// Residuals. `target` (nullable) supplies next-state terms, which then carry
// no gradient. Sink-ending units use V(s_f) = 0.
double residual_pcl(const Trajectory& sub, const ParamView& view, const RewardScheme& scheme, Terms* terms = nullptr);
double residual_subtb(const Trajectory& sub, const ParamView& view, const BackwardPolicy& backward,
                      const EnergyModel& energy, Terms* terms = nullptr);
double residual_db(const Transition& t, const ParamView& view, const ParamView* target, const BackwardPolicy& backward,
                   const EnergyModel& energy, Terms* terms = nullptr);
double residual_sql(const Transition& t, const ParamView& view, const ParamView* target, const RewardScheme& scheme,
                    Terms* terms = nullptr);
// Interior transitions only.
double residual_fldb(const Transition& t, const ParamView& view, const ParamView* target,
                     const BackwardPolicy& backward, const EnergyModel& energy, Terms* terms = nullptr);
// Termination unit for FL-DB training: -(log F~(x) + log P_F(s_f|x)).
double residual_fldb_boundary(StateId x, const ParamView& view, Terms* terms = nullptr);
double residual_mdb(const Transition& t, const ParamView& view, const ParamView* target,
                    const BackwardPolicy& backward, const EnergyModel& energy, Terms* terms = nullptr);
double residual_pisql(const Transition& t, const ParamView& view, const ParamView* target, const RewardScheme& scheme,
                      Terms* terms = nullptr);

struct SacLosses {
  double critic = 0.0;
  double actor = 0.0;
};

// Critic: 0.5 mean (Q(s,a) - y)^2 with y = r + sum_b pi(b|s')(Q_tgt(s',b) - alpha log pi(b|s')).
// Actor: mean KL(pi(.|s) || softmax(Q(s,.)/alpha)). y and the actor's Q are held fixed.
// A null target uses the current Q for y.
SacLosses sac_step_losses(const SoftMdpGraph& graph, std::span<const Transition> batch, const TabularParams& params,
                          const TabularParams* target, const RewardScheme& scheme);

enum class Correspondence { kPclToSubtb, kQToPfFlow, kPfFlowToQ };

// kPclToSubtb: kPolicyValue -> kPolicyFlow, log F = V / alpha.
// kQToPfFlow:  kQ -> kPolicyFlow, logits = Q/alpha - LSE, log F = LSE(Q/alpha).
// kPfFlowToQ:  kPolicyFlow -> kQ, Q = alpha (log P_F + log F).
TabularParams apply_correspondence(const SoftMdpGraph& graph, Correspondence kind, const TabularParams& params,
                                   double alpha);

// Everything an objective needs besides parameters.
struct ObjectiveContext {
  const SoftMdpGraph* graph = nullptr;
  const EnergyModel* energy = nullptr;
  const RewardScheme* scheme = nullptr;
  ObjectiveKind kind = ObjectiveKind::kTB;
  // PCL: every subtrajectory of each trajectory instead of only the full one.
  bool pcl_all_subtrajectories = false;
};

// Throws kPrecondition when the objective, scheme, environment and parameter
// mode do not fit together.
void check_objective_compatible(const ObjectiveContext& ctx, ParamMode mode);

// Trajectory-level objectives read `trajectories`; the rest read `transitions`.
struct Batch {
  std::vector<Trajectory> trajectories;
  std::vector<Transition> transitions;
};

// Residual units carved out of one complete trajectory for the objective.
void append_units(const ObjectiveContext& ctx, const Trajectory& complete, Batch& batch);

// Every contiguous subtrajectory with at least one edge (sink edge included).
std::vector<Trajectory> all_subtrajectories(const Trajectory& complete);

struct LossEval {
  double loss = 0.0;
  std::size_t units = 0;
  SacLosses sac;
  TabularParams grad;  // filled when requested
};

// 0.5 mean residual^2 over the batch (critic + actor for SAC) and its gradient.
// SAC only: `held` supplies the quantities its semi-gradient keeps fixed (the
// soft target's policy and the actor's Q); defaults to params.
LossEval evaluate_objective(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                            const TabularParams* target, bool with_grad, const TabularParams* held = nullptr);

enum class EquivalencePair { kPclSubtb, kSqlDb, kPiSqlMdb, kSqlFldb };

const char* to_string(EquivalencePair pair);
std::optional<EquivalencePair> parse_equivalence_pair(const std::string& name);

struct EquivalenceViolation {
  int trial = 0;
  std::string unit;
  double delta_rl = 0.0;
  double delta_gfn = 0.0;
  double gap = 0.0;
  std::string what;
};

struct EquivalenceReport {
  EquivalencePair pair = EquivalencePair::kPclSubtb;
  double alpha = 1.0;
  int trials = 0;
  std::size_t units_checked = 0;
  double max_residual_gap = 0.0;     // max |D_RL - sign alpha D_GFN| / max(1, |D_RL|)
  double max_loss_ratio_error = 0.0; // max |L_RL / L_GFN - alpha^2| / alpha^2
  bool passed = true;
  std::size_t num_violations = 0;
  std::vector<EquivalenceViolation> violations;  // first few only
};

// Random N(0,1) parameters per trial, units from a uniformly sampled complete
// trajectory. Throws kPrecondition for pi-SQL/MDB outside the dense regime.
EquivalenceReport check_equivalence(EquivalencePair pair, const SoftMdpGraph& graph, const EnergyModel& energy,
                                    const RewardScheme& scheme, int trials, double tol, double ratio_tol,
                                    std::uint64_t seed);

}  // namespace softdag
