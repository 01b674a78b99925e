#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "softdag/environments.hpp"
#include "softdag/error.hpp"
#include "softdag/objectives.hpp"
#include "softdag/oracles.hpp"
#include "softdag/reward.hpp"

namespace softdag {

enum class InitMode { kZeros, kSmallNormal };
enum class OptimizerKind { kSgd, kAdam };

const char* to_string(InitMode mode);
const char* to_string(OptimizerKind kind);

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::kTB;
  std::optional<ParamMode> param_mode;  // objective default when unset
  std::size_t iterations = 20'000;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  double epsilon_start = 0.5;
  double epsilon_end = 0.0;
  double epsilon_decay_fraction = 0.5;
  std::size_t target_update_period = 100;
  std::size_t buffer_capacity = 100'000;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 100;
  double onpolicy_fraction = 0.5;
  InitMode init = InitMode::kZeros;
  double init_scale = 0.01;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool pcl_all_subtrajectories = false;

  ParamMode resolved_mode() const { return param_mode.value_or(default_param_mode(objective)); }
};

// Throws kInvalidArgument naming the offending field.
void validate(const TrainConfig& config);

// Circular FIFO store; once full, each push overwrites the oldest item.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity > 0, ErrorCode::kInvalidArgument, "buffer capacity must be positive");
  }

  void push(T item) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
  }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const T& operator[](std::size_t i) const { return items_[i]; }  // 0 = oldest

  template <typename Rng>
  const T& sample(Rng& rng) const {
    require(!items_.empty(), ErrorCode::kPrecondition, "sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    return items_[pick(rng)];
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

// zeros: uniform policies, log F = 0, Q = 0. small_normal: N(0, scale^2) entries.
TabularParams init_params(const SoftMdpGraph& graph, ParamMode mode, InitMode init, double scale, std::uint64_t seed);

// Linear from epsilon_start to epsilon_end over the first decay_fraction of
// the run, then flat.
double epsilon_at(const TrainConfig& config, std::size_t iteration);

// Forward policy encoded by the parameters (softmax of logits, or of Q/alpha).
PolicyTable learned_policy(const SoftMdpGraph& graph, const TabularParams& params, double alpha);

// Per step: with probability epsilon a uniform action over children and sink,
// otherwise a draw from the parametrized policy.
Trajectory sample_trajectory(const SoftMdpGraph& graph, const TabularParams& params, double alpha, double epsilon,
                             std::mt19937_64& rng);

LossEval analytic_gradient(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                           const TabularParams* target);

// Central differences of the same scalar loss, entry by entry.
TabularParams finite_diff_gradient(const ObjectiveContext& ctx, const Batch& batch, const TabularParams& params,
                                   const TabularParams* target, double step);

struct MetricsRow {
  std::size_t iteration = 0;
  double loss = 0.0;     // mean batch loss since the previous row
  double jsd = 0.0;      // learned terminating distribution vs Gibbs target
  double pearson = 0.0;  // log P(x) vs -E(x) over the support; NaN when undefined
  double epsilon = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  TabularParams params;
  bool diverged = false;
  std::string diagnostic;
};

// Evaluation metrics for the current parameters.
MetricsRow evaluate_params(const SoftMdpGraph& graph, const EnergyModel& energy, const TabularParams& params,
                           double alpha);

TrainResult train(const SoftMdpGraph& graph, const EnergyModel& energy, const RewardScheme& scheme,
                  const TrainConfig& config);

}  // namespace softdag
