#pragma once

#include <string>
#include <vector>

#include "softdag/config.hpp"
#include "softdag/objectives.hpp"
#include "softdag/oracles.hpp"
#include "softdag/training.hpp"

namespace softdag {

// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double x);

// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

struct ExactResult {
  DistributionTable oracle;
  DistributionTable gibbs;
  double jsd = 0.0;
  double log_z_oracle = 0.0;  // V*(s0) / alpha
  double log_z_gibbs = 0.0;
  bool biased = false;        // jsd above kBiasThreshold
  Json summary;
  std::string distribution_csv;
};

inline constexpr double kBiasThreshold = 1e-10;

// Validates the graph (kPrecondition when invalid), then runs the oracles.
ExactResult run_exact(const Environment& env, const RewardSpec& spec);

// The reward form each pair's identity is stated for.
RewardKind required_reward(EquivalencePair pair);

Json equivalence_report_json(const EquivalenceReport& rep);

struct EquivOptions {
  std::vector<EquivalencePair> pairs;  // empty: every pair applicable to the environment
  std::vector<double> alphas;          // empty: the config alpha
  std::optional<RewardKind> reward;    // default: required_reward(pair)
  BackwardKind backward = BackwardKind::kUniform;
  int trials = 100;
  double tol = 1e-9;
  double ratio_tol = 1e-8;
  std::uint64_t seed = 0;
};

struct EquivResult {
  bool passed = true;
  Json report;
};

// Explicitly requested pairs that do not apply throw kPrecondition; pairs
// skipped under the "every pair" default are listed in the report.
EquivResult run_equiv(const Environment& env, const EquivOptions& opts);

struct TrainArtifacts {
  std::string metrics_csv;
  std::string params_json;
  std::string manifest_json;
  bool diverged = false;
  std::string diagnostic;
  std::vector<MetricsRow> rows;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

TrainArtifacts run_train(const ExperimentConfig& cfg);

const char* library_version();

}  // namespace softdag
