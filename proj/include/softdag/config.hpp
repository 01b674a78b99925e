#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "softdag/environments.hpp"
#include "softdag/objectives.hpp"
#include "softdag/reward.hpp"
#include "softdag/training.hpp"

namespace softdag {

using Json = nlohmann::ordered_json;

struct RewardSpec {
  RewardKind kind = RewardKind::kTerminalCorrected;
  BackwardKind backward = BackwardKind::kUniform;
  double alpha = 1.0;
};

struct ExperimentConfig {
  Json env;                        // environment spec, defaults filled in
  RewardSpec reward;
  std::optional<TrainConfig> train;
  std::string output_dir = "out";
  std::string base_dir = ".";      // relative paths inside the config resolve here
};

// Reads and parses a JSON file. Throws kIo / kParse.
Json read_json_file(const std::string& path);

// Builds an environment from an env spec. Raw "graph" specs are not
// validated here so that `validate` can report on them. Throws kParse on
// malformed specs and kLimit on size bounds.
Environment load_environment(const Json& spec, const std::string& base_dir);

// Accepts a full experiment object, a bare env spec (has "kind"), or a raw
// graph (has "num_states").
ExperimentConfig parse_experiment(const Json& doc, const std::string& base_dir);
ExperimentConfig load_experiment_file(const std::string& path);

// Applies one override by name: seed, alpha, reward, backward, objective,
// iterations, learning_rate, output_dir. Throws kInvalidArgument.
void set_experiment_option(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Fully resolved config, sufficient to rebuild the same run.
Json config_echo(const ExperimentConfig& cfg);

Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json graph_to_json(const SoftMdpGraph& graph);
Json params_to_json(const SoftMdpGraph& graph, const TabularParams& params, double alpha);

// Scheme for an environment; always carries the requested backward policy.
RewardScheme make_scheme(const Environment& env, const RewardSpec& spec);

}  // namespace softdag
