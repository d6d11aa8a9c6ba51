#pragma once

// Run configuration: a JSON config file layered over built-in defaults, then
// dotted-key overrides (`model.hidden_dim=32`). Unknown keys are rejected.

#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "ent/data.hpp"
#include "ent/experiment.hpp"
#include "ent/gradcheck_suite.hpp"
#include "ent/model.hpp"

namespace ent {

struct SynthOptions {
  SyntheticTaskConfig task;
  std::size_t train_utterances = 200;
  std::size_t eval_utterances = 50;
};

struct RunConfig {
  nlohmann::ordered_json tree;
  std::uint64_t seed = 0;
  EmotionSet emotions{{"neutral", "angry"}, "neutral"};
  Vocabulary vocab{"a "};
  ModelConfig model;
  TrainOptions train;
  std::size_t mix_count = 0;
  std::string train_manifest;
  std::string eval_manifest;
  EvalOptions eval;
  SynthOptions synth;
  GradcheckOptions gradcheck;
};

nlohmann::ordered_json default_config_tree();

// Applies one "dotted.key=value" override; the value is parsed as JSON when
// possible and otherwise taken as a string.
void apply_override(nlohmann::ordered_json& tree, const std::string& assignment);

// Validates the tree and derives the typed views.
RunConfig resolve_run_config(const nlohmann::ordered_json& tree);

RunConfig load_run_config(const std::string& config_path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace ent
