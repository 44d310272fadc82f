#pragma once

// Run configuration: data source, protocol, model shape, training rates and
// ablation toggles. Serialized as JSON; unknown keys are rejected.

#include "mainzsl/continual.hpp"
#include "mainzsl/dataio.hpp"
#include "mainzsl/encoder.hpp"
#include "mainzsl/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mainzsl {

struct RunConfig {
  // Exactly one of the two data sources.
  std::string bundle_path;
  std::optional<SynthSpec> synth;
  bool l2_normalize = false;

  Protocol protocol = Protocol::kGzsl;
  int num_tasks = 0;               // 0: the dataset's known split, else required for continual runs
  std::vector<int> task_sizes;     // fixed protocol override
  std::vector<int> seen_counts;    // dynamic protocol overrides
  std::vector<int> unseen_counts;
  bool shuffle_classes = false;

  int hidden_dim = 2048;
  int depth = 1;
  SiaMode sia_mode = SiaMode::kSelfGating;
  bool batch_norm = true;
  HeadKind head = HeadKind::kCosine;
  double init_scale = 10.0;
  int regressor_hidden = -1;
  double output_init_gain = 1.0;

  // Ablation toggles.
  bool self_gating = true;  // off: no self-interaction block at all
  bool ir = true;           // off: lambda forced to 0
  bool meta = true;         // off: meta_mode forced to no_meta

  int reservoir_b = -1;     // samples per budget class; < 0: dataset default

  TrainConfig train;
  std::string output_dir;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;

  ModelConfig model_config(int attr_dim, int feature_dim) const;
  // `train` with the ir/meta toggles and the run seed applied.
  TrainConfig effective_train() const;
  int effective_reservoir_b(const std::string& dataset) const;
};

// Defaults for the synthetic desk-scale problem: a narrow encoder and a short,
// faster schedule so a run finishes in seconds on one core.
RunConfig synthetic_preset();

// Per-sample reservoir budget B of the benchmark datasets; 10 for anything else.
int default_reservoir_b(const std::string& dataset);

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace mainzsl
