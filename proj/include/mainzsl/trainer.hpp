#pragma once

// Reptile meta-training over the joint loss, plus the plain-optimizer path
// used by the no-meta ablation.

#include "mainzsl/continual.hpp"
#include "mainzsl/encoder.hpp"
#include "mainzsl/objective.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mainzsl {

enum class MetaMode { kReptileAdam, kReptilePlain, kNoMeta };
enum class InnerOptimizer { kAdam, kSgd };

const char* to_string(MetaMode mode);
const char* to_string(InnerOptimizer opt);
MetaMode parse_meta_mode(const std::string& text);
InnerOptimizer parse_inner_optimizer(const std::string& text);

struct TrainConfig {
  double lambda = 5.0;
  double inner_lr = 1e-4;
  // Outer Adam base rate (reptile_adam, decayed per epoch) or the constant
  // interpolation step ε (reptile_plain).
  double meta_lr = 1e-3;
  int inner_steps = 5;  // k
  int epochs_per_task = 200;
  int batch_size = 64;
  MetaMode meta_mode = MetaMode::kReptileAdam;
  InnerOptimizer inner_optimizer = InnerOptimizer::kAdam;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// base_lr · (1 - epoch / (total_epochs - 1)).
double lr_schedule(int epoch, int total_epochs, double base_lr);

struct MetaState {
  AdamState outer;
  int epoch = 0;
  double multiplier = 1.0;  // current schedule factor in [0, 1]
};

// State one training run carries from batch to batch and task to task.
struct TrainerState {
  explicit TrainerState(std::uint64_t seed) : rng(seed) {}
  Rng rng;           // batch sampling
  AdamState inner;   // inner optimizer moments, shared by successive inner loops
  MetaState meta;
};

// k optimizer steps on the joint loss starting from a copy of `params`.
// `first_loss` receives the loss at the starting point.
MainModel inner_update(const MainModel& params, const TrainBatch& batch, const TrainConfig& config,
                       AdamState& inner_state, LossBreakdown* first_loss = nullptr);

// Moves `params` toward `adapted`. Plain: Φ <- (1-ε)Φ + εΦ̃. Adam: the
// pseudo-gradient Φ - Φ̃ goes through the outer Adam at `lr`. Batch-norm
// running statistics are taken from `adapted`.
void reptile_step(MainModel& params, const MainModel& adapted, MetaState& meta, const TrainConfig& config, double lr);

struct EpochRecord {
  int task = 1;
  int epoch = 0;
  double ce = 0.0;
  double ir = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// Batch built from pool rows; labels are mapped to positions in `seen_ids`.
TrainBatch make_batch(const FeatureDataset& pool, std::span<const std::size_t> rows, const std::vector<int>& seen_ids,
                      const Matrix& seen_attributes);

// Runs epochs_per_task epochs over reservoir ∪ task data. Each batch drives one
// inner_update + reptile_step, or one direct optimizer step under no_meta.
std::vector<EpochRecord> train_task(MainModel& model, const TaskView& view, const Reservoir& reservoir,
                                    const TrainConfig& config, TrainerState& state);

void write_trace_csv(std::ostream& os, const std::vector<EpochRecord>& trace);

}  // namespace mainzsl
