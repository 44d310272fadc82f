#pragma once

// End-to-end runs: data source -> task stream -> training with replay ->
// evaluation, plus checkpoints, ablation variants and the gradient-check suite.

#include "mainzsl/config.hpp"
#include "mainzsl/evalkit.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mainzsl {

// Independent sub-seed for one consumer of the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Loads the bundle or generates the synthetic one, then applies l2_normalize.
DatasetBundle resolve_data(const RunConfig& config);

TaskStream build_stream(const RunConfig& config, const DatasetBundle& bundle);

struct RunResult {
  MetricsReport report;
  std::vector<TaskMetrics> all_tasks;  // every evaluated view, including ones the metric ignores
  std::vector<EpochRecord> trace;
  nlohmann::json manifest;
  MainModel model;
  std::size_t reservoir_capacity = 0;
};

// Called after each task with its evaluation; used for progress output.
using TaskCallback = std::function<void(const TaskMetrics&, const std::vector<EpochRecord>&)>;

RunResult run_experiment(const RunConfig& config, const DatasetBundle& bundle, const TaskCallback& on_task = {});

// Binary checkpoint of every trainable parameter plus batch-norm running
// statistics: magic "MAINCKP1", u64 count, then per entry u32 name length,
// name, u64 rows, u64 cols, rows*cols little-endian float64.
void save_checkpoint(MainModel& model, const std::filesystem::path& path);
// Overwrites values in a model of the same architecture. Missing or
// mis-shaped entries raise DataError.
void load_checkpoint(MainModel& model, const std::filesystem::path& path);

struct AblationVariant {
  std::string label;
  std::vector<std::pair<std::string, std::string>> settings;  // axis -> value
  RunConfig config;
};

// Cross product of the axes, each varied around `base`. Axes: sg, ir, meta,
// sia_mode, depth, reservoir_B. Unknown axis raises ConfigError.
std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::vector<std::string>& axes,
                                               const std::vector<int>& reservoir_values = {1, 3, 6, 9, 14},
                                               const std::vector<int>& depth_values = {1, 2, 3});

struct GradcheckRow {
  SiaMode sia_mode = SiaMode::kSelfGating;
  int depth = 1;
  HeadKind head = HeadKind::kCosine;
  bool batch_norm = true;
  GradCheckReport report;
  bool passed = false;
};

struct GradcheckOptions {
  double tolerance = 1e-4;
  double lambda = 5.0;
  std::uint64_t seed = 0;
  bool flip_ir_sign = false;  // fault injection: negate the IR part of the analytic gradient
  double step = 1e-5;
};

// Joint-loss gradient check on a 4-class, D=6, d=8 toy for every
// (sia_mode, depth in {1,2}, head, batch norm) combination.
std::vector<GradcheckRow> gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace mainzsl
