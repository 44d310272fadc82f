#pragma once

#include "mainzsl/continual.hpp"
#include "mainzsl/encoder.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace mainzsl {

// Accuracies are percentages in [0, 100], unrounded.
struct TaskMetrics {
  int task_id = 1;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
  double harmonic = 0.0;
  // Sample-averaged (micro) accuracies; diagnostics only.
  double seen_sample_acc = 0.0;
  double unseen_sample_acc = 0.0;
};

struct MetricsReport {
  Protocol protocol = Protocol::kGzsl;
  std::vector<TaskMetrics> per_task;
  double mSA = 0.0;
  double mUA = 0.0;
  double mH = 0.0;

  nlohmann::json to_json() const;
  // Header "task,mSA,mUA,mH", one row per task, 2 decimals.
  std::string to_csv() const;
};

// Macro accuracy: mean over classes of per-class recall, times 100. Classes of
// `class_ids` without samples are skipped (returned through `skipped`). Every
// label must belong to class_ids; an empty evaluation raises MetricError.
double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const int> class_ids, std::vector<int>* skipped = nullptr);
double sample_accuracy(std::span<const int> predictions, std::span<const int> labels);

// 2us / (u + s); 0 when both are 0. Negative input raises MetricError.
double harmonic_mean(double seen, double unseen);

// Global class id predicted for every row of `features` among `candidate_ids`.
std::vector<int> predict(const MainModel& model, const Matrix& features, const Matrix& candidate_attributes,
                         std::span<const int> candidate_ids);

// Joint seen ∪ unseen label space of the view; seen and unseen accuracy are
// computed on their own test samples against that joint space.
TaskMetrics evaluate_view(const MainModel& model, const TaskView& view);

MetricsReport gzsl_evaluate(const MainModel& model, const TaskView& view);

// Mean over tasks 1..K-1 (task K has no unseen classes). Extra rows for task K
// are ignored; a missing task raises MetricError.
MetricsReport continual_metrics_fixed(const std::vector<TaskMetrics>& per_task, int num_tasks);
// Mean over all K tasks.
MetricsReport continual_metrics_dynamic(const std::vector<TaskMetrics>& per_task, int num_tasks);

}  // namespace mainzsl
