#pragma once

#include "mainzsl/dataio.hpp"
#include "mainzsl/numkit.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace mainzsl {

enum class Protocol { kGzsl, kFixed, kDynamic };

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& text);

// What one task exposes: trainable data of the classes arriving at this task,
// the evaluation set, and attributes of exactly the classes visible so far.
struct TaskView {
  int task_id = 1;                 // 1-based
  FeatureDataset train_set;        // samples of new_seen_ids only
  FeatureDataset test_set;         // samples of seen_ids ∪ unseen_ids
  std::vector<int> new_seen_ids;   // classes whose training data arrives now
  std::vector<int> seen_ids;       // cumulative seen classes c^s_{≤t}
  std::vector<int> unseen_ids;     // c^u_t (fixed) or c^u_{≤t} (dynamic)
  Matrix attribute_table;          // rows follow table_ids()

  // seen_ids followed by unseen_ids; row order of attribute_table.
  std::vector<int> table_ids() const;
  // Attribute rows of the seen classes, in seen_ids order.
  Matrix seen_attributes() const;
};

struct TaskStream {
  Protocol protocol = Protocol::kGzsl;
  std::vector<TaskView> views;
  // Reservoir budget unit: S+U for fixed, S for dynamic, 0 for plain GZSL.
  int budget_classes = 0;

  int num_tasks() const { return static_cast<int>(views.size()); }
  nlohmann::json manifest() const;
};

// Per-task class counts of the known benchmark splits, or an even split.
// A known dataset name with a mismatching class count or K is a ProtocolError.
std::vector<int> fixed_task_sizes(const std::string& dataset, int num_classes, int num_tasks);
// Near-even split: the seen remainder goes to the last tasks, the unseen
// remainder to the first (reproduces the CUB 7/8 and 3/2 pattern).
std::vector<int> balanced_counts(int total, int num_tasks, bool remainder_last);

// Single view over the bundle's seen/unseen split.
TaskStream build_gzsl_stream(const DatasetBundle& bundle);

// All classes (bundle order, or shuffled when shuffle_seed is set) cut into K
// subsets. Every class needs training rows.
TaskStream build_fixed_stream(const DatasetBundle& bundle, int num_tasks,
                              std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                              std::vector<int> task_sizes = {});

// Bundle seen and unseen classes dealt out per task by the given counts.
TaskStream build_dynamic_stream(const DatasetBundle& bundle, const std::vector<int>& seen_counts,
                                const std::vector<int>& unseen_counts,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

struct ReplayItem {
  RowVector feature;
  int label = 0;     // global class id; indexes the bundle attribute table
  int task_id = 0;
};

struct Reservoir {
  std::size_t capacity = 0;      // M
  std::size_t stream_count = 0;  // N
  std::vector<ReplayItem> items;
};

// N += 1; store while N <= M, otherwise replace a uniform slot with probability M/N.
void reservoir_offer(Reservoir& res, ReplayItem sample, Rng& rng);

// Reservoir contents followed by the current training set. Every label must be
// one of `allowed_ids` (the view's cumulative seen classes).
FeatureDataset augmented_pool(const Reservoir& res, const FeatureDataset& current,
                              const std::vector<int>& allowed_ids);

}  // namespace mainzsl
