#include "mainzsl/evalkit.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

namespace mainzsl {

double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const int> class_ids, std::vector<int>* skipped) {
  if (predictions.size() != labels.size()) throw MetricError("per_class_accuracy: predictions/labels length mismatch");
  if (labels.empty() || class_ids.empty()) throw MetricError("per_class_accuracy: empty evaluation set");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (int c : class_ids) tally.emplace(c, std::make_pair(0u, 0u));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) {
      throw MetricError("per_class_accuracy: label " + std::to_string(labels[i]) + " is not an evaluated class");
    }
    it->second.second += 1;
    if (predictions[i] == labels[i]) it->second.first += 1;
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& [cls, ct] : tally) {
    if (ct.second == 0) {
      if (skipped) skipped->push_back(cls);
      continue;
    }
    sum += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    ++counted;
  }
  if (counted == 0) throw MetricError("per_class_accuracy: no evaluated class has samples");
  return 100.0 * sum / static_cast<double>(counted);
}

double sample_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty()) throw MetricError("sample_accuracy: bad input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double harmonic_mean(double seen, double unseen) {
  if (seen < 0.0 || unseen < 0.0) throw MetricError("harmonic_mean: domain error, negative accuracy");
  if (seen + unseen == 0.0) return 0.0;
  return 2.0 * unseen * seen / (unseen + seen);
}

std::vector<int> predict(const MainModel& model, const Matrix& features, const Matrix& candidate_attributes,
                         std::span<const int> candidate_ids) {
  if (static_cast<std::size_t>(candidate_attributes.rows()) != candidate_ids.size()) {
    throw DimensionError("predict: candidate attribute rows differ from candidate ids");
  }
  const Matrix z = encode_attributes(candidate_attributes, model.encoder);
  const Matrix logits = class_logits_rows(features, z, model.head);
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = candidate_ids[static_cast<std::size_t>(argmax_lowest(logits.row(r)))];
  }
  return out;
}

namespace {

struct Split {
  std::vector<int> predictions;
  std::vector<int> labels;
};

void warn_skipped(const std::vector<int>& skipped, int task_id) {
  for (int c : skipped) std::clog << "warning: task " << task_id << ": class " << c << " has no test samples\n";
}

}  // namespace

TaskMetrics evaluate_view(const MainModel& model, const TaskView& view) {
  if (view.seen_ids.empty()) throw ProtocolError("evaluate: view has no seen classes");
  if (view.test_set.empty()) throw MetricError("evaluate: view has no test samples");
  const std::vector<int> ids = view.table_ids();
  const std::vector<int> pred = predict(model, view.test_set.features, view.attribute_table, ids);

  std::vector<bool> is_seen;
  for (int c : view.seen_ids) {
    if (static_cast<std::size_t>(c) >= is_seen.size()) is_seen.resize(static_cast<std::size_t>(c) + 1, false);
    is_seen[static_cast<std::size_t>(c)] = true;
  }
  Split seen;
  Split unseen;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int y = view.test_set.labels[i];
    const bool s = static_cast<std::size_t>(y) < is_seen.size() && is_seen[static_cast<std::size_t>(y)];
    Split& dst = s ? seen : unseen;
    dst.predictions.push_back(pred[i]);
    dst.labels.push_back(y);
  }
  TaskMetrics m;
  m.task_id = view.task_id;
  std::vector<int> skipped;
  if (!seen.labels.empty()) {
    m.seen_acc = per_class_accuracy(seen.predictions, seen.labels, view.seen_ids, &skipped);
    m.seen_sample_acc = sample_accuracy(seen.predictions, seen.labels);
  }
  if (!view.unseen_ids.empty() && !unseen.labels.empty()) {
    m.unseen_acc = per_class_accuracy(unseen.predictions, unseen.labels, view.unseen_ids, &skipped);
    m.unseen_sample_acc = sample_accuracy(unseen.predictions, unseen.labels);
  }
  warn_skipped(skipped, view.task_id);
  m.harmonic = harmonic_mean(m.seen_acc, m.unseen_acc);
  return m;
}

MetricsReport gzsl_evaluate(const MainModel& model, const TaskView& view) {
  if (view.unseen_ids.empty()) throw ProtocolError("gzsl_evaluate: empty unseen class set");
  MetricsReport r;
  r.protocol = Protocol::kGzsl;
  r.per_task.push_back(evaluate_view(model, view));
  r.mSA = r.per_task.front().seen_acc;
  r.mUA = r.per_task.front().unseen_acc;
  r.mH = r.per_task.front().harmonic;
  return r;
}

namespace {

MetricsReport aggregate(const std::vector<TaskMetrics>& per_task, int first, int last, Protocol protocol) {
  MetricsReport r;
  r.protocol = protocol;
  for (int t = first; t <= last; ++t) {
    auto it = std::find_if(per_task.begin(), per_task.end(), [t](const TaskMetrics& m) { return m.task_id == t; });
    if (it == per_task.end()) throw MetricError("continual metrics: missing results for task " + std::to_string(t));
    r.per_task.push_back(*it);
  }
  if (r.per_task.empty()) throw MetricError("continual metrics: no tasks to aggregate");
  const double n = static_cast<double>(r.per_task.size());
  for (const auto& m : r.per_task) {
    r.mSA += m.seen_acc;
    r.mUA += m.unseen_acc;
    r.mH += m.harmonic;
  }
  r.mSA /= n;
  r.mUA /= n;
  r.mH /= n;
  return r;
}

}  // namespace

MetricsReport continual_metrics_fixed(const std::vector<TaskMetrics>& per_task, int num_tasks) {
  if (num_tasks < 2) throw MetricError("fixed metrics need K >= 2");
  return aggregate(per_task, 1, num_tasks - 1, Protocol::kFixed);
}

MetricsReport continual_metrics_dynamic(const std::vector<TaskMetrics>& per_task, int num_tasks) {
  if (num_tasks < 1) throw MetricError("dynamic metrics need K >= 1");
  return aggregate(per_task, 1, num_tasks, Protocol::kDynamic);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = to_string(protocol);
  j["mSA"] = mSA;
  j["mUA"] = mUA;
  j["mH"] = mH;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : per_task) {
    rows.push_back({{"task", m.task_id},
                    {"seen_acc", m.seen_acc},
                    {"unseen_acc", m.unseen_acc},
                    {"harmonic", m.harmonic},
                    {"seen_sample_acc", m.seen_sample_acc},
                    {"unseen_sample_acc", m.unseen_sample_acc}});
  }
  j["per_task"] = rows;
  return j;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "task,mSA,mUA,mH\n";
  char buf[128];
  for (const auto& m : per_task) {
    std::snprintf(buf, sizeof(buf), "%d,%.2f,%.2f,%.2f\n", m.task_id, m.seen_acc, m.unseen_acc, m.harmonic);
    os << buf;
  }
  return os.str();
}

}  // namespace mainzsl
