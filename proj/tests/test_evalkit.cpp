#include "mainzsl/errors.hpp"
#include "mainzsl/evalkit.hpp"

#include <gtest/gtest.h>

#include <vector>

using namespace mainzsl;

namespace {

// Linear encoder with identity projections: z_c = a_c.
MainModel identity_model(int dim) {
  MainModel m;
  m.encoder.proj1 = LinearMap{Matrix::Identity(dim, dim), Matrix::Zero(1, dim)};
  m.encoder.proj2 = LinearMap{Matrix::Identity(dim, dim), Matrix::Zero(1, dim)};
  m.encoder.bn = BatchNormState::identity(dim);
  m.encoder.use_batch_norm = false;
  m.regressor.layers.push_back(LinearMap{Matrix::Identity(dim, dim), Matrix::Zero(1, dim)});
  m.head.kind = HeadKind::kCosine;
  return m;
}

// 2 seen + 2 unseen classes with one-hot attributes; two test rows per class.
TaskView one_hot_view(bool collapse_to_class0) {
  TaskView v;
  v.seen_ids = {0, 1};
  v.unseen_ids = {2, 3};
  v.new_seen_ids = v.seen_ids;
  v.attribute_table = Matrix::Identity(4, 4);
  v.test_set.features.resize(8, 4);
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 2; ++i) {
      v.test_set.features.row(2 * c + i) = collapse_to_class0 ? Matrix::Identity(4, 4).row(0) : Matrix::Identity(4, 4).row(c);
      v.test_set.labels.push_back(c);
    }
  }
  return v;
}

TaskMetrics task_row(int task, double s, double u) {
  TaskMetrics m;
  m.task_id = task;
  m.seen_acc = s;
  m.unseen_acc = u;
  m.harmonic = harmonic_mean(s, u);
  return m;
}

}  // namespace

TEST(PerClassAccuracy, HandCases) {
  const std::vector<int> ids{0, 1};
  const std::vector<int> labels{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(per_class_accuracy(labels, labels, ids), 100.0);
  const std::vector<int> half{0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(per_class_accuracy(half, labels, ids), 50.0);
  const std::vector<int> none{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(per_class_accuracy(none, labels, ids), 0.0);
}

TEST(PerClassAccuracy, MacroDiffersFromMicro) {
  std::vector<int> labels(10, 0);
  labels.push_back(1);
  std::vector<int> pred(10, 0);
  pred[0] = 1;
  pred.push_back(1);
  const std::vector<int> ids{0, 1};
  EXPECT_DOUBLE_EQ(per_class_accuracy(pred, labels, ids), 95.0);
  EXPECT_DOUBLE_EQ(sample_accuracy(pred, labels), 100.0 * 10.0 / 11.0);
}

TEST(PerClassAccuracy, DuplicationInvariant) {
  const std::vector<int> ids{0, 1, 2};
  const std::vector<int> labels{0, 0, 1, 2, 2, 2};
  const std::vector<int> pred{0, 1, 1, 2, 0, 2};
  std::vector<int> l2 = labels;
  std::vector<int> p2 = pred;
  l2.insert(l2.end(), labels.begin(), labels.end());
  p2.insert(p2.end(), pred.begin(), pred.end());
  EXPECT_DOUBLE_EQ(per_class_accuracy(pred, labels, ids), per_class_accuracy(p2, l2, ids));
}

TEST(PerClassAccuracy, SkipsEmptyClassesAndRejectsBadInput) {
  const std::vector<int> ids{0, 1, 5};
  const std::vector<int> labels{0, 1};
  std::vector<int> skipped;
  EXPECT_DOUBLE_EQ(per_class_accuracy(labels, labels, ids, &skipped), 100.0);
  EXPECT_EQ(skipped, std::vector<int>{5});
  const std::vector<int> empty;
  EXPECT_THROW(per_class_accuracy(empty, empty, ids), MetricError);
  const std::vector<int> stray{7};
  EXPECT_THROW(per_class_accuracy(stray, stray, ids), MetricError);
}

TEST(HarmonicMean, HandCases) {
  EXPECT_DOUBLE_EQ(harmonic_mean(50, 50), 50.0);
  EXPECT_EQ(harmonic_mean(60, 40), 48.0);
  EXPECT_EQ(harmonic_mean(0, 73), 0.0);
  EXPECT_EQ(harmonic_mean(0, 0), 0.0);
  EXPECT_THROW(harmonic_mean(-1, 5), MetricError);
}

TEST(HarmonicMean, Bounds) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng);
    const double v = u(rng);
    const double h = harmonic_mean(s, v);
    EXPECT_LE(std::min(s, v), h + 1e-12);
    EXPECT_LE(h, 2.0 * std::min(s, v) + 1e-12);
    EXPECT_LE(h, (s + v) / 2.0 + 1e-12);
  }
}

TEST(Gzsl, OracleAndCollapsedClassifiers) {
  const MainModel m = identity_model(4);
  const MetricsReport oracle = gzsl_evaluate(m, one_hot_view(false));
  EXPECT_DOUBLE_EQ(oracle.mSA, 100.0);
  EXPECT_DOUBLE_EQ(oracle.mUA, 100.0);
  EXPECT_DOUBLE_EQ(oracle.mH, 100.0);
  const MetricsReport biased = gzsl_evaluate(m, one_hot_view(true));
  EXPECT_DOUBLE_EQ(biased.mSA, 50.0);
  EXPECT_DOUBLE_EQ(biased.mUA, 0.0);
  EXPECT_DOUBLE_EQ(biased.mH, 0.0);
}

TEST(Gzsl, EmptyUnseenIsProtocolError) {
  TaskView v = one_hot_view(false);
  v.unseen_ids.clear();
  EXPECT_THROW(gzsl_evaluate(identity_model(4), v), ProtocolError);
}

TEST(Predict, ReturnsGlobalIds) {
  const MainModel m = identity_model(2);
  Matrix x(2, 2);
  x << 0, 1, 1, 0;
  const std::vector<int> ids{7, 3};
  EXPECT_EQ(predict(m, x, Matrix::Identity(2, 2), ids), (std::vector<int>{3, 7}));
}

TEST(ContinualFixed, HandExample) {
  const std::vector<TaskMetrics> rows{task_row(1, 80, 40), task_row(2, 60, 60), task_row(3, 90, 0)};
  const MetricsReport r = continual_metrics_fixed(rows, 3);
  EXPECT_NEAR(r.mSA, 70.0, 1e-9);
  EXPECT_NEAR(r.mUA, 50.0, 1e-9);
  EXPECT_NEAR(r.mH, (160.0 / 3.0 + 60.0) / 2.0, 1e-9);
  EXPECT_NEAR(r.mH, 56.67, 5e-3);
  EXPECT_NEAR(harmonic_mean(r.mSA, r.mUA), 58.33, 5e-3);
  EXPECT_EQ(r.per_task.size(), 2u);
}

TEST(ContinualFixed, ConstantAndMissing) {
  const std::vector<TaskMetrics> rows{task_row(1, 42, 42), task_row(2, 42, 42), task_row(3, 42, 42), task_row(4, 42, 42)};
  const MetricsReport r = continual_metrics_fixed(rows, 4);
  EXPECT_DOUBLE_EQ(r.mSA, 42.0);
  EXPECT_DOUBLE_EQ(r.mUA, 42.0);
  EXPECT_DOUBLE_EQ(r.mH, 42.0);
  const std::vector<TaskMetrics> gap{task_row(1, 1, 1), task_row(3, 1, 1)};
  EXPECT_THROW(continual_metrics_fixed(gap, 3), MetricError);
}

TEST(ContinualDynamic, AveragesAllTasks) {
  TaskMetrics a = task_row(1, 0, 0);
  a.harmonic = 40;
  TaskMetrics b = task_row(2, 0, 0);
  b.harmonic = 60;
  const MetricsReport r = continual_metrics_dynamic({a, b}, 2);
  EXPECT_DOUBLE_EQ(r.mH, 50.0);
  EXPECT_EQ(r.protocol, Protocol::kDynamic);
  EXPECT_THROW(continual_metrics_dynamic({a}, 2), MetricError);
}

TEST(ContinualDynamic, SingleTaskEqualsGzsl) {
  const MainModel m = identity_model(4);
  const TaskView v = one_hot_view(true);
  const MetricsReport g = gzsl_evaluate(m, v);
  const MetricsReport d = continual_metrics_dynamic({evaluate_view(m, v)}, 1);
  EXPECT_EQ(g.mSA, d.mSA);
  EXPECT_EQ(g.mUA, d.mUA);
  EXPECT_EQ(g.mH, d.mH);
}

TEST(ContinualDynamic, CubShapedReportRows) {
  std::vector<TaskMetrics> rows;
  for (int t = 1; t <= 20; ++t) rows.push_back(task_row(t, 50 + t, 20 + t));
  const MetricsReport r = continual_metrics_dynamic(rows, 20);
  EXPECT_EQ(r.per_task.size(), 20u);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,mSA,mUA,mH");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
}

TEST(Report, JsonKeepsFullPrecision) {
  const MetricsReport r = continual_metrics_fixed({task_row(1, 80, 40), task_row(2, 60, 60)}, 3);
  const nlohmann::json j = r.to_json();
  EXPECT_EQ(j["mH"].get<double>(), r.mH);
  EXPECT_EQ(j["protocol"], "fixed");
}
