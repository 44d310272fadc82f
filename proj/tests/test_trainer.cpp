#include "mainzsl/errors.hpp"
#include "mainzsl/evalkit.hpp"
#include "mainzsl/trainer.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <vector>

using namespace mainzsl;

namespace {

// Three well separated classes; features are class prototypes plus small noise.
TaskView separable_view(int per_class, std::uint64_t seed) {
  Rng rng(seed);
  TaskView v;
  v.task_id = 1;
  v.seen_ids = {0, 1, 2};
  v.new_seen_ids = v.seen_ids;
  v.attribute_table = Matrix::Identity(3, 3);
  const Matrix protos = Matrix::Identity(3, 4) * 3.0;
  v.train_set.features.resize(3 * per_class, 4);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per_class; ++i) {
      v.train_set.features.row(c * per_class + i) = protos.row(c) + normal_matrix(1, 4, 0.1, rng);
      v.train_set.labels.push_back(c);
      v.train_set.task_ids.push_back(1);
    }
  }
  v.test_set = v.train_set;
  return v;
}

ModelConfig toy_model_config(bool bn) {
  ModelConfig c;
  c.attr_dim = 3;
  c.feature_dim = 4;
  c.hidden_dim = 8;
  c.regressor_hidden = 6;
  c.use_batch_norm = bn;
  return c;
}

TrainConfig sgd_config(MetaMode mode) {
  TrainConfig t;
  t.meta_mode = mode;
  t.inner_optimizer = InnerOptimizer::kSgd;
  t.inner_steps = 1;
  t.inner_lr = 0.05;
  t.meta_lr = 1.0;
  t.batch_size = 8;
  t.epochs_per_task = 5;
  return t;
}

double max_abs_diff(MainModel& a, MainModel& b) {
  const ParamList pa = a.parameters();
  const ParamList pb = b.parameters();
  double d = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) d = std::max(d, (*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff());
  return d;
}

TrainBatch toy_batch(std::uint64_t seed) {
  const TaskView v = separable_view(4, seed);
  std::vector<std::size_t> rows{0, 3, 5, 8, 11};
  return make_batch(v.train_set, rows, v.seen_ids, v.seen_attributes());
}

}  // namespace

TEST(LrSchedule, Endpoints) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 200, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(199, 200, 1e-3), 0.0);
  EXPECT_NEAR(lr_schedule(100, 200, 1e-3), 1e-3 * (1.0 - 100.0 / 199.0), 1e-18);
  EXPECT_NEAR(lr_schedule(100, 200, 1e-3), 4.975e-4, 1e-7);
}

TEST(LrSchedule, NonIncreasingAndLinear) {
  double prev = lr_schedule(0, 50, 2.0);
  for (int e = 1; e < 50; ++e) {
    const double now = lr_schedule(e, 50, 2.0);
    EXPECT_LE(now, prev);
    EXPECT_NEAR(prev - now, 2.0 / 49.0, 1e-12);
    prev = now;
  }
  EXPECT_THROW(lr_schedule(0, 1, 1e-3), ConfigError);
  EXPECT_THROW(lr_schedule(5, 5, 1e-3), ConfigError);
}

TEST(InnerUpdate, OneSgdStepIsGradientStep) {
  Rng rng(1);
  MainModel m = init_model(toy_model_config(false), rng);
  const TrainBatch b = toy_batch(2);
  TrainConfig t = sgd_config(MetaMode::kReptilePlain);
  AdamState unused;
  MainModel adapted = inner_update(m, b, t, unused);
  MainModel expected = m;
  const LossAndGrads lg = joint_loss_and_grads(b, expected, t.lambda);
  sgd_update(expected.parameters(), lg.grads, t.inner_lr);
  EXPECT_EQ(max_abs_diff(adapted, expected), 0.0);
}

TEST(InnerUpdate, TwoStepsEqualTwoSingleSteps) {
  Rng rng(3);
  MainModel m = init_model(toy_model_config(true), rng);
  const TrainBatch b = toy_batch(4);
  TrainConfig two = sgd_config(MetaMode::kReptilePlain);
  two.inner_optimizer = InnerOptimizer::kAdam;
  two.inner_lr = 1e-2;
  two.inner_steps = 2;
  TrainConfig one = two;
  one.inner_steps = 1;
  AdamState s2;
  AdamState s1;
  MainModel direct = inner_update(m, b, two, s2);
  MainModel composed = inner_update(inner_update(m, b, one, s1), b, one, s1);
  EXPECT_EQ(max_abs_diff(direct, composed), 0.0);
  EXPECT_EQ(s1.step_count, s2.step_count);
}

TEST(InnerUpdate, ReducesLossWithSmallStep) {
  Rng rng(5);
  MainModel m = init_model(toy_model_config(false), rng);
  const TrainBatch b = toy_batch(6);
  TrainConfig t = sgd_config(MetaMode::kReptilePlain);
  t.inner_lr = 1e-3;
  AdamState unused;
  LossBreakdown before;
  MainModel adapted = inner_update(m, b, t, unused, &before);
  EXPECT_EQ(before.total, joint_loss(b, m, t.lambda).total);
  EXPECT_LT(joint_loss(b, adapted, t.lambda).total, before.total);
}

TEST(InnerUpdate, EmptyBatch) {
  Rng rng(7);
  MainModel m = init_model(toy_model_config(false), rng);
  TrainBatch b;
  b.features.resize(0, 4);
  b.class_attributes = Matrix::Identity(3, 3);
  AdamState s;
  EXPECT_THROW(inner_update(m, b, sgd_config(MetaMode::kReptilePlain), s), DataError);
}

TEST(ReptileStep, PlainEpsilonOneAndZero) {
  Rng rng(8);
  MainModel m = init_model(toy_model_config(true), rng);
  MainModel target = init_model(toy_model_config(true), rng);
  target.encoder.bn.running_mean.setConstant(0.25);
  TrainConfig t = sgd_config(MetaMode::kReptilePlain);
  MetaState meta;

  MainModel stay = m;
  reptile_step(stay, target, meta, t, 0.0);
  EXPECT_EQ(max_abs_diff(stay, m), 0.0);

  MainModel jump = m;
  reptile_step(jump, target, meta, t, 1.0);
  EXPECT_EQ(max_abs_diff(jump, target), 0.0);
  EXPECT_EQ(jump.encoder.bn.running_mean, target.encoder.bn.running_mean);
}

TEST(ReptileStep, PlainKOneSgdIsScaledSgd) {
  Rng rng(9);
  MainModel m = init_model(toy_model_config(false), rng);
  const TrainBatch b = toy_batch(10);
  TrainConfig t = sgd_config(MetaMode::kReptilePlain);
  const double eps = 0.3;
  AdamState unused;
  MetaState meta;
  MainModel reptile = m;
  MainModel adapted = inner_update(reptile, b, t, unused);
  reptile_step(reptile, adapted, meta, t, eps);

  MainModel direct = m;
  const LossAndGrads lg = joint_loss_and_grads(b, direct, t.lambda);
  sgd_update(direct.parameters(), lg.grads, eps * t.inner_lr);
  EXPECT_LT(max_abs_diff(reptile, direct), 1e-12);
}

TEST(ReptileStep, AdamModeMovesTowardTarget) {
  Rng rng(11);
  MainModel m = init_model(toy_model_config(false), rng);
  MainModel target = m;
  for (const auto& p : target.parameters()) p.value->array() += 1.0;
  TrainConfig t = sgd_config(MetaMode::kReptileAdam);
  MetaState meta;
  MainModel moved = m;
  reptile_step(moved, target, meta, t, 0.1);
  // First Adam step moves each coordinate by lr toward the target.
  const ParamList a = moved.parameters();
  const ParamList b = m.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(((*a[i].value - *b[i].value).array() - 0.1).abs().maxCoeff() < 1e-6) << a[i].name;
  }
}

TEST(ReptileStep, ShapeMismatchAndNonFinite) {
  Rng rng(12);
  MainModel m = init_model(toy_model_config(false), rng);
  ModelConfig other = toy_model_config(false);
  other.hidden_dim = 9;
  MainModel wrong = init_model(other, rng);
  TrainConfig t = sgd_config(MetaMode::kReptilePlain);
  MetaState meta;
  EXPECT_THROW(reptile_step(m, wrong, meta, t, 0.5), DimensionError);
  MainModel bad = m;
  bad.encoder.proj1.weight(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(reptile_step(m, bad, meta, t, 0.5), ContractError);
}

TEST(TrainTask, PlainReptileEqualsSgdTrajectory) {
  const TaskView v = separable_view(10, 13);
  Reservoir empty;
  Rng r1(14);
  Rng r2(14);
  MainModel a = init_model(toy_model_config(false), r1);
  MainModel b = init_model(toy_model_config(false), r2);
  TrainerState sa(15);
  TrainerState sb(15);
  const auto ta = train_task(a, v, empty, sgd_config(MetaMode::kReptilePlain), sa);
  const auto tb = train_task(b, v, empty, sgd_config(MetaMode::kNoMeta), sb);
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_NEAR(ta[i].total, tb[i].total, 1e-12);
}

TEST(TrainTask, NoMetaSeparatesToyClasses) {
  const TaskView v = separable_view(20, 16);
  Reservoir empty;
  Rng rng(17);
  MainModel m = init_model(toy_model_config(true), rng);
  TrainConfig t;
  t.meta_mode = MetaMode::kNoMeta;
  t.inner_lr = 1e-2;
  t.batch_size = 16;
  t.epochs_per_task = 50;
  TrainerState state(18);
  train_task(m, v, empty, t, state);
  const auto pred = predict(m, v.train_set.features, v.seen_attributes(), v.seen_ids);
  EXPECT_EQ(sample_accuracy(pred, v.train_set.labels), 100.0);
}

TEST(TrainTask, DeterministicAndTraceShape) {
  const TaskView v = separable_view(9, 19);
  Reservoir empty;
  TrainConfig t;
  t.epochs_per_task = 4;
  t.batch_size = 8;  // 27 samples: last chunk of 3
  t.inner_lr = 1e-3;
  std::vector<std::vector<EpochRecord>> traces;
  std::vector<MainModel> models;
  for (int run = 0; run < 2; ++run) {
    Rng rng(20);
    MainModel m = init_model(toy_model_config(true), rng);
    TrainerState state(21);
    traces.push_back(train_task(m, v, empty, t, state));
    models.push_back(m);
  }
  EXPECT_EQ(max_abs_diff(models[0], models[1]), 0.0);
  ASSERT_EQ(traces[0].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(traces[0][i].epoch, static_cast<int>(i));
    EXPECT_EQ(traces[0][i].total, traces[1][i].total);
    EXPECT_DOUBLE_EQ(traces[0][i].lr, lr_schedule(static_cast<int>(i), 4, t.meta_lr));
  }
}

TEST(TrainTask, LoneTrailingSampleWithBatchNorm) {
  const TaskView v = separable_view(3, 22);  // 9 samples
  Reservoir empty;
  TrainConfig t = sgd_config(MetaMode::kNoMeta);
  t.inner_lr = 1e-3;
  t.batch_size = 4;  // chunks 4, 4, 1
  Rng rng(23);
  MainModel m = init_model(toy_model_config(true), rng);
  TrainerState state(24);
  EXPECT_NO_THROW(train_task(m, v, empty, t, state));
}

TEST(TrainTask, ProtocolErrors) {
  TaskView v = separable_view(3, 25);
  Reservoir empty;
  Rng rng(26);
  MainModel m = init_model(toy_model_config(false), rng);
  TrainerState state(27);
  TaskView no_seen = v;
  no_seen.seen_ids.clear();
  EXPECT_THROW(train_task(m, no_seen, empty, sgd_config(MetaMode::kNoMeta), state), ProtocolError);
  TaskView no_data = v;
  no_data.train_set = FeatureDataset{};
  no_data.train_set.features.resize(0, 4);
  EXPECT_THROW(train_task(m, no_data, empty, sgd_config(MetaMode::kNoMeta), state), ProtocolError);
}

TEST(TrainConfigTest, ValidateAndParse) {
  TrainConfig t;
  t.epochs_per_task = 1;
  EXPECT_THROW(t.validate(), ConfigError);
  t.meta_mode = MetaMode::kNoMeta;
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(parse_meta_mode("reptile_plain"), MetaMode::kReptilePlain);
  EXPECT_EQ(parse_inner_optimizer("sgd"), InnerOptimizer::kSgd);
  EXPECT_THROW(parse_meta_mode("maml"), ConfigError);
}

TEST(TraceCsv, HeaderAndRoundTripPrecision) {
  std::vector<EpochRecord> trace(1);
  trace[0].ce = 0.1;
  trace[0].total = 1.0 / 3.0;
  std::ostringstream os;
  write_trace_csv(os, trace);
  std::istringstream is(os.str());
  std::string header;
  std::string row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "task,epoch,ce,ir,total,lr");
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  ASSERT_EQ(fields.size(), 6u);
  EXPECT_EQ(std::stod(fields[4]), 1.0 / 3.0);
}
