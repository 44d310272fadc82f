#include "mainzsl/errors.hpp"
#include "mainzsl/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace mainzsl;
namespace fs = std::filesystem;

namespace {

RunConfig quick_config(Protocol protocol) {
  RunConfig c = synthetic_preset();
  c.synth->samples_per_class = 20;
  c.hidden_dim = 16;
  c.regressor_hidden = 8;
  c.train.epochs_per_task = 3;
  c.train.inner_steps = 2;
  c.train.batch_size = 32;
  c.protocol = protocol;
  if (protocol == Protocol::kFixed) {
    c.synth->num_seen = c.synth->num_classes;
    c.num_tasks = 4;
  } else if (protocol == Protocol::kDynamic) {
    c.num_tasks = 4;
  }
  return c;
}

std::vector<double> flat_params(MainModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.value->data(), p.value->data() + p.value->size());
  return out;
}

}  // namespace

TEST(DeriveSeed, StreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    for (std::uint64_t stream = 0; stream < 12; ++stream) seen.insert(derive_seed(s, stream));
  }
  EXPECT_EQ(seen.size(), 48u);
  EXPECT_EQ(derive_seed(3, 1), derive_seed(3, 1));
}

TEST(Run, GzslDeterministic) {
  const RunConfig c = quick_config(Protocol::kGzsl);
  const DatasetBundle b = resolve_data(c);
  RunResult a = run_experiment(c, b);
  RunResult again = run_experiment(c, b);
  EXPECT_EQ(a.report.to_json().dump(), again.report.to_json().dump());
  EXPECT_EQ(flat_params(a.model), flat_params(again.model));
  EXPECT_EQ(a.trace.size(), 3u);
  EXPECT_EQ(a.reservoir_capacity, 0u);
  EXPECT_EQ(a.report.per_task.size(), 1u);
}

TEST(Run, FixedProtocolDropsLastTask) {
  const RunConfig c = quick_config(Protocol::kFixed);
  const DatasetBundle b = resolve_data(c);
  int callbacks = 0;
  RunResult r = run_experiment(c, b, [&](const TaskMetrics&, const std::vector<EpochRecord>& trace) {
    ++callbacks;
    EXPECT_EQ(trace.size(), 3u);
  });
  EXPECT_EQ(callbacks, 4);
  EXPECT_EQ(r.report.per_task.size(), 3u);
  EXPECT_EQ(r.all_tasks.size(), 4u);
  EXPECT_EQ(r.reservoir_capacity, 10u * 20u);
  EXPECT_EQ(r.manifest["tasks"].size(), 4u);
}

TEST(Run, DynamicDefaultsAndBudget) {
  RunConfig c = quick_config(Protocol::kDynamic);
  c.reservoir_b = 2;
  const DatasetBundle b = resolve_data(c);
  const TaskStream s = build_stream(c, b);
  ASSERT_EQ(s.num_tasks(), 4);
  EXPECT_EQ(s.views.back().seen_ids.size(), 15u);
  EXPECT_EQ(s.views.back().unseen_ids.size(), 5u);
  RunResult r = run_experiment(c, b);
  EXPECT_EQ(r.report.per_task.size(), 4u);
  EXPECT_EQ(r.reservoir_capacity, 2u * 15u);
}

TEST(Run, ConfigErrorsSurface) {
  RunConfig c = quick_config(Protocol::kGzsl);
  c.num_tasks = 3;
  const DatasetBundle b = resolve_data(quick_config(Protocol::kGzsl));
  EXPECT_THROW(run_experiment(c, b), ConfigError);
  RunConfig fixed = quick_config(Protocol::kFixed);
  fixed.synth->num_seen = 15;  // unseen classes have no training rows
  EXPECT_THROW(run_experiment(fixed, resolve_data(fixed)), ProtocolError);
}

TEST(Checkpoint, RoundTrip) {
  const fs::path path = fs::temp_directory_path() / "mainzsl_checkpoint_roundtrip.bin";
  const RunConfig c = quick_config(Protocol::kGzsl);
  const DatasetBundle b = resolve_data(c);
  RunResult r = run_experiment(c, b);
  save_checkpoint(r.model, path);
  Rng rng(123);
  MainModel fresh = init_model(c.model_config(b.attr_dim(), b.feature_dim()), rng);
  load_checkpoint(fresh, path);
  EXPECT_EQ(flat_params(fresh), flat_params(r.model));
  EXPECT_EQ(fresh.encoder.bn.running_mean, r.model.encoder.bn.running_mean);
  EXPECT_EQ(fresh.encoder.bn.running_var, r.model.encoder.bn.running_var);
  EXPECT_EQ(gzsl_evaluate(fresh, build_stream(c, b).views[0]).to_json(), r.report.to_json());

  ModelConfig other = c.model_config(b.attr_dim(), b.feature_dim());
  other.hidden_dim = 17;
  MainModel wrong = init_model(other, rng);
  EXPECT_THROW(load_checkpoint(wrong, path), DataError);
  fs::remove(path);
}

TEST(Ablation, IrAxisLabels) {
  const auto v = ablation_variants(synthetic_preset(), {"ir"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].label, "MAIN");
  EXPECT_EQ(v[1].label, "MAIN w/o IR");
  EXPECT_FALSE(v[1].config.ir);
}

TEST(Ablation, DepthAxisWithPolynomialKernel) {
  RunConfig base = synthetic_preset();
  base.sia_mode = SiaMode::kPolynomialKernel;
  const auto v = ablation_variants(base, {"depth"});
  ASSERT_EQ(v.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(v[static_cast<std::size_t>(i)].config.depth, i + 1);
    EXPECT_EQ(v[static_cast<std::size_t>(i)].config.sia_mode, SiaMode::kPolynomialKernel);
  }
  EXPECT_EQ(v[2].label, "MAIN L=3");
}

TEST(Ablation, ReservoirSweepAndCrossProduct) {
  const auto r = ablation_variants(synthetic_preset(), {"reservoir_B"});
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r[4].config.reservoir_b, 14);
  const auto x = ablation_variants(synthetic_preset(), {"sg", "meta", "sia_mode"});
  EXPECT_EQ(x.size(), 8u);
  std::set<std::string> labels;
  for (const auto& v : x) labels.insert(v.label);
  EXPECT_EQ(labels.size(), 8u);
  EXPECT_THROW(ablation_variants(synthetic_preset(), {"dropout"}), ConfigError);
}

TEST(Gradcheck, AllVariantsPass) {
  const auto rows = gradcheck_suite();
  ASSERT_EQ(rows.size(), 16u);
  std::set<std::tuple<int, int, int>> combos;
  for (const auto& r : rows) {
    EXPECT_TRUE(r.passed) << to_string(r.sia_mode) << " L=" << r.depth << " " << to_string(r.head)
                          << " bn=" << r.batch_norm << " rel=" << r.report.max_rel_error;
    EXPECT_LT(r.report.max_rel_error, 1e-4);
    combos.insert({static_cast<int>(r.sia_mode), r.depth, static_cast<int>(r.head)});
  }
  EXPECT_EQ(combos.size(), 8u);
}

TEST(Gradcheck, FlippedIrSignFailsWithNamedParameter) {
  GradcheckOptions o;
  o.flip_ir_sign = true;
  const auto rows = gradcheck_suite(o);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.passed);
    EXPECT_FALSE(r.report.worst_param.empty());
  }
}

TEST(Run, RegressorInvertsTrainedEncoder) {
  const RunConfig c = synthetic_preset();
  const DatasetBundle b = resolve_data(c);
  RunResult r = run_experiment(c, b);
  const Matrix seen = build_stream(c, b).views[0].seen_attributes();
  const Matrix back = inverse_regress_rows(encode_attributes(seen, r.model.encoder), r.model.regressor);
  const double mse = (back - seen).rowwise().squaredNorm().mean();
  EXPECT_LT(mse, 0.01);
}
