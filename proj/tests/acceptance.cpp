// End-to-end acceptance checks. One PASS/FAIL/SKIP line per criterion.
//
//   acceptance [--awa2 BUNDLE_DIR] [--only N]
//
// Exit status is 1 if any criterion fails, except criterion 4 whose literal
// per-item band cannot hold for independent trials (see README); its line
// still reads FAIL and carries the measured numbers.

#include "mainzsl/errors.hpp"
#include "mainzsl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

using namespace mainzsl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  enum Status { kPass, kFail, kSkip } status = kFail;
  std::string detail;
  bool known_limitation = false;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(detail), false}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome degree_bound() {
  const auto t0 = Clock::now();
  double worst_above = 0.0;
  double weakest_at = 1.0;
  bool ok = true;
  for (int depth = 1; depth <= 3; ++depth) {
    for (int dim = 1; dim <= 3; ++dim) {
      Rng rng(derive_seed(static_cast<std::uint64_t>(10 * depth + dim), 0));
      ModelConfig c;
      c.attr_dim = dim;
      c.feature_dim = 2;
      c.hidden_dim = dim;
      c.depth = depth;
      c.sia_mode = SiaMode::kPolynomialKernel;
      const MainModel m = init_model(c, rng);
      const Vector dir = normal_matrix(dim, 1, 1.0, rng).col(0).normalized();
      const Vector base = uniform_matrix(dim, 1, -0.5, 0.5, rng).col(0);
      const int bound = 1 << depth;
      // Differences of a polynomial are exact for any step; a unit step keeps
      // the leading term well above rounding.
      const DegreeReport r = polynomial_degree_probe(m.encoder, dir, base, bound + 1, 1.0);
      double strongest_at = 0.0;
      for (std::size_t k = 0; k < r.degrees.size(); ++k) {
        worst_above = std::max(worst_above, r.rel_above_bound[k]);
        strongest_at = std::max(strongest_at, r.rel_at_bound[k]);
        if (r.rel_above_bound[k] >= 1e-6) ok = false;
      }
      weakest_at = std::min(weakest_at, strongest_at);
      if (strongest_at < 1e-6) ok = false;
    }
  }
  const double secs = seconds_since(t0);
  return verdict(ok && secs < 5.0,
                 fmt("max rel (2^L+1)-th diff %.2e < 1e-6, weakest output 2^L-th diff %.2e >= 1e-6, %.2fs < 5s", worst_above,
                     weakest_at, secs));
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto rows = gradcheck_suite();
  double worst = 0.0;
  bool ok = rows.size() == 16;
  for (const auto& r : rows) {
    worst = std::max(worst, r.report.max_rel_error);
    ok = ok && r.passed;
  }
  const double secs = seconds_since(t0);
  return verdict(ok && worst < 1e-4 && secs < 10.0,
                 fmt("%zu variants, max rel err %.2e < 1e-4, %.2fs < 10s", rows.size(), worst, secs));
}

Outcome reptile_identity() {
  RunConfig c = synthetic_preset();
  c.synth->samples_per_class = 40;
  const DatasetBundle b = resolve_data(c);
  const TaskView view = build_stream(c, b).views.front();
  ModelConfig mc = c.model_config(b.attr_dim(), b.feature_dim());
  mc.hidden_dim = 32;
  mc.regressor_hidden = 16;
  Rng init_rng(1);
  MainModel reptile = init_model(mc, init_rng);
  MainModel sgd = reptile;

  TrainConfig t;
  t.meta_mode = MetaMode::kReptilePlain;
  t.inner_optimizer = InnerOptimizer::kSgd;
  t.inner_steps = 1;
  t.inner_lr = 1e-3;
  t.meta_lr = 1.0;
  AdamState unused;
  MetaState meta;
  Rng batch_rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, view.train_set.size() - 1);
  const Matrix seen_attrs = view.seen_attributes();
  double worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    std::vector<std::size_t> rows(32);
    for (auto& r : rows) r = pick(batch_rng);
    const TrainBatch batch = make_batch(view.train_set, rows, view.seen_ids, seen_attrs);

    MainModel adapted = inner_update(reptile, batch, t, unused);
    reptile_step(reptile, adapted, meta, t, t.meta_lr);

    const LossAndGrads lg = joint_loss_and_grads(batch, sgd, t.lambda, NormMode::kTrain);
    sgd_update(sgd.parameters(), lg.grads, t.inner_lr);

    const ParamList pa = reptile.parameters();
    const ParamList pb = sgd.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      worst = std::max(worst, (*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff());
    }
  }
  return verdict(worst < 1e-12, fmt("max |reptile - sgd| over 100 steps %.3e < 1e-12", worst));
}

Outcome reservoir_uniformity() {
  constexpr int kItems = 1000;
  constexpr int kTrials = 500;
  std::vector<int> kept(kItems, 0);
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(trial), 2));
    Reservoir r;
    r.capacity = 100;
    for (int i = 0; i < kItems; ++i) reservoir_offer(r, {RowVector::Constant(1, i), 0, 1}, rng);
    for (const auto& item : r.items) ++kept[static_cast<std::size_t>(item.feature(0))];
  }
  int outside = 0;
  double lo = 1.0;
  double hi = 0.0;
  double mean = 0.0;
  for (int k : kept) {
    const double f = static_cast<double>(k) / kTrials;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    mean += f / kItems;
    if (std::abs(f - 0.1) > 0.02) ++outside;
  }
  const double sd = std::sqrt(0.1 * 0.9 / kTrials);
  Outcome o = verdict(outside == 0, fmt("per-item retention in [%.3f, %.3f], mean %.4f; %d/%d items outside 0.10+-0.02 "
                                        "(binomial sd %.4f predicts ~13%% outside)",
                                        lo, hi, mean, outside, kItems, sd));
  o.known_limitation = true;
  return o;
}

Outcome metric_oracles() {
  auto row = [](int t, double s, double u) {
    TaskMetrics m;
    m.task_id = t;
    m.seen_acc = s;
    m.unseen_acc = u;
    m.harmonic = harmonic_mean(s, u);
    return m;
  };
  const MetricsReport r = continual_metrics_fixed({row(1, 80, 40), row(2, 60, 60), row(3, 95, 0)}, 3);
  const double expected_h = (2.0 * 80.0 * 40.0 / 120.0 + 60.0) / 2.0;
  const bool fixed_ok = std::abs(r.mSA - 70.0) <= 1e-9 && std::abs(r.mUA - 50.0) <= 1e-9 &&
                        std::abs(r.mH - expected_h) <= 1e-9 && std::abs(r.mH - 56.67) < 5e-3;
  const bool h_ok = harmonic_mean(60.0, 40.0) == 48.0;
  std::vector<int> labels(10, 0);
  labels.push_back(1);
  std::vector<int> pred(10, 0);
  pred[0] = 1;
  pred.push_back(1);
  const std::vector<int> ids{0, 1};
  const double macro = per_class_accuracy(pred, labels, ids);
  const double micro = sample_accuracy(pred, labels);
  const bool macro_ok = macro == 95.0 && micro == 1000.0 / 11.0;
  return verdict(fixed_ok && h_ok && macro_ok,
                 fmt("mSA %.9f mUA %.9f mH %.9f; H(60,40)=%.17g; macro %.6f vs micro %.6f", r.mSA, r.mUA, r.mH,
                     harmonic_mean(60.0, 40.0), macro, micro));
}

RunConfig gzsl_config(std::uint64_t seed) {
  RunConfig c = synthetic_preset();
  c.protocol = Protocol::kGzsl;
  c.seed = seed;
  return c;
}

Outcome synthetic_gzsl(std::string* report_json) {
  const RunConfig c = gzsl_config(0);
  const auto t0 = Clock::now();
  const DatasetBundle b = resolve_data(c);
  const RunResult r = run_experiment(c, b);
  const double secs = seconds_since(t0);
  *report_json = r.report.to_json().dump();
  return verdict(r.report.mUA >= 90.0 && r.report.mH >= 80.0 && secs < 60.0,
                 fmt("mSA %.2f, mUA %.2f >= 90, mH %.2f >= 80, %.1fs < 60s", r.report.mSA, r.report.mUA, r.report.mH,
                     secs));
}

Outcome replay_efficacy() {
  double with = 0.0;
  double without = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    RunConfig c = synthetic_preset();
    c.protocol = Protocol::kDynamic;
    c.num_tasks = 4;
    c.seed = seed;
    const DatasetBundle b = resolve_data(c);
    const double on = run_experiment(c, b).report.mH;
    c.reservoir_b = 0;
    const double off = run_experiment(c, b).report.mH;
    with += on / 3.0;
    without += off / 3.0;
    per_seed += fmt(" [%.1f vs %.1f]", on, off);
  }
  return verdict(with - without >= 10.0,
                 fmt("mean mhM_D default B %.2f vs B=0 %.2f, gain %.2f >= 10;%s", with, without, with - without,
                     per_seed.c_str()));
}

Outcome ir_direction() {
  double on = 0.0;
  double off = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig c = gzsl_config(seed);
    const DatasetBundle b = resolve_data(c);
    on += run_experiment(c, b).report.mH / 5.0;
    c.ir = false;
    off += run_experiment(c, b).report.mH / 5.0;
  }
  return verdict(on >= off - 1.0, fmt("mean mH IR on %.2f >= IR off %.2f - 1", on, off));
}

Outcome awa2_reproduction(const std::string& path) {
  if (path.empty()) return {Outcome::kSkip, "no AWA2 bundle given (--awa2 DIR)", false};
  RunConfig c;
  c.bundle_path = path;
  c.protocol = Protocol::kGzsl;
  const auto t0 = Clock::now();
  const DatasetBundle b = resolve_data(c);
  const RunResult r = run_experiment(c, b);
  const double secs = seconds_since(t0);
  return verdict(std::abs(r.report.mH - 76.7) <= 3.0,
                 fmt("mH %.2f within 76.7 +- 3.0 (mSA %.2f, mUA %.2f, %.0fs)", r.report.mH, r.report.mSA,
                     r.report.mUA, secs));
}

Outcome determinism(const std::string& first_json) {
  const RunConfig c = gzsl_config(0);
  const std::string second = run_experiment(c, resolve_data(c)).report.to_json().dump();
  return verdict(!first_json.empty() && first_json == second,
                 fmt("two synthetic GZSL runs give %s MetricsReport JSON (%zu bytes)",
                     first_json == second ? "identical" : "different", second.size()));
}

}  // namespace

int main(int argc, char** argv) {
  std::string awa2;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--awa2") == 0 && i + 1 < argc) {
      awa2 = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--awa2 BUNDLE_DIR] [--only N]\n", argv[0]);
      return 2;
    }
  }

  std::string gzsl_json;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"polynomial degree bound", degree_bound},
      {"gradient fidelity", gradient_fidelity},
      {"reptile/sgd identity", reptile_identity},
      {"reservoir uniformity", reservoir_uniformity},
      {"metric oracles", metric_oracles},
      {"synthetic gzsl", [&] { return synthetic_gzsl(&gzsl_json); }},
      {"replay efficacy", replay_efficacy},
      {"ir ablation direction", ir_direction},
      {"awa2 reproduction", [&] { return awa2_reproduction(awa2); }},
      {"determinism",
       [&] {
         if (gzsl_json.empty()) synthetic_gzsl(&gzsl_json);
         return determinism(gzsl_json);
       }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::kFail, std::string("error: ") + e.what(), false};
    }
    const char* tag = o.status == Outcome::kPass ? "PASS" : o.status == Outcome::kSkip ? "SKIP" : "FAIL";
    std::printf("%s %2d %-24s %s%s\n", tag, id, criteria[i].first, o.detail.c_str(),
                o.status == Outcome::kFail && o.known_limitation ? " [known limitation]" : "");
    std::fflush(stdout);
    if (o.status == Outcome::kFail && !o.known_limitation) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
