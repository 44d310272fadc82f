// mainzsl: command-line front end.
//
//   mainzsl synth     --out DIR              write a synthetic bundle
//   mainzsl train     --synth default | --bundle DIR [flags]
//   mainzsl eval      --run DIR              re-score a run's checkpoint
//   mainzsl ablate    --axes ir,meta [flags] mH per variant
//   mainzsl gradcheck                        finite-difference check of every variant
//   mainzsl convert   --features F --labels L --attributes A ... --out DIR
//
// Exit status: 0 ok, 2 configuration error, 3 data error, 4 assertion failure.

#include "mainzsl/config.hpp"
#include "mainzsl/errors.hpp"
#include "mainzsl/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace mainzsl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitAssert = 4;

// Flags shared by train and ablate. Unset flags leave the config alone.
struct RunFlags {
  std::string config_file;
  std::string bundle;
  std::string synth;
  std::optional<int> synth_classes, synth_seen, synth_attr_dim, synth_feature_dim, synth_samples;
  std::optional<double> synth_noise;
  std::optional<std::string> synth_map;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::string> protocol;
  std::optional<int> tasks;
  std::vector<int> task_sizes, seen_counts, unseen_counts;
  std::optional<int> hidden_dim, depth, regressor_hidden, reservoir_b;
  std::optional<std::string> sia_mode, head, meta_mode, inner_optimizer;
  std::optional<bool> batch_norm, self_gating, ir, meta, l2_normalize, shuffle_classes;
  std::optional<double> lambda, inner_lr, meta_lr, init_scale, output_init_gain;
  std::optional<int> inner_steps, epochs_per_task, batch_size;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "RunConfig JSON; flags override its values");
    app->add_option("--bundle", bundle, "dataset bundle directory");
    app->add_option("--synth", synth, "synthetic data preset (default)");
    app->add_option("--synth-classes", synth_classes);
    app->add_option("--synth-seen", synth_seen);
    app->add_option("--synth-attr-dim", synth_attr_dim);
    app->add_option("--synth-feature-dim", synth_feature_dim);
    app->add_option("--synth-samples", synth_samples, "samples per class");
    app->add_option("--synth-noise", synth_noise);
    app->add_option("--synth-map", synth_map, "linear | mlp");
    app->add_option("--synth-seed", synth_seed);
    app->add_option("--protocol", protocol, "gzsl | fixed | dynamic");
    app->add_option("--tasks", tasks, "number of tasks K");
    app->add_option("--task-sizes", task_sizes)->delimiter(',');
    app->add_option("--seen-counts", seen_counts)->delimiter(',');
    app->add_option("--unseen-counts", unseen_counts)->delimiter(',');
    app->add_option("--hidden-dim", hidden_dim);
    app->add_option("--depth", depth);
    app->add_option("--regressor-hidden", regressor_hidden);
    app->add_option("--sia-mode", sia_mode, "sg | pk");
    app->add_option("--head", head, "cosine | dot");
    app->add_option("--batch-norm", batch_norm);
    app->add_option("--self-gating", self_gating);
    app->add_option("--ir", ir);
    app->add_option("--meta", meta);
    app->add_option("--l2-normalize", l2_normalize);
    app->add_option("--shuffle-classes", shuffle_classes);
    app->add_option("--reservoir-b", reservoir_b);
    app->add_option("--lambda", lambda);
    app->add_option("--inner-lr", inner_lr);
    app->add_option("--meta-lr", meta_lr);
    app->add_option("--init-scale", init_scale);
    app->add_option("--output-init-gain", output_init_gain, "scale of the output projection's initial weights");
    app->add_option("--inner-steps", inner_steps);
    app->add_option("--epochs-per-task", epochs_per_task);
    app->add_option("--batch-size", batch_size);
    app->add_option("--meta-mode", meta_mode, "reptile_adam | reptile_plain | no_meta");
    app->add_option("--inner-optimizer", inner_optimizer, "adam | sgd");
    app->add_option("--seed", seed);
    app->add_option("--out", out, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_file.empty()) {
      std::ifstream is(config_file);
      if (!is) throw ConfigError(config_file + ": cannot open");
      nlohmann::json j;
      try {
        is >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_file + ": " + e.what());
      }
      c = run_config_from_json(j);
    } else if (!synth.empty()) {
      c = synthetic_preset();
    }
    if (!synth.empty()) {
      if (synth != "default") throw ConfigError("unknown synthetic preset '" + synth + "'");
      if (!c.synth) c.synth = SynthSpec{};
      c.bundle_path.clear();
    }
    if (!bundle.empty()) {
      c.bundle_path = bundle;
      c.synth.reset();
    }
    if (c.synth) {
      SynthSpec& s = *c.synth;
      if (synth_classes) s.num_classes = *synth_classes;
      if (synth_seen) s.num_seen = *synth_seen;
      if (synth_attr_dim) s.attr_dim = *synth_attr_dim;
      if (synth_feature_dim) s.feature_dim = *synth_feature_dim;
      if (synth_samples) s.samples_per_class = *synth_samples;
      if (synth_noise) s.noise_sigma = *synth_noise;
      if (synth_map) s.map = parse_synth_map(*synth_map);
      if (synth_seed) s.seed = *synth_seed;
    }
    if (protocol) c.protocol = parse_protocol(*protocol);
    if (tasks) c.num_tasks = *tasks;
    if (!task_sizes.empty()) c.task_sizes = task_sizes;
    if (!seen_counts.empty()) c.seen_counts = seen_counts;
    if (!unseen_counts.empty()) c.unseen_counts = unseen_counts;
    if (hidden_dim) c.hidden_dim = *hidden_dim;
    if (depth) c.depth = *depth;
    if (regressor_hidden) c.regressor_hidden = *regressor_hidden;
    if (sia_mode) c.sia_mode = parse_sia_mode(*sia_mode);
    if (head) c.head = parse_head_kind(*head);
    if (batch_norm) c.batch_norm = *batch_norm;
    if (self_gating) c.self_gating = *self_gating;
    if (ir) c.ir = *ir;
    if (meta) c.meta = *meta;
    if (l2_normalize) c.l2_normalize = *l2_normalize;
    if (shuffle_classes) c.shuffle_classes = *shuffle_classes;
    if (reservoir_b) c.reservoir_b = *reservoir_b;
    if (lambda) c.train.lambda = *lambda;
    if (inner_lr) c.train.inner_lr = *inner_lr;
    if (meta_lr) c.train.meta_lr = *meta_lr;
    if (init_scale) c.init_scale = *init_scale;
    if (output_init_gain) c.output_init_gain = *output_init_gain;
    if (inner_steps) c.train.inner_steps = *inner_steps;
    if (epochs_per_task) c.train.epochs_per_task = *epochs_per_task;
    if (batch_size) c.train.batch_size = *batch_size;
    if (meta_mode) c.train.meta_mode = parse_meta_mode(*meta_mode);
    if (inner_optimizer) c.train.inner_optimizer = parse_inner_optimizer(*inner_optimizer);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.output_dir = out;
    c.validate();
    return c;
  }
};

fs::path output_root() {
  const char* env = std::getenv("MAINZSL_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path run_directory(const RunConfig& c, const std::string& command) {
  if (!c.output_dir.empty()) return c.output_dir;
  return output_root() / (command + "-" + to_string(c.protocol) + "-seed" + std::to_string(c.seed));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void print_summary(const MetricsReport& r) {
  std::printf("%s  mSA %.2f  mUA %.2f  mH %.2f\n", to_string(r.protocol), r.mSA, r.mUA, r.mH);
}

int cmd_synth(const std::string& out, const SynthSpec& spec) {
  DatasetBundle b = synth_generate(spec);
  write_bundle(b, out);
  std::printf("wrote %zu samples, %d classes (%zu seen) to %s\n", b.num_samples(), b.num_classes(),
              b.seen_ids.size(), out.c_str());
  return 0;
}

int cmd_train(const RunFlags& flags, bool quiet) {
  RunConfig c = flags.resolve();
  const fs::path dir = run_directory(c, "train");
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(c));

  const auto t0 = std::chrono::steady_clock::now();
  const DatasetBundle bundle = resolve_data(c);
  RunResult r = run_experiment(c, bundle, [&](const TaskMetrics& m, const std::vector<EpochRecord>& trace) {
    if (quiet) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "task %d  loss %.4f  S %.2f  U %.2f  H %.2f  (%.1fs)\n", trace.empty() ? 0 : trace.back().task,
                 trace.empty() ? 0.0 : trace.back().total, m.seen_acc, m.unseen_acc, m.harmonic, secs);
  });

  write_json(dir / "manifest.json", r.manifest);
  std::ostringstream loss;
  write_trace_csv(loss, r.trace);
  write_text(dir / "loss.csv", loss.str());
  write_json(dir / "report.json", r.report.to_json());
  write_text(dir / "report.csv", r.report.to_csv());
  save_checkpoint(r.model, dir / "checkpoint.bin");
  write_json(dir / "seed.json", {{"seed", c.seed},
                                 {"model_init", derive_seed(c.seed, 0)},
                                 {"batch_sampler", derive_seed(c.seed, 1)},
                                 {"reservoir", derive_seed(c.seed, 2)},
                                 {"class_shuffle", derive_seed(c.seed, 3)},
                                 {"reservoir_capacity", r.reservoir_capacity}});
  print_summary(r.report);
  std::printf("artifacts: %s\n", dir.string().c_str());
  return 0;
}

int cmd_eval(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::ifstream is(dir / "config.json");
  if (!is) throw DataError((dir / "config.json").string() + ": cannot open");
  nlohmann::json j;
  is >> j;
  RunConfig c = run_config_from_json(j);
  c.validate();
  const DatasetBundle bundle = resolve_data(c);
  const TaskStream stream = build_stream(c, bundle);
  Rng rng(derive_seed(c.seed, 0));
  MainModel model = init_model(c.model_config(bundle.attr_dim(), bundle.feature_dim()), rng);
  load_checkpoint(model, dir / "checkpoint.bin");

  std::vector<TaskMetrics> per_task;
  for (const TaskView& v : stream.views) {
    if (!v.test_set.empty()) per_task.push_back(evaluate_view(model, v));
  }
  MetricsReport r;
  switch (stream.protocol) {
    case Protocol::kGzsl:
      r = gzsl_evaluate(model, stream.views.front());
      break;
    case Protocol::kFixed:
      r = continual_metrics_fixed(per_task, stream.num_tasks());
      break;
    case Protocol::kDynamic:
      r = continual_metrics_dynamic(per_task, stream.num_tasks());
      break;
  }
  write_json(dir / "eval_report.json", r.to_json());
  write_text(dir / "eval_report.csv", r.to_csv());
  print_summary(r);
  return 0;
}

int cmd_ablate(const RunFlags& flags, const std::vector<std::string>& axes, const std::vector<int>& b_values,
               const std::vector<int>& depth_values) {
  RunConfig base = flags.resolve();
  const fs::path dir = run_directory(base, "ablate");
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(base));
  const DatasetBundle bundle = resolve_data(base);
  const std::vector<AblationVariant> variants = ablation_variants(base, axes, b_values, depth_values);

  std::ostringstream csv;
  csv << "variant";
  for (const auto& a : axes) csv << "," << a;
  csv << ",mSA,mUA,mH\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationVariant& v : variants) {
    RunResult r = run_experiment(v.config, bundle);
    csv << '"' << v.label << '"';
    nlohmann::json settings;
    for (const auto& [axis, value] : v.settings) {
      csv << "," << value;
      settings[axis] = value;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), ",%.2f,%.2f,%.2f\n", r.report.mSA, r.report.mUA, r.report.mH);
    csv << buf;
    rows.push_back({{"variant", v.label}, {"settings", settings}, {"report", r.report.to_json()}});
    std::printf("%-32s mH %.2f\n", v.label.c_str(), r.report.mH);
  }
  write_text(dir / "ablation.csv", csv.str());
  write_json(dir / "ablation.json", rows);
  std::printf("artifacts: %s\n", dir.string().c_str());
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& options) {
  const std::vector<GradcheckRow> rows = gradcheck_suite(options);
  bool ok = true;
  std::printf("%-4s %-2s %-7s %-3s %-12s %s\n", "sia", "L", "head", "bn", "max_rel_err", "worst");
  for (const auto& r : rows) {
    std::printf("%-4s %-2d %-7s %-3s %-12.3e %s%s\n", r.sia_mode == SiaMode::kSelfGating ? "sg" : "pk", r.depth,
                to_string(r.head), r.batch_norm ? "on" : "off", r.report.max_rel_error, r.report.worst_param.c_str(),
                r.passed ? "" : "  FAIL");
    ok = ok && r.passed;
  }
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : kExitAssert;
}

// Matrices exported as CSV, one row per line (no header).
Matrix read_csv_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(path + ": cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].size(); ++k) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
  }
  return m;
}

std::vector<long> read_index_list(const std::string& path) {
  const Matrix m = read_csv_matrix(path);
  std::vector<long> out;
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(static_cast<long>(m.data()[i]));
  return out;
}

struct ConvertArgs {
  std::string features, labels, attributes, trainval, test_seen, test_unseen, name, out;
  bool transpose_features = false;
  bool transpose_attributes = false;
};

// Fields of the common precomputed-feature archives, exported to CSV:
// features (N×d, or d×N with --transpose-features), labels (1-based class
// per sample), att (C×D, or D×C with --transpose-attributes), and the 1-based
// sample index lists trainval_loc, test_seen_loc, test_unseen_loc.
int cmd_convert(const ConvertArgs& a) {
  Matrix feats = read_csv_matrix(a.features);
  if (a.transpose_features) feats = Matrix(feats.transpose());
  Matrix att = read_csv_matrix(a.attributes);
  if (a.transpose_attributes) att = Matrix(att.transpose());
  const std::vector<long> labels = read_index_list(a.labels);
  if (static_cast<Eigen::Index>(labels.size()) != feats.rows()) {
    throw DataError("convert: " + std::to_string(labels.size()) + " labels for " + std::to_string(feats.rows()) +
                    " feature rows");
  }
  const std::vector<long> trainval = read_index_list(a.trainval);
  const std::vector<long> test_seen = read_index_list(a.test_seen);
  const std::vector<long> test_unseen = read_index_list(a.test_unseen);

  DatasetBundle b;
  b.name = a.name;
  b.attributes = att;
  for (Eigen::Index c = 0; c < att.rows(); ++c) b.class_names.push_back("class" + std::to_string(c));
  std::set<int> seen;
  std::set<int> unseen;
  std::vector<long> order;
  auto add_rows = [&](const std::vector<long>& locs, bool test, std::set<int>* classes) {
    for (long loc : locs) {
      if (loc < 1 || loc > static_cast<long>(labels.size())) {
        throw DataError("convert: sample index " + std::to_string(loc) + " out of range");
      }
      const int y = static_cast<int>(labels[static_cast<std::size_t>(loc - 1)]) - 1;
      if (test) b.test_rows.push_back(order.size());
      order.push_back(loc - 1);
      b.labels.push_back(y);
      classes->insert(y);
    }
  };
  add_rows(trainval, false, &seen);
  add_rows(test_seen, true, &seen);
  add_rows(test_unseen, true, &unseen);
  b.features.resize(static_cast<Eigen::Index>(order.size()), feats.cols());
  for (std::size_t i = 0; i < order.size(); ++i) b.features.row(static_cast<Eigen::Index>(i)) = feats.row(order[i]);
  b.seen_ids.assign(seen.begin(), seen.end());
  b.unseen_ids.assign(unseen.begin(), unseen.end());
  b.provenance = "converted from " + a.features;
  write_bundle(b, a.out);
  std::printf("wrote %zu samples, %zu seen / %zu unseen classes to %s\n", b.num_samples(), b.seen_ids.size(),
              b.unseen_ids.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute self-interaction encoder for (continual) generalized zero-shot learning"};
  app.require_subcommand(1);

  SynthSpec synth_spec;
  std::string synth_out;
  std::string synth_map = "linear";
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset bundle");
  synth->add_option("--out", synth_out, "bundle directory")->required();
  synth->add_option("--classes", synth_spec.num_classes);
  synth->add_option("--seen", synth_spec.num_seen);
  synth->add_option("--attr-dim", synth_spec.attr_dim);
  synth->add_option("--feature-dim", synth_spec.feature_dim);
  synth->add_option("--samples", synth_spec.samples_per_class, "samples per class");
  synth->add_option("--test-fraction", synth_spec.test_fraction);
  synth->add_option("--noise", synth_spec.noise_sigma);
  synth->add_option("--map", synth_map, "linear | mlp");
  synth->add_option("--seed", synth_spec.seed);

  RunFlags train_flags;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train and evaluate one configuration");
  train_flags.attach(train);
  train->add_flag("--quiet", quiet, "no per-task progress");

  std::string eval_dir;
  auto* eval = app.add_subcommand("eval", "re-score the checkpoint of a finished run");
  eval->add_option("--run", eval_dir, "run directory written by train")->required();

  RunFlags ablate_flags;
  std::vector<std::string> axes;
  std::vector<int> b_values{1, 3, 6, 9, 14};
  std::vector<int> depth_values{1, 2, 3};
  auto* ablate = app.add_subcommand("ablate", "cross-product ablation sweep");
  ablate_flags.attach(ablate);
  ablate->add_option("--axes", axes, "sg, ir, meta, sia_mode, depth, reservoir_B")->delimiter(',')->required();
  ablate->add_option("--reservoir-values", b_values)->delimiter(',');
  ablate->add_option("--depth-values", depth_values)->delimiter(',');

  GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check of every model variant");
  gradcheck->add_option("--tolerance", gc.tolerance);
  gradcheck->add_option("--lambda", gc.lambda);
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--step", gc.step, "central-difference step");
  gradcheck->add_flag("--flip-ir-sign", gc.flip_ir_sign, "fault injection: negate the IR gradient");

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "CSV exports of a precomputed-feature archive -> bundle");
  convert->add_option("--features", conv.features)->required();
  convert->add_option("--labels", conv.labels)->required();
  convert->add_option("--attributes", conv.attributes)->required();
  convert->add_option("--trainval-loc", conv.trainval)->required();
  convert->add_option("--test-seen-loc", conv.test_seen)->required();
  convert->add_option("--test-unseen-loc", conv.test_unseen)->required();
  convert->add_option("--name", conv.name, "dataset name (AWA1, AWA2, CUB, SUN, APY, ...)")->required();
  convert->add_flag("--transpose-features", conv.transpose_features);
  convert->add_flag("--transpose-attributes", conv.transpose_attributes);
  convert->add_option("--out", conv.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) {
      synth_spec.map = parse_synth_map(synth_map);
      return cmd_synth(synth_out, synth_spec);
    }
    if (*train) return cmd_train(train_flags, quiet);
    if (*eval) return cmd_eval(eval_dir);
    if (*ablate) return cmd_ablate(ablate_flags, axes, b_values, depth_values);
    if (*gradcheck) return cmd_gradcheck(gc);
    if (*convert) return cmd_convert(conv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "assertion failure: %s\n", e.what());
    return kExitAssert;
  }
  return 0;
}
