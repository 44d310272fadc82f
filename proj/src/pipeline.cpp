#include "mainzsl/pipeline.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>

namespace mainzsl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DatasetBundle resolve_data(const RunConfig& config) {
  DatasetBundle bundle = config.synth ? synth_generate(*config.synth) : load_bundle(config.bundle_path);
  if (config.l2_normalize) l2_normalize_attributes(bundle);
  return bundle;
}

namespace {

int known_task_count(const std::string& dataset) {
  std::string key = dataset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::toupper(c); });
  static const std::map<std::string, int> kTasks = {{"AWA1", 5}, {"AWA2", 5}, {"CUB", 20}, {"APY", 4}, {"SUN", 15}};
  auto it = kTasks.find(key);
  return it == kTasks.end() ? 0 : it->second;
}

}  // namespace

TaskStream build_stream(const RunConfig& config, const DatasetBundle& bundle) {
  const std::optional<std::uint64_t> shuffle =
      config.shuffle_classes ? std::optional<std::uint64_t>(derive_seed(config.seed, 3)) : std::nullopt;
  if (config.protocol == Protocol::kGzsl) return build_gzsl_stream(bundle);

  int k = config.num_tasks;
  if (config.protocol == Protocol::kFixed) {
    if (k == 0) k = config.task_sizes.empty() ? known_task_count(bundle.name) : static_cast<int>(config.task_sizes.size());
    if (k == 0) throw ConfigError("fixed protocol: set num_tasks for dataset '" + bundle.name + "'");
    return build_fixed_stream(bundle, k, shuffle, config.task_sizes);
  }

  if (!config.seen_counts.empty()) return build_dynamic_stream(bundle, config.seen_counts, config.unseen_counts, shuffle);
  if (k == 0) k = known_task_count(bundle.name);
  if (k == 0) throw ConfigError("dynamic protocol: set num_tasks for dataset '" + bundle.name + "'");
  const std::vector<int> seen = balanced_counts(static_cast<int>(bundle.seen_ids.size()), k, true);
  const std::vector<int> unseen = balanced_counts(static_cast<int>(bundle.unseen_ids.size()), k, false);
  return build_dynamic_stream(bundle, seen, unseen, shuffle);
}

RunResult run_experiment(const RunConfig& config, const DatasetBundle& bundle, const TaskCallback& on_task) {
  config.validate();
  const TaskStream stream = build_stream(config, bundle);
  const TrainConfig train = config.effective_train();

  Rng model_rng(derive_seed(config.seed, 0));
  RunResult result;
  result.model = init_model(config.model_config(bundle.attr_dim(), bundle.feature_dim()), model_rng);
  result.manifest = stream.manifest();

  TrainerState state(derive_seed(config.seed, 1));
  Rng replay_rng(derive_seed(config.seed, 2));
  Reservoir reservoir;
  if (stream.protocol != Protocol::kGzsl) {
    reservoir.capacity = static_cast<std::size_t>(config.effective_reservoir_b(bundle.name)) *
                         static_cast<std::size_t>(stream.budget_classes);
  }
  result.reservoir_capacity = reservoir.capacity;

  for (const TaskView& view : stream.views) {
    std::vector<EpochRecord> trace = train_task(result.model, view, reservoir, train, state);
    for (std::size_t i = 0; i < view.train_set.size(); ++i) {
      ReplayItem item;
      item.feature = view.train_set.features.row(static_cast<Eigen::Index>(i));
      item.label = view.train_set.labels[i];
      item.task_id = view.task_id;
      reservoir_offer(reservoir, std::move(item), replay_rng);
    }
    TaskMetrics m;
    const bool evaluable = !view.test_set.empty();
    if (evaluable) {
      m = evaluate_view(result.model, view);
      result.all_tasks.push_back(m);
    }
    if (on_task) on_task(m, trace);
    result.trace.insert(result.trace.end(), trace.begin(), trace.end());
  }

  switch (stream.protocol) {
    case Protocol::kGzsl:
      result.report = gzsl_evaluate(result.model, stream.views.front());
      break;
    case Protocol::kFixed:
      result.report = continual_metrics_fixed(result.all_tasks, stream.num_tasks());
      break;
    case Protocol::kDynamic:
      result.report = continual_metrics_dynamic(result.all_tasks, stream.num_tasks());
      break;
  }
  return result;
}

namespace {

struct CheckpointEntry {
  std::string name;
  Matrix* value;
};

std::vector<CheckpointEntry> checkpoint_entries(MainModel& model, Matrix& mean, Matrix& var) {
  std::vector<CheckpointEntry> out;
  for (const ParamRef& p : model.parameters()) out.push_back({p.name, p.value});
  if (model.encoder.use_batch_norm) {
    out.push_back({"encoder.bn.running_mean", &mean});
    out.push_back({"encoder.bn.running_var", &var});
  }
  return out;
}

template <typename T>
void put(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& where) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError(where + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

constexpr char kCkptMagic[8] = {'M', 'A', 'I', 'N', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(MainModel& model, const std::filesystem::path& path) {
  Matrix mean = model.encoder.bn.running_mean;
  Matrix var = model.encoder.bn.running_var;
  const auto entries = checkpoint_entries(model, mean, var);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os.write(kCkptMagic, 8);
  put<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(e.value->rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(e.value->cols()));
    for (Eigen::Index i = 0; i < e.value->size(); ++i) put<double>(os, e.value->data()[i]);
  }
  if (!os) throw DataError(path.string() + ": write failed");
}

void load_checkpoint(MainModel& model, const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(where + ": cannot open checkpoint");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0) throw DataError(where + ": bad checkpoint magic");
  std::map<std::string, Matrix> stored;
  const auto count = take<std::uint64_t>(is, where);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = take<std::uint32_t>(is, where);
    if (len > 4096) throw DataError(where + ": corrupt entry name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError(where + ": truncated checkpoint");
    const auto rows = take<std::uint64_t>(is, where);
    const auto cols = take<std::uint64_t>(is, where);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = take<double>(is, where);
    stored.emplace(std::move(name), std::move(m));
  }
  Matrix mean = model.encoder.bn.running_mean;
  Matrix var = model.encoder.bn.running_var;
  for (const auto& e : checkpoint_entries(model, mean, var)) {
    auto it = stored.find(e.name);
    if (it == stored.end()) throw DataError(where + ": missing entry " + e.name);
    if (it->second.rows() != e.value->rows() || it->second.cols() != e.value->cols()) {
      throw DataError(where + ": shape mismatch for " + e.name);
    }
    *e.value = it->second;
  }
  if (model.encoder.use_batch_norm) {
    model.encoder.bn.running_mean = mean.row(0);
    model.encoder.bn.running_var = var.row(0);
  }
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::vector<std::string>& axes,
                                               const std::vector<int>& reservoir_values,
                                               const std::vector<int>& depth_values) {
  static const std::vector<std::string> kAxes = {"sg", "ir", "meta", "sia_mode", "depth", "reservoir_B"};
  for (const auto& a : axes) {
    if (std::find(kAxes.begin(), kAxes.end(), a) == kAxes.end()) {
      throw ConfigError("unknown ablation axis '" + a + "' (expected sg, ir, meta, sia_mode, depth, reservoir_B)");
    }
  }
  struct Partial {
    std::vector<std::string> removed;
    std::vector<std::string> tags;
    std::vector<std::pair<std::string, std::string>> settings;
    RunConfig config;
  };
  std::vector<Partial> acc{{{}, {}, {}, base}};
  for (const auto& axis : axes) {
    std::vector<Partial> next;
    for (const Partial& p : acc) {
      auto toggle = [&](const std::string& name, bool RunConfig::*field) {
        for (bool on : {true, false}) {
          Partial q = p;
          q.config.*field = on;
          if (!on) q.removed.push_back(name);
          q.settings.emplace_back(axis, on ? "on" : "off");
          next.push_back(std::move(q));
        }
      };
      if (axis == "sg") {
        toggle("SG", &RunConfig::self_gating);
      } else if (axis == "ir") {
        toggle("IR", &RunConfig::ir);
      } else if (axis == "meta") {
        toggle("meta", &RunConfig::meta);
      } else if (axis == "sia_mode") {
        for (SiaMode m : {SiaMode::kSelfGating, SiaMode::kPolynomialKernel}) {
          Partial q = p;
          q.config.sia_mode = m;
          const std::string v = m == SiaMode::kSelfGating ? "sg" : "pk";
          q.tags.push_back(m == SiaMode::kSelfGating ? "SG" : "PK");
          q.settings.emplace_back(axis, v);
          next.push_back(std::move(q));
        }
      } else if (axis == "depth") {
        for (int d : depth_values) {
          Partial q = p;
          q.config.depth = d;
          q.tags.push_back("L=" + std::to_string(d));
          q.settings.emplace_back(axis, std::to_string(d));
          next.push_back(std::move(q));
        }
      } else {
        for (int b : reservoir_values) {
          Partial q = p;
          q.config.reservoir_b = b;
          q.tags.push_back("B=" + std::to_string(b));
          q.settings.emplace_back(axis, std::to_string(b));
          next.push_back(std::move(q));
        }
      }
    }
    acc = std::move(next);
  }
  std::vector<AblationVariant> out;
  for (Partial& p : acc) {
    std::string label = "MAIN";
    if (!p.removed.empty()) {
      label += " w/o ";
      for (std::size_t i = 0; i < p.removed.size(); ++i) label += (i ? "/" : "") + p.removed[i];
    }
    for (const auto& t : p.tags) label += " " + t;
    out.push_back({label, std::move(p.settings), std::move(p.config)});
  }
  return out;
}

std::vector<GradcheckRow> gradcheck_suite(const GradcheckOptions& options) {
  constexpr int kClasses = 4;
  constexpr int kAttr = 6;
  constexpr int kFeat = 8;
  constexpr int kBatch = 6;
  Rng data_rng(derive_seed(options.seed, 10));
  TrainBatch batch;
  batch.class_attributes = uniform_matrix(kClasses, kAttr, -1.0, 1.0, data_rng);
  batch.features = normal_matrix(kBatch, kFeat, 1.0, data_rng);
  for (int i = 0; i < kBatch; ++i) batch.labels.push_back(i % kClasses);

  std::vector<GradcheckRow> rows;
  for (SiaMode mode : {SiaMode::kPolynomialKernel, SiaMode::kSelfGating}) {
    for (int depth : {1, 2}) {
      for (HeadKind head : {HeadKind::kCosine, HeadKind::kDot}) {
        for (bool bn : {true, false}) {
          ModelConfig mc;
          mc.attr_dim = kAttr;
          mc.feature_dim = kFeat;
          mc.hidden_dim = 5;
          mc.regressor_hidden = 4;
          mc.depth = depth;
          mc.sia_mode = mode;
          mc.use_batch_norm = bn;
          mc.head = head;
          mc.init_scale = 2.0;
          Rng rng(derive_seed(options.seed, 11));
          MainModel model = init_model(mc, rng);
          // Non-trivial affine batch-norm parameters.
          model.encoder.bn.gamma = uniform_matrix(1, mc.hidden_dim, 0.5, 1.5, rng);
          model.encoder.bn.beta = uniform_matrix(1, mc.hidden_dim, -0.5, 0.5, rng);

          LossAndGrads lg = joint_loss_and_grads(batch, model, options.lambda, NormMode::kTrain);
          GradList analytic = lg.grads;
          if (options.flip_ir_sign && options.lambda > 0.0) {
            LossAndGrads ce_only = joint_loss_and_grads(batch, model, 0.0, NormMode::kTrain);
            for (std::size_t i = 0; i < analytic.size(); ++i) {
              const Matrix ir_part = lg.grads[i] - ce_only.grads[i];
              analytic[i] = ce_only.grads[i] - ir_part;
            }
          }
          const ParamList params = model.parameters();
          auto loss = [&]() { return joint_loss(batch, model, options.lambda, NormMode::kTrain).total; };
          GradcheckRow row;
          row.sia_mode = mode;
          row.depth = depth;
          row.head = head;
          row.batch_norm = bn;
          row.report = grad_check(loss, params, analytic, options.step);
          row.passed = row.report.max_rel_error < options.tolerance;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

}  // namespace mainzsl
