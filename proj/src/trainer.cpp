#include "mainzsl/trainer.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <unordered_map>

namespace mainzsl {

const char* to_string(MetaMode mode) {
  switch (mode) {
    case MetaMode::kReptileAdam:
      return "reptile_adam";
    case MetaMode::kReptilePlain:
      return "reptile_plain";
    case MetaMode::kNoMeta:
      return "no_meta";
  }
  return "?";
}

const char* to_string(InnerOptimizer opt) { return opt == InnerOptimizer::kAdam ? "adam" : "sgd"; }

MetaMode parse_meta_mode(const std::string& text) {
  if (text == "reptile_adam") return MetaMode::kReptileAdam;
  if (text == "reptile_plain") return MetaMode::kReptilePlain;
  if (text == "no_meta") return MetaMode::kNoMeta;
  throw ConfigError("unknown meta mode '" + text + "' (expected reptile_adam, reptile_plain or no_meta)");
}

InnerOptimizer parse_inner_optimizer(const std::string& text) {
  if (text == "adam") return InnerOptimizer::kAdam;
  if (text == "sgd") return InnerOptimizer::kSgd;
  throw ConfigError("unknown inner optimizer '" + text + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(inner_lr > 0.0)) throw ConfigError("inner_lr must be > 0");
  if (!(meta_lr > 0.0)) throw ConfigError("meta_lr must be > 0");
  if (inner_steps < 1) throw ConfigError("inner_steps (k) must be >= 1");
  if (epochs_per_task < 1) throw ConfigError("epochs_per_task must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (meta_mode == MetaMode::kReptileAdam && epochs_per_task < 2) {
    throw ConfigError("reptile_adam decays its rate over epochs and needs epochs_per_task >= 2");
  }
}

double lr_schedule(int epoch, int total_epochs, double base_lr) {
  if (total_epochs < 2) throw ConfigError("lr_schedule: total_epochs must be >= 2");
  if (epoch < 0 || epoch >= total_epochs) throw ConfigError("lr_schedule: epoch out of range");
  return base_lr * (1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs - 1));
}

namespace {

void optimizer_step(const ParamList& params, const GradList& grads, const TrainConfig& config, AdamState& state) {
  if (config.inner_optimizer == InnerOptimizer::kAdam) {
    adam_update(params, grads, state, config.inner_lr);
  } else {
    sgd_update(params, grads, config.inner_lr);
  }
}

}  // namespace

MainModel inner_update(const MainModel& params, const TrainBatch& batch, const TrainConfig& config,
                       AdamState& inner_state, LossBreakdown* first_loss) {
  if (batch.features.rows() == 0) throw DataError("inner_update: empty batch");
  MainModel adapted = params;
  const ParamList plist = adapted.parameters();
  for (int step = 0; step < config.inner_steps; ++step) {
    LossAndGrads lg = joint_loss_and_grads(batch, adapted, config.lambda, NormMode::kTrain);
    if (step == 0 && first_loss) *first_loss = lg.loss;
    optimizer_step(plist, lg.grads, config, inner_state);
  }
  return adapted;
}

void reptile_step(MainModel& params, const MainModel& adapted, MetaState& meta, const TrainConfig& config, double lr) {
  ParamList current = params.parameters();
  const ParamList target = const_cast<MainModel&>(adapted).parameters();
  if (current.size() != target.size()) throw DimensionError("reptile_step: parameter lists differ");
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (current[i].value->rows() != target[i].value->rows() || current[i].value->cols() != target[i].value->cols()) {
      throw DimensionError("reptile_step: shape mismatch at " + current[i].name);
    }
  }
  if (config.meta_mode == MetaMode::kReptileAdam) {
    GradList pseudo;
    pseudo.reserve(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) pseudo.push_back(*current[i].value - *target[i].value);
    adam_update(current, pseudo, meta.outer, lr);
  } else {
    for (std::size_t i = 0; i < current.size(); ++i) {
      *current[i].value = (1.0 - lr) * *current[i].value + lr * *target[i].value;
    }
  }
  params.encoder.bn.running_mean = adapted.encoder.bn.running_mean;
  params.encoder.bn.running_var = adapted.encoder.bn.running_var;
  for (const auto& p : current) {
    if (!p.value->allFinite()) throw ContractError("reptile_step: non-finite value in " + p.name);
  }
}

TrainBatch make_batch(const FeatureDataset& pool, std::span<const std::size_t> rows, const std::vector<int>& seen_ids,
                      const Matrix& seen_attributes) {
  std::unordered_map<int, int> local;
  for (std::size_t i = 0; i < seen_ids.size(); ++i) local.emplace(seen_ids[i], static_cast<int>(i));
  TrainBatch b;
  b.class_attributes = seen_attributes;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), pool.features.cols());
  b.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    auto it = local.find(pool.labels[r]);
    if (it == local.end()) throw DataError("make_batch: label " + std::to_string(pool.labels[r]) + " is not a seen class");
    b.features.row(static_cast<Eigen::Index>(k)) = pool.features.row(static_cast<Eigen::Index>(r));
    b.labels.push_back(it->second);
  }
  return b;
}

std::vector<EpochRecord> train_task(MainModel& model, const TaskView& view, const Reservoir& reservoir,
                                    const TrainConfig& config, TrainerState& state) {
  config.validate();
  if (view.seen_ids.empty()) throw ProtocolError("train_task: task has no seen classes");
  const FeatureDataset pool = augmented_pool(reservoir, view.train_set, view.seen_ids);
  if (pool.empty()) throw ProtocolError("train_task: no training samples for task " + std::to_string(view.task_id));
  const Matrix seen_attrs = view.seen_attributes();

  std::vector<std::size_t> order(pool.size());
  std::vector<EpochRecord> trace;
  const ParamList plist = model.parameters();
  for (int epoch = 0; epoch < config.epochs_per_task; ++epoch) {
    state.meta.epoch = epoch;
    double lr = 0.0;
    switch (config.meta_mode) {
      case MetaMode::kReptileAdam:
        lr = lr_schedule(epoch, config.epochs_per_task, config.meta_lr);
        state.meta.multiplier = lr / config.meta_lr;
        break;
      case MetaMode::kReptilePlain:
        lr = config.meta_lr;
        break;
      case MetaMode::kNoMeta:
        lr = config.inner_lr;
        break;
    }

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    EpochRecord rec;
    rec.task = view.task_id;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0, end = 0; start < order.size(); start = end) {
      end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      // A lone trailing sample joins this batch; batch norm needs two rows.
      if (order.size() - end == 1) end = order.size();
      const TrainBatch batch =
          make_batch(pool, std::span<const std::size_t>(order.data() + start, end - start), view.seen_ids, seen_attrs);
      LossBreakdown loss;
      if (config.meta_mode == MetaMode::kNoMeta) {
        LossAndGrads lg = joint_loss_and_grads(batch, model, config.lambda, NormMode::kTrain);
        loss = lg.loss;
        optimizer_step(plist, lg.grads, config, state.inner);
      } else {
        MainModel adapted = inner_update(model, batch, config, state.inner, &loss);
        reptile_step(model, adapted, state.meta, config, lr);
      }
      rec.ce += loss.ce;
      rec.ir += loss.ir;
      rec.total += loss.total;
      ++batches;
    }
    rec.ce /= static_cast<double>(batches);
    rec.ir /= static_cast<double>(batches);
    rec.total /= static_cast<double>(batches);
    trace.push_back(rec);
  }
  return trace;
}

void write_trace_csv(std::ostream& os, const std::vector<EpochRecord>& trace) {
  os << "task,epoch,ce,ir,total,lr\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", r.task, r.epoch, r.ce, r.ir, r.total, r.lr);
    os << buf;
  }
}

}  // namespace mainzsl
