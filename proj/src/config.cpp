#include "mainzsl/config.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace mainzsl {

void RunConfig::validate() const {
  const bool has_bundle = !bundle_path.empty();
  if (has_bundle == synth.has_value()) {
    throw ConfigError("exactly one data source is required (bundle path or synthetic spec)");
  }
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be > 0");
  if (regressor_hidden < -1) throw ConfigError("regressor_hidden must be >= -1");
  if (!(output_init_gain > 0.0)) throw ConfigError("output_init_gain must be > 0");
  if (num_tasks < 0) throw ConfigError("num_tasks must be >= 0");
  if (protocol == Protocol::kGzsl && num_tasks > 1) throw ConfigError("gzsl protocol runs a single task");
  if (protocol != Protocol::kDynamic && (!seen_counts.empty() || !unseen_counts.empty())) {
    throw ConfigError("seen_counts/unseen_counts apply to the dynamic protocol only");
  }
  if (protocol != Protocol::kFixed && !task_sizes.empty()) {
    throw ConfigError("task_sizes applies to the fixed protocol only");
  }
  if (seen_counts.size() != unseen_counts.size()) {
    throw ConfigError("seen_counts and unseen_counts must have the same length");
  }
  if (synth) {
    if (synth->num_classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (synth->num_seen < 1 || synth->num_seen > synth->num_classes) throw ConfigError("synth: bad seen count");
  }
  effective_train().validate();
}

ModelConfig RunConfig::model_config(int attr_dim, int feature_dim) const {
  ModelConfig m;
  m.attr_dim = attr_dim;
  m.feature_dim = feature_dim;
  m.hidden_dim = hidden_dim;
  m.depth = self_gating ? depth : 0;
  m.sia_mode = sia_mode;
  m.use_batch_norm = batch_norm;
  m.head = head;
  m.init_scale = init_scale;
  m.regressor_hidden = regressor_hidden;
  m.output_init_gain = output_init_gain;
  return m;
}

TrainConfig RunConfig::effective_train() const {
  TrainConfig t = train;
  if (!ir) t.lambda = 0.0;
  if (!meta) t.meta_mode = MetaMode::kNoMeta;
  t.seed = seed;
  return t;
}

int default_reservoir_b(const std::string& dataset) {
  std::string key = dataset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key == "awa1" || key == "awa2" || key == "apy") return 25;
  if (key == "cub") return 10;
  if (key == "sun") return 5;
  return 10;
}

int RunConfig::effective_reservoir_b(const std::string& dataset) const {
  return reservoir_b >= 0 ? reservoir_b : default_reservoir_b(dataset);
}

RunConfig synthetic_preset() {
  RunConfig c;
  c.synth = SynthSpec{};
  c.hidden_dim = 128;
  c.regressor_hidden = 64;
  c.init_scale = 5.0;
  c.output_init_gain = 0.03;
  c.train.epochs_per_task = 45;
  c.train.inner_lr = 1e-3;
  c.train.meta_lr = 1e-3;
  return c;
}

namespace {

// Reads fields from a JSON object and remembers which keys were consumed so
// leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json* child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      if (it != j_.end()) seen_.insert(key);
      return nullptr;
    }
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

nlohmann::json to_json(const TrainConfig& t) {
  return {{"lambda", t.lambda},
          {"inner_lr", t.inner_lr},
          {"meta_lr", t.meta_lr},
          {"inner_steps", t.inner_steps},
          {"epochs_per_task", t.epochs_per_task},
          {"batch_size", t.batch_size},
          {"meta_mode", to_string(t.meta_mode)},
          {"inner_optimizer", to_string(t.inner_optimizer)}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  ObjectReader r(j, "train");
  r.get("lambda", t.lambda);
  r.get("inner_lr", t.inner_lr);
  r.get("meta_lr", t.meta_lr);
  r.get("inner_steps", t.inner_steps);
  r.get("epochs_per_task", t.epochs_per_task);
  r.get("batch_size", t.batch_size);
  std::string text;
  r.get("meta_mode", text);
  if (!text.empty()) t.meta_mode = parse_meta_mode(text);
  text.clear();
  r.get("inner_optimizer", text);
  if (!text.empty()) t.inner_optimizer = parse_inner_optimizer(text);
  r.finish();
  return t;
}

}  // namespace

nlohmann::json to_json(const SynthSpec& s) {
  return {{"num_classes", s.num_classes},
          {"num_seen", s.num_seen},
          {"attr_dim", s.attr_dim},
          {"feature_dim", s.feature_dim},
          {"samples_per_class", s.samples_per_class},
          {"test_fraction", s.test_fraction},
          {"noise_sigma", s.noise_sigma},
          {"map", s.map == SynthMap::kLinear ? "linear" : "mlp"},
          {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  ObjectReader r(j, "synth");
  r.get("num_classes", s.num_classes);
  r.get("num_seen", s.num_seen);
  r.get("attr_dim", s.attr_dim);
  r.get("feature_dim", s.feature_dim);
  r.get("samples_per_class", s.samples_per_class);
  r.get("test_fraction", s.test_fraction);
  r.get("noise_sigma", s.noise_sigma);
  std::string map;
  r.get("map", map);
  if (!map.empty()) s.map = parse_synth_map(map);
  r.get("seed", s.seed);
  r.finish();
  return s;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["bundle_path"] = c.bundle_path;
  j["synth"] = c.synth ? to_json(*c.synth) : nlohmann::json(nullptr);
  j["l2_normalize"] = c.l2_normalize;
  j["protocol"] = to_string(c.protocol);
  j["num_tasks"] = c.num_tasks;
  j["task_sizes"] = c.task_sizes;
  j["seen_counts"] = c.seen_counts;
  j["unseen_counts"] = c.unseen_counts;
  j["shuffle_classes"] = c.shuffle_classes;
  j["hidden_dim"] = c.hidden_dim;
  j["depth"] = c.depth;
  j["sia_mode"] = c.sia_mode == SiaMode::kSelfGating ? "sg" : "pk";
  j["batch_norm"] = c.batch_norm;
  j["head"] = to_string(c.head);
  j["init_scale"] = c.init_scale;
  j["regressor_hidden"] = c.regressor_hidden;
  j["output_init_gain"] = c.output_init_gain;
  j["self_gating"] = c.self_gating;
  j["ir"] = c.ir;
  j["meta"] = c.meta;
  j["reservoir_b"] = c.reservoir_b;
  j["train"] = to_json(c.train);
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  ObjectReader r(j, "config");
  r.get("bundle_path", c.bundle_path);
  if (const nlohmann::json* s = r.child("synth")) c.synth = synth_spec_from_json(*s);
  r.get("l2_normalize", c.l2_normalize);
  std::string text;
  r.get("protocol", text);
  if (!text.empty()) c.protocol = parse_protocol(text);
  r.get("num_tasks", c.num_tasks);
  r.get("task_sizes", c.task_sizes);
  r.get("seen_counts", c.seen_counts);
  r.get("unseen_counts", c.unseen_counts);
  r.get("shuffle_classes", c.shuffle_classes);
  r.get("hidden_dim", c.hidden_dim);
  r.get("depth", c.depth);
  text.clear();
  r.get("sia_mode", text);
  if (!text.empty()) c.sia_mode = parse_sia_mode(text);
  r.get("batch_norm", c.batch_norm);
  text.clear();
  r.get("head", text);
  if (!text.empty()) c.head = parse_head_kind(text);
  r.get("init_scale", c.init_scale);
  r.get("regressor_hidden", c.regressor_hidden);
  r.get("output_init_gain", c.output_init_gain);
  r.get("self_gating", c.self_gating);
  r.get("ir", c.ir);
  r.get("meta", c.meta);
  r.get("reservoir_b", c.reservoir_b);
  if (const nlohmann::json* t = r.child("train")) c.train = train_from_json(*t);
  r.get("output_dir", c.output_dir);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

}  // namespace mainzsl
