#include "mainzsl/continual.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <sstream>

namespace mainzsl {

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kGzsl:
      return "gzsl";
    case Protocol::kFixed:
      return "fixed";
    case Protocol::kDynamic:
      return "dynamic";
  }
  return "?";
}

Protocol parse_protocol(const std::string& text) {
  if (text == "gzsl") return Protocol::kGzsl;
  if (text == "fixed") return Protocol::kFixed;
  if (text == "dynamic") return Protocol::kDynamic;
  throw ConfigError("unknown protocol '" + text + "' (expected gzsl, fixed or dynamic)");
}

std::vector<int> TaskView::table_ids() const {
  std::vector<int> ids = seen_ids;
  ids.insert(ids.end(), unseen_ids.begin(), unseen_ids.end());
  return ids;
}

Matrix TaskView::seen_attributes() const { return attribute_table.topRows(static_cast<Eigen::Index>(seen_ids.size())); }

nlohmann::json TaskStream::manifest() const {
  nlohmann::json j;
  j["protocol"] = to_string(protocol);
  j["num_tasks"] = num_tasks();
  j["budget_classes"] = budget_classes;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& v : views) {
    tasks.push_back({{"task", v.task_id},
                     {"new_seen", v.new_seen_ids},
                     {"seen", v.seen_ids},
                     {"unseen", v.unseen_ids},
                     {"train_samples", v.train_set.size()},
                     {"test_samples", v.test_set.size()}});
  }
  j["tasks"] = tasks;
  return j;
}

namespace {

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

TaskView make_view(const DatasetBundle& b, int task_id, std::vector<int> new_seen, std::vector<int> seen,
                   std::vector<int> unseen) {
  TaskView v;
  v.task_id = task_id;
  v.new_seen_ids = std::move(new_seen);
  v.seen_ids = std::move(seen);
  v.unseen_ids = std::move(unseen);
  v.train_set = b.train_subset(v.new_seen_ids);
  v.train_set.task_ids.assign(v.train_set.size(), task_id);
  const std::vector<int> ids = v.table_ids();
  v.test_set = b.test_subset(ids);
  v.test_set.task_ids.assign(v.test_set.size(), task_id);
  v.attribute_table.resize(static_cast<Eigen::Index>(ids.size()), b.attributes.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) v.attribute_table.row(static_cast<Eigen::Index>(i)) = b.attributes.row(ids[i]);
  return v;
}

void shuffle_if(std::vector<int>& ids, std::optional<std::uint64_t> seed) {
  if (!seed) return;
  Rng rng(*seed);
  std::shuffle(ids.begin(), ids.end(), rng);
}

}  // namespace

std::vector<int> balanced_counts(int total, int num_tasks, bool remainder_last) {
  if (num_tasks < 1) throw ProtocolError("balanced_counts: need at least one task");
  std::vector<int> out(static_cast<std::size_t>(num_tasks), total / num_tasks);
  const int rem = total % num_tasks;
  for (int i = 0; i < rem; ++i) {
    const int idx = remainder_last ? num_tasks - 1 - i : i;
    out[static_cast<std::size_t>(idx)] += 1;
  }
  return out;
}

std::vector<int> fixed_task_sizes(const std::string& dataset, int num_classes, int num_tasks) {
  static const std::map<std::string, std::vector<int>> kTable = {
      {"AWA1", std::vector<int>(5, 10)},
      {"AWA2", std::vector<int>(5, 10)},
      {"CUB", std::vector<int>(20, 10)},
      {"APY", std::vector<int>(4, 8)},
      {"SUN", [] {
         std::vector<int> s(3, 47);
         s.insert(s.end(), 12, 48);
         return s;
       }()},
  };
  if (auto it = kTable.find(upper(dataset)); it != kTable.end()) {
    const auto& sizes = it->second;
    const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
    if (total != num_classes || static_cast<int>(sizes.size()) != num_tasks) {
      std::ostringstream os;
      os << "fixed split table mismatch for " << dataset << ": table has " << sizes.size() << " tasks over " << total
         << " classes, bundle/config give " << num_tasks << " tasks over " << num_classes;
      throw ProtocolError(os.str());
    }
    return sizes;
  }
  if (num_tasks < 2) throw ProtocolError("fixed protocol needs at least 2 tasks");
  if (num_classes % num_tasks != 0) {
    throw ProtocolError("fixed protocol: " + std::to_string(num_classes) + " classes do not divide into " +
                        std::to_string(num_tasks) + " tasks");
  }
  return std::vector<int>(static_cast<std::size_t>(num_tasks), num_classes / num_tasks);
}

TaskStream build_gzsl_stream(const DatasetBundle& bundle) {
  TaskStream s;
  s.protocol = Protocol::kGzsl;
  if (bundle.seen_ids.empty()) throw ProtocolError("gzsl: bundle has no seen classes");
  s.views.push_back(make_view(bundle, 1, bundle.seen_ids, bundle.seen_ids, bundle.unseen_ids));
  return s;
}

TaskStream build_fixed_stream(const DatasetBundle& bundle, int num_tasks, std::optional<std::uint64_t> shuffle_seed,
                              std::vector<int> task_sizes) {
  const int c = bundle.num_classes();
  if (task_sizes.empty()) task_sizes = fixed_task_sizes(bundle.name, c, num_tasks);
  if (static_cast<int>(task_sizes.size()) != num_tasks ||
      std::accumulate(task_sizes.begin(), task_sizes.end(), 0) != c) {
    throw ProtocolError("fixed protocol: task sizes do not cover the class set");
  }
  if (num_tasks < 2) throw ProtocolError("fixed protocol needs at least 2 tasks");

  std::vector<int> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  shuffle_if(order, shuffle_seed);

  const std::vector<bool> is_test = bundle.test_mask();
  std::vector<int> train_count(static_cast<std::size_t>(c), 0);
  for (std::size_t i = 0; i < bundle.labels.size(); ++i) {
    if (!is_test[i]) ++train_count[static_cast<std::size_t>(bundle.labels[i])];
  }
  for (int id = 0; id < c; ++id) {
    if (train_count[static_cast<std::size_t>(id)] == 0) {
      throw ProtocolError("fixed protocol: class " + std::to_string(id) + " has no training rows");
    }
  }

  TaskStream s;
  s.protocol = Protocol::kFixed;
  s.budget_classes = c;
  std::size_t cursor = 0;
  std::vector<int> seen;
  for (int t = 0; t < num_tasks; ++t) {
    const std::size_t n = static_cast<std::size_t>(task_sizes[static_cast<std::size_t>(t)]);
    std::vector<int> fresh(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                           order.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
    seen.insert(seen.end(), fresh.begin(), fresh.end());
    std::vector<int> unseen(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.end());
    s.views.push_back(make_view(bundle, t + 1, fresh, seen, unseen));
  }
  return s;
}

TaskStream build_dynamic_stream(const DatasetBundle& bundle, const std::vector<int>& seen_counts,
                                const std::vector<int>& unseen_counts, std::optional<std::uint64_t> shuffle_seed) {
  if (seen_counts.empty() || seen_counts.size() != unseen_counts.size()) {
    throw ProtocolError("dynamic protocol: seen/unseen per-task counts must be non-empty and equally long");
  }
  const int s_total = std::accumulate(seen_counts.begin(), seen_counts.end(), 0);
  const int u_total = std::accumulate(unseen_counts.begin(), unseen_counts.end(), 0);
  if (s_total != static_cast<int>(bundle.seen_ids.size()) || u_total != static_cast<int>(bundle.unseen_ids.size())) {
    std::ostringstream os;
    os << "dynamic protocol: counts sum to " << s_total << "/" << u_total << " but bundle has "
       << bundle.seen_ids.size() << " seen / " << bundle.unseen_ids.size() << " unseen classes";
    throw ProtocolError(os.str());
  }
  for (std::size_t t = 0; t < seen_counts.size(); ++t) {
    if (seen_counts[t] < 1 || unseen_counts[t] < 0) {
      throw ProtocolError("dynamic protocol: every task needs at least one seen class");
    }
  }
  std::vector<int> seen_order = bundle.seen_ids;
  std::vector<int> unseen_order = bundle.unseen_ids;
  shuffle_if(seen_order, shuffle_seed);
  shuffle_if(unseen_order, shuffle_seed ? std::optional<std::uint64_t>(*shuffle_seed + 1) : std::nullopt);

  TaskStream s;
  s.protocol = Protocol::kDynamic;
  s.budget_classes = s_total;
  std::vector<int> seen;
  std::vector<int> unseen;
  std::size_t sc = 0;
  std::size_t uc = 0;
  for (std::size_t t = 0; t < seen_counts.size(); ++t) {
    std::vector<int> fresh(seen_order.begin() + static_cast<std::ptrdiff_t>(sc),
                           seen_order.begin() + static_cast<std::ptrdiff_t>(sc + static_cast<std::size_t>(seen_counts[t])));
    sc += static_cast<std::size_t>(seen_counts[t]);
    seen.insert(seen.end(), fresh.begin(), fresh.end());
    unseen.insert(unseen.end(), unseen_order.begin() + static_cast<std::ptrdiff_t>(uc),
                  unseen_order.begin() + static_cast<std::ptrdiff_t>(uc + static_cast<std::size_t>(unseen_counts[t])));
    uc += static_cast<std::size_t>(unseen_counts[t]);
    s.views.push_back(make_view(bundle, static_cast<int>(t) + 1, fresh, seen, unseen));
  }
  return s;
}

void reservoir_offer(Reservoir& res, ReplayItem sample, Rng& rng) {
  res.stream_count += 1;
  if (res.capacity == 0) return;
  if (res.stream_count <= res.capacity) {
    res.items.push_back(std::move(sample));
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, res.stream_count - 1);
  const std::size_t slot = pick(rng);
  if (slot < res.capacity) res.items[slot] = std::move(sample);
}

FeatureDataset augmented_pool(const Reservoir& res, const FeatureDataset& current, const std::vector<int>& allowed_ids) {
  std::vector<bool> allowed;
  for (int id : allowed_ids) {
    if (id < 0) throw DataError("augmented_pool: negative class id");
    if (static_cast<std::size_t>(id) >= allowed.size()) allowed.resize(static_cast<std::size_t>(id) + 1, false);
    allowed[static_cast<std::size_t>(id)] = true;
  }
  auto check = [&](int label, const char* where) {
    if (label < 0 || static_cast<std::size_t>(label) >= allowed.size() || !allowed[static_cast<std::size_t>(label)]) {
      throw DataError(std::string("augmented_pool: ") + where + " label " + std::to_string(label) +
                      " is not a seen class of this task's attribute table");
    }
  };
  const Eigen::Index d = current.features.cols() > 0 ? current.features.cols()
                         : res.items.empty()         ? 0
                                                     : res.items.front().feature.size();
  FeatureDataset pool;
  pool.features.resize(static_cast<Eigen::Index>(res.items.size() + current.size()), d);
  Eigen::Index row = 0;
  for (const auto& item : res.items) {
    check(item.label, "reservoir");
    if (item.feature.size() != d) throw DataError("augmented_pool: reservoir feature dim mismatch");
    pool.features.row(row++) = item.feature;
    pool.labels.push_back(item.label);
    pool.task_ids.push_back(item.task_id);
  }
  for (std::size_t i = 0; i < current.size(); ++i) {
    check(current.labels[i], "current-task");
    pool.features.row(row++) = current.features.row(static_cast<Eigen::Index>(i));
    pool.labels.push_back(current.labels[i]);
    pool.task_ids.push_back(current.task_ids.empty() ? 0 : current.task_ids[i]);
  }
  return pool;
}

}  // namespace mainzsl
