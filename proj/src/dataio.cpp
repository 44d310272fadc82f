#include "mainzsl/dataio.hpp"

#include "mainzsl/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace mainzsl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double parse_real(const std::string& text, const fs::path& file, std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    std::ostringstream os;
    os << file.string() << ":" << line << ": column " << col << ": not a number: '" << text << "'";
    throw DataError(os.str());
  }
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << file.string() << ":" << line << ": column " << col << ": non-finite value";
    throw DataError(os.str());
  }
  return v;
}

Matrix load_features(const fs::path& path) {
  const std::string raw = read_file(path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 24) {
    std::ostringstream os;
    os << path.string() << ": truncated header: expected 24 bytes, got " << raw.size();
    throw DataError(os.str());
  }
  if (std::memcmp(raw.data(), kFeatureMagic, 8) != 0) {
    throw DataError(path.string() + ": bad magic at offset 0 (expected ZSLFEAT1)");
  }
  const std::uint64_t n = get_u64(bytes + 8);
  const std::uint64_t d = get_u64(bytes + 16);
  const std::uint64_t expected = 24 + n * d * 4;
  if (d != 0 && n > (std::uint64_t{1} << 40) / d) throw DataError(path.string() + ": implausible shape in header");
  if (raw.size() != expected) {
    std::ostringstream os;
    os << path.string() << ": size mismatch for " << n << "x" << d << " float32 payload: expected " << expected
       << " bytes, got " << raw.size();
    throw DataError(os.str());
  }
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char* p = bytes + 24;
  for (Eigen::Index k = 0; k < m.size(); ++k, p += 4) {
    const float f = get_f32(p);
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << path.string() << ": non-finite value at byte offset " << (p - bytes) << " (row " << k / m.cols()
         << ", col " << k % m.cols() << ")";
      throw DataError(os.str());
    }
    m.data()[k] = static_cast<double>(f);
  }
  return m;
}

std::vector<int> load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      std::ostringstream os;
      os << path.string() << ":" << lineno << ": not an integer label: '" << t << "'";
      throw DataError(os.str());
    }
    labels.push_back(v);
  }
  return labels;
}

Matrix load_attributes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) row.push_back(parse_real(trim(cell), path, lineno, col++));
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream os;
      os << path.string() << ":" << lineno << ": expected " << rows.front().size() << " columns, got " << row.size();
      throw DataError(os.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no attribute rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

FeatureDataset subset(const DatasetBundle& b, const std::vector<int>& classes, bool want_test) {
  std::vector<bool> wanted(static_cast<std::size_t>(b.num_classes()), false);
  for (int c : classes) {
    if (c < 0 || c >= b.num_classes()) throw DataError("subset: class id " + std::to_string(c) + " out of range");
    wanted[static_cast<std::size_t>(c)] = true;
  }
  const std::vector<bool> is_test = b.test_mask();
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (wanted[static_cast<std::size_t>(b.labels[i])] && is_test[i] == want_test) rows.push_back(static_cast<Eigen::Index>(i));
  }
  FeatureDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), b.features.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = b.features.row(rows[k]);
    out.labels.push_back(b.labels[static_cast<std::size_t>(rows[k])]);
  }
  out.task_ids.assign(rows.size(), 0);
  return out;
}

}  // namespace

std::vector<bool> DatasetBundle::test_mask() const {
  std::vector<bool> mask(labels.size(), false);
  for (int r : test_rows) {
    if (r >= 0 && static_cast<std::size_t>(r) < mask.size()) mask[static_cast<std::size_t>(r)] = true;
  }
  return mask;
}

FeatureDataset DatasetBundle::train_subset(const std::vector<int>& classes) const { return subset(*this, classes, false); }
FeatureDataset DatasetBundle::test_subset(const std::vector<int>& classes) const { return subset(*this, classes, true); }

void validate_bundle(const DatasetBundle& b) {
  const int c = b.num_classes();
  if (c < 1) throw DataError("bundle: no classes");
  if (static_cast<std::size_t>(b.features.rows()) != b.labels.size()) {
    std::ostringstream os;
    os << "bundle: " << b.features.rows() << " feature rows but " << b.labels.size() << " labels";
    throw DataError(os.str());
  }
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (b.labels[i] < 0 || b.labels[i] >= c) {
      std::ostringstream os;
      os << "labels.csv: row " << i + 1 << ": label " << b.labels[i] << " outside [0, " << c << ")";
      throw DataError(os.str());
    }
  }
  require_finite(b.features, "features");
  require_finite(b.attributes, "attributes");
  if (!b.class_names.empty() && static_cast<int>(b.class_names.size()) != c) {
    throw DataError("meta.json: class_names has " + std::to_string(b.class_names.size()) + " entries, expected " +
                    std::to_string(c));
  }
  std::vector<int> owner(static_cast<std::size_t>(c), 0);
  auto mark = [&](const std::vector<int>& ids, int tag, const char* what) {
    for (int id : ids) {
      if (id < 0 || id >= c) throw DataError(std::string("meta.json: ") + what + " id " + std::to_string(id) + " out of range");
      if (owner[static_cast<std::size_t>(id)] != 0) {
        throw DataError(std::string("meta.json: class ") + std::to_string(id) + " listed as both seen and unseen (or twice)");
      }
      owner[static_cast<std::size_t>(id)] = tag;
    }
  };
  mark(b.seen_ids, 1, "seen_ids");
  mark(b.unseen_ids, 2, "unseen_ids");
  for (int id = 0; id < c; ++id) {
    if (owner[static_cast<std::size_t>(id)] == 0) {
      throw DataError("meta.json: class " + std::to_string(id) + " is neither seen nor unseen");
    }
  }
  std::set<int> rows;
  for (int r : b.test_rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= b.labels.size()) {
      throw DataError("meta.json: test row " + std::to_string(r) + " out of range");
    }
    if (!rows.insert(r).second) throw DataError("meta.json: duplicate test row " + std::to_string(r));
  }
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (owner[static_cast<std::size_t>(b.labels[i])] == 2 && !rows.contains(static_cast<int>(i))) {
      throw DataError("bundle: row " + std::to_string(i) + " of unseen class " + std::to_string(b.labels[i]) +
                      " is not a test row");
    }
  }
}

DatasetBundle load_bundle(const fs::path& dir) {
  for (const char* f : {"features.bin", "labels.csv", "attributes.csv", "meta.json"}) {
    if (!fs::exists(dir / f)) throw DataError((dir / f).string() + ": missing file");
  }
  DatasetBundle b;
  b.features = load_features(dir / "features.bin");
  b.labels = load_labels(dir / "labels.csv");
  b.attributes = load_attributes(dir / "attributes.csv");

  json meta;
  try {
    meta = json::parse(read_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  try {
    b.name = meta.value("dataset", std::string());
    b.class_names = meta.value("class_names", std::vector<std::string>{});
    b.seen_ids = meta.at("seen_ids").get<std::vector<int>>();
    b.unseen_ids = meta.at("unseen_ids").get<std::vector<int>>();
    b.val_ids = meta.value("val_ids", std::vector<int>{});
    b.test_rows = meta.value("test_rows", std::vector<int>{});
    b.provenance = meta.value("provenance", std::string());
    const int d = meta.at("feature_dim").get<int>();
    const int da = meta.at("attr_dim").get<int>();
    if (d != b.feature_dim()) {
      throw DataError("meta.json: feature_dim " + std::to_string(d) + " but features.bin has d=" +
                      std::to_string(b.feature_dim()));
    }
    if (da != b.attr_dim()) {
      throw DataError("meta.json: attr_dim " + std::to_string(da) + " but attributes.csv has " +
                      std::to_string(b.attr_dim()) + " columns");
    }
  } catch (const json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  validate_bundle(b);
  return b;
}

void write_bundle(const DatasetBundle& b, const fs::path& dir) {
  validate_bundle(b);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "features.bin", std::ios::binary | std::ios::trunc);
    if (!os) throw DataError((dir / "features.bin").string() + ": cannot write");
    os.write(kFeatureMagic, 8);
    put_u64(os, static_cast<std::uint64_t>(b.features.rows()));
    put_u64(os, static_cast<std::uint64_t>(b.features.cols()));
    for (Eigen::Index k = 0; k < b.features.size(); ++k) put_f32(os, static_cast<float>(b.features.data()[k]));
    if (!os) throw DataError((dir / "features.bin").string() + ": write failed");
  }
  {
    std::ofstream os(dir / "labels.csv", std::ios::trunc);
    if (!os) throw DataError((dir / "labels.csv").string() + ": cannot write");
    for (int l : b.labels) os << l << '\n';
  }
  {
    std::ofstream os(dir / "attributes.csv", std::ios::trunc);
    if (!os) throw DataError((dir / "attributes.csv").string() + ": cannot write");
    for (Eigen::Index c = 0; c < b.attributes.cols(); ++c) os << (c ? "," : "") << "a" << c;
    os << '\n';
    for (Eigen::Index r = 0; r < b.attributes.rows(); ++r) {
      for (Eigen::Index c = 0; c < b.attributes.cols(); ++c) os << (c ? "," : "") << format_real(b.attributes(r, c));
      os << '\n';
    }
  }
  json meta;
  meta["dataset"] = b.name;
  meta["class_names"] = b.class_names;
  meta["seen_ids"] = b.seen_ids;
  meta["unseen_ids"] = b.unseen_ids;
  meta["val_ids"] = b.val_ids;
  meta["test_rows"] = b.test_rows;
  meta["feature_dim"] = b.feature_dim();
  meta["attr_dim"] = b.attr_dim();
  meta["provenance"] = b.provenance;
  std::ofstream os(dir / "meta.json", std::ios::trunc);
  if (!os) throw DataError((dir / "meta.json").string() + ": cannot write");
  os << meta.dump(2) << '\n';
}

SynthMap parse_synth_map(const std::string& text) {
  if (text == "linear") return SynthMap::kLinear;
  if (text == "mlp") return SynthMap::kMlp;
  throw ConfigError("unknown synthetic map '" + text + "' (expected linear or mlp)");
}

DatasetBundle synth_generate(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (spec.num_seen < 1 || spec.num_seen > spec.num_classes) {
    throw ConfigError("synth: invalid split: " + std::to_string(spec.num_seen) + " seen of " +
                      std::to_string(spec.num_classes) + " classes");
  }
  if (spec.attr_dim < 1 || spec.feature_dim < 1 || spec.samples_per_class < 2) {
    throw ConfigError("synth: dimensions and samples_per_class must be positive (samples >= 2)");
  }
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) throw ConfigError("synth: test_fraction must be in (0,1)");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("synth: noise sigma must be >= 0");

  Rng rng(spec.seed);
  DatasetBundle b;
  b.name = "synthetic";
  b.attributes = uniform_matrix(spec.num_classes, spec.attr_dim, -1.0, 1.0, rng);

  Matrix prototypes;
  if (spec.map == SynthMap::kLinear) {
    const Matrix g = normal_matrix(spec.feature_dim, spec.attr_dim, 1.0 / std::sqrt(spec.attr_dim), rng);
    prototypes = b.attributes * g.transpose();
  } else {
    const int hidden = 2 * spec.feature_dim;
    const Matrix w1 = normal_matrix(hidden, spec.attr_dim, std::sqrt(2.0 / spec.attr_dim), rng);
    const Matrix b1 = normal_matrix(1, hidden, 0.1, rng);
    const Matrix w2 = normal_matrix(spec.feature_dim, hidden, 1.0 / std::sqrt(hidden), rng);
    prototypes = activate(linear_rows(b.attributes, w1, b1.row(0)), Activation::kRelu) * w2.transpose();
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  const int n_test_seen = std::max(1, static_cast<int>(std::lround(spec.test_fraction * spec.samples_per_class)));
  const int total = spec.num_classes * spec.samples_per_class;
  b.features.resize(total, spec.feature_dim);
  int row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    const bool seen = c < spec.num_seen;
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (int j = 0; j < spec.feature_dim; ++j) {
        const double x = prototypes(c, j) + spec.noise_sigma * noise(rng);
        b.features(row, j) = static_cast<double>(static_cast<float>(x));
      }
      b.labels.push_back(c);
      if (!seen || s >= spec.samples_per_class - n_test_seen) b.test_rows.push_back(row);
    }
    b.class_names.push_back("class" + std::to_string(c));
    (seen ? b.seen_ids : b.unseen_ids).push_back(c);
  }
  std::ostringstream prov;
  prov << "synth map=" << (spec.map == SynthMap::kLinear ? "linear" : "mlp") << " C=" << spec.num_classes
       << " S=" << spec.num_seen << " D=" << spec.attr_dim << " d=" << spec.feature_dim
       << " n=" << spec.samples_per_class << " sigma=" << spec.noise_sigma << " seed=" << spec.seed;
  b.provenance = prov.str();
  return b;
}

void l2_normalize_attributes(DatasetBundle& bundle) {
  for (Eigen::Index r = 0; r < bundle.attributes.rows(); ++r) {
    const double n = bundle.attributes.row(r).norm();
    if (n > 0.0) bundle.attributes.row(r) /= n;
  }
}

}  // namespace mainzsl
