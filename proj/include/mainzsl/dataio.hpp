#pragma once

// Dataset bundles on disk:
//
//   features.bin    8-byte magic "ZSLFEAT1", u64 N, u64 d (little-endian),
//                   then N*d float32 row-major. Widened to double on load.
//   labels.csv      one global class id per line.
//   attributes.csv  header row, then C rows of D comma-separated reals.
//   meta.json       dataset name, class names, seen/unseen (and optional val)
//                   id lists, d, D, test_rows (sample rows held out for
//                   evaluation), provenance.
//
// A sample row is a training row iff it is not listed in test_rows. Rows of
// unseen classes must all be test rows.

#include "mainzsl/numkit.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mainzsl {

inline constexpr char kFeatureMagic[8] = {'Z', 'S', 'L', 'F', 'E', 'A', 'T', '1'};

struct FeatureDataset {
  Matrix features;              // N × d
  std::vector<int> labels;      // global class ids
  std::vector<int> task_ids;    // producing task per sample (0 when not continual)

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

struct DatasetBundle {
  std::string name;
  Matrix features;                 // N × d
  std::vector<int> labels;         // N, each < C
  Matrix attributes;               // C × D
  std::vector<std::string> class_names;
  std::vector<int> seen_ids;
  std::vector<int> unseen_ids;
  std::vector<int> val_ids;        // optional, carried but unused by training
  std::vector<int> test_rows;      // sorted sample indices reserved for evaluation
  std::string provenance;

  int num_classes() const { return static_cast<int>(attributes.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  int attr_dim() const { return static_cast<int>(attributes.cols()); }
  std::size_t num_samples() const { return labels.size(); }

  // Rows of `classes` in the train (or test) partition, in row order.
  FeatureDataset train_subset(const std::vector<int>& classes) const;
  FeatureDataset test_subset(const std::vector<int>& classes) const;
  std::vector<bool> test_mask() const;
};

// Throws DataError describing the first violated invariant.
void validate_bundle(const DatasetBundle& bundle);

DatasetBundle load_bundle(const std::filesystem::path& dir);
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

enum class SynthMap { kLinear, kMlp };

struct SynthSpec {
  int num_classes = 20;
  int num_seen = 15;              // classes [0, num_seen) are seen
  int attr_dim = 16;
  int feature_dim = 32;
  int samples_per_class = 200;
  double test_fraction = 0.2;     // of each seen class's samples
  double noise_sigma = 0.05;
  SynthMap map = SynthMap::kLinear;
  std::uint64_t seed = 7;
};

SynthMap parse_synth_map(const std::string& text);

// Attributes a_y ~ U(-1,1)^D, prototypes G(a_y) for a hidden seeded map G,
// samples G(a_y) + N(0, σ² I) rounded to float32 so the bundle round-trips
// through features.bin exactly. Unseen classes get test samples only.
DatasetBundle synth_generate(const SynthSpec& spec);

// Normalizes every attribute row to unit L2 norm (rows of zeros are left alone).
void l2_normalize_attributes(DatasetBundle& bundle);

}  // namespace mainzsl
