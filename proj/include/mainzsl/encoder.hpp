#pragma once

// Attribute encoder: stacked self-interaction (SIA) blocks, a projection head
// into visual-feature space, the inverse regressor and the similarity head.

#include "mainzsl/numkit.hpp"
#include "mainzsl/tape.hpp"

#include <string>
#include <vector>

namespace mainzsl {

enum class SiaMode { kPolynomialKernel, kSelfGating };
enum class HeadKind { kCosine, kDot };

const char* to_string(SiaMode mode);
const char* to_string(HeadKind kind);
SiaMode parse_sia_mode(const std::string& text);  // "pk" | "sg" (long names accepted)
HeadKind parse_head_kind(const std::string& text);

struct LinearMap {
  Matrix weight;  // out × in
  Matrix bias;    // 1 × out

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

struct SiaBlockParams {
  LinearMap phi_a;
  LinearMap phi_s;
  LinearMap phi_b;
  SiaMode mode = SiaMode::kSelfGating;

  Activation gate_a() const;
  Activation gate_s() const;
  Activation gate_b() const;
};

struct EncoderParams {
  std::vector<SiaBlockParams> blocks;
  LinearMap proj1;
  LinearMap proj2;
  BatchNormState bn;
  bool use_batch_norm = true;

  int attr_dim() const { return blocks.empty() ? proj1.in_dim() : blocks.front().phi_a.in_dim(); }
  int hidden_dim() const { return proj1.out_dim(); }
  int feature_dim() const { return proj2.out_dim(); }
  int depth() const { return static_cast<int>(blocks.size()); }
};

// R: feature space -> attribute space. ReLU between layers, none after the last.
struct RegressorParams {
  std::vector<LinearMap> layers;

  int out_dim() const { return layers.back().out_dim(); }
};

struct SimilarityHead {
  HeadKind kind = HeadKind::kCosine;
  // Learnable in cosine mode; stored as log so the scale stays positive.
  Matrix log_scale = Matrix::Zero(1, 1);

  double scale() const;
};

struct ModelConfig {
  int attr_dim = 0;
  int feature_dim = 0;
  int hidden_dim = 2048;
  int depth = 1;  // 0: no self-interaction block, attributes feed the projection directly
  SiaMode sia_mode = SiaMode::kSelfGating;
  bool use_batch_norm = true;
  HeadKind head = HeadKind::kCosine;
  double init_scale = 10.0;
  int regressor_hidden = -1;  // < 0: same as hidden_dim, 0: single linear layer
  double output_init_gain = 1.0;  // multiplies the Xavier draw of proj2
};

// Full trainable state: encoder f, regressor R, similarity head.
struct MainModel {
  EncoderParams encoder;
  RegressorParams regressor;
  SimilarityHead head;

  // Trainable parameters in a fixed order. Pointers refer into *this.
  ParamList parameters();
  ParamList encoder_parameters();
  ParamList regressor_parameters();
};

MainModel init_model(const ModelConfig& config, Rng& rng);

// Plain (tape-free) forward pieces.
Vector sia_forward(const Vector& input, const SiaBlockParams& block);
Matrix sia_forward_rows(const Matrix& input, const SiaBlockParams& block);
// Output of the SIA stack only, before the projection head.
Matrix stack_forward(const Matrix& attrs, const EncoderParams& params);
// Eval-mode encoder (running batch-norm statistics); a pure function.
Matrix encode_attributes(const Matrix& attrs, const EncoderParams& params);
Vector encode_attribute(const Vector& attr, const EncoderParams& params);
Vector inverse_regress(const Vector& z, const RegressorParams& params);
Matrix inverse_regress_rows(const Matrix& z, const RegressorParams& params);

// Logits for one feature vector against C class embeddings (rows of Z).
// Cosine mode raises NumericError on a zero-norm x or z_y.
Vector class_logits(const Vector& x, const Matrix& class_embeddings, const SimilarityHead& head);
Matrix class_logits_rows(const Matrix& x, const Matrix& class_embeddings, const SimilarityHead& head);
// Argmax with ties resolved to the lowest index.
int argmax_lowest(const Eigen::Ref<const RowVector>& logits);

// Tape-recording forward pieces. `mode` selects batch-norm statistics.
Var record_encoder(GradTape& tape, Var attrs, EncoderParams& params, NormMode mode);
Var record_regressor(GradTape& tape, Var z, RegressorParams& params);
Var record_logits(GradTape& tape, Var features, Var class_embeddings, SimilarityHead& head);

// Finite-difference degree estimate of each SIA-stack output coordinate along
// base + t * direction. Only meaningful with identity activations, so the
// self-gating mode is rejected.
struct DegreeReport {
  int depth = 0;
  int bound = 0;                         // 2^depth
  std::vector<int> degrees;              // per output coordinate
  std::vector<double> rel_at_bound;      // |Δ^bound| relative magnitude
  std::vector<double> rel_above_bound;   // |Δ^(bound+1)| relative magnitude
  bool within_bound = true;
};

DegreeReport polynomial_degree_probe(const EncoderParams& params, const Vector& direction,
                                     const Vector& base, int max_degree, double step = 0.1,
                                     double tolerance = 1e-6);

}  // namespace mainzsl
