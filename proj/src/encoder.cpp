#include "mainzsl/encoder.hpp"

#include "mainzsl/errors.hpp"

#include <cmath>
#include <sstream>

namespace mainzsl {

const char* to_string(SiaMode mode) {
  return mode == SiaMode::kPolynomialKernel ? "pk" : "sg";
}

const char* to_string(HeadKind kind) { return kind == HeadKind::kCosine ? "cosine" : "dot"; }

SiaMode parse_sia_mode(const std::string& text) {
  if (text == "pk" || text == "polynomial_kernel") return SiaMode::kPolynomialKernel;
  if (text == "sg" || text == "self_gating") return SiaMode::kSelfGating;
  throw ConfigError("unknown sia mode '" + text + "' (expected pk or sg)");
}

HeadKind parse_head_kind(const std::string& text) {
  if (text == "cosine") return HeadKind::kCosine;
  if (text == "dot") return HeadKind::kDot;
  throw ConfigError("unknown head '" + text + "' (expected cosine or dot)");
}

Activation SiaBlockParams::gate_a() const {
  return mode == SiaMode::kSelfGating ? Activation::kRelu : Activation::kIdentity;
}
Activation SiaBlockParams::gate_s() const {
  return mode == SiaMode::kSelfGating ? Activation::kSigmoid : Activation::kIdentity;
}
Activation SiaBlockParams::gate_b() const {
  return mode == SiaMode::kSelfGating ? Activation::kRelu : Activation::kIdentity;
}

double SimilarityHead::scale() const { return std::exp(log_scale(0, 0)); }

namespace {

LinearMap make_linear(int in, int out, bool relu_fan_in, Rng& rng) {
  LinearMap m;
  m.weight = relu_fan_in ? kaiming_uniform(out, in, rng) : xavier_uniform(out, in, rng);
  m.bias = Matrix::Zero(1, out);
  return m;
}

void push_linear(ParamList& out, const std::string& prefix, LinearMap& m) {
  out.push_back({prefix + ".weight", &m.weight});
  out.push_back({prefix + ".bias", &m.bias});
}

Var record_linear(GradTape& tape, Var x, LinearMap& m) {
  return tape.linear(x, tape.parameter(m.weight, "weight"), tape.parameter(m.bias, "bias"));
}

Matrix apply_linear(const Matrix& x, const LinearMap& m) { return linear_rows(x, m.weight, m.bias.row(0)); }

}  // namespace

ParamList MainModel::encoder_parameters() {
  ParamList out;
  for (std::size_t i = 0; i < encoder.blocks.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i);
    push_linear(out, p + ".phi_a", encoder.blocks[i].phi_a);
    push_linear(out, p + ".phi_s", encoder.blocks[i].phi_s);
    push_linear(out, p + ".phi_b", encoder.blocks[i].phi_b);
  }
  push_linear(out, "encoder.proj1", encoder.proj1);
  if (encoder.use_batch_norm) {
    out.push_back({"encoder.bn.gamma", &encoder.bn.gamma});
    out.push_back({"encoder.bn.beta", &encoder.bn.beta});
  }
  push_linear(out, "encoder.proj2", encoder.proj2);
  if (head.kind == HeadKind::kCosine) out.push_back({"head.log_scale", &head.log_scale});
  return out;
}

ParamList MainModel::regressor_parameters() {
  ParamList out;
  for (std::size_t i = 0; i < regressor.layers.size(); ++i) {
    push_linear(out, "regressor.layer" + std::to_string(i), regressor.layers[i]);
  }
  return out;
}

ParamList MainModel::parameters() {
  ParamList out = encoder_parameters();
  ParamList reg = regressor_parameters();
  out.insert(out.end(), reg.begin(), reg.end());
  return out;
}

MainModel init_model(const ModelConfig& config, Rng& rng) {
  if (config.attr_dim <= 0 || config.feature_dim <= 0 || config.hidden_dim <= 0) {
    throw ConfigError("init_model: dimensions must be positive");
  }
  if (config.depth < 0) throw ConfigError("init_model: depth must be >= 0");
  if (!(config.init_scale > 0.0)) throw ConfigError("init_model: head scale must be positive");
  MainModel model;
  int in = config.attr_dim;
  for (int l = 0; l < config.depth; ++l) {
    SiaBlockParams block;
    block.mode = config.sia_mode;
    block.phi_a = make_linear(in, config.hidden_dim, true, rng);
    block.phi_s = make_linear(in, config.hidden_dim, false, rng);
    block.phi_b = make_linear(in, config.hidden_dim, true, rng);
    model.encoder.blocks.push_back(std::move(block));
    in = config.hidden_dim;
  }
  model.encoder.proj1 = make_linear(in, config.hidden_dim, false, rng);
  model.encoder.bn = BatchNormState::identity(config.hidden_dim);
  model.encoder.use_batch_norm = config.use_batch_norm;
  model.encoder.proj2 = make_linear(config.hidden_dim, config.feature_dim, false, rng);
  model.encoder.proj2.weight *= config.output_init_gain;

  const int reg_hidden = config.regressor_hidden < 0 ? config.hidden_dim : config.regressor_hidden;
  if (reg_hidden == 0) {
    model.regressor.layers.push_back(make_linear(config.feature_dim, config.attr_dim, false, rng));
  } else {
    model.regressor.layers.push_back(make_linear(config.feature_dim, reg_hidden, true, rng));
    model.regressor.layers.push_back(make_linear(reg_hidden, config.attr_dim, false, rng));
  }

  model.head.kind = config.head;
  model.head.log_scale(0, 0) = config.head == HeadKind::kCosine ? std::log(config.init_scale) : 0.0;
  return model;
}

Matrix sia_forward_rows(const Matrix& input, const SiaBlockParams& block) {
  if (input.cols() != block.phi_a.in_dim()) {
    std::ostringstream os;
    os << "sia_forward: input dim " << input.cols() << ", block expects " << block.phi_a.in_dim();
    throw DimensionError(os.str());
  }
  const Matrix ha = activate(apply_linear(input, block.phi_a), block.gate_a());
  const Matrix hs = activate(apply_linear(input, block.phi_s), block.gate_s());
  const Matrix hb = activate(apply_linear(input, block.phi_b), block.gate_b());
  return ha.cwiseProduct(hs) + hb;
}

Vector sia_forward(const Vector& input, const SiaBlockParams& block) {
  Matrix row = input.transpose();
  return sia_forward_rows(row, block).row(0).transpose();
}

Matrix stack_forward(const Matrix& attrs, const EncoderParams& params) {
  Matrix a = attrs;
  for (const auto& block : params.blocks) a = sia_forward_rows(a, block);
  return a;
}

Matrix encode_attributes(const Matrix& attrs, const EncoderParams& params) {
  if (attrs.cols() != params.attr_dim()) {
    std::ostringstream os;
    os << "encode_attributes: attribute dim " << attrs.cols() << ", encoder expects " << params.attr_dim();
    throw DimensionError(os.str());
  }
  Matrix h = apply_linear(stack_forward(attrs, params), params.proj1);
  if (params.use_batch_norm) {
    BatchNormState eval = params.bn;
    eval.mode = NormMode::kEval;
    h = batch_norm(h, eval);
  }
  return apply_linear(h, params.proj2);
}

Vector encode_attribute(const Vector& attr, const EncoderParams& params) {
  Matrix row = attr.transpose();
  return encode_attributes(row, params).row(0).transpose();
}

Matrix inverse_regress_rows(const Matrix& z, const RegressorParams& params) {
  if (params.layers.empty()) throw DimensionError("inverse_regress: regressor has no layers");
  if (z.cols() != params.layers.front().in_dim()) {
    std::ostringstream os;
    os << "inverse_regress: input dim " << z.cols() << ", regressor expects " << params.layers.front().in_dim();
    throw DimensionError(os.str());
  }
  Matrix h = z;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = apply_linear(h, params.layers[i]);
    if (i + 1 < params.layers.size()) h = activate(h, Activation::kRelu);
  }
  return h;
}

Vector inverse_regress(const Vector& z, const RegressorParams& params) {
  Matrix row = z.transpose();
  return inverse_regress_rows(row, params).row(0).transpose();
}

Matrix class_logits_rows(const Matrix& x, const Matrix& class_embeddings, const SimilarityHead& head) {
  if (x.cols() != class_embeddings.cols()) {
    std::ostringstream os;
    os << "class_logits: feature dim " << x.cols() << ", embeddings have " << class_embeddings.cols();
    throw DimensionError(os.str());
  }
  if (head.kind == HeadKind::kDot) return x * class_embeddings.transpose();
  const Vector xn = x.rowwise().norm();
  const Vector zn = class_embeddings.rowwise().norm();
  for (Eigen::Index i = 0; i < xn.size(); ++i) {
    if (!(xn(i) > 0.0)) throw NumericError("class_logits: degenerate (zero-norm) feature vector");
  }
  for (Eigen::Index i = 0; i < zn.size(); ++i) {
    if (!(zn(i) > 0.0)) {
      throw NumericError("class_logits: degenerate (zero-norm) class embedding " + std::to_string(i));
    }
  }
  Matrix cos = (x.array().colwise() / xn.array()).matrix() *
               (class_embeddings.array().colwise() / zn.array()).matrix().transpose();
  return head.scale() * cos;
}

Vector class_logits(const Vector& x, const Matrix& class_embeddings, const SimilarityHead& head) {
  Matrix row = x.transpose();
  return class_logits_rows(row, class_embeddings, head).row(0).transpose();
}

int argmax_lowest(const Eigen::Ref<const RowVector>& logits) {
  if (logits.size() == 0) throw DimensionError("argmax_lowest: empty logits");
  int best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = static_cast<int>(i);
  }
  return best;
}

Var record_encoder(GradTape& tape, Var attrs, EncoderParams& params, NormMode mode) {
  if (tape.value(attrs).cols() != params.attr_dim()) {
    throw DimensionError("record_encoder: attribute dim does not match encoder");
  }
  Var a = attrs;
  for (auto& block : params.blocks) {
    Var ha = tape.activate(record_linear(tape, a, block.phi_a), block.gate_a());
    Var hs = tape.activate(record_linear(tape, a, block.phi_s), block.gate_s());
    Var hb = tape.activate(record_linear(tape, a, block.phi_b), block.gate_b());
    a = tape.add(tape.mul(ha, hs), hb);
  }
  Var h = record_linear(tape, a, params.proj1);
  if (params.use_batch_norm) {
    params.bn.mode = mode;
    h = tape.batch_norm(h, tape.parameter(params.bn.gamma, "gamma"), tape.parameter(params.bn.beta, "beta"),
                        params.bn);
  }
  return record_linear(tape, h, params.proj2);
}

Var record_regressor(GradTape& tape, Var z, RegressorParams& params) {
  Var h = z;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = record_linear(tape, h, params.layers[i]);
    if (i + 1 < params.layers.size()) h = tape.activate(h, Activation::kRelu);
  }
  return h;
}

Var record_logits(GradTape& tape, Var features, Var class_embeddings, SimilarityHead& head) {
  if (head.kind == HeadKind::kDot) return tape.matmul_nt(features, class_embeddings);
  Var cos = tape.matmul_nt(tape.normalize_rows(features), tape.normalize_rows(class_embeddings));
  return tape.scale_by(cos, tape.exp(tape.parameter(head.log_scale, "log_scale")));
}

DegreeReport polynomial_degree_probe(const EncoderParams& params, const Vector& direction, const Vector& base,
                                     int max_degree, double step, double tolerance) {
  for (const auto& block : params.blocks) {
    if (block.mode != SiaMode::kPolynomialKernel) {
      throw ConfigError("polynomial_degree_probe: requires polynomial_kernel blocks (identity activations)");
    }
  }
  if (params.blocks.empty()) throw DimensionError("polynomial_degree_probe: no blocks");
  if (direction.size() != params.attr_dim() || base.size() != params.attr_dim()) {
    throw DimensionError("polynomial_degree_probe: direction/base dim does not match encoder");
  }
  if (max_degree < 0) throw ConfigError("polynomial_degree_probe: max_degree must be >= 0");

  DegreeReport report;
  report.depth = params.depth();
  report.bound = 1 << report.depth;

  const int points = max_degree + 2;
  Matrix line(points, params.attr_dim());
  const double center = 0.5 * static_cast<double>(points - 1);
  for (int j = 0; j < points; ++j) {
    line.row(j) = (base + (static_cast<double>(j) - center) * step * direction).transpose();
  }
  const Matrix values = stack_forward(line, params);

  // rel(m) = |Δ^m f_0| / Σ_k C(m,k) |f_k|: the difference measured against its
  // own rounding scale.
  auto relative_difference = [&](Eigen::Index coord, int order) {
    double diff = 0.0;
    double mag = 0.0;
    double binom = 1.0;
    for (int k = 0; k <= order; ++k) {
      const double f = values(k, coord);
      const double sign = ((order - k) % 2 == 0) ? 1.0 : -1.0;
      diff += sign * binom * f;
      mag += binom * std::abs(f);
      binom = binom * static_cast<double>(order - k) / static_cast<double>(k + 1);
    }
    return mag > 0.0 ? std::abs(diff) / mag : 0.0;
  };

  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    int degree = max_degree + 1;
    for (int n = 0; n <= max_degree; ++n) {
      if (relative_difference(c, n + 1) < tolerance) {
        degree = n;
        break;
      }
    }
    report.degrees.push_back(degree);
    if (degree > report.bound) report.within_bound = false;
    if (max_degree >= report.bound) {
      report.rel_at_bound.push_back(relative_difference(c, report.bound));
      report.rel_above_bound.push_back(relative_difference(c, report.bound + 1));
    }
  }
  return report;
}

}  // namespace mainzsl
