#include "mainzsl/objective.hpp"

#include "mainzsl/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace mainzsl {

double cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw DimensionError("cross_entropy_loss: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw DimensionError("cross_entropy_loss: label count differs from batch size");
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) {
      std::ostringstream os;
      os << "cross_entropy_loss: label " << y << " outside [0, " << logits.cols() << ") at row " << r;
      throw DataError(os.str());
    }
    total -= log_softmax_at(logits.row(r), y);
  }
  return total / static_cast<double>(logits.rows());
}

double ir_loss_from_reconstruction(const Matrix& attributes, const Matrix& reconstruction) {
  if (attributes.rows() != reconstruction.rows() || attributes.cols() != reconstruction.cols()) {
    throw DimensionError("ir_loss: reconstruction shape differs from attributes");
  }
  return (reconstruction - attributes).squaredNorm();
}

double ir_loss(const Matrix& attributes, const EncoderParams& encoder, const RegressorParams& regressor) {
  return ir_loss_from_reconstruction(attributes,
                                     inverse_regress_rows(encode_attributes(attributes, encoder), regressor));
}

JointGraph record_joint_loss(GradTape& tape, const TrainBatch& batch, MainModel& model, double lambda,
                             NormMode mode) {
  if (!(lambda >= 0.0)) throw ConfigError("joint_loss: lambda must be >= 0");
  if (batch.features.rows() == 0) throw DataError("joint_loss: empty batch");
  Var attrs = tape.constant(batch.class_attributes);
  Var z = record_encoder(tape, attrs, model.encoder, mode);
  Var logits = record_logits(tape, tape.constant(batch.features), z, model.head);
  Var ce = tape.cross_entropy(logits, batch.labels);
  Var recon = record_regressor(tape, z, model.regressor);
  Var ir = tape.sum_squares(tape.sub(recon, attrs));
  Var total = tape.add(ce, tape.scale(ir, lambda));

  JointGraph g;
  g.total = total;
  g.breakdown.ce = tape.value(ce)(0, 0);
  g.breakdown.ir = tape.value(ir)(0, 0);
  g.breakdown.lambda = lambda;
  g.breakdown.total = tape.value(total)(0, 0);
  return g;
}

LossBreakdown joint_loss(const TrainBatch& batch, MainModel& model, double lambda, NormMode mode) {
  GradTape tape;
  return record_joint_loss(tape, batch, model, lambda, mode).breakdown;
}

LossAndGrads joint_loss_and_grads(const TrainBatch& batch, MainModel& model, double lambda, NormMode mode) {
  GradTape tape;
  JointGraph g = record_joint_loss(tape, batch, model, lambda, mode);
  tape.backward(g.total);
  return {g.breakdown, tape.gradients(model.parameters())};
}

GaussianLoglik gaussian_loglik_identity(const Vector& attribute, const Vector& reconstruction) {
  if (attribute.size() != reconstruction.size()) {
    throw DimensionError("gaussian_loglik_identity: dimension mismatch");
  }
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
  GaussianLoglik out;
  for (Eigen::Index i = 0; i < attribute.size(); ++i) {
    const double d = attribute(i) - reconstruction(i);
    const double log_pdf = -0.5 * d * d - log_norm;  // log of a unit-variance normal density
    out.neg_loglik -= log_pdf;
  }
  out.half_sq_err = 0.5 * (attribute - reconstruction).squaredNorm();
  return out;
}

}  // namespace mainzsl
