#pragma once

#include "mainzsl/encoder.hpp"
#include "mainzsl/numkit.hpp"
#include "mainzsl/tape.hpp"

#include <span>
#include <vector>

namespace mainzsl {

struct LossBreakdown {
  double ce = 0.0;
  double ir = 0.0;
  double lambda = 0.0;
  double total = 0.0;  // ce + lambda * ir
};

// One optimization batch. Labels index rows of `class_attributes`, which hold
// the seen-class attributes available at the current task.
struct TrainBatch {
  Matrix features;           // B × d
  std::vector<int> labels;   // B, local indices into class_attributes
  Matrix class_attributes;   // C_s × D
};

// Batch-mean cross-entropy. Out-of-range labels raise DataError.
double cross_entropy_loss(const Matrix& logits, std::span<const int> labels);

// Σ_a ||R(f(a)) - a||², with the encoder in eval mode.
double ir_loss(const Matrix& attributes, const EncoderParams& encoder, const RegressorParams& regressor);
double ir_loss_from_reconstruction(const Matrix& attributes, const Matrix& reconstruction);

struct JointGraph {
  Var total;
  LossBreakdown breakdown;
};

// Records ce + lambda * ir on `tape`. Class embeddings and the cyclic
// reconstruction share one encoder pass over the seen-class attributes.
JointGraph record_joint_loss(GradTape& tape, const TrainBatch& batch, MainModel& model, double lambda,
                             NormMode mode = NormMode::kTrain);

LossBreakdown joint_loss(const TrainBatch& batch, MainModel& model, double lambda,
                         NormMode mode = NormMode::kTrain);

// Loss and gradients for every entry of model.parameters(), in order.
struct LossAndGrads {
  LossBreakdown loss;
  GradList grads;
};
LossAndGrads joint_loss_and_grads(const TrainBatch& batch, MainModel& model, double lambda,
                                  NormMode mode = NormMode::kTrain);

// -log N(a; r, I) evaluated coordinate-wise from the density, next to ½||a - r||².
// The two differ by exactly (D/2) ln 2π.
struct GaussianLoglik {
  double neg_loglik = 0.0;
  double half_sq_err = 0.0;
};
GaussianLoglik gaussian_loglik_identity(const Vector& attribute, const Vector& reconstruction);

}  // namespace mainzsl
