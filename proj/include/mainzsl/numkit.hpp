#pragma once

// Dense double-precision kernel: shapes, activations, softmax, batch norm,
// first-order optimizers and a central-difference gradient checker.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mainzsl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

enum class Activation { kRelu, kSigmoid, kIdentity };

const char* to_string(Activation kind);

// Throws DataError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

// y = W x + b.
Vector linear(const Vector& x, const Matrix& weight, const Vector& bias);

// Row-batched form: row i of the result is W X[i]ᵀ + b.
Matrix linear_rows(const Matrix& x, const Matrix& weight, const RowVector& bias);

double activate(double x, Activation kind);
Vector activate(const Vector& x, Activation kind);
Matrix activate(const Matrix& x, Activation kind);
// Derivative expressed through the activation's output (valid for all three kinds).
double activation_grad_from_output(double y, Activation kind);

// Max-subtracted softmax; throws DimensionError on empty input.
Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);
// log softmax(logits)[index], stable.
double log_softmax_at(const Eigen::Ref<const RowVector>& logits, int index);

enum class NormMode { kTrain, kEval };

struct BatchNormState {
  Matrix gamma;  // 1×dim, trainable
  Matrix beta;   // 1×dim, trainable
  RowVector running_mean;
  RowVector running_var;
  // Retention factor: running <- momentum * running + (1 - momentum) * batch.
  double momentum = 0.9;
  double epsilon = 1e-5;
  NormMode mode = NormMode::kTrain;

  static BatchNormState identity(int dim);
  int dim() const { return static_cast<int>(gamma.cols()); }
};

struct BatchNormForward {
  Matrix output;
  Matrix normalized;   // x_hat
  RowVector inv_std;   // 1 / sqrt(var + eps), train: batch var, eval: running var
};

// Train mode normalizes with biased batch statistics and folds the unbiased
// batch variance into the running estimate. Eval mode uses running stats only.
BatchNormForward batch_norm_forward(const Matrix& x, BatchNormState& state);
Matrix batch_norm(const Matrix& x, BatchNormState& state);

struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};
using ParamList = std::vector<ParamRef>;
using GradList = std::vector<Matrix>;

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam step. Moment buffers are sized on first use.
// NaN/Inf in a gradient raises NumericError naming the parameter.
void adam_update(const ParamList& params, const GradList& grads, AdamState& state, double lr);

// p <- p - lr * g.
void sgd_update(const ParamList& params, const GradList& grads, double lr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Relative error used by grad_check. The floor keeps coordinates whose true
// gradient is ~0 from reporting pure finite-difference noise.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares `analytic` against central differences of `loss` taken by
// perturbing every coordinate of every parameter in place (restored after).
// The relative-error floor is 1e-6 * max(1, |loss|), the scale of the
// difference quotient's round-off.
GradCheckReport grad_check(const std::function<double()>& loss, const ParamList& params,
                           const GradList& analytic, double step = 1e-5);

Matrix kaiming_uniform(int rows, int cols, Rng& rng);
Matrix xavier_uniform(int rows, int cols, Rng& rng);
Matrix uniform_matrix(int rows, int cols, double lo, double hi, Rng& rng);
Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng);

}  // namespace mainzsl
