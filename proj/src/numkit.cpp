#include "mainzsl/numkit.hpp"

#include "mainzsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mainzsl {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kIdentity:
      return "identity";
  }
  return "?";
}

void require_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << what << ": non-finite value at (" << r << ", " << c << ")";
        throw DataError(os.str());
      }
    }
  }
}

Vector linear(const Vector& x, const Matrix& weight, const Vector& bias) {
  if (weight.cols() != x.size() || weight.rows() != bias.size()) {
    std::ostringstream os;
    os << "linear: W is " << shape_of(weight) << ", x has " << x.size() << ", b has "
       << bias.size();
    throw DimensionError(os.str());
  }
  return weight * x + bias;
}

Matrix linear_rows(const Matrix& x, const Matrix& weight, const RowVector& bias) {
  if (weight.cols() != x.cols() || weight.rows() != bias.size()) {
    std::ostringstream os;
    os << "linear_rows: X is " << shape_of(x) << ", W is " << shape_of(weight) << ", b has "
       << bias.size();
    throw DimensionError(os.str());
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias;
  return y;
}

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      // Split by sign so exp never overflows.
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      {
        const double e = std::exp(x);
        return e / (1.0 + e);
      }
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Vector activate(const Vector& x, Activation kind) {
  return x.unaryExpr([kind](double v) { return activate(v, kind); });
}

Matrix activate(const Matrix& x, Activation kind) {
  return x.unaryExpr([kind](double v) { return activate(v, kind); });
}

double activation_grad_from_output(double y, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid:
      return y * (1.0 - y);
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw DimensionError("softmax: empty logits");
  const double shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  if (logits.cols() == 0) throw DimensionError("softmax_rows: empty logits");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double shift = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - shift).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

double log_softmax_at(const Eigen::Ref<const RowVector>& logits, int index) {
  const double shift = logits.maxCoeff();
  const double lse = shift + std::log((logits.array() - shift).exp().sum());
  return logits(index) - lse;
}

BatchNormState BatchNormState::identity(int dim) {
  BatchNormState s;
  s.gamma = Matrix::Ones(1, dim);
  s.beta = Matrix::Zero(1, dim);
  s.running_mean = RowVector::Zero(dim);
  s.running_var = RowVector::Ones(dim);
  return s;
}

BatchNormForward batch_norm_forward(const Matrix& x, BatchNormState& state) {
  if (x.cols() != state.dim()) {
    std::ostringstream os;
    os << "batch_norm: input is " << shape_of(x) << ", state has dim " << state.dim();
    throw DimensionError(os.str());
  }
  BatchNormForward out;
  if (state.mode == NormMode::kTrain) {
    const Eigen::Index batch = x.rows();
    if (batch < 2) throw DimensionError("batch_norm: train mode needs a batch of at least 2 rows");
    const RowVector mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    const RowVector var = centered.array().square().colwise().sum().matrix() / static_cast<double>(batch);
    out.inv_std = (var.array() + state.epsilon).rsqrt().matrix();
    out.normalized = centered.array().rowwise() * out.inv_std.array();
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    state.running_mean = state.momentum * state.running_mean + (1.0 - state.momentum) * mean;
    state.running_var = state.momentum * state.running_var + (1.0 - state.momentum) * unbias * var;
  } else {
    out.inv_std = (state.running_var.array() + state.epsilon).rsqrt().matrix();
    out.normalized = (x.rowwise() - state.running_mean).array().rowwise() * out.inv_std.array();
  }
  out.output = (out.normalized.array().rowwise() * state.gamma.row(0).array()).rowwise() +
               state.beta.row(0).array();
  return out;
}

Matrix batch_norm(const Matrix& x, BatchNormState& state) { return batch_norm_forward(x, state).output; }

void adam_update(const ParamList& params, const GradList& grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_update: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      state.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_update: state does not match params");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].value->rows() || g.cols() != params[i].value->cols()) {
      throw DimensionError("adam_update: gradient shape mismatch for " + params[i].name);
    }
    if (!g.allFinite()) throw NumericError("adam_update: non-finite gradient in " + params[i].name);
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
    Matrix& p = *params[i].value;
    p.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.epsilon);
  }
}

void sgd_update(const ParamList& params, const GradList& grads, double lr) {
  if (params.size() != grads.size()) throw DimensionError("sgd_update: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].allFinite()) throw NumericError("sgd_update: non-finite gradient in " + params[i].name);
    *params[i].value -= lr * grads[i];
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss, const ParamList& params,
                           const GradList& analytic, double step) {
  if (params.size() != analytic.size()) throw DimensionError("grad_check: params/grads count mismatch");
  GradCheckReport report;
  double total = 0.0;
  const double floor = 1e-6 * std::max(1.0, std::abs(loss()));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = *params[p].value;
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      double& coord = value.data()[k];
      const double saved = coord;
      coord = saved + step;
      const double up = loss();
      coord = saved - step;
      const double down = loss();
      coord = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[k];
      const double err = relative_error(a, numeric, floor);
      total += err;
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = err;
        report.worst_param = params[p].name;
        report.worst_index = static_cast<int>(k);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  if (report.coordinates > 0) report.mean_rel_error = total / static_cast<double>(report.coordinates);
  return report;
}

Matrix uniform_matrix(int rows, int cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

Matrix kaiming_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(cols));
  return uniform_matrix(rows, cols, -bound, bound, rng);
}

Matrix xavier_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_matrix(rows, cols, -bound, bound, rng);
}

}  // namespace mainzsl
