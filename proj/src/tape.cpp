#include "mainzsl/tape.hpp"

#include "mainzsl/errors.hpp"

#include <cmath>
#include <sstream>

namespace mainzsl {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw DimensionError(os.str());
  }
}

}  // namespace

Var GradTape::push(Matrix value, std::function<void(GradTape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
  has_grads_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const GradTape::Node& GradTape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("GradTape: invalid variable handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var GradTape::constant(Matrix value) { return push(std::move(value)); }

Var GradTape::parameter(Matrix& storage, std::string_view /*name*/) {
  if (auto it = params_.find(&storage); it != params_.end()) return Var{it->second};
  Var v = push(storage);
  params_.emplace(&storage, v.id);
  return v;
}

const Matrix& GradTape::value(Var v) const { return node(v).value; }

Var GradTape::linear(Var x, Var weight, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1) throw DimensionError("GradTape::linear: bias must be a row vector");
  Matrix y = linear_rows(xv, wv, bv.row(0));
  return push(std::move(y), [x, weight, bias](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    const Matrix& xv = t.nodes_[x.id].value;
    const Matrix& wv = t.nodes_[weight.id].value;
    t.grad_ref(x.id) += dy * wv;
    t.grad_ref(weight.id) += dy.transpose() * xv;
    t.grad_ref(bias.id) += dy.colwise().sum();
  });
}

Var GradTape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "GradTape::add");
  Matrix y = value(a) + value(b);
  return push(std::move(y), [a, b](GradTape& t, int self) {
    t.grad_ref(a.id) += t.grad_ref(self);
    t.grad_ref(b.id) += t.grad_ref(self);
  });
}

Var GradTape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "GradTape::sub");
  Matrix y = value(a) - value(b);
  return push(std::move(y), [a, b](GradTape& t, int self) {
    t.grad_ref(a.id) += t.grad_ref(self);
    t.grad_ref(b.id) -= t.grad_ref(self);
  });
}

Var GradTape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "GradTape::mul");
  Matrix y = value(a).cwiseProduct(value(b));
  return push(std::move(y), [a, b](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    t.grad_ref(a.id) += dy.cwiseProduct(t.nodes_[b.id].value);
    t.grad_ref(b.id) += dy.cwiseProduct(t.nodes_[a.id].value);
  });
}

Var GradTape::scale(Var x, double factor) {
  Matrix y = factor * value(x);
  return push(std::move(y), [x, factor](GradTape& t, int self) { t.grad_ref(x.id) += factor * t.grad_ref(self); });
}

Var GradTape::scale_by(Var x, Var scalar) {
  const Matrix& s = value(scalar);
  if (s.rows() != 1 || s.cols() != 1) throw DimensionError("GradTape::scale_by: scalar must be 1x1");
  Matrix y = s(0, 0) * value(x);
  return push(std::move(y), [x, scalar](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    const double s = t.nodes_[scalar.id].value(0, 0);
    t.grad_ref(x.id) += s * dy;
    t.grad_ref(scalar.id)(0, 0) += dy.cwiseProduct(t.nodes_[x.id].value).sum();
  });
}

Var GradTape::exp(Var x) {
  Matrix y = value(x).array().exp().matrix();
  return push(std::move(y), [x](GradTape& t, int self) {
    t.grad_ref(x.id) += t.grad_ref(self).cwiseProduct(t.nodes_[self].value);
  });
}

Var GradTape::activate(Var x, Activation kind) {
  Matrix y = mainzsl::activate(value(x), kind);
  return push(std::move(y), [x, kind](GradTape& t, int self) {
    const Matrix& yv = t.nodes_[self].value;
    const Matrix local = yv.unaryExpr([kind](double v) { return activation_grad_from_output(v, kind); });
    t.grad_ref(x.id) += t.grad_ref(self).cwiseProduct(local);
  });
}

Var GradTape::batch_norm(Var x, Var gamma, Var beta, BatchNormState& state) {
  if (value(gamma).cols() != state.dim() || value(beta).cols() != state.dim()) {
    throw DimensionError("GradTape::batch_norm: gamma/beta do not match the state dimension");
  }
  BatchNormForward fwd = batch_norm_forward(value(x), state);
  const bool train = state.mode == NormMode::kTrain;
  return push(std::move(fwd.output), [x, gamma, beta, train, xhat = std::move(fwd.normalized),
                                      inv_std = std::move(fwd.inv_std)](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    const RowVector g = t.nodes_[gamma.id].value.row(0);
    t.grad_ref(gamma.id) += dy.cwiseProduct(xhat).colwise().sum();
    t.grad_ref(beta.id) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * g.array();
    if (!train) {
      t.grad_ref(x.id) += (dxhat.array().rowwise() * inv_std.array()).matrix();
      return;
    }
    const double n = static_cast<double>(dy.rows());
    const RowVector sum_dxhat = dxhat.colwise().sum();
    const RowVector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
    Matrix dx = (n * dxhat).rowwise() - sum_dxhat;
    dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
    dx = (dx.array().rowwise() * (inv_std.array() / n)).matrix();
    t.grad_ref(x.id) += dx;
  });
}

Var GradTape::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw DimensionError("GradTape::matmul_nt: inner dims differ");
  Matrix y = value(a) * value(b).transpose();
  return push(std::move(y), [a, b](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    t.grad_ref(a.id) += dy * t.nodes_[b.id].value;
    t.grad_ref(b.id) += dy.transpose() * t.nodes_[a.id].value;
  });
}

Var GradTape::normalize_rows(Var x) {
  const Matrix& xv = value(x);
  Vector norms = xv.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) {
      std::ostringstream os;
      os << "normalize_rows: row " << r << " has zero norm";
      throw NumericError(os.str());
    }
  }
  Matrix y = xv.array().colwise() / norms.array();
  return push(std::move(y), [x, norms = std::move(norms)](GradTape& t, int self) {
    const Matrix& dy = t.grad_ref(self);
    const Matrix& yv = t.nodes_[self].value;
    const Vector proj = dy.cwiseProduct(yv).rowwise().sum();
    Matrix dx = dy - (yv.array().colwise() * proj.array()).matrix();
    t.grad_ref(x.id) += (dx.array().colwise() / norms.array()).matrix();
  });
}

Var GradTape::cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& lv = value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != lv.rows()) {
    throw DimensionError("GradTape::cross_entropy: label count differs from batch size");
  }
  if (lv.rows() == 0) throw DimensionError("GradTape::cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= lv.cols()) {
      std::ostringstream os;
      os << "cross_entropy: label " << y << " outside [0, " << lv.cols() << ") at row " << r;
      throw DataError(os.str());
    }
    total -= log_softmax_at(lv.row(r), y);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(lv.rows());
  std::vector<int> owned(labels.begin(), labels.end());
  return push(std::move(out), [logits, owned = std::move(owned)](GradTape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    const Matrix& lv = t.nodes_[logits.id].value;
    Matrix d = softmax_rows(lv);
    for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, owned[static_cast<std::size_t>(r)]) -= 1.0;
    t.grad_ref(logits.id) += (g / static_cast<double>(lv.rows())) * d;
  });
}

Var GradTape::sum_squares(Var x) {
  Matrix out(1, 1);
  out(0, 0) = value(x).squaredNorm();
  return push(std::move(out), [x](GradTape& t, int self) {
    t.grad_ref(x.id) += (2.0 * t.grad_ref(self)(0, 0)) * t.nodes_[x.id].value;
  });
}

std::size_t GradTape::backward(Var root) {
  const Matrix& rv = node(root).value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    std::ostringstream os;
    os << "backward: root must be scalar, got " << rv.rows() << "x" << rv.cols();
    throw ContractError(os.str());
  }
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) = 1.0;
  std::size_t visited = 0;
  for (int i = root.id; i >= 0; --i) {
    ++visited;
    if (nodes_[static_cast<std::size_t>(i)].back) nodes_[static_cast<std::size_t>(i)].back(*this, i);
  }
  has_grads_ = true;
  return visited;
}

const Matrix& GradTape::gradient(Var v) const {
  if (!has_grads_) throw ContractError("GradTape::gradient: backward() has not run");
  return node(v).grad;
}

Matrix GradTape::gradient_of(const Matrix& storage) const {
  auto it = params_.find(&storage);
  if (it == params_.end()) return Matrix::Zero(storage.rows(), storage.cols());
  return gradient(Var{it->second});
}

GradList GradTape::gradients(const ParamList& params) const {
  GradList out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(gradient_of(*p.value));
  return out;
}

}  // namespace mainzsl
