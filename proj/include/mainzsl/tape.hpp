#pragma once

#include "mainzsl/numkit.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mainzsl {

// Handle to a value recorded on a GradTape.
struct Var {
  int id = -1;
};

// Records matrix-valued primitives in evaluation order and replays the chain
// rule in reverse. Node ids are a topological order by construction, so the
// backward sweep is a single pass from the root down to node 0.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var constant(Matrix value);
  // Registers trainable storage. Repeated registration of the same storage
  // returns the same node so gradients accumulate in one place.
  Var parameter(Matrix& storage, std::string_view name);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Row-batched affine map: X (B×n), W (m×n), b (1×m) -> B×m.
  Var linear(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var x, double factor);
  Var scale_by(Var x, Var scalar);  // scalar is 1×1
  Var exp(Var x);
  Var activate(Var x, Activation kind);
  // Mode is taken from `state`; train mode also advances the running stats.
  Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state);
  Var matmul_nt(Var a, Var b);  // A Bᵀ
  // Each row divided by its L2 norm; a zero row raises NumericError.
  Var normalize_rows(Var x);
  // Mean over rows of -log softmax(row)[label].
  Var cross_entropy(Var logits, std::span<const int> labels);
  Var sum_squares(Var x);

  // Throws ContractError unless the root is 1×1. Returns the number of nodes
  // visited by the reverse sweep.
  std::size_t backward(Var root);

  const Matrix& gradient(Var v) const;
  // Zero matrix of the storage's shape when the storage never entered the graph.
  Matrix gradient_of(const Matrix& storage) const;
  GradList gradients(const ParamList& params) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(GradTape&, int self)> back;
  };

  Var push(Matrix value, std::function<void(GradTape&, int)> back = {});
  Matrix& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> params_;
  bool has_grads_ = false;
};

}  // namespace mainzsl
