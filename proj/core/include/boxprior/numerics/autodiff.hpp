#pragma once

// Reverse-mode differentiation over a recorded sequence of matrix ops.
//
// A Tape owns every intermediate value. Ops append a node holding the
// forward value plus a closure that pushes the node's gradient back to its
// inputs. Nodes only record a closure when some input needs a gradient, so
// a tape made of constants is a cheap forward evaluator.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "boxprior/numerics/matrix.hpp"
#include "boxprior/numerics/params.hpp"

namespace boxprior::numerics {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backward =
      std::function<void(Tape&, const Matrix& out_value, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulated by the last backward(); zeros if none reached v.
  Matrix grad(Var v) const;

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and runs every
  /// recorded closure in reverse order.
  void backward(Var output);

  /// Adds `g` into the gradient of `v` (no-op for constants).
  void accumulate(Var v, const Matrix& g);

  /// Appends a node. `backward` is dropped when no input requires a grad.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Tape& t, Var a, Var b);
/// a * b^T
Var matmul_transposed(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var hadamard(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var add_row_bias(Tape& t, Var a, Var bias);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var gather_rows(Tape& t, Var a, std::span<const std::size_t> rows);
Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var activation(Tape& t, Var a, Activation act);
Var softmax_rows(Tape& t, Var a);
/// N x 1 column of row-pair cosine similarities.
Var cosine_similarity(Tape& t, Var a, Var b, double epsilon);
/// Forwards the value, blocks the gradient.
Var stop_gradient(Tape& t, Var a);

/// Scalar (1x1) outputs.
Var cross_entropy(Tape& t, Var logits, std::span<const int> labels);
/// KL(p || q); gradients flow into both arguments.
Var kl_divergence(Tape& t, Var p, Var q);
Var lovasz_softmax(Tape& t, Var probs, std::span<const int> labels);
/// sum_i weight_i * scalar_i
Var weighted_sum(Tape& t, std::span<const Var> scalars, std::span<const double> weights);
/// sum over all entries of a (.) weights, weights fixed.
Var dot_constant(Tape& t, Var a, const Matrix& weights);

Var mlp(Tape& t, const MlpT<Var>& params, Var input);
std::vector<Var> mlp_taps(Tape& t, const MlpT<Var>& params, Var input);
/// Same contract as numerics::multihead_attention; key_scalar is N x 1.
Var multihead_attention(Tape& t, const AttentionT<Var>& params, Var query,
                        Var key_scalar, Var value);

}  // namespace ad

/// Places every tensor of `params` on the tape as a parameter.
inline MlpT<Var> bind(Tape& t, const MlpParams& params) {
  return map_tensors(params, [&](const Matrix& m) { return t.parameter(m); });
}
inline AttentionT<Var> bind(Tape& t, const AttentionParams& params) {
  return map_tensors(params, [&](const Matrix& m) { return t.parameter(m); });
}
/// Reads gradients back into a value-shaped container.
inline MlpParams gradients(const Tape& t, const MlpT<Var>& vars) {
  return map_tensors(vars, [&](Var v) { return t.grad(v); });
}
inline AttentionParams gradients(const Tape& t, const AttentionT<Var>& vars) {
  return map_tensors(vars, [&](Var v) { return t.grad(v); });
}

}  // namespace boxprior::numerics
