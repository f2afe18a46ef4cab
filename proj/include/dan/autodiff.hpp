#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "dan/rng.hpp"
#include "dan/tensor.hpp"

// Reverse-mode automatic differentiation over tensors. Graphs are built by
// calling op factories (eager evaluation: each node's value is computed at
// construction); backward() then walks the graph once in reverse topological
// order. Graphs are acyclic by construction and gradients are reproducible
// bit for bit for a fixed dropout seed.

namespace dan::ad {

enum class Mode { kTrain, kInfer };

template <typename T>
class Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
class Node {
 public:
  virtual ~Node() = default;

  Tensor<T> value;
  /// Allocated (zeroed) by backward() for nodes that require gradients;
  /// untouched otherwise.
  Tensor<T> grad;
  bool requires_grad = false;

  const std::vector<NodePtr<T>>& inputs() const { return inputs_; }

  /// Push this node's gradient into its inputs' gradients (accumulating).
  virtual void backprop() {}

 protected:
  Node() = default;
  std::vector<NodePtr<T>> inputs_;
};

/// Trainable or fixed graph input.
template <typename T>
NodePtr<T> leaf(Tensor<T> value, bool requires_grad);

template <typename T>
NodePtr<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

/// Running state of one batch-normalized layer. gamma/beta are graph leaves so
/// one state can be spliced into many per-batch graphs; the running statistics
/// are plain tensors updated in train mode.
template <typename T>
struct BatchNormState {
  NodePtr<T> gamma;
  NodePtr<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T epsilon = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.9);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels, bool trainable = true);
  std::size_t channels() const { return running_mean.size(); }
};

// Op factories. All of them validate input shapes and throw
// std::invalid_argument with a shape diagnostic on mismatch.

/// Cross-correlation of [N, C, H, W] with [O, C, KH, KW] weights (no bias).
template <typename T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, int stride, int pad);

/// 2x2 max pooling with stride 2; spatial extents must be even.
template <typename T>
NodePtr<T> max_pool2d(NodePtr<T> x);

/// Affine layer: y = x w^T + b with x [N, I], w [O, I], b [O].
template <typename T>
NodePtr<T> dense(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b);

/// Elementwise max(x, 0); the backward pass uses subgradient 0 at x == 0.
template <typename T>
NodePtr<T> relu(NodePtr<T> x);

/// Batch normalization. Train mode draws statistics from the batch (which
/// must contain at least two samples) and updates state's running statistics
/// in place; infer mode is a pure function of the input and state.
template <typename T>
NodePtr<T> batch_norm(NodePtr<T> x, BatchNormState<T>& state, Mode mode);

/// Inverted dropout: in train mode keeps each element with probability
/// 1 - rate and scales kept elements by 1 / (1 - rate); in infer mode it is
/// the identity. The mask is drawn from `engine` (required in train mode when
/// rate > 0) and reused verbatim in the backward pass.
template <typename T>
NodePtr<T> dropout(NodePtr<T> x, double rate, Mode mode, rng::Engine* engine);

template <typename T>
NodePtr<T> reshape(NodePtr<T> x, std::vector<std::size_t> extents);

/// [N, C, H, W] -> [N, C*H*W].
template <typename T>
NodePtr<T> flatten(NodePtr<T> x);

/// Concatenate along the channel axis; inputs agree on N, H, W.
template <typename T>
NodePtr<T> concat_channels(std::vector<NodePtr<T>> xs);

/// Corner-aligned bilinear doubling: [N, C, H, W] -> [N, C, 2H, 2W].
template <typename T>
NodePtr<T> upscale2x(NodePtr<T> x);

/// Scalar sum of all elements (value shape [1]).
template <typename T>
NodePtr<T> sum(NodePtr<T> x);

/// Scalar dot product with a fixed coefficient tensor of the same shape.
template <typename T>
NodePtr<T> weighted_sum(NodePtr<T> x, Tensor<T> weights);

/// Reverse sweep from a scalar loss node: zeroes and reallocates gradients of
/// every node in the graph that requires them, seeds d(loss)/d(loss) = 1, and
/// accumulates gradients in reverse topological order.
template <typename T>
void backward(const NodePtr<T>& loss);

/// Central-difference gradient verification. Re-evaluates `loss` with probed
/// elements of `param` displaced by +/-step and compares against
/// `analytic_grad`. With probe_count == 0 every element is probed, otherwise
/// probe_count distinct random elements are drawn from `engine` (required).
/// The relative error denominator is floored at 1e-8.
struct FdCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
  bool pass = true;
};

FdCheckReport finite_difference_check(const std::function<double()>& loss, Tensor<double>& param,
                                      const Tensor<double>& analytic_grad, double step = 1e-4,
                                      double tolerance = 1e-3, std::size_t probe_count = 0,
                                      rng::Engine* engine = nullptr);

}  // namespace dan::ad
