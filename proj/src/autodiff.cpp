#include "dan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dan/kernels.hpp"

namespace dan::ad {

namespace {

void check(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

template <typename T>
bool any_requires(const std::vector<NodePtr<T>>& xs) {
  for (const auto& x : xs) {
    check(x != nullptr, "graph op: null input node");
    if (x->requires_grad) return true;
  }
  return false;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------

template <typename T>
class LeafNode final : public Node<T> {
 public:
  LeafNode(Tensor<T> v, bool rg) {
    check(!v.empty(), "leaf: empty tensor");
    this->value = std::move(v);
    this->requires_grad = rg;
  }
};

template <typename T>
class Conv2dNode final : public Node<T> {
 public:
  Conv2dNode(NodePtr<T> x, NodePtr<T> w, int stride, int pad) : stride_(stride), pad_(pad) {
    check(stride >= 1, "conv2d: stride must be at least 1");
    check(pad >= 0, "conv2d: padding must be non-negative");
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    check(xs.size() == 4 && ws.size() == 4,
          "conv2d: expected rank-4 input and weights, got " + shape_to_string(xs) + " and " +
              shape_to_string(ws));
    check(xs[1] == ws[1], "conv2d: channel mismatch between input " + shape_to_string(xs) +
                              " and weights " + shape_to_string(ws));
    const auto h = static_cast<long>(xs[2]), wid = static_cast<long>(xs[3]);
    const auto kh = static_cast<long>(ws[2]), kw = static_cast<long>(ws[3]);
    const long oh = (h + 2L * pad - kh) / stride + 1;
    const long ow = (wid + 2L * pad - kw) / stride + 1;
    check(h + 2L * pad >= kh && wid + 2L * pad >= kw && oh >= 1 && ow >= 1,
          "conv2d: kernel " + shape_to_string(ws) + " does not fit input " + shape_to_string(xs) +
              " with padding " + std::to_string(pad));
    this->value = Tensor<T>({xs[0], ws[0], static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    kernels::conv2d_forward(x->value, w->value, stride, pad, this->value);
    this->inputs_ = {std::move(x), std::move(w)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    Node<T>& w = *this->inputs_[1];
    if (x.requires_grad) kernels::conv2d_backward_input(this->grad, w.value, stride_, pad_, x.grad);
    if (w.requires_grad) kernels::conv2d_backward_weights(this->grad, x.value, stride_, pad_, w.grad);
  }

 private:
  int stride_, pad_;
};

template <typename T>
class MaxPool2dNode final : public Node<T> {
 public:
  explicit MaxPool2dNode(NodePtr<T> x) {
    const auto& xs = x->value.shape();
    check(xs.size() == 4, "max_pool2d: expected rank-4 input, got " + shape_to_string(xs));
    check(xs[2] % 2 == 0 && xs[3] % 2 == 0,
          "max_pool2d: spatial extents must be even, got " + shape_to_string(xs));
    this->value = Tensor<T>({xs[0], xs[1], xs[2] / 2, xs[3] / 2});
    kernels::max_pool2d_forward(x->value, this->value, argmax_);
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (x.requires_grad) kernels::max_pool2d_backward(this->grad, argmax_, x.grad);
  }

 private:
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class DenseNode final : public Node<T> {
 public:
  DenseNode(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    const auto& bs = b->value.shape();
    check(xs.size() == 2 && ws.size() == 2 && bs.size() == 1,
          "dense: expected shapes [N, I], [O, I], [O], got " + shape_to_string(xs) + ", " +
              shape_to_string(ws) + ", " + shape_to_string(bs));
    check(xs[1] == ws[1], "dense: inner extent mismatch between input " + shape_to_string(xs) +
                              " and weights " + shape_to_string(ws));
    check(bs[0] == ws[0], "dense: bias " + shape_to_string(bs) + " does not match weights " +
                              shape_to_string(ws));
    this->value = Tensor<T>({xs[0], ws[0]});
    kernels::dense_forward(x->value, w->value, b->value, this->value);
    this->inputs_ = {std::move(x), std::move(w), std::move(b)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    Node<T>& w = *this->inputs_[1];
    Node<T>& b = *this->inputs_[2];
    if (x.requires_grad) kernels::dense_backward_input(this->grad, w.value, x.grad);
    if (w.requires_grad) kernels::dense_backward_weights(this->grad, x.value, w.grad);
    if (b.requires_grad) kernels::dense_backward_bias(this->grad, b.grad);
  }
};

template <typename T>
class ReluNode final : public Node<T> {
 public:
  explicit ReluNode(NodePtr<T> x) {
    this->value = Tensor<T>(x->value.shape());
    kernels::relu_forward(x->value, this->value);
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (x.requires_grad) kernels::relu_backward(this->grad, x.value, x.grad);
  }
};

template <typename T>
class BatchNormNode final : public Node<T> {
 public:
  BatchNormNode(NodePtr<T> x, BatchNormState<T>& state, Mode mode) : mode_(mode), epsilon_(state.epsilon) {
    const auto& xs = x->value.shape();
    check(xs.size() == 2 || xs.size() == 4,
          "batch_norm: expected rank-2 or rank-4 input, got " + shape_to_string(xs));
    check(xs[1] == state.channels(),
          "batch_norm: input " + shape_to_string(xs) + " does not match " +
              std::to_string(state.channels()) + " state channels");
    check(state.epsilon > T{}, "batch_norm: epsilon must be positive");
    if (mode == Mode::kTrain) {
      check(xs[0] >= 2, "batch_norm: train mode needs a batch of at least 2, got " +
                            shape_to_string(xs));
      stat_mean_ = Tensor<T>({state.channels()});
      stat_var_ = Tensor<T>({state.channels()});
      kernels::channel_mean_var(x->value, stat_mean_, stat_var_);
      // Exponential running statistics: r <- momentum * r + (1 - m) * batch.
      for (std::size_t c = 0; c < state.channels(); ++c) {
        state.running_mean[c] = state.momentum * state.running_mean[c] +
                                (T{1} - state.momentum) * stat_mean_[c];
        state.running_var[c] = state.momentum * state.running_var[c] +
                               (T{1} - state.momentum) * stat_var_[c];
      }
    } else {
      stat_mean_ = state.running_mean;
      stat_var_ = state.running_var;
    }
    this->value = Tensor<T>(xs);
    xhat_ = Tensor<T>(xs);
    kernels::batch_norm_apply(x->value, stat_mean_, stat_var_, state.gamma->value,
                              state.beta->value, epsilon_, this->value, xhat_);
    this->inputs_ = {std::move(x), state.gamma, state.beta};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    Node<T>& gamma = *this->inputs_[1];
    Node<T>& beta = *this->inputs_[2];
    Tensor<T> scratch_x, scratch_g, scratch_b;
    Tensor<T>* gx = &x.grad;
    Tensor<T>* gg = &gamma.grad;
    Tensor<T>* gb = &beta.grad;
    if (!x.requires_grad) {
      scratch_x = Tensor<T>(x.value.shape());
      gx = &scratch_x;
    }
    if (!gamma.requires_grad) {
      scratch_g = Tensor<T>(gamma.value.shape());
      gg = &scratch_g;
    }
    if (!beta.requires_grad) {
      scratch_b = Tensor<T>(beta.value.shape());
      gb = &scratch_b;
    }
    if (mode_ == Mode::kTrain) {
      kernels::batch_norm_backward_train(this->grad, xhat_, gamma.value, stat_var_, epsilon_, *gx,
                                         *gg, *gb);
    } else {
      kernels::batch_norm_backward_infer(this->grad, xhat_, gamma.value, stat_var_, epsilon_, *gx,
                                         *gg, *gb);
    }
  }

 private:
  Mode mode_;
  T epsilon_;
  Tensor<T> stat_mean_, stat_var_, xhat_;
};

template <typename T>
class DropoutNode final : public Node<T> {
 public:
  DropoutNode(NodePtr<T> x, double rate, Mode mode, rng::Engine* engine) {
    check(rate >= 0.0 && rate <= 1.0, "dropout: rate must lie in [0, 1]");
    active_ = (mode == Mode::kTrain) && rate > 0.0;
    if (active_) {
      check(engine != nullptr, "dropout: train mode needs a random engine");
      const double keep = 1.0 - rate;
      const T scale = keep > 0.0 ? static_cast<T>(1.0 / keep) : T{};
      mask_ = Tensor<T>(x->value.shape());
      for (std::size_t i = 0; i < mask_.size(); ++i) {
        mask_[i] = (rng::uniform_unit(*engine) < keep) ? scale : T{};
      }
      this->value = Tensor<T>(x->value.shape());
      kernels::apply_mask(x->value, mask_, this->value);
    } else {
      this->value = x->value;
    }
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (!x.requires_grad) return;
    if (active_) {
      kernels::apply_mask_accumulate(this->grad, mask_, x.grad);
    } else {
      accumulate(x.grad, this->grad);
    }
  }

 private:
  bool active_ = false;
  Tensor<T> mask_;
};

template <typename T>
class ReshapeNode final : public Node<T> {
 public:
  ReshapeNode(NodePtr<T> x, std::vector<std::size_t> extents) {
    Tensor<T> v(std::move(extents));
    check(v.size() == x->value.size(),
          "reshape: cannot view " + shape_to_string(x->value.shape()) + " as " +
              shape_to_string(v.shape()));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->value[i];
    this->value = std::move(v);
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (x.requires_grad) accumulate(x.grad, this->grad);
  }
};

template <typename T>
class ConcatChannelsNode final : public Node<T> {
 public:
  explicit ConcatChannelsNode(std::vector<NodePtr<T>> xs) {
    check(!xs.empty(), "concat_channels: no inputs");
    const auto& first = xs[0]->value.shape();
    check(first.size() == 4, "concat_channels: expected rank-4 inputs, got " + shape_to_string(first));
    std::size_t channels = 0;
    for (const auto& x : xs) {
      const auto& s = x->value.shape();
      check(s.size() == 4 && s[0] == first[0] && s[2] == first[2] && s[3] == first[3],
            "concat_channels: input " + shape_to_string(s) + " does not match " +
                shape_to_string(first) + " outside the channel axis");
      channels += s[1];
    }
    const std::size_t n = first[0], h = first[2], w = first[3], plane = h * w;
    this->value = Tensor<T>({n, channels, h, w});
    for (std::size_t bn = 0; bn < n; ++bn) {
      std::size_t c_out = 0;
      for (const auto& x : xs) {
        const std::size_t ci = x->value.dim(1);
        const T* src = x->value.data() + bn * ci * plane;
        T* dst = this->value.data() + (bn * channels + c_out) * plane;
        std::copy(src, src + ci * plane, dst);
        c_out += ci;
      }
    }
    this->inputs_ = std::move(xs);
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    const std::size_t n = this->value.dim(0), channels = this->value.dim(1);
    const std::size_t plane = this->value.dim(2) * this->value.dim(3);
    for (std::size_t bn = 0; bn < n; ++bn) {
      std::size_t c_out = 0;
      for (const auto& x : this->inputs_) {
        const std::size_t ci = x->value.dim(1);
        if (x->requires_grad) {
          const T* src = this->grad.data() + (bn * channels + c_out) * plane;
          T* dst = x->grad.data() + bn * ci * plane;
          for (std::size_t i = 0; i < ci * plane; ++i) dst[i] += src[i];
        }
        c_out += ci;
      }
    }
  }
};

template <typename T>
class Upscale2xNode final : public Node<T> {
 public:
  explicit Upscale2xNode(NodePtr<T> x) {
    const auto& xs = x->value.shape();
    check(xs.size() == 4, "upscale2x: expected rank-4 input, got " + shape_to_string(xs));
    this->value = Tensor<T>({xs[0], xs[1], 2 * xs[2], 2 * xs[3]});
    kernels::upscale2x_forward(x->value, this->value);
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (x.requires_grad) kernels::upscale2x_backward(this->grad, x.grad);
  }
};

template <typename T>
class WeightedSumNode final : public Node<T> {
 public:
  WeightedSumNode(NodePtr<T> x, Tensor<T> weights) : weights_(std::move(weights)) {
    check(weights_.same_shape(x->value) || weights_.empty(),
          "weighted_sum: coefficients " + shape_to_string(weights_.shape()) +
              " do not match input " + shape_to_string(x->value.shape()));
    T acc{};
    if (weights_.empty()) {
      for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
    } else {
      for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i] * weights_[i];
    }
    this->value = Tensor<T>({1}, {acc});
    this->inputs_ = {std::move(x)};
    this->requires_grad = any_requires(this->inputs_);
  }

  void backprop() override {
    Node<T>& x = *this->inputs_[0];
    if (!x.requires_grad) return;
    const T g = this->grad[0];
    if (weights_.empty()) {
      for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += g;
    } else {
      for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += g * weights_[i];
    }
  }

 private:
  Tensor<T> weights_;  // empty means plain sum
};

// ---------------------------------------------------------------------------

template <typename T>
std::vector<Node<T>*> topo_postorder(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Node<T>* node = stack.back().first;
    std::size_t& next = stack.back().second;
    if (next < node->inputs().size()) {
      Node<T>* child = node->inputs()[next].get();
      ++next;
      if (visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs precede the nodes that consume them
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
BatchNormState<T>::BatchNormState(std::size_t channels, bool trainable)
    : gamma(leaf(Tensor<T>::full({channels}, T{1}), trainable)),
      beta(leaf(Tensor<T>({channels}), trainable)),
      running_mean(Tensor<T>({channels})),
      running_var(Tensor<T>::full({channels}, T{1})) {}

template <typename T>
NodePtr<T> leaf(Tensor<T> value, bool requires_grad) {
  return std::make_shared<LeafNode<T>>(std::move(value), requires_grad);
}

template <typename T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, int stride, int pad) {
  return std::make_shared<Conv2dNode<T>>(std::move(x), std::move(w), stride, pad);
}

template <typename T>
NodePtr<T> max_pool2d(NodePtr<T> x) {
  return std::make_shared<MaxPool2dNode<T>>(std::move(x));
}

template <typename T>
NodePtr<T> dense(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
  return std::make_shared<DenseNode<T>>(std::move(x), std::move(w), std::move(b));
}

template <typename T>
NodePtr<T> relu(NodePtr<T> x) {
  return std::make_shared<ReluNode<T>>(std::move(x));
}

template <typename T>
NodePtr<T> batch_norm(NodePtr<T> x, BatchNormState<T>& state, Mode mode) {
  return std::make_shared<BatchNormNode<T>>(std::move(x), state, mode);
}

template <typename T>
NodePtr<T> dropout(NodePtr<T> x, double rate, Mode mode, rng::Engine* engine) {
  return std::make_shared<DropoutNode<T>>(std::move(x), rate, mode, engine);
}

template <typename T>
NodePtr<T> reshape(NodePtr<T> x, std::vector<std::size_t> extents) {
  return std::make_shared<ReshapeNode<T>>(std::move(x), std::move(extents));
}

template <typename T>
NodePtr<T> flatten(NodePtr<T> x) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "flatten: expected rank-4 input, got " + shape_to_string(s));
  return reshape(std::move(x), {s[0], s[1] * s[2] * s[3]});
}

template <typename T>
NodePtr<T> concat_channels(std::vector<NodePtr<T>> xs) {
  return std::make_shared<ConcatChannelsNode<T>>(std::move(xs));
}

template <typename T>
NodePtr<T> upscale2x(NodePtr<T> x) {
  return std::make_shared<Upscale2xNode<T>>(std::move(x));
}

template <typename T>
NodePtr<T> sum(NodePtr<T> x) {
  return std::make_shared<WeightedSumNode<T>>(std::move(x), Tensor<T>{});
}

template <typename T>
NodePtr<T> weighted_sum(NodePtr<T> x, Tensor<T> weights) {
  check(!weights.empty(), "weighted_sum: empty coefficient tensor");
  return std::make_shared<WeightedSumNode<T>>(std::move(x), std::move(weights));
}

template <typename T>
void backward(const NodePtr<T>& loss) {
  check(loss != nullptr, "backward: null loss node");
  check(loss->value.size() == 1,
        "backward: loss must be scalar, got " + shape_to_string(loss->value.shape()));
  const auto order = topo_postorder(loss.get());
  for (Node<T>* node : order) {
    if (node->requires_grad) node->grad = Tensor<T>(node->value.shape());
  }
  if (!loss->requires_grad) return;  // nothing in the graph wants gradients
  loss->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->requires_grad && !node->inputs().empty()) node->backprop();
  }
}

FdCheckReport finite_difference_check(const std::function<double()>& loss, Tensor<double>& param,
                                      const Tensor<double>& analytic_grad, double step,
                                      double tolerance, std::size_t probe_count,
                                      rng::Engine* engine) {
  check(param.same_shape(analytic_grad),
        "finite_difference_check: gradient shape " + shape_to_string(analytic_grad.shape()) +
            " does not match parameter shape " + shape_to_string(param.shape()));
  check(step > 0.0, "finite_difference_check: step must be positive");
  check(tolerance > 0.0, "finite_difference_check: tolerance must be positive");

  std::vector<std::size_t> indices;
  if (probe_count == 0 || probe_count >= param.size()) {
    indices.resize(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) indices[i] = i;
  } else {
    check(engine != nullptr, "finite_difference_check: random probing needs an engine");
    std::set<std::size_t> chosen;
    while (chosen.size() < probe_count) chosen.insert(rng::uniform_index(*engine, param.size()));
    indices.assign(chosen.begin(), chosen.end());
  }

  FdCheckReport report;
  report.probes = indices.size();
  for (std::size_t idx : indices) {
    const double saved = param[idx];
    param[idx] = saved + step;
    const double up = loss();
    param[idx] = saved - step;
    const double down = loss();
    param[idx] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double an = analytic_grad[idx];
    const double abs_err = std::abs(fd - an);
    const double rel = abs_err / std::max({std::abs(fd), std::abs(an), 1e-8});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = idx;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------

#define DAN_INSTANTIATE_AD(T)                                                       \
  template struct BatchNormState<T>;                                                \
  template NodePtr<T> leaf<T>(Tensor<T>, bool);                                     \
  template NodePtr<T> conv2d<T>(NodePtr<T>, NodePtr<T>, int, int);                  \
  template NodePtr<T> max_pool2d<T>(NodePtr<T>);                                    \
  template NodePtr<T> dense<T>(NodePtr<T>, NodePtr<T>, NodePtr<T>);                 \
  template NodePtr<T> relu<T>(NodePtr<T>);                                          \
  template NodePtr<T> batch_norm<T>(NodePtr<T>, BatchNormState<T>&, Mode);          \
  template NodePtr<T> dropout<T>(NodePtr<T>, double, Mode, rng::Engine*);           \
  template NodePtr<T> reshape<T>(NodePtr<T>, std::vector<std::size_t>);             \
  template NodePtr<T> flatten<T>(NodePtr<T>);                                       \
  template NodePtr<T> concat_channels<T>(std::vector<NodePtr<T>>);                  \
  template NodePtr<T> upscale2x<T>(NodePtr<T>);                                     \
  template NodePtr<T> sum<T>(NodePtr<T>);                                           \
  template NodePtr<T> weighted_sum<T>(NodePtr<T>, Tensor<T>);                       \
  template void backward<T>(const NodePtr<T>&);

DAN_INSTANTIATE_AD(float)
DAN_INSTANTIATE_AD(double)

}  // namespace dan::ad
