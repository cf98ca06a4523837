#pragma once

// Minimal reverse-mode autodiff over dense f64 tensors. Only the layer set a
// cell network needs is provided: convolution, max/average pooling, dense,
// channel concatenation, elementwise add, crop, flatten and the bounded tanh
// head, plus an Adam optimizer over a ParamStore.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nasopt/tensor.hpp"

namespace nasopt {

/// Spatial output extent of a convolution or pooling window: floor((n-k+2p)/s)+1.
/// Throws ShapeError when the window does not fit.
std::size_t conv_output_size(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment
  bool frozen = false;
};

/// Named trainable tensors with gradient buffers and Adam state.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor init);
  /// Replaces the value of an existing parameter (shape may change); resets its
  /// gradient and Adam moments.
  void reset(std::size_t index, Tensor init);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;

  std::int64_t step() const noexcept { return step_; }
  void set_step(std::int64_t t) noexcept { step_ = t; }
  /// Zeroes moments and the step counter of every parameter.
  void reset_optimizer();
  void zero_grad();
  /// Total number of scalar parameters.
  std::size_t parameter_count() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term folded into the gradient

  void validate() const;
};

/// One bias-corrected Adam update of every non-frozen parameter, then clears all
/// gradients. The step counter advances by exactly one. A non-finite gradient
/// aborts the whole step (nothing is updated) with a NumericError naming the
/// parameter.
void adam_step(ParamStore& params, const AdamConfig& cfg);

struct Var {
  std::size_t id = 0;
};

/// Records one forward pass; backward() replays it in reverse. A tape is single
/// use: a second backward() without a fresh tape is a StateError.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  /// Leaf that never receives a gradient (network inputs).
  Var constant(Tensor value);
  /// Leaf whose gradient is kept and readable through grad().
  Var variable(Tensor value);
  /// Leaf bound to a parameter; its gradient is accumulated into the store.
  /// Frozen parameters do not request gradients.
  Var parameter(ParamStore& store, std::size_t index);

  /// Appends an interior node. `fn` receives the gradient w.r.t. the output and
  /// must accumulate into inputs through accumulate().
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of a variable() leaf after backward(); zeros if untouched.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient buffer of an input, allocated lazily. Callers must check
  /// requires_grad() first.
  Tensor& accumulate(Var v);

  void backward(Var loss);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::size_t param = 0;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

namespace ops {

/// input [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout].
Var conv2d(Tape& tape, Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);
Var max_pool2d(Tape& tape, Var input, std::size_t window, std::size_t stride);
Var avg_pool2d(Tape& tape, Var input, std::size_t window, std::size_t stride);
/// input [N,F], weight [F,D], bias [D].
Var dense(Tape& tape, Var input, Var weight, Var bias);
Var concat_channels(Tape& tape, std::span<const Var> inputs);
Var add(Tape& tape, std::span<const Var> inputs);
/// Spatial window [top, top+height) x [left, left+width).
Var crop(Tape& tape, Var input, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
/// [N,C,H,W] -> [N,C*H*W].
Var flatten(Tape& tape, Var input);
/// y = lo + (hi-lo)(tanh z + 1)/2 per column of a [N,D] input, kept strictly
/// inside (lo, hi).
Var scaled_tanh(Tape& tape, Var input, std::span<const double> lo, std::span<const double> hi);
/// Scalar sum of all elements.
Var sum(Tape& tape, Var input);
/// Scalar node whose value and derivative w.r.t. `input` were computed outside
/// the tape (e.g. by an objective function).
Var external_scalar(Tape& tape, Var input, double value, Tensor grad);

}  // namespace ops

}  // namespace nasopt
