#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hingenet/error.hpp"

namespace hingenet {

enum class Axis { channel, time };

// All values are dense rank-3 arrays (batch, channels, frames), row-major.
struct Shape {
  int64_t b = 0;
  int64_t c = 0;
  int64_t t = 0;

  int64_t size() const { return b * c * t; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// A node in the reverse-mode graph: the value, an optional gradient buffer,
// and the closure that routes this node's gradient into its parents. Ops
// record parents only when some input requires a gradient and grads are
// globally enabled, so pure inference never builds a graph.
class Tensor {
 public:
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward first touches this node
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backward_fn;

  static TensorPtr create(Shape shape);
  static TensorPtr create(Shape shape, std::vector<double> values);
  static TensorPtr scalar(double v);

  double& at(int64_t bi, int64_t ci, int64_t ti) {
    return data[(bi * shape.c + ci) * shape.t + ti];
  }
  double at(int64_t bi, int64_t ci, int64_t ti) const {
    return data[(bi * shape.c + ci) * shape.t + ti];
  }
  int64_t size() const { return shape.size(); }

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

// Thread-local switch for graph construction.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// --- differentiable ops -------------------------------------------------
//
// conv1d: "same" zero padding, odd kernel, dilation >= 1.
//   axis == time:    x (b, ci, t), w (co, ci, k), bias (1, co, 1) or null
//   axis == channel: x (b, c, t),  w (1, 1, k) single sliding kernel shared
//                    across frames, bias (1, 1, 1) or null
TensorPtr conv1d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int64_t dilation, Axis axis);

// per-frame channel map: x (b, ci, t), w (1, co, ci), bias (1, co, 1) or null
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias);

TensorPtr sigmoid(const TensorPtr& x);
TensorPtr relu(const TensorPtr& x);
TensorPtr softmax(const TensorPtr& x, Axis axis);

// normalizes over the channel axis per (batch, frame); gain/shift (1, c, 1)
TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& shift);

TensorPtr concat(const std::vector<TensorPtr>& xs, Axis axis = Axis::channel);
TensorPtr slice(const TensorPtr& x, Axis axis, int64_t start, int64_t count);

TensorPtr add_scaled(const TensorPtr& a, const TensorPtr& b, double s1, double s2);
inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return add_scaled(a, b, 1.0, 1.0); }

// batched contraction over channels: out[b,s,u] = scale * sum_c a[b,c,s]*b[b,c,u]
TensorPtr time_gram(const TensorPtr& a, const TensorPtr& b, double scale = 1.0);
// batched mix over source frames: out[b,c,u] = sum_s v[b,c,s]*w[b,s,u]
TensorPtr time_mix(const TensorPtr& v, const TensorPtr& w);

// sigmoid-gated convex combination with a learnable scalar:
//   mu = sigmoid(alpha); out = mu*a + (1-mu)*b     (alpha has shape (1,1,1))
TensorPtr gate_mix(const TensorPtr& a, const TensorPtr& b, const TensorPtr& alpha);

TensorPtr sum(const TensorPtr& x);

// mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]. With
// weights the result is the weighted mean sum(w*l)/sum(w). Gradients flow to
// pred only.
TensorPtr bce_loss(const TensorPtr& pred, const TensorPtr& target,
                   const TensorPtr& weights = nullptr);

// Reverse pass from a scalar (1,1,1) loss node.
void backward(const TensorPtr& loss);

// --- parameters and optimizer -------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, TensorPtr value, bool trainable)
      : name(std::move(name)), value(std::move(value)), trainable(trainable) {
    this->value->requires_grad = trainable;
  }

  std::string name;
  TensorPtr value;
  bool trainable = false;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  int64_t adam_steps = 0;
};

void zero_grad(const std::vector<Parameter*>& params);
void scale_grads(const std::vector<Parameter*>& params, double factor);
// Bias-corrected Adam on every trainable parameter; frozen parameters are
// never touched. A trainable parameter without a gradient buffer is a
// contract violation.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg = {});

}  // namespace hingenet
