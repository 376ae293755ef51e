#include "hingenet/hinge.hpp"

#include <cmath>

#include "hingenet/config.hpp"
#include "hingenet/rng.hpp"

namespace hingenet {

std::vector<int64_t> harmonic_intervals(const HarmonicIntervalSpec& spec) {
  if (spec.bins_per_octave < 1) throw_invalid("harmonic intervals: Q must be >= 1");
  if (spec.n_harmonics < 2) throw_invalid("harmonic intervals: need at least 2 harmonics");
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(spec.n_harmonics - 1));
  for (int64_t k = 1; k < spec.n_harmonics; ++k) {
    const double d = static_cast<double>(spec.bins_per_octave) *
                     std::log2(static_cast<double>(k + 1) / static_cast<double>(k));
    out.push_back(std::llround(d));  // llround = round half away from zero
  }
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 1 || (i > 0 && out[i] >= out[i - 1])) {
      throw_invalid("harmonic intervals: Q=" + std::to_string(spec.bins_per_octave) +
                    ", n=" + std::to_string(spec.n_harmonics) +
                    " does not yield strictly decreasing positive intervals");
    }
  }
  return out;
}

void HingeConfig::validate(int64_t hidden) const {
  if (projection_factor < 1) throw_invalid("hinge: projection factor must be >= 1");
  if (hidden % projection_factor != 0) {
    throw_invalid("hinge: hidden " + std::to_string(hidden) +
                  " is not divisible by projection factor " +
                  std::to_string(projection_factor));
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw_invalid("hinge: kernel size must be odd and positive");
  }
  if (n_branches < 1) throw_invalid("hinge: n_branches must be >= 1");
  const auto intervals = harmonic_intervals({bins_per_octave, n_harmonics});
  if (static_cast<int64_t>(intervals.size()) != n_branches) {
    throw_invalid("hinge: n_branches " + std::to_string(n_branches) +
                  " does not match the " + std::to_string(intervals.size()) +
                  " harmonic-derived dilations");
  }
}

HingeNet::HingeNet(const HingeConfig& config, int64_t n_layers, int64_t hidden, uint64_t seed)
    : config_(config), n_layers_(n_layers), hidden_(hidden) {
  if (n_layers < 1) throw_invalid("hinge: n_layers must be >= 1");
  config_.validate(hidden);
  dilations_ = harmonic_intervals({config_.bins_per_octave, config_.n_harmonics});

  const int64_t p = hidden / config_.projection_factor;
  const int64_t k = config_.kernel_size;
  const int64_t m = config_.n_branches;
  SplitMix64 rng(seed);
  // uniform(-sqrt(3/fan_in), +sqrt(3/fan_in)) keeps activation variance flat
  // across the stack, so the head starts with usable logit swing
  auto make = [&](const std::string& name, Shape shape, int64_t fan_in) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    auto t = Tensor::create(shape);
    for (double& v : t->data) v = rng.next_uniform(-bound, bound);
    return Parameter(name, std::move(t), /*trainable=*/true);
  };

  layers_.reserve(static_cast<size_t>(n_layers));
  for (int64_t i = 1; i <= n_layers; ++i) {
    const std::string pre = "core" + std::to_string(i) + ".";
    CoreLayer layer;
    layer.proj_w = make(pre + "proj.w", {1, p, hidden}, hidden);
    layer.proj_b = make(pre + "proj.b", {1, p, 1}, hidden);
    if (config_.ham_enabled) {
      for (int64_t br = 0; br < m; ++br) {
        const std::string bp = pre + "ham.branch" + std::to_string(br) + ".";
        if (config_.conv_axis == Axis::channel) {
          layer.branch_w.push_back(make(bp + "w", {1, 1, k}, k));
          layer.branch_b.push_back(make(bp + "b", {1, 1, 1}, k));
        } else {
          layer.branch_w.push_back(make(bp + "w", {p, p, k}, p * k));
          layer.branch_b.push_back(make(bp + "b", {1, p, 1}, p * k));
        }
      }
      layer.mlp_w1 = make(pre + "ham.mlp.w1", {1, p, m * p}, m * p);
      layer.mlp_b1 = make(pre + "ham.mlp.b1", {1, p, 1}, m * p);
      layer.mlp_w2 = make(pre + "ham.mlp.w2", {1, p, p}, p);
      layer.mlp_b2 = make(pre + "ham.mlp.b2", {1, p, 1}, p);
    } else {
      layer.lin_w = make(pre + "lin.w", {1, p, p}, p);
      layer.lin_b = make(pre + "lin.b", {1, p, 1}, p);
    }
    layers_.push_back(std::move(layer));
    if (i >= 2) {
      gates_.emplace_back("gate" + std::to_string(i) + ".alpha", Tensor::scalar(0.0),
                          /*trainable=*/true);
    }
  }
  head_w_ = make("head.w", {1, 2, p}, p);
  head_b_ = make("head.b", {1, 2, 1}, p);
}

TensorPtr HingeNet::project(int64_t layer, const TensorPtr& features) const {
  if (layer < 1 || layer > n_layers_) throw_invalid("hinge: layer index out of range");
  const CoreLayer& l = layers_[static_cast<size_t>(layer - 1)];
  return linear(features, l.proj_w.value, l.proj_b.value);
}

TensorPtr HingeNet::fuse(int64_t layer, const TensorPtr& prev, const TensorPtr& proj) const {
  if (layer < 1 || layer > n_layers_) throw_invalid("hinge: layer index out of range");
  if (layer == 1) return proj;
  if (!prev) throw_invalid("hinge: fuse needs the previous core-layer output");
  return gate_mix(prev, proj, gates_[static_cast<size_t>(layer - 2)].value);
}

TensorPtr HingeNet::ham(int64_t layer, const TensorPtr& x) const {
  if (layer < 1 || layer > n_layers_) throw_invalid("hinge: layer index out of range");
  const CoreLayer& l = layers_[static_cast<size_t>(layer - 1)];
  if (!config_.ham_enabled) {
    return linear(x, l.lin_w.value, l.lin_b.value);
  }
  std::vector<TensorPtr> branches;
  branches.reserve(l.branch_w.size());
  for (size_t br = 0; br < l.branch_w.size(); ++br) {
    branches.push_back(conv1d(x, l.branch_w[br].value, l.branch_b[br].value,
                              dilations_[br], config_.conv_axis));
  }
  TensorPtr cat = concat(branches, Axis::channel);
  TensorPtr h = linear(cat, l.mlp_w1.value, l.mlp_b1.value);
  h = relu(h);
  return linear(h, l.mlp_w2.value, l.mlp_b2.value);
}

ActivationPair HingeNet::forward(const LayerFeatureStack& stack) const {
  if (static_cast<int64_t>(stack.layers.size()) != n_layers_) {
    throw_invalid("hinge: stack has " + std::to_string(stack.layers.size()) +
                  " layers, model expects " + std::to_string(n_layers_));
  }
  TensorPtr prev;
  for (int64_t i = 1; i <= n_layers_; ++i) {
    TensorPtr proj = project(i, stack.layers[static_cast<size_t>(i - 1)]);
    TensorPtr fused = fuse(i, prev, proj);
    prev = ham(i, fused);
  }
  TensorPtr act = sigmoid(linear(prev, head_w_.value, head_b_.value));
  ActivationPair out;
  out.beat = slice(act, Axis::channel, 0, 1);
  out.downbeat = slice(act, Axis::channel, 1, 1);
  out.frame_rate = stack.frame_rate;
  return out;
}

std::vector<Parameter*> HingeNet::parameters() {
  std::vector<Parameter*> out;
  for (CoreLayer& l : layers_) {
    out.push_back(&l.proj_w);
    out.push_back(&l.proj_b);
    if (config_.ham_enabled) {
      for (size_t br = 0; br < l.branch_w.size(); ++br) {
        out.push_back(&l.branch_w[br]);
        out.push_back(&l.branch_b[br]);
      }
      out.push_back(&l.mlp_w1);
      out.push_back(&l.mlp_b1);
      out.push_back(&l.mlp_w2);
      out.push_back(&l.mlp_b2);
    } else {
      out.push_back(&l.lin_w);
      out.push_back(&l.lin_b);
    }
  }
  for (Parameter& g : gates_) out.push_back(&g);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<const Parameter*> HingeNet::parameters() const {
  auto mutable_params = const_cast<HingeNet*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

double HingeNet::gate_value(int64_t layer) const {
  if (layer < 2 || layer > n_layers_) throw_invalid("hinge: gates exist for layers 2..N");
  const double a = gates_[static_cast<size_t>(layer - 2)].value->data[0];
  return 1.0 / (1.0 + std::exp(-a));
}

void HingeNet::set_gate_raw(int64_t layer, double alpha) {
  if (layer < 2 || layer > n_layers_) throw_invalid("hinge: gates exist for layers 2..N");
  gates_[static_cast<size_t>(layer - 2)].value->data[0] = alpha;
}

// --- tracker -------------------------------------------------------------

HingeTracker::HingeTracker(std::shared_ptr<const FoundationStub> stub,
                           const HingeConfig& config, uint64_t seed)
    : stub_(std::move(stub)),
      net_(config, stub_->config().n_layers, stub_->config().hidden, seed) {}

ActivationPair HingeTracker::forward(const TensorPtr& features, double frame_rate) const {
  LayerFeatureStack stack = stub_->forward_all(features, nullptr, frame_rate);
  return net_.forward(stack);
}

ActivationPair HingeTracker::forward_features(const LayerFeatureStack& stack) const {
  return net_.forward(stack);
}

std::vector<Parameter*> HingeTracker::trainable_parameters() { return net_.parameters(); }

ParamCounts HingeTracker::count_parameters() const {
  ParamCounts counts;
  counts.frozen = stub_->parameter_count();
  for (const Parameter* p : net_.parameters()) counts.trainable += p->value->size();
  return counts;
}

nlohmann::json HingeTracker::config_json() const {
  return {{"kind", "hinge"},
          {"stub", to_json(stub_->config())},
          {"hinge", to_json(net_.config())}};
}

}  // namespace hingenet
