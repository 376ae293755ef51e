#include "hingenet/baselines.hpp"

#include <cmath>

#include "hingenet/config.hpp"
#include "hingenet/rng.hpp"

namespace hingenet {

namespace {

Parameter random_param(SplitMix64& rng, const std::string& name, Shape shape, int64_t fan_in) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  auto t = Tensor::create(shape);
  for (double& v : t->data) v = rng.next_uniform(-bound, bound);
  return Parameter(name, std::move(t), /*trainable=*/true);
}

Parameter zero_param(const std::string& name, Shape shape) {
  return Parameter(name, Tensor::create(shape), /*trainable=*/true);
}

TensorPtr scale_tensor(const TensorPtr& x, double s) { return add_scaled(x, x, s, 0.0); }

}  // namespace

void AdapterConfig::validate() const {
  if (bottleneck < 1) throw_invalid("adapter: bottleneck must be >= 1");
}

void LoraConfig::validate(int64_t hidden) const {
  if (rank < 1) throw_invalid("lora: rank must be >= 1");
  if (rank > hidden) {
    throw_invalid("lora: rank " + std::to_string(rank) + " exceeds hidden size " +
                  std::to_string(hidden));
  }
  if (!(alpha > 0.0)) throw_invalid("lora: alpha must be positive");
}

ClassifierHead::ClassifierHead(int64_t hidden, uint64_t seed) {
  SplitMix64 rng(seed);
  w = random_param(rng, "head.w", {1, 2, hidden}, hidden);
  b = random_param(rng, "head.b", {1, 2, 1}, hidden);
}

ActivationPair ClassifierHead::apply(const LayerFeatureStack& stack) const {
  if (stack.layers.empty()) throw_invalid("head: empty feature stack");
  TensorPtr act = sigmoid(linear(stack.layers.back(), w.value, b.value));
  ActivationPair out;
  out.beat = slice(act, Axis::channel, 0, 1);
  out.downbeat = slice(act, Axis::channel, 1, 1);
  out.frame_rate = stack.frame_rate;
  return out;
}

// --- adapter ----------------------------------------------------------------

AdapterTracker::AdapterTracker(std::shared_ptr<const FoundationStub> stub,
                               const AdapterConfig& config, uint64_t seed)
    : stub_(std::move(stub)), config_(config) {
  config_.validate();
  const int64_t h = stub_->config().hidden;
  SplitMix64 rng(mix_seed(seed, 0xADA7));
  for (int64_t i = 0; i < stub_->config().n_layers; ++i) {
    const std::string p = "adapter" + std::to_string(i) + ".";
    BlockAdapter a;
    a.down_w = random_param(rng, p + "down.w", {1, config_.bottleneck, h}, h);
    a.down_b = zero_param(p + "down.b", {1, config_.bottleneck, 1});
    a.up_w = zero_param(p + "up.w", {1, h, config_.bottleneck});
    a.up_b = zero_param(p + "up.b", {1, h, 1});
    adapters_.push_back(std::move(a));
  }
  head_ = ClassifierHead(h, mix_seed(seed, 0x4EAD));
}

ActivationPair AdapterTracker::forward(const TensorPtr& features, double frame_rate) const {
  std::vector<BlockOverride> overrides(static_cast<size_t>(stub_->config().n_layers));
  for (size_t i = 0; i < overrides.size(); ++i) {
    const BlockAdapter& a = adapters_[i];
    overrides[i].post = [&a](const TensorPtr& y) {
      TensorPtr z = relu(linear(y, a.down_w.value, a.down_b.value));
      return add(y, linear(z, a.up_w.value, a.up_b.value));
    };
  }
  LayerFeatureStack stack = stub_->forward_all(features, &overrides, frame_rate);
  return head_.apply(stack);
}

ActivationPair AdapterTracker::forward_features(const LayerFeatureStack&) const {
  throw_contract("adapter: gradients cross the stub, cached features are unusable");
}

std::vector<Parameter*> AdapterTracker::trainable_parameters() {
  std::vector<Parameter*> out;
  for (BlockAdapter& a : adapters_) {
    out.push_back(&a.down_w);
    out.push_back(&a.down_b);
    out.push_back(&a.up_w);
    out.push_back(&a.up_b);
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

ParamCounts AdapterTracker::count_parameters() const {
  ParamCounts counts;
  counts.frozen = stub_->parameter_count();
  for (const Parameter* p :
       const_cast<AdapterTracker*>(this)->trainable_parameters()) {
    counts.trainable += p->value->size();
  }
  return counts;
}

nlohmann::json AdapterTracker::config_json() const {
  return {{"kind", "adapter"},
          {"stub", to_json(stub_->config())},
          {"adapter", to_json(config_)}};
}

// --- lora -------------------------------------------------------------------

LoraTracker::LoraTracker(std::shared_ptr<const FoundationStub> stub, const LoraConfig& config,
                         uint64_t seed)
    : stub_(std::move(stub)), config_(config) {
  const int64_t h = stub_->config().hidden;
  config_.validate(h);
  SplitMix64 rng(mix_seed(seed, 0x10A4));
  for (int64_t i = 0; i < stub_->config().n_layers; ++i) {
    const std::string p = "lora" + std::to_string(i) + ".";
    BlockLora l;
    l.a_q = random_param(rng, p + "q.a", {1, config_.rank, h}, h);
    l.b_q = zero_param(p + "q.b", {1, h, config_.rank});
    l.a_v = random_param(rng, p + "v.a", {1, config_.rank, h}, h);
    l.b_v = zero_param(p + "v.b", {1, h, config_.rank});
    loras_.push_back(std::move(l));
  }
  head_ = ClassifierHead(h, mix_seed(seed, 0x4EAD));
}

ActivationPair LoraTracker::forward(const TensorPtr& features, double frame_rate) const {
  const double scale = config_.alpha / static_cast<double>(config_.rank);
  std::vector<BlockOverride> overrides(static_cast<size_t>(stub_->config().n_layers));
  for (size_t i = 0; i < overrides.size(); ++i) {
    const BlockLora& l = loras_[i];
    overrides[i].q_extra = [&l, scale](const TensorPtr& a) {
      return scale_tensor(linear(linear(a, l.a_q.value, nullptr), l.b_q.value, nullptr), scale);
    };
    overrides[i].v_extra = [&l, scale](const TensorPtr& a) {
      return scale_tensor(linear(linear(a, l.a_v.value, nullptr), l.b_v.value, nullptr), scale);
    };
  }
  LayerFeatureStack stack = stub_->forward_all(features, &overrides, frame_rate);
  return head_.apply(stack);
}

ActivationPair LoraTracker::forward_features(const LayerFeatureStack&) const {
  throw_contract("lora: gradients cross the stub, cached features are unusable");
}

std::vector<Parameter*> LoraTracker::trainable_parameters() {
  std::vector<Parameter*> out;
  for (BlockLora& l : loras_) {
    out.push_back(&l.a_q);
    out.push_back(&l.b_q);
    out.push_back(&l.a_v);
    out.push_back(&l.b_v);
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

ParamCounts LoraTracker::count_parameters() const {
  ParamCounts counts;
  counts.frozen = stub_->parameter_count();
  for (const Parameter* p : const_cast<LoraTracker*>(this)->trainable_parameters()) {
    counts.trainable += p->value->size();
  }
  return counts;
}

nlohmann::json LoraTracker::config_json() const {
  return {{"kind", "lora"},
          {"stub", to_json(stub_->config())},
          {"lora", to_json(config_)}};
}

// --- linear probe -------------------------------------------------------------

ProbeTracker::ProbeTracker(std::shared_ptr<const FoundationStub> stub, uint64_t seed)
    : stub_(std::move(stub)) {
  head_ = ClassifierHead(stub_->config().hidden, mix_seed(seed, 0x4EAD));
}

ActivationPair ProbeTracker::forward(const TensorPtr& features, double frame_rate) const {
  LayerFeatureStack stack = stub_->forward_all(features, nullptr, frame_rate);
  return head_.apply(stack);
}

ActivationPair ProbeTracker::forward_features(const LayerFeatureStack& stack) const {
  return head_.apply(stack);
}

std::vector<Parameter*> ProbeTracker::trainable_parameters() {
  return {&head_.w, &head_.b};
}

ParamCounts ProbeTracker::count_parameters() const {
  ParamCounts counts;
  counts.frozen = stub_->parameter_count();
  counts.trainable = head_.w.value->size() + head_.b.value->size();
  return counts;
}

nlohmann::json ProbeTracker::config_json() const {
  return {{"kind", "linear_probe"}, {"stub", to_json(stub_->config())}};
}

}  // namespace hingenet
