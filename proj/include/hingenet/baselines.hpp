#pragma once

#include <memory>

#include "hingenet/model.hpp"

namespace hingenet {

struct AdapterConfig {
  int64_t bottleneck = 16;
  void validate() const;
};

struct LoraConfig {
  int64_t rank = 4;
  double alpha = 8.0;
  void validate(int64_t hidden) const;
};

// Shared beat/downbeat classifier head: linear (h -> 2) + sigmoid on the last
// layer's features.
struct ClassifierHead {
  Parameter w, b;

  ClassifierHead() = default;
  ClassifierHead(int64_t hidden, uint64_t seed);
  ActivationPair apply(const LayerFeatureStack& stack) const;
};

// Serial residual bottleneck after every encoder block. The up-projection is
// zero-initialized, so at init the model output equals the frozen stub + head.
class AdapterTracker : public TrackingModel {
 public:
  AdapterTracker(std::shared_ptr<const FoundationStub> stub, const AdapterConfig& config,
                 uint64_t seed);

  ActivationPair forward(const TensorPtr& features, double frame_rate) const override;
  bool separable() const override { return false; }
  ActivationPair forward_features(const LayerFeatureStack&) const override;
  std::vector<Parameter*> trainable_parameters() override;
  ParamCounts count_parameters() const override;
  std::string kind() const override { return "adapter"; }
  nlohmann::json config_json() const override;
  const FoundationStub& stub() const override { return *stub_; }
  ClassifierHead& head() { return head_; }

 private:
  struct BlockAdapter {
    Parameter down_w, down_b, up_w, up_b;
  };

  std::shared_ptr<const FoundationStub> stub_;
  AdapterConfig config_;
  std::vector<BlockAdapter> adapters_;
  ClassifierHead head_;
};

// Low-rank deltas on the attention q/v projections: delta = (alpha/rank)*B*A
// with A seeded-random and B zero-initialized.
class LoraTracker : public TrackingModel {
 public:
  LoraTracker(std::shared_ptr<const FoundationStub> stub, const LoraConfig& config,
              uint64_t seed);

  ActivationPair forward(const TensorPtr& features, double frame_rate) const override;
  bool separable() const override { return false; }
  ActivationPair forward_features(const LayerFeatureStack&) const override;
  std::vector<Parameter*> trainable_parameters() override;
  ParamCounts count_parameters() const override;
  std::string kind() const override { return "lora"; }
  nlohmann::json config_json() const override;
  const FoundationStub& stub() const override { return *stub_; }
  ClassifierHead& head() { return head_; }

 private:
  struct BlockLora {
    Parameter a_q, b_q, a_v, b_v;
  };

  std::shared_ptr<const FoundationStub> stub_;
  LoraConfig config_;
  std::vector<BlockLora> loras_;
  ClassifierHead head_;
};

// Head on the last frozen layer; nothing else is trainable.
class ProbeTracker : public TrackingModel {
 public:
  ProbeTracker(std::shared_ptr<const FoundationStub> stub, uint64_t seed);

  ActivationPair forward(const TensorPtr& features, double frame_rate) const override;
  bool separable() const override { return true; }
  ActivationPair forward_features(const LayerFeatureStack& stack) const override;
  std::vector<Parameter*> trainable_parameters() override;
  ParamCounts count_parameters() const override;
  std::string kind() const override { return "linear_probe"; }
  nlohmann::json config_json() const override;
  const FoundationStub& stub() const override { return *stub_; }
  ClassifierHead& head() { return head_; }

 private:
  std::shared_ptr<const FoundationStub> stub_;
  ClassifierHead head_;
};

}  // namespace hingenet
