#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hingenet/model.hpp"

namespace hingenet {

// Spacing of adjacent harmonics in a log-frequency axis with Q bins per
// octave. The spacing is independent of the fundamental: bin(f0*(k+1)) -
// bin(f0*k) = Q*log2((k+1)/k).
struct HarmonicIntervalSpec {
  int64_t bins_per_octave = 12;
  int64_t n_harmonics = 5;
};

// Rounded (half away from zero) intervals d_1..d_{n-1}. Rejects specs whose
// rounded intervals are not strictly decreasing positive integers.
std::vector<int64_t> harmonic_intervals(const HarmonicIntervalSpec& spec);

struct HingeConfig {
  int64_t projection_factor = 6;
  int64_t n_branches = 4;
  int64_t kernel_size = 3;
  Axis conv_axis = Axis::channel;
  int64_t bins_per_octave = 12;
  int64_t n_harmonics = 5;
  bool ham_enabled = true;

  void validate(int64_t hidden) const;
};

// The trainable hinge: one core layer (projection, gate, harmonic-aware
// module) per encoder layer, plus the beat/downbeat head. Layer indices are
// 1-based to match the layer stack.
class HingeNet {
 public:
  HingeNet(const HingeConfig& config, int64_t n_layers, int64_t hidden, uint64_t seed);

  TensorPtr project(int64_t layer, const TensorPtr& features) const;
  // layer 1 has no previous output and returns the projection unchanged
  TensorPtr fuse(int64_t layer, const TensorPtr& prev, const TensorPtr& proj) const;
  TensorPtr ham(int64_t layer, const TensorPtr& x) const;
  ActivationPair forward(const LayerFeatureStack& stack) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const std::vector<int64_t>& dilations() const { return dilations_; }
  const HingeConfig& config() const { return config_; }
  int64_t n_layers() const { return n_layers_; }
  int64_t hidden() const { return hidden_; }
  int64_t projected() const { return hidden_ / config_.projection_factor; }
  double gate_value(int64_t layer) const;  // sigmoid(alpha), layer >= 2
  void set_gate_raw(int64_t layer, double alpha);

 private:
  struct CoreLayer {
    Parameter proj_w, proj_b;
    std::vector<Parameter> branch_w;
    std::vector<Parameter> branch_b;
    Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Parameter lin_w, lin_b;  // ham_enabled = false arm
  };

  HingeConfig config_;
  int64_t n_layers_;
  int64_t hidden_;
  std::vector<int64_t> dilations_;
  std::vector<CoreLayer> layers_;
  std::vector<Parameter> gates_;  // alpha_2 .. alpha_N, initialized to 0
  Parameter head_w_, head_b_;
};

// Hinge attached to a frozen stub. The stub is consumed feature-stack-first:
// no gradient ever reaches stub parameters or activations.
class HingeTracker : public TrackingModel {
 public:
  HingeTracker(std::shared_ptr<const FoundationStub> stub, const HingeConfig& config,
               uint64_t seed);

  ActivationPair forward(const TensorPtr& features, double frame_rate) const override;
  bool separable() const override { return true; }
  ActivationPair forward_features(const LayerFeatureStack& stack) const override;
  std::vector<Parameter*> trainable_parameters() override;
  ParamCounts count_parameters() const override;
  std::string kind() const override { return "hinge"; }
  nlohmann::json config_json() const override;
  const FoundationStub& stub() const override { return *stub_; }

  HingeNet& net() { return net_; }
  const HingeNet& net() const { return net_; }

 private:
  std::shared_ptr<const FoundationStub> stub_;
  HingeNet net_;
};

}  // namespace hingenet
