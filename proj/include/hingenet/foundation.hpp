#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hingenet/sha256.hpp"
#include "hingenet/tensor.hpp"

namespace hingenet {

struct StubConfig {
  int64_t n_layers = 4;
  int64_t hidden = 64;
  int64_t input_channels = 60;
  int64_t n_heads = 1;
  int64_t mlp_hidden = 0;  // 0 -> 4 * hidden
  uint64_t seed = 1;

  int64_t mlp() const { return mlp_hidden > 0 ? mlp_hidden : 4 * hidden; }
  void validate() const;
};

// Per-encoder-layer feature maps, each (b, hidden, t).
struct LayerFeatureStack {
  std::vector<TensorPtr> layers;
  double frame_rate = 50.0;
};

// Per-block injection points used by the fine-tuning baselines. The hooks
// never mutate the stub; they only extend the graph around it.
struct BlockOverride {
  // receives the pre-attention layernormed activations, returns a delta
  // added to the q / v projections
  std::function<TensorPtr(const TensorPtr&)> q_extra;
  std::function<TensorPtr(const TensorPtr&)> v_extra;
  // receives the block output, returns the replacement (e.g. residual adapter)
  std::function<TensorPtr(const TensorPtr&)> post;
};

// Frozen stand-in for a pre-trained encoder: a time-axis convolutional stem
// followed by n_layers pre-layernorm single-head transformer blocks. Weights
// are drawn once from a seeded generator and never change; the model is
// immutable after construction and safe to share across threads.
class FoundationStub {
 public:
  explicit FoundationStub(const StubConfig& config);

  // Runs the stem and every encoder block, returning the features after each
  // block (h_1 .. h_N). Gradients flow through when an override introduces
  // trainable tensors or the input itself requires a gradient.
  LayerFeatureStack forward_all(const TensorPtr& x,
                                const std::vector<BlockOverride>* overrides = nullptr,
                                double frame_rate = 50.0) const;

  const StubConfig& config() const { return config_; }
  std::vector<const Parameter*> parameters() const;
  int64_t parameter_count() const;
  Digest parameter_digest() const;

 private:
  struct Block {
    Parameter ln1_gain, ln1_shift;
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_gain, ln2_shift;
    Parameter w1, b1, w2, b2;
  };

  TensorPtr block_forward(const Block& blk, const TensorPtr& x,
                          const BlockOverride* override_hooks) const;

  StubConfig config_;
  Parameter stem_w_, stem_b_;
  std::vector<Block> blocks_;
};

// HGFT binary container for layer feature stacks (little-endian):
//   "HGFT" | u32 version=1 | u32 n_layers | u32 batch | u32 channels |
//   u32 frames | f64 frame_rate | f32 payload [layer][batch][channel][frame]
void save_features(const LayerFeatureStack& stack, const std::string& path);
LayerFeatureStack load_features(const std::string& path);

}  // namespace hingenet
