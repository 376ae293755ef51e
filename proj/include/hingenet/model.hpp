#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hingenet/foundation.hpp"
#include "hingenet/tensor.hpp"

#include <json.hpp>

namespace hingenet {

// Per-frame beat / downbeat probabilities, each (b, 1, t), strictly in (0,1).
struct ActivationPair {
  TensorPtr beat;
  TensorPtr downbeat;
  double frame_rate = 50.0;
};

struct ParamCounts {
  int64_t trainable = 0;
  int64_t frozen = 0;
  double fraction() const {
    const int64_t total = trainable + frozen;
    return total > 0 ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0;
  }
};

// Common surface of every fine-tuning arm (hinge, adapter, lora, probe) so
// the trainer and the comparison harness treat them uniformly. Inference is
// const and thread-safe; training mutates parameters and must be serialized.
class TrackingModel {
 public:
  virtual ~TrackingModel() = default;

  // features (b, input_channels, t) -> activations, running the stub inside
  virtual ActivationPair forward(const TensorPtr& features, double frame_rate) const = 0;

  // true when the frozen features can be computed once and reused (no
  // gradient ever crosses the stub boundary)
  virtual bool separable() const = 0;
  // only valid when separable(): consume a precomputed layer stack
  virtual ActivationPair forward_features(const LayerFeatureStack& stack) const = 0;

  virtual std::vector<Parameter*> trainable_parameters() = 0;
  virtual ParamCounts count_parameters() const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual const FoundationStub& stub() const = 0;
};

// Combines the two activation channels into one (b, 2, t) stack and back;
// uses the HGFT container with n_layers = 1.
void save_activations(const ActivationPair& acts, const std::string& path);
ActivationPair load_activations(const std::string& path);

// Checkpoint container: "HGNM" | u32 version | u32 config_len | config JSON |
// u32 n_params | per blob (u32 name_len | name | u32 b,c,t | f64 data ...) |
// 32-byte SHA-256 of everything after the version field. Round trips are
// bit-exact.
void save_tracker(const TrackingModel& model, const std::string& path);
std::unique_ptr<TrackingModel> load_tracker(const std::string& path);

// Reads only the metadata of a checkpoint (kind, config, parameter shapes).
nlohmann::json inspect_checkpoint(const std::string& path);

// Builds a tracker of the given kind on top of a shared frozen stub.
// `config` holds the per-kind section ("hinge", "adapter", "lora").
std::unique_ptr<TrackingModel> make_tracker(const std::string& kind,
                                            std::shared_ptr<const FoundationStub> stub,
                                            const nlohmann::json& config, uint64_t seed);

}  // namespace hingenet
