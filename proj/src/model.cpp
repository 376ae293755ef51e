#include "hingenet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hingenet/baselines.hpp"
#include "hingenet/config.hpp"
#include "hingenet/hinge.hpp"
#include "hingenet/sha256.hpp"

namespace hingenet {

using nlohmann::json;

void save_activations(const ActivationPair& acts, const std::string& path) {
  if (!acts.beat || !acts.downbeat) throw_invalid("save_activations: null activations");
  NoGradGuard no_grad;
  // keep the payload strictly inside (0,1) after the f32 narrowing
  auto clamped = [](const TensorPtr& t) {
    auto out = Tensor::create(t->shape, std::vector<double>(t->data));
    for (double& v : out->data) v = std::clamp(v, 1e-6, 1.0 - 1e-6);
    return out;
  };
  LayerFeatureStack stack;
  stack.frame_rate = acts.frame_rate;
  stack.layers = {concat({clamped(acts.beat), clamped(acts.downbeat)}, Axis::channel)};
  save_features(stack, path);
}

ActivationPair load_activations(const std::string& path) {
  LayerFeatureStack stack = load_features(path);
  if (stack.layers.size() != 1 || stack.layers[0]->shape.c != 2) {
    throw_format("'" + path + "' is not an activation file (expect 1 layer, 2 channels)");
  }
  NoGradGuard no_grad;
  ActivationPair out;
  out.beat = slice(stack.layers[0], Axis::channel, 0, 1);
  out.downbeat = slice(stack.layers[0], Axis::channel, 1, 1);
  out.frame_rate = stack.frame_rate;
  return out;
}

// --- checkpoint container ----------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'G', 'N', 'M'};
constexpr uint32_t kCheckpointVersion = 1;

void append_u32(std::string& buf, uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;

  uint32_t u32(const char* field) {
    if (pos + 4 > buf.size()) {
      throw_format_at(static_cast<long long>(pos), std::string("truncated: ") + field);
    }
    uint32_t v = 0;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }

  std::string bytes(size_t n, const char* field) {
    if (pos + n > buf.size()) {
      throw_format_at(static_cast<long long>(pos), std::string("truncated: ") + field);
    }
    std::string out = buf.substr(pos, n);
    pos += n;
    return out;
  }
};

struct CheckpointData {
  json config;
  std::vector<std::pair<std::string, TensorPtr>> blobs;
};

void write_checkpoint(const std::string& path, const json& config,
                      const std::vector<const Parameter*>& params) {
  std::string payload;
  const std::string config_text = config.dump();
  append_u32(payload, static_cast<uint32_t>(config_text.size()));
  payload += config_text;
  append_u32(payload, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    append_u32(payload, static_cast<uint32_t>(p->name.size()));
    payload += p->name;
    append_u32(payload, static_cast<uint32_t>(p->value->shape.b));
    append_u32(payload, static_cast<uint32_t>(p->value->shape.c));
    append_u32(payload, static_cast<uint32_t>(p->value->shape.t));
    payload.append(reinterpret_cast<const char*>(p->value->data.data()),
                   p->value->data.size() * sizeof(double));
  }
  const Digest digest = sha256(payload.data(), payload.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  f.write(kCheckpointMagic, 4);
  const uint32_t version = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  f.write(reinterpret_cast<const char*>(digest.data()),
          static_cast<std::streamsize>(digest.size()));
  if (!f) throw_io("failed writing '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_io("cannot open '" + path + "'");
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() < 8 + 32) throw_format_at(0, "truncated checkpoint");
  if (std::memcmp(raw.data(), kCheckpointMagic, 4) != 0) throw_format_at(0, "bad magic");
  uint32_t version = 0;
  std::memcpy(&version, raw.data() + 4, 4);
  if (version != kCheckpointVersion) {
    throw_format_at(4, "unsupported version " + std::to_string(version));
  }
  const std::string payload = raw.substr(8, raw.size() - 8 - 32);
  Digest stored;
  std::memcpy(stored.data(), raw.data() + raw.size() - 32, 32);
  if (sha256(payload.data(), payload.size()) != stored) {
    throw_format("checkpoint digest mismatch (corrupted file)");
  }

  Cursor cur{payload};
  const uint32_t config_len = cur.u32("config length");
  const std::string config_text = cur.bytes(config_len, "config");
  CheckpointData data;
  try {
    data.config = json::parse(config_text);
  } catch (const json::exception& e) {
    throw_format("checkpoint config: " + std::string(e.what()));
  }
  const uint32_t n_params = cur.u32("parameter count");
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = cur.u32("name length");
    const std::string name = cur.bytes(name_len, "name");
    Shape shape;
    shape.b = cur.u32("shape.b");
    shape.c = cur.u32("shape.c");
    shape.t = cur.u32("shape.t");
    const std::string bytes =
        cur.bytes(static_cast<size_t>(shape.size()) * sizeof(double), "blob");
    auto tensor = Tensor::create(shape);
    std::memcpy(tensor->data.data(), bytes.data(), bytes.size());
    data.blobs.emplace_back(name, std::move(tensor));
  }
  if (cur.pos != payload.size()) {
    throw_format_at(static_cast<long long>(8 + cur.pos), "trailing bytes in checkpoint");
  }
  return data;
}

}  // namespace

void save_tracker(const TrackingModel& model, const std::string& path) {
  std::vector<const Parameter*> params;
  for (Parameter* p : const_cast<TrackingModel&>(model).trainable_parameters()) {
    params.push_back(p);
  }
  write_checkpoint(path, model.config_json(), params);
}

std::unique_ptr<TrackingModel> make_tracker(const std::string& kind,
                                            std::shared_ptr<const FoundationStub> stub,
                                            const json& config, uint64_t seed) {
  if (kind == "hinge") {
    HingeConfig hc = config.contains("hinge") ? hinge_config_from_json(config.at("hinge"))
                                              : HingeConfig{};
    return std::make_unique<HingeTracker>(std::move(stub), hc, seed);
  }
  if (kind == "adapter") {
    AdapterConfig ac = config.contains("adapter")
                           ? adapter_config_from_json(config.at("adapter"))
                           : AdapterConfig{};
    return std::make_unique<AdapterTracker>(std::move(stub), ac, seed);
  }
  if (kind == "lora") {
    LoraConfig lc =
        config.contains("lora") ? lora_config_from_json(config.at("lora")) : LoraConfig{};
    return std::make_unique<LoraTracker>(std::move(stub), lc, seed);
  }
  if (kind == "linear_probe") {
    return std::make_unique<ProbeTracker>(std::move(stub), seed);
  }
  throw_invalid("unknown model kind '" + kind +
                "'; valid kinds: hinge adapter lora linear_probe");
}

std::unique_ptr<TrackingModel> load_tracker(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  if (!data.config.contains("kind") || !data.config.contains("stub")) {
    throw_format("checkpoint config lacks kind/stub");
  }
  const std::string kind = data.config.at("kind").get<std::string>();
  auto stub = std::make_shared<FoundationStub>(stub_config_from_json(data.config.at("stub")));
  auto model = make_tracker(kind, std::move(stub), data.config, /*seed=*/0);

  auto params = model->trainable_parameters();
  if (params.size() != data.blobs.size()) {
    throw_format("checkpoint holds " + std::to_string(data.blobs.size()) +
                 " blobs, model expects " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = data.blobs[i];
    if (params[i]->name != name) {
      throw_format("checkpoint blob '" + name + "' does not match parameter '" +
                   params[i]->name + "'");
    }
    if (!(params[i]->value->shape == tensor->shape)) {
      throw_format("checkpoint blob '" + name + "' has shape " + tensor->shape.str() +
                   ", expected " + params[i]->value->shape.str());
    }
    params[i]->value->data = tensor->data;
  }
  return model;
}

json inspect_checkpoint(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  json params = json::array();
  int64_t trainable = 0;
  for (const auto& [name, tensor] : data.blobs) {
    params.push_back({{"name", name},
                      {"shape", {tensor->shape.b, tensor->shape.c, tensor->shape.t}},
                      {"count", tensor->size()}});
    trainable += tensor->size();
  }
  int64_t frozen = 0;
  if (data.config.contains("stub")) {
    FoundationStub stub(stub_config_from_json(data.config.at("stub")));
    frozen = stub.parameter_count();
  }
  const double fraction =
      trainable + frozen > 0
          ? static_cast<double>(trainable) / static_cast<double>(trainable + frozen)
          : 0.0;
  return {{"kind", data.config.value("kind", "?")},
          {"config", data.config},
          {"parameters", params},
          {"trainable_count", trainable},
          {"frozen_count", frozen},
          {"trainable_fraction", fraction}};
}

}  // namespace hingenet
