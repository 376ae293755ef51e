#include "hingenet/foundation.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "hingenet/rng.hpp"

namespace hingenet {

namespace {

TensorPtr init_uniform(SplitMix64& rng, Shape shape, int64_t fan_in, double center = 0.0,
                       double scale = 1.0) {
  const double bound = scale / std::sqrt(static_cast<double>(fan_in));
  auto t = Tensor::create(shape);
  for (double& v : t->data) v = center + rng.next_uniform(-bound, bound);
  return t;
}

}  // namespace

void StubConfig::validate() const {
  if (n_layers < 1) throw_invalid("stub: n_layers must be >= 1");
  if (hidden < 1) throw_invalid("stub: hidden must be >= 1");
  if (input_channels < 1) throw_invalid("stub: input_channels must be >= 1");
  if (n_heads != 1) throw_invalid("stub: only single-head attention is supported");
  if (hidden % n_heads != 0) throw_invalid("stub: hidden must be divisible by n_heads");
}

FoundationStub::FoundationStub(const StubConfig& config) : config_(config) {
  config_.validate();
  const int64_t h = config_.hidden;
  const int64_t m = config_.mlp();
  SplitMix64 rng(config_.seed);

  // Frozen weights. Gains sit near 1 so the residual stream keeps its scale;
  // biases and shifts are random so an all-zero input still excites the net.
  // Two scale choices keep the frozen features usable downstream: the stem is
  // drawn wide enough that sparse inputs map to O(1) features, and the
  // residual-branch output maps (wo, w2) start small so untrained random
  // blocks perturb rather than bury the content on the residual stream.
  const double stem_scale = 8.0;
  const double residual_scale = 0.25 / static_cast<double>(config_.n_layers);
  auto frozen = [&](const std::string& name, TensorPtr value) {
    return Parameter(name, std::move(value), /*trainable=*/false);
  };
  stem_w_ = frozen("stem.w", init_uniform(rng, {h, config_.input_channels, 3},
                                          config_.input_channels * 3, 0.0, stem_scale));
  stem_b_ = frozen("stem.b", init_uniform(rng, {1, h, 1}, config_.input_channels * 3));

  blocks_.reserve(static_cast<size_t>(config_.n_layers));
  for (int64_t i = 0; i < config_.n_layers; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    Block blk;
    blk.ln1_gain = frozen(p + "ln1.g", init_uniform(rng, {1, h, 1}, h, 1.0));
    blk.ln1_shift = frozen(p + "ln1.s", init_uniform(rng, {1, h, 1}, h));
    blk.wq = frozen(p + "wq", init_uniform(rng, {1, h, h}, h));
    blk.bq = frozen(p + "bq", init_uniform(rng, {1, h, 1}, h));
    blk.wk = frozen(p + "wk", init_uniform(rng, {1, h, h}, h));
    blk.bk = frozen(p + "bk", init_uniform(rng, {1, h, 1}, h));
    blk.wv = frozen(p + "wv", init_uniform(rng, {1, h, h}, h));
    blk.bv = frozen(p + "bv", init_uniform(rng, {1, h, 1}, h));
    blk.wo = frozen(p + "wo", init_uniform(rng, {1, h, h}, h, 0.0, residual_scale));
    blk.bo = frozen(p + "bo", init_uniform(rng, {1, h, 1}, h));
    blk.ln2_gain = frozen(p + "ln2.g", init_uniform(rng, {1, h, 1}, h, 1.0));
    blk.ln2_shift = frozen(p + "ln2.s", init_uniform(rng, {1, h, 1}, h));
    blk.w1 = frozen(p + "mlp.w1", init_uniform(rng, {1, m, h}, h));
    blk.b1 = frozen(p + "mlp.b1", init_uniform(rng, {1, m, 1}, h));
    blk.w2 = frozen(p + "mlp.w2", init_uniform(rng, {1, h, m}, m, 0.0, residual_scale));
    blk.b2 = frozen(p + "mlp.b2", init_uniform(rng, {1, h, 1}, m));
    blocks_.push_back(std::move(blk));
  }
}

TensorPtr FoundationStub::block_forward(const Block& blk, const TensorPtr& x,
                                        const BlockOverride* hooks) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden));
  TensorPtr a = layernorm(x, blk.ln1_gain.value, blk.ln1_shift.value);
  TensorPtr q = linear(a, blk.wq.value, blk.bq.value);
  TensorPtr kk = linear(a, blk.wk.value, blk.bk.value);
  TensorPtr v = linear(a, blk.wv.value, blk.bv.value);
  if (hooks && hooks->q_extra) q = add(q, hooks->q_extra(a));
  if (hooks && hooks->v_extra) v = add(v, hooks->v_extra(a));
  TensorPtr scores = time_gram(q, kk, scale);
  TensorPtr attw = softmax(scores, Axis::channel);  // normalize over source frames
  TensorPtr attn = time_mix(v, attw);
  TensorPtr o = linear(attn, blk.wo.value, blk.bo.value);
  TensorPtr h = add(x, o);
  TensorPtr m = layernorm(h, blk.ln2_gain.value, blk.ln2_shift.value);
  m = linear(m, blk.w1.value, blk.b1.value);
  m = relu(m);
  m = linear(m, blk.w2.value, blk.b2.value);
  TensorPtr out = add(h, m);
  if (hooks && hooks->post) out = hooks->post(out);
  return out;
}

LayerFeatureStack FoundationStub::forward_all(const TensorPtr& x,
                                              const std::vector<BlockOverride>* overrides,
                                              double frame_rate) const {
  if (!x) throw_invalid("stub: null input");
  if (x->shape.c != config_.input_channels) {
    throw_invalid("stub: input has " + std::to_string(x->shape.c) +
                  " channels, stem expects " + std::to_string(config_.input_channels));
  }
  if (!x->all_finite()) throw_numeric("stub: non-finite input");
  if (overrides && static_cast<int64_t>(overrides->size()) != config_.n_layers) {
    throw_invalid("stub: override count does not match layer count");
  }

  LayerFeatureStack stack;
  stack.frame_rate = frame_rate;
  TensorPtr h = conv1d(x, stem_w_.value, stem_b_.value, 1, Axis::time);
  for (int64_t i = 0; i < config_.n_layers; ++i) {
    const BlockOverride* hooks = overrides ? &(*overrides)[i] : nullptr;
    h = block_forward(blocks_[static_cast<size_t>(i)], h, hooks);
    stack.layers.push_back(h);
  }
  return stack;
}

std::vector<const Parameter*> FoundationStub::parameters() const {
  std::vector<const Parameter*> out{&stem_w_, &stem_b_};
  for (const Block& blk : blocks_) {
    for (const Parameter* p : {&blk.ln1_gain, &blk.ln1_shift, &blk.wq, &blk.bq, &blk.wk,
                               &blk.bk, &blk.wv, &blk.bv, &blk.wo, &blk.bo, &blk.ln2_gain,
                               &blk.ln2_shift, &blk.w1, &blk.b1, &blk.w2, &blk.b2}) {
      out.push_back(p);
    }
  }
  return out;
}

int64_t FoundationStub::parameter_count() const {
  int64_t n = 0;
  for (const Parameter* p : parameters()) n += p->value->size();
  return n;
}

Digest FoundationStub::parameter_digest() const {
  Sha256 hash;
  for (const Parameter* p : parameters()) {
    hash.update(p->name.data(), p->name.size());
    hash.update(p->value->data.data(), p->value->data.size() * sizeof(double));
  }
  return hash.finish();
}

// --- HGFT feature files -----------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'H', 'G', 'F', 'T'};
constexpr uint32_t kFeatureVersion = 1;
constexpr uint32_t kMaxDim = 1u << 24;

void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& f, int64_t& offset, const char* field) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (f.gcount() != sizeof(v)) throw_format_at(offset, std::string("truncated header: ") + field);
  offset += sizeof(v);
  return v;
}

}  // namespace

void save_features(const LayerFeatureStack& stack, const std::string& path) {
  if (stack.layers.empty()) throw_invalid("save_features: stack must be non-empty");
  const Shape s = stack.layers[0]->shape;
  for (const auto& layer : stack.layers) {
    if (!(layer->shape == s)) throw_invalid("save_features: layers must share one shape");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  f.write(kFeatureMagic, 4);
  write_u32(f, kFeatureVersion);
  write_u32(f, static_cast<uint32_t>(stack.layers.size()));
  write_u32(f, static_cast<uint32_t>(s.b));
  write_u32(f, static_cast<uint32_t>(s.c));
  write_u32(f, static_cast<uint32_t>(s.t));
  f.write(reinterpret_cast<const char*>(&stack.frame_rate), sizeof(double));
  std::vector<float> buf(static_cast<size_t>(s.size()));
  for (const auto& layer : stack.layers) {
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(layer->data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw_io("failed writing '" + path + "'");
}

LayerFeatureStack load_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_io("cannot open '" + path + "'");
  int64_t offset = 0;
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (f.gcount() != 4) throw_format_at(offset, "truncated header: magic");
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) throw_format_at(offset, "bad magic");
  offset += 4;
  const uint32_t version = read_u32(f, offset, "version");
  if (version != kFeatureVersion) {
    throw_format_at(offset - 4, "unsupported version " + std::to_string(version));
  }
  const uint32_t n_layers = read_u32(f, offset, "n_layers");
  if (n_layers == 0) throw_format_at(offset - 4, "stack must be non-empty (n_layers = 0)");
  const uint32_t batch = read_u32(f, offset, "batch");
  const uint32_t channels = read_u32(f, offset, "channels");
  const uint32_t frames = read_u32(f, offset, "frames");
  for (auto [dim, name] : {std::pair{n_layers, "n_layers"}, {batch, "batch"},
                           {channels, "channels"}, {frames, "frames"}}) {
    if (dim == 0 || dim > kMaxDim) {
      throw_format_at(offset, std::string("dimension out of range: ") + name);
    }
  }
  const uint64_t per_layer = uint64_t(batch) * channels * frames;
  if (per_layer > (uint64_t(1) << 33) / n_layers) {
    throw_format_at(offset, "dimension overflow");
  }
  double frame_rate = 0.0;
  f.read(reinterpret_cast<char*>(&frame_rate), sizeof(double));
  if (f.gcount() != sizeof(double)) throw_format_at(offset, "truncated header: frame_rate");
  offset += sizeof(double);
  if (!(frame_rate > 0.0)) throw_format_at(offset - 8, "frame_rate must be positive");

  LayerFeatureStack stack;
  stack.frame_rate = frame_rate;
  std::vector<float> buf(static_cast<size_t>(per_layer));
  for (uint32_t l = 0; l < n_layers; ++l) {
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
      throw_format_at(offset + f.gcount(), "truncated payload in layer " + std::to_string(l));
    }
    offset += static_cast<int64_t>(buf.size() * sizeof(float));
    auto t = Tensor::create({int64_t(batch), int64_t(channels), int64_t(frames)});
    for (size_t i = 0; i < buf.size(); ++i) t->data[i] = static_cast<double>(buf[i]);
    stack.layers.push_back(std::move(t));
  }
  return stack;
}

}  // namespace hingenet
