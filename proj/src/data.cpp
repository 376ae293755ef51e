#include "hingenet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hingenet/config.hpp"
#include "hingenet/foundation.hpp"
#include "hingenet/rng.hpp"

namespace hingenet {

namespace fs = std::filesystem;

// bin offsets of the 2nd..5th harmonic relative to the root at 12 bins/octave
constexpr int64_t kHarmonicOffsets[4] = {12, 19, 24, 28};
constexpr int64_t kStackSpan = 29;  // root + 28
constexpr double kDownbeatLift = 0.3;

std::vector<double> BeatAnnotation::downbeat_times() const {
  std::vector<double> out;
  for (size_t i = 0; i < beat_times.size(); ++i) {
    if (i < positions.size() && positions[i] == 1) out.push_back(beat_times[i]);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (n_items < 1) throw_invalid("synthetic: n_items must be >= 1");
  if (!(duration_s > 0.0)) throw_invalid("synthetic: duration must be positive");
  if (!(frame_rate > 0.0)) throw_invalid("synthetic: frame rate must be positive");
  if (feature_dim < kStackSpan) {
    throw_invalid("synthetic: feature_dim must be >= " + std::to_string(kStackSpan) +
                  " so the harmonic stack fits");
  }
  if (!(tempo_min_bpm > 0.0 && tempo_min_bpm <= tempo_max_bpm)) {
    throw_invalid("synthetic: bad tempo range");
  }
  if (meters.empty()) throw_invalid("synthetic: meter set is empty");
  for (int64_t m : meters) {
    if (m < 1) throw_invalid("synthetic: meters must be >= 1");
  }
  if (!(tempo_jitter >= 0.0 && tempo_jitter < 0.5)) throw_invalid("synthetic: bad jitter");
  if (noise_sigma < 0.0) throw_invalid("synthetic: noise sigma must be >= 0");
  if (harmonic_amplitudes.size() != 5) {
    throw_invalid("synthetic: expected 5 harmonic amplitudes");
  }
}

Example generate_item(const SyntheticConfig& config, int64_t index) {
  config.validate();
  SplitMix64 rng(mix_seed(config.seed, static_cast<uint64_t>(index) + 0x17E11));

  const int64_t t = std::llround(config.duration_s * config.frame_rate);
  const double tempo = rng.next_uniform(config.tempo_min_bpm, config.tempo_max_bpm);
  const int64_t meter =
      config.meters[static_cast<size_t>(rng.next_below(static_cast<int64_t>(config.meters.size())))];
  const int64_t root_span = config.feature_dim - kStackSpan + 1;
  int64_t root = rng.next_below(root_span);

  // beat grid with per-beat jitter; the first beat falls inside the first period
  const double base_interval = 60.0 / tempo;
  BeatAnnotation ann;
  double time = rng.next_uniform(0.05, base_interval);
  int64_t pos = 1;
  while (time < config.duration_s) {
    ann.beat_times.push_back(time);
    ann.positions.push_back(pos);
    pos = pos % meter + 1;
    time += base_interval * (1.0 + rng.next_uniform(-config.tempo_jitter, config.tempo_jitter));
  }

  Example ex;
  ex.id = "item_" + std::to_string(index);
  ex.frame_rate = config.frame_rate;
  ex.annotation = ann;
  ex.features = Tensor::create({1, config.feature_dim, t});
  Tensor& f = *ex.features;

  // piecewise-constant harmonic stack; the root takes a random-walk step at
  // every beat
  auto paint = [&](int64_t frame_lo, int64_t frame_hi, int64_t stack_root) {
    for (int64_t h = 0; h < 5; ++h) {
      const int64_t bin = h == 0 ? stack_root : stack_root + kHarmonicOffsets[h - 1];
      const double amp = config.harmonic_amplitudes[static_cast<size_t>(h)];
      for (int64_t u = frame_lo; u < frame_hi; ++u) f.at(0, bin, u) = amp;
    }
  };

  int64_t segment_start = 0;
  for (size_t b = 0; b <= ann.beat_times.size(); ++b) {
    const int64_t segment_end =
        b < ann.beat_times.size()
            ? std::min<int64_t>(t, std::llround(ann.beat_times[b] * config.frame_rate))
            : t;
    if (segment_end > segment_start) paint(segment_start, segment_end, root);
    if (b < ann.beat_times.size()) {
      const int64_t step = rng.next_below(9) - 4;  // -4..4
      root = std::clamp<int64_t>(root + step, 0, root_span - 1);
      segment_start = segment_end;
    }
  }

  // one-frame broadband lift at downbeats
  for (size_t b = 0; b < ann.beat_times.size(); ++b) {
    if (ann.positions[b] != 1) continue;
    const int64_t frame =
        std::clamp<int64_t>(std::llround(ann.beat_times[b] * config.frame_rate), 0, t - 1);
    for (int64_t c = 0; c < config.feature_dim; ++c) f.at(0, c, frame) += kDownbeatLift;
  }

  if (config.noise_sigma > 0.0) {
    for (double& v : f.data) v += config.noise_sigma * rng.next_gaussian();
  }
  return ex;
}

std::vector<Example> generate(const SyntheticConfig& config) {
  config.validate();
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(config.n_items));
  for (int64_t i = 0; i < config.n_items; ++i) out.push_back(generate_item(config, i));
  return out;
}

BroadenedTargets broaden_labels(const BeatAnnotation& annotation, int64_t n_frames,
                                double frame_rate) {
  if (n_frames < 1) throw_invalid("broaden_labels: need at least one frame");
  if (!(frame_rate > 0.0)) throw_invalid("broaden_labels: frame rate must be positive");
  BroadenedTargets out;
  out.beat.assign(static_cast<size_t>(n_frames), 0.0);
  out.downbeat.assign(static_cast<size_t>(n_frames), 0.0);
  constexpr double kStencil[5] = {0.25, 0.5, 1.0, 0.5, 0.25};

  auto stamp = [&](std::vector<double>& target, double time) {
    const int64_t center = std::llround(time * frame_rate);
    for (int64_t d = -2; d <= 2; ++d) {
      const int64_t frame = center + d;
      if (frame < 0 || frame >= n_frames) continue;
      double& cell = target[static_cast<size_t>(frame)];
      cell = std::max(cell, kStencil[d + 2]);
    }
  };

  for (size_t i = 0; i < annotation.beat_times.size(); ++i) {
    stamp(out.beat, annotation.beat_times[i]);
    if (i < annotation.positions.size() && annotation.positions[i] == 1) {
      stamp(out.downbeat, annotation.beat_times[i]);
    }
  }
  return out;
}

Example time_stretch(const Example& example, double factor) {
  if (!(factor >= 0.5 && factor <= 2.0)) {
    throw_invalid("time_stretch: factor must lie in [0.5, 2]");
  }
  const Shape s = example.features->shape;
  const int64_t t_src = s.t;
  const int64_t t_dst = std::llround(static_cast<double>(t_src) * factor);

  Example out;
  out.id = example.id;
  out.frame_rate = example.frame_rate;
  out.features = Tensor::create({s.b, s.c, t_dst});
  for (int64_t bi = 0; bi < s.b; ++bi) {
    for (int64_t c = 0; c < s.c; ++c) {
      const double* src = &example.features->at(bi, c, 0);
      double* dst = &out.features->at(bi, c, 0);
      for (int64_t u = 0; u < t_dst; ++u) {
        const double pos = std::min(static_cast<double>(u) / factor,
                                    static_cast<double>(t_src - 1));
        const int64_t lo = static_cast<int64_t>(pos);
        const int64_t hi = std::min(lo + 1, t_src - 1);
        const double frac = pos - static_cast<double>(lo);
        dst[u] = src[lo] * (1.0 - frac) + src[hi] * frac;
      }
    }
  }
  out.annotation.positions = example.annotation.positions;
  out.annotation.beat_times.reserve(example.annotation.beat_times.size());
  for (double bt : example.annotation.beat_times) {
    out.annotation.beat_times.push_back(bt * factor);
  }
  return out;
}

// --- annotation files ------------------------------------------------------

BeatAnnotation parse_annotation(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_io("cannot open '" + path + "'");
  BeatAnnotation out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double time = 0.0;
    if (!(ss >> time)) {
      throw_format("'" + path + "' line " + std::to_string(line_no) + ": malformed time");
    }
    int64_t pos = 0;
    ss >> pos;  // optional
    if (!out.beat_times.empty() && time <= out.beat_times.back()) {
      throw_format("'" + path + "' line " + std::to_string(line_no) +
                   ": times must be strictly increasing");
    }
    out.beat_times.push_back(time);
    out.positions.push_back(pos);
  }
  return out;
}

void write_annotation(const BeatAnnotation& annotation, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  char line[64];
  for (size_t i = 0; i < annotation.beat_times.size(); ++i) {
    const int64_t pos = i < annotation.positions.size() ? annotation.positions[i] : 0;
    std::snprintf(line, sizeof(line), "%.6f %lld\n", annotation.beat_times[i],
                  static_cast<long long>(pos));
    f << line;
  }
  if (!f) throw_io("failed writing '" + path + "'");
}

// --- dataset directories -----------------------------------------------------

Dataset generate_dataset(const SyntheticConfig& config, const SplitRatios& splits) {
  if (!(splits.train > 0.0 && splits.val > 0.0 && splits.test > 0.0)) {
    throw_invalid("dataset: every split ratio must be positive");
  }
  Dataset ds;
  ds.config = config;
  ds.items = generate(config);
  const double total = splits.train + splits.val + splits.test;
  const int64_t n = config.n_items;
  int64_t n_train = std::max<int64_t>(1, std::llround(n * splits.train / total));
  int64_t n_val = std::max<int64_t>(1, std::llround(n * splits.val / total));
  if (n_train + n_val >= n) {
    n_train = std::max<int64_t>(1, n - 2);
    n_val = n - n_train > 1 ? 1 : 0;
  }
  for (int64_t i = 0; i < n; ++i) {
    if (i < n_train) {
      ds.train_ids.push_back(i);
    } else if (i < n_train + n_val) {
      ds.val_ids.push_back(i);
    } else {
      ds.test_ids.push_back(i);
    }
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create directory '" + dir + "': " + ec.message());

  nlohmann::json manifest;
  manifest["format"] = "hingenet-dataset";
  manifest["version"] = 1;
  manifest["seed"] = dataset.config.seed;
  manifest["config"] = to_json(dataset.config);
  manifest["splits"] = {{"train", dataset.train_ids},
                        {"val", dataset.val_ids},
                        {"test", dataset.test_ids}};
  nlohmann::json items = nlohmann::json::array();
  for (const Example& ex : dataset.items) {
    items.push_back({{"id", ex.id},
                     {"features", ex.id + ".hgft"},
                     {"annotation", ex.id + ".beats"}});
    LayerFeatureStack stack;
    stack.frame_rate = ex.frame_rate;
    stack.layers = {ex.features};
    save_features(stack, (fs::path(dir) / (ex.id + ".hgft")).string());
    write_annotation(ex.annotation, (fs::path(dir) / (ex.id + ".beats")).string());
  }
  manifest["items"] = items;

  std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!f) throw_io("cannot write manifest in '" + dir + "'");
  f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw_io("cannot open '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw_format("manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "hingenet-dataset") {
    throw_format("manifest.json: unknown format tag");
  }

  Dataset ds;
  ds.config = synthetic_config_from_json(manifest.at("config"));
  ds.train_ids = manifest.at("splits").at("train").get<std::vector<int64_t>>();
  ds.val_ids = manifest.at("splits").at("val").get<std::vector<int64_t>>();
  ds.test_ids = manifest.at("splits").at("test").get<std::vector<int64_t>>();
  for (const auto& item : manifest.at("items")) {
    Example ex;
    ex.id = item.at("id").get<std::string>();
    LayerFeatureStack stack =
        load_features((fs::path(dir) / item.at("features").get<std::string>()).string());
    if (stack.layers.size() != 1) {
      throw_format("dataset item '" + ex.id + "': expected a single feature layer");
    }
    ex.features = stack.layers[0];
    ex.frame_rate = stack.frame_rate;
    ex.annotation =
        parse_annotation((fs::path(dir) / item.at("annotation").get<std::string>()).string());
    ds.items.push_back(std::move(ex));
  }
  const int64_t n = static_cast<int64_t>(ds.items.size());
  for (const auto* ids : {&ds.train_ids, &ds.val_ids, &ds.test_ids}) {
    for (int64_t id : *ids) {
      if (id < 0 || id >= n) throw_format("manifest.json: split index out of range");
    }
  }
  return ds;
}

}  // namespace hingenet
