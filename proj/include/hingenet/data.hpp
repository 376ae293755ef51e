#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hingenet/tensor.hpp"

namespace hingenet {

// Reference beats in seconds with metrical positions (1 = downbeat).
struct BeatAnnotation {
  std::vector<double> beat_times;
  std::vector<int64_t> positions;

  std::vector<double> downbeat_times() const;
};

struct SyntheticConfig {
  int64_t n_items = 60;
  double duration_s = 20.0;
  double frame_rate = 50.0;
  int64_t feature_dim = 60;
  double tempo_min_bpm = 70.0;
  double tempo_max_bpm = 180.0;
  std::vector<int64_t> meters = {3, 4};
  double tempo_jitter = 0.02;
  double noise_sigma = 0.05;
  std::vector<double> harmonic_amplitudes = {1.0, 0.8, 0.6, 0.5, 0.4};
  uint64_t seed = 1;

  void validate() const;
};

struct Example {
  std::string id;
  TensorPtr features;  // (1, feature_dim, t)
  BeatAnnotation annotation;
  double frame_rate = 50.0;
};

// Synthetic corpus: each item carries a harmonic stack (root + offsets
// 12/19/24/28 bins) that jumps to a new root at every beat and stays put in
// between, so feature change points mark the beats. Downbeat frames add a
// one-frame broadband lift of 0.3. Deterministic per (seed, item index).
std::vector<Example> generate(const SyntheticConfig& config);
Example generate_item(const SyntheticConfig& config, int64_t index);

// Per-frame soft targets: 1.0 at the annotated frame, 0.5 at +-1, 0.25 at
// +-2; overlapping stencils keep the per-frame maximum.
struct BroadenedTargets {
  std::vector<double> beat;
  std::vector<double> downbeat;
};
BroadenedTargets broaden_labels(const BeatAnnotation& annotation, int64_t n_frames,
                                double frame_rate);

// Linear-interpolation resampling of the time axis by factor s in [0.5, 2];
// beat times scale by exactly s.
Example time_stretch(const Example& example, double factor);

// Annotation text files: "time position" per line, position optional.
BeatAnnotation parse_annotation(const std::string& path);
void write_annotation(const BeatAnnotation& annotation, const std::string& path);

// Dataset directory: item_{k}.hgft + item_{k}.beats + manifest.json with the
// config echo, seed and train/val/test splits.
struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct Dataset {
  std::vector<Example> items;
  std::vector<int64_t> train_ids, val_ids, test_ids;
  SyntheticConfig config;
};

Dataset generate_dataset(const SyntheticConfig& config, const SplitRatios& splits = {});
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace hingenet
