#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hingenet/baselines.hpp"
#include "hingenet/data.hpp"
#include "hingenet/eval.hpp"
#include "hingenet/hinge.hpp"
#include "hingenet/model.hpp"
#include "hingenet/postprocess.hpp"

namespace hingenet {

// How broadened annotations drive the loss: as soft targets, or as hard
// targets with per-frame loss weights.
enum class LabelMode { soft_target, loss_weight };

struct TrainConfig {
  double lr = 1e-3;
  int64_t batch_size = 16;
  int64_t patience = 20;
  int64_t max_epochs = 200;
  uint64_t seed = 1;
  // off by default: frozen features can then be computed once per item,
  // which keeps full runs at desk scale; enable for the augmented recipe
  bool augmentation = false;
  LabelMode label_mode = LabelMode::soft_target;
  double stretch_min = 0.8;
  double stretch_max = 1.25;

  void validate() const;
};

// Patience bookkeeping, separated out so the stopping rule is testable on
// scripted loss sequences. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(int64_t patience) : patience_(patience) {}

  // returns true when the loss improved (strictly)
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      bad_streak_ = 0;
      return true;
    }
    ++bad_streak_;
    return false;
  }

  bool should_stop() const { return bad_streak_ >= patience_; }
  int64_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int64_t patience_;
  int64_t epoch_ = 0;
  int64_t best_epoch_ = 0;
  int64_t bad_streak_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochLoss {
  double train = 0.0;
  double val = 0.0;
};

struct TestMetrics {
  double beat_f = 0.0, beat_cmlt = 0.0, beat_amlt = 0.0;
  double downbeat_f = 0.0;
  int64_t items = 0;
};

struct RunRecord {
  std::vector<EpochLoss> losses;
  int64_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  TestMetrics test;
  ParamCounts counts;
  double wall_seconds = 0.0;
  // call accounting: augmentation must only ever touch the train split
  int64_t augment_calls_train = 0;
  int64_t augment_calls_val = 0;
  int64_t augment_calls_test = 0;
};

nlohmann::json run_record_to_json(const RunRecord& record);

// Precomputed frozen-layer stacks, indexed by item id. Only valid for
// separable models; jobs > 1 fans out per item.
using FeatureCache = std::vector<LayerFeatureStack>;
FeatureCache precompute_features(const FoundationStub& stub, const std::vector<Example>& items,
                                 int64_t jobs = 1);

// Decode + score one item's activations against its annotation.
struct ItemEval {
  eval::MetricReport beat;
  eval::FScore downbeat_f;
  bool has_downbeats = false;
};
ItemEval evaluate_item(const ActivationPair& acts, const BeatAnnotation& annotation,
                       DbnConfig dbn);

// Mini-batch Adam on summed beat+downbeat BCE with broadened targets, early
// stopping on validation loss, best-checkpoint restore. Deterministic given
// the config seed. Augmentation (when enabled) draws one stretch factor per
// train item per epoch; validation and test items are never augmented.
RunRecord train_model(TrackingModel& model, const Dataset& dataset, const TrainConfig& config,
                      const DbnConfig& dbn, const FeatureCache* cache = nullptr);

// Pipeline default: a stub whose hidden size every ablation projection
// factor {2,4,6,8} divides.
StubConfig default_pipeline_stub();
// Harness profile: short deterministic runs without augmentation so the
// factorial grids finish at desk scale.
TrainConfig default_harness_train();

struct AblationConfig {
  std::vector<int64_t> r_values = {2, 4, 6, 8};
  std::vector<uint64_t> seeds = {1, 2, 3};
  int64_t jobs = 1;
  StubConfig stub = default_pipeline_stub();
  HingeConfig hinge;
  TrainConfig train = default_harness_train();
  SyntheticConfig data;
  SplitRatios split;
  DbnConfig dbn;
};

struct AblationCell {
  int64_t r = 0;
  bool ham = false;
  bool ok = false;
  std::string skip_reason;
  std::vector<double> beat_f, downbeat_f;  // per seed
  double beat_f_mean = 0.0, beat_f_std = 0.0;
  double downbeat_f_mean = 0.0, downbeat_f_std = 0.0;
};

// Full factorial over r x {ham on, off}; invalid r values are skipped with a
// recorded reason. Cells run independently and may fan out over jobs threads;
// results are merged in fixed cell order.
std::vector<AblationCell> ablate_projection(const AblationConfig& config);
void write_ablation_csv(const std::vector<AblationCell>& cells, const std::string& path);
void write_ablation_svg(const std::vector<AblationCell>& cells, const std::string& path);

struct CompareConfig {
  std::vector<std::string> methods = {"hinge", "adapter", "lora", "linear_probe"};
  std::vector<uint64_t> seeds = {1, 2, 3};
  int64_t jobs = 1;
  StubConfig stub = default_pipeline_stub();
  HingeConfig hinge;
  AdapterConfig adapter;
  LoraConfig lora;
  TrainConfig train = default_harness_train();
  SyntheticConfig data;
  SplitRatios split;
  DbnConfig dbn;
};

struct CompareRow {
  std::string method;
  int64_t trainable = 0;
  int64_t frozen = 0;
  double fraction = 0.0;
  std::vector<double> beat_f, downbeat_f;
  double beat_f_mean = 0.0, beat_f_std = 0.0;
  double downbeat_f_mean = 0.0, downbeat_f_std = 0.0;
};

std::vector<CompareRow> compare_methods(const CompareConfig& config);
void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path);

// --- file-level orchestration shared by the C API and the CLI ---------------

// config: {method, stub, hinge, adapter, lora, train, dbn}; trains on a
// dataset directory, writes checkpoint.hgnm, run.json and per-test-item
// activations under out_dir, returns the run report.
nlohmann::json run_training_pipeline(const nlohmann::json& config,
                                     const std::string& dataset_dir,
                                     const std::string& out_dir);

// config: {r_values, seeds, jobs, stub, hinge, train, data, split, dbn};
// writes ablate.csv + ablate.svg under out_dir.
nlohmann::json run_ablation_pipeline(const nlohmann::json& config, const std::string& out_dir);

// config: {methods, seeds, jobs, stub, hinge, adapter, lora, train, data,
// split, dbn}; writes compare.csv under out_dir.
nlohmann::json run_compare_pipeline(const nlohmann::json& config, const std::string& out_dir);

const char* version_string();
std::string version_hash();

}  // namespace hingenet
