#include "hingenet/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "hingenet/config.hpp"
#include "hingenet/rng.hpp"
#include "hingenet/sha256.hpp"

namespace hingenet {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw_invalid("train: lr must be positive");
  if (batch_size < 1) throw_invalid("train: batch size must be >= 1");
  if (patience < 1) throw_invalid("train: patience must be >= 1");
  if (max_epochs < 1) throw_invalid("train: max_epochs must be >= 1");
  if (!(stretch_min >= 0.5 && stretch_min <= stretch_max && stretch_max <= 2.0)) {
    throw_invalid("train: stretch range must lie inside [0.5, 2]");
  }
}

namespace {

void run_tasks(int64_t jobs, std::vector<std::function<void()>>& tasks) {
  if (tasks.empty()) return;
  const int64_t n_threads =
      std::clamp<int64_t>(jobs, 1, static_cast<int64_t>(tasks.size()));
  if (n_threads == 1) {
    for (auto& task : tasks) task();
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(n_threads));
  for (int64_t i = 0; i < n_threads; ++i) {
    workers.emplace_back([&] {
      while (true) {
        const size_t idx = next.fetch_add(1);
        if (idx >= tasks.size()) break;
        tasks[idx]();
      }
    });
  }
  for (auto& w : workers) w.join();
}

TensorPtr vector_tensor(const std::vector<double>& v) {
  return Tensor::create({1, 1, static_cast<int64_t>(v.size())}, std::vector<double>(v));
}

struct ItemTargets {
  TensorPtr beat_target, downbeat_target;
  TensorPtr beat_weight, downbeat_weight;  // null in soft-target mode
};

ItemTargets make_targets(const BeatAnnotation& ann, int64_t n_frames, double frame_rate,
                         LabelMode mode) {
  const BroadenedTargets soft = broaden_labels(ann, n_frames, frame_rate);
  ItemTargets out;
  if (mode == LabelMode::soft_target) {
    out.beat_target = vector_tensor(soft.beat);
    out.downbeat_target = vector_tensor(soft.downbeat);
    return out;
  }
  // hard labels on the broadened support, stencil values as loss weights
  auto harden = [](const std::vector<double>& s, std::vector<double>& target,
                   std::vector<double>& weight) {
    target.assign(s.size(), 0.0);
    weight.assign(s.size(), 1.0);
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] > 0.0) {
        target[i] = 1.0;
        weight[i] = s[i];
      }
    }
  };
  std::vector<double> bt, bw, dt, dw;
  harden(soft.beat, bt, bw);
  harden(soft.downbeat, dt, dw);
  out.beat_target = vector_tensor(bt);
  out.downbeat_target = vector_tensor(dt);
  out.beat_weight = vector_tensor(bw);
  out.downbeat_weight = vector_tensor(dw);
  return out;
}

std::vector<double> channel_vector(const TensorPtr& t) {
  return {t->data.begin(), t->data.end()};
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

double vec_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

FeatureCache precompute_features(const FoundationStub& stub, const std::vector<Example>& items,
                                 int64_t jobs) {
  FeatureCache cache(items.size());
  std::vector<std::function<void()>> tasks;
  tasks.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    tasks.push_back([&stub, &items, &cache, i] {
      NoGradGuard no_grad;
      cache[i] = stub.forward_all(items[i].features, nullptr, items[i].frame_rate);
    });
  }
  run_tasks(jobs, tasks);
  return cache;
}

ItemEval evaluate_item(const ActivationPair& acts, const BeatAnnotation& annotation,
                       DbnConfig dbn) {
  dbn.frame_rate = acts.frame_rate;
  const std::vector<double> beat_act = channel_vector(acts.beat);
  const std::vector<double> down_act = channel_vector(acts.downbeat);
  BeatSequence decoded = viterbi_decode(beat_act, dbn);
  if (!decoded.times.empty()) {
    decoded = assign_downbeats(decoded, down_act, dbn.frame_rate);
  }

  ItemEval out;
  BeatSequence ref;
  ref.times = annotation.beat_times;
  ref.positions = annotation.positions;
  out.beat = eval::score_beats(decoded, ref);

  std::vector<double> est_down;
  for (size_t i = 0; i < decoded.times.size(); ++i) {
    if (i < decoded.positions.size() && decoded.positions[i] == 1) {
      est_down.push_back(decoded.times[i]);
    }
  }
  const std::vector<double> ref_down = annotation.downbeat_times();
  if (!ref_down.empty()) {
    out.downbeat_f = eval::f_measure(est_down, ref_down);
    out.has_downbeats = true;
  }
  return out;
}

RunRecord train_model(TrackingModel& model, const Dataset& dataset, const TrainConfig& config,
                      const DbnConfig& dbn, const FeatureCache* cache) {
  config.validate();
  dbn.validate();
  const auto t_start = std::chrono::steady_clock::now();
  if (dataset.train_ids.empty() || dataset.val_ids.empty() || dataset.test_ids.empty()) {
    throw_invalid("train: every split must be non-empty");
  }
  if (cache && cache->size() != dataset.items.size()) {
    throw_invalid("train: feature cache size does not match dataset");
  }

  // internal cache for separable models: validation/test stacks always pay
  // off, train stacks only without augmentation (stretching changes them)
  FeatureCache local_cache;
  const FeatureCache* stacks = cache;
  if (!stacks && model.separable()) {
    local_cache.resize(dataset.items.size());
    std::vector<int64_t> wanted(dataset.val_ids);
    wanted.insert(wanted.end(), dataset.test_ids.begin(), dataset.test_ids.end());
    if (!config.augmentation) {
      wanted.insert(wanted.end(), dataset.train_ids.begin(), dataset.train_ids.end());
    }
    NoGradGuard no_grad;
    for (int64_t id : wanted) {
      const Example& ex = dataset.items[static_cast<size_t>(id)];
      local_cache[static_cast<size_t>(id)] =
          model.stub().forward_all(ex.features, nullptr, ex.frame_rate);
    }
    stacks = &local_cache;
  }

  auto cached_stack = [&](int64_t id) -> const LayerFeatureStack* {
    if (!stacks || !model.separable()) return nullptr;
    const LayerFeatureStack& s = (*stacks)[static_cast<size_t>(id)];
    return s.layers.empty() ? nullptr : &s;
  };

  // targets for unstretched items are reused across epochs
  std::vector<ItemTargets> fixed_targets(dataset.items.size());
  for (size_t i = 0; i < dataset.items.size(); ++i) {
    const Example& ex = dataset.items[i];
    fixed_targets[i] = make_targets(ex.annotation, ex.features->shape.t, ex.frame_rate,
                                    config.label_mode);
  }

  auto params = model.trainable_parameters();
  RunRecord record;
  record.counts = model.count_parameters();

  auto item_loss = [&](const ActivationPair& acts, const ItemTargets& targets) {
    TensorPtr lb = bce_loss(acts.beat, targets.beat_target, targets.beat_weight);
    TensorPtr ld = bce_loss(acts.downbeat, targets.downbeat_target, targets.downbeat_weight);
    return add(lb, ld);
  };

  auto validation_loss = [&]() {
    NoGradGuard no_grad;
    double acc = 0.0;
    for (int64_t id : dataset.val_ids) {
      const Example& ex = dataset.items[static_cast<size_t>(id)];
      const LayerFeatureStack* stack = cached_stack(id);
      const ActivationPair acts =
          stack ? model.forward_features(*stack) : model.forward(ex.features, ex.frame_rate);
      acc += item_loss(acts, fixed_targets[static_cast<size_t>(id)])->data[0];
    }
    return acc / static_cast<double>(dataset.val_ids.size());
  };

  EarlyStopping stopper(config.patience);
  std::vector<std::vector<double>> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (Parameter* p : params) best_params.push_back(p->value->data);
  };

  std::vector<int64_t> order(dataset.train_ids);
  for (int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    // deterministic shuffle per (seed, epoch)
    SplitMix64 shuffle_rng(mix_seed(config.seed, 0x5AFEull * static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.next_below(
                                  static_cast<int64_t>(i)))]);
    }
    SplitMix64 stretch_rng(mix_seed(config.seed, 0xA06ull * static_cast<uint64_t>(epoch)));

    double epoch_loss = 0.0;
    size_t batch_start = 0;
    while (batch_start < order.size()) {
      const size_t batch_end =
          std::min(order.size(), batch_start + static_cast<size_t>(config.batch_size));
      zero_grad(params);
      for (size_t bi = batch_start; bi < batch_end; ++bi) {
        const int64_t id = order[bi];
        const Example& ex = dataset.items[static_cast<size_t>(id)];
        ActivationPair acts;
        const ItemTargets* targets = &fixed_targets[static_cast<size_t>(id)];
        ItemTargets stretched_targets;
        if (config.augmentation) {
          const double factor =
              stretch_rng.next_uniform(config.stretch_min, config.stretch_max);
          const Example stretched = time_stretch(ex, factor);
          record.augment_calls_train += 1;
          stretched_targets =
              make_targets(stretched.annotation, stretched.features->shape.t,
                           stretched.frame_rate, config.label_mode);
          targets = &stretched_targets;
          acts = model.forward(stretched.features, stretched.frame_rate);
        } else {
          const LayerFeatureStack* stack = cached_stack(id);
          acts = stack ? model.forward_features(*stack)
                       : model.forward(ex.features, ex.frame_rate);
        }
        TensorPtr loss = item_loss(acts, *targets);
        if (!std::isfinite(loss->data[0])) throw_numeric("train: loss is not finite");
        epoch_loss += loss->data[0];
        backward(loss);
      }
      scale_grads(params, 1.0 / static_cast<double>(batch_end - batch_start));
      adam_step(params, {.lr = config.lr});
      batch_start = batch_end;
    }
    epoch_loss /= static_cast<double>(order.size());

    const double val = validation_loss();
    record.losses.push_back({epoch_loss, val});
    if (stopper.observe(val)) snapshot();
    if (stopper.should_stop()) break;
  }

  record.best_epoch = stopper.best_epoch();
  record.best_val_loss = stopper.best_loss();
  if (!best_params.empty()) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value->data = best_params[i];
  }

  // final decode + score on the untouched test split
  {
    NoGradGuard no_grad;
    double beat_f = 0.0, cmlt = 0.0, amlt = 0.0, down_f = 0.0;
    int64_t down_items = 0;
    for (int64_t id : dataset.test_ids) {
      const Example& ex = dataset.items[static_cast<size_t>(id)];
      const LayerFeatureStack* stack = cached_stack(id);
      const ActivationPair acts =
          stack ? model.forward_features(*stack) : model.forward(ex.features, ex.frame_rate);
      const ItemEval item = evaluate_item(acts, ex.annotation, dbn);
      beat_f += item.beat.f.f;
      cmlt += item.beat.c.cmlt;
      amlt += item.beat.c.amlt;
      if (item.has_downbeats) {
        down_f += item.downbeat_f.f;
        ++down_items;
      }
    }
    const double n = static_cast<double>(dataset.test_ids.size());
    record.test.items = static_cast<int64_t>(dataset.test_ids.size());
    record.test.beat_f = beat_f / n;
    record.test.beat_cmlt = cmlt / n;
    record.test.beat_amlt = amlt / n;
    record.test.downbeat_f = down_items > 0 ? down_f / static_cast<double>(down_items) : 0.0;
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return record;
}

json run_record_to_json(const RunRecord& record) {
  json losses = json::array();
  for (const EpochLoss& l : record.losses) {
    losses.push_back({{"train", l.train}, {"val", l.val}});
  }
  return {{"losses", losses},
          {"best_epoch", record.best_epoch},
          {"best_val_loss", record.best_val_loss},
          {"epochs_run", record.losses.size()},
          {"test",
           {{"beat_f", record.test.beat_f},
            {"beat_cmlt", record.test.beat_cmlt},
            {"beat_amlt", record.test.beat_amlt},
            {"downbeat_f", record.test.downbeat_f},
            {"items", record.test.items}}},
          {"counts",
           {{"trainable", record.counts.trainable},
            {"frozen", record.counts.frozen},
            {"fraction", record.counts.fraction()}}},
          {"wall_seconds", record.wall_seconds},
          {"augment_calls",
           {{"train", record.augment_calls_train},
            {"val", record.augment_calls_val},
            {"test", record.augment_calls_test}}}};
}

StubConfig default_pipeline_stub() {
  StubConfig c;
  c.hidden = 48;  // divisible by every harness projection factor {2,4,6,8}
  return c;
}

TrainConfig default_harness_train() {
  TrainConfig c;
  c.lr = 3e-3;
  c.max_epochs = 80;
  c.patience = 12;
  c.augmentation = false;
  return c;
}

// --- ablation ----------------------------------------------------------------

namespace {

struct SeedContext {
  Dataset dataset;
  std::shared_ptr<const FoundationStub> stub;
  FeatureCache cache;
};

SeedContext make_seed_context(const StubConfig& stub_cfg, const SyntheticConfig& data_cfg,
                              const SplitRatios& split, uint64_t seed, int64_t jobs) {
  SeedContext ctx;
  SyntheticConfig data = data_cfg;
  data.seed = mix_seed(seed, 0xDA7Aull);
  if (data.feature_dim != stub_cfg.input_channels) {
    throw_invalid("harness: data feature_dim must equal stub input_channels");
  }
  ctx.dataset = generate_dataset(data, split);
  ctx.stub = std::make_shared<FoundationStub>(stub_cfg);
  ctx.cache = precompute_features(*ctx.stub, ctx.dataset.items, jobs);
  return ctx;
}

}  // namespace

std::vector<AblationCell> ablate_projection(const AblationConfig& config) {
  if (config.r_values.empty()) throw_invalid("ablate: r_values is empty");
  if (config.seeds.empty()) throw_invalid("ablate: seeds is empty");
  config.train.validate();

  std::vector<SeedContext> contexts;
  contexts.reserve(config.seeds.size());
  for (uint64_t seed : config.seeds) {
    contexts.push_back(
        make_seed_context(config.stub, config.data, config.split, seed, config.jobs));
  }

  std::vector<AblationCell> cells;
  for (bool ham : {true, false}) {
    for (int64_t r : config.r_values) {
      AblationCell cell;
      cell.r = r;
      cell.ham = ham;
      if (r < 1 || config.stub.hidden % r != 0) {
        cell.ok = false;
        cell.skip_reason = "hidden " + std::to_string(config.stub.hidden) +
                           " not divisible by r " + std::to_string(r);
      } else {
        cell.ok = true;
        cell.beat_f.assign(config.seeds.size(), 0.0);
        cell.downbeat_f.assign(config.seeds.size(), 0.0);
      }
      cells.push_back(std::move(cell));
    }
  }

  std::vector<std::function<void()>> tasks;
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    if (!cells[ci].ok) continue;
    for (size_t si = 0; si < config.seeds.size(); ++si) {
      tasks.push_back([&, ci, si] {
        AblationCell& cell = cells[ci];
        const SeedContext& ctx = contexts[si];
        HingeConfig hc = config.hinge;
        hc.projection_factor = cell.r;
        hc.ham_enabled = cell.ham;
        TrainConfig tc = config.train;
        tc.seed = mix_seed(config.seeds[si],
                           0xCE11ull * static_cast<uint64_t>(cell.r * 2 + (cell.ham ? 1 : 0)));
        HingeTracker model(ctx.stub, hc, tc.seed);
        const RunRecord record = train_model(model, ctx.dataset, tc, config.dbn, &ctx.cache);
        cell.beat_f[si] = record.test.beat_f;
        cell.downbeat_f[si] = record.test.downbeat_f;
      });
    }
  }
  run_tasks(config.jobs, tasks);

  for (AblationCell& cell : cells) {
    if (!cell.ok) continue;
    cell.beat_f_mean = vec_mean(cell.beat_f);
    cell.beat_f_std = sample_std(cell.beat_f, cell.beat_f_mean);
    cell.downbeat_f_mean = vec_mean(cell.downbeat_f);
    cell.downbeat_f_std = sample_std(cell.downbeat_f, cell.downbeat_f_mean);
  }
  return cells;
}

void write_ablation_csv(const std::vector<AblationCell>& cells, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  f << "r,ham,status,beat_f_mean,beat_f_std,downbeat_f_mean,downbeat_f_std,seeds\n";
  char line[256];
  for (const AblationCell& c : cells) {
    if (!c.ok) {
      f << c.r << "," << (c.ham ? "on" : "off") << ",skipped: " << c.skip_reason
        << ",,,,,\n";
      continue;
    }
    std::snprintf(line, sizeof(line), "%lld,%s,ok,%.6f,%.6f,%.6f,%.6f,%zu\n",
                  static_cast<long long>(c.r), c.ham ? "on" : "off", c.beat_f_mean,
                  c.beat_f_std, c.downbeat_f_mean, c.downbeat_f_std, c.beat_f.size());
    f << line;
  }
  if (!f) throw_io("failed writing '" + path + "'");
}

void write_ablation_svg(const std::vector<AblationCell>& cells, const std::string& path) {
  // grouped bars: one group per r, with/without the harmonic-aware module
  std::vector<int64_t> rs;
  for (const AblationCell& c : cells) {
    if (std::find(rs.begin(), rs.end(), c.r) == rs.end()) rs.push_back(c.r);
  }
  std::sort(rs.begin(), rs.end());
  auto find_cell = [&](int64_t r, bool ham) -> const AblationCell* {
    for (const AblationCell& c : cells) {
      if (c.r == r && c.ham == ham && c.ok) return &c;
    }
    return nullptr;
  };

  const double width = 120.0 * static_cast<double>(rs.size()) + 120.0;
  const double height = 320.0;
  const double plot_h = 240.0, base_y = 280.0, plot_x = 70.0;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  f << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">beat F-measure by "
       "projection factor</text>\n";
  for (int grid = 0; grid <= 4; ++grid) {
    const double v = 0.25 * grid;
    const double y = base_y - plot_h * v;
    f << "<line x1=\"" << plot_x << "\" y1=\"" << y << "\" x2=\"" << width - 20 << "\" y2=\""
      << y << "\" stroke=\"#ddd\"/>\n";
    f << "<text x=\"" << plot_x - 8 << "\" y=\"" << y + 4
      << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (size_t gi = 0; gi < rs.size(); ++gi) {
    const double gx = plot_x + 20.0 + 120.0 * static_cast<double>(gi);
    for (int arm = 0; arm < 2; ++arm) {
      const bool ham = arm == 0;
      const AblationCell* c = find_cell(rs[gi], ham);
      if (!c) continue;
      const double bx = gx + (ham ? 0.0 : 42.0);
      const double bh = plot_h * std::clamp(c->beat_f_mean, 0.0, 1.0);
      f << "<rect x=\"" << bx << "\" y=\"" << base_y - bh
        << "\" width=\"36\" height=\"" << bh << "\" fill=\""
        << (ham ? "#4878cf" : "#d65f5f") << "\"/>\n";
      const double ex = bx + 18.0;
      const double e0 = base_y - plot_h * std::clamp(c->beat_f_mean - c->beat_f_std, 0.0, 1.0);
      const double e1 = base_y - plot_h * std::clamp(c->beat_f_mean + c->beat_f_std, 0.0, 1.0);
      f << "<line x1=\"" << ex << "\" y1=\"" << e0 << "\" x2=\"" << ex << "\" y2=\"" << e1
        << "\" stroke=\"#333\"/>\n";
    }
    f << "<text x=\"" << gx + 39 << "\" y=\"" << base_y + 18
      << "\" text-anchor=\"middle\">r=" << rs[gi] << "</text>\n";
  }
  f << "<rect x=\"" << plot_x << "\" y=\"36\" width=\"14\" height=\"14\" fill=\"#4878cf\"/>"
    << "<text x=\"" << plot_x + 20 << "\" y=\"48\">with HAM</text>\n";
  f << "<rect x=\"" << plot_x + 110 << "\" y=\"36\" width=\"14\" height=\"14\" "
       "fill=\"#d65f5f\"/>"
    << "<text x=\"" << plot_x + 130 << "\" y=\"48\">without HAM</text>\n";
  f << "</svg>\n";
  if (!f) throw_io("failed writing '" + path + "'");
}

// --- method comparison ----------------------------------------------------------

std::vector<CompareRow> compare_methods(const CompareConfig& config) {
  if (config.methods.empty()) throw_invalid("compare: methods is empty");
  if (config.seeds.empty()) throw_invalid("compare: seeds is empty");
  config.train.validate();

  std::vector<SeedContext> contexts;
  contexts.reserve(config.seeds.size());
  for (uint64_t seed : config.seeds) {
    contexts.push_back(
        make_seed_context(config.stub, config.data, config.split, seed, config.jobs));
  }

  json kind_config = {{"hinge", to_json(config.hinge)},
                      {"adapter", to_json(config.adapter)},
                      {"lora", to_json(config.lora)}};

  std::vector<CompareRow> rows(config.methods.size());
  std::vector<std::function<void()>> tasks;
  for (size_t mi = 0; mi < config.methods.size(); ++mi) {
    rows[mi].method = config.methods[mi];
    rows[mi].beat_f.assign(config.seeds.size(), 0.0);
    rows[mi].downbeat_f.assign(config.seeds.size(), 0.0);
    for (size_t si = 0; si < config.seeds.size(); ++si) {
      tasks.push_back([&, mi, si] {
        CompareRow& row = rows[mi];
        const SeedContext& ctx = contexts[si];
        TrainConfig tc = config.train;
        tc.seed = mix_seed(config.seeds[si], 0xC0FEull + static_cast<uint64_t>(mi));
        auto model = make_tracker(row.method, ctx.stub, kind_config, tc.seed);
        const RunRecord record = train_model(*model, ctx.dataset, tc, config.dbn,
                                             model->separable() ? &ctx.cache : nullptr);
        row.beat_f[si] = record.test.beat_f;
        row.downbeat_f[si] = record.test.downbeat_f;
        if (si == 0) {
          const ParamCounts counts = model->count_parameters();
          row.trainable = counts.trainable;
          row.frozen = counts.frozen;
          row.fraction = counts.fraction();
        }
      });
    }
  }
  run_tasks(config.jobs, tasks);

  for (CompareRow& row : rows) {
    row.beat_f_mean = vec_mean(row.beat_f);
    row.beat_f_std = sample_std(row.beat_f, row.beat_f_mean);
    row.downbeat_f_mean = vec_mean(row.downbeat_f);
    row.downbeat_f_std = sample_std(row.downbeat_f, row.downbeat_f_mean);
  }
  return rows;
}

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  f << "method,trainable_params,frozen_params,trainable_fraction,beat_f_mean,beat_f_std,"
       "downbeat_f_mean,downbeat_f_std,seeds\n";
  char line[256];
  for (const CompareRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%lld,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n",
                  r.method.c_str(), static_cast<long long>(r.trainable),
                  static_cast<long long>(r.frozen), r.fraction, r.beat_f_mean, r.beat_f_std,
                  r.downbeat_f_mean, r.downbeat_f_std, r.beat_f.size());
    f << line;
  }
  if (!f) throw_io("failed writing '" + path + "'");
}

// --- pipelines --------------------------------------------------------------------

namespace {

struct PipelineConfig {
  std::string method = "hinge";
  StubConfig stub = default_pipeline_stub();
  HingeConfig hinge;
  AdapterConfig adapter;
  LoraConfig lora;
  TrainConfig train;
  DbnConfig dbn;
};

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j, {"method", "stub", "hinge", "adapter", "lora", "train", "dbn"}, "config");
  PipelineConfig c;
  if (j.contains("method")) c.method = j.at("method").get<std::string>();
  if (j.contains("stub")) c.stub = stub_config_from_json(j.at("stub"), c.stub);
  if (j.contains("hinge")) c.hinge = hinge_config_from_json(j.at("hinge"));
  if (j.contains("adapter")) c.adapter = adapter_config_from_json(j.at("adapter"));
  if (j.contains("lora")) c.lora = lora_config_from_json(j.at("lora"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("dbn")) c.dbn = dbn_config_from_json(j.at("dbn"));
  return c;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

json run_training_pipeline(const json& config, const std::string& dataset_dir,
                           const std::string& out_dir) {
  const PipelineConfig cfg = pipeline_config_from_json(config);
  const Dataset dataset = load_dataset(dataset_dir);
  if (dataset.config.feature_dim != cfg.stub.input_channels) {
    throw_invalid("train: dataset feature_dim " + std::to_string(dataset.config.feature_dim) +
                  " does not match stub input_channels " +
                  std::to_string(cfg.stub.input_channels));
  }
  ensure_dir(out_dir);

  auto stub = std::make_shared<FoundationStub>(cfg.stub);
  json kind_config = {{"hinge", to_json(cfg.hinge)},
                      {"adapter", to_json(cfg.adapter)},
                      {"lora", to_json(cfg.lora)}};
  auto model = make_tracker(cfg.method, stub, kind_config, cfg.train.seed);

  const Digest digest_before = stub->parameter_digest();
  const RunRecord record = train_model(*model, dataset, cfg.train, cfg.dbn);
  if (stub->parameter_digest() != digest_before) {
    throw_contract("train: frozen stub parameters changed during training");
  }

  const std::string checkpoint_path = (fs::path(out_dir) / "checkpoint.hgnm").string();
  save_tracker(*model, checkpoint_path);

  // test-split activations for the standalone decode step
  const std::string act_dir = (fs::path(out_dir) / "activations").string();
  ensure_dir(act_dir);
  json activations = json::array();
  {
    NoGradGuard no_grad;
    for (int64_t id : dataset.test_ids) {
      const Example& ex = dataset.items[static_cast<size_t>(id)];
      const ActivationPair acts = model->forward(ex.features, ex.frame_rate);
      const std::string path = (fs::path(act_dir) / (ex.id + ".hgft")).string();
      save_activations(acts, path);
      activations.push_back({{"id", ex.id}, {"path", path}});
    }
  }

  json report;
  report["method"] = cfg.method;
  report["config"] = {{"method", cfg.method},      {"stub", to_json(cfg.stub)},
                      {"hinge", to_json(cfg.hinge)}, {"adapter", to_json(cfg.adapter)},
                      {"lora", to_json(cfg.lora)},  {"train", to_json(cfg.train)},
                      {"dbn", to_json(cfg.dbn)}};
  report["dataset_dir"] = dataset_dir;
  report["checkpoint"] = checkpoint_path;
  report["activations"] = activations;
  report["record"] = run_record_to_json(record);
  report["stub_digest"] = digest_hex(digest_before);
  report["version"] = version_string();
  report["version_hash"] = version_hash();

  std::ofstream f(fs::path(out_dir) / "run.json", std::ios::trunc);
  if (!f) throw_io("cannot write run.json in '" + out_dir + "'");
  f << report.dump(2) << "\n";
  return report;
}

json run_ablation_pipeline(const json& config, const std::string& out_dir) {
  check_keys(config,
             {"r_values", "seeds", "jobs", "stub", "hinge", "train", "data", "split", "dbn"},
             "config");
  AblationConfig cfg;
  if (config.contains("r_values")) {
    cfg.r_values = config.at("r_values").get<std::vector<int64_t>>();
  }
  if (config.contains("seeds")) cfg.seeds = config.at("seeds").get<std::vector<uint64_t>>();
  if (config.contains("jobs")) cfg.jobs = config.at("jobs").get<int64_t>();
  if (config.contains("stub")) cfg.stub = stub_config_from_json(config.at("stub"), cfg.stub);
  if (config.contains("hinge")) cfg.hinge = hinge_config_from_json(config.at("hinge"));
  if (config.contains("train")) cfg.train = train_config_from_json(config.at("train"), cfg.train);
  if (config.contains("data")) cfg.data = synthetic_config_from_json(config.at("data"));
  if (config.contains("split")) cfg.split = split_ratios_from_json(config.at("split"));
  if (config.contains("dbn")) cfg.dbn = dbn_config_from_json(config.at("dbn"));

  ensure_dir(out_dir);
  const auto cells = ablate_projection(cfg);
  const std::string csv = (fs::path(out_dir) / "ablate.csv").string();
  const std::string svg = (fs::path(out_dir) / "ablate.svg").string();
  write_ablation_csv(cells, csv);
  write_ablation_svg(cells, svg);

  json rows = json::array();
  for (const AblationCell& c : cells) {
    json row = {{"r", c.r}, {"ham", c.ham}, {"ok", c.ok}};
    if (c.ok) {
      row["beat_f_mean"] = c.beat_f_mean;
      row["beat_f_std"] = c.beat_f_std;
      row["downbeat_f_mean"] = c.downbeat_f_mean;
      row["downbeat_f_std"] = c.downbeat_f_std;
      row["beat_f"] = c.beat_f;
    } else {
      row["skip_reason"] = c.skip_reason;
    }
    rows.push_back(std::move(row));
  }
  return {{"cells", rows}, {"csv", csv}, {"svg", svg}};
}

json run_compare_pipeline(const json& config, const std::string& out_dir) {
  check_keys(config,
             {"methods", "seeds", "jobs", "stub", "hinge", "adapter", "lora", "train", "data",
              "split", "dbn"},
             "config");
  CompareConfig cfg;
  if (config.contains("methods")) {
    cfg.methods = config.at("methods").get<std::vector<std::string>>();
  }
  if (config.contains("seeds")) cfg.seeds = config.at("seeds").get<std::vector<uint64_t>>();
  if (config.contains("jobs")) cfg.jobs = config.at("jobs").get<int64_t>();
  if (config.contains("stub")) cfg.stub = stub_config_from_json(config.at("stub"), cfg.stub);
  if (config.contains("hinge")) cfg.hinge = hinge_config_from_json(config.at("hinge"));
  if (config.contains("adapter")) {
    cfg.adapter = adapter_config_from_json(config.at("adapter"));
  }
  if (config.contains("lora")) cfg.lora = lora_config_from_json(config.at("lora"));
  if (config.contains("train")) cfg.train = train_config_from_json(config.at("train"), cfg.train);
  if (config.contains("data")) cfg.data = synthetic_config_from_json(config.at("data"));
  if (config.contains("split")) cfg.split = split_ratios_from_json(config.at("split"));
  if (config.contains("dbn")) cfg.dbn = dbn_config_from_json(config.at("dbn"));

  ensure_dir(out_dir);
  const auto rows = compare_methods(cfg);
  const std::string csv = (fs::path(out_dir) / "compare.csv").string();
  write_compare_csv(rows, csv);

  json out_rows = json::array();
  for (const CompareRow& r : rows) {
    out_rows.push_back({{"method", r.method},
                        {"trainable", r.trainable},
                        {"frozen", r.frozen},
                        {"fraction", r.fraction},
                        {"beat_f_mean", r.beat_f_mean},
                        {"beat_f_std", r.beat_f_std},
                        {"downbeat_f_mean", r.downbeat_f_mean},
                        {"downbeat_f_std", r.downbeat_f_std},
                        {"beat_f", r.beat_f}});
  }
  return {{"rows", out_rows}, {"csv", csv}};
}

const char* version_string() { return "0.1.0"; }

std::string version_hash() {
  const std::string tag = std::string("hingenet ") + version_string();
  return digest_hex(sha256(tag.data(), tag.size()));
}

}  // namespace hingenet
