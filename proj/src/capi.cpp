#include "hingenet/hingenet.h"

#include <cstring>
#include <string>

#include "hingenet/config.hpp"
#include "hingenet/train.hpp"

using namespace hingenet;

namespace {

thread_local std::string g_last_error;

hng_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return HNG_ERR_INVALID_ARGUMENT;
    case ErrorCode::io: return HNG_ERR_IO;
    case ErrorCode::format: return HNG_ERR_FORMAT;
    case ErrorCode::numeric: return HNG_ERR_NUMERIC;
    case ErrorCode::contract: return HNG_ERR_CONTRACT;
  }
  return HNG_ERR_UNKNOWN;
}

template <typename F>
hng_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return HNG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HNG_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return HNG_ERR_UNKNOWN;
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const char* require_cstr(const char* s, const char* what) {
  if (!s) throw_invalid(std::string(what) + " must not be NULL");
  return s;
}

nlohmann::json parse_config(const char* config_json, const char* what) {
  if (!config_json || config_json[0] == '\0') return nlohmann::json::object();
  return parse_json_text(config_json, what);
}

}  // namespace

// handles are thin wrappers over the core value types
struct hng_activations {
  ActivationPair acts;
};

struct hng_beats {
  BeatSequence beats;
};

extern "C" {

const char* hng_version(void) { return version_string(); }

const char* hng_last_error(void) { return g_last_error.c_str(); }

void hng_string_free(char* s) { delete[] s; }

hng_status hng_harmonic_intervals(int32_t bins_per_octave, int32_t n_harmonics,
                                  int32_t* out_intervals, int32_t capacity,
                                  int32_t* out_count) {
  return guarded([&] {
    if (!out_count) throw_invalid("out_count must not be NULL");
    const auto intervals = harmonic_intervals({bins_per_octave, n_harmonics});
    *out_count = static_cast<int32_t>(intervals.size());
    if (!out_intervals) return;
    if (capacity < static_cast<int32_t>(intervals.size())) {
      throw_invalid("interval buffer too small: need " + std::to_string(intervals.size()));
    }
    for (size_t i = 0; i < intervals.size(); ++i) {
      out_intervals[i] = static_cast<int32_t>(intervals[i]);
    }
  });
}

hng_status hng_generate_dataset(const char* config_json, const char* out_dir) {
  return guarded([&] {
    require_cstr(out_dir, "out_dir");
    nlohmann::json j = parse_config(config_json, "gen-data config");
    SplitRatios split;
    if (j.contains("split")) {
      split = split_ratios_from_json(j.at("split"));
      j.erase("split");
    }
    const SyntheticConfig cfg = synthetic_config_from_json(j);
    save_dataset(generate_dataset(cfg, split), out_dir);
  });
}

hng_status hng_train(const char* config_json, const char* dataset_dir, const char* out_dir,
                     char** out_report_json) {
  return guarded([&] {
    require_cstr(dataset_dir, "dataset_dir");
    require_cstr(out_dir, "out_dir");
    const nlohmann::json report = run_training_pipeline(
        parse_config(config_json, "train config"), dataset_dir, out_dir);
    if (out_report_json) *out_report_json = copy_string(report.dump(2));
  });
}

hng_status hng_activations_load(const char* path, hng_activations** out) {
  return guarded([&] {
    require_cstr(path, "path");
    if (!out) throw_invalid("out must not be NULL");
    *out = new hng_activations{load_activations(path)};
  });
}

hng_status hng_activations_save(const hng_activations* acts, const char* path) {
  return guarded([&] {
    if (!acts) throw_invalid("activations handle must not be NULL");
    require_cstr(path, "path");
    save_activations(acts->acts, path);
  });
}

hng_status hng_activations_from_model(const char* checkpoint_path, const char* features_path,
                                      hng_activations** out) {
  return guarded([&] {
    require_cstr(checkpoint_path, "checkpoint_path");
    require_cstr(features_path, "features_path");
    if (!out) throw_invalid("out must not be NULL");
    auto model = load_tracker(checkpoint_path);
    LayerFeatureStack stack = load_features(features_path);
    if (stack.layers.size() != 1) {
      throw_invalid("'" + std::string(features_path) + "' must hold a single feature layer");
    }
    NoGradGuard no_grad;
    *out = new hng_activations{
        model->forward(stack.layers[0], stack.frame_rate)};
  });
}

void hng_activations_free(hng_activations* acts) { delete acts; }

hng_status hng_decode(const hng_activations* acts, const char* config_json,
                      const char* method, hng_beats** out) {
  return guarded([&] {
    if (!acts) throw_invalid("activations handle must not be NULL");
    if (!out) throw_invalid("out must not be NULL");
    DbnConfig cfg;
    const nlohmann::json j = parse_config(config_json, "dbn config");
    if (!j.empty()) cfg = dbn_config_from_json(j);
    cfg.frame_rate = acts->acts.frame_rate;
    const std::string mode = method ? method : "dbn";
    std::vector<double> beat_act(acts->acts.beat->data);
    BeatSequence beats;
    if (mode == "dbn") {
      beats = viterbi_decode(beat_act, cfg);
    } else if (mode == "peak") {
      const int64_t min_dist = std::max<int64_t>(1, cfg.tau_min / 2);
      beats = peak_pick(beat_act, cfg.frame_rate, 0.5, min_dist);
    } else {
      throw_invalid("decode method must be 'dbn' or 'peak'");
    }
    if (!beats.times.empty()) {
      beats = assign_downbeats(beats, acts->acts.downbeat->data, cfg.frame_rate);
    }
    *out = new hng_beats{std::move(beats)};
  });
}

hng_status hng_beats_save(const hng_beats* beats, const char* path) {
  return guarded([&] {
    if (!beats) throw_invalid("beats handle must not be NULL");
    require_cstr(path, "path");
    save_beats(beats->beats, path);
  });
}

hng_status hng_beats_load(const char* path, hng_beats** out) {
  return guarded([&] {
    require_cstr(path, "path");
    if (!out) throw_invalid("out must not be NULL");
    *out = new hng_beats{load_beats(path)};
  });
}

hng_status hng_beats_count(const hng_beats* beats, int64_t* out) {
  return guarded([&] {
    if (!beats || !out) throw_invalid("arguments must not be NULL");
    *out = static_cast<int64_t>(beats->beats.times.size());
  });
}

hng_status hng_beats_get(const hng_beats* beats, int64_t index, double* out_time,
                         int32_t* out_position) {
  return guarded([&] {
    if (!beats) throw_invalid("beats handle must not be NULL");
    if (index < 0 || index >= static_cast<int64_t>(beats->beats.times.size())) {
      throw_invalid("beat index out of range");
    }
    if (out_time) *out_time = beats->beats.times[static_cast<size_t>(index)];
    if (out_position) {
      *out_position =
          index < static_cast<int64_t>(beats->beats.positions.size())
              ? static_cast<int32_t>(beats->beats.positions[static_cast<size_t>(index)])
              : 0;
    }
  });
}

void hng_beats_free(hng_beats* beats) { delete beats; }

hng_status hng_evaluate(const char* est_path, const char* ref_path, double tolerance,
                        char** out_report_json) {
  return guarded([&] {
    require_cstr(est_path, "est_path");
    require_cstr(ref_path, "ref_path");
    const BeatSequence est = load_beats(est_path);
    const BeatSequence ref = load_beats(ref_path);
    const eval::MetricReport r =
        eval::score_beats(est, ref, tolerance > 0.0 ? tolerance : 0.07);
    const nlohmann::json out = {
        {"f_measure", r.f.f},        {"precision", r.f.precision},
        {"recall", r.f.recall},      {"matched", r.f.matched},
        {"estimated", r.f.estimated}, {"reference", r.f.reference},
        {"cmlc", r.c.cmlc},          {"cmlt", r.c.cmlt},
        {"amlc", r.c.amlc},          {"amlt", r.c.amlt}};
    if (out_report_json) *out_report_json = copy_string(out.dump(2));
  });
}

hng_status hng_evaluate_corpus(const char* pairs_json, const char* csv_path,
                               char** out_report_json) {
  return guarded([&] {
    require_cstr(pairs_json, "pairs_json");
    const nlohmann::json pj = parse_json_text(pairs_json, "pairs");
    if (!pj.is_array()) throw_invalid("pairs must be a JSON array of [est, ref] pairs");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& p : pj) {
      if (!p.is_array() || p.size() != 2) {
        throw_invalid("each pair must be a two-element array [est, ref]");
      }
      pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }
    const eval::CorpusScore score =
        eval::score_corpus(pairs, csv_path ? csv_path : "");
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : score.items) {
      nlohmann::json ij = {{"item", item.item}, {"ok", item.ok}};
      if (item.ok) {
        ij["f_measure"] = item.report.f.f;
        ij["cmlt"] = item.report.c.cmlt;
        ij["amlt"] = item.report.c.amlt;
      } else {
        ij["error"] = item.error;
      }
      items.push_back(std::move(ij));
    }
    const nlohmann::json out = {{"items", items},
                                {"scored", score.scored},
                                {"excluded", score.excluded},
                                {"mean",
                                 {{"f_measure", score.mean.f.f},
                                  {"precision", score.mean.f.precision},
                                  {"recall", score.mean.f.recall},
                                  {"cmlc", score.mean.c.cmlc},
                                  {"cmlt", score.mean.c.cmlt},
                                  {"amlc", score.mean.c.amlc},
                                  {"amlt", score.mean.c.amlt}}}};
    if (out_report_json) *out_report_json = copy_string(out.dump(2));
  });
}

hng_status hng_ablate(const char* config_json, const char* out_dir, char** out_table_json) {
  return guarded([&] {
    require_cstr(out_dir, "out_dir");
    const nlohmann::json table =
        run_ablation_pipeline(parse_config(config_json, "ablate config"), out_dir);
    if (out_table_json) *out_table_json = copy_string(table.dump(2));
  });
}

hng_status hng_compare(const char* config_json, const char* out_dir, char** out_table_json) {
  return guarded([&] {
    require_cstr(out_dir, "out_dir");
    const nlohmann::json table =
        run_compare_pipeline(parse_config(config_json, "compare config"), out_dir);
    if (out_table_json) *out_table_json = copy_string(table.dump(2));
  });
}

hng_status hng_inspect(const char* checkpoint_path, char** out_json) {
  return guarded([&] {
    require_cstr(checkpoint_path, "checkpoint_path");
    const nlohmann::json meta = inspect_checkpoint(checkpoint_path);
    if (out_json) *out_json = copy_string(meta.dump(2));
  });
}

}  // extern "C"
