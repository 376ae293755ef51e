#include "hingenet/config.hpp"

#include <sstream>

namespace hingenet {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw_invalid(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      std::ostringstream msg;
      msg << where << ": unknown key '" << key << "'; valid keys:";
      for (const char* a : allowed) msg << " " << a;
      throw_invalid(msg.str());
    }
  }
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw_invalid(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const StubConfig& c) {
  return {{"n_layers", c.n_layers},     {"hidden", c.hidden},
          {"input_channels", c.input_channels}, {"n_heads", c.n_heads},
          {"mlp_hidden", c.mlp_hidden}, {"seed", c.seed}};
}

StubConfig stub_config_from_json(const json& j, StubConfig base) {
  check_keys(j, {"n_layers", "hidden", "input_channels", "n_heads", "mlp_hidden", "seed"},
             "stub");
  StubConfig c = base;
  c.n_layers = get_or<int64_t>(j, "n_layers", c.n_layers);
  c.hidden = get_or<int64_t>(j, "hidden", c.hidden);
  c.input_channels = get_or<int64_t>(j, "input_channels", c.input_channels);
  c.n_heads = get_or<int64_t>(j, "n_heads", c.n_heads);
  c.mlp_hidden = get_or<int64_t>(j, "mlp_hidden", c.mlp_hidden);
  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.validate();
  return c;
}

json to_json(const HingeConfig& c) {
  return {{"projection_factor", c.projection_factor},
          {"n_branches", c.n_branches},
          {"kernel_size", c.kernel_size},
          {"conv_axis", c.conv_axis == Axis::channel ? "channel" : "time"},
          {"bins_per_octave", c.bins_per_octave},
          {"n_harmonics", c.n_harmonics},
          {"ham_enabled", c.ham_enabled}};
}

HingeConfig hinge_config_from_json(const json& j) {
  check_keys(j,
             {"projection_factor", "n_branches", "kernel_size", "conv_axis",
              "bins_per_octave", "n_harmonics", "ham_enabled"},
             "hinge");
  HingeConfig c;
  c.projection_factor = get_or<int64_t>(j, "projection_factor", c.projection_factor);
  c.n_branches = get_or<int64_t>(j, "n_branches", c.n_branches);
  c.kernel_size = get_or<int64_t>(j, "kernel_size", c.kernel_size);
  const std::string axis = get_or<std::string>(j, "conv_axis", "channel");
  if (axis == "channel") {
    c.conv_axis = Axis::channel;
  } else if (axis == "time") {
    c.conv_axis = Axis::time;
  } else {
    throw_invalid("hinge: conv_axis must be 'channel' or 'time'");
  }
  c.bins_per_octave = get_or<int64_t>(j, "bins_per_octave", c.bins_per_octave);
  c.n_harmonics = get_or<int64_t>(j, "n_harmonics", c.n_harmonics);
  c.ham_enabled = get_or<bool>(j, "ham_enabled", c.ham_enabled);
  return c;
}

json to_json(const AdapterConfig& c) { return {{"bottleneck", c.bottleneck}}; }

AdapterConfig adapter_config_from_json(const json& j) {
  check_keys(j, {"bottleneck"}, "adapter");
  AdapterConfig c;
  c.bottleneck = get_or<int64_t>(j, "bottleneck", c.bottleneck);
  c.validate();
  return c;
}

json to_json(const LoraConfig& c) { return {{"rank", c.rank}, {"alpha", c.alpha}}; }

LoraConfig lora_config_from_json(const json& j) {
  check_keys(j, {"rank", "alpha"}, "lora");
  LoraConfig c;
  c.rank = get_or<int64_t>(j, "rank", c.rank);
  c.alpha = get_or<double>(j, "alpha", c.alpha);
  return c;
}

json to_json(const DbnConfig& c) {
  return {{"frame_rate", c.frame_rate},
          {"tau_min", c.tau_min},
          {"tau_max", c.tau_max},
          {"tempo_change_lambda", c.tempo_change_lambda},
          {"observation_epsilon", c.observation_epsilon}};
}

DbnConfig dbn_config_from_json(const json& j) {
  check_keys(j, {"frame_rate", "tau_min", "tau_max", "tempo_change_lambda",
                 "observation_epsilon"},
             "dbn");
  DbnConfig c;
  c.frame_rate = get_or<double>(j, "frame_rate", c.frame_rate);
  c.tau_min = get_or<int64_t>(j, "tau_min", c.tau_min);
  c.tau_max = get_or<int64_t>(j, "tau_max", c.tau_max);
  c.tempo_change_lambda = get_or<double>(j, "tempo_change_lambda", c.tempo_change_lambda);
  c.observation_epsilon = get_or<double>(j, "observation_epsilon", c.observation_epsilon);
  c.validate();
  return c;
}

json to_json(const SyntheticConfig& c) {
  return {{"n_items", c.n_items},
          {"duration_s", c.duration_s},
          {"frame_rate", c.frame_rate},
          {"feature_dim", c.feature_dim},
          {"tempo_min_bpm", c.tempo_min_bpm},
          {"tempo_max_bpm", c.tempo_max_bpm},
          {"meters", c.meters},
          {"tempo_jitter", c.tempo_jitter},
          {"noise_sigma", c.noise_sigma},
          {"harmonic_amplitudes", c.harmonic_amplitudes},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  check_keys(j,
             {"n_items", "duration_s", "frame_rate", "feature_dim", "tempo_min_bpm",
              "tempo_max_bpm", "meters", "tempo_jitter", "noise_sigma",
              "harmonic_amplitudes", "seed"},
             "data");
  SyntheticConfig c;
  c.n_items = get_or<int64_t>(j, "n_items", c.n_items);
  c.duration_s = get_or<double>(j, "duration_s", c.duration_s);
  c.frame_rate = get_or<double>(j, "frame_rate", c.frame_rate);
  c.feature_dim = get_or<int64_t>(j, "feature_dim", c.feature_dim);
  c.tempo_min_bpm = get_or<double>(j, "tempo_min_bpm", c.tempo_min_bpm);
  c.tempo_max_bpm = get_or<double>(j, "tempo_max_bpm", c.tempo_max_bpm);
  c.meters = get_or<std::vector<int64_t>>(j, "meters", c.meters);
  c.tempo_jitter = get_or<double>(j, "tempo_jitter", c.tempo_jitter);
  c.noise_sigma = get_or<double>(j, "noise_sigma", c.noise_sigma);
  c.harmonic_amplitudes =
      get_or<std::vector<double>>(j, "harmonic_amplitudes", c.harmonic_amplitudes);
  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.validate();
  return c;
}

json to_json(const SplitRatios& c) {
  return {{"train", c.train}, {"val", c.val}, {"test", c.test}};
}

SplitRatios split_ratios_from_json(const json& j) {
  check_keys(j, {"train", "val", "test"}, "split");
  SplitRatios c;
  c.train = get_or<double>(j, "train", c.train);
  c.val = get_or<double>(j, "val", c.val);
  c.test = get_or<double>(j, "test", c.test);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"augmentation", c.augmentation},
          {"label_mode", c.label_mode == LabelMode::soft_target ? "soft_target" : "loss_weight"},
          {"stretch_min", c.stretch_min},
          {"stretch_max", c.stretch_max}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  check_keys(j,
             {"lr", "batch_size", "patience", "max_epochs", "seed", "augmentation",
              "label_mode", "stretch_min", "stretch_max"},
             "train");
  TrainConfig c = base;
  c.lr = get_or<double>(j, "lr", c.lr);
  c.batch_size = get_or<int64_t>(j, "batch_size", c.batch_size);
  c.patience = get_or<int64_t>(j, "patience", c.patience);
  c.max_epochs = get_or<int64_t>(j, "max_epochs", c.max_epochs);
  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.augmentation = get_or<bool>(j, "augmentation", c.augmentation);
  const std::string mode = get_or<std::string>(
      j, "label_mode", base.label_mode == LabelMode::soft_target ? "soft_target" : "loss_weight");
  if (mode == "soft_target") {
    c.label_mode = LabelMode::soft_target;
  } else if (mode == "loss_weight") {
    c.label_mode = LabelMode::loss_weight;
  } else {
    throw_invalid("train: label_mode must be 'soft_target' or 'loss_weight'");
  }
  c.stretch_min = get_or<double>(j, "stretch_min", c.stretch_min);
  c.stretch_max = get_or<double>(j, "stretch_max", c.stretch_max);
  c.validate();
  return c;
}

json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw_invalid(where + ": invalid JSON: " + e.what());
  }
}

}  // namespace hingenet
