// Command-line front end. All functionality lives behind the C API of the
// shared library; this file only parses flags, merges JSON configs and
// formats output.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hingenet/hingenet.h"

namespace {

using nlohmann::json;

struct CliError {
  int exit_code;
  std::string message;
};

int exit_code_of(hng_status status) {
  switch (status) {
    case HNG_OK: return 0;
    case HNG_ERR_INVALID_ARGUMENT:
    case HNG_ERR_CONTRACT: return 2;
    case HNG_ERR_IO:
    case HNG_ERR_FORMAT: return 3;
    case HNG_ERR_NUMERIC: return 4;
    default: return 1;
  }
}

const char* category_of(hng_status status) {
  switch (status) {
    case HNG_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case HNG_ERR_CONTRACT: return "contract";
    case HNG_ERR_IO: return "io";
    case HNG_ERR_FORMAT: return "format";
    case HNG_ERR_NUMERIC: return "numeric";
    default: return "error";
  }
}

void check(hng_status status) {
  if (status == HNG_OK) return;
  throw CliError{exit_code_of(status),
                 std::string(category_of(status)) + ": " + hng_last_error()};
}

// config file + repeated key=value overrides -> one JSON document
json merge_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  json cfg = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw CliError{3, "io: cannot open config file '" + config_path + "'"};
    try {
      f >> cfg;
    } catch (const json::exception& e) {
      throw CliError{3, "format: config file '" + config_path + "': " + e.what()};
    }
    if (!cfg.is_object()) throw CliError{3, "format: config root must be a JSON object"};
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CliError{2, "invalid-argument: override '" + kv + "' is not key=value"};
    }
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // bare strings stay strings
    }
    json* node = &cfg;
    std::istringstream keys(path);
    std::string key, next_key;
    std::getline(keys, key, '.');
    while (std::getline(keys, next_key, '.')) {
      if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
      node = &(*node)[key];
      key = next_key;
    }
    (*node)[key] = value;
  }
  return cfg;
}

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { hng_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beat and downbeat tracking with harmonic-aware fine-tuning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hng_version());

  std::string config_path, out_path, dataset_dir, method;
  std::vector<std::string> overrides;

  // intervals
  auto* cmd_intervals = app.add_subcommand("intervals", "print harmonic dilation intervals");
  int32_t q = 12, n_harmonics = 5;
  cmd_intervals->add_option("--Q", q, "bins per octave")->capture_default_str();
  cmd_intervals->add_option("--n", n_harmonics, "harmonic series size")->capture_default_str();

  // gen-data
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  cmd_gen->add_option("--out,-o", out_path, "output directory")->required();
  cmd_gen->add_option("--config,-c", config_path, "JSON config file");
  cmd_gen->add_option("--set", overrides, "override config keys (dotted.path=value)");
  int64_t seed_flag = -1;
  cmd_gen->add_option("--seed", seed_flag, "shorthand for --set seed=N");

  // train
  auto* cmd_train = app.add_subcommand("train", "train a tracker on a dataset directory");
  cmd_train->add_option("--dataset,-d", dataset_dir, "dataset directory")->required();
  cmd_train->add_option("--out,-o", out_path, "output directory")->required();
  cmd_train->add_option("--config,-c", config_path, "JSON config file");
  cmd_train->add_option("--set", overrides, "override config keys (dotted.path=value)");
  cmd_train->add_option("--method,-m", method,
                        "hinge | adapter | lora | linear_probe (shorthand)");

  // decode
  auto* cmd_decode = app.add_subcommand("decode", "decode activations into beat times");
  std::string activations_path, checkpoint_path, features_path, decode_method = "dbn";
  cmd_decode->add_option("--activations,-a", activations_path, "activation file (.hgft)");
  cmd_decode->add_option("--checkpoint", checkpoint_path,
                         "checkpoint for on-the-fly inference (with --features)");
  cmd_decode->add_option("--features", features_path, "single-layer feature file");
  cmd_decode->add_option("--out,-o", out_path, "output beat file")->required();
  cmd_decode->add_option("--config,-c", config_path, "decoder JSON config file");
  cmd_decode->add_option("--set", overrides, "override config keys");
  cmd_decode->add_option("--method,-m", decode_method, "dbn | peak")->capture_default_str();

  // evaluate
  auto* cmd_eval = app.add_subcommand("evaluate", "score estimated beats against a reference");
  std::string est_path, ref_path, pairs_path, csv_path;
  double tolerance = 0.07;
  cmd_eval->add_option("--est", est_path, "estimated beat file");
  cmd_eval->add_option("--ref", ref_path, "reference annotation file");
  cmd_eval->add_option("--pairs", pairs_path, "JSON file with [[est, ref], ...] pairs");
  cmd_eval->add_option("--csv", csv_path, "per-item CSV report (corpus mode)");
  cmd_eval->add_option("--tolerance", tolerance, "matching window in seconds")
      ->capture_default_str();

  // ablate
  auto* cmd_ablate = app.add_subcommand("ablate", "projection-factor x HAM factorial study");
  cmd_ablate->add_option("--out,-o", out_path, "output directory")->required();
  cmd_ablate->add_option("--config,-c", config_path, "JSON config file");
  cmd_ablate->add_option("--set", overrides, "override config keys");
  int64_t jobs_flag = 0;
  cmd_ablate->add_option("--jobs,-j", jobs_flag, "parallel workers");

  // compare
  auto* cmd_compare = app.add_subcommand("compare", "fine-tuning method comparison");
  cmd_compare->add_option("--out,-o", out_path, "output directory")->required();
  cmd_compare->add_option("--config,-c", config_path, "JSON config file");
  cmd_compare->add_option("--set", overrides, "override config keys");
  cmd_compare->add_option("--jobs,-j", jobs_flag, "parallel workers");

  // inspect
  auto* cmd_inspect = app.add_subcommand("inspect", "print checkpoint metadata as JSON");
  cmd_inspect->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (cmd_intervals->parsed()) {
      int32_t out[64];
      int32_t count = 0;
      check(hng_harmonic_intervals(q, n_harmonics, out, 64, &count));
      for (int32_t i = 0; i < count; ++i) {
        std::cout << out[i] << (i + 1 < count ? " " : "");
      }
      std::cout << "\n";
      return 0;
    }

    if (cmd_gen->parsed()) {
      json cfg = merge_config(config_path, overrides);
      if (seed_flag >= 0) cfg["seed"] = seed_flag;
      check(hng_generate_dataset(cfg.dump().c_str(), out_path.c_str()));
      std::cout << "dataset written to " << out_path << "\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      json cfg = merge_config(config_path, overrides);
      if (!method.empty()) cfg["method"] = method;
      OwnedString report;
      check(hng_train(cfg.dump().c_str(), dataset_dir.c_str(), out_path.c_str(),
                      &report.ptr));
      const json r = json::parse(report.str());
      std::cout << "method: " << r.at("method").get<std::string>() << "\n"
                << "trainable parameters: " << r["record"]["counts"]["trainable"] << " ("
                << r["record"]["counts"]["fraction"] << " of total)\n"
                << "best epoch: " << r["record"]["best_epoch"] << " (val loss "
                << r["record"]["best_val_loss"] << ")\n"
                << "test beat F: " << r["record"]["test"]["beat_f"]
                << ", downbeat F: " << r["record"]["test"]["downbeat_f"] << "\n"
                << "artifacts in " << out_path << "\n";
      return 0;
    }

    if (cmd_decode->parsed()) {
      hng_activations* acts = nullptr;
      if (!activations_path.empty()) {
        check(hng_activations_load(activations_path.c_str(), &acts));
      } else if (!checkpoint_path.empty() && !features_path.empty()) {
        check(hng_activations_from_model(checkpoint_path.c_str(), features_path.c_str(),
                                         &acts));
      } else {
        throw CliError{2,
                       "invalid-argument: pass --activations or --checkpoint + --features"};
      }
      const json cfg = merge_config(config_path, overrides);
      hng_beats* beats = nullptr;
      const hng_status st =
          hng_decode(acts, cfg.dump().c_str(), decode_method.c_str(), &beats);
      hng_activations_free(acts);
      check(st);
      const hng_status st_save = hng_beats_save(beats, out_path.c_str());
      int64_t count = 0;
      hng_beats_count(beats, &count);
      hng_beats_free(beats);
      check(st_save);
      std::cout << count << " beats written to " << out_path << "\n";
      return 0;
    }

    if (cmd_eval->parsed()) {
      OwnedString report;
      if (!pairs_path.empty()) {
        std::ifstream f(pairs_path);
        if (!f) throw CliError{3, "io: cannot open pairs file '" + pairs_path + "'"};
        std::stringstream buf;
        buf << f.rdbuf();
        check(hng_evaluate_corpus(buf.str().c_str(),
                                  csv_path.empty() ? nullptr : csv_path.c_str(),
                                  &report.ptr));
      } else if (!est_path.empty() && !ref_path.empty()) {
        check(hng_evaluate(est_path.c_str(), ref_path.c_str(), tolerance, &report.ptr));
      } else {
        throw CliError{2, "invalid-argument: pass --est + --ref or --pairs"};
      }
      std::cout << report.str() << "\n";
      return 0;
    }

    if (cmd_ablate->parsed() || cmd_compare->parsed()) {
      json cfg = merge_config(config_path, overrides);
      if (jobs_flag > 0) cfg["jobs"] = jobs_flag;
      OwnedString table;
      if (cmd_ablate->parsed()) {
        check(hng_ablate(cfg.dump().c_str(), out_path.c_str(), &table.ptr));
      } else {
        check(hng_compare(cfg.dump().c_str(), out_path.c_str(), &table.ptr));
      }
      std::cout << table.str() << "\n";
      return 0;
    }

    if (cmd_inspect->parsed()) {
      OwnedString meta;
      check(hng_inspect(checkpoint_path.c_str(), &meta.ptr));
      std::cout << meta.str() << "\n";
      return 0;
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
