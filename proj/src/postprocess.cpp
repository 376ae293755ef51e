#include "hingenet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "hingenet/error.hpp"

namespace hingenet {

void DbnConfig::validate() const {
  if (!(frame_rate > 0.0)) throw_invalid("dbn: frame rate must be positive");
  if (tau_min < 1 || tau_min >= tau_max) throw_invalid("dbn: need 1 <= tau_min < tau_max");
  if (!(tempo_change_lambda >= 0.0)) throw_invalid("dbn: lambda must be >= 0");
  if (!(observation_epsilon > 0.0 && observation_epsilon < 1.0)) {
    throw_invalid("dbn: observation epsilon must be in (0, 1)");
  }
  if (state_count() > 65535) throw_invalid("dbn: tempo range too large");
}

int64_t DbnConfig::state_count() const {
  return (tau_min + tau_max) * (tau_max - tau_min + 1) / 2;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct StateSpace {
  int64_t tau_min, tau_max;
  int64_t n_states;
  std::vector<int64_t> tau_base;  // state index of (tau, phi=0) per tau

  explicit StateSpace(const DbnConfig& cfg) : tau_min(cfg.tau_min), tau_max(cfg.tau_max) {
    int64_t idx = 0;
    for (int64_t tau = tau_min; tau <= tau_max; ++tau) {
      tau_base.push_back(idx);
      idx += tau;
    }
    n_states = idx;
  }

  int64_t n_tempi() const { return tau_max - tau_min + 1; }
  int64_t index(int64_t tau, int64_t phi) const { return tau_base[tau - tau_min] + phi; }
};

// log p(tau'|tau), normalized over the tempo range
std::vector<std::vector<double>> tempo_transition_log(const StateSpace& ss, double lambda) {
  const int64_t n = ss.n_tempi();
  std::vector<std::vector<double>> out(static_cast<size_t>(n),
                                       std::vector<double>(static_cast<size_t>(n)));
  for (int64_t i = 0; i < n; ++i) {
    const double tau = static_cast<double>(ss.tau_min + i);
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double tau2 = static_cast<double>(ss.tau_min + j);
      z += std::exp(-lambda * std::abs(tau2 / tau - 1.0));
    }
    const double log_z = std::log(z);
    for (int64_t j = 0; j < n; ++j) {
      const double tau2 = static_cast<double>(ss.tau_min + j);
      out[i][j] = -lambda * std::abs(tau2 / tau - 1.0) - log_z;
    }
  }
  return out;
}

void check_activation(const std::vector<double>& activation) {
  if (activation.empty()) throw_invalid("viterbi: empty activation");
  if (activation.size() < 2) throw_invalid("viterbi: need at least 2 frames");
  for (double a : activation) {
    if (!(a > 0.0 && a < 1.0)) {
      throw_invalid("viterbi: activation values must lie strictly in (0, 1)");
    }
  }
}

struct ViterbiResult {
  double best_log_prob;
  std::vector<int64_t> beat_frames;
};

ViterbiResult viterbi_run(const std::vector<double>& activation, const DbnConfig& cfg) {
  cfg.validate();
  check_activation(activation);
  const StateSpace ss(cfg);
  const auto tempo_log = tempo_transition_log(ss, cfg.tempo_change_lambda);
  const int64_t n_frames = static_cast<int64_t>(activation.size());
  const int64_t n_states = ss.n_states;

  std::vector<double> cur(static_cast<size_t>(n_states));
  std::vector<double> nxt(static_cast<size_t>(n_states));
  std::vector<uint16_t> back(static_cast<size_t>(n_frames * n_states));

  auto emission = [&](int64_t frame, int64_t phi) {
    const double a = activation[static_cast<size_t>(frame)];
    const double p = std::max(phi == 0 ? a : 1.0 - a, cfg.observation_epsilon);
    return std::log(p);
  };

  // uniform start
  const double log_init = -std::log(static_cast<double>(n_states));
  for (int64_t tau = ss.tau_min; tau <= ss.tau_max; ++tau) {
    for (int64_t phi = 0; phi < tau; ++phi) {
      const int64_t s = ss.index(tau, phi);
      cur[s] = log_init + emission(0, phi);
      back[s] = static_cast<uint16_t>(s);
    }
  }

  for (int64_t frame = 1; frame < n_frames; ++frame) {
    // boundary states phi = tau - 1 feed the tempo transition into phi' = 0
    for (int64_t tau2 = ss.tau_min; tau2 <= ss.tau_max; ++tau2) {
      double best = kNegInf;
      int64_t best_state = 0;
      for (int64_t tau = ss.tau_min; tau <= ss.tau_max; ++tau) {
        const int64_t s = ss.index(tau, tau - 1);
        const double cand = cur[s] + tempo_log[tau - ss.tau_min][tau2 - ss.tau_min];
        if (cand > best) {
          best = cand;
          best_state = s;
        }
      }
      const int64_t dst = ss.index(tau2, 0);
      nxt[dst] = best + emission(frame, 0);
      back[frame * n_states + dst] = static_cast<uint16_t>(best_state);
    }
    // interior states advance deterministically
    for (int64_t tau = ss.tau_min; tau <= ss.tau_max; ++tau) {
      for (int64_t phi = 1; phi < tau; ++phi) {
        const int64_t src = ss.index(tau, phi - 1);
        const int64_t dst = ss.index(tau, phi);
        nxt[dst] = cur[src] + emission(frame, phi);
        back[frame * n_states + dst] = static_cast<uint16_t>(src);
      }
    }
    cur.swap(nxt);
  }

  int64_t best_state = 0;
  double best = cur[0];
  for (int64_t s = 1; s < n_states; ++s) {
    if (cur[s] > best) {
      best = cur[s];
      best_state = s;
    }
  }

  std::vector<int64_t> path(static_cast<size_t>(n_frames));
  int64_t state = best_state;
  for (int64_t frame = n_frames - 1; frame >= 0; --frame) {
    path[static_cast<size_t>(frame)] = state;
    state = back[frame * n_states + state];
  }

  ViterbiResult result;
  result.best_log_prob = best;
  for (int64_t frame = 0; frame < n_frames; ++frame) {
    const int64_t s = path[static_cast<size_t>(frame)];
    // phase 0 states are exactly the tau_base anchors
    auto it = std::lower_bound(ss.tau_base.begin(), ss.tau_base.end(), s);
    if (it != ss.tau_base.end() && *it == s) result.beat_frames.push_back(frame);
  }
  return result;
}

}  // namespace

BeatSequence viterbi_decode(const std::vector<double>& activation, const DbnConfig& config) {
  const ViterbiResult res = viterbi_run(activation, config);
  BeatSequence beats;
  beats.times.reserve(res.beat_frames.size());
  for (int64_t frame : res.beat_frames) {
    beats.times.push_back(static_cast<double>(frame) / config.frame_rate);
  }
  return beats;
}

double viterbi_best_log_prob(const std::vector<double>& activation, const DbnConfig& config) {
  return viterbi_run(activation, config).best_log_prob;
}

BeatSequence assign_downbeats(const BeatSequence& beats,
                              const std::vector<double>& downbeat_activation,
                              double frame_rate, const std::vector<int64_t>& meters) {
  if (beats.times.empty()) throw_invalid("assign_downbeats: no beats");
  if (meters.empty()) throw_invalid("assign_downbeats: no meters");
  const int64_t n = static_cast<int64_t>(beats.times.size());
  const int64_t n_frames = static_cast<int64_t>(downbeat_activation.size());

  auto beat_activation = [&](int64_t i) {
    if (n_frames == 0) return 0.0;
    int64_t frame = std::llround(beats.times[static_cast<size_t>(i)] * frame_rate);
    frame = std::clamp<int64_t>(frame, 0, n_frames - 1);
    return downbeat_activation[static_cast<size_t>(frame)];
  };

  int64_t best_meter = 0, best_offset = 0;
  double best_score = -1.0;
  for (int64_t meter : meters) {
    if (meter < 1) throw_invalid("assign_downbeats: meter must be >= 1");
    for (int64_t offset = 0; offset < meter; ++offset) {
      double sum = 0.0;
      int64_t count = 0;
      for (int64_t i = offset; i < n; i += meter) {
        sum += beat_activation(i);
        ++count;
      }
      const double score = count > 0 ? sum / static_cast<double>(count) : 0.0;
      // strict > keeps the first candidate on ties; meters are iterated in
      // the given order and offsets ascending
      if (score > best_score) {
        best_score = score;
        best_meter = meter;
        best_offset = offset;
      }
    }
  }

  BeatSequence out = beats;
  out.positions.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t rel = ((i - best_offset) % best_meter + best_meter) % best_meter;
    out.positions[static_cast<size_t>(i)] = rel + 1;
  }
  return out;
}

BeatSequence peak_pick(const std::vector<double>& activation, double frame_rate,
                       double threshold, int64_t min_distance_frames) {
  if (!(frame_rate > 0.0)) throw_invalid("peak_pick: frame rate must be positive");
  if (min_distance_frames < 1) throw_invalid("peak_pick: min distance must be >= 1");
  const int64_t n = static_cast<int64_t>(activation.size());
  std::vector<int64_t> candidates;
  for (int64_t i = 0; i < n; ++i) {
    const double v = activation[static_cast<size_t>(i)];
    if (v < threshold) continue;
    const double left = i > 0 ? activation[static_cast<size_t>(i - 1)] : -1.0;
    const double right = i + 1 < n ? activation[static_cast<size_t>(i + 1)] : -1.0;
    // plateaus keep their first frame
    if (v > left && v >= right) candidates.push_back(i);
  }
  // larger peaks first, earlier frame wins ties
  std::stable_sort(candidates.begin(), candidates.end(), [&](int64_t a, int64_t b) {
    const double va = activation[static_cast<size_t>(a)];
    const double vb = activation[static_cast<size_t>(b)];
    if (va != vb) return va > vb;
    return a < b;
  });
  std::vector<int64_t> kept;
  for (int64_t c : candidates) {
    bool ok = true;
    for (int64_t k : kept) {
      if (std::abs(k - c) < min_distance_frames) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  BeatSequence out;
  for (int64_t frame : kept) {
    out.times.push_back(static_cast<double>(frame) / frame_rate);
  }
  return out;
}

void save_beats(const BeatSequence& beats, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_io("cannot open '" + path + "' for writing");
  char line[64];
  for (size_t i = 0; i < beats.times.size(); ++i) {
    const int64_t pos = i < beats.positions.size() ? beats.positions[i] : 0;
    std::snprintf(line, sizeof(line), "%.6f\t%lld\n", beats.times[i],
                  static_cast<long long>(pos));
    f << line;
  }
  if (!f) throw_io("failed writing '" + path + "'");
}

BeatSequence load_beats(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_io("cannot open '" + path + "'");
  BeatSequence out;
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
    if (!out.times.empty() && time <= out.times.back()) {
      throw_format("'" + path + "' line " + std::to_string(line_no) +
                   ": times must be strictly increasing");
    }
    out.times.push_back(time);
    out.positions.push_back(pos);
  }
  return out;
}

}  // namespace hingenet
