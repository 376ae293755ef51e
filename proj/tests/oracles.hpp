#pragma once

// Test-side oracles, kept independent of the implementation paths they check:
// central finite differences for gradients, recursive maximum bipartite
// matching for beat-to-beat assignment, and exhaustive path search for the
// tempo HMM.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hingenet/postprocess.hpp"
#include "hingenet/rng.hpp"
#include "hingenet/tensor.hpp"

namespace oracles {

struct GradCheckResult {
  double worst_rel = 0.0;
  int64_t checked = 0;
  bool ok(double rel_tol = 1e-4) const { return checked > 0 && worst_rel < rel_tol; }
};

// Compares analytic gradients of `leaves` against central finite differences
// of the scalar produced by `build`. Elements where both sides are below
// abs_floor are compared absolutely.
inline GradCheckResult check_gradients(const std::function<hingenet::TensorPtr()>& build,
                                       const std::vector<hingenet::TensorPtr>& leaves,
                                       double step = 1e-5, double abs_floor = 1e-6) {
  using hingenet::TensorPtr;
  for (const TensorPtr& leaf : leaves) {
    leaf->requires_grad = true;
    leaf->zero_grad();
  }
  TensorPtr loss = build();
  hingenet::backward(loss);

  GradCheckResult result;
  for (const TensorPtr& leaf : leaves) {
    std::vector<double> analytic =
        leaf->grad.empty() ? std::vector<double>(leaf->data.size(), 0.0) : leaf->grad;
    for (size_t i = 0; i < leaf->data.size(); ++i) {
      const double saved = leaf->data[i];
      leaf->data[i] = saved + step;
      const double hi = build()->data[0];
      leaf->data[i] = saved - step;
      const double lo = build()->data[0];
      leaf->data[i] = saved;
      const double fd = (hi - lo) / (2.0 * step);
      const double g = analytic[i];
      ++result.checked;
      if (std::abs(fd) < abs_floor && std::abs(g) < abs_floor) continue;
      const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), abs_floor});
      result.worst_rel = std::max(result.worst_rel, rel);
    }
  }
  return result;
}

// Maximum one-to-one matching between est and ref under |est - ref| <= tol,
// by exhaustive recursion (fine for |est|, |ref| <= 8).
inline int64_t brute_force_matching(const std::vector<double>& est,
                                    const std::vector<double>& ref, double tol) {
  std::vector<bool> used(ref.size(), false);
  std::function<int64_t(size_t)> go = [&](size_t i) -> int64_t {
    if (i == est.size()) return 0;
    int64_t best = go(i + 1);  // leave est[i] unmatched
    for (size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || std::abs(est[i] - ref[j]) > tol) continue;
      used[j] = true;
      best = std::max(best, 1 + go(i + 1));
      used[j] = false;
    }
    return best;
  };
  return go(0);
}

// Exhaustive search over every state path of the bar-pointer HMM, mirroring
// the model definition (uniform start, deterministic phase advance, tempo
// transition at the beat boundary, floored emissions).
inline double exhaustive_best_log_prob(const std::vector<double>& activation,
                                       const hingenet::DbnConfig& cfg) {
  struct State {
    int64_t tau, phi;
  };
  std::vector<State> states;
  for (int64_t tau = cfg.tau_min; tau <= cfg.tau_max; ++tau) {
    for (int64_t phi = 0; phi < tau; ++phi) states.push_back({tau, phi});
  }
  const int64_t n_tempi = cfg.tau_max - cfg.tau_min + 1;
  std::vector<std::vector<double>> tempo_log(static_cast<size_t>(n_tempi),
                                             std::vector<double>(static_cast<size_t>(n_tempi)));
  for (int64_t i = 0; i < n_tempi; ++i) {
    const double tau = static_cast<double>(cfg.tau_min + i);
    double z = 0.0;
    for (int64_t j = 0; j < n_tempi; ++j) {
      z += std::exp(-cfg.tempo_change_lambda *
                    std::abs(static_cast<double>(cfg.tau_min + j) / tau - 1.0));
    }
    for (int64_t j = 0; j < n_tempi; ++j) {
      tempo_log[i][j] = -cfg.tempo_change_lambda *
                            std::abs(static_cast<double>(cfg.tau_min + j) / tau - 1.0) -
                        std::log(z);
    }
  }
  auto emission = [&](size_t frame, int64_t phi) {
    const double a = activation[frame];
    return std::log(std::max(phi == 0 ? a : 1.0 - a, cfg.observation_epsilon));
  };

  double best = -std::numeric_limits<double>::infinity();
  std::function<void(size_t, State, double)> go = [&](size_t frame, State s, double logp) {
    if (frame + 1 == activation.size()) {
      best = std::max(best, logp);
      return;
    }
    if (s.phi + 1 < s.tau) {
      go(frame + 1, {s.tau, s.phi + 1}, logp + emission(frame + 1, s.phi + 1));
    } else {
      for (int64_t tau2 = cfg.tau_min; tau2 <= cfg.tau_max; ++tau2) {
        go(frame + 1, {tau2, 0},
           logp + tempo_log[s.tau - cfg.tau_min][tau2 - cfg.tau_min] + emission(frame + 1, 0));
      }
    }
  };
  const double log_init = -std::log(static_cast<double>(states.size()));
  for (const State& s : states) {
    go(0, s, log_init + emission(0, s.phi));
  }
  return best;
}

inline std::vector<double> random_values(hingenet::SplitMix64& rng, size_t n, double lo = -2.0,
                                         double hi = 2.0) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.next_uniform(lo, hi);
  return out;
}

}  // namespace oracles
