#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hingenet {

// Bar-pointer-style HMM over states (tempo tau in frames-per-beat, phase phi
// in [0, tau)). Within a beat the phase advances deterministically; at the
// beat boundary the tempo may change with p(tau'|tau) proportional to
// exp(-lambda * |tau'/tau - 1|). Emission is a_t at phi = 0 and (1 - a_t)
// elsewhere, floored by observation_epsilon.
struct DbnConfig {
  double frame_rate = 50.0;
  int64_t tau_min = 15;
  int64_t tau_max = 60;
  double tempo_change_lambda = 25.0;
  double observation_epsilon = 1e-6;

  void validate() const;
  int64_t state_count() const;  // sum of tau over [tau_min, tau_max]
};

struct BeatSequence {
  std::vector<double> times;       // strictly increasing seconds
  std::vector<int64_t> positions;  // metrical index, 1 = downbeat; empty if unset
};

// Exact maximum a-posteriori decoding of per-frame beat probabilities into
// beat times; ties favor the lowest (tau, phi) state in fixed order.
BeatSequence viterbi_decode(const std::vector<double>& activation, const DbnConfig& config);

// Log-probability of the best path (exposed for the exhaustive-search tests).
double viterbi_best_log_prob(const std::vector<double>& activation, const DbnConfig& config);

// Scores every (meter, offset) candidate by the mean downbeat activation at
// beats offset, offset+meter, ...; ties prefer the smaller meter, then the
// smaller offset. Positions are assigned cyclically from the winner.
BeatSequence assign_downbeats(const BeatSequence& beats,
                              const std::vector<double>& downbeat_activation,
                              double frame_rate,
                              const std::vector<int64_t>& meters = {3, 4});

// Threshold + minimum-separation local maxima; on conflicts the larger peak
// wins, equal heights keep the earlier one.
BeatSequence peak_pick(const std::vector<double>& activation, double frame_rate,
                       double threshold = 0.5, int64_t min_distance_frames = 5);

// Beat text files: one line per beat, "time<TAB>position", 6 decimals.
void save_beats(const BeatSequence& beats, const std::string& path);
BeatSequence load_beats(const std::string& path);

}  // namespace hingenet
