#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hingenet/postprocess.hpp"
#include "hingenet/rng.hpp"
#include "oracles.hpp"

using namespace hingenet;

namespace {

std::vector<double> impulse_train(int64_t n_frames, int64_t period, double hi = 0.95,
                                  double lo = 0.05) {
  std::vector<double> act(static_cast<size_t>(n_frames), lo);
  for (int64_t i = 0; i < n_frames; i += period) act[static_cast<size_t>(i)] = hi;
  return act;
}

}  // namespace

TEST_CASE("clean impulse train decodes to the impulse grid within one frame") {
  DbnConfig cfg;  // 50 fps, tau in [15, 60]
  const std::vector<double> act = impulse_train(500, 20);  // 10 s at 0.4 s spacing
  const BeatSequence beats = viterbi_decode(act, cfg);
  REQUIRE(beats.times.size() >= 23);
  for (double t : beats.times) {
    const double frame = t * cfg.frame_rate;
    const double nearest = std::round(frame / 20.0) * 20.0;
    CHECK(std::abs(frame - nearest) <= 1.0);
  }
}

TEST_CASE("viterbi equals exhaustive path enumeration on 200 random instances") {
  DbnConfig cfg;
  cfg.tau_min = 2;
  cfg.tau_max = 4;
  cfg.frame_rate = 50.0;
  SplitMix64 rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t n_frames = 2 + rng.next_below(9);  // 2..10
    std::vector<double> act(static_cast<size_t>(n_frames));
    for (double& a : act) a = rng.next_uniform(0.01, 0.99);
    const double fast = viterbi_best_log_prob(act, cfg);
    const double exact = oracles::exhaustive_best_log_prob(act, cfg);
    CHECK(fast == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("constant activation still yields a periodic strictly increasing sequence") {
  DbnConfig cfg;
  std::vector<double> act(400, 0.5);
  const BeatSequence beats = viterbi_decode(act, cfg);
  REQUIRE(beats.times.size() >= 2);
  for (size_t i = 1; i < beats.times.size(); ++i) {
    CHECK(beats.times[i] > beats.times[i - 1]);
  }
  // periodic: one tempo wins the tie and sticks
  std::vector<double> intervals;
  for (size_t i = 1; i < beats.times.size(); ++i) {
    intervals.push_back(beats.times[i] - beats.times[i - 1]);
  }
  for (size_t i = 1; i + 1 < intervals.size(); ++i) {
    CHECK(intervals[i] == doctest::Approx(intervals[1]).epsilon(1e-9));
  }
}

TEST_CASE("decoded intervals always lie inside the tempo range") {
  DbnConfig cfg;
  cfg.tau_min = 10;
  cfg.tau_max = 30;
  SplitMix64 rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> act(300);
    for (double& a : act) a = rng.next_uniform(0.01, 0.99);
    const BeatSequence beats = viterbi_decode(act, cfg);
    for (size_t i = 1; i < beats.times.size(); ++i) {
      const double frames = (beats.times[i] - beats.times[i - 1]) * cfg.frame_rate;
      CHECK(frames >= cfg.tau_min - 0.5);
      CHECK(frames <= cfg.tau_max + 0.5);
    }
  }
}

TEST_CASE("log-space decoding survives very long sequences without underflow") {
  DbnConfig cfg;
  cfg.tau_min = 15;
  cfg.tau_max = 20;  // narrow band keeps the backpointer table small
  const std::vector<double> act = impulse_train(100000, 18, 0.9, 0.1);
  const BeatSequence beats = viterbi_decode(act, cfg);
  CHECK(std::isfinite(viterbi_best_log_prob(act, cfg)));
  CHECK(beats.times.size() > 5000);
  for (size_t i = 1; i < beats.times.size(); ++i) CHECK(beats.times[i] > beats.times[i - 1]);
}

TEST_CASE("viterbi rejects empty and out-of-range activations") {
  DbnConfig cfg;
  CHECK_THROWS_AS(viterbi_decode({}, cfg), Error);
  CHECK_THROWS_AS(viterbi_decode({0.5}, cfg), Error);
  CHECK_THROWS_AS(viterbi_decode({0.5, 1.0}, cfg), Error);
  CHECK_THROWS_AS(viterbi_decode({0.0, 0.5}, cfg), Error);
  DbnConfig bad;
  bad.tau_min = 10;
  bad.tau_max = 10;
  CHECK_THROWS_AS(viterbi_decode(impulse_train(50, 10), bad), Error);
}

TEST_CASE("downbeat assignment picks the strongest meter/offset") {
  BeatSequence beats;
  for (int i = 0; i < 16; ++i) beats.times.push_back(0.5 * i);
  // downbeat energy at every 4th beat starting at beat 0
  std::vector<double> act(500, 0.1);
  for (int i = 0; i < 16; i += 4) {
    act[static_cast<size_t>(std::llround(beats.times[i] * 50.0))] = 0.9;
  }
  const BeatSequence out = assign_downbeats(beats, act, 50.0);
  REQUIRE(out.positions.size() == 16);
  for (int i = 0; i < 16; ++i) {
    CHECK(out.positions[i] == (i % 4) + 1);
  }
}

TEST_CASE("uniform downbeat activation falls back to meter 3, offset 0") {
  BeatSequence beats;
  for (int i = 0; i < 9; ++i) beats.times.push_back(0.4 * i);
  std::vector<double> act(200, 0.5);
  const BeatSequence out = assign_downbeats(beats, act, 50.0);
  CHECK(out.positions[0] == 1);
  CHECK(out.positions[1] == 2);
  CHECK(out.positions[2] == 3);
  CHECK(out.positions[3] == 1);  // cycle of three
}

TEST_CASE("a single beat gets position 1 by tie-break") {
  BeatSequence beats;
  beats.times = {1.0};
  std::vector<double> act(100, 0.2);
  const BeatSequence out = assign_downbeats(beats, act, 50.0);
  REQUIRE(out.positions.size() == 1);
  CHECK(out.positions[0] == 1);
}

TEST_CASE("peak picking keeps isolated spikes and resolves conflicts") {
  SUBCASE("single spike") {
    std::vector<double> act(50, 0.0);
    act[20] = 0.9;
    const BeatSequence out = peak_pick(act, 50.0, 0.5, 5);
    REQUIRE(out.times.size() == 1);
    CHECK(out.times[0] == doctest::Approx(0.4));
  }
  SUBCASE("close spikes: larger wins") {
    std::vector<double> act(50, 0.0);
    act[20] = 0.7;
    act[23] = 0.9;
    const BeatSequence out = peak_pick(act, 50.0, 0.5, 5);
    REQUIRE(out.times.size() == 1);
    CHECK(out.times[0] == doctest::Approx(23.0 / 50.0));
  }
  SUBCASE("equal close spikes: earlier wins") {
    std::vector<double> act(50, 0.0);
    act[20] = 0.8;
    act[23] = 0.8;
    const BeatSequence out = peak_pick(act, 50.0, 0.5, 5);
    REQUIRE(out.times.size() == 1);
    CHECK(out.times[0] == doctest::Approx(0.4));
  }
  SUBCASE("all zeros: empty sequence") {
    std::vector<double> act(50, 0.0);
    CHECK(peak_pick(act, 50.0, 0.5, 5).times.empty());
  }
}

TEST_CASE("beat files round trip at six decimals") {
  BeatSequence beats;
  beats.times = {0.123456789, 1.5, 2.75};
  beats.positions = {1, 2, 3};
  const auto path = std::filesystem::temp_directory_path() / "hingenet_beats.txt";
  save_beats(beats, path.string());
  const BeatSequence loaded = load_beats(path.string());
  REQUIRE(loaded.times.size() == 3);
  CHECK(loaded.times[0] == doctest::Approx(0.123457).epsilon(1e-9));
  CHECK(loaded.times[1] == doctest::Approx(1.5));
  CHECK(loaded.positions == std::vector<int64_t>{1, 2, 3});
  std::filesystem::remove(path);
}

TEST_CASE("beat files with non-increasing times are rejected with a line number") {
  const auto path = std::filesystem::temp_directory_path() / "hingenet_bad_beats.txt";
  std::ofstream(path.string()) << "1.000000\t1\n0.500000\t2\n";
  CHECK_THROWS_WITH_AS(load_beats(path.string()), doctest::Contains("line 2"), Error);
  std::filesystem::remove(path);
}
