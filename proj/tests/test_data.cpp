#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "hingenet/data.hpp"
#include "hingenet/postprocess.hpp"
#include "hingenet/sha256.hpp"
#include "oracles.hpp"

using namespace hingenet;
namespace fs = std::filesystem;

namespace {

std::string features_hash(const Example& ex) {
  Sha256 h;
  h.update(ex.features->data.data(), ex.features->data.size() * sizeof(double));
  return digest_hex(h.finish());
}

SyntheticConfig tiny_config() {
  SyntheticConfig cfg;
  cfg.n_items = 4;
  cfg.duration_s = 6.0;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("generation is bit-identical for a fixed seed") {
  const SyntheticConfig cfg = tiny_config();
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(features_hash(a[i]) == features_hash(b[i]));
    CHECK(a[i].annotation.beat_times == b[i].annotation.beat_times);
    CHECK(a[i].annotation.positions == b[i].annotation.positions);
  }
  SyntheticConfig other = cfg;
  other.seed = 12;
  CHECK(features_hash(generate_item(other, 0)) != features_hash(a[0]));
}

TEST_CASE("beat annotations are strictly increasing and inside the clip") {
  SyntheticConfig cfg = tiny_config();
  cfg.n_items = 8;
  for (const Example& ex : generate(cfg)) {
    const auto& t = ex.annotation.beat_times;
    REQUIRE(t.size() >= 4);
    for (size_t i = 0; i < t.size(); ++i) {
      CHECK(t[i] >= 0.0);
      CHECK(t[i] <= cfg.duration_s);
      if (i > 0) CHECK(t[i] > t[i - 1]);
    }
    // downbeats are a subset of beats with positions cycling 1..meter
    const auto downs = ex.annotation.downbeat_times();
    CHECK(!downs.empty());
    std::set<int64_t> seen(ex.annotation.positions.begin(), ex.annotation.positions.end());
    const int64_t meter = *std::max_element(seen.begin(), seen.end());
    CHECK((meter == 3 || meter == 4));
    for (size_t i = 0; i < ex.annotation.positions.size(); ++i) {
      const int64_t expect = (static_cast<int64_t>(i) % meter) + 1;
      CHECK(ex.annotation.positions[i] == expect);
    }
  }
}

TEST_CASE("noiseless, jitter-free features are piecewise constant between beats") {
  SyntheticConfig cfg = tiny_config();
  cfg.noise_sigma = 0.0;
  cfg.tempo_jitter = 0.0;
  const Example ex = generate_item(cfg, 0);
  const int64_t t = ex.features->shape.t;
  const int64_t c = ex.features->shape.c;

  std::set<int64_t> beat_frames;
  for (double bt : ex.annotation.beat_times) {
    beat_frames.insert(std::llround(bt * cfg.frame_rate));
  }
  for (int64_t u = 1; u < t; ++u) {
    // a frame may differ from its predecessor only at beats (stack jump or
    // one-frame downbeat lift) or just after a downbeat frame
    bool differs = false;
    for (int64_t ci = 0; ci < c; ++ci) {
      if (ex.features->at(0, ci, u) != ex.features->at(0, ci, u - 1)) {
        differs = true;
        break;
      }
    }
    if (differs) {
      const bool at_beat = beat_frames.count(u) > 0;
      const bool after_downbeat_frame = beat_frames.count(u - 1) > 0;
      CHECK((at_beat || after_downbeat_frame));
    }
  }
}

TEST_CASE("downbeat count tracks beat count over the meter") {
  SyntheticConfig cfg = tiny_config();
  cfg.n_items = 10;
  for (const Example& ex : generate(cfg)) {
    std::set<int64_t> seen(ex.annotation.positions.begin(), ex.annotation.positions.end());
    const int64_t meter = *std::max_element(seen.begin(), seen.end());
    const int64_t beats = static_cast<int64_t>(ex.annotation.beat_times.size());
    const int64_t downs = static_cast<int64_t>(ex.annotation.downbeat_times().size());
    CHECK(std::abs(downs - beats / meter) <= 1);
  }
}

TEST_CASE("label broadening reproduces the 1.0/0.5/0.25 stencil") {
  BeatAnnotation ann;
  ann.beat_times = {2.0};  // frame 100 at 50 fps
  ann.positions = {1};
  const BroadenedTargets t = broaden_labels(ann, 200, 50.0);
  CHECK(t.beat[98] == 0.25);
  CHECK(t.beat[99] == 0.5);
  CHECK(t.beat[100] == 1.0);
  CHECK(t.beat[101] == 0.5);
  CHECK(t.beat[102] == 0.25);
  CHECK(t.beat[97] == 0.0);
  CHECK(t.beat[103] == 0.0);
  // the downbeat channel mirrors position-1 beats
  CHECK(t.downbeat[100] == 1.0);
}

TEST_CASE("broadening clips at the clip boundaries") {
  BeatAnnotation ann;
  ann.beat_times = {0.0};
  ann.positions = {2};
  const BroadenedTargets t = broaden_labels(ann, 50, 50.0);
  CHECK(t.beat[0] == 1.0);
  CHECK(t.beat[1] == 0.5);
  CHECK(t.beat[2] == 0.25);
  CHECK(t.downbeat[0] == 0.0);  // not a downbeat
}

TEST_CASE("overlapping stencils keep the per-frame maximum") {
  BeatAnnotation ann;
  ann.beat_times = {0.2, 0.26};  // frames 10 and 13
  ann.positions = {1, 2};
  const BroadenedTargets t = broaden_labels(ann, 50, 50.0);
  CHECK(t.beat[10] == 1.0);
  CHECK(t.beat[11] == 0.5);   // max(0.5 from 10, 0.25 from 13)
  CHECK(t.beat[12] == 0.5);   // max(0.25 from 10, 0.5 from 13)
  CHECK(t.beat[13] == 1.0);
}

TEST_CASE("broadened values live in {0, 0.25, 0.5, 1}") {
  SyntheticConfig cfg = tiny_config();
  const Example ex = generate_item(cfg, 2);
  const BroadenedTargets t =
      broaden_labels(ex.annotation, ex.features->shape.t, cfg.frame_rate);
  const std::set<double> allowed = {0.0, 0.25, 0.5, 1.0};
  for (double v : t.beat) CHECK(allowed.count(v) == 1);
  for (double v : t.downbeat) CHECK(allowed.count(v) == 1);
}

TEST_CASE("time stretch: identity at factor 1") {
  const Example ex = generate_item(tiny_config(), 1);
  const Example same = time_stretch(ex, 1.0);
  CHECK(same.features->data == ex.features->data);
  CHECK(same.annotation.beat_times == ex.annotation.beat_times);
}

TEST_CASE("time stretch: factor 2 doubles frames and beat times exactly") {
  const Example ex = generate_item(tiny_config(), 1);
  const Example wide = time_stretch(ex, 2.0);
  CHECK(std::abs(wide.features->shape.t - 2 * ex.features->shape.t) <= 1);
  REQUIRE(wide.annotation.beat_times.size() == ex.annotation.beat_times.size());
  for (size_t i = 0; i < wide.annotation.beat_times.size(); ++i) {
    CHECK(wide.annotation.beat_times[i] == 2.0 * ex.annotation.beat_times[i]);
  }
  CHECK(wide.features->shape.c == ex.features->shape.c);  // pitch axis untouched
}

TEST_CASE("stretching by s then 1/s restores beat times within 1e-9") {
  const Example ex = generate_item(tiny_config(), 0);
  for (double s : {0.8, 1.25, 1.5}) {
    const Example back = time_stretch(time_stretch(ex, s), 1.0 / s);
    REQUIRE(back.annotation.beat_times.size() == ex.annotation.beat_times.size());
    for (size_t i = 0; i < back.annotation.beat_times.size(); ++i) {
      CHECK(std::abs(back.annotation.beat_times[i] - ex.annotation.beat_times[i]) < 1e-9);
    }
  }
  CHECK_THROWS_AS(time_stretch(ex, 0.4), Error);
  CHECK_THROWS_AS(time_stretch(ex, 2.5), Error);
}

TEST_CASE("decoding a stretched clean activation shifts the tempo by the factor") {
  SyntheticConfig cfg = tiny_config();
  cfg.duration_s = 12.0;
  cfg.noise_sigma = 0.0;
  cfg.tempo_jitter = 0.0;
  cfg.tempo_min_bpm = 120.0;
  cfg.tempo_max_bpm = 150.0;
  const Example ex = generate_item(cfg, 3);

  // clean activation from the annotation, packed as a 1-channel example
  const BroadenedTargets targets =
      broaden_labels(ex.annotation, ex.features->shape.t, cfg.frame_rate);
  Example act_ex;
  act_ex.frame_rate = cfg.frame_rate;
  act_ex.features = Tensor::create({1, 1, ex.features->shape.t});
  for (size_t i = 0; i < targets.beat.size(); ++i) {
    act_ex.features->data[i] = 0.02 + 0.96 * targets.beat[i];
  }
  act_ex.annotation = ex.annotation;

  // integer frames-per-beat quantizes each interval; the mean over the clip
  // still tracks the true rate
  auto mean_interval = [](const BeatSequence& b) {
    return (b.times.back() - b.times.front()) / static_cast<double>(b.times.size() - 1);
  };

  DbnConfig dbn;
  const BeatSequence base = viterbi_decode(
      {act_ex.features->data.begin(), act_ex.features->data.end()}, dbn);
  const double base_bpm = 60.0 / mean_interval(base);

  const double s = 1.25;
  const Example stretched = time_stretch(act_ex, s);
  std::vector<double> stretched_act(stretched.features->data);
  for (double& v : stretched_act) v = std::clamp(v, 0.01, 0.99);
  const BeatSequence slow = viterbi_decode(stretched_act, dbn);
  const double slow_bpm = 60.0 / mean_interval(slow);

  CHECK(slow_bpm == doctest::Approx(base_bpm / s).epsilon(0.02));
}

TEST_CASE("annotation files parse, reject disorder, and round trip") {
  const fs::path dir = fs::temp_directory_path() / "hingenet_data_ann";
  fs::create_directories(dir);

  SUBCASE("two-line file") {
    const auto p = dir / "ok.beats";
    std::ofstream(p.string()) << "0.500000 1\n1.000000 2\n";
    const BeatAnnotation ann = parse_annotation(p.string());
    REQUIRE(ann.beat_times.size() == 2);
    CHECK(ann.beat_times[0] == doctest::Approx(0.5));
    CHECK(ann.positions[0] == 1);
    CHECK(ann.downbeat_times() == std::vector<double>{0.5});
  }

  SUBCASE("decreasing times fail at line 2") {
    const auto p = dir / "bad.beats";
    std::ofstream(p.string()) << "1.000000 1\n0.500000 2\n";
    CHECK_THROWS_WITH_AS(parse_annotation(p.string()), doctest::Contains("line 2"), Error);
  }

  SUBCASE("malformed line carries its number") {
    const auto p = dir / "mal.beats";
    std::ofstream(p.string()) << "0.5 1\nnot_a_number 2\n";
    CHECK_THROWS_WITH_AS(parse_annotation(p.string()), doctest::Contains("line 2"), Error);
  }

  SUBCASE("empty file is a valid empty annotation") {
    const auto p = dir / "empty.beats";
    std::ofstream(p.string()).flush();
    CHECK(parse_annotation(p.string()).beat_times.empty());
  }

  SUBCASE("write then parse round trips to six decimals") {
    BeatAnnotation ann;
    ann.beat_times = {0.1234567, 2.5};
    ann.positions = {1, 2};
    const auto p = dir / "rt.beats";
    write_annotation(ann, p.string());
    const BeatAnnotation back = parse_annotation(p.string());
    CHECK(back.beat_times[0] == doctest::Approx(0.123457).epsilon(1e-9));
    CHECK(back.positions == ann.positions);
  }

  fs::remove_all(dir);
}

TEST_CASE("dataset directories round trip through the manifest") {
  const fs::path dir = fs::temp_directory_path() / "hingenet_dataset_rt";
  fs::remove_all(dir);
  SyntheticConfig cfg = tiny_config();
  cfg.n_items = 6;
  const Dataset ds = generate_dataset(cfg);
  CHECK(!ds.train_ids.empty());
  CHECK(!ds.val_ids.empty());
  CHECK(!ds.test_ids.empty());
  CHECK(ds.train_ids.size() + ds.val_ids.size() + ds.test_ids.size() == 6);

  save_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string());
  REQUIRE(back.items.size() == ds.items.size());
  CHECK(back.train_ids == ds.train_ids);
  CHECK(back.val_ids == ds.val_ids);
  CHECK(back.test_ids == ds.test_ids);
  for (size_t i = 0; i < back.items.size(); ++i) {
    CHECK(back.items[i].id == ds.items[i].id);
    CHECK(back.items[i].annotation.beat_times.size() ==
          ds.items[i].annotation.beat_times.size());
    // payload is f32 in the container
    for (size_t k = 0; k < back.items[i].features->data.size(); ++k) {
      CHECK(back.items[i].features->data[k] ==
            static_cast<double>(static_cast<float>(ds.items[i].features->data[k])));
    }
  }
  fs::remove_all(dir);
}
