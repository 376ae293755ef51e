#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hingenet/config.hpp"
#include "hingenet/hinge.hpp"
#include "hingenet/rng.hpp"
#include "oracles.hpp"

using namespace hingenet;

namespace {

TensorPtr random_input(uint64_t seed, Shape shape) {
  SplitMix64 rng(seed);
  auto t = Tensor::create(shape);
  for (double& v : t->data) v = rng.next_uniform(-1.0, 1.0);
  return t;
}

LayerFeatureStack random_stack(uint64_t seed, int64_t n_layers, Shape shape) {
  LayerFeatureStack stack;
  for (int64_t i = 0; i < n_layers; ++i) {
    stack.layers.push_back(random_input(seed + static_cast<uint64_t>(i), shape));
  }
  return stack;
}

// closed-form trainable count for the channel-axis hinge
int64_t closed_form_count(int64_t h, int64_t r, int64_t n, int64_t m, int64_t k) {
  const int64_t p = h / r;
  const int64_t projection = n * (h * p + p);
  const int64_t gates = n - 1;
  const int64_t branches = n * m * (k + 1);           // single sliding kernel + bias
  const int64_t mlp = n * ((m * p) * p + p + p * p + p);
  const int64_t head = 2 * p + 2;
  return projection + gates + branches + mlp + head;
}

}  // namespace

TEST_CASE("harmonic intervals reproduce the canonical grid") {
  CHECK(harmonic_intervals({12, 5}) == std::vector<int64_t>{12, 7, 5, 4});
  CHECK(harmonic_intervals({24, 3}) == std::vector<int64_t>{24, 14});
  // octave identity: two harmonics give exactly [Q]
  for (int64_t q : {1, 5, 12, 31}) {
    CHECK(harmonic_intervals({q, 2}) == std::vector<int64_t>{q});
  }
}

TEST_CASE("harmonic intervals match direct evaluation on randomized specs") {
  SplitMix64 rng(12345);
  int64_t done = 0;
  while (done < 20) {
    const int64_t q = 6 + rng.next_below(58);   // 6..63
    const int64_t n = 2 + rng.next_below(5);    // 2..6
    std::vector<int64_t> expected;
    bool valid = true;
    for (int64_t k = 1; k < n; ++k) {
      const int64_t d = std::llround(static_cast<double>(q) * std::log2((k + 1.0) / k));
      if (d < 1 || (!expected.empty() && d >= expected.back())) valid = false;
      expected.push_back(d);
    }
    if (!valid) {
      CHECK_THROWS_AS(harmonic_intervals({q, n}), Error);
      continue;
    }
    CHECK(harmonic_intervals({q, n}) == expected);
    ++done;
  }
}

TEST_CASE("harmonic intervals reject degenerate specs") {
  CHECK_THROWS_AS(harmonic_intervals({0, 5}), Error);
  CHECK_THROWS_AS(harmonic_intervals({12, 1}), Error);
  // Q=1 collapses adjacent intervals to a tie
  CHECK_THROWS_AS(harmonic_intervals({1, 3}), Error);
}

TEST_CASE("projection reduces channels by the projection factor") {
  HingeConfig cfg;
  cfg.projection_factor = 6;
  HingeNet big(cfg, 1, 768, 3);
  auto wide = random_input(1, {1, 768, 4});
  CHECK(big.project(1, wide)->shape == Shape{1, 128, 4});

  HingeConfig cfg4;
  cfg4.projection_factor = 4;
  HingeNet small(cfg4, 1, 64, 3);
  auto x = random_input(2, {1, 64, 10});
  CHECK(small.project(1, x)->shape == Shape{1, 16, 10});
}

TEST_CASE("projection with zeroed weights maps everything to zero") {
  HingeConfig cfg;
  cfg.projection_factor = 4;
  HingeNet net(cfg, 1, 16, 3);
  for (Parameter* p : net.parameters()) {
    if (p->name.find("proj") != std::string::npos) p->value->data.assign(p->value->data.size(), 0.0);
  }
  auto y = net.project(1, random_input(3, {1, 16, 5}));
  for (double v : y->data) CHECK(v == 0.0);
}

TEST_CASE("hidden size must be divisible by the projection factor") {
  HingeConfig cfg;
  cfg.projection_factor = 6;
  CHECK_THROWS_AS(HingeNet(cfg, 4, 64, 1), Error);  // 64 % 6 != 0
  CHECK_NOTHROW(HingeNet(cfg, 4, 48, 1));
}

TEST_CASE("gate contract: zero init means an exact half/half blend") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 3, 8, 5);
  for (int64_t i = 2; i <= 3; ++i) CHECK(net.gate_value(i) == 0.5);

  auto prev = random_input(4, {1, 4, 6});
  auto proj = random_input(5, {1, 4, 6});
  auto fused = net.fuse(2, prev, proj);
  for (size_t i = 0; i < fused->data.size(); ++i) {
    CHECK(fused->data[i] == doctest::Approx(0.5 * prev->data[i] + 0.5 * proj->data[i]));
  }
}

TEST_CASE("layer 1 fusion returns the projection unchanged") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 2, 8, 5);
  auto proj = random_input(6, {1, 4, 6});
  CHECK(net.fuse(1, nullptr, proj).get() == proj.get());
}

TEST_CASE("saturated gates ignore one side within 1e-8") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 2, 8, 5);
  auto prev = random_input(7, {1, 4, 6});
  auto proj = random_input(8, {1, 4, 6});
  net.set_gate_raw(2, 20.0);
  auto fused = net.fuse(2, prev, proj);
  for (size_t i = 0; i < fused->data.size(); ++i) {
    CHECK(std::abs(fused->data[i] - prev->data[i]) < 1e-8);
  }
  net.set_gate_raw(2, -20.0);
  fused = net.fuse(2, prev, proj);
  for (size_t i = 0; i < fused->data.size(); ++i) {
    CHECK(std::abs(fused->data[i] - proj->data[i]) < 1e-8);
  }
}

TEST_CASE("harmonic-aware module preserves shape and uses the harmonic dilations") {
  HingeConfig cfg;  // defaults: Q=12, 5 harmonics, 4 branches
  cfg.projection_factor = 2;
  HingeNet net(cfg, 1, 48, 9);
  CHECK(net.dilations() == std::vector<int64_t>{12, 7, 5, 4});
  auto x = random_input(9, {2, 24, 7});
  CHECK(net.ham(1, x)->shape == x->shape);
}

TEST_CASE("core layer gradients match finite differences") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 2, 8, 11);
  auto f1 = random_input(10, {1, 8, 6});
  auto f2 = random_input(11, {1, 8, 6});
  auto build = [&] {
    auto p1 = net.project(1, f1);
    auto h1 = net.ham(1, net.fuse(1, nullptr, p1));
    auto p2 = net.project(2, f2);
    auto h2 = net.ham(2, net.fuse(2, h1, p2));
    return sum(sigmoid(h2));
  };
  std::vector<TensorPtr> leaves;
  for (Parameter* p : net.parameters()) leaves.push_back(p->value);
  CHECK(oracles::check_gradients(build, leaves).ok());
}

TEST_CASE("full model gradient check: frozen stub forward, hinge backward") {
  StubConfig scfg;
  scfg.n_layers = 2;
  scfg.hidden = 8;
  scfg.input_channels = 6;
  scfg.seed = 3;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig hcfg;
  hcfg.projection_factor = 2;
  HingeTracker tracker(stub, hcfg, 17);
  auto x = random_input(12, {1, 6, 6});
  auto target = Tensor::create({1, 1, 6}, {1, 0, 0, 1, 0, 0});
  auto build = [&] {
    const ActivationPair acts = tracker.forward(x, 50.0);
    return add(bce_loss(acts.beat, target), bce_loss(acts.downbeat, target));
  };
  std::vector<TensorPtr> leaves;
  for (Parameter* p : tracker.trainable_parameters()) leaves.push_back(p->value);
  CHECK(oracles::check_gradients(build, leaves).ok());
}

TEST_CASE("hinge forward preserves frames and emits probabilities in (0,1)") {
  StubConfig scfg;
  scfg.n_layers = 4;
  scfg.hidden = 16;
  scfg.input_channels = 6;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig hcfg;
  hcfg.projection_factor = 4;
  HingeTracker tracker(stub, hcfg, 23);
  auto x = random_input(13, {1, 6, 111});
  const ActivationPair acts = tracker.forward(x, 50.0);
  CHECK(acts.beat->shape == Shape{1, 1, 111});
  CHECK(acts.downbeat->shape == Shape{1, 1, 111});
  for (double v : acts.beat->data) CHECK((v > 0.0 && v < 1.0));
  for (double v : acts.downbeat->data) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("with all gates saturated high, layers 2..N ignore their projections") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 3, 8, 29);
  for (int64_t i = 2; i <= 3; ++i) net.set_gate_raw(i, 40.0);
  LayerFeatureStack stack = random_stack(31, 3, {1, 8, 9});
  const ActivationPair base = net.forward(stack);

  // perturb every layer except the first; the output must not move
  LayerFeatureStack perturbed = stack;
  for (size_t i = 1; i < perturbed.layers.size(); ++i) {
    perturbed.layers[i] = random_input(100 + static_cast<uint64_t>(i), {1, 8, 9});
  }
  const ActivationPair same = net.forward(perturbed);
  for (size_t i = 0; i < base.beat->data.size(); ++i) {
    CHECK(std::abs(base.beat->data[i] - same.beat->data[i]) < 1e-8);
  }

  // but the first layer still matters
  perturbed = stack;
  perturbed.layers[0] = random_input(200, {1, 8, 9});
  const ActivationPair moved = net.forward(perturbed);
  double delta = 0.0;
  for (size_t i = 0; i < base.beat->data.size(); ++i) {
    delta = std::max(delta, std::abs(base.beat->data[i] - moved.beat->data[i]));
  }
  CHECK(delta > 1e-8);
}

TEST_CASE("layer-count mismatch is rejected and the stack is never mutated") {
  HingeConfig cfg;
  cfg.projection_factor = 2;
  HingeNet net(cfg, 3, 8, 37);
  LayerFeatureStack wrong = random_stack(41, 2, {1, 8, 5});
  CHECK_THROWS_AS(net.forward(wrong), Error);

  LayerFeatureStack stack = random_stack(43, 3, {1, 8, 5});
  std::vector<std::vector<double>> before;
  for (const auto& l : stack.layers) before.push_back(l->data);
  (void)net.forward(stack);
  for (size_t i = 0; i < stack.layers.size(); ++i) CHECK(stack.layers[i]->data == before[i]);
}

TEST_CASE("count_parameters matches the closed form and enumeration") {
  StubConfig scfg;
  scfg.n_layers = 4;
  scfg.hidden = 64;
  scfg.input_channels = 6;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig hcfg;
  hcfg.projection_factor = 4;
  HingeTracker tracker(stub, hcfg, 51);
  const ParamCounts counts = tracker.count_parameters();
  CHECK(counts.trainable == closed_form_count(64, 4, 4, 4, 3));
  CHECK(counts.frozen == stub->parameter_count());
  CHECK(counts.frozen > 0);

  // stub alone is fully frozen
  int64_t stub_trainable = 0;
  for (const Parameter* p : stub->parameters()) {
    if (p->trainable) stub_trainable += p->value->size();
  }
  CHECK(stub_trainable == 0);
}

TEST_CASE("default toy config stays under a quarter of total parameters") {
  StubConfig scfg;  // hidden 64 stub
  scfg.hidden = 48;  // pipeline default pairs with projection factor 6
  scfg.input_channels = 60;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeTracker tracker(stub, HingeConfig{}, 3);
  CHECK(tracker.count_parameters().fraction() < 0.25);
}

TEST_CASE("disabling the harmonic-aware module strictly shrinks the model") {
  StubConfig scfg;
  scfg.n_layers = 3;
  scfg.hidden = 16;
  scfg.input_channels = 6;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig on;
  on.projection_factor = 2;
  HingeConfig off = on;
  off.ham_enabled = false;
  HingeTracker with(stub, on, 5), without(stub, off, 5);
  CHECK(without.count_parameters().trainable < with.count_parameters().trainable);
}

TEST_CASE("checkpoints round trip bit-exactly and reject corruption") {
  StubConfig scfg;
  scfg.n_layers = 2;
  scfg.hidden = 12;
  scfg.input_channels = 5;
  scfg.seed = 77;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig hcfg;
  hcfg.projection_factor = 3;
  HingeTracker tracker(stub, hcfg, 91);
  // make the state distinctive
  tracker.net().set_gate_raw(2, 0.731);

  const auto path = std::filesystem::temp_directory_path() / "hingenet_ckpt.hgnm";
  save_tracker(tracker, path.string());
  auto loaded = load_tracker(path.string());
  REQUIRE(loaded->kind() == "hinge");

  auto a = tracker.trainable_parameters();
  auto b = loaded->trainable_parameters();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value->data == b[i]->value->data);  // bit-exact
  }

  // identical forwards after reload
  auto x = random_input(99, {1, 5, 21});
  const ActivationPair ya = tracker.forward(x, 50.0);
  const ActivationPair yb = loaded->forward(x, 50.0);
  CHECK(ya.beat->data == yb.beat->data);

  // flip one payload byte: the digest check must refuse the file
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(64);
  char byte = 0;
  f.seekg(64);
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x1);
  f.seekp(64);
  f.write(&byte, 1);
  f.close();
  CHECK_THROWS_WITH_AS(load_tracker(path.string()), doctest::Contains("digest"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("inspect reports counts without loading the model") {
  StubConfig scfg;
  scfg.n_layers = 2;
  scfg.hidden = 8;
  scfg.input_channels = 4;
  auto stub = std::make_shared<FoundationStub>(scfg);
  HingeConfig hcfg;
  hcfg.projection_factor = 2;
  HingeTracker tracker(stub, hcfg, 13);
  const auto path = std::filesystem::temp_directory_path() / "hingenet_inspect.hgnm";
  save_tracker(tracker, path.string());
  const nlohmann::json meta = inspect_checkpoint(path.string());
  CHECK(meta.at("kind") == "hinge");
  CHECK(meta.at("trainable_count").get<int64_t>() ==
        tracker.count_parameters().trainable);
  CHECK(meta.at("frozen_count").get<int64_t>() == stub->parameter_count());
  std::filesystem::remove(path);
}
