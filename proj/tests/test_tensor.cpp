#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hingenet/rng.hpp"
#include "hingenet/sha256.hpp"
#include "hingenet/tensor.hpp"
#include "oracles.hpp"

using namespace hingenet;

namespace {

TensorPtr randn(SplitMix64& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  auto t = Tensor::create(shape);
  for (double& v : t->data) v = rng.next_uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("sha256 matches the FIPS test vectors") {
  CHECK(digest_hex(sha256("", 0)) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(digest_hex(sha256("abc", 3)) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const char* msg = "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
  CHECK(digest_hex(sha256(msg, 56)) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("conv1d identity kernel returns the input") {
  SplitMix64 rng(7);
  auto x = randn(rng, {2, 3, 9});
  auto w = Tensor::create({3, 3, 3});
  for (int64_t o = 0; o < 3; ++o) w->at(o, o, 1) = 1.0;  // center tap only
  auto y = conv1d(x, w, nullptr, 1, Axis::time);
  REQUIRE(y->shape == x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) CHECK(y->data[i] == doctest::Approx(x->data[i]));
}

TEST_CASE("conv1d dilated two-tap kernel on a hand-evaluated example") {
  // x = [1,2,3,4,5], w = [1,0,1], dilation 2, zero boundary:
  // out[i] = x[i-2] + x[i+2] = [0+3, 0+4, 1+5, 2+0, 3+0]
  auto x = Tensor::create({1, 1, 5}, {1, 2, 3, 4, 5});
  auto w = Tensor::create({1, 1, 3}, {1, 0, 1});
  auto y = conv1d(x, w, nullptr, 2, Axis::time);
  const std::vector<double> expected = {3, 4, 6, 2, 3};
  for (size_t i = 0; i < expected.size(); ++i) CHECK(y->data[i] == doctest::Approx(expected[i]));
}

TEST_CASE("conv1d rejects bad arguments") {
  auto x = Tensor::create({1, 1, 5});
  auto w_even = Tensor::create({1, 1, 2});
  auto w = Tensor::create({1, 1, 3});
  CHECK_THROWS_AS(conv1d(x, w, nullptr, 0, Axis::time), Error);
  CHECK_THROWS_AS(conv1d(x, w_even, nullptr, 1, Axis::time), Error);
  auto mismatched = Tensor::create({2, 4, 3});  // wrong input channel count
  CHECK_THROWS_AS(conv1d(x, mismatched, nullptr, 1, Axis::time), Error);
  CHECK_THROWS_AS(Tensor::create({1, 1, 0}), Error);
}

TEST_CASE("conv1d is linear in its input") {
  SplitMix64 rng(11);
  auto x = randn(rng, {1, 2, 8});
  auto y = randn(rng, {1, 2, 8});
  auto w = randn(rng, {3, 2, 3});
  const double a = 1.7, b = -0.4;
  auto lhs = conv1d(add_scaled(x, y, a, b), w, nullptr, 2, Axis::time);
  auto cx = conv1d(x, w, nullptr, 2, Axis::time);
  auto cy = conv1d(y, w, nullptr, 2, Axis::time);
  auto rhs = add_scaled(cx, cy, a, b);
  for (size_t i = 0; i < lhs->data.size(); ++i) {
    CHECK(std::abs(lhs->data[i] - rhs->data[i]) < 1e-12);
  }
}

TEST_CASE("conv1d gradients match finite differences on both axes") {
  SplitMix64 rng(13);
  for (Axis axis : {Axis::time, Axis::channel}) {
    for (int64_t dilation : {1, 2, 5}) {
      auto x = randn(rng, {2, 6, 7});
      auto w = axis == Axis::time ? randn(rng, {3, 6, 3}) : randn(rng, {1, 1, 3});
      auto bias = axis == Axis::time ? randn(rng, {1, 3, 1}) : randn(rng, {1, 1, 1});
      auto build = [&] { return sum(conv1d(x, w, bias, dilation, axis)); };
      const auto result = oracles::check_gradients(build, {x, w, bias});
      INFO("axis=", axis == Axis::time ? "time" : "channel", " dilation=", dilation);
      CHECK(result.ok());
    }
  }
}

TEST_CASE("linear gradients match finite differences") {
  SplitMix64 rng(17);
  auto x = randn(rng, {2, 5, 4});
  auto w = randn(rng, {1, 3, 5});
  auto b = randn(rng, {1, 3, 1});
  auto build = [&] { return sum(linear(x, w, b)); };
  CHECK(oracles::check_gradients(build, {x, w, b}).ok());
}

TEST_CASE("elementwise op gradients match finite differences") {
  SplitMix64 rng(19);
  auto x = randn(rng, {2, 3, 5});
  // nontrivial downstream weighting so the loss is not linear in each output
  auto mixer = randn(rng, {1, 2, 3});

  auto check_unary = [&](auto op) {
    auto build = [&] { return sum(linear(op(x), mixer, nullptr)); };
    CHECK(oracles::check_gradients(build, {x}).ok());
  };
  check_unary([](const TensorPtr& t) { return sigmoid(t); });
  check_unary([](const TensorPtr& t) { return relu(t); });
  check_unary([](const TensorPtr& t) { return softmax(t, Axis::channel); });
  check_unary([](const TensorPtr& t) { return softmax(t, Axis::time); });
}

TEST_CASE("sigmoid of zero is one half") {
  auto x = Tensor::create({1, 1, 1});
  CHECK(sigmoid(x)->data[0] == doctest::Approx(0.5));
}

TEST_CASE("add_scaled at half weights is the identity on equal inputs") {
  SplitMix64 rng(23);
  auto a = randn(rng, {1, 2, 3});
  auto b = Tensor::create(a->shape, std::vector<double>(a->data));
  auto y = add_scaled(a, b, 0.5, 0.5);
  for (size_t i = 0; i < a->data.size(); ++i) CHECK(y->data[i] == doctest::Approx(a->data[i]));
}

TEST_CASE("layernorm of a constant vector collapses to the shift") {
  auto x = Tensor::create({1, 4, 2});
  for (double& v : x->data) v = 3.25;
  auto gain = Tensor::create({1, 4, 1}, {1.0, 2.0, 0.5, -1.0});
  auto shift = Tensor::create({1, 4, 1}, {0.1, -0.2, 0.3, 0.4});
  auto y = layernorm(x, gain, shift);
  for (int64_t c = 0; c < 4; ++c) {
    for (int64_t u = 0; u < 2; ++u) {
      CHECK(y->at(0, c, u) == doctest::Approx(shift->data[c]));
    }
  }
}

TEST_CASE("layernorm gradients match finite differences") {
  SplitMix64 rng(29);
  auto x = randn(rng, {2, 5, 3});
  auto gain = randn(rng, {1, 5, 1}, 0.5, 1.5);
  auto shift = randn(rng, {1, 5, 1});
  auto mixer = randn(rng, {1, 2, 5});
  auto build = [&] { return sum(linear(layernorm(x, gain, shift), mixer, nullptr)); };
  CHECK(oracles::check_gradients(build, {x, gain, shift}).ok());
}

TEST_CASE("concat then slice recovers the inputs exactly") {
  SplitMix64 rng(31);
  auto a = randn(rng, {2, 3, 4});
  auto b = randn(rng, {2, 1, 4});
  auto c = randn(rng, {2, 5, 4});
  auto cat = concat({a, b, c});
  REQUIRE(cat->shape == Shape{2, 9, 4});
  auto sa = slice(cat, Axis::channel, 0, 3);
  auto sb = slice(cat, Axis::channel, 3, 1);
  auto sc = slice(cat, Axis::channel, 4, 5);
  CHECK(sa->data == a->data);
  CHECK(sb->data == b->data);
  CHECK(sc->data == c->data);
}

TEST_CASE("concat and slice route gradients") {
  SplitMix64 rng(37);
  auto a = randn(rng, {1, 2, 3});
  auto b = randn(rng, {1, 3, 3});
  auto mixer = randn(rng, {1, 2, 4});
  auto build = [&] {
    auto cat = concat({a, b});
    return sum(linear(sigmoid(slice(cat, Axis::channel, 1, 4)), mixer, nullptr));
  };
  CHECK(oracles::check_gradients(build, {a, b}).ok());
}

TEST_CASE("time_gram and time_mix gradients match finite differences") {
  SplitMix64 rng(41);
  auto q = randn(rng, {2, 4, 5});
  auto k = randn(rng, {2, 4, 5});
  auto v = randn(rng, {2, 4, 5});
  auto build = [&] {
    auto scores = time_gram(q, k, 0.5);
    auto attw = softmax(scores, Axis::channel);
    return sum(sigmoid(time_mix(v, attw)));
  };
  CHECK(oracles::check_gradients(build, {q, k, v}).ok());
}

TEST_CASE("gate_mix blends and differentiates") {
  SplitMix64 rng(43);
  auto a = randn(rng, {1, 3, 4});
  auto b = randn(rng, {1, 3, 4});
  auto alpha = Tensor::scalar(0.8);
  auto build = [&] { return sum(sigmoid(gate_mix(a, b, alpha))); };
  CHECK(oracles::check_gradients(build, {a, b, alpha}).ok());

  // alpha = 0 gives an exact 0.5/0.5 blend
  auto mid = gate_mix(a, b, Tensor::scalar(0.0));
  for (size_t i = 0; i < a->data.size(); ++i) {
    CHECK(mid->data[i] == doctest::Approx(0.5 * a->data[i] + 0.5 * b->data[i]));
  }
}

TEST_CASE("bce_loss analytic values") {
  auto half = Tensor::create({1, 1, 1}, {0.5});
  auto one = Tensor::create({1, 1, 1}, {1.0});
  CHECK(bce_loss(half, one)->data[0] == doctest::Approx(std::log(2.0)));
  // soft-target minimum is ln 2, not zero
  CHECK(bce_loss(half, half)->data[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("bce_loss gradients match finite differences (with and without weights)") {
  SplitMix64 rng(47);
  auto pred = randn(rng, {1, 2, 6}, 0.05, 0.95);
  auto target = randn(rng, {1, 2, 6}, 0.0, 1.0);
  auto weights = randn(rng, {1, 2, 6}, 0.1, 2.0);
  auto build_plain = [&] { return bce_loss(pred, target); };
  CHECK(oracles::check_gradients(build_plain, {pred}).ok());
  auto build_weighted = [&] { return bce_loss(pred, target, weights); };
  CHECK(oracles::check_gradients(build_weighted, {pred}).ok());
}

TEST_CASE("bce_loss rejects shape mismatch and bad targets") {
  auto p = Tensor::create({1, 1, 3}, {0.5, 0.5, 0.5});
  auto t_bad_shape = Tensor::create({1, 1, 2}, {1, 0});
  CHECK_THROWS_AS(bce_loss(p, t_bad_shape), Error);
  auto t_bad_range = Tensor::create({1, 1, 3}, {0.0, 1.5, 0.0});
  CHECK_THROWS_AS(bce_loss(p, t_bad_range), Error);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  Parameter p("p", Tensor::create({1, 1, 3}, {1.0, -2.0, 3.0}), true);
  const std::vector<double> before = p.value->data;
  p.value->zero_grad();
  adam_step({&p});
  CHECK(p.value->data == before);
}

TEST_CASE("adam: first step moves by lr in the gradient sign direction") {
  Parameter p("p", Tensor::create({1, 1, 2}, {0.0, 0.0}), true);
  p.value->grad = {0.3, -1.7};
  adam_step({&p}, {.lr = 1e-3});
  CHECK(p.value->data[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(p.value->data[1] == doctest::Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("adam: frozen parameters stay bit-identical") {
  Parameter frozen("w", Tensor::create({1, 1, 2}, {0.5, -0.5}), false);
  const std::vector<double> before = frozen.value->data;
  frozen.value->grad = {10.0, 10.0};  // even a populated grad must be ignored
  adam_step({&frozen});
  CHECK(frozen.value->data == before);
}

TEST_CASE("adam: trainable parameter without a gradient is a contract violation") {
  Parameter p("p", Tensor::create({1, 1, 1}, {1.0}), true);
  CHECK_THROWS_AS(adam_step({&p}), Error);
}

TEST_CASE("ops are deterministic across repeated evaluation") {
  SplitMix64 rng(53);
  auto x = randn(rng, {1, 4, 16});
  auto w = randn(rng, {4, 4, 3});
  auto first = conv1d(x, w, nullptr, 3, Axis::time);
  auto second = conv1d(x, w, nullptr, 3, Axis::time);
  CHECK(first->data == second->data);
  auto s1 = softmax(x, Axis::time);
  auto s2 = softmax(x, Axis::time);
  CHECK(s1->data == s2->data);
}

TEST_CASE("no graph is built when gradients are disabled or unneeded") {
  SplitMix64 rng(59);
  auto x = randn(rng, {1, 2, 4});
  auto w = randn(rng, {1, 3, 2});
  auto y_plain = linear(x, w, nullptr);
  CHECK_FALSE(y_plain->requires_grad);
  CHECK(y_plain->parents.empty());

  x->requires_grad = true;
  auto y_tracked = linear(x, w, nullptr);
  CHECK(y_tracked->requires_grad);
  {
    NoGradGuard guard;
    auto y_disabled = linear(x, w, nullptr);
    CHECK_FALSE(y_disabled->requires_grad);
  }
}
