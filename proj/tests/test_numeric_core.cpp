#include <doctest.h>

#include <cmath>

#include "svrdqn/batch_kernels.hpp"
#include "svrdqn/finite_diff.hpp"
#include "svrdqn/mlp.hpp"
#include "svrdqn/reference.hpp"
#include "svrdqn/rng.hpp"

using namespace svrdqn;

namespace {

ParamVector flat(std::vector<double> xs) {
  const std::size_t n = xs.size();
  return ParamVector(std::move(xs), {BlockShape{n, 1}});
}

// gradient check tolerance: max(1e-5 relative, 1e-7 absolute)
void check_close_grad(const ParamVector& analytic, const ParamVector& numeric) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    const double a = analytic[j];
    const double n = numeric[j];
    const double tol = std::max(1e-7, 1e-5 * std::max(std::abs(a), std::abs(n)));
    CHECK(std::abs(a - n) <= tol);
  }
}

}  // namespace

TEST_CASE("param vector: layout, blocks, flatten round-trip") {
  ParamVector v({BlockShape{2, 3}, BlockShape{2, 1}});
  CHECK(v.size() == 8);
  CHECK(v.block(0).size() == 6);
  CHECK(v.block(1).size() == 2);
  CHECK(v.block_offset(1) == 6);

  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) - 0.3;

  // flatten(unflatten(v)) == v, bit-equal: rebuild from the block views
  std::vector<double> data;
  for (std::size_t b = 0; b < v.block_count(); ++b)
    for (double x : v.block(b)) data.push_back(x);
  ParamVector rebuilt(data, v.layout());
  CHECK(rebuilt == v);

  CHECK(v.all_finite());
  v[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(v.all_finite());

  CHECK_THROWS_AS(ParamVector({1.0, 2.0}, {BlockShape{3, 1}}), std::invalid_argument);
}

TEST_CASE("rng: determinism, serialization, bounded draws") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  const auto snap = a.state();
  std::vector<std::uint64_t> tail;
  for (int i = 0; i < 16; ++i) tail.push_back(a.next_u64());
  Rng c(0);
  c.set_state(snap);
  for (int i = 0; i < 16; ++i) CHECK(c.next_u64() == tail[static_cast<std::size_t>(i)]);

  Rng d(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(d.next_below(10) < 10);
  }

  auto ids = d.sample_without_replacement(20, 10);
  CHECK(ids.size() == 10);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  CHECK_THROWS_AS(d.sample_without_replacement(3, 5), std::invalid_argument);
}

TEST_CASE("mlp forward: identity layer and zero weights") {
  // single linear layer, weights = identity, bias 0
  MlpNetwork net({2, 2}, std::vector<Activation>{});
  auto w = net.weights().block(0);
  w[0] = 1.0;
  w[3] = 1.0;
  const std::vector<double> out = net.forward(std::vector<double>{1.0, 2.0});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);

  MlpNetwork zero({3, 4, 2}, std::vector<Activation>{Activation::Relu});
  const std::vector<double> z = zero.forward(std::vector<double>{0.5, -1.0, 2.0});
  CHECK(z == std::vector<double>{0.0, 0.0});

  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("mlp forward matches the naive triple-loop oracle") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    MlpNetwork net = MlpNetwork::glorot_init({2, 3, 2}, Activation::Tanh, rng);
    std::vector<double> input{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto got = net.forward(input);
    const auto want = reference::naive_mlp_forward(net, input);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("mlp forward is pure") {
  Rng rng(5);
  MlpNetwork net = MlpNetwork::glorot_init({4, 8, 3}, Activation::Relu, rng);
  std::vector<double> input{0.3, -0.2, 0.9, 0.0};
  CHECK(net.forward(input) == net.forward(input));
}

TEST_CASE("mlp backward: zero upstream and linear analytic case") {
  Rng rng(11);
  MlpNetwork net = MlpNetwork::glorot_init({3, 5, 2}, Activation::Relu, rng);
  Gradient g = net.backward(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{0.0, 0.0});
  for (double x : g.v.values()) CHECK(x == 0.0);
  CHECK(g.source == GradSource::SingleSample);

  // 1-layer linear net, upstream e_k: gradient of row k equals the input
  MlpNetwork lin({3, 2}, std::vector<Activation>{});
  auto lw = lin.weights().block(0);
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = 0.1 * static_cast<double>(i);
  const std::vector<double> input{1.0, -2.0, 0.5};
  Gradient gk = lin.backward(input, std::vector<double>{0.0, 1.0});
  auto grow = gk.v.block(0);
  CHECK(grow[0] == 0.0);
  CHECK(grow[1] == 0.0);
  CHECK(grow[2] == 0.0);
  CHECK(grow[3] == 1.0);
  CHECK(grow[4] == -2.0);
  CHECK(grow[5] == 0.5);
  auto gbias = gk.v.block(1);
  CHECK(gbias[0] == 0.0);
  CHECK(gbias[1] == 1.0);
}

TEST_CASE("mlp backward matches central finite differences on random nets") {
  // tanh is smooth; relu checked at points away from kinks via the loss below
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed * 31 + 7);
    MlpNetwork net = MlpNetwork::glorot_init({4, 8, 3}, Activation::Tanh, rng);
    std::vector<double> input(4), upstream(3);
    for (auto& x : input) x = rng.uniform(-1, 1);
    for (auto& u : upstream) u = rng.uniform(-1, 1);

    const Gradient analytic = net.backward(input, upstream);
    auto loss = [&](const ParamVector& w) {
      const auto out = net.forward_with(w, input);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
      return s;
    };
    const Gradient numeric = finite_difference_gradient(loss, net.weights());
    check_close_grad(analytic.v, numeric.v);
  }
}

TEST_CASE("finite differences: quadratic and constant losses") {
  const ParamVector w = flat({3.0, -1.0});
  auto half_sq = [](const ParamVector& v) { return 0.5 * v.squared_norm(); };
  const Gradient g = finite_difference_gradient(half_sq, w);
  CHECK(g.v[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(g.v[1] == doctest::Approx(-1.0).epsilon(1e-8));

  auto constant = [](const ParamVector&) { return 4.2; };
  const Gradient gz = finite_difference_gradient(constant, w);
  CHECK(gz.v[0] == 0.0);
  CHECK(gz.v[1] == 0.0);

  CHECK_THROWS_AS(finite_difference_gradient(half_sq, w, 0.0), std::invalid_argument);
  auto bad = [](const ParamVector&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(finite_difference_gradient(bad, w), std::runtime_error);
}

TEST_CASE("weight init stays within the fan bound, biases zero") {
  Rng rng(3);
  MlpNetwork net = MlpNetwork::glorot_init({8, 16, 2}, Activation::Relu, rng);
  const double bound0 = std::sqrt(6.0 / (8 + 16));
  for (double x : net.weights().block(0)) {
    CHECK(std::abs(x) <= bound0);
  }
  for (double b : net.weights().block(1)) CHECK(b == 0.0);
  for (double b : net.weights().block(3)) CHECK(b == 0.0);
}

TEST_CASE("batch kernels match the serial reference and are thread-count invariant") {
  Rng rng(17);
  MlpNetwork net = MlpNetwork::glorot_init({4, 8, 2}, Activation::Relu, rng);
  std::vector<std::vector<double>> inputs(64, std::vector<double>(4));
  for (auto& in : inputs)
    for (auto& x : in) x = rng.uniform(-1, 1);

  auto grad_fn = [&](std::size_t id, const ParamVector& w, ParamVector& out) {
    std::vector<double> upstream{1.0, -0.5};
    out = net.backward_with(w, inputs[id], upstream).v;
  };

  std::vector<std::size_t> ids(inputs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;

  const ParamVector parallel = mean_gradient(grad_fn, net.weights(), ids, net.weights());
  const auto serial_slots =
      reference::naive_per_sample_gradients(grad_fn, net.weights(), ids, net.weights());
  const ParamVector serial = reference::naive_mean(serial_slots);

  for (std::size_t j = 0; j < parallel.size(); ++j)
    CHECK(parallel[j] == doctest::Approx(serial[j]).epsilon(1e-12));

  // slot-filled map: per-sample results identical to the serial ones bit-for-bit
  std::vector<ParamVector> slots;
  per_sample_gradients(grad_fn, net.weights(), ids, net.weights(), slots);
  for (std::size_t k = 0; k < slots.size(); ++k) CHECK(slots[k] == serial_slots[k]);
}

TEST_CASE("compensated mean is exact on adversarial magnitudes") {
  std::vector<ParamVector> grads;
  grads.push_back(flat({1e16}));
  grads.push_back(flat({1.0}));
  grads.push_back(flat({-1e16}));
  grads.push_back(flat({1.0}));
  const ParamVector mean = mean_in_order(grads);
  CHECK(mean[0] == 0.5);
  CHECK_THROWS_AS(mean_in_order(std::span<const ParamVector>{}), std::invalid_argument);
}
