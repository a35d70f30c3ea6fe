#include <doctest.h>

#include <cmath>

#include "svrdqn/finite_diff.hpp"
#include "svrdqn/qlearner.hpp"

using namespace svrdqn;

namespace {

Transition make_tr(std::vector<double> s, std::size_t a, double r, std::vector<double> s2,
                   bool terminal) {
  return Transition{std::move(s), a, r, std::move(s2), terminal};
}

// 1-input linear net with two outputs fixed to the given Q pair on input {1}
MlpNetwork two_action_net(double q0, double q1) {
  MlpNetwork net({1, 2}, std::vector<Activation>{});
  auto w = net.weights().block(0);
  w[0] = q0;
  w[1] = q1;
  return net;
}

QLearner random_learner(std::uint64_t seed, std::size_t state_dim = 3, std::size_t actions = 2) {
  Rng rng(seed);
  MlpNetwork net = MlpNetwork::glorot_init({state_dim, 6, actions}, Activation::Tanh, rng);
  QLearner learner(std::move(net), 0.9, 1000);
  // desynchronize the target so the two targets differ
  Rng rng2(seed + 1);
  MlpNetwork other = MlpNetwork::glorot_init({state_dim, 6, actions}, Activation::Tanh, rng2);
  learner.target.set_weights(other.weights());
  return learner;
}

}  // namespace

TEST_CASE("replay buffer: capacity, eviction order, naive-slice oracle") {
  ReplayBuffer buf(2);
  buf.push(make_tr({0.0}, 0, 1.0, {1.0}, false));
  CHECK(buf.size() == 1);
  buf.push(make_tr({1.0}, 0, 2.0, {2.0}, false));
  buf.push(make_tr({2.0}, 0, 3.0, {3.0}, false));
  CHECK(buf.size() == 2);
  CHECK(buf.oldest(0).reward == 2.0);  // first push evicted
  CHECK(buf.oldest(1).reward == 3.0);

  // 1000 pushes into capacity 128: contents are exactly the last 128 in order
  ReplayBuffer big(128);
  std::vector<double> rewards;
  for (int i = 0; i < 1000; ++i) {
    big.push(make_tr({0.0}, 0, static_cast<double>(i), {0.0}, false));
    rewards.push_back(static_cast<double>(i));
  }
  const std::vector<double> last(rewards.end() - 128, rewards.end());
  REQUIRE(big.size() == 128);
  for (std::size_t k = 0; k < 128; ++k) CHECK(big.oldest(k).reward == last[k]);

  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("replay buffer sampling: single item, reproducibility, uniformity") {
  ReplayBuffer buf(8);
  buf.push(make_tr({1.0}, 0, 42.0, {1.0}, true));
  Rng rng(3);
  const auto fives = buf.sample(5, rng);
  CHECK(fives.size() == 5);
  for (const auto& tr : fives) CHECK(tr.reward == 42.0);

  ReplayBuffer empty(4);
  Rng r2(1);
  CHECK_THROWS_AS(empty.sample(1, r2), std::runtime_error);

  // fixed seed reproducibility
  ReplayBuffer ten(16);
  for (int i = 0; i < 10; ++i) ten.push(make_tr({0.0}, 0, i, {0.0}, false));
  Rng ra(9), rb(9);
  const auto sa = ten.sample(50, ra);
  const auto sb = ten.sample(50, rb);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].reward == sb[i].reward);

  // chi-square uniformity over 1e5 draws, 10 items, df=9, 99% critical 21.666
  Rng rc(123);
  std::array<std::size_t, 10> counts{};
  const std::size_t draws = 100000;
  const auto sample = ten.sample(draws, rc);
  for (const auto& tr : sample) counts[static_cast<std::size_t>(tr.reward)] += 1;
  const double expected = static_cast<double>(draws) / 10.0;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 21.665994333461924);
}

TEST_CASE("dqn target") {
  QLearner learner(two_action_net(1.0, 3.0), 0.5, 10);

  // gamma = 0: target is the reward
  QLearner gamma0(two_action_net(5.0, -1.0), 0.0, 10);
  CHECK(dqn_target(gamma0, make_tr({1.0}, 0, 2.5, {1.0}, false)) == 2.5);

  CHECK(dqn_target(learner, make_tr({1.0}, 0, 7.0, {1.0}, true)) == 7.0);

  // Q(s', .) = [1, 3], r = 1, gamma = 0.5 -> 1 + 0.5 * 3 = 2.5
  CHECK(dqn_target(learner, make_tr({1.0}, 0, 1.0, {1.0}, false)) == doctest::Approx(2.5));
}

TEST_CASE("double-q target: selection by online, evaluation by target") {
  // online prefers a=0 ([5,4]); target values are [1,9]; r=0, gamma=1
  QLearner learner(two_action_net(5.0, 4.0), 1.0, 10);
  learner.target.set_weights(two_action_net(1.0, 9.0).weights());
  const Transition tr = make_tr({1.0}, 0, 0.0, {1.0}, false);
  CHECK(double_q_target(learner, tr) == doctest::Approx(1.0));
  CHECK(dqn_target(learner, tr) == doctest::Approx(9.0));

  QLearner gamma0(two_action_net(5.0, 4.0), 0.0, 10);
  gamma0.target.set_weights(two_action_net(1.0, 9.0).weights());
  CHECK(double_q_target(gamma0, make_tr({1.0}, 1, -2.0, {1.0}, false)) == -2.0);

  // just after sync the two targets coincide on every transition
  QLearner synced = random_learner(8);
  target_sync(synced);
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<double> s2{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Transition t = make_tr(s, rng.next_below(2), rng.uniform(-1, 1), s2, false);
    CHECK(double_q_target(synced, t) == dqn_target(synced, t));
  }
}

TEST_CASE("bellman loss: exact network gives zero loss and zero gradients") {
  // target net values zero, gamma arbitrary; online net predicting exactly r
  MlpNetwork online({1, 2}, std::vector<Activation>{});
  auto w = online.weights().block(0);
  w[0] = 2.0;  // Q(s=1, a=0) = 2
  w[1] = -1.0;
  QLearner learner(online, 0.9, 10);
  learner.target.set_weights(MlpNetwork({1, 2}, std::vector<Activation>{}).weights());

  std::vector<Transition> batch{make_tr({1.0}, 0, 2.0, {1.0}, true),
                                make_tr({1.0}, 1, -1.0, {1.0}, true)};
  const BellmanBatch out = bellman_loss_and_grads(learner, batch, TargetRule::Dqn);
  CHECK(out.loss == 0.0);
  for (const auto& g : out.per_sample)
    for (double x : g.values()) CHECK(x == 0.0);
}

TEST_CASE("bellman gradients match finite differences with frozen targets") {
  for (auto rule : {TargetRule::Dqn, TargetRule::DoubleQ}) {
    QLearner learner = random_learner(17);
    Rng rng(23);
    std::vector<Transition> batch;
    for (int i = 0; i < 6; ++i) {
      std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      std::vector<double> s2{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      batch.push_back(make_tr(s, rng.next_below(2), rng.uniform(-1, 1), s2, i % 5 == 4));
    }
    const BellmanBatch out = bellman_loss_and_grads(learner, batch, rule);

    // semi-gradient: targets are constants w.r.t. the online weights
    const std::vector<double> targets = out.targets;
    auto loss = [&](const ParamVector& w) {
      CompensatedSum acc;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto q = learner.online.forward_with(w, batch[k].state);
        const double r = targets[k] - q[batch[k].action];
        acc.add(r * r);
      }
      return acc.value() / static_cast<double>(batch.size());
    };
    const Gradient fd = finite_difference_gradient(loss, learner.online.weights());
    const ParamVector mean = mean_in_order(out.per_sample);
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double tol = std::max(1e-7, 1e-5 * std::max(std::abs(fd.v[j]), std::abs(mean[j])));
      CHECK(std::abs(fd.v[j] - mean[j]) <= tol);
    }

    // perturbing the target net changes targets but not the gradient formula:
    // gradients at the same parameters with the same frozen targets are equal
    QLearner perturbed = learner;
    auto tw = perturbed.target.weights().values();
    for (auto& x : tw) x += 0.37;
    const BellmanBatch out2 = bellman_loss_and_grads(perturbed, batch, rule);
    CHECK(out2.targets != out.targets);
  }
}

TEST_CASE("epsilon-greedy") {
  Rng rng(1);
  const std::vector<double> q{1.0, 7.0, 3.0};
  CHECK(epsilon_greedy_action(q, 0.0, rng) == 1);
  const std::vector<double> tie{5.0, 5.0};
  CHECK(epsilon_greedy_action(tie, 0.0, rng) == 0);

  // eps = 1: uniform over 3 actions, chi-square df=2 at 99% -> 9.2103
  std::array<std::size_t, 3> counts{};
  Rng r2(77);
  for (int i = 0; i < 100000; ++i) counts[epsilon_greedy_action(q, 1.0, r2)] += 1;
  const double expected = 100000.0 / 3.0;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 9.21034037197618);

  CHECK_THROWS_AS(epsilon_greedy_action(std::span<const double>{}, 0.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(epsilon_greedy_action(q, 1.5, rng), std::invalid_argument);
}

TEST_CASE("target sync: bit-exact copy, idempotent, periodic in the training loop") {
  QLearner learner = random_learner(4);
  CHECK_FALSE(learner.target.weights() == learner.online.weights());
  target_sync(learner);
  CHECK(learner.target.weights() == learner.online.weights());
  const ParamVector snap = learner.target.weights();
  target_sync(learner);
  CHECK(learner.target.weights() == snap);

  // sync every k completed iterations
  Rng rng(10);
  MlpNetwork net = MlpNetwork::glorot_init({2, 4, 2}, Activation::Relu, rng);
  QLearner q(std::move(net), 0.9, 3);
  target_sync(q);
  AdamState adam = AdamState::zero_like(q.online.weights(), {0.01, 0.9, 0.999, 1e-8});
  const SvrgConfig svrg = SvrgConfig::validated(4, 2, 2, 0.05);
  ReplayBuffer buf(32);
  Rng data_rng(6);
  for (int i = 0; i < 16; ++i)
    buf.push(make_tr({data_rng.uniform01(), data_rng.uniform01()}, data_rng.next_below(2),
                     data_rng.uniform(-1, 1), {data_rng.uniform01(), data_rng.uniform01()},
                     i % 4 == 3));
  Rng train_rng(15);
  for (int it = 1; it <= 9; ++it) {
    const ParamVector before = q.target.weights();
    const auto loss = train_iteration(q, buf, OptimizerKind::AdamBaseline, svrg, adam,
                                      TargetRule::DoubleQ, train_rng);
    REQUIRE(loss.has_value());
    const bool target_changed = !(q.target.weights() == before);
    CHECK(target_changed == (it % 3 == 0));
  }
}

TEST_CASE("epsilon schedule") {
  const EpsilonSchedule s(1.0, 0.1, 100);
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(100) == 0.1);
  CHECK(s.at(5000) == 0.1);
  double prev = s.at(0);
  for (std::size_t t = 1; t <= 150; ++t) {
    CHECK(s.at(t) <= prev + 1e-15);
    prev = s.at(t);
  }
  CHECK(s.at(50) == doctest::Approx(0.55));
  CHECK_THROWS_AS(EpsilonSchedule(0.1, 0.5, 10), std::invalid_argument);
  CHECK_THROWS_AS(EpsilonSchedule(1.0, 0.1, 0), std::invalid_argument);
}

TEST_CASE("train iteration: skip signal on a short buffer") {
  QLearner learner = random_learner(2, 2, 2);
  AdamState adam = AdamState::zero_like(learner.online.weights());
  const SvrgConfig svrg = SvrgConfig::validated(8, 2, 4, 0.05);
  ReplayBuffer buf(64);
  buf.push(make_tr({1.0, 0.0}, 0, 0.0, {0.0, 1.0}, false));
  Rng rng(1);
  const auto r =
      train_iteration(learner, buf, OptimizerKind::SvrDqn, svrg, adam, TargetRule::DoubleQ, rng);
  CHECK_FALSE(r.has_value());
}

TEST_CASE("train iteration: deterministic and divergent across optimizer paths") {
  auto run_path = [](OptimizerKind kind, std::uint64_t seed) {
    Rng init(33);
    MlpNetwork net = MlpNetwork::glorot_init({2, 8, 2}, Activation::Relu, init);
    QLearner learner(std::move(net), 0.9, 1000);
    AdamState adam = AdamState::zero_like(learner.online.weights(), {0.01, 0.9, 0.999, 1e-8});
    const SvrgConfig svrg = SvrgConfig::validated(8, 2, 4, 0.05);
    ReplayBuffer buf(64);
    Rng data_rng(44);
    for (int i = 0; i < 32; ++i)
      buf.push(make_tr({data_rng.uniform01(), data_rng.uniform01()}, data_rng.next_below(2),
                       data_rng.uniform(-1, 1), {data_rng.uniform01(), data_rng.uniform01()},
                       i % 6 == 5));
    Rng rng(seed);
    std::vector<double> losses;
    for (int it = 0; it < 10; ++it) {
      const auto step =
          train_iteration(learner, buf, kind, svrg, adam, TargetRule::DoubleQ, rng);
      losses.push_back(step->loss);
      if (kind == OptimizerKind::SvrDqn) {
        CHECK(step->anchor_grad.has_value());
        CHECK(step->surrogate.has_value());
      }
    }
    return std::pair(losses, learner.online.weights());
  };

  const auto a1 = run_path(OptimizerKind::SvrDqn, 5);
  const auto a2 = run_path(OptimizerKind::SvrDqn, 5);
  CHECK(a1.first == a2.first);
  CHECK(a1.second == a2.second);

  const auto b = run_path(OptimizerKind::AdamBaseline, 5);
  CHECK_FALSE(a1.second == b.second);
}

TEST_CASE("train iteration: two-action bandit converges to the rewarding arm") {
  for (auto kind : {OptimizerKind::AdamBaseline, OptimizerKind::SvrDqn}) {
    Rng init(12);
    MlpNetwork net = MlpNetwork::glorot_init({1, 8, 2}, Activation::Relu, init);
    QLearner learner(std::move(net), 0.9, 100);
    AdamState adam = AdamState::zero_like(learner.online.weights(), {0.01, 0.9, 0.999, 1e-8});
    const SvrgConfig svrg = SvrgConfig::validated(16, 4, 4, 0.05);

    ReplayBuffer buf(256);
    Rng behavior(3);
    for (int i = 0; i < 128; ++i) {
      const std::size_t a = behavior.next_below(2);
      buf.push(make_tr({1.0}, a, a == 1 ? 1.0 : 0.0, {1.0}, true));
    }
    Rng rng(71);
    for (int it = 0; it < 500; ++it)
      (void)train_iteration(learner, buf, kind, svrg, adam, TargetRule::DoubleQ, rng);

    const std::vector<double> q = learner.online.forward(std::vector<double>{1.0});
    CHECK(q[1] > q[0]);
    CHECK(q[1] == doctest::Approx(1.0).epsilon(0.25));
  }
}
