#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gild/rl_core.hpp"
#include "oracles.hpp"

using gild::Agent;
using gild::AlgoConfig;
using gild::ParamSet;
using gild::Tape;
using gild::Tensor;
using gild::Var;

namespace {

Agent make(gild::Algo algo, std::size_t sdim, std::size_t adim, std::vector<std::size_t> hidden, double bound,
           std::uint64_t seed, gild::OptimizerKind opt = gild::OptimizerKind::Sgd, double lr = 1e-2) {
  AlgoConfig cfg;
  cfg.algo = algo;
  cfg.optimizer = opt;
  cfg.lr = lr;
  gild::RngStream rng(seed);
  return gild::make_agent(cfg, sdim, adim, hidden, bound, rng);
}

// Final layer zero, bias `value`: the network outputs `value` everywhere.
void make_constant(ParamSet& p, const std::vector<double>& value) {
  Tensor& w = p[p.count() - 2];
  Tensor& b = p[p.count() - 1];
  w = Tensor(w.rows(), w.cols(), 0.0);
  for (std::size_t j = 0; j < b.cols(); ++j) b(0, j) = value[j];
}

void jitter(ParamSet& p, gild::RngStream& rng, double k = 0.3) {
  for (std::size_t i = 0; i < p.count(); ++i) {
    for (auto& v : p[i].data()) v += rng.uniform(-k, k);
  }
}

gild::Batch random_batch(std::size_t n, std::size_t sdim, std::size_t adim, double bound, gild::RngStream& rng) {
  gild::Batch b;
  b.states = oracle::random_tensor(n, sdim, rng);
  b.actions = oracle::random_tensor(n, adim, rng, -bound, bound);
  b.rewards = oracle::random_tensor(n, 1, rng);
  b.next_states = oracle::random_tensor(n, sdim, rng);
  b.dones = Tensor(n, 1);
  for (std::size_t r = 0; r < n; ++r) b.dones(r, 0) = rng.uniform() < 0.2 ? 1.0 : 0.0;
  return b;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

TEST_CASE("AlgoConfig defaults and validation") {
  const AlgoConfig cfg;
  CHECK(cfg.lr == 3e-4);
  CHECK(cfg.gamma == 0.99);
  CHECK(cfg.tau == 5e-3);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.expl_noise == 0.2);
  CHECK(cfg.policy_noise == 0.2);
  CHECK(cfg.noise_clip == 0.5);
  CHECK(cfg.policy_delay == 2);
  CHECK(cfg.alpha_ent == 0.2);
  CHECK(cfg.target_interval == 2);
  CHECK(cfg.beta == 2.5);
  CHECK(cfg.w_il == 1.0);
  AlgoConfig bad;
  bad.policy_delay = 0;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.tau = 0.0;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(gild::algo_from_string("ppo"));
  CHECK(gild::algo_from_string(gild::to_string(gild::Algo::Sac)) == gild::Algo::Sac);
}

TEST_CASE("agent layout per algorithm") {
  CHECK(make(gild::Algo::Ddpg, 2, 2, {8}, 1.0, 1).critic_count() == 1);
  CHECK(make(gild::Algo::Td3, 2, 2, {8}, 1.0, 1).critic_count() == 2);
  const Agent sac = make(gild::Algo::Sac, 2, 2, {8}, 1.0, 1);
  CHECK(sac.critic_count() == 2);
  CHECK(sac.actor.kind == gild::PolicyKind::Gaussian);
  CHECK(sac.actor_target.count() == 0);
}

TEST_CASE("select_action examples") {
  Agent agent = make(gild::Algo::Td3, 2, 2, {16}, 0.1, 2);
  gild::RngStream rng(3);
  const std::vector<double> s{0.3, -0.2};
  const Tensor phi_s = gild::actor_act(agent.actor, Tensor::row(s));
  const auto exploit = gild::select_action(agent, s, gild::ActionMode::Exploit, rng);
  CHECK(exploit == std::vector<double>(phi_s.data().begin(), phi_s.data().end()));

  agent.cfg.expl_noise = 0.0;
  CHECK(gild::select_action(agent, s, gild::ActionMode::Explore, rng) == exploit);

  make_constant(agent.actor.params, {std::atanh(0.99), std::atanh(0.99)});
  agent.cfg.expl_noise = 100.0;
  int at_bound = 0;
  for (int i = 0; i < 200; ++i) {
    for (double a : gild::select_action(agent, s, gild::ActionMode::Explore, rng)) {
      CHECK(std::abs(a) <= 0.1);
      if (a == 0.1) ++at_bound;
    }
  }
  CHECK(at_bound > 0);
}

TEST_CASE("SAC select_action: exploit is the squashed mean, explore samples in bounds") {
  const Agent agent = make(gild::Algo::Sac, 2, 2, {16}, 0.5, 4);
  gild::RngStream rng(5);
  const std::vector<double> s{0.1, 0.9};
  Tape t;
  const auto heads = gild::gaussian_heads(agent.actor, agent.actor.params.as_constants(t), t.constant(Tensor::row(s)));
  const auto exploit = gild::select_action(agent, s, gild::ActionMode::Exploit, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(exploit[j] == doctest::Approx(0.5 * std::tanh(heads.mean.value()[j])).epsilon(1e-15));
  }
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    const auto a = gild::select_action(agent, s, gild::ActionMode::Explore, rng);
    for (double v : a) CHECK(std::abs(v) <= 0.5);
    differs = differs || a != exploit;
  }
  CHECK(differs);
}

TEST_CASE("property: TD3 target noise stays within the clip") {
  AlgoConfig cfg;
  gild::RngStream rng(6);
  const Tensor scale(1, 2, 1.0);
  const Tensor noise = gild::td3_target_noise(50000, cfg, scale, rng);
  for (double v : noise.data()) CHECK(std::abs(v) <= cfg.noise_clip);

  cfg.policy_noise = 10.0 * 0.2;
  const Tensor wide = gild::td3_target_noise(1000, cfg, scale, rng);
  int clipped = 0;
  for (double v : wide.data()) {
    CHECK(std::abs(v) <= 0.5);
    if (std::abs(v) == 0.5) ++clipped;
  }
  CHECK(clipped > 1000);
}

TEST_CASE("critic update: zero TD error leaves the critic unchanged") {
  Agent agent = make(gild::Algo::Ddpg, 1, 1, {4}, 1.0, 7);
  agent.cfg.gamma = 0.0;
  make_constant(agent.critics[0].params, {1.0});
  const ParamSet before = agent.critics[0].params;
  gild::Batch b;
  b.states = Tensor(1, 1, 0.4);
  b.actions = Tensor(1, 1, -0.3);
  b.rewards = Tensor(1, 1, 1.0);
  b.next_states = Tensor(1, 1, 0.5);
  b.dones = Tensor(1, 1, 0.0);
  gild::RngStream rng(1);
  CHECK(gild::critic_update(agent, b, rng) == 0.0);
  CHECK(agent.critics[0].params == before);
}

TEST_CASE("critic update with gamma 0 is a regression step toward the reward") {
  gild::RngStream rng(8);
  for (auto algo : {gild::Algo::Ddpg, gild::Algo::Td3, gild::Algo::Sac}) {
    Agent agent = make(algo, 3, 2, {8, 8}, 1.0, 9);
    agent.cfg.gamma = 0.0;
    for (auto& c : agent.critics) jitter(c.params, rng, 0.1);
    const gild::Batch b = random_batch(16, 3, 2, 1.0, rng);
    std::vector<ParamSet> expected;
    for (const auto& c : agent.critics) {
      const auto loss = [&](const ParamSet& p) {
        double acc = 0.0;
        const Tensor q = gild::mlp_eval(c.spec, p, gild::concat_cols(std::vector<Tensor>{b.states, b.actions}));
        for (std::size_t r = 0; r < 16; ++r) acc += (q(r, 0) - b.rewards(r, 0)) * (q(r, 0) - b.rewards(r, 0));
        return acc / 16.0;
      };
      ParamSet e = c.params;
      gild::axpy(e, -agent.cfg.lr, oracle::fd_gradient(loss, c.params));
      expected.push_back(e);
    }
    gild::RngStream noise(2);
    gild::critic_update(agent, b, noise);
    for (std::size_t i = 0; i < agent.critic_count(); ++i) {
      CHECK(oracle::close(agent.critics[i].params, expected[i], 1e-6, 1e-12));
    }
  }
}

TEST_CASE("critic update matches a pencil-and-paper gradient on one-unit networks") {
  Agent agent = make(gild::Algo::Ddpg, 1, 1, {1}, 1.0, 10, gild::OptimizerKind::Sgd, 0.1);
  agent.cfg.gamma = 0.9;
  // Actor target: a' = tanh(v2 relu(v1 s' + c1) + c2).
  const double v1 = 0.8, c1 = 0.1, v2 = -0.6, c2 = 0.05;
  agent.actor_target = agent.actor.params;
  agent.actor_target[0](0, 0) = v1;
  agent.actor_target[1](0, 0) = c1;
  agent.actor_target[2](0, 0) = v2;
  agent.actor_target[3](0, 0) = c2;
  // Critic: Q = w2 relu(ws s + wa a + b1) + b2; the target copy differs.
  const double ws = 0.7, wa = -0.4, b1 = 0.2, w2 = 1.3, b2 = -0.1;
  const double ws_t = 0.5, wa_t = 0.3, b1_t = 0.1, w2_t = 0.9, b2_t = 0.2;
  ParamSet& q = agent.critics[0].params;
  q[0](0, 0) = ws;
  q[0](1, 0) = wa;
  q[1](0, 0) = b1;
  q[2](0, 0) = w2;
  q[3](0, 0) = b2;
  ParamSet& qt = agent.critic_targets[0];
  qt[0](0, 0) = ws_t;
  qt[0](1, 0) = wa_t;
  qt[1](0, 0) = b1_t;
  qt[2](0, 0) = w2_t;
  qt[3](0, 0) = b2_t;

  const double s = 0.6, a = 0.25, r = 0.4, s2 = 0.9;
  const double a2 = std::tanh(v2 * relu(v1 * s2 + c1) + c2);
  const double y = r + 0.9 * (w2_t * relu(ws_t * s2 + wa_t * a2 + b1_t) + b2_t);
  const double z = ws * s + wa * a + b1;
  REQUIRE(z > 0.0);
  const double delta = 2.0 * (w2 * z + b2 - y);

  gild::Batch b;
  b.states = Tensor(1, 1, s);
  b.actions = Tensor(1, 1, a);
  b.rewards = Tensor(1, 1, r);
  b.next_states = Tensor(1, 1, s2);
  b.dones = Tensor(1, 1, 0.0);
  gild::RngStream rng(1);
  gild::critic_update(agent, b, rng);
  CHECK(q[0](0, 0) == doctest::Approx(ws - 0.1 * delta * w2 * s).epsilon(1e-14));
  CHECK(q[0](1, 0) == doctest::Approx(wa - 0.1 * delta * w2 * a).epsilon(1e-14));
  CHECK(q[1](0, 0) == doctest::Approx(b1 - 0.1 * delta * w2).epsilon(1e-14));
  CHECK(q[2](0, 0) == doctest::Approx(w2 - 0.1 * delta * z).epsilon(1e-14));
  CHECK(q[3](0, 0) == doctest::Approx(b2 - 0.1 * delta).epsilon(1e-14));
}

TEST_CASE("terminal transitions do not bootstrap") {
  Agent agent = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 11);
  gild::RngStream rng(12);
  gild::Batch b = random_batch(8, 2, 2, 1.0, rng);
  b.dones = Tensor(8, 1, 1.0);
  gild::RngStream noise(3);
  CHECK(gild::critic_targets(agent, b, noise) == b.rewards);
}

TEST_CASE("rl actor loss: a constant critic gives -c and no gradient") {
  Agent agent = make(gild::Algo::Ddpg, 2, 2, {8}, 1.0, 13);
  make_constant(agent.critics[0].params, {3.25});
  gild::RngStream rng(14);
  const Tensor states = oracle::random_tensor(10, 2, rng);
  double loss = 0.0;
  const ParamSet g = gild::rl_actor_grad(agent, agent.actor.params, states, nullptr, &loss);
  CHECK(loss == -3.25);
  CHECK(gild::max_abs(g) == 0.0);
}

TEST_CASE("SAC actor loss is linear in the temperature") {
  Agent agent = make(gild::Algo::Sac, 2, 2, {8}, 1.0, 15);
  gild::RngStream rng(16);
  const Tensor states = oracle::random_tensor(12, 2, rng);
  const Tensor noise = gild::normal_noise(12, 2, rng);
  const auto loss_at = [&](double alpha) {
    agent.cfg.alpha_ent = alpha;
    Tape t;
    const auto phi = agent.actor.params.as_constants(t);
    return gild::rl_actor_loss(agent, t, phi, t.constant(states), &noise).value().item();
  };
  Tape t;
  const auto phi = agent.actor.params.as_constants(t);
  const auto sample = gild::sample_action(agent.actor, phi, t.constant(states), noise);
  const double mean_log_pi = gild::mean(sample.log_prob).value().item();
  const double min_q = gild::mean(gild::critic_for_actor(agent, t, t.constant(states), sample.action)).value().item();

  CHECK(loss_at(0.0) == doctest::Approx(-min_q).epsilon(1e-14));
  CHECK(loss_at(0.7) - loss_at(0.2) == doctest::Approx(0.5 * mean_log_pi).epsilon(1e-10));
  CHECK_THROWS(gild::rl_actor_loss(agent, t, phi, t.constant(states), nullptr));
}

TEST_CASE("a critic peaked at a = 0 pulls the actor toward zero") {
  // Q(s, a) = -(relu(a) + relu(-a)) = -|a|, built from two hidden units.
  Agent agent = make(gild::Algo::Ddpg, 1, 1, {2}, 1.0, 17, gild::OptimizerKind::Sgd, 0.05);
  ParamSet& q = agent.critics[0].params;
  q[0] = Tensor::from_rows({{0.0, 0.0}, {1.0, -1.0}});
  q[1] = Tensor(1, 2, 0.0);
  q[2] = Tensor::from_rows({{-1.0}, {-1.0}});
  q[3] = Tensor(1, 1, 0.0);
  make_constant(agent.actor.params, {0.8});
  const Tensor states = Tensor::from_rows({{0.1}, {-0.4}, {0.7}});
  double prev = std::abs(gild::actor_act(agent.actor, states)[0]);
  for (int i = 0; i < 20; ++i) {
    gild::vanilla_actor_update(agent, states, nullptr);
    const double now = std::abs(gild::actor_act(agent.actor, states)[0]);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("il loss examples") {
  gild::RngStream rng(18);
  const Agent det = make(gild::Algo::Td3, 3, 2, {8}, 0.1, 19);
  gild::DemoBatch d;
  d.states = oracle::random_tensor(5, 3, rng);
  d.actions = gild::actor_act(det.actor, d.states);
  Tape t;
  CHECK(gild::il_loss(det.actor, t, det.actor.params.as_constants(t), d).value().item() == 0.0);

  Agent sac = make(gild::Algo::Sac, 1, 1, {4}, 1.0, 20);
  for (double mu : {0.0, 0.5}) {
    make_constant(sac.actor.params, {mu, 0.0});
    gild::DemoBatch one;
    one.states = Tensor(1, 1, 0.3);
    one.actions = Tensor(1, 1, std::tanh(mu));
    Tape t2;
    const double nll = gild::il_loss(sac.actor, t2, sac.actor.params.as_constants(t2), one).value().item();
    const double th = std::tanh(mu);
    CHECK(nll == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi) + std::log(1.0 - th * th)).epsilon(1e-9));
  }
  CHECK(0.5 * std::log(2.0 * std::numbers::pi) == doctest::Approx(0.9189).epsilon(1e-4));
}

TEST_CASE("il loss gradients match finite differences") {
  gild::RngStream rng(21);
  for (auto algo : {gild::Algo::Td3, gild::Algo::Sac}) {
    for (int trial = 0; trial < 5; ++trial) {
      Agent agent = make(algo, 3, 2, {8, 8}, 0.5, 22 + trial);
      jitter(agent.actor.params, rng, 0.1);
      gild::DemoBatch d;
      d.states = oracle::random_tensor(6, 3, rng);
      d.actions = oracle::random_tensor(6, 2, rng, -0.45, 0.45);
      const gild::ScalarFn fn = [&](Tape& t, std::span<const Var> p) { return gild::il_loss(agent.actor, t, p, d); };
      const auto value = [&](const ParamSet& p) {
        Tape t;
        return fn(t, p.as_constants(t)).value().item();
      };
      CHECK(oracle::close(gild::grad(fn, agent.actor.params), oracle::fd_gradient(value, agent.actor.params), 1e-6));
    }
  }
}

TEST_CASE("ilrl weight examples") {
  Agent agent = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 23);
  const Tensor s(4, 2, 0.1), a(4, 2, 0.2);
  make_constant(agent.critics[0].params, {-2.5});
  CHECK(gild::ilrl_weights(agent, s, a).w_rl == 1.0);
  CHECK(gild::ilrl_weights(agent, s, a).w_il == 1.0);
  make_constant(agent.critics[0].params, {0.0});
  CHECK(gild::ilrl_weights(agent, s, a).w_rl == doctest::Approx(2.5e8).epsilon(1e-15));
  make_constant(agent.critics[0].params, {25.0});
  CHECK(gild::ilrl_weights(agent, s, a).w_rl == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("pseudo update: zero step size, purity and no mutation") {
  gild::RngStream rng(24);
  Agent agent = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 25, gild::OptimizerKind::Adam, 1e-3);
  const gild::Batch b = random_batch(8, 2, 2, 1.0, rng);
  gild::DemoBatch d{oracle::random_tensor(8, 2, rng), oracle::random_tensor(8, 2, rng)};
  const ParamSet before = agent.actor.params;
  const ParamSet p1 = gild::pseudo_update(agent, b, d, nullptr);
  const ParamSet p2 = gild::pseudo_update(agent, b, d, nullptr);
  CHECK(p1 == p2);
  CHECK(agent.actor.params == before);
  CHECK_FALSE(p1 == before);

  // The live optimizer state must be untouched: a real step afterwards
  // equals a real step on an agent that never pseudo-updated.
  Agent fresh = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 25, gild::OptimizerKind::Adam, 1e-3);
  gild::vanilla_actor_update(agent, b.states, nullptr);
  gild::vanilla_actor_update(fresh, b.states, nullptr);
  CHECK(agent.actor.params == fresh.actor.params);

  Agent frozen = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 25, gild::OptimizerKind::Sgd, 0.0);
  CHECK(gild::pseudo_update(frozen, b, d, nullptr) == frozen.actor.params);
}

TEST_CASE("pseudo update with w_rl = 0 is a hand-checkable cloning step") {
  Agent agent = make(gild::Algo::Td3, 1, 1, {1}, 0.5, 26, gild::OptimizerKind::Sgd, 0.1);
  agent.cfg.beta = 0.0;
  ParamSet& p = agent.actor.params;
  const double v1 = 0.9, c1 = 0.2, v2 = 0.7, c2 = -0.1;
  p[0](0, 0) = v1;
  p[1](0, 0) = c1;
  p[2](0, 0) = v2;
  p[3](0, 0) = c2;
  const double s = 0.5, ad = 0.3, scale = 0.5;
  const double h = relu(v1 * s + c1);
  const double th = std::tanh(v2 * h + c2);
  // loss = ((scale th - ad) / scale)^2
  const double dl_dout = 2.0 * (th - ad / scale) * (1.0 - th * th);
  gild::Batch b;
  b.states = Tensor(1, 1, s);
  b.actions = Tensor(1, 1, 0.0);
  b.rewards = Tensor(1, 1, 0.0);
  b.next_states = Tensor(1, 1, s);
  b.dones = Tensor(1, 1, 0.0);
  const gild::DemoBatch d{Tensor(1, 1, s), Tensor(1, 1, ad)};
  const ParamSet hat = gild::pseudo_update(agent, b, d, nullptr);
  CHECK(hat[0](0, 0) == doctest::Approx(v1 - 0.1 * dl_dout * v2 * s).epsilon(1e-14));
  CHECK(hat[1](0, 0) == doctest::Approx(c1 - 0.1 * dl_dout * v2).epsilon(1e-14));
  CHECK(hat[2](0, 0) == doctest::Approx(v2 - 0.1 * dl_dout * h).epsilon(1e-14));
  CHECK(hat[3](0, 0) == doctest::Approx(c2 - 0.1 * dl_dout).epsilon(1e-14));
}

TEST_CASE("Adam step matches the textbook recurrence") {
  ParamSet p;
  p.add("x", Tensor::row({1.0, -2.0}));
  gild::Optimizer opt(gild::OptimizerKind::Adam, 0.1, p);
  double m = 0.0, v = 0.0, x = 1.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * x;
    ParamSet grad;
    grad.add("x", Tensor::row({g, 0.0}));
    opt.step(p, grad);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    CHECK(p[0][0] == doctest::Approx(x).epsilon(1e-15));
    CHECK(p[0][1] == -2.0);
  }
}

TEST_CASE("target sync follows the algorithm") {
  Agent td3 = make(gild::Algo::Td3, 2, 2, {8}, 1.0, 27);
  gild::RngStream rng(28);
  jitter(td3.actor.params, rng);
  jitter(td3.critics[1].params, rng);
  ParamSet expect = td3.actor_target;
  ParamSet c_expect = td3.critic_targets[1];
  gild::sync_targets(td3);
  gild::soft_update(expect, td3.actor.params, td3.cfg.tau);
  gild::soft_update(c_expect, td3.critics[1].params, td3.cfg.tau);
  CHECK(td3.actor_target == expect);
  CHECK(td3.critic_targets[1] == c_expect);
}
