#include <doctest.h>

#include <cmath>
#include <set>

#include "lfc/case_gen.hpp"
#include "lfc/ssac.hpp"
#include "support.hpp"
#include "toy_envs.hpp"

using namespace lfc;
using namespace lfc::test;

namespace {

HyperParams tiny() {
  HyperParams h;
  h.hidden_layers = {8, 8};
  h.batch_size = 8;
  h.buffer_capacity = 1000;
  h.total_steps = 200;
  h.eval_interval = 50;
  h.eval_episodes = 3;
  h.seed = 3;
  return h;
}

void set_constant(Mlp& net, double value) {
  for (auto& p : net.params()) p = 0.0;
  net.biases(net.layer_count() - 1)[0] = value;
}

TransitionBatch single(double reward, double cost, double done, double next = 0.5) {
  TransitionBatch b{Matrix(1, 1, 1.0), Matrix(1, 1, 0.0), Matrix(1, 1, next),
                    {reward}, {cost}, {done}};
  return b;
}

}  // namespace

TEST_CASE("hyperparameters parse, round-trip and reject unknown keys") {
  const auto h = parse_hyper_params(R"({"gamma": 0.9, "hidden_layers": [4, 4], "seed": 12})");
  CHECK(h.gamma == 0.9);
  CHECK(h.hidden_layers == std::vector<std::size_t>{4, 4});
  CHECK(h.seed == 12);
  CHECK(dump_hyper_params(parse_hyper_params(dump_hyper_params(h))) == dump_hyper_params(h));
  CHECK_THROWS_WITH(parse_hyper_params(R"({"gama": 0.9})"), doctest::Contains("gama"));
  CHECK_THROWS(parse_hyper_params(R"({"gamma": 1.5})"));
  CHECK_THROWS(parse_hyper_params(R"({"batch_size": 10, "buffer_capacity": 5})"));
}

TEST_CASE("bundled hyperparameter files") {
  const auto table = load_hyper_params(LFC_SOURCE_DIR "/conf/table1.json");
  CHECK(table.gamma == 0.99);
  CHECK(table.alpha == 0.006);
  CHECK(table.tau == 0.0002);
  CHECK(table.lr == 0.001);
  CHECK(table.batch_size == 256);
  CHECK(table.hidden_layers == std::vector<std::size_t>{2048, 1024, 512});
  const auto desk = load_hyper_params(LFC_SOURCE_DIR "/conf/desk.json");
  CHECK(desk.gamma == table.gamma);
  CHECK(desk.tau == table.tau);
}

TEST_CASE("discounted cost limit") {
  HyperParams h;
  h.gamma = 0.99;
  h.horizon = 5;
  h.c_bar_step = 0.1;
  CHECK(h.c_bar_horizon() == doctest::Approx(0.490099).epsilon(1e-6));
  h.horizon = 1;
  CHECK(h.c_bar_horizon() == doctest::Approx(0.1));
}

TEST_CASE("replay buffer is a FIFO ring") {
  ReplayBuffer buf(3, 1, 1);
  for (int k = 0; k < 5; ++k) {
    const double v = k;
    buf.push(std::vector<double>{v}, std::vector<double>{-v}, v, 2 * v, std::vector<double>{v + 1},
             k % 2 == 1);
  }
  CHECK(buf.size() == 3);
  const std::vector<std::size_t> ages{0, 1, 2};
  const auto b = buf.at(ages);
  CHECK(b.reward == std::vector<double>{2, 3, 4});
  CHECK(b.cost == std::vector<double>{4, 6, 8});
  CHECK(b.done == std::vector<double>{0, 1, 0});
  CHECK(b.action(0, 0) == -2.0);
  CHECK(b.next_obs(2, 0) == 5.0);
  CHECK_THROWS_AS(buf.at(std::vector<std::size_t>{3}), std::out_of_range);
  CHECK_THROWS_AS(buf.push(std::vector<double>{1, 2}, std::vector<double>{0}, 0, 0,
                           std::vector<double>{0}, false),
                  DimensionError);
}

TEST_CASE("replay sampling draws distinct transitions") {
  ReplayBuffer buf(100, 1, 1);
  for (int k = 0; k < 100; ++k) {
    buf.push(std::vector<double>{0.0}, std::vector<double>{0.0}, k, 0, std::vector<double>{0.0},
             false);
  }
  Rng rng(1);
  std::vector<int> hits(100, 0);
  for (int t = 0; t < 200; ++t) {
    const auto b = buf.sample(50, rng);
    std::set<double> seen(b.reward.begin(), b.reward.end());
    CHECK(seen.size() == 50);
    for (double r : b.reward) ++hits[static_cast<std::size_t>(r)];
  }
  for (int h : hits) CHECK(h > 50);
  CHECK_THROWS(buf.sample(101, rng));
}

TEST_CASE("bootstrap targets respect done and gamma") {
  Mlp v({1, 4, 1});
  set_constant(v, 3.0);
  CHECK(q_targets(v, 0.9, single(1.0, 0.0, 1.0))[0] == 1.0);
  CHECK(q_targets(v, 0.9, single(1.0, 0.0, 0.0))[0] == doctest::Approx(1.0 + 0.9 * 3.0));
  CHECK(q_targets(v, 0.0, single(1.0, 0.0, 0.0))[0] == 1.0);

  Rng rng(2);
  Mlp backbone({1, 4, 2});
  backbone.init_uniform(rng);
  const PolicyHead pi(backbone, {1.0}, {0.0});
  Mlp qc({2, 4, 1});
  set_constant(qc, 2.0);
  const Matrix noise(1, 1, 0.3);
  CHECK(cost_targets(pi, qc, 0.5, single(0.0, 1.0, 0.0), noise)[0] == doctest::Approx(2.0));
  CHECK(cost_targets(pi, qc, 0.5, single(0.0, 1.0, 1.0), noise)[0] == 1.0);
}

TEST_CASE("value target is the soft minimum of the critics") {
  Rng rng(4);
  Mlp backbone({1, 4, 2});
  backbone.init_uniform(rng);
  const PolicyHead pi(backbone, {1.0}, {0.0});
  Mlp q1({2, 4, 1}), q2({2, 4, 1});
  set_constant(q1, 5.0);
  set_constant(q2, 4.0);
  const Matrix obs(1, 1, 0.2);
  const Matrix noise(1, 1, -0.4);
  const auto s = pi.sample_batch(obs, noise);
  const auto y = value_targets(pi, q1, q2, 0.1, obs, noise);
  CHECK(y[0] == doctest::Approx(4.0 - 0.1 * s.log_prob[0]));
}

TEST_CASE("soft target update") {
  auto h = tiny();
  h.tau = 0.25;
  Agent a(1, {1.0}, {0.0}, h);
  for (auto& p : a.value().params()) p = 1.0;
  for (auto& p : a.value_target().params()) p = 0.0;
  a.update_target();
  for (double p : a.value_target().params()) CHECK(p == 0.25);
  a.update_target();
  for (double p : a.value_target().params()) CHECK(p == doctest::Approx(0.4375));
}

TEST_CASE("target starts as a copy of the value network") {
  Agent a(2, {1.0, 1.0}, {0.0, 0.0}, tiny());
  CHECK(std::equal(a.value().params().begin(), a.value().params().end(),
                   a.value_target().params().begin()));
}

TEST_CASE("lambda dual ascent") {
  auto h = tiny();
  h.sigma_lambda = 0.1;
  h.c_bar_step = 0.0;
  Agent a(1, {1.0}, {0.0}, h);
  set_constant(a.cost_critic(), 2.0);
  const auto b = single(0.0, 0.0, 0.0);
  CHECK(a.update_lambda(b) == doctest::Approx(0.2));
  CHECK(a.update_lambda(b) == doctest::Approx(0.4));

  auto h2 = h;
  h2.c_bar_step = 0.1;
  Agent c(1, {1.0}, {0.0}, h2);
  set_constant(c.cost_critic(), 0.0);
  c.set_lambda(0.01);
  CHECK(c.update_lambda(b) == 0.0);

  set_constant(c.cost_critic(), 1.0);
  c.set_lambda(0.0);
  CHECK(c.update_lambda(b) == doctest::Approx(0.1 * (1.0 - 0.490099)).epsilon(1e-6));

  auto h3 = h;
  h3.constrained = false;
  Agent u(1, {1.0}, {0.0}, h3);
  set_constant(u.cost_critic(), 5.0);
  CHECK(u.lambda() == 0.0);
  CHECK(u.update_lambda(b) == 0.0);
}

TEST_CASE("lambda never goes negative") {
  auto h = tiny();
  h.sigma_lambda = 0.5;
  h.c_bar_step = 0.3;
  ChainEnv env;
  ReplayBuffer buf(200, 2, 2);
  Agent a(2, env.action_scale(), env.action_offset(), h);
  Rng rng(9);
  auto obs = env.reset(rng);
  for (int t = 0; t < 200; ++t) {
    const auto d = a.act(obs, false);
    const auto s = env.step(d.action);
    buf.push(obs, d.squashed, s.reward, s.cost, s.observation, s.done);
    obs = s.done ? env.reset(rng) : s.observation;
    if (buf.size() >= h.batch_size) {
      const auto st = a.update(buf.sample(h.batch_size, rng));
      CHECK(st.lambda >= 0.0);
      CHECK(std::isfinite(st.loss_pi));
    }
  }
}

TEST_CASE("detached cost critic reduces to the unconstrained loss") {
  Rng rng(6);
  Mlp backbone({2, 8, 4});
  backbone.init_uniform(rng);
  const PolicyHead pi(backbone, {2.0, 1.0}, {0.0, 1.0});
  Mlp q1({4, 8, 1}), q2({4, 8, 1}), qc({4, 8, 1});
  q1.init_uniform(rng);
  q2.init_uniform(rng);
  qc.init_uniform(rng);
  const Matrix obs = normal_matrix(16, 2, rng);
  const Matrix noise = normal_matrix(16, 2, rng);
  const auto with_zero = policy_loss(pi, q1, q2, &qc, 0.2, 0.0, obs, noise);
  const auto detached = policy_loss(pi, q1, q2, nullptr, 0.2, 3.0, obs, noise);
  CHECK(with_zero.loss == detached.loss);
  CHECK(with_zero.grad == detached.grad);
  CHECK(detached.cost_term == 0.0);
  const auto weighted = policy_loss(pi, q1, q2, &qc, 0.2, 3.0, obs, noise);
  CHECK(weighted.cost_term != 0.0);
  CHECK(weighted.loss == doctest::Approx(with_zero.loss + weighted.cost_term));
}

TEST_CASE("training log has one row per evaluation interval") {
  auto h = tiny();
  h.total_steps = 5000;
  h.eval_interval = 500;
  h.batch_size = 4;
  h.hidden_layers = {4};
  ChainEnv env(3);
  const auto r = train(env, h);
  REQUIRE(r.log.size() == 10);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    CHECK(r.log[i].env_step == static_cast<std::int64_t>(500 * (i + 1)));
  }
  CHECK(r.agent.env_steps() == 5000);
  const auto csv = training_log_csv(r.log);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("training is deterministic for a seed") {
  ChainEnv e1(3), e2(3), e3(3);
  auto h = tiny();
  const auto a = train(e1, h);
  const auto b = train(e2, h);
  CHECK(training_log_csv(a.log) == training_log_csv(b.log));
  CHECK(encode_checkpoint(a.agent.to_checkpoint()) == encode_checkpoint(b.agent.to_checkpoint()));
  h.seed = 4;
  const auto c = train(e3, h);
  CHECK(encode_checkpoint(a.agent.to_checkpoint()) != encode_checkpoint(c.agent.to_checkpoint()));
}

TEST_CASE("agent checkpoint round-trip") {
  ChainEnv env(3);
  auto r = train(env, tiny());
  const auto ckpt = r.agent.to_checkpoint();
  auto back = Agent::from_checkpoint(decode_checkpoint(encode_checkpoint(ckpt)));
  CHECK(encode_checkpoint(back.to_checkpoint()) == encode_checkpoint(ckpt));
  const std::vector<double> obs{0.3, 0.0};
  CHECK(back.act(obs, true).action == r.agent.act(obs, true).action);
  CHECK(back.lambda() == r.agent.lambda());

  auto bad = ckpt;
  bad.blocks[4].second.pop_back();
  CHECK_THROWS_AS(Agent::from_checkpoint(bad), CheckpointError);
  Checkpoint other;
  other.meta["kind"] = "something";
  CHECK_THROWS_AS(Agent::from_checkpoint(other), CheckpointError);
}

TEST_CASE("automatic temperature moves alpha") {
  auto h = tiny();
  h.auto_alpha = true;
  ChainEnv env(3);
  const auto r = train(env, h);
  CHECK(r.agent.alpha() != h.alpha);
  CHECK(r.agent.alpha() > 0.0);
}

TEST_CASE("grid adapter action bounds") {
  const auto c = generate_case("five_area", {});
  EnvConfig cfg;
  GridEnv grid(c, cfg);
  const auto scen = gen_scenarios(c, 4, 1, cfg);
  GridEpisodeEnv env(grid, scen, scen);
  const auto scale = env.action_scale();
  const auto offset = env.action_offset();
  REQUIRE(scale.size() == 12);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(scale[i] == c.generators[i].ramp_limit);
    CHECK(offset[i] == 0.0);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const double shed_max = c.loads[grid.sheddable()[k]].shed_max;
    CHECK(offset[10 + k] - scale[10 + k] == doctest::Approx(0.0));
    CHECK(offset[10 + k] + scale[10 + k] == doctest::Approx(shed_max));
  }
  Rng rng(1);
  const auto obs = env.reset(rng);
  CHECK(obs.size() == 40);
  const auto s = env.step(std::vector<double>(12, 0.0));
  CHECK(s.observation.size() == 40);
  CHECK_THROWS_AS(split_action(grid, std::vector<double>(11, 0.0)), DimensionError);
}
