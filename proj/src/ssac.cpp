#include "lfc/ssac.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lfc/io.hpp"

namespace lfc {

using nlohmann::json;

namespace {

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Mlp make_net(std::vector<std::size_t> sizes, Rng& rng) {
  Mlp net(std::move(sizes));
  net.init_uniform(rng);
  return net;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

}  // namespace

double HyperParams::c_bar_horizon() const {
  return c_bar_step * (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
}

void HyperParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("hyperparameters: " + what); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(alpha > 0.0)) fail("alpha must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (buffer_capacity < batch_size) fail("buffer_capacity must be at least batch_size");
  if (lambda_init < 0.0) fail("lambda_init must be non-negative");
  if (sigma_lambda < 0.0) fail("sigma_lambda must be non-negative");
  if (c_bar_step < 0.0) fail("c_bar_step must be non-negative");
  if (horizon < 1) fail("horizon must be at least 1");
  if (update_every < 1 || updates_per_round < 1) fail("update schedule must be positive");
  if (total_steps < 0 || eval_interval < 1) fail("step counts must be positive");
  if (eval_episodes < 1) fail("eval_episodes must be positive");
  for (auto h : hidden_layers) {
    if (h == 0) fail("hidden layer sizes must be positive");
  }
}

HyperParams parse_hyper_params(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("hyperparameters: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("hyperparameters: expected a JSON object");
  HyperParams h;
  const std::set<std::string> known{
      "gamma", "alpha", "tau", "lr", "batch_size", "buffer_capacity", "lambda_init",
      "sigma_lambda", "c_bar_step", "horizon", "hidden_layers", "update_every",
      "updates_per_round", "total_steps", "eval_interval", "eval_episodes", "random_steps",
      "constrained", "auto_alpha", "target_entropy", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("hyperparameters: unknown key '" + key + "'");
  }
  try {
    h.gamma = j.value("gamma", h.gamma);
    h.alpha = j.value("alpha", h.alpha);
    h.tau = j.value("tau", h.tau);
    h.lr = j.value("lr", h.lr);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.buffer_capacity = j.value("buffer_capacity", h.buffer_capacity);
    h.lambda_init = j.value("lambda_init", h.lambda_init);
    h.sigma_lambda = j.value("sigma_lambda", h.sigma_lambda);
    h.c_bar_step = j.value("c_bar_step", h.c_bar_step);
    h.horizon = j.value("horizon", h.horizon);
    h.hidden_layers = j.value("hidden_layers", h.hidden_layers);
    h.update_every = j.value("update_every", h.update_every);
    h.updates_per_round = j.value("updates_per_round", h.updates_per_round);
    h.total_steps = j.value("total_steps", h.total_steps);
    h.eval_interval = j.value("eval_interval", h.eval_interval);
    h.eval_episodes = j.value("eval_episodes", h.eval_episodes);
    h.random_steps = j.value("random_steps", h.random_steps);
    h.constrained = j.value("constrained", h.constrained);
    h.auto_alpha = j.value("auto_alpha", h.auto_alpha);
    h.target_entropy = j.value("target_entropy", h.target_entropy);
    h.seed = j.value("seed", h.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("hyperparameters: ") + e.what());
  }
  h.validate();
  return h;
}

HyperParams load_hyper_params(const std::string& path) {
  try {
    return parse_hyper_params(read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::string dump_hyper_params(const HyperParams& h) {
  json j;
  j["gamma"] = h.gamma;
  j["alpha"] = h.alpha;
  j["tau"] = h.tau;
  j["lr"] = h.lr;
  j["batch_size"] = h.batch_size;
  j["buffer_capacity"] = h.buffer_capacity;
  j["lambda_init"] = h.lambda_init;
  j["sigma_lambda"] = h.sigma_lambda;
  j["c_bar_step"] = h.c_bar_step;
  j["horizon"] = h.horizon;
  j["hidden_layers"] = h.hidden_layers;
  j["update_every"] = h.update_every;
  j["updates_per_round"] = h.updates_per_round;
  j["total_steps"] = h.total_steps;
  j["eval_interval"] = h.eval_interval;
  j["eval_episodes"] = h.eval_episodes;
  j["random_steps"] = h.random_steps;
  j["constrained"] = h.constrained;
  j["auto_alpha"] = h.auto_alpha;
  j["target_entropy"] = h.target_entropy;
  j["seed"] = h.seed;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_size, std::size_t action_size)
    : capacity_(capacity), obs_size_(obs_size), action_size_(action_size) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  obs_.resize(capacity * obs_size);
  next_obs_.resize(capacity * obs_size);
  action_.resize(capacity * action_size);
  reward_.resize(capacity);
  cost_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::push(std::span<const double> obs, std::span<const double> action,
                        double reward, double cost, std::span<const double> next_obs, bool done) {
  if (obs.size() != obs_size_ || next_obs.size() != obs_size_ || action.size() != action_size_) {
    throw DimensionError("ReplayBuffer::push: transition shape mismatch");
  }
  std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(head_ * obs_size_));
  std::copy(next_obs.begin(), next_obs.end(),
            next_obs_.begin() + static_cast<std::ptrdiff_t>(head_ * obs_size_));
  std::copy(action.begin(), action.end(),
            action_.begin() + static_cast<std::ptrdiff_t>(head_ * action_size_));
  reward_[head_] = reward;
  cost_[head_] = cost;
  done_[head_] = done ? 1.0 : 0.0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

TransitionBatch ReplayBuffer::at(std::span<const std::size_t> ages) const {
  const std::size_t n = ages.size();
  TransitionBatch b{Matrix(n, obs_size_), Matrix(n, action_size_), Matrix(n, obs_size_),
                    std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    if (ages[r] >= size_) throw std::out_of_range("ReplayBuffer::at: index beyond size");
    const std::size_t slot = (head_ + capacity_ - size_ + ages[r]) % capacity_;
    std::copy_n(obs_.begin() + static_cast<std::ptrdiff_t>(slot * obs_size_), obs_size_,
                b.obs.row(r).begin());
    std::copy_n(next_obs_.begin() + static_cast<std::ptrdiff_t>(slot * obs_size_), obs_size_,
                b.next_obs.row(r).begin());
    std::copy_n(action_.begin() + static_cast<std::ptrdiff_t>(slot * action_size_), action_size_,
                b.action.row(r).begin());
    b.reward[r] = reward_[slot];
    b.cost[r] = cost_[slot];
    b.done[r] = done_[slot];
  }
  return b;
}

TransitionBatch ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch > size_) throw std::invalid_argument("ReplayBuffer::sample: batch larger than buffer");
  // Floyd's algorithm: distinct indices, O(batch) draws.
  std::vector<std::size_t> picked;
  picked.reserve(batch);
  for (std::size_t j = size_ - batch; j < size_; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    const bool seen = std::find(picked.begin(), picked.end(), t) != picked.end();
    picked.push_back(seen ? j : t);
  }
  return at(picked);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist;
  return dist(rng);
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& x : m.data) x = standard_normal(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Losses

LossGrad regression_loss(const Mlp& net, const Matrix& input, std::span<const double> target) {
  if (net.output_size() != 1) throw DimensionError("regression_loss: net must have one output");
  if (target.size() != input.rows) throw DimensionError("regression_loss: target size mismatch");
  MlpTape tape;
  const Matrix out = net.forward(input, &tape);
  const double n = static_cast<double>(input.rows);
  Matrix up(input.rows, 1);
  LossGrad lg;
  for (std::size_t b = 0; b < input.rows; ++b) {
    const double r = out.data[b] - target[b];
    lg.loss += 0.5 * r * r / n;
    up.data[b] = r / n;
  }
  lg.grad.assign(net.param_count(), 0.0);
  net.backward(tape, up, lg.grad, nullptr);
  return lg;
}

std::vector<double> value_targets(const PolicyHead& pi, const Mlp& q1, const Mlp& q2,
                                  double alpha, const Matrix& obs, const Matrix& noise) {
  const auto s = pi.sample_batch(obs, noise);
  const Matrix in = hconcat(obs, s.squashed);
  const Matrix a = q1.forward(in);
  const Matrix b = q2.forward(in);
  std::vector<double> y(obs.rows);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::min(a.data[i], b.data[i]) - alpha * s.log_prob[i];
  }
  return y;
}

std::vector<double> q_targets(const Mlp& v_target, double gamma, const TransitionBatch& batch) {
  const Matrix v = v_target.forward(batch.next_obs);
  std::vector<double> y(batch.reward.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = batch.reward[i] + gamma * (1.0 - batch.done[i]) * v.data[i];
  }
  return y;
}

std::vector<double> cost_targets(const PolicyHead& pi, const Mlp& qc, double gamma,
                                 const TransitionBatch& batch, const Matrix& noise) {
  const auto s = pi.sample_batch(batch.next_obs, noise);
  const Matrix q = qc.forward(hconcat(batch.next_obs, s.squashed));
  std::vector<double> y(batch.cost.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = batch.cost[i] + gamma * (1.0 - batch.done[i]) * q.data[i];
  }
  return y;
}

PolicyLoss policy_loss(const PolicyHead& pi, const Mlp& q1, const Mlp& q2, const Mlp* qc,
                       double alpha, double lambda, const Matrix& obs, const Matrix& noise) {
  const std::size_t n = obs.rows;
  const std::size_t A = pi.action_size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto s = pi.sample_batch(obs, noise);
  const Matrix in = hconcat(obs, s.squashed);
  MlpTape t1, t2, tc;
  const Matrix o1 = q1.forward(in, &t1);
  const Matrix o2 = q2.forward(in, &t2);
  const bool use_cost = qc != nullptr && lambda != 0.0;
  Matrix oc;
  if (use_cost) oc = qc->forward(in, &tc);

  PolicyLoss pl;
  Matrix up1(n, 1), up2(n, 1), upc(n, 1);
  for (std::size_t b = 0; b < n; ++b) {
    const bool first = o1.data[b] <= o2.data[b];
    const double qmin = first ? o1.data[b] : o2.data[b];
    (first ? up1 : up2).data[b] = -inv_n;
    pl.entropy_term += alpha * s.log_prob[b] * inv_n;
    pl.q_term += qmin * inv_n;
    pl.mean_log_prob += s.log_prob[b] * inv_n;
    if (use_cost) {
      pl.cost_term += lambda * oc.data[b] * inv_n;
      upc.data[b] = lambda * inv_n;
    }
  }
  pl.loss = pl.entropy_term - pl.q_term + pl.cost_term;

  Matrix d_squashed(n, A);
  auto add_action_grad = [&](const Mlp& net, const MlpTape& tape, const Matrix& up) {
    Matrix d_in;
    net.backward(tape, up, {}, &d_in);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t d = 0; d < A; ++d) d_squashed(b, d) += d_in(b, obs.cols + d);
    }
  };
  add_action_grad(q1, t1, up1);
  add_action_grad(q2, t2, up2);
  if (use_cost) add_action_grad(*qc, tc, upc);

  const std::vector<double> d_log_prob(n, alpha * inv_n);
  pl.grad.assign(pi.backbone().param_count(), 0.0);
  pi.backward(s, d_squashed, d_log_prob, pl.grad);
  return pl;
}

// ---------------------------------------------------------------------------
// Agent

Agent::Agent(std::size_t obs_size, std::vector<double> action_scale,
             std::vector<double> action_offset, const HyperParams& hyper)
    : hyper_(hyper), rng_(hyper.seed) {
  hyper_.validate();
  const std::size_t A = action_scale.size();
  if (A == 0) throw std::invalid_argument("Agent: empty action space");
  const auto& hid = hyper_.hidden_layers;
  policy_ = PolicyHead(make_net(with_ends(obs_size, hid, 2 * A), rng_), std::move(action_scale),
                       std::move(action_offset));
  v_ = make_net(with_ends(obs_size, hid, 1), rng_);
  v_target_ = v_;
  q1_ = make_net(with_ends(obs_size + A, hid, 1), rng_);
  q2_ = make_net(with_ends(obs_size + A, hid, 1), rng_);
  qc_ = make_net(with_ends(obs_size + A, hid, 1), rng_);
  adam_pi_ = AdamState(policy_.backbone().param_count(), hyper_.lr);
  adam_v_ = AdamState(v_.param_count(), hyper_.lr);
  adam_q1_ = AdamState(q1_.param_count(), hyper_.lr);
  adam_q2_ = AdamState(q2_.param_count(), hyper_.lr);
  adam_qc_ = AdamState(qc_.param_count(), hyper_.lr);
  adam_alpha_ = AdamState(1, hyper_.lr);
  lambda_ = hyper_.constrained ? hyper_.lambda_init : 0.0;
  log_alpha_ = std::log(hyper_.alpha);
}

double Agent::alpha() const { return std::exp(log_alpha_); }

std::array<double, 3> Agent::update_q(const TransitionBatch& batch) {
  const Matrix in = hconcat(batch.obs, batch.action);
  const auto y = q_targets(v_target_, hyper_.gamma, batch);
  auto l1 = regression_loss(q1_, in, y);
  adam_step(q1_.params(), l1.grad, adam_q1_);
  auto l2 = regression_loss(q2_, in, y);
  adam_step(q2_.params(), l2.grad, adam_q2_);
  const Matrix noise = normal_matrix(batch.obs.rows, action_size(), rng_);
  const auto yc = cost_targets(policy_, qc_, hyper_.gamma, batch, noise);
  auto lc = regression_loss(qc_, in, yc);
  adam_step(qc_.params(), lc.grad, adam_qc_);
  return {l1.loss, l2.loss, lc.loss};
}

double Agent::update_value(const TransitionBatch& batch) {
  const Matrix noise = normal_matrix(batch.obs.rows, action_size(), rng_);
  const auto y = value_targets(policy_, q1_, q2_, alpha(), batch.obs, noise);
  auto l = regression_loss(v_, batch.obs, y);
  adam_step(v_.params(), l.grad, adam_v_);
  return l.loss;
}

double Agent::update_policy(const TransitionBatch& batch) {
  const Matrix noise = normal_matrix(batch.obs.rows, action_size(), rng_);
  auto pl = policy_loss(policy_, q1_, q2_, hyper_.constrained ? &qc_ : nullptr, alpha(), lambda_,
                        batch.obs, noise);
  adam_step(policy_.backbone().params(), pl.grad, adam_pi_);
  last_mean_log_prob_ = pl.mean_log_prob;
  return pl.loss;
}

void Agent::update_target() {
  auto src = v_.params();
  auto dst = v_target_.params();
  const double tau = hyper_.tau;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * src[i] + (1.0 - tau) * dst[i];
}

double Agent::update_lambda(const TransitionBatch& batch) {
  if (!hyper_.constrained) return lambda_;
  const Matrix noise = normal_matrix(batch.obs.rows, action_size(), rng_);
  const auto s = policy_.sample_batch(batch.obs, noise);
  const Matrix q = qc_.forward(hconcat(batch.obs, s.squashed));
  const double jc = mean(q.data);
  lambda_ = std::max(0.0, lambda_ + hyper_.sigma_lambda * (jc - hyper_.c_bar_horizon()));
  return lambda_;
}

UpdateStats Agent::update(const TransitionBatch& batch) {
  UpdateStats s;
  const auto q = update_q(batch);
  s.loss_q1 = q[0];
  s.loss_q2 = q[1];
  s.loss_cost = q[2];
  s.loss_v = update_value(batch);
  s.loss_pi = update_policy(batch);
  update_target();
  s.lambda = update_lambda(batch);
  if (hyper_.auto_alpha) {
    const double g = -alpha() * (last_mean_log_prob_ + hyper_.target_entropy);
    std::span<double> p(&log_alpha_, 1);
    adam_step(p, std::span<const double>(&g, 1), adam_alpha_);
  }
  s.alpha = alpha();
  return s;
}

Decision Agent::act(std::span<const double> obs, bool deterministic) {
  const auto t0 = std::chrono::steady_clock::now();
  Decision d;
  if (deterministic) {
    const auto out = policy_.backbone().forward(obs);
    d.squashed.resize(action_size());
    for (std::size_t i = 0; i < d.squashed.size(); ++i) d.squashed[i] = std::tanh(out[i]);
    d.action = policy_.to_physical(d.squashed);
  } else {
    std::vector<double> noise(action_size());
    for (auto& e : noise) e = standard_normal(rng_);
    auto s = policy_.sample_action(obs, noise);
    d.action = std::move(s.action);
    d.squashed = std::move(s.squashed);
  }
  const auto t1 = std::chrono::steady_clock::now();
  d.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return d;
}

Checkpoint Agent::to_checkpoint() const {
  Checkpoint c;
  c.meta["kind"] = "ssac_agent";
  c.meta["observation_size"] = observation_size();
  c.meta["action_size"] = action_size();
  c.meta["hyper"] = json::parse(dump_hyper_params(hyper_));
  c.meta["seed"] = hyper_.seed;
  c.meta["env_steps"] = env_steps_;
  c.blocks.emplace_back("action_scale", policy_.scale());
  c.blocks.emplace_back("action_offset", policy_.offset());
  c.blocks.emplace_back("lambda", std::vector<double>{lambda_});
  c.blocks.emplace_back("log_alpha", std::vector<double>{log_alpha_});
  auto add = [&](const char* name, const Mlp& net) {
    c.blocks.emplace_back(name, std::vector<double>(net.params().begin(), net.params().end()));
  };
  add("policy", policy_.backbone());
  add("value", v_);
  add("value_target", v_target_);
  add("q1", q1_);
  add("q2", q2_);
  add("cost_critic", qc_);
  return c;
}

Agent Agent::from_checkpoint(const Checkpoint& c) {
  if (c.meta.value("kind", "") != "ssac_agent") throw CheckpointError("checkpoint is not an agent");
  const HyperParams h = parse_hyper_params(c.meta.at("hyper").dump());
  const auto obs = c.meta.at("observation_size").get<std::size_t>();
  Agent a(obs, c.block("action_scale"), c.block("action_offset"), h);
  auto load = [&](const char* name, Mlp& net) {
    const auto& p = c.block(name);
    if (p.size() != net.param_count()) {
      throw CheckpointError(std::string("checkpoint block '") + name + "' has the wrong size");
    }
    std::copy(p.begin(), p.end(), net.params().begin());
  };
  load("policy", a.policy_.backbone());
  load("value", a.v_);
  load("value_target", a.v_target_);
  load("q1", a.q1_);
  load("q2", a.q2_);
  load("cost_critic", a.qc_);
  a.lambda_ = c.block("lambda").at(0);
  a.log_alpha_ = c.block("log_alpha").at(0);
  a.env_steps_ = c.meta.value("env_steps", std::int64_t{0});
  return a;
}

// ---------------------------------------------------------------------------
// Grid adapter

GridEpisodeEnv::GridEpisodeEnv(GridEnv env, std::vector<Scenario> train, std::vector<Scenario> eval)
    : env_(std::move(env)), train_(std::move(train)), eval_(std::move(eval)) {
  if (train_.empty()) throw std::invalid_argument("GridEpisodeEnv: no training scenarios");
}

std::vector<double> GridEpisodeEnv::action_scale() const {
  std::vector<double> s;
  for (const auto& g : env_.network().generators) s.push_back(g.ramp_limit);
  for (auto j : env_.sheddable()) s.push_back(std::max(env_.network().loads[j].shed_max / 2.0, 1e-6));
  return s;
}

std::vector<double> GridEpisodeEnv::action_offset() const {
  std::vector<double> o(env_.network().generators.size(), 0.0);
  for (auto j : env_.sheddable()) o.push_back(env_.network().loads[j].shed_max / 2.0);
  return o;
}

std::vector<double> GridEpisodeEnv::reset(Rng& rng) {
  auto [state, obs] = env_.reset(train_[uniform_index(rng, train_.size())]);
  state_ = std::move(state);
  return obs;
}

std::vector<double> GridEpisodeEnv::reset_eval(std::size_t i) {
  auto [state, obs] = env_.reset(eval_.at(i));
  state_ = std::move(state);
  return obs;
}

ActionVector split_action(const GridEnv& env, std::span<const double> action) {
  const std::size_t n = env.network().generators.size();
  if (action.size() != n + env.sheddable().size()) {
    throw DimensionError("action has the wrong length for this case");
  }
  ActionVector a;
  a.dp_gen.assign(action.begin(), action.begin() + static_cast<std::ptrdiff_t>(n));
  a.dp_shed.assign(action.begin() + static_cast<std::ptrdiff_t>(n), action.end());
  return a;
}

EnvStep GridEpisodeEnv::step(std::span<const double> action) {
  auto r = env_.step(state_, split_action(env_, action));
  state_ = std::move(r.state);
  return {std::move(r.observation), r.reward, r.cost, r.done};
}

// ---------------------------------------------------------------------------
// Training loop

double evaluate_returns(Agent& agent, EpisodeEnv& env, std::size_t episodes, double* overflow_rate) {
  const std::size_t n = std::min(episodes, env.eval_count());
  if (n == 0) throw std::invalid_argument("evaluate_returns: no evaluation episodes");
  constexpr int kStepCap = 10000;
  double total = 0.0;
  std::size_t violated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto obs = env.reset_eval(i);
    double ret = 0.0;
    double last_cost = 0.0;
    for (int t = 0; t < kStepCap; ++t) {
      const auto d = agent.act(obs, true);
      auto s = env.step(d.action);
      ret += s.reward;
      last_cost = s.cost;
      obs = std::move(s.observation);
      if (s.done) break;
    }
    total += ret;
    if (last_cost > 0.0) ++violated;
  }
  if (overflow_rate) *overflow_rate = static_cast<double>(violated) / static_cast<double>(n);
  return total / static_cast<double>(n);
}

TrainResult train(EpisodeEnv& env, const HyperParams& hyper, const TrainProgress& progress) {
  hyper.validate();
  TrainResult out{Agent(env.observation_size(), env.action_scale(), env.action_offset(), hyper), {}};
  Agent& agent = out.agent;
  Rng& rng = agent.rng();
  const std::size_t A = agent.action_size();
  ReplayBuffer buffer(hyper.buffer_capacity, env.observation_size(), A);

  std::int64_t step = 0;
  std::int64_t episode = 0;
  UpdateStats last;
  last.lambda = agent.lambda();
  last.alpha = agent.alpha();
  double return_sum = 0.0;
  int return_count = 0;
  double train_return = 0.0;
  std::vector<double> obs = env.reset(rng);
  double ep_return = 0.0;
  std::vector<std::pair<std::int64_t, std::int64_t>> pending;

  while (step < hyper.total_steps) {
    Decision d;
    if (step < hyper.random_steps) {
      d.squashed.resize(A);
      for (auto& x : d.squashed) x = 2.0 * uniform01(rng) - 1.0;
      d.action = agent.policy().to_physical(d.squashed);
    } else {
      d = agent.act(obs, false);
    }
    auto s = env.step(d.action);
    buffer.push(obs, d.squashed, s.reward, s.cost, s.observation, s.done);
    ep_return += s.reward;
    ++step;
    if (buffer.size() >= hyper.batch_size && step % hyper.update_every == 0) {
      for (int k = 0; k < hyper.updates_per_round; ++k) {
        last = agent.update(buffer.sample(hyper.batch_size, rng));
      }
    }
    if (step % hyper.eval_interval == 0) pending.emplace_back(step, episode);
    if (s.done) {
      return_sum += ep_return;
      ++return_count;
      ++episode;
      ep_return = 0.0;
    } else {
      obs = std::move(s.observation);
    }
    // Evaluation resets the environment, so it waits for an episode boundary.
    if (s.done || step == hyper.total_steps) {
      for (const auto& [at_step, at_episode] : pending) {
        if (return_count > 0) train_return = return_sum / return_count;
        return_sum = 0.0;
        return_count = 0;
        TrainLogRow row;
        row.env_step = at_step;
        row.episode = at_episode;
        row.eval_return_mean = evaluate_returns(
            agent, env, static_cast<std::size_t>(hyper.eval_episodes), &row.overflow_rate);
        row.train_return = train_return;
        row.lambda = last.lambda;
        row.loss_v = last.loss_v;
        row.loss_q1 = last.loss_q1;
        row.loss_q2 = last.loss_q2;
        row.loss_cost = last.loss_cost;
        row.loss_pi = last.loss_pi;
        row.alpha = agent.alpha();
        out.log.push_back(row);
        if (progress) progress(row);
      }
      pending.clear();
      if (s.done && step < hyper.total_steps) obs = env.reset(rng);
    }
  }
  agent.set_env_steps(step);
  return out;
}

std::string training_log_csv(std::span<const TrainLogRow> rows) {
  std::ostringstream os;
  os << "env_step,episode,eval_return_mean,train_return,lambda,loss_v,loss_q1,loss_q2,loss_cost,"
        "loss_pi,overflow_rate,alpha\n";
  for (const auto& r : rows) {
    os << r.env_step << ',' << r.episode << ',' << format_double(r.eval_return_mean) << ','
       << format_double(r.train_return) << ',' << format_double(r.lambda) << ','
       << format_double(r.loss_v) << ',' << format_double(r.loss_q1) << ','
       << format_double(r.loss_q2) << ',' << format_double(r.loss_cost) << ','
       << format_double(r.loss_pi) << ',' << format_double(r.overflow_rate) << ','
       << format_double(r.alpha) << '\n';
  }
  return os.str();
}

}  // namespace lfc
