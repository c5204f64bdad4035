#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lfc/checkpoint.hpp"
#include "lfc/grid_env.hpp"
#include "lfc/tensor_nn.hpp"

namespace lfc {

struct HyperParams {
  double gamma = 0.99;
  double alpha = 0.006;
  double tau = 0.0002;
  double lr = 0.001;
  std::size_t batch_size = 256;
  std::size_t buffer_capacity = 50000;
  double lambda_init = 0.0;
  double sigma_lambda = 0.001;
  double c_bar_step = 0.0;
  int horizon = 5;  // T in the discounted cost limit
  std::vector<std::size_t> hidden_layers{2048, 1024, 512};
  int update_every = 1;
  int updates_per_round = 1;
  std::int64_t total_steps = 50000;
  std::int64_t eval_interval = 500;
  int eval_episodes = 20;
  // Uniform random actions for this many initial environment steps.
  std::int64_t random_steps = 0;
  bool constrained = true;
  bool auto_alpha = false;
  double target_entropy = 0.1;
  std::uint64_t seed = 8;

  /// Discounted cost limit: c_bar_step * (1 - gamma^T) / (1 - gamma).
  double c_bar_horizon() const;
  void validate() const;
};

HyperParams parse_hyper_params(const std::string& json_text);
HyperParams load_hyper_params(const std::string& path);
std::string dump_hyper_params(const HyperParams& h);

/// A minibatch; actions are the normalised (tanh-space) policy outputs.
struct TransitionBatch {
  Matrix obs;
  Matrix action;
  Matrix next_obs;
  std::vector<double> reward;
  std::vector<double> cost;
  std::vector<double> done;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_size, std::size_t action_size);

  void push(std::span<const double> obs, std::span<const double> action, double reward,
            double cost, std::span<const double> next_obs, bool done);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  /// Transition by age: 0 is the oldest still stored.
  TransitionBatch at(std::span<const std::size_t> ages) const;
  /// Uniform without replacement inside one batch.
  TransitionBatch sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t obs_size_;
  std::size_t action_size_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // next write slot
  std::vector<double> obs_, action_, next_obs_, reward_, cost_, done_;
};

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean of 0.5 (net(input) - target)^2 and its parameter gradient.
LossGrad regression_loss(const Mlp& net, const Matrix& input, std::span<const double> target);

/// min(Q1, Q2)(s, a) - alpha log pi(a|s) with a drawn from `noise`.
std::vector<double> value_targets(const PolicyHead& pi, const Mlp& q1, const Mlp& q2,
                                  double alpha, const Matrix& obs, const Matrix& noise);

/// r + gamma (1 - done) V_target(s').
std::vector<double> q_targets(const Mlp& v_target, double gamma, const TransitionBatch& batch);

/// c + gamma (1 - done) Qc(s', a') with a' ~ pi(s') from `noise`.
std::vector<double> cost_targets(const PolicyHead& pi, const Mlp& qc, double gamma,
                                 const TransitionBatch& batch, const Matrix& noise);

struct PolicyLoss {
  double loss = 0.0;
  double entropy_term = 0.0;  // mean alpha log pi
  double q_term = 0.0;        // mean min(Q1, Q2)
  double cost_term = 0.0;     // mean lambda Qc, 0 when qc is null
  double mean_log_prob = 0.0;
  std::vector<double> grad;
};

/// Mean of alpha log pi(a|s) - min(Q1, Q2)(s, a) + lambda Qc(s, a) over the
/// reparameterised actions; the gradient is with respect to the policy only.
/// Passing qc = nullptr detaches the cost critic.
PolicyLoss policy_loss(const PolicyHead& pi, const Mlp& q1, const Mlp& q2, const Mlp* qc,
                       double alpha, double lambda, const Matrix& obs, const Matrix& noise);

struct UpdateStats {
  double loss_v = 0.0;
  double loss_q1 = 0.0;
  double loss_q2 = 0.0;
  double loss_cost = 0.0;
  double loss_pi = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
};

struct Decision {
  std::vector<double> action;    // physical units
  std::vector<double> squashed;  // network space
  double latency_ms = 0.0;
};

class Agent {
 public:
  Agent(std::size_t obs_size, std::vector<double> action_scale, std::vector<double> action_offset,
        const HyperParams& hyper);

  const HyperParams& hyper() const { return hyper_; }
  std::size_t observation_size() const { return policy_.observation_size(); }
  std::size_t action_size() const { return policy_.action_size(); }

  double lambda() const { return lambda_; }
  void set_lambda(double value) { lambda_ = value; }
  double alpha() const;
  Rng& rng() { return rng_; }

  PolicyHead& policy() { return policy_; }
  const PolicyHead& policy() const { return policy_; }
  Mlp& value() { return v_; }
  Mlp& value_target() { return v_target_; }
  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& cost_critic() { return qc_; }
  const Mlp& value() const { return v_; }
  const Mlp& value_target() const { return v_target_; }
  const Mlp& q1() const { return q1_; }
  const Mlp& q2() const { return q2_; }
  const Mlp& cost_critic() const { return qc_; }

  /// Returns {loss_q1, loss_q2, loss_cost}.
  std::array<double, 3> update_q(const TransitionBatch& batch);
  double update_value(const TransitionBatch& batch);
  double update_policy(const TransitionBatch& batch);
  void update_target();
  double update_lambda(const TransitionBatch& batch);
  /// One round: Q, value, policy, target, lambda (and alpha when enabled).
  UpdateStats update(const TransitionBatch& batch);

  Decision act(std::span<const double> obs, bool deterministic);

  std::int64_t env_steps() const { return env_steps_; }
  void set_env_steps(std::int64_t n) { env_steps_ = n; }

  Checkpoint to_checkpoint() const;
  static Agent from_checkpoint(const Checkpoint& ckpt);

 private:
  HyperParams hyper_;
  Rng rng_;
  PolicyHead policy_;
  Mlp v_, v_target_, q1_, q2_, qc_;
  AdamState adam_pi_, adam_v_, adam_q1_, adam_q2_, adam_qc_, adam_alpha_;
  double lambda_ = 0.0;
  double log_alpha_ = 0.0;
  double last_mean_log_prob_ = 0.0;
  std::int64_t env_steps_ = 0;
};

struct EnvStep {
  std::vector<double> observation;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
};

/// Episodic environment seen by the training loop. Actions are physical.
class EpisodeEnv {
 public:
  virtual ~EpisodeEnv() = default;
  virtual std::size_t observation_size() const = 0;
  virtual std::vector<double> action_scale() const = 0;
  virtual std::vector<double> action_offset() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  /// Fixed evaluation episode i in [0, eval_count()).
  virtual std::vector<double> reset_eval(std::size_t i) = 0;
  virtual std::size_t eval_count() const = 0;
  virtual EnvStep step(std::span<const double> action) = 0;
};

/// Adapts GridEnv: episodes start from scenarios drawn uniformly from the
/// training set; generator moves map to +-ramp_limit and shedding to
/// [0, shed_max].
class GridEpisodeEnv : public EpisodeEnv {
 public:
  GridEpisodeEnv(GridEnv env, std::vector<Scenario> train, std::vector<Scenario> eval);

  std::size_t observation_size() const override { return env_.observation_size(); }
  std::vector<double> action_scale() const override;
  std::vector<double> action_offset() const override;
  std::vector<double> reset(Rng& rng) override;
  std::vector<double> reset_eval(std::size_t i) override;
  std::size_t eval_count() const override { return eval_.size(); }
  EnvStep step(std::span<const double> action) override;

  const GridEnv& grid() const { return env_; }
  const GridState& state() const { return state_; }

 private:
  GridEnv env_;
  std::vector<Scenario> train_;
  std::vector<Scenario> eval_;
  GridState state_;
};

ActionVector split_action(const GridEnv& env, std::span<const double> action);

struct TrainLogRow {
  std::int64_t env_step = 0;
  std::int64_t episode = 0;
  double eval_return_mean = 0.0;
  double train_return = 0.0;
  double lambda = 0.0;
  double loss_v = 0.0;
  double loss_q1 = 0.0;
  double loss_q2 = 0.0;
  double loss_cost = 0.0;
  double loss_pi = 0.0;
  double overflow_rate = 0.0;  // evaluation episodes ending with cost > 0
  double alpha = 0.0;
};

struct TrainResult {
  Agent agent;
  std::vector<TrainLogRow> log;
};

using TrainProgress = std::function<void(const TrainLogRow&)>;

/// Runs the interaction/update loop for hyper.total_steps environment steps
/// with an evaluation pass every hyper.eval_interval steps.
TrainResult train(EpisodeEnv& env, const HyperParams& hyper, const TrainProgress& progress = {});

/// Mean undiscounted return of the deterministic policy over the evaluation
/// episodes; `overflow_rate` receives the share ending with cost > 0.
double evaluate_returns(Agent& agent, EpisodeEnv& env, std::size_t episodes, double* overflow_rate);

std::string training_log_csv(std::span<const TrainLogRow> rows);

}  // namespace lfc
