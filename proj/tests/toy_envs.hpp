#pragma once

#include <cmath>
#include <vector>

#include "lfc/ssac.hpp"

namespace lfc::test {

/// One-step bandit on a in [-1, 1]: reward -(a - target)^2, cost (a + 1) / 2.
class BanditEnv : public EpisodeEnv {
 public:
  explicit BanditEnv(double target = 0.8, std::size_t eval_episodes = 20)
      : target_(target), eval_(eval_episodes) {}

  std::size_t observation_size() const override { return 1; }
  std::vector<double> action_scale() const override { return {1.0}; }
  std::vector<double> action_offset() const override { return {0.0}; }
  std::vector<double> reset(Rng&) override { return {1.0}; }
  std::vector<double> reset_eval(std::size_t) override { return {1.0}; }
  std::size_t eval_count() const override { return eval_; }
  EnvStep step(std::span<const double> action) override {
    const double a = action[0];
    return {{1.0}, -(a - target_) * (a - target_), (a + 1.0) / 2.0, true};
  }

 private:
  double target_;
  std::size_t eval_;
};

/// Fixed-length episodes over a two-dimensional observation; the reward
/// favours actions near the first observation entry.
class ChainEnv : public EpisodeEnv {
 public:
  explicit ChainEnv(int length = 3) : length_(length) {}

  std::size_t observation_size() const override { return 2; }
  std::vector<double> action_scale() const override { return {2.0, 1.0}; }
  std::vector<double> action_offset() const override { return {0.0, 1.0}; }
  std::vector<double> reset(Rng& rng) override {
    t_ = 0;
    x_ = 2.0 * uniform01(rng) - 1.0;
    return obs();
  }
  std::vector<double> reset_eval(std::size_t i) override {
    t_ = 0;
    x_ = -0.9 + 0.3 * static_cast<double>(i);
    return obs();
  }
  std::size_t eval_count() const override { return 7; }
  EnvStep step(std::span<const double> action) override {
    ++t_;
    const double r = -std::abs(action[0] - x_) - 0.1 * action[1];
    x_ = 0.5 * x_ + 0.25 * action[0];
    return {obs(), r, action[1] > 1.5 ? 1.0 : 0.0, t_ >= length_};
  }

 private:
  std::vector<double> obs() const { return {x_, static_cast<double>(t_) / length_}; }
  int length_;
  int t_ = 0;
  double x_ = 0.0;
};

}  // namespace lfc::test
