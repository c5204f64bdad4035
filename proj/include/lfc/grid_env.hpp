#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfc/power_net.hpp"

namespace lfc {

enum class ContingencyKind { kNone, kSinglePole, kDoublePole, kGenTrip };

struct Contingency {
  ContingencyKind kind = ContingencyKind::kNone;
  int target_id = -1;  // infeed id for pole blocking, generator id for gen_trip
};

struct Scenario {
  int id = 0;
  std::vector<double> load_scale;  // one multiplier per load
  Contingency contingency;
  std::uint64_t rng_seed = 0;
};

enum class CsysSource { kProductionCost, kSystemLoss };

struct RewardConfig {
  double e1 = 10.0;
  double e2 = 1.0;
  double e3 = 1.0;
  double e4 = 100.0;
  CsysSource csys_source = CsysSource::kSystemLoss;
  double shed_penalty_weight = 0.0;  // C_sys units per MW shed
  // When set, the positive branch also needs |freq_dev| <= f_tol.
  bool positive_requires_frequency = true;
};

struct EnvConfig {
  int t_max = 5;
  double f_tol = 0.01;  // Hz
  RewardConfig reward;
  // Probabilities of none, single_pole, double_pole, gen_trip.
  std::array<double, 4> contingency_probs{0.2, 0.4, 0.4, 0.0};
  std::array<double, 2> load_scale_range{0.9, 1.1};
  MonitorScope monitor = MonitorScope::kMonitored;
};

EnvConfig load_env_config(const std::string& path);
EnvConfig parse_env_config(const std::string& text);
std::string dump_env_config(const EnvConfig& cfg);

struct GridState {
  std::vector<double> gen_p;
  std::vector<char> gen_online;
  std::vector<double> load_p;  // demand after scaling, before shedding
  std::vector<double> shed;    // cumulative MW shed per load
  std::vector<double> infeed_p;
  double p_loss = 0.0;  // gen + infeed - served load - losses; negative = deficit
  double p_loss_pre_response = 0.0;
  double freq_dev = 0.0;  // Hz, p_loss / beta
  FlowSolution solution;
  std::vector<double> monitored_flows;
  OverflowStats overflow;
  int step_index = 0;

  /// Net injection the controls must supply (positive = deficit).
  double required_injection() const { return -p_loss; }
};

struct ActionVector {
  std::vector<double> dp_gen;   // MW per plant
  std::vector<double> dp_shed;  // MW per sheddable load, >= 0
};

struct RewardBreakdown {
  double c_sys = 0.0;  // including shed penalty
  double shed_penalty = 0.0;
  double d_overflow = 0.0;
  double d_p = 0.0;
  int overflow_count = 0;
  bool positive_branch = false;
  double reward = 0.0;
};

struct StepResult {
  GridState state;
  std::vector<double> observation;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
  bool aborted = false;
  RewardBreakdown breakdown;
  ActionVector applied;  // action after ramp, capacity and shed clamping
};

/// Snapshot-based multi-area frequency control environment. One instance is
/// single-threaded; instances share nothing and may run concurrently.
class GridEnv {
 public:
  GridEnv(NetworkCase net_case, EnvConfig config);

  const NetworkCase& network() const { return case_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<MonitoredElement>& monitored() const { return monitored_; }
  const std::vector<std::size_t>& sheddable() const { return sheddable_; }

  std::size_t observation_size() const;
  std::size_t action_size() const { return case_.generators.size() + sheddable_.size(); }

  /// Applies load scaling and the contingency, then primary response.
  std::pair<GridState, std::vector<double>> reset(const Scenario& scenario) const;

  /// Clamp-then-redistribute governor response to the current imbalance.
  GridState apply_primary_response(GridState state) const;

  std::vector<double> observe(const GridState& state) const;

  StepResult step(const GridState& state, const ActionVector& action) const;

  /// Reward for a post-action state. `applied` is the clamped action and
  /// `required_before` the net injection needed before it was taken.
  RewardBreakdown compute_reward(const GridState& after, const ActionVector& applied,
                                 double required_before) const;

  /// Proportional-reserve dispatch of the current imbalance.
  ActionVector baseline_policy(const GridState& state) const;

  /// Recomputes flows, losses, imbalance and overflow for the current
  /// outputs. Throws on solver failure.
  void settle(GridState& state) const;

  bool frequency_ok(const GridState& state) const {
    return std::abs(state.freq_dev) <= config_.f_tol;
  }

 private:
  NetworkCase case_;
  EnvConfig config_;
  DcFlowModel flow_;
  std::vector<MonitoredElement> monitored_;
  std::vector<std::size_t> sheddable_;
  std::vector<std::size_t> gen_bus_;
  std::vector<std::size_t> load_bus_;
  std::vector<std::size_t> infeed_bus_;
};

/// Deterministic scenario draw: per-load uniform scaling and a contingency
/// drawn from config.contingency_probs.
std::vector<Scenario> gen_scenarios(const NetworkCase& net_case, int count,
                                    std::uint64_t rng_seed, const EnvConfig& config);

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& line);
void write_scenarios(const std::string& path, std::span<const Scenario> scenarios);
std::vector<Scenario> read_scenarios(const std::string& path);

const char* to_string(ContingencyKind kind);
ContingencyKind contingency_from_string(const std::string& name);

/// Sets E1..E4 and a default shed penalty from baseline rollouts over
/// `sample`: E1 = 10, E2 = max C_sys / 5, E3 = max D_overflow / 10, E4 = base_mva.
RewardConfig calibrate_reward(const NetworkCase& net_case, const EnvConfig& config,
                              std::span<const Scenario> sample);

}  // namespace lfc
