#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfc/grid_env.hpp"
#include "lfc/ssac.hpp"

namespace lfc {

/// Outcome of one test scenario.
struct CaseRecord {
  int scenario_id = 0;
  bool freq_solved = false;
  bool flow_solved = false;
  int overflow_count = 0;
  double system_loss = 0.0;  // MW, final state
  double c_sys = 0.0;
  double decision_ms = 0.0;  // mean per decision
  int steps = 0;
  double episode_return = 0.0;

  bool solved() const { return freq_solved && flow_solved; }
};

struct EvalReport {
  std::string name;
  std::vector<CaseRecord> cases;

  int total() const { return static_cast<int>(cases.size()); }
  int unsolved_freq() const;
  int unsolved_flows() const;
  int solved() const;
  double success_rate() const;  // percent
  double mean_decision_ms() const;
  /// Final-state overflow counts bucketed as 0, 1, 2, 3+.
  std::array<int, 4> overflow_histogram() const;
};

/// Rolls the policy to episode end on every scenario; the mean action
/// unless `deterministic` is false.
EvalReport evaluate(Agent& agent, const GridEnv& env, std::span<const Scenario> scenarios,
                    const std::string& name, bool deterministic = true);

/// One proportional-reserve dispatch step after primary response.
EvalReport evaluate_baseline(const GridEnv& env, std::span<const Scenario> scenarios);

/// Keeps scenarios where the baseline ends with >= 1 overflow, plus enough
/// clean ones that overflowing cases make up `overflow_fraction` of the
/// result. Order is preserved.
std::vector<Scenario> stress_filter(const GridEnv& env, std::span<const Scenario> scenarios,
                                    double overflow_fraction = 1.0);

/// The first `count` scenarios of a deterministic draw that pass
/// stress_filter; draws grow geometrically until enough are found.
std::vector<Scenario> gen_stress_scenarios(const GridEnv& env, int count, std::uint64_t seed,
                                           double overflow_fraction = 1.0);

struct LossDiff {
  int scenario_id = 0;
  double loss_agent = 0.0;
  double loss_baseline = 0.0;
  double diff_pct = 0.0;  // (baseline - agent) / baseline * 100
  bool agent_solved = false;
};

struct ComparisonReport {
  std::string agent;
  std::vector<LossDiff> diffs;
  std::array<int, 4> hist_agent{};
  std::array<int, 4> hist_baseline{};
  double mean_diff_solved = 0.0;  // over scenarios the agent solved
  int solved_count = 0;
};

double diff_loss_pct(double loss_agent, double loss_baseline);

/// Pairs records by scenario id; throws std::invalid_argument when the two
/// reports do not cover the same scenarios.
ComparisonReport compare_baseline(const EvalReport& agent, const EvalReport& baseline);

struct SeedLog {
  std::uint64_t seed = 0;
  std::vector<TrainLogRow> rows;
  bool failed = false;
  std::string error;
};

struct CurvePoint {
  std::int64_t env_step = 0;
  double mean = 0.0;
  double lower = 0.0;  // mean - 3 sample standard deviations
  double upper = 0.0;
  int seeds = 0;
};

/// Aggregates eval_return_mean per env_step across successful seeds.
std::vector<CurvePoint> aggregate_curves(std::span<const SeedLog> logs);

struct ExperimentConfig {
  std::string case_path;
  std::string env_path;  // empty: default_env_config
  std::string hyper_path;
  std::string train_scenarios;
  std::string test_scenarios;  // optional; checked disjoint from train
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
};

/// Defaults with reward scales calibrated on a fixed 500-scenario draw.
EnvConfig default_env_config(const NetworkCase& net_case);

/// First `count` training scenarios, used for the evaluation rollouts.
std::vector<Scenario> eval_subset(std::span<const Scenario> train, std::size_t count);

struct ExperimentResult {
  std::vector<SeedLog> logs;
  std::vector<std::string> model_paths;  // empty entry for failed seeds
  std::vector<CurvePoint> curve;
};

using SeedProgress = std::function<void(std::uint64_t seed, const TrainLogRow&)>;

/// Trains one agent per seed into out_dir/seed_<s>/ (model.ckpt,
/// train_log.csv) and writes out_dir/train_curves.csv. A failing seed is
/// recorded and the others continue.
ExperimentResult run_experiment(const ExperimentConfig& config, const SeedProgress& progress = {});

/// Trains a single seed and writes model.ckpt and train_log.csv in out_dir.
SeedLog train_seed(const NetworkCase& net_case, const EnvConfig& env_config,
                   const std::vector<Scenario>& train, const HyperParams& hyper,
                   const std::string& out_dir, const SeedProgress& progress = {});

struct ReportInput {
  std::vector<EvalReport> agents;
  std::optional<EvalReport> baseline;
  std::vector<ComparisonReport> comparisons;
  std::vector<SeedLog> logs;
};

/// Writes summary.csv, overflow_hist.csv, loss_diff.csv, train_curves.csv,
/// summary.txt, latency.csv and train_curves.svg (when curves exist) into
/// out_dir. Everything except latency.csv is a pure function of the input.
void write_report(const ReportInput& input, const std::string& out_dir);

std::string eval_report_csv(const EvalReport& report);
EvalReport parse_eval_report_csv(const std::string& text, const std::string& name);
std::string summary_csv(std::span<const EvalReport> agents);
std::string latency_csv(std::span<const EvalReport> agents);
std::string overflow_hist_csv(const std::optional<EvalReport>& baseline,
                              std::span<const EvalReport> agents);
std::string loss_diff_csv(std::span<const ComparisonReport> comparisons);
std::string train_curves_csv(std::span<const SeedLog> logs);
std::vector<TrainLogRow> parse_training_log_csv(const std::string& text);

}  // namespace lfc
