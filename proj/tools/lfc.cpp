// lfc: case and scenario generation, SSAC training, evaluation and reports.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lfc/case_gen.hpp"
#include "lfc/grid_env.hpp"
#include "lfc/harness.hpp"
#include "lfc/io.hpp"
#include "lfc/power_net.hpp"
#include "lfc/ssac.hpp"

namespace fs = std::filesystem;
using namespace lfc;

namespace {

constexpr const char* kFormats = R"(
File formats:
  case        JSON network description (buses, lines, generators, loads,
              hvdc_infeeds, areas, flowgates, beta, base_mva)
  env         JSON environment config (t_max, f_tol, e1..e4, csys_source,
              shed_penalty_weight, contingency_probs, load_scale_range,
              monitor, positive_requires_frequency)
  hyper       JSON hyperparameters (gamma, alpha, tau, lr, batch_size,
              buffer_capacity, lambda_init, hidden_layers, ...)
  scenarios   JSON lines: {"id","load_scale","contingency":{"kind","target"},"rng_seed"}
  model       binary checkpoint "LFCCKPT" + u32 version + u64 header length
              + JSON header + little-endian f64 parameter blocks
  train log   CSV env_step,episode,eval_return_mean,train_return,lambda,loss_v,
              loss_q1,loss_q2,loss_cost,loss_pi,overflow_rate,alpha
)";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file: " + path);
}

EnvConfig env_for(const NetworkCase& c, const std::string& env_path) {
  return env_path.empty() ? default_env_config(c) : load_env_config(env_path);
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || pos == 0) throw UsageError("--seeds: not an integer list: " + csv);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--seeds: empty list");
  return out;
}

void log_row(std::uint64_t seed, const TrainLogRow& r) {
  std::fprintf(stderr, "[seed %llu] step %lld  eval return %.3f  lambda %.4f  overflow %.2f\n",
               static_cast<unsigned long long>(seed), static_cast<long long>(r.env_step),
               r.eval_return_mean, r.lambda, r.overflow_rate);
}

void print_summary(const EvalReport& r) {
  std::fprintf(stderr,
               "%s: %d cases, unsolved freq %d, unsolved flows %d, success %.2f%%, "
               "avg decision %.3f ms\n",
               r.name.c_str(), r.total(), r.unsolved_freq(), r.unsolved_flows(), r.success_rate(),
               r.mean_decision_ms());
}

std::vector<fs::path> seed_dirs(const std::string& root) {
  std::vector<std::pair<unsigned long long, fs::path>> found;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("seed_", 0) != 0) continue;
    try {
      found.emplace_back(std::stoull(name.substr(5)), e.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-constrained soft actor-critic for multi-area frequency control"};
  app.footer(kFormats);
  app.require_subcommand(1);

  std::string case_path, hyper_path, env_path, scen_path, out_path, model_path, tmpl = "five_area",
                                                                               seeds_csv;
  std::uint64_t seed = 0;
  int n = 0;
  int areas = CaseTemplateParams{}.areas;
  int buses = CaseTemplateParams{}.buses_per_area;
  bool baseline = false;
  bool deterministic = true;
  bool stress = false;
  double stress_fraction = 1.0;
  std::int64_t steps = -1;

  auto* gen_case = app.add_subcommand("gen-case", "Write a synthetic multi-area case");
  gen_case->add_option("--template", tmpl, "Template name (five_area, two_area)");
  gen_case->add_option("--areas", areas, "Number of control areas");
  gen_case->add_option("--buses-per-area", buses, "Buses in each area");
  gen_case->add_option("--seed", seed, "Parameter jitter seed")->default_val(1);
  gen_case->add_option("--out", out_path, "Case JSON to write")->required();
  gen_case->add_option("--env", env_path, "Also write the calibrated environment config here");
  gen_case->footer(kFormats);

  auto* gen_scen = app.add_subcommand("gen-scenarios", "Draw load/contingency scenarios");
  gen_scen->add_option("--case", case_path, "Case JSON")->required();
  gen_scen->add_option("--env", env_path, "Environment config (default: calibrated defaults)");
  gen_scen->add_option("--n", n, "Number of scenarios")->required()->check(CLI::PositiveNumber);
  gen_scen->add_option("--seed", seed, "Random seed")->required();
  gen_scen->add_option("--out", out_path, "JSON-lines file to write")->required();
  gen_scen->add_flag("--stress", stress, "Keep only scenarios where the baseline overflows");
  gen_scen->add_option("--stress-fraction", stress_fraction,
                       "Share of overflowing scenarios in the stress set")
      ->check(CLI::Range(0.0, 1.0));
  gen_scen->footer(kFormats);

  auto* train_cmd = app.add_subcommand("train", "Train SSAC agents");
  train_cmd->add_option("--case", case_path, "Case JSON")->required();
  train_cmd->add_option("--hyper", hyper_path, "Hyperparameter JSON")->required();
  train_cmd->add_option("--env", env_path, "Environment config (default: calibrated defaults)");
  train_cmd->add_option("--scenarios", scen_path, "Training scenarios")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "Seed for a single run");
  auto* seeds_opt = train_cmd->add_option("--seeds", seeds_csv, "Comma-separated seeds, one run each");
  seed_opt->excludes(seeds_opt);
  train_cmd->add_option("--steps", steps, "Override total environment steps");
  train_cmd->add_option("--out", out_path, "Output directory")->required();
  train_cmd->footer(kFormats);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model or the baseline on scenarios");
  eval_cmd->add_option("--case", case_path, "Case JSON")->required();
  eval_cmd->add_option("--env", env_path, "Environment config (default: calibrated defaults)");
  eval_cmd->add_option("--scenarios", scen_path, "Test scenarios")->required();
  auto* model_opt = eval_cmd->add_option("--model", model_path, "Model checkpoint");
  auto* base_flag = eval_cmd->add_flag("--baseline", baseline, "Evaluate proportional-reserve dispatch");
  model_opt->excludes(base_flag);
  eval_cmd->add_flag("--deterministic,!--stochastic", deterministic,
                     "Use the mean action (default) or sample the policy");
  eval_cmd->add_option("--out", out_path, "Per-case CSV to write")->required();
  eval_cmd->footer(kFormats);

  auto* cmp_cmd = app.add_subcommand("compare", "Compare a model against the baseline");
  cmp_cmd->add_option("--case", case_path, "Case JSON")->required();
  cmp_cmd->add_option("--env", env_path, "Environment config (default: calibrated defaults)");
  cmp_cmd->add_option("--scenarios", scen_path, "Test scenarios")->required();
  cmp_cmd->add_option("--model", model_path, "Model checkpoint")->required();
  cmp_cmd->add_option("--out", out_path, "Output directory")->required();
  cmp_cmd->footer(kFormats);

  auto* rep_cmd = app.add_subcommand("report", "Evaluate every seed of a run and write tables");
  rep_cmd->add_option("--model", model_path, "Run directory holding seed_<s>/ subdirectories")
      ->required();
  rep_cmd->add_option("--case", case_path, "Case JSON")->required();
  rep_cmd->add_option("--env", env_path, "Environment config (default: calibrated defaults)");
  rep_cmd->add_option("--scenarios", scen_path, "Test scenarios")->required();
  rep_cmd->add_option("--out", out_path, "Report directory")->required();
  rep_cmd->footer(kFormats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_case) {
      CaseTemplateParams p;
      p.areas = areas;
      p.buses_per_area = buses;
      p.seed = seed;
      NetworkCase c;
      try {
        c = generate_case(tmpl, p);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      write_file_atomic(out_path, dump_case(c));
      if (!env_path.empty()) write_file_atomic(env_path, dump_env_config(default_env_config(c)));
      std::fprintf(stderr, "wrote %s: %zu areas, %zu buses, %zu lines, %zu flowgates\n",
                   out_path.c_str(), c.areas.size(), c.buses.size(), c.lines.size(),
                   c.flowgates.size());
    } else if (*gen_scen) {
      require_file(case_path, "--case");
      if (!env_path.empty()) require_file(env_path, "--env");
      const auto c = load_case_file(case_path);
      const auto cfg = env_for(c, env_path);
      std::vector<Scenario> s;
      if (stress || stress_fraction < 1.0) {
        s = gen_stress_scenarios(GridEnv(c, cfg), n, seed, stress_fraction);
      } else {
        s = gen_scenarios(c, n, seed, cfg);
      }
      write_scenarios(out_path, s);
      std::fprintf(stderr, "wrote %zu scenarios to %s\n", s.size(), out_path.c_str());
    } else if (*train_cmd) {
      require_file(case_path, "--case");
      require_file(hyper_path, "--hyper");
      require_file(scen_path, "--scenarios");
      if (!env_path.empty()) require_file(env_path, "--env");
      if (seed_opt->count() == 0 && seeds_opt->count() == 0) throw UsageError("train needs --seed or --seeds");
      auto hyper = load_hyper_params(hyper_path);
      if (steps >= 0) hyper.total_steps = steps;
      const auto c = load_case_file(case_path);
      const auto cfg = env_for(c, env_path);
      const auto scen = read_scenarios(scen_path);
      if (scen.empty()) throw std::runtime_error(scen_path + ": no scenarios");
      const auto seeds = seeds_opt->count() ? parse_seeds(seeds_csv) : std::vector<std::uint64_t>{seed};
      const bool single = seeds_opt->count() == 0;
      std::vector<SeedLog> logs;
      int failed = 0;
      for (auto s : seeds) {
        HyperParams h = hyper;
        h.seed = s;
        const auto dir = single ? out_path : (fs::path(out_path) / ("seed_" + std::to_string(s))).string();
        try {
          logs.push_back(train_seed(c, cfg, scen, h, dir, log_row));
          std::fprintf(stderr, "[seed %llu] wrote %s\n", static_cast<unsigned long long>(s), dir.c_str());
        } catch (const std::exception& e) {
          if (single) throw;
          ++failed;
          std::fprintf(stderr, "[seed %llu] failed: %s\n", static_cast<unsigned long long>(s), e.what());
          logs.push_back(SeedLog{s, {}, true, e.what()});
        }
      }
      if (!single) {
        write_file_atomic((fs::path(out_path) / "train_curves.csv").string(), train_curves_csv(logs));
      }
      if (failed > 0) return 2;
    } else if (*eval_cmd) {
      require_file(case_path, "--case");
      require_file(scen_path, "--scenarios");
      if (!env_path.empty()) require_file(env_path, "--env");
      if (!baseline && model_path.empty()) throw UsageError("eval needs --model or --baseline");
      if (!baseline) require_file(model_path, "--model");
      const auto c = load_case_file(case_path);
      const GridEnv env(c, env_for(c, env_path));
      const auto scen = read_scenarios(scen_path);
      EvalReport r;
      if (baseline) {
        r = evaluate_baseline(env, scen);
      } else {
        auto agent = Agent::from_checkpoint(load_checkpoint(model_path));
        r = evaluate(agent, env, scen, fs::path(model_path).stem().string(), deterministic);
      }
      write_file_atomic(out_path, eval_report_csv(r));
      print_summary(r);
    } else if (*cmp_cmd) {
      require_file(case_path, "--case");
      require_file(scen_path, "--scenarios");
      require_file(model_path, "--model");
      if (!env_path.empty()) require_file(env_path, "--env");
      const auto c = load_case_file(case_path);
      const GridEnv env(c, env_for(c, env_path));
      const auto scen = read_scenarios(scen_path);
      auto agent = Agent::from_checkpoint(load_checkpoint(model_path));
      ReportInput in;
      in.agents.push_back(evaluate(agent, env, scen, "agent"));
      in.baseline = evaluate_baseline(env, scen);
      in.comparisons.push_back(compare_baseline(in.agents.front(), *in.baseline));
      write_report(in, out_path);
      print_summary(*in.baseline);
      print_summary(in.agents.front());
      std::fprintf(stderr, "mean diff_loss over solved cases: %.3f%%\n",
                   in.comparisons.front().mean_diff_solved);
    } else if (*rep_cmd) {
      if (!fs::is_directory(model_path)) throw UsageError("--model: no such directory: " + model_path);
      require_file(case_path, "--case");
      require_file(scen_path, "--scenarios");
      if (!env_path.empty()) require_file(env_path, "--env");
      const auto c = load_case_file(case_path);
      const GridEnv env(c, env_for(c, env_path));
      const auto scen = read_scenarios(scen_path);
      ReportInput in;
      in.baseline = evaluate_baseline(env, scen);
      print_summary(*in.baseline);
      const auto dirs = seed_dirs(model_path);
      if (dirs.empty()) throw std::runtime_error("nothing to report: no seed_<s> directories in " + model_path);
      for (const auto& d : dirs) {
        const auto name = d.filename().string();
        SeedLog log;
        log.seed = std::stoull(name.substr(5));
        const auto log_path = d / "train_log.csv";
        const auto ckpt_path = d / "model.ckpt";
        if (fs::is_regular_file(log_path)) {
          log.rows = parse_training_log_csv(read_file(log_path.string()));
        } else {
          log.failed = true;
          log.error = "missing train_log.csv";
        }
        in.logs.push_back(log);
        if (!fs::is_regular_file(ckpt_path)) continue;
        auto agent = Agent::from_checkpoint(load_checkpoint(ckpt_path.string()));
        in.agents.push_back(evaluate(agent, env, scen, name));
        in.comparisons.push_back(compare_baseline(in.agents.back(), *in.baseline));
        print_summary(in.agents.back());
      }
      write_report(in, out_path);
      std::fprintf(stderr, "wrote report to %s\n", out_path.c_str());
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
