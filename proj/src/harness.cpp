#include "lfc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lfc/io.hpp"

namespace lfc {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& text, std::size_t columns,
                                                   const char* what) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns) {
      throw std::runtime_error(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                               std::to_string(columns) + " columns");
    }
    if (header) {
      header = false;
      continue;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::string pct(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Reports

int EvalReport::unsolved_freq() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(),
                                        [](const CaseRecord& c) { return !c.freq_solved; }));
}

int EvalReport::unsolved_flows() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(),
                                        [](const CaseRecord& c) { return !c.flow_solved; }));
}

int EvalReport::solved() const {
  return static_cast<int>(
      std::count_if(cases.begin(), cases.end(), [](const CaseRecord& c) { return c.solved(); }));
}

double EvalReport::success_rate() const {
  return cases.empty() ? 0.0 : 100.0 * solved() / static_cast<double>(cases.size());
}

double EvalReport::mean_decision_ms() const {
  if (cases.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cases) s += c.decision_ms;
  return s / static_cast<double>(cases.size());
}

std::array<int, 4> EvalReport::overflow_histogram() const {
  std::array<int, 4> h{};
  for (const auto& c : cases) ++h[static_cast<std::size_t>(std::min(c.overflow_count, 3))];
  return h;
}

EvalReport evaluate(Agent& agent, const GridEnv& env, std::span<const Scenario> scenarios,
                    const std::string& name, bool deterministic) {
  EvalReport report{name, {}};
  report.cases.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    auto [state, obs] = env.reset(sc);
    CaseRecord rec;
    rec.scenario_id = sc.id;
    bool aborted = false;
    double latency = 0.0;
    for (;;) {
      const auto d = agent.act(obs, deterministic);
      latency += d.latency_ms;
      auto r = env.step(state, split_action(env, d.action));
      ++rec.steps;
      rec.episode_return += r.reward;
      rec.c_sys = r.breakdown.c_sys;
      aborted = r.aborted;
      state = std::move(r.state);
      obs = std::move(r.observation);
      if (r.done) break;
    }
    rec.freq_solved = !aborted && env.frequency_ok(state);
    rec.flow_solved = !aborted && state.overflow.count == 0;
    rec.overflow_count = state.overflow.count;
    rec.system_loss = state.solution.total_loss;
    rec.decision_ms = latency / rec.steps;
    report.cases.push_back(rec);
  }
  return report;
}

EvalReport evaluate_baseline(const GridEnv& env, std::span<const Scenario> scenarios) {
  EvalReport report{"baseline", {}};
  report.cases.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    const auto [state, obs] = env.reset(sc);
    const auto t0 = std::chrono::steady_clock::now();
    const auto action = env.baseline_policy(state);
    const double ms = elapsed_ms(t0);
    const auto r = env.step(state, action);
    CaseRecord rec;
    rec.scenario_id = sc.id;
    rec.freq_solved = !r.aborted && env.frequency_ok(r.state);
    rec.flow_solved = !r.aborted && r.state.overflow.count == 0;
    rec.overflow_count = r.state.overflow.count;
    rec.system_loss = r.state.solution.total_loss;
    rec.c_sys = r.breakdown.c_sys;
    rec.decision_ms = ms;
    rec.steps = 1;
    rec.episode_return = r.reward;
    report.cases.push_back(rec);
  }
  return report;
}

std::vector<Scenario> stress_filter(const GridEnv& env, std::span<const Scenario> scenarios,
                                    double overflow_fraction) {
  if (!(overflow_fraction > 0.0 && overflow_fraction <= 1.0)) {
    throw std::invalid_argument("stress_filter: overflow_fraction must lie in (0, 1]");
  }
  const auto base = evaluate_baseline(env, scenarios);
  std::size_t overflowing = 0;
  for (const auto& c : base.cases) overflowing += c.overflow_count > 0;
  const auto clean_allowed = static_cast<std::size_t>(
      std::floor(static_cast<double>(overflowing) * (1.0 - overflow_fraction) / overflow_fraction));
  std::vector<Scenario> out;
  std::size_t clean = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (base.cases[i].overflow_count > 0) {
      out.push_back(scenarios[i]);
    } else if (clean < clean_allowed) {
      out.push_back(scenarios[i]);
      ++clean;
    }
  }
  return out;
}

std::vector<Scenario> gen_stress_scenarios(const GridEnv& env, int count, std::uint64_t seed,
                                           double overflow_fraction) {
  if (count <= 0) throw std::invalid_argument("gen_stress_scenarios: count must be positive");
  int draw = 2 * count;
  for (int attempt = 0; attempt < 8; ++attempt, draw *= 2) {
    const auto all = gen_scenarios(env.network(), draw, seed, env.config());
    auto kept = stress_filter(env, all, overflow_fraction);
    if (kept.size() >= static_cast<std::size_t>(count)) {
      kept.resize(static_cast<std::size_t>(count));
      return kept;
    }
  }
  throw std::runtime_error("gen_stress_scenarios: the baseline overflows too rarely on this case");
}

double diff_loss_pct(double loss_agent, double loss_baseline) {
  if (loss_baseline == 0.0) return 0.0;
  return (loss_baseline - loss_agent) / loss_baseline * 100.0;
}

ComparisonReport compare_baseline(const EvalReport& agent, const EvalReport& baseline) {
  std::map<int, const CaseRecord*> by_id;
  for (const auto& c : baseline.cases) {
    if (!by_id.emplace(c.scenario_id, &c).second) {
      throw std::invalid_argument("baseline report repeats scenario " + std::to_string(c.scenario_id));
    }
  }
  if (agent.cases.size() != baseline.cases.size()) {
    throw std::invalid_argument("reports cover different scenario sets (" +
                                std::to_string(agent.cases.size()) + " vs " +
                                std::to_string(baseline.cases.size()) + " cases)");
  }
  ComparisonReport out;
  out.agent = agent.name;
  out.hist_agent = agent.overflow_histogram();
  out.hist_baseline = baseline.overflow_histogram();
  double sum = 0.0;
  for (const auto& a : agent.cases) {
    const auto it = by_id.find(a.scenario_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("scenario " + std::to_string(a.scenario_id) +
                                  " missing from the baseline report");
    }
    LossDiff d;
    d.scenario_id = a.scenario_id;
    d.loss_agent = a.system_loss;
    d.loss_baseline = it->second->system_loss;
    d.diff_pct = diff_loss_pct(d.loss_agent, d.loss_baseline);
    d.agent_solved = a.solved();
    if (d.agent_solved) {
      sum += d.diff_pct;
      ++out.solved_count;
    }
    out.diffs.push_back(d);
  }
  out.mean_diff_solved = out.solved_count > 0 ? sum / out.solved_count : 0.0;
  return out;
}

std::vector<CurvePoint> aggregate_curves(std::span<const SeedLog> logs) {
  std::map<std::int64_t, std::vector<double>> at;
  for (const auto& log : logs) {
    if (log.failed) continue;
    for (const auto& r : log.rows) at[r.env_step].push_back(r.eval_return_mean);
  }
  std::vector<CurvePoint> out;
  for (const auto& [step, values] : at) {
    CurvePoint p;
    p.env_step = step;
    p.seeds = static_cast<int>(values.size());
    double s = 0.0;
    for (double v : values) s += v;
    p.mean = s / p.seeds;
    double var = 0.0;
    if (p.seeds > 1) {
      for (double v : values) var += (v - p.mean) * (v - p.mean);
      var /= p.seeds - 1;
    }
    const double band = 3.0 * std::sqrt(var);
    p.lower = p.mean - band;
    p.upper = p.mean + band;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

EnvConfig default_env_config(const NetworkCase& net_case) {
  EnvConfig cfg;
  const auto sample = gen_scenarios(net_case, 500, 0, cfg);
  cfg.reward = calibrate_reward(net_case, cfg, sample);
  return cfg;
}

std::vector<Scenario> eval_subset(std::span<const Scenario> train, std::size_t count) {
  const std::size_t n = std::min(count, train.size());
  return {train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n)};
}

SeedLog train_seed(const NetworkCase& net_case, const EnvConfig& env_config,
                   const std::vector<Scenario>& train_set, const HyperParams& hyper,
                   const std::string& out_dir, const SeedProgress& progress) {
  GridEpisodeEnv env(GridEnv(net_case, env_config), train_set,
                     eval_subset(train_set, static_cast<std::size_t>(hyper.eval_episodes)));
  auto result = train(env, hyper, [&](const TrainLogRow& row) {
    if (progress) progress(hyper.seed, row);
  });
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  save_checkpoint((dir / "model.ckpt").string(), result.agent.to_checkpoint());
  write_file_atomic((dir / "train_log.csv").string(), training_log_csv(result.log));
  return SeedLog{hyper.seed, std::move(result.log), false, {}};
}

namespace {

bool same_scenario(const Scenario& a, const Scenario& b) {
  return a.rng_seed == b.rng_seed && a.load_scale == b.load_scale &&
         a.contingency.kind == b.contingency.kind && a.contingency.target_id == b.contingency.target_id;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const SeedProgress& progress) {
  if (cfg.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  const auto net_case = load_case_file(cfg.case_path);
  const auto env_cfg = cfg.env_path.empty() ? default_env_config(net_case) : load_env_config(cfg.env_path);
  const auto hyper = load_hyper_params(cfg.hyper_path);
  const auto train_set = read_scenarios(cfg.train_scenarios);
  if (train_set.empty()) throw std::invalid_argument(cfg.train_scenarios + ": no scenarios");
  if (!cfg.test_scenarios.empty()) {
    const auto test_set = read_scenarios(cfg.test_scenarios);
    std::set<std::uint64_t> seeds;
    for (const auto& s : train_set) seeds.insert(s.rng_seed);
    for (const auto& t : test_set) {
      if (!seeds.contains(t.rng_seed)) continue;
      for (const auto& s : train_set) {
        if (same_scenario(s, t)) {
          throw std::invalid_argument("test scenario " + std::to_string(t.id) +
                                      " also appears in the training set");
        }
      }
    }
  }

  namespace fs = std::filesystem;
  ExperimentResult out;
  for (auto seed : cfg.seeds) {
    HyperParams h = hyper;
    h.seed = seed;
    const auto dir = (fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed))).string();
    try {
      out.logs.push_back(train_seed(net_case, env_cfg, train_set, h, dir, progress));
      out.model_paths.push_back((fs::path(dir) / "model.ckpt").string());
    } catch (const std::exception& e) {
      out.logs.push_back(SeedLog{seed, {}, true, e.what()});
      out.model_paths.emplace_back();
    }
  }
  out.curve = aggregate_curves(out.logs);
  write_file_atomic((fs::path(cfg.out_dir) / "train_curves.csv").string(), train_curves_csv(out.logs));
  return out;
}

// ---------------------------------------------------------------------------
// CSV and report files

std::string eval_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "scenario_id,freq_solved,flow_solved,overflow_count,system_loss,c_sys,steps,return\n";
  for (const auto& c : r.cases) {
    os << c.scenario_id << ',' << int(c.freq_solved) << ',' << int(c.flow_solved) << ','
       << c.overflow_count << ',' << format_double(c.system_loss) << ',' << format_double(c.c_sys)
       << ',' << c.steps << ',' << format_double(c.episode_return) << '\n';
  }
  return os.str();
}

EvalReport parse_eval_report_csv(const std::string& text, const std::string& name) {
  EvalReport r{name, {}};
  for (const auto& f : read_csv_rows(text, 8, "eval report")) {
    CaseRecord c;
    c.scenario_id = std::stoi(f[0]);
    c.freq_solved = f[1] == "1";
    c.flow_solved = f[2] == "1";
    c.overflow_count = std::stoi(f[3]);
    c.system_loss = to_double(f[4]);
    c.c_sys = to_double(f[5]);
    c.steps = std::stoi(f[6]);
    c.episode_return = to_double(f[7]);
    r.cases.push_back(c);
  }
  return r;
}

std::string summary_csv(std::span<const EvalReport> agents) {
  std::ostringstream os;
  os << "agent,total_cases,unsolved_freq,unsolved_flows,success_rate_pct\n";
  for (const auto& a : agents) {
    os << csv_field(a.name) << ',' << a.total() << ',' << a.unsolved_freq() << ','
       << a.unsolved_flows() << ',' << format_double(a.success_rate()) << '\n';
  }
  return os.str();
}

std::string latency_csv(std::span<const EvalReport> agents) {
  std::ostringstream os;
  os << "agent,avg_decision_ms,max_decision_ms\n";
  for (const auto& a : agents) {
    double mx = 0.0;
    for (const auto& c : a.cases) mx = std::max(mx, c.decision_ms);
    os << csv_field(a.name) << ',' << format_double(a.mean_decision_ms()) << ','
       << format_double(mx) << '\n';
  }
  return os.str();
}

std::string overflow_hist_csv(const std::optional<EvalReport>& baseline,
                              std::span<const EvalReport> agents) {
  std::ostringstream os;
  os << "method,overflows_0,overflows_1,overflows_2,overflows_3plus,total\n";
  auto row = [&](const EvalReport& r) {
    const auto h = r.overflow_histogram();
    os << csv_field(r.name) << ',' << h[0] << ',' << h[1] << ',' << h[2] << ',' << h[3] << ','
       << r.total() << '\n';
  };
  if (baseline) row(*baseline);
  for (const auto& a : agents) row(a);
  return os.str();
}

std::string loss_diff_csv(std::span<const ComparisonReport> comparisons) {
  std::ostringstream os;
  os << "agent,scenario_id,loss_agent,loss_baseline,diff_loss_pct,agent_solved\n";
  for (const auto& c : comparisons) {
    for (const auto& d : c.diffs) {
      os << csv_field(c.agent) << ',' << d.scenario_id << ',' << format_double(d.loss_agent) << ','
         << format_double(d.loss_baseline) << ',' << format_double(d.diff_pct) << ','
         << int(d.agent_solved) << '\n';
    }
  }
  return os.str();
}

std::string train_curves_csv(std::span<const SeedLog> logs) {
  const auto curve = aggregate_curves(logs);
  std::vector<std::map<std::int64_t, double>> per_seed;
  std::ostringstream os;
  os << "env_step,mean,lower,upper,seeds";
  for (const auto& log : logs) {
    os << ",seed_" << log.seed;
    std::map<std::int64_t, double> m;
    if (!log.failed) {
      for (const auto& r : log.rows) m[r.env_step] = r.eval_return_mean;
    }
    per_seed.push_back(std::move(m));
  }
  os << '\n';
  for (const auto& p : curve) {
    os << p.env_step << ',' << format_double(p.mean) << ',' << format_double(p.lower) << ','
       << format_double(p.upper) << ',' << p.seeds;
    for (const auto& m : per_seed) {
      os << ',';
      if (auto it = m.find(p.env_step); it != m.end()) os << format_double(it->second);
    }
    os << '\n';
  }
  return os.str();
}

std::vector<TrainLogRow> parse_training_log_csv(const std::string& text) {
  std::vector<TrainLogRow> rows;
  for (const auto& f : read_csv_rows(text, 12, "training log")) {
    TrainLogRow r;
    r.env_step = std::stoll(f[0]);
    r.episode = std::stoll(f[1]);
    r.eval_return_mean = to_double(f[2]);
    r.train_return = to_double(f[3]);
    r.lambda = to_double(f[4]);
    r.loss_v = to_double(f[5]);
    r.loss_q1 = to_double(f[6]);
    r.loss_q2 = to_double(f[7]);
    r.loss_cost = to_double(f[8]);
    r.loss_pi = to_double(f[9]);
    r.overflow_rate = to_double(f[10]);
    r.alpha = to_double(f[11]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::string curves_svg(const std::vector<CurvePoint>& curve) {
  constexpr double W = 640, H = 360, L = 60, R = 20, T = 20, B = 40;
  double y0 = curve.front().lower, y1 = curve.front().upper;
  for (const auto& p : curve) {
    y0 = std::min(y0, p.lower);
    y1 = std::max(y1, p.upper);
  }
  if (y1 - y0 < 1e-9) {
    y0 -= 1.0;
    y1 += 1.0;
  }
  const double x0 = static_cast<double>(curve.front().env_step);
  const double x1 = std::max(x0 + 1.0, static_cast<double>(curve.back().env_step));
  auto X = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto Y = [&](double y) { return T + (y1 - y) / (y1 - y0) * (H - T - B); };
  auto pt = [&](double x, double y) { return pct(X(x)) + "," + pct(Y(y)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" points=\"";
  for (const auto& p : curve) os << pt(static_cast<double>(p.env_step), p.upper) << ' ';
  for (auto it = curve.rbegin(); it != curve.rend(); ++it) {
    os << pt(static_cast<double>(it->env_step), it->lower) << ' ';
  }
  os << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (const auto& p : curve) os << pt(static_cast<double>(p.env_step), p.mean) << ' ';
  os << "\"/>\n";
  if (y0 < 0.0 && y1 > 0.0) {
    os << "<line x1=\"" << pct(L) << "\" x2=\"" << pct(W - R) << "\" y1=\"" << pct(Y(0)) << "\" y2=\""
       << pct(Y(0)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  }
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << "environment steps (" << curve.front().env_step << " to " << curve.back().env_step
     << ")</text>\n";
  os << "<text x=\"4\" y=\"" << pct(Y(y1)) << "\" font-size=\"11\">" << pct(y1) << "</text>\n";
  os << "<text x=\"4\" y=\"" << pct(Y(y0)) << "\" font-size=\"11\">" << pct(y0) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace

void write_report(const ReportInput& in, const std::string& out_dir) {
  if (in.agents.empty() && in.logs.empty() && !in.baseline) {
    throw std::invalid_argument("nothing to report");
  }
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  auto put = [&](const char* name, const std::string& content) {
    write_file_atomic((dir / name).string(), content);
  };
  put("summary.csv", summary_csv(in.agents));
  put("latency.csv", latency_csv(in.agents));
  put("overflow_hist.csv", overflow_hist_csv(in.baseline, in.agents));
  put("loss_diff.csv", loss_diff_csv(in.comparisons));
  put("train_curves.csv", train_curves_csv(in.logs));
  const auto curve = aggregate_curves(in.logs);
  if (!curve.empty()) put("train_curves.svg", curves_svg(curve));

  std::ostringstream os;
  if (!in.agents.empty()) {
    os << "Agent\tTotal cases\tUnsolved cases w.r.t. freq.\tUnsolved cases w.r.t. flows\t"
          "Success rate (%)\n";
    for (const auto& a : in.agents) {
      os << a.name << '\t' << a.total() << '\t' << a.unsolved_freq() << '\t' << a.unsolved_flows()
         << '\t' << pct(a.success_rate()) << '\n';
    }
    os << '\n';
  }
  os << "Num. of Overflows\t0\t1\t2\t>=3\n";
  auto hist_row = [&](const EvalReport& r) {
    const auto h = r.overflow_histogram();
    os << r.name << '\t' << h[0] << '\t' << h[1] << '\t' << h[2] << '\t' << h[3] << '\n';
  };
  if (in.baseline) hist_row(*in.baseline);
  for (const auto& a : in.agents) hist_row(a);
  if (!in.comparisons.empty()) {
    os << "\nAgent\tSolved cases\tMean diff_loss (%)\n";
    for (const auto& c : in.comparisons) {
      os << c.agent << '\t' << c.solved_count << '\t' << pct(c.mean_diff_solved) << '\n';
    }
  }
  if (!in.logs.empty()) {
    os << "\nSeed\tEval points\tFinal-10 mean eval return\n";
    for (const auto& log : in.logs) {
      os << log.seed << '\t';
      if (log.failed) {
        os << "failed: " << log.error << '\n';
        continue;
      }
      const std::size_t n = log.rows.size();
      const std::size_t k = std::min<std::size_t>(10, n);
      double s = 0.0;
      for (std::size_t i = n - k; i < n; ++i) s += log.rows[i].eval_return_mean;
      os << n << '\t' << (k ? pct(s / static_cast<double>(k)) : std::string("-")) << '\n';
    }
  }
  put("summary.txt", os.str());
}

}  // namespace lfc
