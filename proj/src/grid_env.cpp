#include "lfc/grid_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lfc/io.hpp"

namespace lfc {

using nlohmann::json;

namespace {

constexpr double kResponseTol = 1e-9;
constexpr int kResponseIterations = 60;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

const char* scope_name(MonitorScope s) {
  return s == MonitorScope::kAllLines ? "all_lines" : "monitored";
}

const char* csys_name(CsysSource s) {
  return s == CsysSource::kProductionCost ? "production_cost" : "system_loss";
}

}  // namespace

const char* to_string(ContingencyKind kind) {
  switch (kind) {
    case ContingencyKind::kNone:
      return "none";
    case ContingencyKind::kSinglePole:
      return "single_pole";
    case ContingencyKind::kDoublePole:
      return "double_pole";
    case ContingencyKind::kGenTrip:
      return "gen_trip";
  }
  return "none";
}

ContingencyKind contingency_from_string(const std::string& name) {
  if (name == "none") return ContingencyKind::kNone;
  if (name == "single_pole") return ContingencyKind::kSinglePole;
  if (name == "double_pole") return ContingencyKind::kDoublePole;
  if (name == "gen_trip") return ContingencyKind::kGenTrip;
  throw std::invalid_argument("unknown contingency kind '" + name + "'");
}

EnvConfig parse_env_config(const std::string& text) {
  const json j = json::parse(text);
  EnvConfig cfg;
  cfg.t_max = j.value("t_max", cfg.t_max);
  cfg.f_tol = j.value("f_tol", cfg.f_tol);
  cfg.reward.e1 = j.value("e1", cfg.reward.e1);
  cfg.reward.e2 = j.value("e2", cfg.reward.e2);
  cfg.reward.e3 = j.value("e3", cfg.reward.e3);
  cfg.reward.e4 = j.value("e4", cfg.reward.e4);
  cfg.reward.shed_penalty_weight = j.value("shed_penalty_weight", cfg.reward.shed_penalty_weight);
  cfg.reward.positive_requires_frequency =
      j.value("positive_requires_frequency", cfg.reward.positive_requires_frequency);
  const auto source = j.value("csys_source", std::string(csys_name(cfg.reward.csys_source)));
  if (source == "production_cost") {
    cfg.reward.csys_source = CsysSource::kProductionCost;
  } else if (source == "system_loss") {
    cfg.reward.csys_source = CsysSource::kSystemLoss;
  } else {
    throw std::invalid_argument("env config: unknown csys_source '" + source + "'");
  }
  if (j.contains("contingency_probs")) {
    const auto p = j.at("contingency_probs").get<std::vector<double>>();
    if (p.size() != 4) throw std::invalid_argument("env config: contingency_probs needs 4 entries");
    std::copy(p.begin(), p.end(), cfg.contingency_probs.begin());
  }
  if (j.contains("load_scale_range")) {
    const auto r = j.at("load_scale_range").get<std::vector<double>>();
    if (r.size() != 2 || !(r[0] <= r[1])) {
      throw std::invalid_argument("env config: load_scale_range must be [lo, hi]");
    }
    cfg.load_scale_range = {r[0], r[1]};
  }
  const auto scope = j.value("monitor", std::string(scope_name(cfg.monitor)));
  if (scope == "monitored") {
    cfg.monitor = MonitorScope::kMonitored;
  } else if (scope == "all_lines") {
    cfg.monitor = MonitorScope::kAllLines;
  } else {
    throw std::invalid_argument("env config: unknown monitor scope '" + scope + "'");
  }
  if (cfg.t_max < 1) throw std::invalid_argument("env config: t_max must be >= 1");
  if (!(cfg.f_tol > 0.0)) throw std::invalid_argument("env config: f_tol must be positive");
  const auto& r = cfg.reward;
  if (!(r.e1 > 0 && r.e2 > 0 && r.e3 > 0 && r.e4 > 0)) {
    throw std::invalid_argument("env config: e1..e4 must be positive");
  }
  double total = 0.0;
  for (double p : cfg.contingency_probs) {
    if (p < 0.0) throw std::invalid_argument("env config: negative contingency probability");
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument("env config: contingency_probs sum to zero");
  return cfg;
}

EnvConfig load_env_config(const std::string& path) {
  try {
    return parse_env_config(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string dump_env_config(const EnvConfig& cfg) {
  json j;
  j["t_max"] = cfg.t_max;
  j["f_tol"] = cfg.f_tol;
  j["e1"] = cfg.reward.e1;
  j["e2"] = cfg.reward.e2;
  j["e3"] = cfg.reward.e3;
  j["e4"] = cfg.reward.e4;
  j["csys_source"] = csys_name(cfg.reward.csys_source);
  j["shed_penalty_weight"] = cfg.reward.shed_penalty_weight;
  j["positive_requires_frequency"] = cfg.reward.positive_requires_frequency;
  j["contingency_probs"] = cfg.contingency_probs;
  j["load_scale_range"] = cfg.load_scale_range;
  j["monitor"] = scope_name(cfg.monitor);
  return j.dump(2) + "\n";
}

GridEnv::GridEnv(NetworkCase net_case, EnvConfig config)
    : case_(std::move(net_case)), config_(config), flow_(case_) {
  if (case_.bus_index.empty()) finalize(case_);
  monitored_ = monitored_elements(case_, config_.monitor);
  sheddable_ = case_.sheddable_loads();
  for (const auto& g : case_.generators) gen_bus_.push_back(case_.bus_index.at(g.bus));
  for (const auto& l : case_.loads) load_bus_.push_back(case_.bus_index.at(l.bus));
  for (const auto& h : case_.hvdc_infeeds) infeed_bus_.push_back(case_.bus_index.at(h.bus));
}

std::size_t GridEnv::observation_size() const {
  return case_.lines.size() + case_.generators.size() + sheddable_.size() + 2;
}

void GridEnv::settle(GridState& s) const {
  const std::size_t n_bus = case_.buses.size();
  std::vector<double> inj(n_bus, 0.0);
  double net = 0.0;
  double served_total = 0.0;
  for (std::size_t i = 0; i < case_.generators.size(); ++i) {
    const double p = s.gen_online[i] ? s.gen_p[i] : 0.0;
    inj[gen_bus_[i]] += p;
    net += p;
  }
  for (std::size_t i = 0; i < case_.hvdc_infeeds.size(); ++i) {
    inj[infeed_bus_[i]] += s.infeed_p[i];
    net += s.infeed_p[i];
  }
  for (std::size_t i = 0; i < case_.loads.size(); ++i) {
    const double served = s.load_p[i] - s.shed[i];
    inj[load_bus_[i]] -= served;
    net -= served;
    served_total += served;
  }
  // The mismatch is carried by frequency-sensitive load, pro rata.
  if (served_total > 1e-9) {
    for (std::size_t i = 0; i < case_.loads.size(); ++i) {
      inj[load_bus_[i]] -= net * (s.load_p[i] - s.shed[i]) / served_total;
    }
  } else {
    inj[case_.reference_bus] -= net;
  }
  s.solution = flow_.solve(inj);
  s.p_loss = net - s.solution.total_loss;
  s.freq_dev = s.p_loss / case_.beta;

  s.monitored_flows.resize(monitored_.size());
  std::vector<double> limits(monitored_.size());
  for (std::size_t k = 0; k < monitored_.size(); ++k) {
    s.monitored_flows[k] = element_flow(s.solution, case_, monitored_[k]);
    limits[k] = monitored_[k].limit;
  }
  s.overflow = overflow_stats(s.monitored_flows, limits);
}

GridState GridEnv::apply_primary_response(GridState s) const {
  const auto& gens = case_.generators;
  settle(s);
  for (int iter = 0; iter < kResponseIterations; ++iter) {
    const double need = -s.p_loss;
    if (std::abs(need) < kResponseTol) break;
    const double dir = need > 0 ? 1.0 : -1.0;

    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      if (!s.gen_online[i] || !(gens[i].governor_gain > 0.0)) continue;
      const double room = dir > 0 ? gens[i].p_max - s.gen_p[i] : s.gen_p[i] - gens[i].p_min;
      if (room > 1e-12) active.push_back(i);
    }
    double remaining = std::abs(need);
    double moved = 0.0;
    while (remaining > 1e-12 && !active.empty()) {
      double gain_sum = 0.0;
      for (auto i : active) gain_sum += gens[i].governor_gain;
      std::vector<std::size_t> still;
      bool clamped = false;
      for (auto i : active) {
        const double room = dir > 0 ? gens[i].p_max - s.gen_p[i] : s.gen_p[i] - gens[i].p_min;
        const double share = remaining * gens[i].governor_gain / gain_sum;
        if (share >= room) {
          s.gen_p[i] = dir > 0 ? gens[i].p_max : gens[i].p_min;
          remaining -= room;
          moved += room;
          clamped = true;
        } else {
          still.push_back(i);
        }
      }
      if (!clamped) {
        for (auto i : still) {
          const double share = remaining * gens[i].governor_gain / gain_sum;
          s.gen_p[i] += dir * share;
          moved += share;
        }
        remaining = 0.0;
      }
      active.swap(still);
    }
    settle(s);
    if (moved < 1e-12) break;
  }
  return s;
}

std::pair<GridState, std::vector<double>> GridEnv::reset(const Scenario& scenario) const {
  GridState s;
  const auto& c = case_;
  s.gen_p.resize(c.generators.size());
  s.gen_online.assign(c.generators.size(), 1);
  for (std::size_t i = 0; i < c.generators.size(); ++i) s.gen_p[i] = c.generators[i].p;
  if (!scenario.load_scale.empty() && scenario.load_scale.size() != c.loads.size()) {
    throw std::invalid_argument("scenario " + std::to_string(scenario.id) + ": expected " +
                                std::to_string(c.loads.size()) + " load scales");
  }
  s.load_p.resize(c.loads.size());
  for (std::size_t i = 0; i < c.loads.size(); ++i) {
    const double k = scenario.load_scale.empty() ? 1.0 : scenario.load_scale[i];
    s.load_p[i] = c.loads[i].p * k;
  }
  s.shed.assign(c.loads.size(), 0.0);
  s.infeed_p.resize(c.hvdc_infeeds.size());
  for (std::size_t i = 0; i < c.hvdc_infeeds.size(); ++i) s.infeed_p[i] = c.hvdc_infeeds[i].p;

  const auto& ct = scenario.contingency;
  auto find_infeed = [&]() -> std::size_t {
    for (std::size_t i = 0; i < c.hvdc_infeeds.size(); ++i) {
      if (c.hvdc_infeeds[i].id == ct.target_id) return i;
    }
    throw std::invalid_argument("unknown contingency target: hvdc infeed " +
                                std::to_string(ct.target_id));
  };
  switch (ct.kind) {
    case ContingencyKind::kNone:
      break;
    case ContingencyKind::kSinglePole:
      s.infeed_p[find_infeed()] *= 0.5;
      break;
    case ContingencyKind::kDoublePole:
      s.infeed_p[find_infeed()] = 0.0;
      break;
    case ContingencyKind::kGenTrip: {
      auto it = std::find_if(c.generators.begin(), c.generators.end(),
                             [&](const Generator& g) { return g.id == ct.target_id; });
      if (it == c.generators.end()) {
        throw std::invalid_argument("unknown contingency target: generator " +
                                    std::to_string(ct.target_id));
      }
      const auto i = static_cast<std::size_t>(it - c.generators.begin());
      s.gen_online[i] = 0;
      s.gen_p[i] = 0.0;
      break;
    }
  }
  settle(s);
  s.p_loss_pre_response = s.p_loss;
  s = apply_primary_response(std::move(s));
  s.step_index = 0;
  auto obs = observe(s);
  return {std::move(s), std::move(obs)};
}

std::vector<double> GridEnv::observe(const GridState& s) const {
  std::vector<double> obs;
  obs.reserve(observation_size());
  for (std::size_t k = 0; k < case_.lines.size(); ++k) {
    obs.push_back(s.solution.line_flows[k] / case_.lines[k].limit);
  }
  for (std::size_t i = 0; i < case_.generators.size(); ++i) {
    obs.push_back(s.gen_online[i] ? s.gen_p[i] / case_.generators[i].p_max : 0.0);
  }
  for (auto j : sheddable_) {
    obs.push_back(s.load_p[j] > 0.0 ? (s.load_p[j] - s.shed[j]) / s.load_p[j] : 0.0);
  }
  obs.push_back(s.required_injection() / case_.base_mva);
  obs.push_back(s.freq_dev);
  return obs;
}

RewardBreakdown GridEnv::compute_reward(const GridState& after, const ActionVector& applied,
                                        double required_before) const {
  const auto& rc = config_.reward;
  RewardBreakdown b;
  if (rc.csys_source == CsysSource::kProductionCost) {
    std::vector<double> p(after.gen_p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!after.gen_online[i]) p[i] = 0.0;
    }
    b.c_sys = production_cost(case_, p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!after.gen_online[i]) b.c_sys -= case_.generators[i].cost_coeffs[0];
    }
  } else {
    b.c_sys = after.solution.total_loss;
  }
  const double shed = std::accumulate(applied.dp_shed.begin(), applied.dp_shed.end(), 0.0);
  b.shed_penalty = rc.shed_penalty_weight * shed;
  b.c_sys += b.shed_penalty;
  b.d_overflow = after.overflow.d_overflow;
  b.overflow_count = after.overflow.count;
  const double gen = std::accumulate(applied.dp_gen.begin(), applied.dp_gen.end(), 0.0);
  // Shedding lowers demand, so it counts towards the required injection.
  b.d_p = std::abs(gen + shed - required_before);

  const bool freq_ok = !rc.positive_requires_frequency || frequency_ok(after);
  b.positive_branch = b.d_overflow == 0.0 && freq_ok;
  b.reward = b.positive_branch ? rc.e1 - b.c_sys / rc.e2 : -b.d_overflow / rc.e3 - b.d_p / rc.e4;
  return b;
}

StepResult GridEnv::step(const GridState& state, const ActionVector& action) const {
  const auto& gens = case_.generators;
  if (action.dp_gen.size() != gens.size() || action.dp_shed.size() != sheddable_.size()) {
    throw std::invalid_argument("step: action has " + std::to_string(action.dp_gen.size()) +
                                "+" + std::to_string(action.dp_shed.size()) +
                                " entries, case needs " + std::to_string(gens.size()) + "+" +
                                std::to_string(sheddable_.size()));
  }
  StepResult out;
  GridState next = state;
  out.applied.dp_gen.assign(gens.size(), 0.0);
  out.applied.dp_shed.assign(sheddable_.size(), 0.0);
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const double dp = action.dp_gen[i];
    if (!std::isfinite(dp)) throw std::invalid_argument("step: non-finite generator action");
    if (!next.gen_online[i]) continue;
    const auto& g = gens[i];
    const double ramped = std::clamp(dp, -g.ramp_limit, g.ramp_limit);
    const double target = std::clamp(next.gen_p[i] + ramped, g.p_min, g.p_max);
    out.applied.dp_gen[i] = target - next.gen_p[i];
    next.gen_p[i] = target;
  }
  for (std::size_t k = 0; k < sheddable_.size(); ++k) {
    const double req = action.dp_shed[k];
    if (!std::isfinite(req)) throw std::invalid_argument("step: non-finite shed action");
    const auto j = sheddable_[k];
    const double room = case_.loads[j].shed_max - next.shed[j];
    const double amount = std::clamp(req, 0.0, std::max(room, 0.0));
    out.applied.dp_shed[k] = amount;
    next.shed[j] += amount;
  }
  const double required_before = state.required_injection();
  next.step_index = state.step_index + 1;

  try {
    next = apply_primary_response(std::move(next));
  } catch (const SingularSystemError&) {
    out.aborted = true;
  } catch (const ImbalanceError&) {
    out.aborted = true;
  }
  if (out.aborted) {
    out.state = state;
    out.state.step_index = state.step_index + 1;
    out.observation = observe(out.state);
    out.reward = -config_.reward.e1;
    out.cost = static_cast<double>(out.state.overflow.count);
    out.done = true;
    return out;
  }

  out.breakdown = compute_reward(next, out.applied, required_before);
  out.reward = out.breakdown.reward;
  out.cost = static_cast<double>(next.overflow.count);
  out.done = (frequency_ok(next) && next.overflow.count == 0) || next.step_index >= config_.t_max;
  out.observation = observe(next);
  out.state = std::move(next);
  return out;
}

ActionVector GridEnv::baseline_policy(const GridState& s) const {
  const auto& gens = case_.generators;
  ActionVector a;
  a.dp_gen.assign(gens.size(), 0.0);
  a.dp_shed.assign(sheddable_.size(), 0.0);
  const double required = s.required_injection();
  if (required == 0.0) return a;

  std::vector<double> reserve(gens.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (!s.gen_online[i]) continue;
    const double room = required > 0 ? gens[i].p_max - s.gen_p[i] : s.gen_p[i] - gens[i].p_min;
    reserve[i] = std::max(0.0, std::min(gens[i].reserve, room));
    total += reserve[i];
  }
  if (!(total > 0.0)) return a;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto& g = gens[i];
    double dp = required * reserve[i] / total;
    dp = std::clamp(dp, -g.ramp_limit, g.ramp_limit);
    dp = std::clamp(s.gen_p[i] + dp, g.p_min, g.p_max) - s.gen_p[i];
    a.dp_gen[i] = s.gen_online[i] ? dp : 0.0;
  }
  return a;
}

std::vector<Scenario> gen_scenarios(const NetworkCase& c, int count, std::uint64_t rng_seed,
                                    const EnvConfig& config) {
  if (count <= 0) throw std::invalid_argument("gen_scenarios: count must be positive");
  std::mt19937_64 rng(rng_seed);
  const auto [lo, hi] = config.load_scale_range;
  const auto& probs = config.contingency_probs;
  const double total = probs[0] + probs[1] + probs[2] + probs[3];

  std::vector<int> two_pole;
  std::vector<int> any_infeed;
  for (const auto& h : c.hvdc_infeeds) {
    if (h.p > 0.0) {
      any_infeed.push_back(h.id);
      if (h.poles == 2) two_pole.push_back(h.id);
    }
  }
  std::vector<int> gen_ids;
  for (const auto& g : c.generators) gen_ids.push_back(g.id);

  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    Scenario s;
    s.id = n;
    s.load_scale.resize(c.loads.size());
    for (auto& k : s.load_scale) k = lo + (hi - lo) * uniform01(rng);

    const double u = uniform01(rng) * total;
    double acc = 0.0;
    int kind = 3;
    for (int k = 0; k < 4; ++k) {
      acc += probs[static_cast<std::size_t>(k)];
      if (u < acc) {
        kind = k;
        break;
      }
    }
    while (kind < 3 && probs[static_cast<std::size_t>(kind)] == 0.0) ++kind;
    const double pick = uniform01(rng);
    auto choose = [&](const std::vector<int>& ids) {
      return ids[std::min(ids.size() - 1, static_cast<std::size_t>(pick * static_cast<double>(ids.size())))];
    };
    switch (kind) {
      case 1:
        if (!two_pole.empty()) s.contingency = {ContingencyKind::kSinglePole, choose(two_pole)};
        break;
      case 2:
        if (!any_infeed.empty()) s.contingency = {ContingencyKind::kDoublePole, choose(any_infeed)};
        break;
      case 3:
        if (!gen_ids.empty()) s.contingency = {ContingencyKind::kGenTrip, choose(gen_ids)};
        break;
      default:
        break;
    }
    s.rng_seed = rng();
    out.push_back(std::move(s));
  }
  return out;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["id"] = s.id;
  j["load_scale"] = s.load_scale;
  j["contingency"] = {{"kind", to_string(s.contingency.kind)}, {"target", s.contingency.target_id}};
  j["rng_seed"] = s.rng_seed;
  return j.dump();
}

Scenario scenario_from_json(const std::string& line) {
  const json j = json::parse(line);
  Scenario s;
  s.id = j.at("id").get<int>();
  s.load_scale = j.at("load_scale").get<std::vector<double>>();
  const auto& c = j.at("contingency");
  s.contingency.kind = contingency_from_string(c.at("kind").get<std::string>());
  s.contingency.target_id = c.value("target", -1);
  s.rng_seed = j.value("rng_seed", std::uint64_t{0});
  return s;
}

void write_scenarios(const std::string& path, std::span<const Scenario> scenarios) {
  std::string text;
  for (const auto& s : scenarios) {
    text += scenario_to_json(s);
    text += '\n';
  }
  write_file_atomic(path, text);
}

std::vector<Scenario> read_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::vector<Scenario> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scenario_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

RewardConfig calibrate_reward(const NetworkCase& c, const EnvConfig& config,
                              std::span<const Scenario> sample) {
  EnvConfig probe = config;
  probe.reward.shed_penalty_weight = 0.0;
  GridEnv env(c, probe);
  double max_csys = 0.0;
  double max_overflow = 0.0;
  for (const auto& sc : sample) {
    auto [state, obs] = env.reset(sc);
    max_overflow = std::max(max_overflow, state.overflow.d_overflow);
    const auto r = env.step(state, env.baseline_policy(state));
    max_csys = std::max(max_csys, r.breakdown.c_sys);
    max_overflow = std::max(max_overflow, r.breakdown.d_overflow);
  }
  RewardConfig out = config.reward;
  out.e1 = 10.0;
  out.e2 = max_csys > 0.0 ? max_csys / 5.0 : 1.0;
  out.e3 = max_overflow > 0.0 ? max_overflow / 10.0 : 1.0;
  out.e4 = c.base_mva;
  if (config.reward.csys_source == CsysSource::kProductionCost) {
    double marginal = 0.0;
    for (const auto& g : c.generators) {
      marginal = std::max(marginal, g.cost_coeffs[1] + 2.0 * g.cost_coeffs[2] * g.p_max);
    }
    out.shed_penalty_weight = 10.0 * marginal;
  } else {
    double shed_total = 0.0;
    for (const auto& l : c.loads) {
      if (l.sheddable) shed_total += l.shed_max;
    }
    // Shedding every sheddable load in full costs E1 of reward.
    out.shed_penalty_weight = shed_total > 0.0 ? out.e1 * out.e2 / shed_total : 0.0;
  }
  return out;
}

}  // namespace lfc
