#include "lfc/power_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace lfc {

using nlohmann::json;

namespace {

constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) {
    throw CaseParseError(where + ": expected an object");
  }
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw CaseParseError(where + "." + key + ": missing field");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw CaseParseError(where + "." + key + ": " + e.what());
  }
}

const json& array_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw CaseParseError(std::string(key) + ": missing field");
  }
  if (!it->is_array()) {
    throw CaseParseError(std::string(key) + ": expected an array");
  }
  return *it;
}

std::string at(const char* key, std::size_t i) {
  return std::string(key) + "[" + std::to_string(i) + "]";
}

// Converts a byte offset from the JSON parser into "line L, column C".
std::string locate(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

void fail(const std::string& msg) { throw CaseValidationError(msg); }

std::unordered_map<int, std::size_t> index_buses(const std::vector<Bus>& buses) {
  std::unordered_map<int, std::size_t> idx;
  for (std::size_t i = 0; i < buses.size(); ++i) idx.emplace(buses[i].id, i);
  return idx;
}

// Lowest-numbered bus id.
std::size_t pick_reference(const std::vector<Bus>& buses) {
  std::size_t ref = 0;
  for (std::size_t i = 1; i < buses.size(); ++i) {
    if (buses[i].id < buses[ref].id) ref = i;
  }
  return ref;
}

bool connected(std::size_t n_bus, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (n_bus == 0) return true;
  std::vector<std::vector<std::size_t>> adj(n_bus);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(n_bus, 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  return reached == n_bus;
}

}  // namespace

std::size_t NetworkCase::sheddable_count() const {
  return static_cast<std::size_t>(
      std::count_if(loads.begin(), loads.end(), [](const Load& l) { return l.sheddable; }));
}

std::vector<std::size_t> NetworkCase::sheddable_loads() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    if (loads[i].sheddable) out.push_back(i);
  }
  return out;
}

bool NetworkCase::is_tie_line(const Line& line) const {
  const auto& f = buses.at(bus_index.at(line.from_bus));
  const auto& t = buses.at(bus_index.at(line.to_bus));
  return f.area_id != t.area_id;
}

std::vector<std::size_t> NetworkCase::tie_lines() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_tie_line(lines[i])) out.push_back(i);
  }
  return out;
}

void finalize(NetworkCase& c) {
  if (!(c.base_mva > 0.0)) fail("base_mva must be positive");
  if (!(c.beta > 0.0)) fail("beta must be positive");
  if (c.buses.empty()) fail("case has no buses");

  std::unordered_set<int> area_ids;
  for (const auto& a : c.areas) {
    if (!area_ids.insert(a.id).second) fail("duplicate area id " + std::to_string(a.id));
  }

  c.bus_index.clear();
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    if (!c.bus_index.emplace(c.buses[i].id, i).second) {
      fail("duplicate bus id " + std::to_string(c.buses[i].id));
    }
    if (!area_ids.empty() && !area_ids.count(c.buses[i].area_id)) {
      fail("bus " + std::to_string(c.buses[i].id) + ": unknown area " +
           std::to_string(c.buses[i].area_id));
    }
  }
  auto require_bus = [&](int bus, const std::string& who) {
    if (!c.bus_index.count(bus)) fail(who + ": unknown bus " + std::to_string(bus));
  };

  c.line_index.clear();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < c.lines.size(); ++i) {
    const auto& l = c.lines[i];
    const std::string who = "line " + std::to_string(l.id);
    if (!c.line_index.emplace(l.id, i).second) fail("duplicate line id " + std::to_string(l.id));
    require_bus(l.from_bus, who);
    require_bus(l.to_bus, who);
    if (l.from_bus == l.to_bus) fail(who + ": from_bus equals to_bus");
    if (!(l.x > 0.0)) fail(who + ": nonpositive reactance");
    if (!(l.r >= 0.0)) fail(who + ": negative resistance");
    if (!(l.limit > 0.0)) fail(who + ": nonpositive limit");
    edges.emplace_back(c.bus_index[l.from_bus], c.bus_index[l.to_bus]);
  }
  if (!connected(c.buses.size(), edges)) fail("network is disconnected");

  std::unordered_set<int> ids;
  for (const auto& g : c.generators) {
    const std::string who = "generator " + std::to_string(g.id);
    if (!ids.insert(g.id).second) fail("duplicate generator id " + std::to_string(g.id));
    require_bus(g.bus, who);
    if (!(g.p_min <= g.p && g.p <= g.p_max)) fail(who + ": p outside [p_min, p_max]");
    if (!(g.ramp_limit >= 0.0)) fail(who + ": negative ramp_limit");
    if (!(g.reserve >= 0.0)) fail(who + ": negative reserve");
    if (!(g.governor_gain >= 0.0)) fail(who + ": negative governor_gain");
  }
  ids.clear();
  for (const auto& l : c.loads) {
    const std::string who = "load " + std::to_string(l.id);
    if (!ids.insert(l.id).second) fail("duplicate load id " + std::to_string(l.id));
    require_bus(l.bus, who);
    if (!(l.p >= 0.0)) fail(who + ": negative demand");
    if (!(l.shed_max >= 0.0) || l.shed_max > l.p) fail(who + ": shed_max outside [0, p]");
  }
  ids.clear();
  for (const auto& h : c.hvdc_infeeds) {
    const std::string who = "hvdc infeed " + std::to_string(h.id);
    if (!ids.insert(h.id).second) fail("duplicate hvdc infeed id " + std::to_string(h.id));
    require_bus(h.bus, who);
    if (h.poles != 1 && h.poles != 2) fail(who + ": poles must be 1 or 2");
  }
  ids.clear();
  for (const auto& g : c.flowgates) {
    const std::string who = "flowgate " + std::to_string(g.id);
    if (!ids.insert(g.id).second) fail("duplicate flowgate id " + std::to_string(g.id));
    if (g.members.empty()) fail(who + ": empty member list");
    if (!(g.limit > 0.0)) fail(who + ": nonpositive limit");
    for (const auto& m : g.members) {
      if (!c.line_index.count(m.line_id)) {
        fail(who + ": unknown line " + std::to_string(m.line_id));
      }
      if (m.direction != 1 && m.direction != -1) fail(who + ": direction must be +1 or -1");
    }
  }
  c.reference_bus = pick_reference(c.buses);
}

NetworkCase load_case(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw CaseParseError("case file " + locate(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw CaseParseError("case file: top level must be an object");

  NetworkCase c;
  c.base_mva = field<double>(doc, "base_mva", "case");
  c.beta = field<double>(doc, "beta", "case");

  const auto& areas = array_field(doc, "areas");
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const auto w = at("areas", i);
    c.areas.push_back({field<int>(areas[i], "id", w), field<std::string>(areas[i], "name", w)});
  }
  const auto& buses = array_field(doc, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto w = at("buses", i);
    c.buses.push_back({field<int>(buses[i], "id", w), field<int>(buses[i], "area_id", w)});
  }
  const auto& lines = array_field(doc, "lines");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto w = at("lines", i);
    const auto& j = lines[i];
    c.lines.push_back({field<int>(j, "id", w), field<int>(j, "from_bus", w),
                       field<int>(j, "to_bus", w), field<double>(j, "x", w),
                       field<double>(j, "r", w), field<double>(j, "limit", w)});
  }
  const auto& gens = array_field(doc, "generators");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto w = at("generators", i);
    const auto& j = gens[i];
    Generator g;
    g.id = field<int>(j, "id", w);
    g.bus = field<int>(j, "bus", w);
    g.p = field<double>(j, "p", w);
    g.p_min = field<double>(j, "p_min", w);
    g.p_max = field<double>(j, "p_max", w);
    g.ramp_limit = field<double>(j, "ramp_limit", w);
    g.reserve = field<double>(j, "reserve", w);
    auto coeffs = field<std::vector<double>>(j, "cost_coeffs", w);
    if (coeffs.size() != 3) throw CaseParseError(w + ".cost_coeffs: expected 3 numbers");
    std::copy(coeffs.begin(), coeffs.end(), g.cost_coeffs.begin());
    g.governor_gain = field<double>(j, "governor_gain", w);
    c.generators.push_back(g);
  }
  const auto& loads = array_field(doc, "loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const auto w = at("loads", i);
    const auto& j = loads[i];
    c.loads.push_back({field<int>(j, "id", w), field<int>(j, "bus", w), field<double>(j, "p", w),
                       field<bool>(j, "sheddable", w), field<double>(j, "shed_max", w)});
  }
  const auto& infeeds = array_field(doc, "hvdc_infeeds");
  for (std::size_t i = 0; i < infeeds.size(); ++i) {
    const auto w = at("hvdc_infeeds", i);
    const auto& j = infeeds[i];
    c.hvdc_infeeds.push_back({field<int>(j, "id", w), field<int>(j, "bus", w),
                              field<double>(j, "p", w), field<int>(j, "poles", w)});
  }
  const auto& gates = array_field(doc, "flowgates");
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const auto w = at("flowgates", i);
    const auto& j = gates[i];
    Flowgate g;
    g.id = field<int>(j, "id", w);
    g.limit = field<double>(j, "limit", w);
    const auto members = field<json>(j, "members", w);
    if (!members.is_array()) throw CaseParseError(w + ".members: expected an array");
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto mw = w + "." + at("members", k);
      g.members.push_back({field<int>(members[k], "line_id", mw),
                           field<int>(members[k], "direction", mw)});
    }
    c.flowgates.push_back(std::move(g));
  }
  finalize(c);
  return c;
}

NetworkCase load_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_case(ss.str());
  } catch (const CaseParseError& e) {
    throw CaseParseError(path + ": " + e.what());
  } catch (const CaseValidationError& e) {
    throw CaseValidationError(path + ": " + e.what());
  }
}

std::string dump_case(const NetworkCase& c) {
  json doc;
  doc["base_mva"] = c.base_mva;
  doc["beta"] = c.beta;
  doc["areas"] = json::array();
  for (const auto& a : c.areas) doc["areas"].push_back({{"id", a.id}, {"name", a.name}});
  doc["buses"] = json::array();
  for (const auto& b : c.buses) doc["buses"].push_back({{"id", b.id}, {"area_id", b.area_id}});
  doc["lines"] = json::array();
  for (const auto& l : c.lines) {
    doc["lines"].push_back({{"id", l.id}, {"from_bus", l.from_bus}, {"to_bus", l.to_bus},
                            {"x", l.x}, {"r", l.r}, {"limit", l.limit}});
  }
  doc["generators"] = json::array();
  for (const auto& g : c.generators) {
    doc["generators"].push_back({{"id", g.id},
                                 {"bus", g.bus},
                                 {"p", g.p},
                                 {"p_min", g.p_min},
                                 {"p_max", g.p_max},
                                 {"ramp_limit", g.ramp_limit},
                                 {"reserve", g.reserve},
                                 {"cost_coeffs", g.cost_coeffs},
                                 {"governor_gain", g.governor_gain}});
  }
  doc["loads"] = json::array();
  for (const auto& l : c.loads) {
    doc["loads"].push_back({{"id", l.id}, {"bus", l.bus}, {"p", l.p},
                            {"sheddable", l.sheddable}, {"shed_max", l.shed_max}});
  }
  doc["hvdc_infeeds"] = json::array();
  for (const auto& h : c.hvdc_infeeds) {
    doc["hvdc_infeeds"].push_back({{"id", h.id}, {"bus", h.bus}, {"p", h.p}, {"poles", h.poles}});
  }
  doc["flowgates"] = json::array();
  for (const auto& g : c.flowgates) {
    json members = json::array();
    for (const auto& m : g.members) {
      members.push_back({{"line_id", m.line_id}, {"direction", m.direction}});
    }
    doc["flowgates"].push_back({{"id", g.id}, {"members", members}, {"limit", g.limit}});
  }
  return doc.dump(2) + "\n";
}

DcFlowModel::DcFlowModel(const NetworkCase& c) : base_mva_(c.base_mva) {
  const std::size_t n = c.buses.size();
  if (n == 0) throw SingularSystemError("dc power flow: case has no buses");
  const auto idx = index_buses(c.buses);
  const std::size_t ref = pick_reference(c.buses);

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& l : c.lines) {
    auto f = idx.find(l.from_bus);
    auto t = idx.find(l.to_bus);
    if (f == idx.end() || t == idx.end()) {
      throw SingularSystemError("dc power flow: line " + std::to_string(l.id) +
                                " references an unknown bus");
    }
    if (!(l.x > 0.0)) {
      throw SingularSystemError("dc power flow: line " + std::to_string(l.id) +
                                " has nonpositive reactance");
    }
    edges.emplace_back(f->second, t->second);
    line_from_.push_back(f->second);
    line_to_.push_back(t->second);
    line_x_.push_back(l.x);
    line_r_.push_back(l.r);
  }
  if (!connected(n, edges)) {
    throw SingularSystemError("dc power flow: susceptance matrix is singular (islanded network)");
  }

  reduced_pos_.assign(n, kNoRow);
  reduced_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != ref) reduced_pos_[i] = reduced_++;
  }

  const std::size_t m = reduced_;
  chol_.assign(m * m, 0.0);
  for (std::size_t k = 0; k < c.lines.size(); ++k) {
    const double y = 1.0 / c.lines[k].x;
    const auto rf = reduced_pos_[edges[k].first];
    const auto rt = reduced_pos_[edges[k].second];
    if (rf != kNoRow) chol_[rf * m + rf] += y;
    if (rt != kNoRow) chol_[rt * m + rt] += y;
    if (rf != kNoRow && rt != kNoRow) {
      chol_[rf * m + rt] -= y;
      chol_[rt * m + rf] -= y;
    }
  }

  // In-place Cholesky; B' is symmetric positive definite for a connected grid.
  for (std::size_t j = 0; j < m; ++j) {
    double d = chol_[j * m + j];
    for (std::size_t k = 0; k < j; ++k) d -= chol_[j * m + k] * chol_[j * m + k];
    if (!(d > 1e-12)) {
      throw SingularSystemError("dc power flow: susceptance matrix is singular");
    }
    const double ljj = std::sqrt(d);
    chol_[j * m + j] = ljj;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = chol_[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= chol_[i * m + k] * chol_[j * m + k];
      chol_[i * m + j] = s / ljj;
    }
    for (std::size_t k = j + 1; k < m; ++k) chol_[j * m + k] = 0.0;
  }
}

FlowSolution DcFlowModel::solve(std::span<const double> injections_mw) const {
  const std::size_t n = reduced_pos_.size();
  if (injections_mw.size() != n) {
    throw std::invalid_argument("dc power flow: expected " + std::to_string(n) +
                                " injections, got " + std::to_string(injections_mw.size()));
  }
  const double sum = std::accumulate(injections_mw.begin(), injections_mw.end(), 0.0);
  if (std::abs(sum) > 1e-6 * base_mva_) {
    throw ImbalanceError("dc power flow: injections sum to " + std::to_string(sum) + " MW");
  }

  const std::size_t m = reduced_;
  std::vector<double> rhs(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (reduced_pos_[i] != kNoRow) rhs[reduced_pos_[i]] = injections_mw[i] / base_mva_;
  }
  // L y = b, then L^T x = y.
  for (std::size_t i = 0; i < m; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol_[i * m + k] * rhs[k];
    rhs[i] = s / chol_[i * m + i];
  }
  for (std::size_t ii = m; ii-- > 0;) {
    double s = rhs[ii];
    for (std::size_t k = ii + 1; k < m; ++k) s -= chol_[k * m + ii] * rhs[k];
    rhs[ii] = s / chol_[ii * m + ii];
  }

  FlowSolution sol;
  sol.theta.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (reduced_pos_[i] != kNoRow) sol.theta[i] = rhs[reduced_pos_[i]];
  }
  const std::size_t k_lines = line_x_.size();
  sol.line_flows.resize(k_lines);
  sol.losses.resize(k_lines);
  for (std::size_t k = 0; k < k_lines; ++k) {
    const double f = (sol.theta[line_from_[k]] - sol.theta[line_to_[k]]) / line_x_[k] * base_mva_;
    sol.line_flows[k] = f;
    const double pu = f / base_mva_;
    sol.losses[k] = line_r_[k] * pu * pu * base_mva_;
    sol.total_loss += sol.losses[k];
  }
  return sol;
}

FlowSolution dc_power_flow(const NetworkCase& net_case, std::span<const double> injections_mw) {
  return DcFlowModel(net_case).solve(injections_mw);
}

namespace {

double member_sum(const FlowSolution& solution, const NetworkCase& c,
                  const std::vector<FlowgateMember>& members) {
  double total = 0.0;
  for (const auto& m : members) {
    std::size_t pos = 0;
    if (!c.line_index.empty()) {
      auto it = c.line_index.find(m.line_id);
      if (it == c.line_index.end()) {
        throw std::out_of_range("flowgate member references unknown line " +
                                std::to_string(m.line_id));
      }
      pos = it->second;
    } else {
      auto it = std::find_if(c.lines.begin(), c.lines.end(),
                             [&](const Line& l) { return l.id == m.line_id; });
      if (it == c.lines.end()) {
        throw std::out_of_range("flowgate member references unknown line " +
                                std::to_string(m.line_id));
      }
      pos = static_cast<std::size_t>(it - c.lines.begin());
    }
    if (pos >= solution.line_flows.size()) {
      throw std::out_of_range("flow solution has no entry for line " + std::to_string(m.line_id));
    }
    total += m.direction * solution.line_flows[pos];
  }
  return total;
}

}  // namespace

double flowgate_flow(const FlowSolution& solution, const NetworkCase& net_case,
                     const Flowgate& gate) {
  return member_sum(solution, net_case, gate.members);
}

double element_flow(const FlowSolution& solution, const NetworkCase& net_case,
                    const MonitoredElement& element) {
  return member_sum(solution, net_case, element.members);
}

std::vector<MonitoredElement> monitored_elements(const NetworkCase& c, MonitorScope scope) {
  std::vector<MonitoredElement> out;
  if (scope == MonitorScope::kAllLines) {
    for (const auto& l : c.lines) {
      out.push_back({"line " + std::to_string(l.id), {{l.id, 1}}, l.limit});
    }
    return out;
  }
  for (const auto& g : c.flowgates) {
    out.push_back({"flowgate " + std::to_string(g.id), g.members, g.limit});
  }
  for (auto k : c.tie_lines()) {
    const auto& l = c.lines[k];
    out.push_back({"tie-line " + std::to_string(l.id), {{l.id, 1}}, l.limit});
  }
  return out;
}

OverflowStats overflow_stats(std::span<const double> flows, std::span<const double> limits) {
  if (flows.size() != limits.size()) {
    throw std::invalid_argument("overflow_stats: flows and limits differ in length");
  }
  OverflowStats s;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const double excess = std::abs(flows[i]) - limits[i];
    if (excess > 0.0) {
      ++s.count;
      s.d_overflow += excess * excess;
    }
  }
  return s;
}

OverflowStats overflow_stats(const FlowSolution& solution, const NetworkCase& c,
                             MonitorScope scope) {
  const auto elements = monitored_elements(c, scope);
  std::vector<double> flows;
  std::vector<double> limits;
  for (const auto& e : elements) {
    flows.push_back(element_flow(solution, c, e));
    limits.push_back(e.limit);
  }
  return overflow_stats(flows, limits);
}

double production_cost(const NetworkCase& c, std::span<const double> outputs) {
  if (outputs.size() != c.generators.size()) {
    throw std::invalid_argument("production_cost: expected one output per generator");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& k = c.generators[i].cost_coeffs;
    const double p = outputs[i];
    total += k[0] + k[1] * p + k[2] * p * p;
  }
  return total;
}

}  // namespace lfc
