#include "lfc/case_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lfc {

namespace {

// Area demand pattern (MW), cycled when there are more than five areas.
constexpr double kAreaLoad[] = {2400.0, 1200.0, 1600.0, 1000.0, 1000.0};
constexpr double kInfeedP[] = {800.0, 500.0};
constexpr double kGovernorPmax = 300.0;
constexpr double kGovernorHeadroom = 30.0;
constexpr double kAgcHeadroom = 800.0;

class Jitter {
 public:
  explicit Jitter(std::uint64_t seed) : rng_(seed) {}
  // Multiplier uniform in [1 - spread, 1 + spread].
  double operator()(double spread) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return 1.0 + spread * (2.0 * u - 1.0);
  }

 private:
  std::mt19937_64 rng_;
};

int bus_id(int area, int b, int per_area) { return area * per_area + b + 1; }

}  // namespace

std::vector<std::string> case_templates() { return {"five_area", "two_area"}; }

NetworkCase generate_case(const std::string& name, const CaseTemplateParams& in) {
  const auto names = case_templates();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown template '" + name + "' (available: " + list + ")");
  }
  CaseTemplateParams p = in;
  if (name == "two_area" && in.areas == CaseTemplateParams{}.areas &&
      in.buses_per_area == CaseTemplateParams{}.buses_per_area) {
    p.areas = 2;
    p.buses_per_area = 2;
  }
  const int A = p.areas;
  const int B = p.buses_per_area;
  if (A < 2) throw std::invalid_argument("template needs at least 2 areas");
  if (B < 2) throw std::invalid_argument("template needs at least 2 buses per area");

  Jitter jitter(p.seed);
  NetworkCase c;
  c.base_mva = 100.0;

  for (int a = 0; a < A; ++a) {
    c.areas.push_back({a + 1, "area" + std::to_string(a + 1)});
    for (int b = 0; b < B; ++b) c.buses.push_back({bus_id(a, b, B), a + 1});
  }

  int line_id = 1;
  auto add_line = [&](int from, int to, double x, double r_ratio, double limit) {
    c.lines.push_back({line_id++, from, to, x, x * r_ratio, limit});
  };
  for (int a = 0; a < A; ++a) {
    const int internal = B >= 3 ? B : B - 1;
    for (int b = 0; b < internal; ++b) {
      add_line(bus_id(a, b, B), bus_id(a, (b + 1) % B, B), 0.02 * jitter(0.2), 0.15, 1.0);
    }
  }
  // Tie-lines: ring over areas, plus a chord 0-2 when there are 4+ areas.
  std::vector<std::pair<int, int>> ties;
  if (A == 2) {
    ties.emplace_back(0, 1);
  } else {
    for (int a = 0; a < A; ++a) ties.emplace_back(a, (a + 1) % A);
  }
  if (A >= 4) ties.emplace_back(0, 2);
  const std::size_t first_tie = c.lines.size();
  for (auto [fa, ta] : ties) {
    add_line(bus_id(fa, B - 1, B), bus_id(ta, B >= 3 ? 1 : 0, B), 0.05 * jitter(0.2), 0.25, 1.0);
  }

  const int second_infeed_area = A >= 3 ? 2 : 1;
  int gen_id = 1;
  int load_id = 1;
  double total_load = 0.0;
  for (int a = 0; a < A; ++a) {
    const double area_load = kAreaLoad[a % 5] * jitter(0.1);
    total_load += area_load;
    // Loads spread over buses 1..B-1.
    const int n_load = B - 1;
    for (int b = 1; b < B; ++b) {
      const double lp = std::round(area_load / n_load * jitter(0.15));
      const bool sheddable = b == 1 && (a == 0 || a == second_infeed_area);
      c.loads.push_back({load_id++, bus_id(a, b, B), lp, sheddable,
                         sheddable ? std::round(0.05 * lp) : 0.0});
    }
  }

  c.hvdc_infeeds.push_back({1, bus_id(0, 1, B), kInfeedP[0], 2});
  c.hvdc_infeeds.push_back({2, bus_id(second_infeed_area, 1, B), kInfeedP[1], 2});

  // AGC dispatch covers what governors and infeeds leave; area 0 and the
  // second infeed area import, the rest export.
  std::vector<double> area_demand(static_cast<std::size_t>(A), 0.0);
  for (const auto& l : c.loads) area_demand[static_cast<std::size_t>((l.bus - 1) / B)] += l.p;
  std::vector<double> agc(static_cast<std::size_t>(A), 0.0);
  double import_total = 0.0;
  for (int a = 0; a < A; ++a) {
    double local = area_demand[static_cast<std::size_t>(a)] - (kGovernorPmax - kGovernorHeadroom);
    for (const auto& h : c.hvdc_infeeds) {
      if ((h.bus - 1) / B == a) local -= h.p;
    }
    if (a == 0 || a == second_infeed_area) {
      const double imported = a == 0 ? 0.25 * area_demand[0] : 0.08 * area_demand[static_cast<std::size_t>(a)];
      agc[static_cast<std::size_t>(a)] = local - imported;
      import_total += imported;
    } else {
      agc[static_cast<std::size_t>(a)] = local;
    }
  }
  int exporters = 0;
  for (int a = 0; a < A; ++a) {
    if (a != 0 && a != second_infeed_area) ++exporters;
  }
  for (int a = 0; a < A; ++a) {
    if (a == 0 || a == second_infeed_area) continue;
    agc[static_cast<std::size_t>(a)] += exporters > 0 ? import_total / exporters : 0.0;
  }
  if (exporters == 0) agc[0] += import_total;

  std::vector<std::size_t> agc_index;
  for (int a = 0; a < A; ++a) {
    const double pa = std::max(100.0, std::round(agc[static_cast<std::size_t>(a)]));
    Generator g;
    g.id = gen_id++;
    g.bus = bus_id(a, 0, B);
    g.p = pa;
    g.p_min = std::round(0.3 * pa);
    g.p_max = pa + kAgcHeadroom;
    g.ramp_limit = 500.0;
    g.reserve = 600.0;
    g.cost_coeffs = {100.0, std::round(20.0 * jitter(0.25) * 100.0) / 100.0, 0.004 * jitter(0.25)};
    g.governor_gain = 0.0;
    agc_index.push_back(c.generators.size());
    c.generators.push_back(g);

    Generator gov;
    gov.id = gen_id++;
    gov.bus = bus_id(a, B >= 3 ? 2 : 1, B);
    gov.p = kGovernorPmax - kGovernorHeadroom;
    gov.p_min = 0.3 * kGovernorPmax;
    gov.p_max = kGovernorPmax;
    gov.ramp_limit = 100.0;
    gov.reserve = kGovernorHeadroom;
    gov.cost_coeffs = {50.0, std::round(30.0 * jitter(0.2) * 100.0) / 100.0, 0.006};
    gov.governor_gain = 1.0;
    c.generators.push_back(gov);
  }
  c.beta = std::round(0.2 * total_load);

  // Balance losses on the AGC units of the exporting areas.
  finalize(c);
  std::vector<std::size_t> slack;
  for (int a = 0; a < A; ++a) {
    if (a != 0 && a != second_infeed_area) slack.push_back(agc_index[static_cast<std::size_t>(a)]);
  }
  if (slack.empty()) slack.push_back(agc_index[0]);
  FlowSolution base;
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<double> inj(c.buses.size(), 0.0);
    double net = 0.0;
    for (const auto& g : c.generators) {
      inj[c.bus_index.at(g.bus)] += g.p;
      net += g.p;
    }
    for (const auto& h : c.hvdc_infeeds) {
      inj[c.bus_index.at(h.bus)] += h.p;
      net += h.p;
    }
    double load_total = 0.0;
    for (const auto& l : c.loads) {
      inj[c.bus_index.at(l.bus)] -= l.p;
      net -= l.p;
      load_total += l.p;
    }
    for (const auto& l : c.loads) inj[c.bus_index.at(l.bus)] -= net * l.p / load_total;
    base = dc_power_flow(c, inj);
    const double mismatch = net - base.total_loss;
    if (std::abs(mismatch) < 1e-9) break;
    for (auto i : slack) {
      c.generators[i].p -= mismatch / static_cast<double>(slack.size());
      c.generators[i].p_max = std::max(c.generators[i].p_max, c.generators[i].p);
    }
  }

  for (std::size_t k = 0; k < c.lines.size(); ++k) {
    const double f = std::abs(base.line_flows[k]);
    if (k < first_tie) {
      c.lines[k].limit = std::round(std::max(3.0 * f, 800.0));
    } else {
      c.lines[k].limit = std::round(std::max(1.35 * f, f + 120.0));
    }
  }

  // Flowgates: import interfaces of both infeed areas and, with 5+ areas,
  // the corridor out of area 3.
  int gate_id = 1;
  auto import_gate = [&](int area, double margin) {
    Flowgate g;
    g.id = gate_id++;
    double flow = 0.0;
    for (std::size_t t = 0; t < ties.size(); ++t) {
      const auto [fa, ta] = ties[t];
      if (fa != area && ta != area) continue;
      const int dir = ta == area ? 1 : -1;
      const auto& line = c.lines[first_tie + t];
      g.members.push_back({line.id, dir});
      flow += dir * base.line_flows[first_tie + t];
    }
    g.limit = std::round(std::abs(flow) + margin);
    c.flowgates.push_back(g);
  };
  import_gate(0, 0.2 * kInfeedP[0]);
  import_gate(second_infeed_area, 0.25 * kInfeedP[1]);
  if (A >= 5) {
    Flowgate g;
    g.id = gate_id++;
    double flow = 0.0;
    for (std::size_t t = 0; t < ties.size(); ++t) {
      const auto [fa, ta] = ties[t];
      if (fa == 3 || ta == 3) {
        const int dir = fa == 3 ? 1 : -1;
        g.members.push_back({c.lines[first_tie + t].id, dir});
        flow += dir * base.line_flows[first_tie + t];
      }
    }
    g.limit = std::round(std::abs(flow) * 1.3 + 100.0);
    c.flowgates.push_back(g);
  }
  finalize(c);
  return c;
}

}  // namespace lfc
