#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "dc_oracle.hpp"
#include "lfc/case_gen.hpp"
#include "lfc/io.hpp"
#include "lfc/power_net.hpp"
#include "support.hpp"

using namespace lfc;
using namespace lfc::test;

namespace {

const char* kTwoBus = R"({
  "base_mva": 100, "beta": 50,
  "areas": [{"id": 1, "name": "one"}],
  "buses": [{"id": 1, "area_id": 1}, {"id": 2, "area_id": 1}],
  "lines": [{"id": 1, "from_bus": 1, "to_bus": 2, "x": 0.5, "r": 0.01, "limit": 200}],
  "generators": [], "loads": [], "hvdc_infeeds": [], "flowgates": []
})";

}  // namespace

TEST_CASE("load_case accepts the smallest valid case") {
  const auto c = load_case(kTwoBus);
  CHECK(c.buses.size() == 2);
  CHECK(c.lines.size() == 1);
  CHECK(c.reference_bus == 0);
}

TEST_CASE("load_case rejects a line to an unknown bus") {
  std::string text = kTwoBus;
  text.replace(text.find("\"to_bus\": 2"), 11, "\"to_bus\": 7");
  CHECK_THROWS_WITH_AS(load_case(text), doctest::Contains("unknown bus"), CaseValidationError);
}

TEST_CASE("load_case reports syntax errors with position") {
  std::string text = kTwoBus;
  text.insert(text.find("\"beta\""), "}");
  try {
    load_case(text);
    FAIL("expected a parse error");
  } catch (const CaseParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
}

TEST_CASE("load_case names the violated invariant") {
  std::string text = kTwoBus;
  text.replace(text.find("\"x\": 0.5"), 8, "\"x\": 0.0");
  CHECK_THROWS_WITH_AS(load_case(text), doctest::Contains("nonpositive reactance"),
                       CaseValidationError);

  auto c = bare_case(3);
  c.lines.push_back({1, 1, 2, 0.1, 0.0, 10.0});
  CHECK_THROWS_WITH_AS(finalize(c), doctest::Contains("disconnected"), CaseValidationError);
}

TEST_CASE("case round-trips through dump_case") {
  const auto c = generate_case("five_area", {});
  const auto again = load_case(dump_case(c));
  CHECK(dump_case(again) == dump_case(c));
}

TEST_CASE("bundled five-area case") {
  const auto c = load_case_file(LFC_SOURCE_DIR "/cases/five_area.json");
  CHECK(c.areas.size() == 5);
  CHECK(c.buses.size() == 20);
  CHECK(c.hvdc_infeeds.size() == 2);
  CHECK(c.tie_lines().size() == 6);
  CHECK(c.flowgates.size() == 3);
  CHECK(dump_case(c) == dump_case(generate_case("five_area", {})));
}

TEST_CASE("dc power flow examples") {
  SUBCASE("two buses carry everything on one line") {
    const auto sol = dc_power_flow(two_bus(), std::vector<double>{100.0, -100.0});
    CHECK(sol.line_flows[0] == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(sol.theta[0] == 0.0);
  }
  SUBCASE("equal triangle splits 2:1") {
    const auto sol = dc_power_flow(triangle(), std::vector<double>{90.0, -90.0, 0.0});
    CHECK(sol.line_flows[0] == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(sol.line_flows[1] == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(sol.line_flows[2] == doctest::Approx(30.0).epsilon(1e-12));
  }
  SUBCASE("islanded network is singular") {
    auto c = bare_case(3);
    c.lines.push_back({1, 1, 2, 0.1, 0.0, 10.0});
    CHECK_THROWS_AS(dc_power_flow(c, std::vector<double>{1.0, -1.0, 0.0}), SingularSystemError);
  }
  SUBCASE("unbalanced injections are rejected") {
    CHECK_THROWS_AS(dc_power_flow(two_bus(), std::vector<double>{100.0, -99.0}), ImbalanceError);
  }
}

TEST_CASE("loss proxy is r (F/base)^2 base") {
  auto c = bare_case(2);
  c.lines.push_back({1, 1, 2, 0.2, 0.05, 500.0});
  finalize(c);
  const auto sol = dc_power_flow(c, std::vector<double>{150.0, -150.0});
  CHECK(sol.losses[0] == doctest::Approx(0.05 * 1.5 * 1.5 * 100.0));
  CHECK(sol.total_loss == doctest::Approx(sol.losses[0]));
}

TEST_CASE("dc power flow matches a dense oracle and its invariants") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const auto c = random_connected(rng, n);
    const auto p = balanced_injections(rng, n);
    const auto q = balanced_injections(rng, n);
    const DcFlowModel model(c);
    const auto sp = model.solve(p);
    const auto theta = oracle_theta(c, p);
    double scale = 0.0;
    for (double t : theta) scale = std::max(scale, std::abs(t));
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(sp.theta[static_cast<std::size_t>(i)] - theta[static_cast<std::size_t>(i)]) <=
            1e-9 * scale);
    }
    // Conservation at every bus.
    std::vector<double> net(static_cast<std::size_t>(n), 0.0);
    for (std::size_t k = 0; k < c.lines.size(); ++k) {
      net[c.bus_index.at(c.lines[k].from_bus)] += sp.line_flows[k];
      net[c.bus_index.at(c.lines[k].to_bus)] -= sp.line_flows[k];
    }
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(net[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)]) <=
            1e-6 * c.base_mva);
    }
    // Linearity.
    std::vector<double> mix(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      mix[static_cast<std::size_t>(i)] = 2.0 * p[static_cast<std::size_t>(i)] - 0.5 * q[static_cast<std::size_t>(i)];
    }
    const auto sq = model.solve(q);
    const auto sm = model.solve(mix);
    for (std::size_t k = 0; k < c.lines.size(); ++k) {
      CHECK(std::abs(sm.line_flows[k] - (2.0 * sp.line_flows[k] - 0.5 * sq.line_flows[k])) <= 1e-8);
    }
    // Antisymmetry.
    auto flipped = c;
    std::swap(flipped.lines[0].from_bus, flipped.lines[0].to_bus);
    const auto sf = dc_power_flow(flipped, p);
    CHECK(sf.line_flows[0] == -sp.line_flows[0]);
    CHECK(sp.total_loss >= 0.0);
  }
}

TEST_CASE("flowgate flow is the signed member sum") {
  auto c = bare_case(3);
  c.lines.push_back({1, 1, 2, 0.1, 0.0, 500.0});
  c.lines.push_back({2, 2, 3, 0.1, 0.0, 500.0});
  c.flowgates.push_back({1, {{1, 1}}, 200.0});
  c.flowgates.push_back({2, {{1, 1}, {2, -1}}, 200.0});
  finalize(c);
  FlowSolution sol;
  sol.line_flows = {120.0, 0.0};
  CHECK(flowgate_flow(sol, c, c.flowgates[0]) == 120.0);
  sol.line_flows = {80.0, -30.0};
  CHECK(flowgate_flow(sol, c, c.flowgates[1]) == 110.0);

  auto empty = c;
  empty.flowgates.push_back({3, {}, 10.0});
  CHECK_THROWS_WITH_AS(finalize(empty), doctest::Contains("empty member list"), CaseValidationError);
}

TEST_CASE("overflow statistics") {
  auto check = [](std::vector<double> flows, std::vector<double> limits, int count, double d) {
    const auto s = overflow_stats(flows, limits);
    CHECK(s.count == count);
    CHECK(s.d_overflow == d);
  };
  check({100.0, 90.0}, {95.0, 95.0}, 1, 25.0);
  check({95.0}, {95.0}, 0, 0.0);
  check({120.0, 90.0}, {100.0, 100.0}, 1, 400.0);
  check({-120.0, 90.0}, {100.0, 100.0}, 1, 400.0);
}

TEST_CASE("overflow count and magnitude agree") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> f(6), l(6);
    for (std::size_t i = 0; i < 6; ++i) {
      f[i] = uniform(rng, -150.0, 150.0);
      l[i] = uniform(rng, 50.0, 150.0);
    }
    const auto s = overflow_stats(f, l);
    CHECK(s.count >= 0);
    CHECK(s.count <= 6);
    CHECK(s.d_overflow >= 0.0);
    CHECK((s.d_overflow == 0.0) == (s.count == 0));
  }
}

TEST_CASE("monitored set is flowgates then tie-lines") {
  const auto c = generate_case("five_area", {});
  const auto mon = monitored_elements(c);
  CHECK(mon.size() == c.flowgates.size() + c.tie_lines().size());
  CHECK(monitored_elements(c, MonitorScope::kAllLines).size() == c.lines.size());
}

TEST_CASE("production cost") {
  auto c = bare_case(1);
  Generator g;
  g.id = 1;
  g.bus = 1;
  g.p_max = 200.0;
  g.cost_coeffs = {0.0, 1.0, 0.0};
  c.generators.push_back(g);
  finalize(c);
  CHECK(production_cost(c, std::vector<double>{50.0}) == 50.0);
  c.generators[0].cost_coeffs = {10.0, 0.0, 0.01};
  CHECK(production_cost(c, std::vector<double>{100.0}) == doctest::Approx(110.0));

  c.generators[0].cost_coeffs = {0.0, 0.0, 0.01};
  c.generators.push_back(c.generators[0]);
  c.generators[1].id = 2;
  finalize(c);
  CHECK(production_cost(c, std::vector<double>{50.0, 50.0}) <
        production_cost(c, std::vector<double>{100.0, 0.0}));
}

TEST_CASE("case generator templates") {
  const auto small = generate_case("five_area", {2, 2, 1});
  CHECK(small.buses.size() == 4);
  CHECK(small.areas.size() == 2);
  CHECK(generate_case("two_area", {}).buses.size() == 4);
  CHECK_THROWS_WITH_AS(generate_case("seven_area", {}), doctest::Contains("five_area, two_area"),
                       std::invalid_argument);
}
