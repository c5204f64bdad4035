#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "lfc/power_net.hpp"

namespace lfc::test {

inline NetworkCase bare_case(int buses) {
  NetworkCase c;
  c.beta = 100.0;
  c.areas.push_back({1, "a"});
  for (int i = 1; i <= buses; ++i) c.buses.push_back({i, 1});
  return c;
}

inline NetworkCase two_bus(double x = 0.5) {
  auto c = bare_case(2);
  c.lines.push_back({1, 1, 2, x, 0.0, 500.0});
  finalize(c);
  return c;
}

inline NetworkCase triangle() {
  auto c = bare_case(3);
  c.lines.push_back({1, 1, 2, 0.1, 0.0, 500.0});
  c.lines.push_back({2, 1, 3, 0.1, 0.0, 500.0});
  c.lines.push_back({3, 3, 2, 0.1, 0.0, 500.0});
  finalize(c);
  return c;
}

// Two buses, lossless, one infeed of 100 MW and two governed units.
inline NetworkCase two_unit_case(double gain1 = 1.0, double gain2 = 3.0, double pmax = 300.0) {
  auto c = bare_case(2);
  c.lines.push_back({1, 1, 2, 0.1, 0.0, 500.0});
  Generator g1;
  g1.id = 1;
  g1.bus = 1;
  g1.p = 100.0;
  g1.p_max = pmax;
  g1.ramp_limit = 50.0;
  g1.reserve = 30.0;
  g1.governor_gain = gain1;
  Generator g2 = g1;
  g2.id = 2;
  g2.bus = 2;
  g2.ramp_limit = 100.0;
  g2.reserve = 70.0;
  g2.governor_gain = gain2;
  c.generators = {g1, g2};
  c.loads.push_back({1, 2, 300.0, true, 40.0});
  c.hvdc_infeeds.push_back({1, 1, 100.0, 2});
  finalize(c);
  return c;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Random spanning tree plus a few chords over `n` buses.
inline NetworkCase random_connected(std::mt19937_64& rng, int n) {
  auto c = bare_case(n);
  int id = 1;
  auto add = [&](int a, int b) {
    c.lines.push_back({id++, a, b, uniform(rng, 0.01, 1.0), uniform(rng, 0.0, 0.1), 100.0});
  };
  for (int b = 2; b <= n; ++b) add(static_cast<int>(rng() % static_cast<unsigned>(b - 1)) + 1, b);
  const int extra = static_cast<int>(rng() % 4);
  for (int k = 0; k < extra; ++k) {
    const int a = static_cast<int>(rng() % static_cast<unsigned>(n)) + 1;
    const int b = static_cast<int>(rng() % static_cast<unsigned>(n)) + 1;
    if (a != b) add(a, b);
  }
  finalize(c);
  return c;
}

inline std::vector<double> balanced_injections(std::mt19937_64& rng, int n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double s = 0.0;
  for (auto& v : p) {
    v = uniform(rng, -200.0, 200.0);
    s += v;
  }
  for (auto& v : p) v -= s / n;
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace lfc::test
