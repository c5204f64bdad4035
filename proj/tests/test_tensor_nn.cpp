#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include "lfc/checkpoint.hpp"
#include "lfc/tensor_nn.hpp"
#include "support.hpp"

using namespace lfc;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = test::uniform(rng, -1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("parameter count") {
  const Mlp big({11, 2048, 1024, 512, 2});
  CHECK(big.param_count() == 2648578);
  CHECK(big.layer_count() == 4);
  const Mlp small({4, 8, 3});
  CHECK(small.param_count() == 4 * 8 + 8 + 8 * 3 + 3);
  CHECK(small.weight_offset(1) == 40);
}

TEST_CASE("init_uniform respects the fan-in bound") {
  Rng rng(1);
  Mlp net({5, 16, 4});
  net.init_uniform(rng);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes()[l]));
    for (double w : net.weights(l)) CHECK(std::abs(w) <= bound);
    for (double b : net.biases(l)) CHECK(std::abs(b) <= bound);
  }
}

TEST_CASE("batch and single forward agree") {
  Rng rng(2);
  Mlp net({4, 8, 3});
  net.init_uniform(rng);
  Matrix x(5, 4);
  x.data = random_vec(rng, 20);
  const auto y = net.forward(x);
  for (std::size_t b = 0; b < 5; ++b) {
    const auto single = net.forward(x.row(b));
    for (std::size_t o = 0; o < 3; ++o) CHECK(y(b, o) == doctest::Approx(single[o]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(net.forward(Matrix(2, 3)), DimensionError);
}

TEST_CASE("mlp gradients match central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp net({4, 8, 3});
    net.init_uniform(rng);
    const auto x = random_vec(rng, 4);
    const auto up = random_vec(rng, 3);
    const auto g = grad(net, x, up);

    const double h = 1e-6;
    std::vector<double> fd(net.param_count());
    for (std::size_t k = 0; k < fd.size(); ++k) {
      const double keep = net.params()[k];
      net.params()[k] = keep + h;
      const double lp = dot(net.forward(x), up);
      net.params()[k] = keep - h;
      const double lm = dot(net.forward(x), up);
      net.params()[k] = keep;
      fd[k] = (lp - lm) / (2 * h);
    }
    CHECK(norm_rel_err(g.params, fd) <= 1e-6);

    std::vector<double> fdx(4);
    for (std::size_t i = 0; i < 4; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fdx[i] = (dot(net.forward(xp), up) - dot(net.forward(xm), up)) / (2 * h);
    }
    CHECK(norm_rel_err(g.input, fdx) <= 1e-6);
  }
}

TEST_CASE("adam first step moves by the learning rate") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{1.0, -3.0};
  AdamState s(2, 1e-3);
  adam_step(p, g, s);
  CHECK(p[0] == doctest::Approx(1.0 - 0.000999999990).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.000999999997).epsilon(1e-12));
  CHECK(s.step == 1);
}

TEST_CASE("log1m_tanh2 is stable") {
  for (double u : {-30.0, -3.0, -0.5, 0.0, 0.5, 3.0, 30.0}) {
    const double direct = std::log(1.0 - std::tanh(u) * std::tanh(u));
    if (std::abs(u) < 10.0) CHECK(log1m_tanh2(u) == doctest::Approx(direct).epsilon(1e-10));
    CHECK(std::isfinite(log1m_tanh2(u)));
  }
  CHECK(log1m_tanh2(30.0) == doctest::Approx(2.0 * (std::numbers::ln2 - 30.0)).epsilon(1e-12));
}

TEST_CASE("squashed density integrates to one") {
  Mlp net({3, 2});
  for (auto& w : net.weights(0)) w = 0.0;
  net.biases(0)[0] = 0.2;
  net.biases(0)[1] = -0.5;
  const PolicyHead pi(net, {4.0}, {1.0});
  const std::vector<double> obs{0.3, -0.1, 0.7};
  const int n = 200000;
  const double lo = -3.0, hi = 5.0;
  const double da = (hi - lo) / n;
  double mass = 0.0;
  for (int k = 0; k < n; ++k) {
    const double a = lo + (k + 0.5) * da;
    mass += std::exp(pi.log_prob(obs, std::vector<double>{a})) * da;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("sampled and evaluated log-probabilities agree") {
  Rng rng(4);
  Mlp net({3, 16, 4});
  net.init_uniform(rng);
  const PolicyHead pi(net, {2.0, 0.5}, {0.0, 0.5});
  for (int t = 0; t < 20; ++t) {
    const auto obs = random_vec(rng, 3);
    const auto noise = random_vec(rng, 2);
    const auto s = pi.sample_action(obs, noise);
    CHECK(pi.log_prob(obs, s.action) == doctest::Approx(s.log_prob).epsilon(1e-8));
    CHECK(s.action[0] >= -2.0);
    CHECK(s.action[0] <= 2.0);
    CHECK(s.action[1] >= 0.0);
    CHECK(s.action[1] <= 1.0);
  }
  const auto mean = pi.mean_action(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(mean.size() == 2);
}

TEST_CASE("policy backward matches central differences") {
  Rng rng(5);
  Mlp net({3, 16, 4});
  net.init_uniform(rng);
  PolicyHead pi(net, {2.0, 0.5}, {0.0, 0.5});
  Matrix obs(6, 3);
  obs.data = random_vec(rng, 18);
  Matrix noise(6, 2);
  noise.data = random_vec(rng, 12);
  Matrix ws(6, 2);
  ws.data = random_vec(rng, 12);
  const auto wl = random_vec(rng, 6);

  auto loss = [&](const PolicyHead& p) {
    const auto s = p.sample_batch(obs, noise);
    return dot(s.squashed.data, ws.data) + dot(s.log_prob, wl);
  };
  const auto s = pi.sample_batch(obs, noise);
  std::vector<double> g(pi.backbone().param_count(), 0.0);
  pi.backward(s, ws, wl, g);

  const double h = 1e-6;
  std::vector<double> fd(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double keep = pi.backbone().params()[k];
    pi.backbone().params()[k] = keep + h;
    const double lp = loss(pi);
    pi.backbone().params()[k] = keep - h;
    const double lm = loss(pi);
    pi.backbone().params()[k] = keep;
    fd[k] = (lp - lm) / (2 * h);
  }
  CHECK(norm_rel_err(g, fd) <= 1e-6);
}

TEST_CASE("clamped log-std receives no gradient") {
  Mlp net({1, 2});
  net.weights(0)[0] = 0.0;
  net.weights(0)[1] = 0.0;
  net.biases(0)[0] = 0.1;
  net.biases(0)[1] = 5.0;
  const PolicyHead pi(net, {1.0}, {0.0});
  Matrix obs(1, 1, 1.0);
  Matrix noise(1, 1, 0.3);
  const auto s = pi.sample_batch(obs, noise);
  CHECK(s.log_std(0, 0) == kLogStdMax);
  std::vector<double> g(net.param_count(), 0.0);
  pi.backward(s, Matrix(1, 1, 1.0), std::vector<double>{1.0}, g);
  CHECK(g[1] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("checkpoint round-trip and corruption") {
  Checkpoint c;
  c.meta = {{"kind", "test"}, {"n", 3}};
  c.blocks.push_back({"a", {1.0, -2.5, 1e-300}});
  c.blocks.push_back({"b", {}});
  c.blocks.push_back({"c", {std::numbers::pi}});
  const auto bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 7) == "LFCCKPT");
  const auto d = decode_checkpoint(bytes);
  CHECK(d.meta == c.meta);
  CHECK(d.blocks == c.blocks);
  CHECK(d.block("c")[0] == std::numbers::pi);
  CHECK_THROWS_AS(d.block("missing"), CheckpointError);
  CHECK(encode_checkpoint(d) == bytes);

  CHECK_THROWS_WITH_AS(decode_checkpoint("NOTCKPT" + bytes.substr(7)), doctest::Contains("magic"),
                       CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError);
  auto wrong = bytes;
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(wrong.data() + 7, &v, sizeof v);
  CHECK_THROWS_WITH_AS(decode_checkpoint(wrong), doctest::Contains("version"), CheckpointError);
}

TEST_CASE("hconcat") {
  Matrix a(2, 1);
  a.data = {1, 2};
  Matrix b(2, 2);
  b.data = {3, 4, 5, 6};
  const auto c = hconcat(a, b);
  CHECK(c.cols == 3);
  CHECK(c.data == std::vector<double>{1, 3, 4, 2, 5, 6});
  CHECK_THROWS_AS(hconcat(a, Matrix(3, 1)), DimensionError);
}
