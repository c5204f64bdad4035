#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lfc/kernels.hpp"
#include "support.hpp"

using namespace lfc;
namespace ks = lfc::kernels::serial;
namespace kp = lfc::kernels::parallel;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double sparsity = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) {
    x = test::uniform(rng, -1.0, 1.0);
    if (test::uniform(rng, 0.0, 1.0) < sparsity) x = 0.0;
  }
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / (1.0 + std::abs(b[i])));
  }
  CHECK(worst <= 1e-12);
}

struct Shape {
  std::size_t batch, in, out;
};

const Shape kShapes[] = {{1, 1, 1}, {3, 5, 7}, {64, 40, 128}, {256, 128, 64}, {17, 300, 9}};

}  // namespace

TEST_CASE("serial affine forward matches a direct sum") {
  std::mt19937_64 rng(1);
  const std::size_t batch = 4, in = 3, out = 5;
  const auto x = random_vec(rng, batch * in);
  const auto w = random_vec(rng, in * out);
  const auto bias = random_vec(rng, out);
  std::vector<double> y(batch * out);
  ks::affine_forward(x, batch, in, w, bias, out, y);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias[o];
      for (std::size_t i = 0; i < in; ++i) s += x[b * in + i] * w[i * out + o];
      CHECK(y[b * out + o] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(7);
  for (const auto& s : kShapes) {
    CAPTURE(s.batch);
    CAPTURE(s.in);
    CAPTURE(s.out);
    const auto x = random_vec(rng, s.batch * s.in, 0.3);
    const auto w = random_vec(rng, s.in * s.out);
    const auto bias = random_vec(rng, s.out);
    const auto dy = random_vec(rng, s.batch * s.out);

    std::vector<double> y1(s.batch * s.out), y2(s.batch * s.out);
    ks::affine_forward(x, s.batch, s.in, w, bias, s.out, y1);
    kp::affine_forward(x, s.batch, s.in, w, bias, s.out, y2);
    check_close(y2, y1);

    std::vector<double> dx1(s.batch * s.in), dx2(s.batch * s.in);
    ks::affine_backward_input(dy, s.batch, s.in, w, s.out, dx1);
    kp::affine_backward_input(dy, s.batch, s.in, w, s.out, dx2);
    check_close(dx2, dx1);

    std::vector<double> dw1(s.in * s.out, 0.5), dw2(s.in * s.out, 0.5);
    std::vector<double> db1(s.out, -0.25), db2(s.out, -0.25);
    ks::affine_backward_params(x, dy, s.batch, s.in, s.out, dw1, db1);
    kp::affine_backward_params(x, dy, s.batch, s.in, s.out, dw2, db2);
    check_close(dw2, dw1);
    check_close(db2, db1);

    auto r1 = y1, r2 = y1;
    ks::relu_forward(r1);
    kp::relu_forward(r2);
    CHECK(r1 == r2);
    auto g1 = dy, g2 = dy;
    ks::relu_backward(r1, g1);
    kp::relu_backward(r2, g2);
    CHECK(g1 == g2);
  }
}

TEST_CASE("parallel kernels are reproducible") {
  std::mt19937_64 rng(3);
  const Shape s{128, 256, 128};
  const auto x = random_vec(rng, s.batch * s.in);
  const auto w = random_vec(rng, s.in * s.out);
  const auto bias = random_vec(rng, s.out);
  std::vector<double> a(s.batch * s.out), b(s.batch * s.out);
  kp::affine_forward(x, s.batch, s.in, w, bias, s.out, a);
  kp::affine_forward(x, s.batch, s.in, w, bias, s.out, b);
  CHECK(a == b);
}

TEST_CASE("relu backward masks inactive units") {
  std::vector<double> act{0.0, 2.0, 0.0, 0.5};
  std::vector<double> dz{1.0, 1.0, 1.0, 1.0};
  ks::relu_backward(act, dz);
  CHECK(dz == std::vector<double>{0.0, 1.0, 0.0, 1.0});
}
