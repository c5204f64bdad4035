#include <omp.h>

#include <algorithm>
#include <cstring>

#include "lfc/kernels.hpp"

namespace lfc::kernels::parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

bool worth_parallel(std::size_t work) {
  return work >= kParallelWork && omp_get_max_threads() > 1;
}

}  // namespace

void affine_forward(std::span<const double> x, std::size_t batch, std::size_t in,
                    std::span<const double> w, std::span<const double> bias, std::size_t out,
                    std::span<double> y) {
  const double* xp = x.data();
  const double* wp = w.data();
  const double* bp = bias.data();
  double* yp = y.data();
  const auto rows = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (worth_parallel(batch * in * out))
  for (long b = 0; b < rows; ++b) {
    double* yr = yp + static_cast<std::size_t>(b) * out;
    const double* xr = xp + static_cast<std::size_t>(b) * in;
    std::memcpy(yr, bp, out * sizeof(double));
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;  // ReLU outputs are sparse
      const double* wr = wp + i * out;
#pragma omp simd
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
}

void affine_backward_input(std::span<const double> dy, std::size_t batch, std::size_t in,
                           std::span<const double> w, std::size_t out, std::span<double> dx) {
  const double* dyp = dy.data();
  const double* wp = w.data();
  double* dxp = dx.data();
  const auto rows = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (worth_parallel(batch * in * out))
  for (long b = 0; b < rows; ++b) {
    const double* g = dyp + static_cast<std::size_t>(b) * out;
    double* d = dxp + static_cast<std::size_t>(b) * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = wp + i * out;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t o = 0; o < out; ++o) s += g[o] * wr[o];
      d[i] = s;
    }
  }
}

void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::size_t batch, std::size_t in, std::size_t out,
                            std::span<double> dw, std::span<double> dbias) {
  const double* xp = x.data();
  const double* dyp = dy.data();
  double* dwp = dw.data();
  const auto rows = static_cast<long>(in);
  // Each weight row i belongs to one thread; the batch sum runs in order.
#pragma omp parallel for schedule(static) if (worth_parallel(batch * in * out))
  for (long i = 0; i < rows; ++i) {
    double* dwr = dwp + static_cast<std::size_t>(i) * out;
    for (std::size_t b = 0; b < batch; ++b) {
      const double xv = xp[b * in + static_cast<std::size_t>(i)];
      if (xv == 0.0) continue;
      const double* g = dyp + b * out;
#pragma omp simd
      for (std::size_t o = 0; o < out; ++o) dwr[o] += xv * g[o];
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const double* g = dyp + b * out;
#pragma omp simd
    for (std::size_t o = 0; o < out; ++o) dbias[o] += g[o];
  }
}

void relu_forward(std::span<double> z) {
  double* p = z.data();
  const std::size_t n = z.size();
#pragma omp simd
  for (std::size_t k = 0; k < n; ++k) p[k] = p[k] > 0.0 ? p[k] : 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> dz) {
  const double* a = activation.data();
  double* d = dz.data();
  const std::size_t n = dz.size();
#pragma omp simd
  for (std::size_t k = 0; k < n; ++k) d[k] = a[k] > 0.0 ? d[k] : 0.0;
}

}  // namespace lfc::kernels::parallel
