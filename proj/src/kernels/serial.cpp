#include "lfc/kernels.hpp"

namespace lfc::kernels::serial {

void affine_forward(std::span<const double> x, std::size_t batch, std::size_t in,
                    std::span<const double> w, std::span<const double> bias, std::size_t out,
                    std::span<double> y) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias[o];
      for (std::size_t i = 0; i < in; ++i) s += x[b * in + i] * w[i * out + o];
      y[b * out + o] = s;
    }
  }
}

void affine_backward_input(std::span<const double> dy, std::size_t batch, std::size_t in,
                           std::span<const double> w, std::size_t out, std::span<double> dx) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += dy[b * out + o] * w[i * out + o];
      dx[b * in + i] = s;
    }
  }
}

void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::size_t batch, std::size_t in, std::size_t out,
                            std::span<double> dw, std::span<double> dbias) {
  for (std::size_t i = 0; i < in; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += x[b * in + i] * dy[b * out + o];
      dw[i * out + o] += s;
    }
  }
  for (std::size_t o = 0; o < out; ++o) {
    double s = 0.0;
    for (std::size_t b = 0; b < batch; ++b) s += dy[b * out + o];
    dbias[o] += s;
  }
}

void relu_forward(std::span<double> z) {
  for (auto& v : z) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> dz) {
  for (std::size_t k = 0; k < dz.size(); ++k) {
    if (!(activation[k] > 0.0)) dz[k] = 0.0;
  }
}

}  // namespace lfc::kernels::serial
