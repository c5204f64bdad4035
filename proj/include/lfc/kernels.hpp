#pragma once

#include <cstddef>
#include <span>

// Dense-layer kernels over row-major batches. Weights are stored
// input-major: w[i * out + o] connects input i to output o.
//
// `serial` is the straightforward reference; `parallel` is what the network
// code runs. Every parallel kernel partitions work so each output element is
// accumulated by exactly one thread in a fixed order, so results do not
// depend on the thread count.
namespace lfc::kernels {

namespace serial {

/// y[b, o] = bias[o] + sum_i x[b, i] w[i, o]
void affine_forward(std::span<const double> x, std::size_t batch, std::size_t in,
                    std::span<const double> w, std::span<const double> bias, std::size_t out,
                    std::span<double> y);

/// dx[b, i] = sum_o dy[b, o] w[i, o]
void affine_backward_input(std::span<const double> dy, std::size_t batch, std::size_t in,
                           std::span<const double> w, std::size_t out, std::span<double> dx);

/// dw[i, o] += sum_b x[b, i] dy[b, o];  dbias[o] += sum_b dy[b, o]
void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::size_t batch, std::size_t in, std::size_t out,
                            std::span<double> dw, std::span<double> dbias);

void relu_forward(std::span<double> z);
/// dz[k] = 0 where activation[k] <= 0
void relu_backward(std::span<const double> activation, std::span<double> dz);

}  // namespace serial

namespace parallel {

void affine_forward(std::span<const double> x, std::size_t batch, std::size_t in,
                    std::span<const double> w, std::span<const double> bias, std::size_t out,
                    std::span<double> y);
void affine_backward_input(std::span<const double> dy, std::size_t batch, std::size_t in,
                           std::span<const double> w, std::size_t out, std::span<double> dx);
void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::size_t batch, std::size_t in, std::size_t out,
                            std::span<double> dw, std::span<double> dbias);
void relu_forward(std::span<double> z);
void relu_backward(std::span<const double> activation, std::span<double> dz);

}  // namespace parallel

}  // namespace lfc::kernels
