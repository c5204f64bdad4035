#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfc {

using Rng = std::mt19937_64;

/// Row-major dense matrix; a batch of row vectors.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Row-wise concatenation [a | b].
Matrix hconcat(const Matrix& a, const Matrix& b);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Activations recorded by a batch forward pass; activations[0] is the input.
struct MlpTape {
  std::vector<Matrix> activations;
};

/// Fully connected network, ReLU on hidden layers and identity output.
/// Parameters live in one flat buffer: per layer, weights (input-major,
/// in x out) followed by biases.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> layer_sizes);

  /// Uniform in +-1/sqrt(fan_in) for weights and biases.
  void init_uniform(Rng& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> biases(std::size_t layer) const;
  std::span<double> weights(std::size_t layer);
  std::span<double> biases(std::size_t layer);

  std::vector<double> forward(std::span<const double> input) const;
  Matrix forward(const Matrix& input, MlpTape* tape = nullptr) const;

  /// Back-propagates `upstream` (d loss / d output, batch x out). Parameter
  /// gradients are accumulated into `grad` unless it is empty; the input
  /// gradient is written to `input_grad` when non-null.
  void backward(const MlpTape& tape, const Matrix& upstream, std::span<double> grad,
                Matrix* input_grad) const;

  /// Offsets of each layer's weight block inside params().
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct MlpGradients {
  std::vector<double> params;
  std::vector<double> input;
};

/// Gradients of dot(output, upstream) for a single input vector.
MlpGradients grad(const Mlp& net, std::span<const double> input,
                  std::span<const double> upstream);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 1e-3)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// log(1 - tanh(u)^2) without cancellation.
double log1m_tanh2(double u);

/// Squashed Gaussian policy: the backbone emits per action dimension a mean
/// and a log standard deviation (first A outputs, then A outputs). Actions
/// are scale * tanh(mean + std * noise) + offset.
class PolicyHead {
 public:
  PolicyHead() = default;
  PolicyHead(Mlp backbone, std::vector<double> scale, std::vector<double> offset);

  std::size_t action_size() const { return scale_.size(); }
  std::size_t observation_size() const { return backbone_.input_size(); }
  Mlp& backbone() { return backbone_; }
  const Mlp& backbone() const { return backbone_; }
  const std::vector<double>& scale() const { return scale_; }
  const std::vector<double>& offset() const { return offset_; }

  struct Sample {
    std::vector<double> action;    // physical units
    std::vector<double> squashed;  // tanh(u), in [-1, 1]
    double log_prob = 0.0;
  };

  Sample sample_action(std::span<const double> obs, std::span<const double> noise) const;
  std::vector<double> mean_action(std::span<const double> obs) const;
  /// Density of a physical action strictly inside the bounds.
  double log_prob(std::span<const double> obs, std::span<const double> action) const;

  std::vector<double> to_physical(std::span<const double> squashed) const;

  /// Everything the reparameterised backward pass needs.
  struct BatchSample {
    MlpTape tape;
    Matrix mean;
    Matrix log_std;  // clamped
    Matrix log_std_raw;
    Matrix noise;
    Matrix pre_tanh;
    Matrix squashed;
    std::vector<double> log_prob;
  };

  BatchSample sample_batch(const Matrix& obs, const Matrix& noise) const;

  /// Accumulates d loss / d params given d loss / d squashed action and
  /// d loss / d log_prob per sample.
  void backward(const BatchSample& sample, const Matrix& d_squashed,
                std::span<const double> d_log_prob, std::span<double> grad) const;

 private:
  Mlp backbone_;
  std::vector<double> scale_;
  std::vector<double> offset_;
  double log_scale_sum_ = 0.0;
};

}  // namespace lfc
