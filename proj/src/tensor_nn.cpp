#include "lfc/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lfc/kernels.hpp"

namespace lfc {

namespace k = kernels::parallel;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "hconcat: row count mismatch");
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols));
  }
  return out;
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw DimensionError("Mlp needs at least input and output sizes");
  for (auto s : sizes_) {
    if (s == 0) throw DimensionError("Mlp layer size must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

void Mlp::init_uniform(Rng& rng) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    auto draw = [&] {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return bound * (2.0 * u - 1.0);
    };
    for (auto& w : weights(l)) w = draw();
    for (auto& b : biases(l)) b = draw();
  }
}

std::span<const double> Mlp::weights(std::size_t l) const {
  return {params_.data() + offsets_[l], sizes_[l] * sizes_[l + 1]};
}
std::span<const double> Mlp::biases(std::size_t l) const {
  return {params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]};
}
std::span<double> Mlp::weights(std::size_t l) {
  return {params_.data() + offsets_[l], sizes_[l] * sizes_[l + 1]};
}
std::span<double> Mlp::biases(std::size_t l) {
  return {params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]};
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  require(input.size() == input_size(), "Mlp::forward: input size mismatch");
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  return forward(x).data;
}

Matrix Mlp::forward(const Matrix& input, MlpTape* tape) const {
  require(input.cols == input_size(), "Mlp::forward: input size mismatch");
  const std::size_t batch = input.rows;
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(input);
  }
  Matrix x = input;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Matrix y(batch, sizes_[l + 1]);
    k::affine_forward(x.data, batch, sizes_[l], weights(l), biases(l), sizes_[l + 1], y.data);
    if (l + 1 < layer_count()) k::relu_forward(y.data);
    if (tape) tape->activations.push_back(y);
    x = std::move(y);
  }
  return x;
}

void Mlp::backward(const MlpTape& tape, const Matrix& upstream, std::span<double> grad,
                   Matrix* input_grad) const {
  require(tape.activations.size() == sizes_.size(), "Mlp::backward: tape does not match network");
  const std::size_t batch = tape.activations.front().rows;
  require(upstream.rows == batch && upstream.cols == output_size(),
          "Mlp::backward: upstream shape mismatch");
  require(grad.empty() || grad.size() == params_.size(), "Mlp::backward: gradient size mismatch");

  Matrix d = upstream;
  for (std::size_t l = layer_count(); l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    if (!grad.empty()) {
      k::affine_backward_params(tape.activations[l].data, d.data, batch, in, out,
                                grad.subspan(offsets_[l], in * out),
                                grad.subspan(offsets_[l] + in * out, out));
    }
    if (l == 0 && !input_grad) break;
    Matrix dx(batch, in);
    k::affine_backward_input(d.data, batch, in, weights(l), out, dx.data);
    if (l > 0) k::relu_backward(tape.activations[l].data, dx.data);
    d = std::move(dx);
  }
  if (input_grad) *input_grad = std::move(d);
}

MlpGradients grad(const Mlp& net, std::span<const double> input,
                  std::span<const double> upstream) {
  require(input.size() == net.input_size(), "grad: input size mismatch");
  require(upstream.size() == net.output_size(), "grad: upstream size mismatch");
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  MlpTape tape;
  net.forward(x, &tape);
  Matrix up(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), up.data.begin());
  MlpGradients g;
  g.params.assign(net.param_count(), 0.0);
  Matrix dx;
  net.backward(tape, up, g.params, &dx);
  g.input = std::move(dx.data);
  return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
  require(params.size() == grads.size() && s.m.size() == params.size() && s.v.size() == params.size(),
          "adam_step: size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

double log1m_tanh2(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

PolicyHead::PolicyHead(Mlp backbone, std::vector<double> scale, std::vector<double> offset)
    : backbone_(std::move(backbone)), scale_(std::move(scale)), offset_(std::move(offset)) {
  if (scale_.size() != offset_.size()) throw DimensionError("PolicyHead: scale/offset size mismatch");
  if (backbone_.output_size() != 2 * scale_.size()) {
    throw DimensionError("PolicyHead: backbone must emit mean and log-std per action");
  }
  for (double s : scale_) {
    if (!(s > 0.0)) throw std::invalid_argument("PolicyHead: scales must be positive");
    log_scale_sum_ += std::log(s);
  }
}

std::vector<double> PolicyHead::to_physical(std::span<const double> squashed) const {
  require(squashed.size() == action_size(), "to_physical: size mismatch");
  std::vector<double> a(squashed.size());
  for (std::size_t d = 0; d < a.size(); ++d) a[d] = scale_[d] * squashed[d] + offset_[d];
  return a;
}

PolicyHead::BatchSample PolicyHead::sample_batch(const Matrix& obs, const Matrix& noise) const {
  const std::size_t A = action_size();
  require(noise.rows == obs.rows && noise.cols == A, "sample_batch: noise shape mismatch");
  BatchSample s;
  const Matrix out = backbone_.forward(obs, &s.tape);
  const std::size_t n = obs.rows;
  s.mean = Matrix(n, A);
  s.log_std = Matrix(n, A);
  s.log_std_raw = Matrix(n, A);
  s.pre_tanh = Matrix(n, A);
  s.squashed = Matrix(n, A);
  s.noise = noise;
  s.log_prob.assign(n, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    double lp = -log_scale_sum_;
    for (std::size_t d = 0; d < A; ++d) {
      const double mu = out(b, d);
      const double raw = out(b, A + d);
      const double ls = std::clamp(raw, kLogStdMin, kLogStdMax);
      const double eps = noise(b, d);
      const double u = mu + std::exp(ls) * eps;
      s.mean(b, d) = mu;
      s.log_std_raw(b, d) = raw;
      s.log_std(b, d) = ls;
      s.pre_tanh(b, d) = u;
      s.squashed(b, d) = std::tanh(u);
      lp += -0.5 * eps * eps - ls - kHalfLog2Pi - log1m_tanh2(u);
    }
    s.log_prob[b] = lp;
  }
  return s;
}

void PolicyHead::backward(const BatchSample& s, const Matrix& d_squashed,
                          std::span<const double> d_log_prob, std::span<double> grad) const {
  const std::size_t A = action_size();
  const std::size_t n = s.mean.rows;
  require(d_squashed.rows == n && d_squashed.cols == A, "PolicyHead::backward: shape mismatch");
  require(d_log_prob.size() == n, "PolicyHead::backward: log-prob gradient size mismatch");
  Matrix up(n, 2 * A);
  for (std::size_t b = 0; b < n; ++b) {
    const double gl = d_log_prob[b];
    for (std::size_t d = 0; d < A; ++d) {
      const double t = s.squashed(b, d);
      const double du = d_squashed(b, d) * (1.0 - t * t) + gl * 2.0 * t;
      up(b, d) = du;
      const double raw = s.log_std_raw(b, d);
      const bool clamped = raw < kLogStdMin || raw > kLogStdMax;
      up(b, A + d) = clamped ? 0.0 : du * std::exp(s.log_std(b, d)) * s.noise(b, d) - gl;
    }
  }
  backbone_.backward(s.tape, up, grad, nullptr);
}

PolicyHead::Sample PolicyHead::sample_action(std::span<const double> obs,
                                             std::span<const double> noise) const {
  require(obs.size() == observation_size(), "sample_action: observation size mismatch");
  require(noise.size() == action_size(), "sample_action: noise size mismatch");
  Matrix o(1, obs.size());
  std::copy(obs.begin(), obs.end(), o.data.begin());
  Matrix e(1, noise.size());
  std::copy(noise.begin(), noise.end(), e.data.begin());
  const auto b = sample_batch(o, e);
  Sample s;
  s.squashed = b.squashed.data;
  s.action = to_physical(s.squashed);
  s.log_prob = b.log_prob[0];
  return s;
}

std::vector<double> PolicyHead::mean_action(std::span<const double> obs) const {
  require(obs.size() == observation_size(), "mean_action: observation size mismatch");
  const auto out = backbone_.forward(obs);
  std::vector<double> t(action_size());
  for (std::size_t d = 0; d < t.size(); ++d) t[d] = std::tanh(out[d]);
  return to_physical(t);
}

double PolicyHead::log_prob(std::span<const double> obs, std::span<const double> action) const {
  require(obs.size() == observation_size(), "log_prob: observation size mismatch");
  require(action.size() == action_size(), "log_prob: action size mismatch");
  const auto out = backbone_.forward(obs);
  const std::size_t A = action_size();
  double lp = -log_scale_sum_;
  for (std::size_t d = 0; d < A; ++d) {
    const double t = (action[d] - offset_[d]) / scale_[d];
    const double u = std::atanh(t);
    const double ls = std::clamp(out[A + d], kLogStdMin, kLogStdMax);
    const double z = (u - out[d]) / std::exp(ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi - log1m_tanh2(u);
  }
  return lp;
}

}  // namespace lfc
