#pragma once

// Small fully connected network with tanh hidden layers and a linear head,
// differentiated by hand. Weights are stored input-major so sparse inputs
// only touch the rows they activate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vllr/error.hpp"
#include "vllr/rng.hpp"

namespace vllr {

class Mlp {
 public:
  Mlp() = default;

  // sizes = {input, hidden..., output}
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) fail(ErrorKind::kInvalidInput, "network needs at least input and output sizes");
    for (int s : sizes_) {
      if (s < 1) fail(ErrorKind::kInvalidInput, "layer sizes must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_offset_.push_back(offset);
      offset += static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]);
      b_offset_.push_back(offset);
      offset += static_cast<std::size_t>(sizes_[l + 1]);
    }
    params_.assign(offset, 0.0);
  }

  // Scaled Gaussian init; the output layer is shrunk by `output_scale`.
  void initialize(std::uint64_t seed, double output_scale = 1.0) {
    std::mt19937_64 rng(splitmix64(seed));
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      const double scale = l + 1 == num_layers() ? output_scale : 1.0;
      std::normal_distribution<double> dist(0.0, sd * scale);
      double* w = params_.data() + w_offset_[l];
      const std::size_t n = static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]);
      for (std::size_t i = 0; i < n; ++i) w[i] = dist(rng);
      std::fill_n(params_.data() + b_offset_[l], sizes_[l + 1], 0.0);
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Activations of every layer, kept for the backward pass.
  struct Cache {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
  };

  void forward(std::span<const double> x, Cache& cache) const {
    if (static_cast<int>(x.size()) != input_size()) {
      fail(ErrorKind::kInvalidInput, "input size " + std::to_string(x.size()) + " does not match network input " +
                                         std::to_string(input_size()));
    }
    cache.acts.resize(sizes_.size());
    cache.acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const auto& in = cache.acts[l];
      auto& out = cache.acts[l + 1];
      const int n_out = sizes_[l + 1];
      const double* w = params_.data() + w_offset_[l];
      const double* b = params_.data() + b_offset_[l];
      out.assign(b, b + n_out);
      for (int i = 0; i < sizes_[l]; ++i) {
        const double xi = in[static_cast<std::size_t>(i)];
        if (xi == 0.0) continue;
        const double* row = w + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_out);
        for (int o = 0; o < n_out; ++o) out[static_cast<std::size_t>(o)] += xi * row[o];
      }
      if (l + 1 < num_layers()) {
        for (double& v : out) v = std::tanh(v);
      }
    }
  }

  std::vector<double> forward(std::span<const double> x) const {
    Cache c;
    forward(x, c);
    return c.acts.back();
  }

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Cache& cache, std::span<const double> grad_out, std::span<double> grad) const {
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    std::vector<double> prev;
    for (std::size_t l = num_layers(); l-- > 0;) {
      const auto& in = cache.acts[l];
      const int n_in = sizes_[l];
      const int n_out = sizes_[l + 1];
      const double* w = params_.data() + w_offset_[l];
      double* gw = grad.data() + w_offset_[l];
      double* gb = grad.data() + b_offset_[l];
      for (int o = 0; o < n_out; ++o) gb[o] += delta[static_cast<std::size_t>(o)];
      const bool need_input_grad = l > 0;
      if (need_input_grad) prev.assign(static_cast<std::size_t>(n_in), 0.0);
      for (int i = 0; i < n_in; ++i) {
        const double xi = in[static_cast<std::size_t>(i)];
        const std::size_t row = static_cast<std::size_t>(i) * static_cast<std::size_t>(n_out);
        if (xi != 0.0) {
          for (int o = 0; o < n_out; ++o) gw[row + static_cast<std::size_t>(o)] += xi * delta[static_cast<std::size_t>(o)];
        }
        if (need_input_grad) {
          double acc = 0.0;
          for (int o = 0; o < n_out; ++o) acc += w[row + static_cast<std::size_t>(o)] * delta[static_cast<std::size_t>(o)];
          prev[static_cast<std::size_t>(i)] = acc * (1.0 - xi * xi);  // tanh'
        }
      }
      if (need_input_grad) delta.swap(prev);
    }
  }

  std::uint64_t hash() const { return fnv1a64(params_.data(), params_.size() * sizeof(double)); }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> w_offset_, b_offset_;
  std::vector<double> params_;
};

inline double global_norm(std::span<const double> g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

// Rescales in place so the global norm is at most max_norm; returns the
// norm before clipping.
inline double clip_by_global_norm(std::span<double> g, double max_norm) {
  const double n = global_norm(g);
  if (max_norm > 0.0 && n > max_norm) {
    const double s = max_norm / n;
    for (double& v : g) v *= s;
  }
  return n;
}

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  int t_ = 0;
};

// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace vllr
