// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gknn/errors.hpp"

namespace gknn {

void Matrix::append_row(std::span<const float> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw DimensionError("append_row: expected " + std::to_string(cols_) + " columns, got " +
                         std::to_string(values.size()));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  const float* pa = a.data();
  const float* pb = b.data();
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += pa[i + j] * pb[i + j];
  }
  for (; i < n; ++i) acc[i & 7] += pa[i] * pb[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  const std::size_t n = x.size();
  const float* px = x.data();
  float* py = y.data();
  for (std::size_t i = 0; i < n; ++i) py[i] += alpha * px[i];
}

void matvec(const Matrix& w, std::span<const float> in, std::span<const float> bias,
            std::span<float> out) {
  if (in.size() != w.cols() || out.size() != w.rows() || (!bias.empty() && bias.size() != w.rows())) {
    throw DimensionError("matvec: shape mismatch");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    out[r] = dot(w.row(r), in) + (bias.empty() ? 0.0f : bias[r]);
  }
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void check_finite(std::span<const float> values, std::string_view what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

Vector softmax(std::span<const float> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  check_finite(logits, "softmax");
  const float mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (float& v : out) v = static_cast<float>(v * inv);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite value");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

template <typename G>
void adam_update(std::span<float> params, std::span<const G> grads, AdamState& st) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: params/grads size mismatch");
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state shaped for a different parameter block");
  }
  if (st.options.lr < 0.0) throw ParameterError("adam_step: negative learning rate");
  st.t += 1;
  const auto& o = st.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    st.m[i] = o.beta1 * st.m[i] + (1.0 - o.beta1) * g;
    st.v[i] = o.beta2 * st.v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = st.m[i] / bc1;
    const double v_hat = st.v[i] / bc2;
    params[i] = static_cast<float>(params[i] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
  }
}

}  // namespace

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state) {
  adam_update(params, grads, state);
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state) {
  adam_update(params, grads, state);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

float normal(Rng& rng, float stddev) {
  // Box-Muller; avoids the implementation-defined std::normal_distribution.
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  return static_cast<float>(z * stddev);
}

GumbelSample gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelClamp, 1.0 - kGumbelClamp);
  return {u, -std::log(-std::log(u))};
}

GumbelSample draw_gumbel(Rng& rng) { return gumbel_from_uniform(uniform01(rng)); }

std::array<double, 2> gumbel_softmax(const std::array<double, 2>& log_probs, double tau,
                                     const std::array<GumbelSample, 2>& noise) {
  if (!(tau > 0.0)) throw ParameterError("gumbel_softmax: tau must be positive");
  const std::array<double, 2> z = {(log_probs[0] + noise[0].g) / tau,
                                   (log_probs[1] + noise[1].g) / tau};
  const auto p = softmax(std::span<const double>(z));
  return {p[0], p[1]};
}

std::vector<double> finite_diff_grad(const std::function<double()>& loss,
                                     std::span<float> params, double eps) {
  if (!(eps > 0.0)) throw ParameterError("finite_diff_grad: eps must be positive");
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float original = params[i];
    const float plus = static_cast<float>(original + eps);
    const float minus = static_cast<float>(original - eps);
    params[i] = plus;
    const double lp = loss();
    params[i] = minus;
    const double lm = loss();
    params[i] = original;
    const double step = static_cast<double>(plus) - static_cast<double>(minus);
    grad[i] = (lp - lm) / step;
  }
  return grad;
}

double gradient_mismatch(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient_mismatch: size mismatch");
  double scale = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
  }
  return scale == 0.0 ? 0.0 : worst / scale;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  return fnv1a(std::as_bytes(std::span<const char>(text.data(), text.size())), seed);
}

}  // namespace gknn
