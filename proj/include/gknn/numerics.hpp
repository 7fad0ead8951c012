// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense numerics shared by the networks in this library: a row-major
// float matrix, softmax, Adam, Gumbel noise and a central-difference
// gradient oracle. Tensors are float; anything that is summed into a loss
// is accumulated in double.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace gknn {

using TokenId = std::uint32_t;
using Vector = std::vector<float>;
using Rng = std::mt19937_64;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }

  // Appends one row; the first append on an empty 0-column matrix fixes cols.
  void append_row(std::span<const float> values);
  void reserve_rows(std::size_t rows) { data_.reserve(rows * cols_); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Eight-lane accumulation so the loop vectorises without reassociation
// flags; the summation order is fixed, so results are reproducible.
float dot(std::span<const float> a, std::span<const float> b);

// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y);

// out = W * in + bias (W is out x in, row-major). bias may be empty.
void matvec(const Matrix& w, std::span<const float> in, std::span<const float> bias,
            std::span<float> out);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);
std::size_t argmax(std::span<const double> values);

// Numerically stable softmax (max-subtraction). Throws DimensionError on
// empty input and NumericError on non-finite input.
Vector softmax(std::span<const float> logits);
std::vector<double> softmax(std::span<const double> logits);

void check_finite(std::span<const float> values, std::string_view what);

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamOptions opts) : m(n, 0.0), v(n, 0.0), options(opts) {}

  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  AdamOptions options;
};

// One bias-corrected Adam update of `params` in place. Increments state.t.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state);

// ---------------------------------------------------------------------------
// Random streams

// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);
float normal(Rng& rng, float stddev);

struct GumbelSample {
  double u = 0.5;
  double g = 0.0;
};

inline constexpr double kGumbelClamp = 1e-10;

// u is clamped to [1e-10, 1 - 1e-10] before g = -log(-log u).
GumbelSample gumbel_from_uniform(double u);
GumbelSample draw_gumbel(Rng& rng);

// softmax((log_probs + g) / tau). Throws ParameterError for tau <= 0.
std::array<double, 2> gumbel_softmax(const std::array<double, 2>& log_probs, double tau,
                                     const std::array<GumbelSample, 2>& noise);

// ---------------------------------------------------------------------------
// Gradient oracle

// Central differences of `loss` w.r.t. each entry of `params`, perturbing
// the storage in place and restoring it. The denominator is the step that
// was actually realised in float, so a loss that is linear in the
// parameters yields its coefficients to double precision. `loss` must be
// deterministic (freeze any randomness before calling).
std::vector<double> finite_diff_grad(const std::function<double()>& loss,
                                     std::span<float> params, double eps);

// max_i |a_i - n_i| / max(max|a|, max|n|): per-coordinate error scaled by
// the largest gradient magnitude of the block.
double gradient_mismatch(std::span<const double> analytic, std::span<const double> numeric);

// ---------------------------------------------------------------------------

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace gknn
