// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/kernels.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <omp.h>

#include "gknn/errors.hpp"

namespace gknn::kernels {
namespace {

// Below this many rows the fork/join cost outweighs the scan.
constexpr std::size_t kParallelRowThreshold = 4096;

void check_query(const Matrix& keys, std::span<const float> query, std::size_t k) {
  if (k == 0) throw ParameterError("top-k search: K must be >= 1");
  if (keys.rows() > 0 && query.size() != keys.cols()) {
    throw DimensionError("top-k search: query has dimension " + std::to_string(query.size()) +
                         ", keys have " + std::to_string(keys.cols()));
  }
}

std::uint32_t nearest_centroid(std::span<const float> point, const Matrix& centroids) {
  std::uint32_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const float d = squared_l2(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  const float* pa = a.data();
  const float* pb = b.data();
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      const float d = pa[i + j] - pb[i + j];
      acc[j] += d * d;
    }
  }
  for (; i < n; ++i) {
    const float d = pa[i] - pb[i];
    acc[i & 7] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void TopK::offer(float distance, std::uint64_t index) {
  const Candidate c{distance, index};
  if (items_.size() == k_ && !closer(c, items_.back())) return;
  auto pos = std::upper_bound(items_.begin(), items_.end(), c, closer);
  items_.insert(pos, c);
  if (items_.size() > k_) items_.pop_back();
}

void TopK::merge(const TopK& other) {
  for (const Candidate& c : other.items_) offer(c.distance, c.index);
}

std::vector<Candidate> top_k_serial(const Matrix& keys, std::span<const float> query,
                                    std::size_t k) {
  check_query(keys, query, k);
  TopK acc(k);
  for (std::size_t r = 0; r < keys.rows(); ++r) acc.offer(squared_l2(keys.row(r), query), r);
  return std::move(acc).take();
}

std::vector<Candidate> top_k_parallel(const Matrix& keys, std::span<const float> query,
                                      std::size_t k) {
  check_query(keys, query, k);
  const std::size_t n = keys.rows();
  if (n < kParallelRowThreshold) return top_k_serial(keys, query, k);

  std::vector<TopK> partial(static_cast<std::size_t>(omp_get_max_threads()), TopK(k));
#pragma omp parallel
  {
    TopK& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(n); ++r) {
      local.offer(squared_l2(keys.row(static_cast<std::size_t>(r)), query),
                  static_cast<std::uint64_t>(r));
    }
  }
  TopK merged(k);
  for (const TopK& p : partial) merged.merge(p);
  return std::move(merged).take();
}

void top_k_rows(const Matrix& keys, std::span<const std::uint32_t> rows,
                std::span<const float> query, TopK& acc) {
  for (std::uint32_t r : rows) acc.offer(squared_l2(keys.row(r), query), r);
}

void assign_nearest_serial(const Matrix& points, const Matrix& centroids,
                           std::span<std::uint32_t> out) {
  if (out.size() != points.rows()) throw DimensionError("assign_nearest: output size mismatch");
  for (std::size_t i = 0; i < points.rows(); ++i) out[i] = nearest_centroid(points.row(i), centroids);
}

void assign_nearest_parallel(const Matrix& points, const Matrix& centroids,
                             std::span<std::uint32_t> out) {
  if (out.size() != points.rows()) throw DimensionError("assign_nearest: output size mismatch");
  const auto n = static_cast<std::int64_t>(points.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        nearest_centroid(points.row(static_cast<std::size_t>(i)), centroids);
  }
}

}  // namespace gknn::kernels
