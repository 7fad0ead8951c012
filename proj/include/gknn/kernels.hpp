// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Hot loops of the retrieval path. Each data-parallel kernel has an OpenMP
// version used in production and a serial reference with the same
// signature; tests hold the two to identical output and the benchmark in
// bench/ compares their speed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gknn/numerics.hpp"

namespace gknn::kernels {

struct Candidate {
  float distance = 0.0f;
  std::uint64_t index = 0;
};

// Strict total order used everywhere: distance, then row index.
inline bool closer(const Candidate& a, const Candidate& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

float squared_l2(std::span<const float> a, std::span<const float> b);

// Bounded sorted buffer keeping the k best candidates seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  void offer(float distance, std::uint64_t index);
  void merge(const TopK& other);

  std::size_t k() const { return k_; }
  const std::vector<Candidate>& items() const { return items_; }
  std::vector<Candidate> take() && { return std::move(items_); }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

std::vector<Candidate> top_k_serial(const Matrix& keys, std::span<const float> query,
                                    std::size_t k);
std::vector<Candidate> top_k_parallel(const Matrix& keys, std::span<const float> query,
                                      std::size_t k);

// Scans only the listed rows, offering into an existing accumulator.
void top_k_rows(const Matrix& keys, std::span<const std::uint32_t> rows,
                std::span<const float> query, TopK& acc);

// Index of the nearest centroid for every point; ties go to the lower id.
void assign_nearest_serial(const Matrix& points, const Matrix& centroids,
                           std::span<std::uint32_t> out);
void assign_nearest_parallel(const Matrix& points, const Matrix& centroids,
                             std::span<std::uint32_t> out);

}  // namespace gknn::kernels
