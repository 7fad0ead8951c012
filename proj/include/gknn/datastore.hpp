// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Key-value datastore of (decoder hidden state, gold target token) pairs.
//
// Binary format (little-endian):
//   offset 0   char[4]  magic "KNDS"
//   offset 4   u32      version (1)
//   offset 8   u32      key dimension d
//   offset 12  u32      reserved, must be 0
//   offset 16  u64      entry count N
//   offset 24  f32[N*d] keys, row-major
//   then       u32[N]   values
// The file size is therefore exactly 24 + 4*N*d + 4*N bytes. The domain
// tag and producing-model checksum travel in the stage manifest.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gknn/numerics.hpp"
#include "gknn/toygen.hpp"

namespace gknn {

class ToyModel;

struct Datastore {
  Matrix keys;
  std::vector<TokenId> values;
  std::size_t dim = 0;
  std::string domain;
  std::uint64_t model_checksum = 0;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

struct Neighbor {
  float distance = 0.0f;  // squared L2
  TokenId value = 0;
  std::uint64_t index = 0;
  bool operator==(const Neighbor&) const = default;
};

// Ascending distance, ties by ascending row index; at most min(K, N) entries.
using NeighborSet = std::vector<Neighbor>;

inline constexpr std::size_t kDatastoreHeaderBytes = 24;

// One entry per teacher-forced step (end-of-sentence included). Throws
// ContractError for an unfrozen model.
Datastore build_datastore(const ToyModel& model, const Corpus& corpus, std::string domain = {});

// Exact top-K by squared L2 (OpenMP scan). Empty datastore -> empty set.
NeighborSet knn_search(const Datastore& ds, std::span<const float> query, std::size_t k);

// Same contract on the serial reference kernel.
NeighborSet knn_search_serial(const Datastore& ds, std::span<const float> query, std::size_t k);

// Inverted-file accelerator: k-means centroids with per-centroid member lists.
class ClusteredIndex {
 public:
  static ClusteredIndex build(const Datastore& ds, std::size_t n_clusters, std::uint64_t seed,
                              int max_iterations = 50);

  // Scans the members of the n_probe nearest centroids.
  NeighborSet search(const Datastore& ds, std::span<const float> query, std::size_t k,
                     std::size_t n_probe) const;

  std::size_t n_clusters() const { return centroids_.rows(); }
  int iterations() const { return iterations_; }
  const Matrix& centroids() const { return centroids_; }

 private:
  Matrix centroids_;
  std::vector<std::vector<std::uint32_t>> members_;
  int iterations_ = 0;
};

void save_datastore(const Datastore& ds, const std::filesystem::path& path);
// Throws FormatError on bad magic/version, truncation or inconsistent sizes.
Datastore load_datastore(const std::filesystem::path& path);

}  // namespace gknn
