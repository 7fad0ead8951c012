// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "gknn/errors.hpp"
#include "gknn/kernels.hpp"
#include "gknn/model.hpp"

namespace gknn {

static_assert(std::endian::native == std::endian::little,
              "datastore files are little-endian; add byte swapping for this target");

namespace {

constexpr char kMagic[4] = {'K', 'N', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

NeighborSet to_neighbors(const Datastore& ds, const std::vector<kernels::Candidate>& found) {
  NeighborSet out;
  out.reserve(found.size());
  for (const auto& c : found) out.push_back({c.distance, ds.values[c.index], c.index});
  return out;
}

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("datastore: truncated " + what);
  return value;
}

}  // namespace

Datastore build_datastore(const ToyModel& model, const Corpus& corpus, std::string domain) {
  if (!model.frozen()) throw ContractError("build_datastore: model must be frozen");
  Datastore ds;
  ds.dim = model.hidden_size();
  ds.domain = std::move(domain);
  ds.model_checksum = model.checksum();
  ds.keys = Matrix(0, ds.dim);
  ds.keys.reserve_rows(teacher_forced_steps(corpus));
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(model, pair)) {
      ds.keys.append_row(step.hidden);
      ds.values.push_back(step.gold);
    }
  }
  return ds;
}

NeighborSet knn_search(const Datastore& ds, std::span<const float> query, std::size_t k) {
  if (ds.empty()) {
    if (k == 0) throw ParameterError("knn_search: K must be >= 1");
    return {};
  }
  return to_neighbors(ds, kernels::top_k_parallel(ds.keys, query, k));
}

NeighborSet knn_search_serial(const Datastore& ds, std::span<const float> query, std::size_t k) {
  if (ds.empty()) {
    if (k == 0) throw ParameterError("knn_search: K must be >= 1");
    return {};
  }
  return to_neighbors(ds, kernels::top_k_serial(ds.keys, query, k));
}

ClusteredIndex ClusteredIndex::build(const Datastore& ds, std::size_t n_clusters, std::uint64_t seed,
                                     int max_iterations) {
  if (n_clusters < 1) throw ParameterError("clustered index: n_clusters must be >= 1");
  if (n_clusters > ds.size()) throw ParameterError("clustered index: more clusters than entries");
  const std::size_t n = ds.size();
  const std::size_t d = ds.keys.cols();

  // Seeds: a reproducible sample of distinct rows.
  Rng rng(seed);
  std::vector<std::uint32_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < n_clusters; ++i) {
    const std::size_t j = i + std::min(n - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i)));
    std::swap(rows[i], rows[j]);
  }
  ClusteredIndex index;
  index.centroids_ = Matrix(n_clusters, d);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    auto src = ds.keys.row(rows[c]);
    std::copy(src.begin(), src.end(), index.centroids_.row(c).begin());
  }

  std::vector<std::uint32_t> assign(n, 0), previous(n, UINT32_MAX);
  std::vector<double> sums(n_clusters * d);
  std::vector<std::size_t> counts(n_clusters);
  for (int it = 0; it < max_iterations; ++it) {
    kernels::assign_nearest_parallel(ds.keys, index.centroids_, assign);
    index.iterations_ = it + 1;
    if (assign == previous) break;
    previous = assign;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = ds.keys.row(i);
      double* s = sums.data() + assign[i] * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += row[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) {
        index.centroids_(c, j) = static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
      }
    }
  }
  kernels::assign_nearest_parallel(ds.keys, index.centroids_, assign);
  index.members_.assign(n_clusters, {});
  for (std::size_t i = 0; i < n; ++i) index.members_[assign[i]].push_back(static_cast<std::uint32_t>(i));
  return index;
}

NeighborSet ClusteredIndex::search(const Datastore& ds, std::span<const float> query, std::size_t k,
                                   std::size_t n_probe) const {
  if (k == 0) throw ParameterError("clustered search: K must be >= 1");
  if (n_probe < 1 || n_probe > n_clusters()) {
    throw ParameterError("clustered search: n_probe must lie in [1, n_clusters]");
  }
  const auto probes = kernels::top_k_serial(centroids_, query, n_probe);
  kernels::TopK acc(k);
  for (const auto& p : probes) kernels::top_k_rows(ds.keys, members_[p.index], query, acc);
  return to_neighbors(ds, acc.items());
}

void save_datastore(const Datastore& ds, const std::filesystem::path& path) {
  if (ds.keys.rows() != ds.values.size()) throw ContractError("save_datastore: keys/values length mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write datastore " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim));
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, ds.size());
  const auto keys = ds.keys.flat();
  out.write(reinterpret_cast<const char*>(keys.data()), static_cast<std::streamsize>(keys.size_bytes()));
  out.write(reinterpret_cast<const char*>(ds.values.data()),
            static_cast<std::streamsize>(ds.values.size() * sizeof(TokenId)));
  if (!out) throw InputError("short write on datastore " + path.string());
}

Datastore load_datastore(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open datastore " + path.string());
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("datastore: truncated magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("datastore: bad magic");
  if (get<std::uint32_t>(in, "version") != kVersion) throw FormatError("datastore: unsupported version");
  const auto dim = get<std::uint32_t>(in, "dimension");
  if (get<std::uint32_t>(in, "reserved") != 0) throw FormatError("datastore: reserved field not zero");
  const auto n = get<std::uint64_t>(in, "entry count");

  const auto actual = std::filesystem::file_size(path);
  const std::uint64_t expected = kDatastoreHeaderBytes + 4ull * n * dim + 4ull * n;
  if (actual != expected) {
    throw FormatError("datastore: file is " + std::to_string(actual) + " bytes, header implies " +
                      std::to_string(expected));
  }
  if (n > 0 && dim == 0) throw FormatError("datastore: zero dimension with entries");

  Datastore ds;
  ds.dim = dim;
  ds.keys = Matrix(n, dim);
  auto keys = ds.keys.flat();
  if (!in.read(reinterpret_cast<char*>(keys.data()), static_cast<std::streamsize>(keys.size_bytes()))) {
    throw FormatError("datastore: truncated keys");
  }
  ds.values.resize(n);
  if (!in.read(reinterpret_cast<char*>(ds.values.data()), static_cast<std::streamsize>(n * sizeof(TokenId)))) {
    throw FormatError("datastore: truncated values");
  }
  return ds;
}

}  // namespace gknn
