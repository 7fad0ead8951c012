// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "gknn/datastore.hpp"
#include "gknn/json_io.hpp"
#include "gknn/numerics.hpp"

namespace gknn {

class ToyModel;

struct Hyperparams {
  double lambda = 0.7;       // interpolation weight of the kNN distribution
  double temperature = 10.0; // divides the squared L2 distances
  std::size_t k = 8;         // neighbours for vanilla retrieval
  std::size_t k_max_adaptive = 4;

  void validate() const;
};

// Per-domain lambda / temperature defaults ("it", "koran", "law", "medical").
Hyperparams domain_defaults(std::string_view domain);

// softmax(-d_j / T) over the neighbours, summed into vocabulary slots by
// value. Throws ParameterError on an empty set or T <= 0.
Vector knn_distribution(const NeighborSet& neighbors, double temperature, std::size_t vocab);

// lambda * p_knn + (1 - lambda) * p_mt.
Vector interpolate(std::span<const float> p_mt, std::span<const float> p_knn, double lambda);

// Feed-forward combiner over 2*K features (log1p of each distance, and for
// rank j the number of neighbours at ranks 1..j sharing rank j's value),
// emitting K+1 softmax weights: slot 0 scales p_mt, slot j the kNN
// distribution over the j nearest neighbours.
class MetaKNet {
 public:
  MetaKNet() = default;
  MetaKNet(std::size_t k_max, std::size_t hidden, std::uint64_t seed);

  std::size_t k_max() const { return k_max_; }
  std::size_t hidden() const { return w1_.rows(); }

  std::vector<double> features(const NeighborSet& neighbors) const;
  std::vector<double> weights(const NeighborSet& neighbors) const;

  std::vector<std::span<float>> mutable_parameters();
  std::vector<std::span<const float>> parameters() const;

  // Output bias access for building fixed-weight nets in tests and tools.
  Vector& output_bias() { return b2_; }
  Matrix& output_weights() { return w2_; }

  Json to_json() const;
  static MetaKNet from_json(const Json& j);

  // Forward + backward for -log(sum_s w_s * a_s) where a_s is the gold
  // probability under slot s. Accumulates into grads (same block order as
  // parameters()) and returns the loss.
  double nll_and_gradient(std::span<const double> features, std::span<const double> slot_gold_probs,
                          std::vector<std::vector<double>>* grads) const;

 private:
  std::vector<double> hidden_pre(std::span<const double> features) const;

  std::size_t k_max_ = 0;
  Matrix w1_;  // hidden x 2K
  Vector b1_;
  Matrix w2_;  // (K+1) x hidden
  Vector b2_;
};

// kNN distribution over only the first j neighbours, j = 1..K_max
// (clamped to the neighbours available).
std::vector<Vector> prefix_knn_distributions(const NeighborSet& neighbors, double temperature,
                                             std::size_t vocab, std::size_t k_max);

// Empty neighbour set -> p_mt unchanged.
Vector meta_k_combine(const MetaKNet& net, std::span<const float> p_mt, const NeighborSet& neighbors,
                      double temperature, std::size_t vocab);

struct MetaKTrainOptions {
  int epochs = 30;
  int batch_sentences = 16;
  double lr = 1e-3;
  std::size_t hidden = 32;
  std::uint64_t seed = 11;
};

// Mean teacher-forced NLL of the gold tokens under meta_k_combine.
double meta_k_nll(const MetaKNet& net, const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                  const Hyperparams& hyper);

// Trains `net` in place with Adam; returns the per-epoch mean NLL.
std::vector<double> train_meta_k(MetaKNet& net, const Corpus& valid, const ToyModel& model,
                                 const Datastore& ds, const Hyperparams& hyper,
                                 const MetaKTrainOptions& options);

}  // namespace gknn
