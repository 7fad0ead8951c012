// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Retrieval gate. Given the decoder hidden state f it predicts whether the
// kNN revision is needed for this token:
//
//   p(A | f) = softmax(W2^T ReLU(W1^T f)),   A = 0 retrieve, A = 1 skip
//
// Training combines a class-weighted cross-entropy against labels derived
// from the frozen model (label 1 iff the model's argmax is already the
// gold token) with the translation NLL under the gated mixture. The gate
// in the translation term is a hard Gumbel-softmax sample whose gradient
// is taken through the relaxed sample (straight-through).

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gknn/datastore.hpp"
#include "gknn/json_io.hpp"
#include "gknn/knnprob.hpp"
#include "gknn/numerics.hpp"

namespace gknn {

class ToyModel;

enum class GateDecision : int { kRetrieve = 0, kSkip = 1 };

using GateProbs = std::array<double, 2>;

class Selector {
 public:
  Selector() = default;
  // W1: d x d', W2: d' x 2, no biases.
  Selector(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);
  Selector(Matrix w1, Matrix w2);

  std::size_t input_dim() const { return w1_.rows(); }
  std::size_t hidden_dim() const { return w1_.cols(); }
  const Matrix& w1() const { return w1_; }
  const Matrix& w2() const { return w2_; }

  std::vector<std::span<float>> mutable_parameters() { return {w1_.flat(), w2_.flat()}; }
  std::vector<std::span<const float>> parameters() const { return {w1_.flat(), w2_.flat()}; }

  Json to_json() const;
  static Selector from_json(const Json& j);

 private:
  Matrix w1_;
  Matrix w2_;
};

// Two-class softmax. Throws DimensionError if f has the wrong length.
GateProbs selector_forward(const Selector& sel, std::span<const float> f);

// argmax; an exact tie retrieves.
GateDecision decide(const GateProbs& probs);
GateDecision decide(const Selector& sel, std::span<const float> f);

// Labels per teacher-forced step (end-of-sentence included): 1 iff the
// model's argmax (lowest id on ties) equals the gold token.
std::vector<int> make_labels(const ToyModel& model, const Corpus& corpus);

// Everything the selector loss needs about one teacher-forced position.
// The model and datastore are frozen, so these are computed once.
struct SelectorExample {
  Vector hidden;
  int label = 1;
  double p_mt_gold = 0.0;        // p_MT(gold)
  double p_combined_gold = 0.0;  // lambda mixture at the gold token
};

std::vector<SelectorExample> prepare_selector_examples(const ToyModel& model, const Datastore& ds,
                                                       const Corpus& corpus, const Hyperparams& hyper);

enum class SelectorLossMode { kCeOnly, kJoint };

// How the gate enters the translation term: a hard one-hot with
// straight-through gradient (training), or the relaxed sample itself
// (used to check gradients against finite differences).
enum class GateRelaxation { kStraightThrough, kSoft };

struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  std::size_t batch_tokens = 0;    // B
  std::size_t negatives = 0;       // label-1 tokens (N in the class weights)
  bool degenerate = false;         // all labels equal: one class weight is zero
};

struct SelectorGradients {
  std::vector<double> w1;
  std::vector<double> w2;
};

struct SelectorLossResult {
  LossBreakdown loss;
  SelectorGradients grads;
};

// L = L1/B + L2/B. In kJoint mode `noise` must hold one pair of Gumbel
// samples per example; in kCeOnly mode it is ignored. Throws
// ParameterError on an empty batch or tau <= 0 in joint mode.
SelectorLossResult selector_loss(std::span<const SelectorExample> batch, const Selector& sel, double tau,
                                 SelectorLossMode mode,
                                 std::span<const std::array<GumbelSample, 2>> noise,
                                 GateRelaxation relaxation = GateRelaxation::kStraightThrough);

struct SelectorTrainOptions {
  int epochs = 100;
  int batch_sentences = 8;
  double lr = 1e-4;
  double tau = 0.1;
  std::size_t hidden = 0;  // 0 -> same as the input dimension
  SelectorLossMode mode = SelectorLossMode::kJoint;
  std::uint64_t seed = 13;
};

struct SelectorEpochStats {
  int epoch = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double retrieving_ratio = 0.0;
  std::size_t degenerate_batches = 0;
};

// Trains `sel` in place on examples grouped by sentence (offsets has one
// entry per sentence plus a terminal entry). Stats are measured on the same
// examples after each epoch.
std::vector<SelectorEpochStats> train_selector(Selector& sel, std::span<const SelectorExample> examples,
                                               std::span<const std::size_t> sentence_offsets,
                                               const SelectorTrainOptions& options);

// Convenience: offsets for a corpus whose examples were prepared in order.
std::vector<std::size_t> sentence_offsets(const Corpus& corpus);

}  // namespace gknn
