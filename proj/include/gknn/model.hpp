// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// The frozen translation model: a fixed-context feed-forward next-token
// predictor. Its hidden state is the retrieval key/query of the datastore.
//
//   context = [mean source embedding ; aligned source embedding ;
//              embedding(y_{i-1}) ; embedding(y_{i-2})]
//   h       = W2 ReLU(W1 context + b1) + b2
//   p_mt    = softmax(Wo h + bo)
//
// The aligned source token is the source position paired with the current
// target position by the corpus reordering rule (the end-of-sentence
// embedding once the source is exhausted). It plays the role attention
// plays in a real decoder.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gknn/json_io.hpp"
#include "gknn/numerics.hpp"
#include "gknn/toygen.hpp"

namespace gknn {

struct ModelDims {
  std::size_t source_vocab = 0;  // including the reserved ids
  std::size_t target_vocab = 0;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  bool operator==(const ModelDims&) const = default;
};

struct ModelTrainOptions {
  int epochs = 20;
  int batch_sentences = 32;
  double lr = 2e-3;
  std::uint64_t seed = 7;
};

struct ModelOutput {
  Vector hidden;
  Vector probs;
};

struct TeacherForcedStep {
  Vector hidden;
  Vector probs;
  TokenId gold = kEos;
};

class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  std::size_t hidden_size() const { return dims_.hidden; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Deterministic. `prefix` starts with BOS. Throws InputError on
  // out-of-vocabulary ids or an empty source.
  ModelOutput forward(std::span<const TokenId> source, std::span<const TokenId> prefix) const;

  // Parameter blocks in a fixed order. The mutable view throws
  // ContractError once the model is frozen.
  std::vector<std::span<const float>> parameters() const;
  std::vector<std::span<float>> mutable_parameters();

  // Mean teacher-forced NLL over every step of `batch`; when `grads` is
  // non-null it receives d(loss)/d(parameter), one vector per block.
  double loss_and_gradient(std::span<const SentencePair> batch,
                           std::vector<std::vector<float>>* grads) const;

  // FNV-1a over dims and parameter bytes.
  std::uint64_t checksum() const;

  Json to_json() const;
  static ToyModel from_json(const Json& j);

 private:
  struct Activations;
  void context(std::span<const TokenId> source, std::span<const float> source_mean,
               std::size_t position, std::span<const TokenId> prefix, std::span<float> out) const;
  void run(std::span<const float> context, Activations& act) const;
  void check_ids(std::span<const TokenId> source, std::span<const TokenId> prefix) const;

  ModelDims dims_;
  Matrix source_embed_;
  Matrix target_embed_;
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
  Matrix out_;
  Vector out_bias_;
  bool frozen_ = false;
};

// Teacher-forced cross-entropy training with Adam; freezes the model on
// return. Returns the token-weighted mean training loss per epoch.
std::vector<double> train_model(ToyModel& model, const Corpus& corpus,
                                const ModelTrainOptions& options);

// One record per target position plus the end-of-sentence step.
std::vector<TeacherForcedStep> teacher_forced_pass(const ToyModel& model, const SentencePair& pair);

// Fraction of teacher-forced steps whose argmax equals the gold token.
double token_accuracy(const ToyModel& model, const Corpus& corpus);

}  // namespace gknn
