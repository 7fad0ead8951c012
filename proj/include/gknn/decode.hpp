// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gknn/datastore.hpp"
#include "gknn/knnprob.hpp"
#include "gknn/model.hpp"
#include "gknn/selector.hpp"

namespace gknn {

enum class DecodeMode { kPureNmt, kVanilla, kAdaptive, kGated };

std::string_view mode_name(DecodeMode mode);
DecodeMode parse_mode(std::string_view name);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kPureNmt;
  int beam = 4;
  // 0 -> 2 * source length + 8.
  int max_len = 0;
  Hyperparams hyper;
  // Gated mode only: revise with the Meta-k combiner instead of the fixed-lambda mixture.
  bool gate_over_adaptive = false;
  // Gated mode only: bypass the selector with a fixed decision.
  std::optional<GateDecision> forced_gate;
  // Keep traces only for steps on the returned best path.
  bool surviving_only = false;
  // Sentence-level workers for translate_corpus (timed runs use 1).
  int workers = 1;
};

struct Components {
  const ToyModel* model = nullptr;
  const Datastore* datastore = nullptr;
  const Selector* selector = nullptr;
  const MetaKNet* meta_k = nullptr;
};

struct StepTrace {
  std::optional<GateDecision> gate;
  bool retrieved = false;
  TokenId token = kEos;
  double model_seconds = 0.0;
  double gate_seconds = 0.0;
  double retrieval_seconds = 0.0;
  double mix_seconds = 0.0;
};

struct StepResult {
  Vector p_final;
  StepTrace trace;
};

// One step of gated decoding: compute f and p_MT; in gated mode ask the
// selector (or the forced decision), retrieve only on A = 0. Vanilla always
// revises with the fixed-lambda mixture, adaptive with Meta-k. An empty datastore falls back
// to p_MT. Throws ConfigError if the mode needs a missing component.
StepResult decode_step(const DecodeConfig& cfg, const Components& comps, std::span<const TokenId> source,
                       std::span<const TokenId> prefix);

struct Hypothesis {
  std::vector<TokenId> tokens;  // without BOS / EOS
  double log_prob = 0.0;
  double score = 0.0;           // log_prob / emitted steps
  bool finished = false;
};

struct BeamResult {
  std::vector<Hypothesis> finalists;  // sorted by score, best first
  std::vector<StepTrace> traces;      // every evaluated (hypothesis, step)
  const Hypothesis& best() const { return finalists.front(); }
};

BeamResult beam_search(const DecodeConfig& cfg, const Components& comps, std::span<const TokenId> source);

// Plain argmax decoding on the same step function (beam = 1 must agree).
std::vector<TokenId> greedy_decode(const DecodeConfig& cfg, const Components& comps,
                                   std::span<const TokenId> source);

struct TimingReport {
  double total_seconds = 0.0;
  double knn_overhead_seconds = 0.0;  // gate + retrieval + revision
  double model_seconds = 0.0;
  double gate_seconds = 0.0;
  double retrieval_seconds = 0.0;
  double mix_seconds = 0.0;
  std::size_t tokens = 0;             // emitted tokens (EOS included)
  std::size_t steps = 0;              // evaluated decoder steps
  std::size_t retrieval_calls = 0;
  std::size_t gate_retrieve_decisions = 0;
  std::size_t runs = 1;

  double tokens_per_second() const { return total_seconds > 0.0 ? static_cast<double>(tokens) / total_seconds : 0.0; }
};

struct CorpusTranslation {
  std::vector<std::vector<TokenId>> hypotheses;
  TimingReport timing;
  std::vector<GateDecision> decisions;  // in step order, gated mode only
};

CorpusTranslation translate_corpus(const DecodeConfig& cfg, const Components& comps,
                                   const std::vector<std::vector<TokenId>>& sources);

}  // namespace gknn
