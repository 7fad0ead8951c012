// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Metrics and the benchmark harness: corpus BLEU, selector confusion
// counts, redundancy of kNN revision, futile-retrieval token counts, and a
// timed comparison of decoding modes.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gknn/decode.hpp"
#include "gknn/json_io.hpp"

namespace gknn {

// Positive class = "requires retrieval" = label 0; predicted positive =
// decision 0. Undefined precision or recall is reported as 0.
struct SelectorReport {
  double precision = 0.0;
  double recall = 0.0;
  double retrieving_ratio = 0.0;  // fraction of decisions that retrieve
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  Json to_json() const;
};

// Throws DimensionError on a length mismatch.
SelectorReport selector_metrics(std::span<const GateDecision> decisions, std::span<const int> labels);

// Token-level 4-gram corpus BLEU in [0, 100] with brevity penalty, uniform
// weights and no smoothing. Throws DimensionError on a count mismatch.
double corpus_bleu(const std::vector<std::vector<TokenId>>& hypotheses,
                   const std::vector<std::vector<TokenId>>& references);

// Teacher-forced view of one position: the gold token, the model's argmax
// and the argmax after fixed-lambda kNN revision (K = hyper.k).
struct RevisionRecord {
  TokenId gold = kEos;
  TokenId mt_argmax = kEos;
  TokenId revised_argmax = kEos;
  bool unchanged() const { return mt_argmax == revised_argmax; }
};

std::vector<RevisionRecord> revision_records(const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                                             const Hyperparams& hyper);

// Fraction of teacher-forced positions whose argmax survives revision.
// Throws InputError on an empty corpus.
double measure_redundancy(const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                          const Hyperparams& hyper);
double redundancy_ratio(std::span<const RevisionRecord> records);

struct FutileTokenCount {
  TokenId token = 0;
  std::size_t unchanged = 0;    // positions with this gold token left unchanged
  std::size_t occurrences = 0;  // all positions with this gold token
};

// Gold tokens ranked by unchanged-position count (descending, then id).
std::vector<FutileTokenCount> futile_token_report(std::span<const RevisionRecord> records, std::size_t top_n);
std::string futile_tokens_csv(std::span<const FutileTokenCount> rows, const Vocabulary& target_vocab);

// Teacher-forced selector decisions and labels over a corpus.
struct SelectorEvaluation {
  std::vector<GateDecision> decisions;
  std::vector<int> labels;
  SelectorReport report;
};

SelectorEvaluation evaluate_selector(const Selector& sel, const ToyModel& model, const Corpus& corpus);

struct BenchmarkEntry {
  std::string name;
  DecodeConfig config;
  Components components;
};

struct BenchmarkRow {
  std::string name;
  DecodeMode mode = DecodeMode::kPureNmt;
  double bleu = 0.0;
  TimingReport timing;  // buckets averaged over runs
  double decode_retrieving_ratio = 0.0;  // retrieval calls / evaluated steps
  std::optional<SelectorReport> selector;  // teacher-forced, trained gates only
  std::vector<std::vector<TokenId>> hypotheses;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::size_t repeats = 0;

  const BenchmarkRow* find(const std::string& name) const;
  Json to_json() const;
  std::string table() const;
};

// Percentage change of kNN overhead, e.g. -40.3 for a 40.3% reduction.
double overhead_change_percent(double baseline_seconds, double seconds);
// "(-40.3%)".
std::string format_change(double percent);

// Decodes the corpus once per repeat for each entry on a single worker and
// averages the timing buckets. Throws InputError if outputs differ across
// repeats and ParameterError if repeats < 1.
BenchmarkReport benchmark_suite(const std::vector<BenchmarkEntry>& entries, const Corpus& corpus,
                                int repeats = 3);

}  // namespace gknn
