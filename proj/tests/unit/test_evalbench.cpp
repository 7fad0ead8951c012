// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>

#include <doctest.h>

#include "fixtures.hpp"
#include "gknn/errors.hpp"
#include "gknn/evalbench.hpp"

using namespace gknn;
using gknn::testing::small_world;
using gknn::testing::World;

namespace {

using Sentences = std::vector<std::vector<TokenId>>;

constexpr auto R = GateDecision::kRetrieve;
constexpr auto S = GateDecision::kSkip;

// Independent per-position recount: p_kNN from raw distances, mixed by hand.
std::vector<RevisionRecord> recount(const World& w, const Corpus& corpus, const Hyperparams& hyper,
                                    std::size_t limit) {
  std::vector<RevisionRecord> out;
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(w.model, pair)) {
      if (out.size() == limit) return out;
      const auto nb = knn_search(w.datastore, step.hidden, hyper.k);
      std::vector<double> knn(step.probs.size(), 0.0);
      double z = 0.0;
      for (const auto& n : nb) z += std::exp(-(n.distance - nb[0].distance) / hyper.temperature);
      for (const auto& n : nb) knn[n.value] += std::exp(-(n.distance - nb[0].distance) / hyper.temperature) / z;
      std::vector<double> mixed(step.probs.size());
      for (std::size_t i = 0; i < mixed.size(); ++i) {
        mixed[i] = static_cast<float>(hyper.lambda * static_cast<float>(knn[i]) + (1.0 - hyper.lambda) * step.probs[i]);
      }
      out.push_back({step.gold, static_cast<TokenId>(argmax(step.probs)), static_cast<TokenId>(argmax(mixed))});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("bleu: identity, empty output, hand case, count mismatch") {
  const Sentences refs{{4, 5, 6, 7, 8}, {9, 10, 11, 12}};
  CHECK(corpus_bleu(refs, refs) == doctest::Approx(100.0));
  CHECK(corpus_bleu(Sentences{{}, {}}, refs) == 0.0);
  const double expected = 100.0 * std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25);
  CHECK(corpus_bleu(Sentences{{4, 5, 6, 7, 8}}, Sentences{{4, 5, 6, 7, 9}}) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(66.87).epsilon(1e-4));
  CHECK_THROWS_AS(corpus_bleu(Sentences{{4}}, refs), DimensionError);
}

TEST_CASE("bleu: brevity penalty and sentence-order invariance") {
  // Hypothesis of length 4 against reference of length 5: all n-grams match.
  const double bp = std::exp(1.0 - 5.0 / 4.0);
  CHECK(corpus_bleu(Sentences{{4, 5, 6, 7}}, Sentences{{4, 5, 6, 7, 8}}) == doctest::Approx(100.0 * bp).epsilon(1e-9));

  Rng rng(3);
  Sentences hyps, refs;
  for (int i = 0; i < 20; ++i) {
    std::vector<TokenId> h, r;
    for (int j = 0; j < 8; ++j) {
      r.push_back(static_cast<TokenId>(4 + uniform01(rng) * 5));
      h.push_back(uniform01(rng) < 0.7 ? r.back() : static_cast<TokenId>(4 + uniform01(rng) * 5));
    }
    hyps.push_back(h);
    refs.push_back(r);
  }
  const double base = corpus_bleu(hyps, refs);
  std::vector<std::size_t> order(20);
  for (std::size_t i = 0; i < 20; ++i) order[i] = (i * 7) % 20;
  Sentences h2, r2;
  for (std::size_t i : order) {
    h2.push_back(hyps[i]);
    r2.push_back(refs[i]);
  }
  CHECK(corpus_bleu(h2, r2) == base);
}

TEST_CASE("selector metrics: perfect gate and the hand confusion matrix") {
  const std::vector<GateDecision> perfect{R, S, R, S};
  const std::vector<int> labels{0, 1, 0, 1};
  const auto p = selector_metrics(perfect, labels);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.retrieving_ratio == 0.5);

  // TP=3, FP=2, FN=1, TN=4.
  const std::vector<GateDecision> d{R, R, R, R, R, S, S, S, S, S};
  const std::vector<int> l{0, 0, 0, 1, 1, 0, 1, 1, 1, 1};
  const auto m = selector_metrics(d, l);
  CHECK(m.tp == 3);
  CHECK(m.fp == 2);
  CHECK(m.fn == 1);
  CHECK(m.tn == 4);
  CHECK(m.total() == 10);
  CHECK(m.precision == doctest::Approx(0.6));
  CHECK(m.recall == doctest::Approx(0.75));
  CHECK(m.retrieving_ratio == doctest::Approx(0.5));
  CHECK_THROWS_AS(selector_metrics(d, std::vector<int>{0}), DimensionError);
}

TEST_CASE("redundancy: lambda 0 changes nothing, unchanged sets nest, recount agrees") {
  const World& w = small_world();
  const Corpus corpus(w.shifted_test.begin(), w.shifted_test.begin() + 30);
  Hyperparams h0, h5, h1;
  h0.lambda = 0.0;
  h5.lambda = 0.5;
  h1.lambda = 1.0;
  CHECK(measure_redundancy(w.model, w.datastore, corpus, h0) == 1.0);
  const auto r0 = revision_records(w.model, w.datastore, corpus, h0);
  const auto r5 = revision_records(w.model, w.datastore, corpus, h5);
  const auto r1 = revision_records(w.model, w.datastore, corpus, h1);
  REQUIRE(r0.size() == r1.size());
  for (std::size_t i = 0; i < r0.size(); ++i) {
    if (r1[i].unchanged()) CHECK(r5[i].unchanged());
    if (r5[i].unchanged()) CHECK(r0[i].unchanged());
  }

  const Hyperparams hyper;
  const auto records = revision_records(w.model, w.datastore, corpus, hyper);
  const auto oracle = recount(w, corpus, hyper, 50);
  std::size_t same = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(records[i].gold == oracle[i].gold);
    CHECK(records[i].mt_argmax == oracle[i].mt_argmax);
    CHECK(records[i].revised_argmax == oracle[i].revised_argmax);
    same += oracle[i].unchanged() ? 1 : 0;
  }
  const std::span<const RevisionRecord> slice(records.data(), 50);
  CHECK(redundancy_ratio(slice) == doctest::Approx(static_cast<double>(same) / 50.0).epsilon(1e-12));
  CHECK_THROWS_AS(measure_redundancy(w.model, w.datastore, Corpus{}, hyper), InputError);
}

TEST_CASE("futile tokens: recount, frequency order without changes, oversized top_n") {
  const World& w = small_world();
  const Corpus corpus(w.shifted_test.begin(), w.shifted_test.begin() + 10);
  const auto records = revision_records(w.model, w.datastore, corpus, Hyperparams{});
  const std::span<const RevisionRecord> slice(records.data(), 30);
  std::map<TokenId, std::size_t> unchanged;
  for (const auto& r : slice) unchanged[r.gold] += r.unchanged() ? 1 : 0;
  for (const auto& row : futile_token_report(slice, 1000)) CHECK(row.unchanged == unchanged[row.token]);
  CHECK(futile_token_report(slice, 1000).size() == unchanged.size());
  CHECK(futile_token_report(slice, 3).size() == 3);

  Hyperparams none;
  none.lambda = 0.0;
  const auto all = revision_records(w.model, w.datastore, corpus, none);
  std::map<TokenId, std::size_t> freq;
  for (const auto& r : all) ++freq[r.gold];
  const auto ranked = futile_token_report(all, 1000);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].unchanged == freq[ranked[i].token]);
    CHECK(ranked[i].occurrences == freq[ranked[i].token]);
    if (i > 0) {
      CHECK(ranked[i - 1].unchanged >= ranked[i].unchanged);
      if (ranked[i - 1].unchanged == ranked[i].unchanged) CHECK(ranked[i - 1].token < ranked[i].token);
    }
  }
  const std::string csv = futile_tokens_csv(std::span(ranked).first(2), w.target_vocab);
  CHECK(csv.rfind("rank,token,unchanged,occurrences\n1,", 0) == 0);
}

TEST_CASE("overhead change formatting matches the raw numbers") {
  CHECK(overhead_change_percent(10.0, 5.97) == doctest::Approx(-40.3));
  CHECK(format_change(-40.3) == "(-40.3%)");
  CHECK(format_change(12.04) == "(+12.0%)");
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const double base = 0.1 + uniform01(rng) * 10.0;
    const double x = uniform01(rng) * 12.0;
    const double pct = overhead_change_percent(base, x);
    const std::string cell = format_change(pct);
    const double parsed = std::stod(cell.substr(1, cell.size() - 3));
    CHECK(std::abs(parsed - 100.0 * (x - base) / base) <= 0.05 + 1e-9);
  }
}

TEST_CASE("benchmark suite on a handful of sentences") {
  const World& w = small_world();
  const Corpus corpus(w.shifted_test.begin(), w.shifted_test.begin() + 12);
  const Components comps{&w.model, &w.datastore};
  DecodeConfig pure;
  pure.mode = DecodeMode::kPureNmt;
  pure.workers = 4;
  DecodeConfig vanilla = pure;
  vanilla.mode = DecodeMode::kVanilla;
  DecodeConfig skip = pure;
  skip.mode = DecodeMode::kGated;
  skip.forced_gate = GateDecision::kSkip;
  const auto report = benchmark_suite({{"pure", pure, comps}, {"vanilla", vanilla, comps}, {"gated", skip, comps}},
                                      corpus, 2);
  CHECK(report.repeats == 2);
  REQUIRE(report.rows.size() == 3);
  const auto* p = report.find("pure");
  const auto* v = report.find("vanilla");
  const auto* g = report.find("gated");
  REQUIRE(p);
  REQUIRE(v);
  REQUIRE(g);
  CHECK(report.find("missing") == nullptr);
  CHECK(p->timing.retrieval_calls == 0);
  CHECK(v->timing.retrieval_calls == v->timing.steps);
  CHECK(v->decode_retrieving_ratio == 1.0);
  CHECK(g->hypotheses == p->hypotheses);
  CHECK_FALSE(g->selector.has_value());
  for (const auto& row : report.rows) {
    CHECK(row.timing.knn_overhead_seconds <= row.timing.total_seconds);
    CHECK(row.hypotheses.size() == corpus.size());
  }
  Sentences refs;
  for (const auto& pair : corpus) refs.push_back(pair.target);
  CHECK(v->bleu == corpus_bleu(v->hypotheses, refs));
  CHECK(report.table().find("vanilla") != std::string::npos);
  CHECK(report.to_json()["rows"].size() == 3);
  CHECK_THROWS_AS(benchmark_suite({{"pure", pure, comps}}, corpus, 0), ParameterError);
}
