// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/evalbench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "gknn/errors.hpp"

namespace gknn {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Json timing_json(const TimingReport& t) {
  return Json{{"total_seconds", t.total_seconds},
              {"knn_overhead_seconds", t.knn_overhead_seconds},
              {"model_seconds", t.model_seconds},
              {"gate_seconds", t.gate_seconds},
              {"retrieval_seconds", t.retrieval_seconds},
              {"mix_seconds", t.mix_seconds},
              {"tokens", t.tokens},
              {"tokens_per_second", t.tokens_per_second()},
              {"steps", t.steps},
              {"retrieval_calls", t.retrieval_calls},
              {"runs", t.runs}};
}

}  // namespace

Json SelectorReport::to_json() const {
  return Json{{"precision", precision}, {"recall", recall}, {"retrieving_ratio", retrieving_ratio},
              {"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
}

SelectorReport selector_metrics(std::span<const GateDecision> decisions, std::span<const int> labels) {
  if (decisions.size() != labels.size()) {
    throw DimensionError("selector_metrics: " + std::to_string(decisions.size()) + " decisions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  SelectorReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = decisions[i] == GateDecision::kRetrieve;
    const bool needed = labels[i] == 0;
    if (predicted && needed) ++r.tp;
    else if (predicted) ++r.fp;
    else if (needed) ++r.fn;
    else ++r.tn;
  }
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.retrieving_ratio = ratio(r.tp + r.fp, r.total());
  return r;
}

double corpus_bleu(const std::vector<std::vector<TokenId>>& hypotheses,
                   const std::vector<std::vector<TokenId>>& references) {
  if (hypotheses.size() != references.size()) {
    throw DimensionError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                         std::to_string(references.size()) + " references");
  }
  constexpr std::size_t kOrder = 4;
  std::array<std::size_t, kOrder> matches{};
  std::array<std::size_t, kOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= kOrder; ++n) {
      if (hyp.size() < n) continue;
      std::map<std::vector<TokenId>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
      std::map<std::vector<TokenId>, std::size_t> hyp_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}];
      for (const auto& [gram, count] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
      totals[n - 1] += hyp.size() - n + 1;
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < kOrder; ++n) {
    if (matches[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n])) / kOrder;
  }
  const double bp = hyp_len > ref_len ? 1.0
                                      : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_precision);
}

std::vector<RevisionRecord> revision_records(const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                                             const Hyperparams& hyper) {
  hyper.validate();
  const std::size_t vocab = model.dims().target_vocab;
  std::vector<RevisionRecord> out;
  out.reserve(teacher_forced_steps(corpus));
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(model, pair)) {
      RevisionRecord rec;
      rec.gold = step.gold;
      rec.mt_argmax = static_cast<TokenId>(argmax(step.probs));
      const auto nb = knn_search(ds, step.hidden, hyper.k);
      if (nb.empty()) {
        rec.revised_argmax = rec.mt_argmax;
      } else {
        const Vector p = interpolate(step.probs, knn_distribution(nb, hyper.temperature, vocab), hyper.lambda);
        rec.revised_argmax = static_cast<TokenId>(argmax(p));
      }
      out.push_back(rec);
    }
  }
  return out;
}

double redundancy_ratio(std::span<const RevisionRecord> records) {
  if (records.empty()) throw InputError("redundancy: no positions to measure");
  const auto unchanged = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.unchanged(); });
  return ratio(static_cast<std::size_t>(unchanged), records.size());
}

double measure_redundancy(const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                          const Hyperparams& hyper) {
  if (corpus.empty()) throw InputError("measure_redundancy: empty corpus");
  const auto records = revision_records(model, ds, corpus, hyper);
  return redundancy_ratio(records);
}

std::vector<FutileTokenCount> futile_token_report(std::span<const RevisionRecord> records, std::size_t top_n) {
  std::map<TokenId, FutileTokenCount> by_token;
  for (const auto& r : records) {
    auto& row = by_token[r.gold];
    row.token = r.gold;
    ++row.occurrences;
    if (r.unchanged()) ++row.unchanged;
  }
  std::vector<FutileTokenCount> rows;
  for (const auto& [token, row] : by_token) rows.push_back(row);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.unchanged != b.unchanged) return a.unchanged > b.unchanged;
    return a.token < b.token;
  });
  if (rows.size() > top_n) rows.resize(top_n);
  return rows;
}

std::string futile_tokens_csv(std::span<const FutileTokenCount> rows, const Vocabulary& target_vocab) {
  std::ostringstream out;
  out << "rank,token,unchanged,occurrences\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i + 1 << ',' << target_vocab.token(rows[i].token) << ',' << rows[i].unchanged << ','
        << rows[i].occurrences << '\n';
  }
  return out.str();
}

SelectorEvaluation evaluate_selector(const Selector& sel, const ToyModel& model, const Corpus& corpus) {
  SelectorEvaluation ev;
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(model, pair)) {
      ev.decisions.push_back(decide(sel, step.hidden));
      ev.labels.push_back(argmax(step.probs) == step.gold ? 1 : 0);
    }
  }
  ev.report = selector_metrics(ev.decisions, ev.labels);
  return ev;
}

const BenchmarkRow* BenchmarkReport::find(const std::string& name) const {
  for (const auto& row : rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

double overhead_change_percent(double baseline_seconds, double seconds) {
  if (baseline_seconds <= 0.0) return 0.0;
  return 100.0 * (seconds - baseline_seconds) / baseline_seconds;
}

std::string format_change(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "(%+.1f%%)", percent);
  return buf;
}

namespace {

const BenchmarkRow* vanilla_row(const BenchmarkReport& report) {
  for (const auto& row : report.rows) {
    if (row.mode == DecodeMode::kVanilla) return &row;
  }
  return nullptr;
}

}  // namespace

Json BenchmarkReport::to_json() const {
  Json j;
  j["repeats"] = repeats;
  j["rows"] = Json::array();
  const BenchmarkRow* base = vanilla_row(*this);
  for (const auto& row : rows) {
    Json r{{"name", row.name},
           {"mode", std::string(mode_name(row.mode))},
           {"bleu", row.bleu},
           {"timing", timing_json(row.timing)},
           {"decode_retrieving_ratio", row.decode_retrieving_ratio}};
    if (row.selector) r["selector"] = row.selector->to_json();
    if (base && &row != base && row.mode != DecodeMode::kPureNmt) {
      const double pct = overhead_change_percent(base->timing.knn_overhead_seconds, row.timing.knn_overhead_seconds);
      r["overhead_change_percent"] = pct;
      r["overhead_change"] = format_change(pct);
    }
    j["rows"].push_back(std::move(r));
  }
  return j;
}

std::string BenchmarkReport::table() const {
  const std::vector<std::string> header{"system", "BLEU", "total(s)", "kNN overhead(s)", "tokens/s",
                                        "retrievals", "precision", "recall", "ratio"};
  std::vector<std::vector<std::string>> cells{header};
  const BenchmarkRow* base = vanilla_row(*this);
  for (const auto& row : rows) {
    std::string overhead = fixed(row.timing.knn_overhead_seconds, 3);
    if (base && &row != base && row.mode != DecodeMode::kPureNmt) {
      overhead += " " + format_change(overhead_change_percent(base->timing.knn_overhead_seconds,
                                                              row.timing.knn_overhead_seconds));
    }
    cells.push_back({row.name, fixed(row.bleu, 2), fixed(row.timing.total_seconds, 3), overhead,
                     fixed(row.timing.tokens_per_second(), 1), std::to_string(row.timing.retrieval_calls),
                     row.selector ? fixed(row.selector->precision, 3) : "-",
                     row.selector ? fixed(row.selector->recall, 3) : "-",
                     row.mode == DecodeMode::kPureNmt ? "-" : fixed(row.decode_retrieving_ratio, 3)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto pad = std::string(width[c] - cells[r][c].size(), ' ');
      out << (c == 0 ? cells[r][c] + pad : pad + cells[r][c]) << (c + 1 < cells[r].size() ? "  " : "");
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  out << "timings averaged over " << repeats << " run(s)\n";
  return out.str();
}

BenchmarkReport benchmark_suite(const std::vector<BenchmarkEntry>& entries, const Corpus& corpus, int repeats) {
  if (repeats < 1) throw ParameterError("benchmark_suite: repeats must be >= 1");
  std::vector<std::vector<TokenId>> sources;
  std::vector<std::vector<TokenId>> references;
  for (const auto& pair : corpus) {
    sources.push_back(pair.source);
    references.push_back(pair.target);
  }
  BenchmarkReport report;
  report.repeats = static_cast<std::size_t>(repeats);
  for (const auto& entry : entries) {
    DecodeConfig cfg = entry.config;
    cfg.workers = 1;
    BenchmarkRow row;
    row.name = entry.name;
    row.mode = cfg.mode;
    TimingReport sum;
    for (int run = 0; run < repeats; ++run) {
      auto result = translate_corpus(cfg, entry.components, sources);
      if (run == 0) {
        row.hypotheses = std::move(result.hypotheses);
        sum = result.timing;
      } else {
        if (result.hypotheses != row.hypotheses) {
          throw InputError("benchmark_suite: '" + entry.name + "' produced different output on repeat " +
                           std::to_string(run + 1));
        }
        sum.total_seconds += result.timing.total_seconds;
        sum.knn_overhead_seconds += result.timing.knn_overhead_seconds;
        sum.model_seconds += result.timing.model_seconds;
        sum.gate_seconds += result.timing.gate_seconds;
        sum.retrieval_seconds += result.timing.retrieval_seconds;
        sum.mix_seconds += result.timing.mix_seconds;
      }
    }
    const double n = static_cast<double>(repeats);
    sum.total_seconds /= n;
    sum.knn_overhead_seconds /= n;
    sum.model_seconds /= n;
    sum.gate_seconds /= n;
    sum.retrieval_seconds /= n;
    sum.mix_seconds /= n;
    sum.runs = report.repeats;
    row.timing = sum;
    row.decode_retrieving_ratio = ratio(sum.retrieval_calls, sum.steps);
    row.bleu = corpus_bleu(row.hypotheses, references);
    if (cfg.mode == DecodeMode::kGated && !cfg.forced_gate && entry.components.selector) {
      row.selector = evaluate_selector(*entry.components.selector, *entry.components.model, corpus).report;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace gknn
