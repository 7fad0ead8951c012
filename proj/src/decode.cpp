// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "gknn/errors.hpp"

namespace gknn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_components(const DecodeConfig& cfg, const Components& c) {
  if (!c.model) throw ConfigError("decode: a model is required");
  const bool needs_ds = cfg.mode != DecodeMode::kPureNmt;
  if (needs_ds && !c.datastore) throw ConfigError(std::string(mode_name(cfg.mode)) + " decoding needs a datastore");
  const bool adaptive = cfg.mode == DecodeMode::kAdaptive || (cfg.mode == DecodeMode::kGated && cfg.gate_over_adaptive);
  if (adaptive && !c.meta_k) throw ConfigError("adaptive revision needs a trained Meta-k network");
  if (cfg.mode == DecodeMode::kGated && !cfg.forced_gate && !c.selector) {
    throw ConfigError("gated decoding needs a trained selector");
  }
}

std::size_t resolve_max_len(const DecodeConfig& cfg, std::size_t source_len) {
  return cfg.max_len > 0 ? static_cast<std::size_t>(cfg.max_len) : 2 * source_len + 8;
}

// Retrieval plus revision, shared verbatim by every mode that retrieves so
// that forced-retrieve gating and vanilla decoding are bit-identical.
Vector revise(const Components& c, const Vector& hidden, const Vector& p_mt, bool adaptive, const Hyperparams& hyper,
              StepTrace& trace) {
  const std::size_t vocab = c.model->dims().target_vocab;
  auto t0 = Clock::now();
  const auto nb = knn_search(*c.datastore, hidden, adaptive ? hyper.k_max_adaptive : hyper.k);
  trace.retrieval_seconds += seconds_since(t0);
  trace.retrieved = true;
  if (nb.empty()) return p_mt;
  t0 = Clock::now();
  Vector out = adaptive ? meta_k_combine(*c.meta_k, p_mt, nb, hyper.temperature, vocab)
                        : interpolate(p_mt, knn_distribution(nb, hyper.temperature, vocab), hyper.lambda);
  trace.mix_seconds += seconds_since(t0);
  return out;
}

}  // namespace

std::string_view mode_name(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kPureNmt: return "pure";
    case DecodeMode::kVanilla: return "vanilla";
    case DecodeMode::kAdaptive: return "adaptive";
    case DecodeMode::kGated: return "gated";
  }
  return "?";
}

DecodeMode parse_mode(std::string_view name) {
  if (name == "pure") return DecodeMode::kPureNmt;
  if (name == "vanilla") return DecodeMode::kVanilla;
  if (name == "adaptive") return DecodeMode::kAdaptive;
  if (name == "gated") return DecodeMode::kGated;
  throw ConfigError("unknown decode mode '" + std::string(name) + "' (pure|vanilla|adaptive|gated)");
}

StepResult decode_step(const DecodeConfig& cfg, const Components& comps, std::span<const TokenId> source,
                       std::span<const TokenId> prefix) {
  require_components(cfg, comps);
  StepResult res;
  auto t0 = Clock::now();
  ModelOutput out = comps.model->forward(source, prefix);
  res.trace.model_seconds = seconds_since(t0);

  switch (cfg.mode) {
    case DecodeMode::kPureNmt:
      res.p_final = std::move(out.probs);
      break;
    case DecodeMode::kVanilla:
      res.p_final = revise(comps, out.hidden, out.probs, false, cfg.hyper, res.trace);
      break;
    case DecodeMode::kAdaptive:
      res.p_final = revise(comps, out.hidden, out.probs, true, cfg.hyper, res.trace);
      break;
    case DecodeMode::kGated: {
      GateDecision gate;
      if (cfg.forced_gate) {
        gate = *cfg.forced_gate;
      } else {
        t0 = Clock::now();
        gate = decide(*comps.selector, out.hidden);
        res.trace.gate_seconds = seconds_since(t0);
      }
      res.trace.gate = gate;
      res.p_final = gate == GateDecision::kRetrieve
                        ? revise(comps, out.hidden, out.probs, cfg.gate_over_adaptive, cfg.hyper, res.trace)
                        : std::move(out.probs);
      break;
    }
  }
  res.trace.token = static_cast<TokenId>(argmax(res.p_final));
  return res;
}

BeamResult beam_search(const DecodeConfig& cfg, const Components& comps, std::span<const TokenId> source) {
  if (cfg.beam < 1) throw ParameterError("beam_search: beam must be >= 1");
  require_components(cfg, comps);
  const auto beam = static_cast<std::size_t>(cfg.beam);
  const std::size_t max_len = resolve_max_len(cfg, source.size());

  struct Live {
    std::vector<TokenId> tokens;
    double log_prob = 0.0;
    std::vector<std::size_t> trace_ids;
  };
  struct Candidate {
    double log_prob;
    std::size_t parent;
    std::size_t rank;
    TokenId token;
  };

  BeamResult result;
  std::vector<Live> active(1);
  std::vector<std::pair<Hypothesis, std::vector<std::size_t>>> done;
  std::vector<TokenId> prefix;
  std::vector<std::size_t> by_prob;

  for (std::size_t t = 0; t < max_len && !active.empty() && done.size() < beam; ++t) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < active.size(); ++h) {
      prefix.assign(1, kBos);
      prefix.insert(prefix.end(), active[h].tokens.begin(), active[h].tokens.end());
      StepResult step = decode_step(cfg, comps, source, prefix);
      active[h].trace_ids.push_back(result.traces.size());
      result.traces.push_back(step.trace);

      const Vector& p = step.p_final;
      by_prob.resize(p.size());
      std::iota(by_prob.begin(), by_prob.end(), std::size_t{0});
      const std::size_t take = std::min(beam, p.size());
      std::partial_sort(by_prob.begin(), by_prob.begin() + static_cast<std::ptrdiff_t>(take), by_prob.end(),
                        [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
      for (std::size_t r = 0; r < take; ++r) {
        const auto v = static_cast<TokenId>(by_prob[r]);
        const double lp = p[v] > 0.0f ? std::log(static_cast<double>(p[v])) : -std::numeric_limits<double>::infinity();
        candidates.push_back({active[h].log_prob + lp, h, r, v});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.rank < b.rank;
    });

    std::vector<Live> next;
    const std::size_t open_slots = beam - done.size();
    std::size_t taken = 0;
    for (const Candidate& c : candidates) {
      if (taken++ >= open_slots) break;
      const Live& parent = active[c.parent];
      if (c.token == kEos) {
        Hypothesis hyp{parent.tokens, c.log_prob, 0.0, true};
        hyp.score = c.log_prob / static_cast<double>(parent.tokens.size() + 1);
        done.emplace_back(std::move(hyp), parent.trace_ids);
      } else {
        Live child = parent;
        child.tokens.push_back(c.token);
        child.log_prob = c.log_prob;
        next.push_back(std::move(child));
      }
    }
    active = std::move(next);
  }
  // Hypotheses cut off by the length limit are kept, unfinished.
  for (Live& live : active) {
    if (done.size() >= beam) break;
    Hypothesis hyp{live.tokens, live.log_prob, 0.0, false};
    hyp.score = live.tokens.empty() ? live.log_prob : live.log_prob / static_cast<double>(live.tokens.size());
    done.emplace_back(std::move(hyp), std::move(live.trace_ids));
  }

  std::stable_sort(done.begin(), done.end(),
                   [](const auto& a, const auto& b) { return a.first.score > b.first.score; });
  if (cfg.surviving_only && !done.empty()) {
    std::vector<StepTrace> kept;
    const auto& best = done.front();
    for (std::size_t i = 0; i < best.second.size(); ++i) {
      StepTrace tr = result.traces[best.second[i]];
      tr.token = i < best.first.tokens.size() ? best.first.tokens[i] : kEos;
      kept.push_back(tr);
    }
    result.traces = std::move(kept);
  }
  for (auto& d : done) result.finalists.push_back(std::move(d.first));
  return result;
}

std::vector<TokenId> greedy_decode(const DecodeConfig& cfg, const Components& comps, std::span<const TokenId> source) {
  require_components(cfg, comps);
  const std::size_t max_len = resolve_max_len(cfg, source.size());
  std::vector<TokenId> prefix{kBos};
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto step = decode_step(cfg, comps, source, prefix);
    const auto token = static_cast<TokenId>(argmax(step.p_final));
    if (token == kEos) break;
    prefix.push_back(token);
  }
  return {prefix.begin() + 1, prefix.end()};
}

CorpusTranslation translate_corpus(const DecodeConfig& cfg, const Components& comps,
                                   const std::vector<std::vector<TokenId>>& sources) {
  require_components(cfg, comps);
  const std::size_t n = sources.size();
  std::vector<BeamResult> results(n);
  const auto start = Clock::now();
  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = beam_search(cfg, comps, sources[i]);
  } else {
#pragma omp parallel for num_threads(workers) schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      results[static_cast<std::size_t>(i)] = beam_search(cfg, comps, sources[static_cast<std::size_t>(i)]);
    }
  }
  CorpusTranslation out;
  out.timing.total_seconds = seconds_since(start);
  for (auto& r : results) {
    const Hypothesis& best = r.best();
    out.timing.tokens += best.tokens.size() + (best.finished ? 1 : 0);
    for (const StepTrace& tr : r.traces) {
      out.timing.model_seconds += tr.model_seconds;
      out.timing.gate_seconds += tr.gate_seconds;
      out.timing.retrieval_seconds += tr.retrieval_seconds;
      out.timing.mix_seconds += tr.mix_seconds;
      out.timing.steps += 1;
      out.timing.retrieval_calls += tr.retrieved ? 1 : 0;
      if (tr.gate) {
        out.decisions.push_back(*tr.gate);
        out.timing.gate_retrieve_decisions += *tr.gate == GateDecision::kRetrieve ? 1 : 0;
      }
    }
    out.hypotheses.push_back(best.tokens);
  }
  out.timing.knn_overhead_seconds =
      out.timing.gate_seconds + out.timing.retrieval_seconds + out.timing.mix_seconds;
  return out;
}

}  // namespace gknn
