// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/selector.hpp"

#include <algorithm>
#include <cmath>

#include "gknn/errors.hpp"
#include "gknn/evalbench.hpp"
#include "gknn/model.hpp"

namespace gknn {
namespace {

constexpr double kProbFloor = 1e-30;

struct GateForward {
  std::vector<double> pre;  // W1^T f
  std::array<double, 2> logits{};
  std::array<double, 2> log_probs{};
  std::array<double, 2> probs{};
};

GateForward gate_forward(const Selector& sel, std::span<const float> f) {
  if (f.size() != sel.input_dim()) {
    throw DimensionError("selector: input has dimension " + std::to_string(f.size()) + ", expected " +
                         std::to_string(sel.input_dim()));
  }
  const Matrix& w1 = sel.w1();
  const Matrix& w2 = sel.w2();
  GateForward out;
  out.pre.assign(sel.hidden_dim(), 0.0);
  for (std::size_t i = 0; i < w1.rows(); ++i) {
    const double fi = f[i];
    if (fi == 0.0) continue;
    auto row = w1.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out.pre[j] += static_cast<double>(row[j]) * fi;
  }
  for (std::size_t j = 0; j < w2.rows(); ++j) {
    const double r = std::max(0.0, out.pre[j]);
    out.logits[0] += static_cast<double>(w2(j, 0)) * r;
    out.logits[1] += static_cast<double>(w2(j, 1)) * r;
  }
  const double mx = std::max(out.logits[0], out.logits[1]);
  const double lse = mx + std::log(std::exp(out.logits[0] - mx) + std::exp(out.logits[1] - mx));
  for (int c = 0; c < 2; ++c) {
    out.log_probs[c] = out.logits[c] - lse;
    out.probs[c] = std::exp(out.log_probs[c]);
  }
  return out;
}

}  // namespace

Selector::Selector(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed)
    : w1_(input_dim, hidden_dim), w2_(hidden_dim, 2) {
  if (input_dim == 0 || hidden_dim == 0) throw ParameterError("Selector: dimensions must be >= 1");
  Rng rng(seed);
  for (float& v : w1_.flat()) v = normal(rng, std::sqrt(2.0f / static_cast<float>(input_dim)));
  for (float& v : w2_.flat()) v = normal(rng, std::sqrt(1.0f / static_cast<float>(hidden_dim)));
}

Selector::Selector(Matrix w1, Matrix w2) : w1_(std::move(w1)), w2_(std::move(w2)) {
  if (w2_.cols() != 2 || w1_.cols() != w2_.rows()) throw DimensionError("Selector: W1 is d x d', W2 must be d' x 2");
}

Json Selector::to_json() const {
  return Json{{"kind", "selector"},
              {"input_dim", input_dim()},
              {"hidden_dim", hidden_dim()},
              {"params", {{"w1", matrix_to_json(w1_)}, {"w2", matrix_to_json(w2_)}}}};
}

Selector Selector::from_json(const Json& j) {
  try {
    if (j.at("kind") != "selector") throw FormatError("selector checkpoint: wrong kind");
    Selector s(matrix_from_json(j.at("params").at("w1"), "w1"), matrix_from_json(j.at("params").at("w2"), "w2"));
    if (s.input_dim() != j.at("input_dim").get<std::size_t>() || s.hidden_dim() != j.at("hidden_dim").get<std::size_t>()) {
      throw FormatError("selector checkpoint: shapes disagree with header");
    }
    return s;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("selector checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("selector checkpoint: ") + e.what());
  }
}

GateProbs selector_forward(const Selector& sel, std::span<const float> f) { return gate_forward(sel, f).probs; }

GateDecision decide(const GateProbs& probs) {
  return probs[1] > probs[0] ? GateDecision::kSkip : GateDecision::kRetrieve;
}

GateDecision decide(const Selector& sel, std::span<const float> f) { return decide(selector_forward(sel, f)); }

std::vector<int> make_labels(const ToyModel& model, const Corpus& corpus) {
  std::vector<int> labels;
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(model, pair)) {
      labels.push_back(argmax(step.probs) == step.gold ? 1 : 0);
    }
  }
  return labels;
}

std::vector<SelectorExample> prepare_selector_examples(const ToyModel& model, const Datastore& ds,
                                                       const Corpus& corpus, const Hyperparams& hyper) {
  hyper.validate();
  const std::size_t vocab = model.dims().target_vocab;
  std::vector<SelectorExample> out;
  out.reserve(teacher_forced_steps(corpus));
  for (const auto& pair : corpus) {
    for (auto& step : teacher_forced_pass(model, pair)) {
      SelectorExample ex;
      ex.label = argmax(step.probs) == step.gold ? 1 : 0;
      ex.p_mt_gold = step.probs[step.gold];
      const auto nb = knn_search(ds, step.hidden, hyper.k);
      if (nb.empty()) {
        ex.p_combined_gold = ex.p_mt_gold;
      } else {
        const auto p_knn = knn_distribution(nb, hyper.temperature, vocab);
        ex.p_combined_gold = interpolate(step.probs, p_knn, hyper.lambda)[step.gold];
      }
      ex.hidden = std::move(step.hidden);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

SelectorLossResult selector_loss(std::span<const SelectorExample> batch, const Selector& sel, double tau,
                                 SelectorLossMode mode, std::span<const std::array<GumbelSample, 2>> noise,
                                 GateRelaxation relaxation) {
  if (batch.empty()) throw ParameterError("selector_loss: empty batch");
  const bool joint = mode == SelectorLossMode::kJoint;
  if (joint && !(tau > 0.0)) throw ParameterError("selector_loss: tau must be positive");
  if (joint && noise.size() != batch.size()) throw DimensionError("selector_loss: need one noise pair per token");

  SelectorLossResult res;
  LossBreakdown& lb = res.loss;
  lb.batch_tokens = batch.size();
  for (const auto& ex : batch) lb.negatives += ex.label == 1 ? 1 : 0;
  lb.degenerate = lb.negatives == 0 || lb.negatives == lb.batch_tokens;
  const double b = static_cast<double>(lb.batch_tokens);
  const double w_retrieve = static_cast<double>(lb.negatives) / b;  // weight of label-0 terms
  const double w_skip = 1.0 - w_retrieve;                          // weight of label-1 terms

  const std::size_t d = sel.input_dim();
  const std::size_t h = sel.hidden_dim();
  res.grads.w1.assign(d * h, 0.0);
  res.grads.w2.assign(h * 2, 0.0);
  const Matrix& w2 = sel.w2();
  std::vector<double> dr(h);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SelectorExample& ex = batch[i];
    const GateForward fw = gate_forward(sel, ex.hidden);
    std::array<double, 2> dz{};

    // Weighted cross-entropy.
    const int cls = ex.label == 0 ? 0 : 1;
    const double weight = cls == 0 ? w_retrieve : w_skip;
    lb.l1 -= weight * fw.log_probs[cls];
    for (int c = 0; c < 2; ++c) dz[c] += weight * (fw.probs[c] - (c == cls ? 1.0 : 0.0));

    if (joint) {
      const auto y = gumbel_softmax(fw.log_probs, tau, noise[i]);
      std::array<double, 2> gate = y;
      if (relaxation == GateRelaxation::kStraightThrough) {
        const int hard = y[1] > y[0] ? 1 : 0;
        gate = {hard == 0 ? 1.0 : 0.0, hard == 1 ? 1.0 : 0.0};
      }
      const double mix = std::max(gate[0] * ex.p_combined_gold + gate[1] * ex.p_mt_gold, kProbFloor);
      lb.l2 -= std::log(mix);
      const std::array<double, 2> dgate = {-ex.p_combined_gold / mix, -ex.p_mt_gold / mix};
      // Through the relaxed sample y = softmax((log p + g) / tau).
      const double inner = y[0] * dgate[0] + y[1] * dgate[1];
      std::array<double, 2> dlogp{};
      for (int c = 0; c < 2; ++c) dlogp[c] = y[c] * (dgate[c] - inner) / tau;
      // log-softmax backward.
      const double sum = dlogp[0] + dlogp[1];
      for (int c = 0; c < 2; ++c) dz[c] += dlogp[c] - fw.probs[c] * sum;
    }

    for (int c = 0; c < 2; ++c) dz[c] /= b;
    for (std::size_t j = 0; j < h; ++j) {
      const double r = std::max(0.0, fw.pre[j]);
      res.grads.w2[j * 2 + 0] += r * dz[0];
      res.grads.w2[j * 2 + 1] += r * dz[1];
      dr[j] = fw.pre[j] > 0.0 ? static_cast<double>(w2(j, 0)) * dz[0] + static_cast<double>(w2(j, 1)) * dz[1] : 0.0;
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double fk = ex.hidden[k];
      if (fk == 0.0) continue;
      double* row = res.grads.w1.data() + k * h;
      for (std::size_t j = 0; j < h; ++j) row[j] += fk * dr[j];
    }
  }
  lb.total = lb.l1 / b + lb.l2 / b;
  return res;
}

std::vector<std::size_t> sentence_offsets(const Corpus& corpus) {
  std::vector<std::size_t> offsets{0};
  for (const auto& p : corpus) offsets.push_back(offsets.back() + p.target.size() + 1);
  return offsets;
}

std::vector<SelectorEpochStats> train_selector(Selector& sel, std::span<const SelectorExample> examples,
                                               std::span<const std::size_t> offsets,
                                               const SelectorTrainOptions& options) {
  if (examples.empty()) throw TrainingError("train_selector: no training examples");
  if (offsets.size() < 2 || offsets.back() != examples.size()) {
    throw DimensionError("train_selector: sentence offsets do not cover the examples");
  }
  const bool joint = options.mode == SelectorLossMode::kJoint;
  if (joint && !(options.tau > 0.0)) throw ParameterError("train_selector: tau must be positive");

  auto blocks = sel.mutable_parameters();
  std::vector<AdamState> states;
  for (auto blk : blocks) states.emplace_back(blk.size(), AdamOptions{options.lr});

  const std::size_t n_sent = offsets.size() - 1;
  std::vector<std::size_t> order(n_sent);
  for (std::size_t i = 0; i < n_sent; ++i) order[i] = i;
  const auto per_batch = static_cast<std::size_t>(std::max(1, options.batch_sentences));

  Rng rng(options.seed);
  std::vector<SelectorExample> batch;
  std::vector<std::array<GumbelSample, 2>> noise;
  std::vector<SelectorEpochStats> curve;
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = n_sent - 1; i > 0; --i) {
      std::swap(order[i], order[std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)))]);
    }
    SelectorEpochStats stats;
    stats.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_sent; start += per_batch) {
      batch.clear();
      for (std::size_t k = start; k < std::min(n_sent, start + per_batch); ++k) {
        for (std::size_t e = offsets[order[k]]; e < offsets[order[k] + 1]; ++e) batch.push_back(examples[e]);
      }
      noise.clear();
      if (joint) {
        for (std::size_t t = 0; t < batch.size(); ++t) noise.push_back({draw_gumbel(rng), draw_gumbel(rng)});
      }
      const auto res = selector_loss(batch, sel, options.tau, options.mode, noise);
      stats.l1 += res.loss.l1 / static_cast<double>(res.loss.batch_tokens);
      stats.l2 += res.loss.l2 / static_cast<double>(res.loss.batch_tokens);
      stats.total += res.loss.total;
      stats.degenerate_batches += res.loss.degenerate ? 1 : 0;
      ++batches;
      adam_step(blocks[0], std::span<const double>(res.grads.w1), states[0]);
      adam_step(blocks[1], std::span<const double>(res.grads.w2), states[1]);
    }
    stats.l1 /= static_cast<double>(batches);
    stats.l2 /= static_cast<double>(batches);
    stats.total /= static_cast<double>(batches);

    std::vector<GateDecision> decisions;
    decisions.reserve(examples.size());
    for (const auto& ex : examples) decisions.push_back(decide(sel, ex.hidden));
    const auto report = selector_metrics(decisions, labels);
    stats.precision = report.precision;
    stats.recall = report.recall;
    stats.retrieving_ratio = report.retrieving_ratio;
    curve.push_back(stats);
  }
  return curve;
}

}  // namespace gknn
