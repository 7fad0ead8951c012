// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gknn/errors.hpp"

namespace gknn {

struct ToyModel::Activations {
  Vector pre1;
  Vector a1;
  Vector h;
  Vector logits;
  Vector probs;
};

namespace {

constexpr double kProbFloor = 1e-30;

void init_normal(std::span<float> block, Rng& rng, float stddev) {
  for (float& v : block) v = normal(rng, stddev);
}

TokenId prefix_at(std::span<const TokenId> prefix, std::size_t back) {
  // back = 1 -> last token; missing history is padded with BOS.
  return prefix.size() >= back ? prefix[prefix.size() - back] : kBos;
}

}  // namespace

ToyModel::ToyModel(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.source_vocab <= kNumSpecials || dims.target_vocab <= kNumSpecials || dims.embed == 0 ||
      dims.hidden == 0) {
    throw ParameterError("ToyModel: degenerate dimensions");
  }
  const std::size_t e = dims.embed;
  const std::size_t d = dims.hidden;
  Rng rng(seed);
  source_embed_ = Matrix(dims.source_vocab, e);
  target_embed_ = Matrix(dims.target_vocab, e);
  w1_ = Matrix(d, 4 * e);
  b1_ = Vector(d, 0.0f);
  w2_ = Matrix(d, d);
  b2_ = Vector(d, 0.0f);
  out_ = Matrix(dims.target_vocab, d);
  out_bias_ = Vector(dims.target_vocab, 0.0f);
  init_normal(source_embed_.flat(), rng, 1.0f);
  init_normal(target_embed_.flat(), rng, 1.0f);
  init_normal(w1_.flat(), rng, std::sqrt(2.0f / static_cast<float>(4 * e)));
  init_normal(w2_.flat(), rng, std::sqrt(1.0f / static_cast<float>(d)));
  init_normal(out_.flat(), rng, std::sqrt(1.0f / static_cast<float>(d)));
}

void ToyModel::check_ids(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
  if (source.empty()) throw InputError("forward: empty source");
  for (TokenId t : source) {
    if (t >= dims_.source_vocab) throw InputError("forward: source id " + std::to_string(t) + " out of vocabulary");
  }
  for (TokenId t : prefix) {
    if (t >= dims_.target_vocab) throw InputError("forward: target id " + std::to_string(t) + " out of vocabulary");
  }
}

void ToyModel::context(std::span<const TokenId> source, std::span<const float> source_mean,
                       std::size_t position, std::span<const TokenId> prefix,
                       std::span<float> out) const {
  const std::size_t e = dims_.embed;
  std::copy(source_mean.begin(), source_mean.end(), out.begin());
  const std::size_t aligned = aligned_source_position(position, source.size());
  const TokenId src = aligned < source.size() ? source[aligned] : kEos;
  auto row = source_embed_.row(src);
  std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(e));
  auto prev1 = target_embed_.row(prefix_at(prefix, 1));
  std::copy(prev1.begin(), prev1.end(), out.begin() + static_cast<std::ptrdiff_t>(2 * e));
  auto prev2 = target_embed_.row(prefix_at(prefix, 2));
  std::copy(prev2.begin(), prev2.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * e));
}

void ToyModel::run(std::span<const float> ctx, Activations& act) const {
  const std::size_t d = dims_.hidden;
  act.pre1.resize(d);
  act.a1.resize(d);
  act.h.resize(d);
  act.logits.resize(dims_.target_vocab);
  matvec(w1_, ctx, b1_, act.pre1);
  for (std::size_t i = 0; i < d; ++i) act.a1[i] = std::max(0.0f, act.pre1[i]);
  matvec(w2_, act.a1, b2_, act.h);
  matvec(out_, act.h, out_bias_, act.logits);
  act.probs = softmax(act.logits);
}

ModelOutput ToyModel::forward(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
  check_ids(source, prefix);
  if (prefix.empty() || prefix.front() != kBos) throw InputError("forward: prefix must start with BOS");
  const std::size_t e = dims_.embed;
  Vector mean(e, 0.0f);
  for (TokenId t : source) axpy(1.0f, source_embed_.row(t), mean);
  for (float& v : mean) v /= static_cast<float>(source.size());
  Vector ctx(4 * e);
  context(source, mean, prefix.size() - 1, prefix, ctx);
  Activations act;
  run(ctx, act);
  return {std::move(act.h), std::move(act.probs)};
}

std::vector<std::span<const float>> ToyModel::parameters() const {
  return {source_embed_.flat(), target_embed_.flat(), w1_.flat(), b1_,
          w2_.flat(),          b2_,                  out_.flat(), out_bias_};
}

std::vector<std::span<float>> ToyModel::mutable_parameters() {
  if (frozen_) throw ContractError("ToyModel is frozen; parameters are read-only");
  return {source_embed_.flat(), target_embed_.flat(), w1_.flat(), b1_,
          w2_.flat(),          b2_,                  out_.flat(), out_bias_};
}

double ToyModel::loss_and_gradient(std::span<const SentencePair> batch,
                                   std::vector<std::vector<float>>* grads) const {
  const std::size_t e = dims_.embed;
  const std::size_t d = dims_.hidden;
  if (grads) {
    const auto blocks = parameters();
    grads->resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) (*grads)[b].assign(blocks[b].size(), 0.0f);
  }
  // Gradient views, same order as parameters().
  auto grad_matrix_row = [&](std::size_t block, std::size_t row, std::size_t cols) {
    return std::span<float>((*grads)[block].data() + row * cols, cols);
  };

  double total_loss = 0.0;
  std::size_t steps = 0;
  Vector mean(e);
  Vector ctx(4 * e);
  Vector dlogits(dims_.target_vocab);
  Vector dh(d), dpre1(d), dctx(4 * e);
  std::vector<TokenId> prefix;
  Activations act;

  for (const SentencePair& pair : batch) {
    check_ids(pair.source, pair.target);
    std::fill(mean.begin(), mean.end(), 0.0f);
    for (TokenId t : pair.source) axpy(1.0f, source_embed_.row(t), mean);
    const float inv_n = 1.0f / static_cast<float>(pair.source.size());
    for (float& v : mean) v *= inv_n;

    prefix.assign(1, kBos);
    for (std::size_t i = 0; i <= pair.target.size(); ++i) {
      const TokenId gold = i < pair.target.size() ? pair.target[i] : kEos;
      context(pair.source, mean, i, prefix, ctx);
      run(ctx, act);
      total_loss -= std::log(std::max(static_cast<double>(act.probs[gold]), kProbFloor));
      ++steps;

      if (grads) {
        for (std::size_t r = 0; r < dims_.target_vocab; ++r) dlogits[r] = act.probs[r];
        dlogits[gold] -= 1.0f;
        // Output projection.
        std::fill(dh.begin(), dh.end(), 0.0f);
        for (std::size_t r = 0; r < dims_.target_vocab; ++r) {
          if (dlogits[r] == 0.0f) continue;
          axpy(dlogits[r], act.h, grad_matrix_row(6, r, d));
          (*grads)[7][r] += dlogits[r];
          axpy(dlogits[r], out_.row(r), dh);
        }
        // Second layer (linear).
        std::fill(dpre1.begin(), dpre1.end(), 0.0f);
        for (std::size_t r = 0; r < d; ++r) {
          axpy(dh[r], act.a1, grad_matrix_row(4, r, d));
          (*grads)[5][r] += dh[r];
          axpy(dh[r], w2_.row(r), dpre1);
        }
        for (std::size_t r = 0; r < d; ++r) {
          if (act.pre1[r] <= 0.0f) dpre1[r] = 0.0f;
        }
        // First layer.
        std::fill(dctx.begin(), dctx.end(), 0.0f);
        for (std::size_t r = 0; r < d; ++r) {
          if (dpre1[r] == 0.0f) continue;
          axpy(dpre1[r], ctx, grad_matrix_row(2, r, 4 * e));
          (*grads)[3][r] += dpre1[r];
          axpy(dpre1[r], w1_.row(r), dctx);
        }
        // Embeddings.
        std::span<const float> dmean(dctx.data(), e);
        for (TokenId t : pair.source) axpy(inv_n, dmean, grad_matrix_row(0, t, e));
        const std::size_t aligned = aligned_source_position(i, pair.source.size());
        const TokenId src = aligned < pair.source.size() ? pair.source[aligned] : kEos;
        axpy(1.0f, std::span<const float>(dctx.data() + e, e), grad_matrix_row(0, src, e));
        axpy(1.0f, std::span<const float>(dctx.data() + 2 * e, e),
             grad_matrix_row(1, prefix_at(prefix, 1), e));
        axpy(1.0f, std::span<const float>(dctx.data() + 3 * e, e),
             grad_matrix_row(1, prefix_at(prefix, 2), e));
      }
      if (i < pair.target.size()) prefix.push_back(pair.target[i]);
    }
  }
  if (steps == 0) return 0.0;
  if (grads) {
    const float scale = 1.0f / static_cast<float>(steps);
    for (auto& g : *grads) {
      for (float& v : g) v *= scale;
    }
  }
  return total_loss / static_cast<double>(steps);
}

std::uint64_t ToyModel::checksum() const {
  const std::uint64_t header[4] = {dims_.source_vocab, dims_.target_vocab, dims_.embed, dims_.hidden};
  std::uint64_t h = fnv1a(std::as_bytes(std::span<const std::uint64_t>(header)));
  for (auto block : parameters()) h = fnv1a(std::as_bytes(block), h);
  return h;
}

Json ToyModel::to_json() const {
  return Json{{"kind", "toy_model"},
              {"dims",
               {{"source_vocab", dims_.source_vocab},
                {"target_vocab", dims_.target_vocab},
                {"embed", dims_.embed},
                {"hidden", dims_.hidden}}},
              {"frozen", frozen_},
              {"checksum", checksum()},
              {"params",
               {{"source_embedding", matrix_to_json(source_embed_)},
                {"target_embedding", matrix_to_json(target_embed_)},
                {"w1", matrix_to_json(w1_)},
                {"b1", vector_to_json(b1_)},
                {"w2", matrix_to_json(w2_)},
                {"b2", vector_to_json(b2_)},
                {"output", matrix_to_json(out_)},
                {"output_bias", vector_to_json(out_bias_)}}}};
}

ToyModel ToyModel::from_json(const Json& j) {
  try {
    if (j.at("kind") != "toy_model") throw FormatError("model checkpoint: wrong kind");
    ToyModel m;
    const auto& dims = j.at("dims");
    m.dims_ = {dims.at("source_vocab").get<std::size_t>(), dims.at("target_vocab").get<std::size_t>(),
               dims.at("embed").get<std::size_t>(), dims.at("hidden").get<std::size_t>()};
    const auto& p = j.at("params");
    m.source_embed_ = matrix_from_json(p.at("source_embedding"), "source_embedding");
    m.target_embed_ = matrix_from_json(p.at("target_embedding"), "target_embedding");
    m.w1_ = matrix_from_json(p.at("w1"), "w1");
    m.b1_ = vector_from_json(p.at("b1"), "b1", m.dims_.hidden);
    m.w2_ = matrix_from_json(p.at("w2"), "w2");
    m.b2_ = vector_from_json(p.at("b2"), "b2", m.dims_.hidden);
    m.out_ = matrix_from_json(p.at("output"), "output");
    m.out_bias_ = vector_from_json(p.at("output_bias"), "output_bias", m.dims_.target_vocab);
    const std::size_t e = m.dims_.embed;
    const std::size_t d = m.dims_.hidden;
    if (m.source_embed_.rows() != m.dims_.source_vocab || m.source_embed_.cols() != e ||
        m.target_embed_.rows() != m.dims_.target_vocab || m.target_embed_.cols() != e ||
        m.w1_.rows() != d || m.w1_.cols() != 4 * e || m.w2_.rows() != d || m.w2_.cols() != d ||
        m.out_.rows() != m.dims_.target_vocab || m.out_.cols() != d) {
      throw FormatError("model checkpoint: parameter shapes disagree with dims");
    }
    m.frozen_ = j.at("frozen").get<bool>();
    if (j.contains("checksum") && j.at("checksum").get<std::uint64_t>() != m.checksum()) {
      throw FormatError("model checkpoint: checksum mismatch");
    }
    return m;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
}

std::vector<double> train_model(ToyModel& model, const Corpus& corpus, const ModelTrainOptions& options) {
  if (model.frozen()) throw ContractError("train_model: model is frozen");
  if (corpus.empty()) throw TrainingError("train_model: empty corpus");
  if (options.batch_sentences < 1) throw ParameterError("train_model: batch_sentences must be >= 1");

  auto blocks = model.mutable_parameters();
  std::vector<AdamState> states;
  for (auto b : blocks) states.emplace_back(b.size(), AdamOptions{options.lr});

  Rng rng(options.seed);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> curve;
  std::vector<std::vector<float>> grads;
  Corpus batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t step_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_sentences)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_sentences));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(corpus[order[k]]);
      const double loss = model.loss_and_gradient(batch, &grads);
      const std::size_t steps = teacher_forced_steps(batch);
      loss_sum += loss * static_cast<double>(steps);
      step_sum += steps;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        adam_step(blocks[b], std::span<const float>(grads[b]), states[b]);
      }
    }
    curve.push_back(loss_sum / static_cast<double>(step_sum));
  }
  model.freeze();
  return curve;
}

std::vector<TeacherForcedStep> teacher_forced_pass(const ToyModel& model, const SentencePair& pair) {
  if (!model.frozen()) throw ContractError("teacher_forced_pass: model must be frozen");
  std::vector<TeacherForcedStep> steps;
  steps.reserve(pair.target.size() + 1);
  std::vector<TokenId> prefix{kBos};
  for (std::size_t i = 0; i <= pair.target.size(); ++i) {
    auto out = model.forward(pair.source, prefix);
    const TokenId gold = i < pair.target.size() ? pair.target[i] : kEos;
    steps.push_back({std::move(out.hidden), std::move(out.probs), gold});
    if (i < pair.target.size()) prefix.push_back(pair.target[i]);
  }
  return steps;
}

double token_accuracy(const ToyModel& model, const Corpus& corpus) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& pair : corpus) {
    for (const auto& step : teacher_forced_pass(model, pair)) {
      hits += argmax(step.probs) == step.gold ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace gknn
