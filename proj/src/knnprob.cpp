// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/knnprob.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gknn/errors.hpp"
#include "gknn/model.hpp"

namespace gknn {
namespace {

constexpr double kDistancePad = 1e9;
constexpr double kProbFloor = 1e-30;

struct MetaKExample {
  std::vector<double> features;
  std::vector<double> slot_gold;  // gold probability under each of the K+1 slots
};

std::vector<MetaKExample> meta_k_examples(const MetaKNet& net, const ToyModel& model, const Datastore& ds,
                                          const Corpus& corpus, const Hyperparams& hyper,
                                          std::vector<std::size_t>* sentence_offsets) {
  std::vector<MetaKExample> out;
  const std::size_t vocab = model.dims().target_vocab;
  for (const auto& pair : corpus) {
    if (sentence_offsets) sentence_offsets->push_back(out.size());
    for (const auto& step : teacher_forced_pass(model, pair)) {
      const auto nb = knn_search(ds, step.hidden, net.k_max());
      MetaKExample ex;
      ex.features = net.features(nb);
      ex.slot_gold.push_back(step.probs[step.gold]);
      if (nb.empty()) {
        // No retrieval possible: every kNN slot falls back to the model.
        ex.slot_gold.resize(net.k_max() + 1, step.probs[step.gold]);
      } else {
        for (const auto& p : prefix_knn_distributions(nb, hyper.temperature, vocab, net.k_max())) {
          ex.slot_gold.push_back(p[step.gold]);
        }
      }
      out.push_back(std::move(ex));
    }
  }
  if (sentence_offsets) sentence_offsets->push_back(out.size());
  return out;
}

}  // namespace

void Hyperparams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (k < 1 || k_max_adaptive < 1) throw ParameterError("K must be >= 1");
}

Hyperparams domain_defaults(std::string_view domain) {
  Hyperparams h;
  if (domain == "it") {
    h.lambda = 0.7;
    h.temperature = 10.0;
  } else if (domain == "koran") {
    h.lambda = 0.8;
    h.temperature = 100.0;
  } else if (domain == "law" || domain == "medical") {
    h.lambda = 0.8;
    h.temperature = 10.0;
  } else {
    throw ParameterError("unknown domain profile '" + std::string(domain) + "'");
  }
  return h;
}

Vector knn_distribution(const NeighborSet& neighbors, double temperature, std::size_t vocab) {
  if (neighbors.empty()) throw ParameterError("knn_distribution: empty neighbour set");
  if (!(temperature > 0.0)) throw ParameterError("knn_distribution: temperature must be positive");
  std::vector<double> logits(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    logits[j] = -static_cast<double>(neighbors[j].distance) / temperature;
  }
  const auto w = softmax(std::span<const double>(logits));
  std::vector<double> acc(vocab, 0.0);
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    if (neighbors[j].value >= vocab) throw DimensionError("knn_distribution: value outside vocabulary");
    acc[neighbors[j].value] += w[j];
  }
  return Vector(acc.begin(), acc.end());
}

Vector interpolate(std::span<const float> p_mt, std::span<const float> p_knn, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("interpolate: lambda must lie in [0, 1]");
  if (p_mt.size() != p_knn.size()) throw DimensionError("interpolate: distributions differ in size");
  Vector out(p_mt.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(lambda * p_knn[i] + (1.0 - lambda) * p_mt[i]);
  }
  return out;
}

std::vector<Vector> prefix_knn_distributions(const NeighborSet& neighbors, double temperature,
                                             std::size_t vocab, std::size_t k_max) {
  std::vector<Vector> out;
  out.reserve(k_max);
  for (std::size_t j = 1; j <= k_max; ++j) {
    const std::size_t take = std::min(j, neighbors.size());
    NeighborSet prefix(neighbors.begin(), neighbors.begin() + static_cast<std::ptrdiff_t>(take));
    out.push_back(knn_distribution(prefix, temperature, vocab));
  }
  return out;
}

MetaKNet::MetaKNet(std::size_t k_max, std::size_t hidden, std::uint64_t seed)
    : k_max_(k_max), w1_(hidden, 2 * k_max), b1_(hidden, 0.0f), w2_(k_max + 1, hidden), b2_(k_max + 1, 0.0f) {
  if (k_max < 1 || hidden < 1) throw ParameterError("MetaKNet: k_max and hidden must be >= 1");
  Rng rng(seed);
  for (float& v : w1_.flat()) v = normal(rng, std::sqrt(2.0f / static_cast<float>(2 * k_max)));
  for (float& v : w2_.flat()) v = normal(rng, std::sqrt(1.0f / static_cast<float>(hidden)));
}

std::vector<double> MetaKNet::features(const NeighborSet& neighbors) const {
  std::vector<double> f(2 * k_max_, 0.0);
  for (std::size_t j = 0; j < k_max_; ++j) {
    if (j < neighbors.size()) {
      f[j] = std::log1p(static_cast<double>(neighbors[j].distance));
      std::size_t same = 0;
      for (std::size_t i = 0; i <= j; ++i) same += neighbors[i].value == neighbors[j].value ? 1 : 0;
      f[k_max_ + j] = static_cast<double>(same);
    } else {
      f[j] = std::log1p(kDistancePad);
    }
  }
  return f;
}

std::vector<double> MetaKNet::hidden_pre(std::span<const double> features) const {
  std::vector<double> pre(w1_.rows());
  for (std::size_t r = 0; r < w1_.rows(); ++r) {
    double s = b1_[r];
    for (std::size_t c = 0; c < w1_.cols(); ++c) s += static_cast<double>(w1_(r, c)) * features[c];
    pre[r] = s;
  }
  return pre;
}

std::vector<double> MetaKNet::weights(const NeighborSet& neighbors) const {
  const auto f = features(neighbors);
  const auto pre = hidden_pre(f);
  std::vector<double> z(w2_.rows());
  for (std::size_t r = 0; r < w2_.rows(); ++r) {
    double s = b2_[r];
    for (std::size_t c = 0; c < w2_.cols(); ++c) s += static_cast<double>(w2_(r, c)) * std::max(0.0, pre[c]);
    z[r] = s;
  }
  return softmax(std::span<const double>(z));
}

std::vector<std::span<float>> MetaKNet::mutable_parameters() { return {w1_.flat(), b1_, w2_.flat(), b2_}; }
std::vector<std::span<const float>> MetaKNet::parameters() const { return {w1_.flat(), b1_, w2_.flat(), b2_}; }

double MetaKNet::nll_and_gradient(std::span<const double> features, std::span<const double> slot_gold,
                                  std::vector<std::vector<double>>* grads) const {
  const std::size_t hidden = w1_.rows();
  const std::size_t slots = w2_.rows();
  const auto pre = hidden_pre(features);
  std::vector<double> a1(hidden);
  for (std::size_t i = 0; i < hidden; ++i) a1[i] = std::max(0.0, pre[i]);
  std::vector<double> z(slots);
  for (std::size_t r = 0; r < slots; ++r) {
    double s = b2_[r];
    for (std::size_t c = 0; c < hidden; ++c) s += static_cast<double>(w2_(r, c)) * a1[c];
    z[r] = s;
  }
  const auto w = softmax(std::span<const double>(z));
  double p = 0.0;
  for (std::size_t s = 0; s < slots; ++s) p += w[s] * slot_gold[s];
  const double loss = -std::log(std::max(p, kProbFloor));
  if (!grads) return loss;

  // dL/dw_s = -a_s / p ; softmax backward.
  std::vector<double> dw(slots);
  double inner = 0.0;
  for (std::size_t s = 0; s < slots; ++s) {
    dw[s] = -slot_gold[s] / std::max(p, kProbFloor);
    inner += w[s] * dw[s];
  }
  std::vector<double> dz(slots);
  for (std::size_t s = 0; s < slots; ++s) dz[s] = w[s] * (dw[s] - inner);

  auto& g_w1 = (*grads)[0];
  auto& g_b1 = (*grads)[1];
  auto& g_w2 = (*grads)[2];
  auto& g_b2 = (*grads)[3];
  std::vector<double> da1(hidden, 0.0);
  for (std::size_t r = 0; r < slots; ++r) {
    g_b2[r] += dz[r];
    for (std::size_t c = 0; c < hidden; ++c) {
      g_w2[r * hidden + c] += dz[r] * a1[c];
      da1[c] += dz[r] * static_cast<double>(w2_(r, c));
    }
  }
  const std::size_t in = w1_.cols();
  for (std::size_t r = 0; r < hidden; ++r) {
    if (pre[r] <= 0.0) continue;
    g_b1[r] += da1[r];
    for (std::size_t c = 0; c < in; ++c) g_w1[r * in + c] += da1[r] * features[c];
  }
  return loss;
}

Json MetaKNet::to_json() const {
  return Json{{"kind", "meta_k"},
              {"k_max", k_max_},
              {"hidden", w1_.rows()},
              {"params",
               {{"w1", matrix_to_json(w1_)},
                {"b1", vector_to_json(b1_)},
                {"w2", matrix_to_json(w2_)},
                {"b2", vector_to_json(b2_)}}}};
}

MetaKNet MetaKNet::from_json(const Json& j) {
  try {
    if (j.at("kind") != "meta_k") throw FormatError("meta-k checkpoint: wrong kind");
    MetaKNet net;
    net.k_max_ = j.at("k_max").get<std::size_t>();
    const auto hidden = j.at("hidden").get<std::size_t>();
    const auto& p = j.at("params");
    net.w1_ = matrix_from_json(p.at("w1"), "w1");
    net.b1_ = vector_from_json(p.at("b1"), "b1", hidden);
    net.w2_ = matrix_from_json(p.at("w2"), "w2");
    net.b2_ = vector_from_json(p.at("b2"), "b2", net.k_max_ + 1);
    if (net.w1_.rows() != hidden || net.w1_.cols() != 2 * net.k_max_ || net.w2_.rows() != net.k_max_ + 1 ||
        net.w2_.cols() != hidden) {
      throw FormatError("meta-k checkpoint: parameter shapes disagree");
    }
    return net;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("meta-k checkpoint: ") + e.what());
  }
}

Vector meta_k_combine(const MetaKNet& net, std::span<const float> p_mt, const NeighborSet& neighbors,
                      double temperature, std::size_t vocab) {
  if (p_mt.size() != vocab) throw DimensionError("meta_k_combine: p_mt size differs from vocabulary");
  if (neighbors.empty()) return Vector(p_mt.begin(), p_mt.end());
  if (neighbors.size() > net.k_max()) throw ParameterError("meta_k_combine: more neighbours than K_max");
  const auto w = net.weights(neighbors);
  const auto slots = prefix_knn_distributions(neighbors, temperature, vocab, net.k_max());
  std::vector<double> acc(vocab);
  for (std::size_t i = 0; i < vocab; ++i) acc[i] = w[0] * p_mt[i];
  for (std::size_t j = 0; j < slots.size(); ++j) {
    for (std::size_t i = 0; i < vocab; ++i) acc[i] += w[j + 1] * slots[j][i];
  }
  return Vector(acc.begin(), acc.end());
}

double meta_k_nll(const MetaKNet& net, const ToyModel& model, const Datastore& ds, const Corpus& corpus,
                  const Hyperparams& hyper) {
  const auto examples = meta_k_examples(net, model, ds, corpus, hyper, nullptr);
  if (examples.empty()) throw TrainingError("meta_k_nll: empty corpus");
  double total = 0.0;
  for (const auto& ex : examples) total += net.nll_and_gradient(ex.features, ex.slot_gold, nullptr);
  return total / static_cast<double>(examples.size());
}

std::vector<double> train_meta_k(MetaKNet& net, const Corpus& valid, const ToyModel& model,
                                 const Datastore& ds, const Hyperparams& hyper,
                                 const MetaKTrainOptions& options) {
  if (!model.frozen()) throw ContractError("train_meta_k: model must be frozen");
  if (valid.empty()) throw TrainingError("train_meta_k: empty corpus");
  hyper.validate();
  std::vector<std::size_t> offsets;
  const auto examples = meta_k_examples(net, model, ds, valid, hyper, &offsets);

  auto blocks = net.mutable_parameters();
  std::vector<AdamState> states;
  for (auto b : blocks) states.emplace_back(b.size(), AdamOptions{options.lr});
  std::vector<std::vector<double>> grads(blocks.size());

  Rng rng(options.seed);
  std::vector<std::size_t> order(valid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(std::max(1, options.batch_sentences));

  std::vector<double> curve;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)))]);
    }
    double loss_sum = 0.0;
    std::size_t count_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      for (std::size_t b = 0; b < blocks.size(); ++b) grads[b].assign(blocks[b].size(), 0.0);
      std::size_t count = 0;
      for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) {
        for (std::size_t e = offsets[order[k]]; e < offsets[order[k] + 1]; ++e) {
          loss_sum += net.nll_and_gradient(examples[e].features, examples[e].slot_gold, &grads);
          ++count;
        }
      }
      count_sum += count;
      for (auto& g : grads) {
        for (double& v : g) v /= static_cast<double>(std::max<std::size_t>(count, 1));
      }
      for (std::size_t b = 0; b < blocks.size(); ++b) adam_step(blocks[b], std::span<const double>(grads[b]), states[b]);
    }
    curve.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(count_sum, 1)));
  }
  return curve;
}

}  // namespace gknn
