// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// A small trained world shared by the unit tests: two domains, a frozen
// model trained on the general one and a datastore over shifted train.

#pragma once

#include <filesystem>
#include <string>

#include "gknn/datastore.hpp"
#include "gknn/model.hpp"
#include "gknn/toygen.hpp"

namespace gknn::testing {

struct World {
  DomainPair pair;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  Corpus general_train, general_test;
  Corpus shifted_train, shifted_valid, shifted_test;
  ToyModel model;
  Datastore datastore;
};

inline DomainSpec small_spec(const std::string& name, double rho, int train, int valid, int test,
                             std::uint64_t seed) {
  DomainSpec s;
  s.name = name;
  s.shared_fraction = rho;
  s.train = train;
  s.valid = valid;
  s.test = test;
  s.seed = seed;
  return s;
}

inline World make_world(const DomainSpec& general, const DomainSpec& shifted, int epochs) {
  World w;
  w.pair = generate_domain_pair(general, shifted);
  std::vector<std::vector<std::string>> src, tgt;
  for (const TextCorpus* c : {&w.pair.general.train, &w.pair.shifted.train}) {
    for (const auto& p : *c) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
  }
  w.source_vocab = build_vocab(src);
  w.target_vocab = build_vocab(tgt);
  auto enc = [&](const TextCorpus& c) { return encode_corpus(c, w.source_vocab, w.target_vocab); };
  w.general_train = enc(w.pair.general.train);
  w.general_test = enc(w.pair.general.test);
  w.shifted_train = enc(w.pair.shifted.train);
  w.shifted_valid = enc(w.pair.shifted.valid);
  w.shifted_test = enc(w.pair.shifted.test);
  w.model = ToyModel(ModelDims{w.source_vocab.size(), w.target_vocab.size(), 32, 64}, 101);
  ModelTrainOptions opts;
  opts.epochs = epochs;
  opts.seed = 5;
  train_model(w.model, w.general_train, opts);
  w.datastore = build_datastore(w.model, w.shifted_train, "shifted");
  return w;
}

// Built once per test binary.
inline const World& small_world() {
  static const World world = [] {
    DomainSpec shifted = small_spec("shifted", 0.8, 1500, 200, 150, 22);
    shifted.domain_term_rate = 0.2;
    return make_world(small_spec("general", 0.8, 3000, 50, 200, 21), shifted, 12);
  }();
  return world;
}

// Both domains share one mapping.
inline const World& copy_world() {
  static const World world = make_world(small_spec("general", 1.0, 3000, 10, 200, 31),
                                        small_spec("shifted", 1.0, 200, 10, 10, 32), 12);
  return world;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gknn-unit-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gknn::testing
