// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "gknn/errors.hpp"
#include "gknn/toygen.hpp"

using namespace gknn;
namespace fs = std::filesystem;

namespace {

DomainSpec spec(const std::string& name, double rho, int train, std::uint64_t seed) {
  DomainSpec s;
  s.name = name;
  s.shared_fraction = rho;
  s.train = train;
  s.valid = 50;
  s.test = 50;
  s.seed = seed;
  return s;
}

std::vector<int> indices(const std::vector<std::string>& tokens) {
  std::vector<int> out;
  for (const auto& t : tokens) out.push_back(std::stoi(t.substr(1)));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gknn-unit-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("divergent token count: exhaustive enumeration of the mapping tables") {
  const DomainPair pair = generate_domain_pair(spec("a", 0.8, 100, 1), spec("b", 0.8, 100, 2));
  std::size_t differing = 0;
  for (std::size_t i = 0; i < pair.tables.general.size(); ++i) {
    if (pair.tables.general[i] != pair.tables.shifted[i]) ++differing;
    CHECK((pair.tables.general[i] != pair.tables.shifted[i]) == static_cast<bool>(pair.tables.divergent[i]));
  }
  CHECK(pair.tables.general.size() == 200);
  CHECK(differing == 40);
  CHECK(divergent_token_count(spec("b", 0.8, 0, 2)) == 40);
}

TEST_CASE("both mappings are permutations of the target vocabulary") {
  const DomainPair pair = generate_domain_pair(spec("a", 0.8, 10, 1), spec("b", 0.8, 10, 2));
  for (const auto* table : {&pair.tables.general, &pair.tables.shifted}) {
    std::set<int> images(table->begin(), table->end());
    CHECK(images.size() == 200);
  }
}

TEST_CASE("rho = 1: the shifted references are the general mapping of the same sources") {
  const DomainPair pair = generate_domain_pair(spec("a", 1.0, 100, 1), spec("b", 1.0, 200, 2));
  CHECK(pair.tables.divergent_count() == 0);
  for (const auto& p : pair.shifted.train) {
    const auto expected = translate_indices(indices(p.source), pair.tables.general);
    CHECK(indices(p.target) == expected);
  }
}

TEST_CASE("rho = 0: every content token maps differently") {
  const DomainPair pair = generate_domain_pair(spec("a", 0.0, 10, 1), spec("b", 0.0, 10, 2));
  CHECK(pair.tables.divergent_count() == 200);
  for (std::size_t i = 0; i < 200; ++i) CHECK(pair.tables.general[i] != pair.tables.shifted[i]);
}

TEST_CASE("divergent tokens sit in the low-frequency band") {
  const DomainPair pair = generate_domain_pair(spec("a", 0.8, 10, 1), spec("b", 0.8, 10, 2));
  for (std::size_t i = 0; i < 200; ++i) CHECK(static_cast<bool>(pair.tables.divergent[i]) == (i >= 160));
}

TEST_CASE("incompatible specs are rejected") {
  DomainSpec b = spec("b", 0.8, 10, 2);
  b.source_vocab = 150;
  b.target_vocab = 150;
  CHECK_THROWS_AS(generate_domain_pair(spec("a", 0.8, 10, 1), b), SpecError);
  DomainSpec bad = spec("b", 1.5, 10, 2);
  CHECK_THROWS_AS(generate_domain_pair(spec("a", 0.8, 10, 1), bad), SpecError);
  DomainSpec lens = spec("b", 0.8, 10, 2);
  lens.min_len = 0;
  CHECK_THROWS_AS(generate_domain_pair(spec("a", 0.8, 10, 1), lens), SpecError);
}

TEST_CASE("local reordering swaps positions inside every odd pair") {
  CHECK(aligned_source_position(0, 8) == 0);
  CHECK(aligned_source_position(1, 8) == 1);
  CHECK(aligned_source_position(2, 8) == 3);
  CHECK(aligned_source_position(3, 8) == 2);
  CHECK(aligned_source_position(4, 8) == 4);
  CHECK(aligned_source_position(6, 8) == 7);
  CHECK(aligned_source_position(7, 8) == 6);
  // An incomplete trailing pair stays in place.
  CHECK(aligned_source_position(2, 3) == 2);
  CHECK(aligned_source_position(8, 8) == 8);

  std::vector<int> identity(10);
  for (int i = 0; i < 10; ++i) identity[static_cast<std::size_t>(i)] = i;
  CHECK(translate_indices({0, 1, 2, 3, 4, 5, 6, 7}, identity) == std::vector<int>{0, 1, 3, 2, 4, 5, 7, 6});
}

TEST_CASE("same seed gives byte-identical corpora, another seed does not") {
  const fs::path dir = temp_dir("toygen-determinism");
  auto render = [&](std::uint64_t seed, const std::string& name) {
    const DomainPair pair = generate_domain_pair(spec("a", 0.8, 300, seed), spec("b", 0.8, 300, seed + 1));
    write_corpus(dir / (name + ".a.tsv"), pair.general.train);
    write_corpus(dir / (name + ".b.tsv"), pair.shifted.train);
    return slurp(dir / (name + ".a.tsv")) + slurp(dir / (name + ".b.tsv"));
  };
  CHECK(render(5, "x") == render(5, "y"));
  CHECK(render(5, "x") != render(6, "z"));
}

TEST_CASE("splits are pairwise disjoint") {
  const DomainPair pair = generate_domain_pair(spec("a", 0.8, 2000, 9), spec("b", 0.8, 1000, 10));
  for (const SplitCorpus* c : {&pair.general, &pair.shifted}) {
    std::set<std::vector<std::string>> train, valid;
    for (const auto& p : c->train) train.insert(p.source);
    for (const auto& p : c->valid) {
      CHECK_FALSE(train.contains(p.source));
      valid.insert(p.source);
    }
    for (const auto& p : c->test) {
      CHECK_FALSE(train.contains(p.source));
      CHECK_FALSE(valid.contains(p.source));
    }
  }
}

TEST_CASE("filler tokens cover at least 30% of positions") {
  DomainSpec a = spec("a", 0.8, 3000, 3);
  DomainSpec b = spec("b", 0.8, 3000, 4);
  b.domain_term_rate = 0.2;
  const DomainPair pair = generate_domain_pair(a, b);
  for (const auto* split : {&pair.general.train, &pair.shifted.train}) {
    std::size_t filler = 0, total = 0;
    for (const auto& p : *split) {
      for (int s : indices(p.source)) {
        filler += s < a.filler_tokens ? 1 : 0;
        ++total;
      }
    }
    CHECK(static_cast<double>(filler) / static_cast<double>(total) >= 0.30);
  }
}

TEST_CASE("target noise replaces roughly the requested share of tokens") {
  DomainSpec a = spec("a", 0.8, 2000, 3);
  a.target_noise = 0.1;
  const DomainPair pair = generate_domain_pair(a, spec("b", 0.8, 10, 4));
  std::size_t changed = 0, total = 0;
  for (const auto& p : pair.general.train) {
    const auto clean = translate_indices(indices(p.source), pair.tables.general);
    const auto noisy = indices(p.target);
    for (std::size_t i = 0; i < clean.size(); ++i) changed += clean[i] != noisy[i] ? 1 : 0;
    total += clean.size();
  }
  // A replacement draws the original token with probability 1/200.
  CHECK(static_cast<double>(changed) / static_cast<double>(total) == doctest::Approx(0.1 * 199.0 / 200.0).epsilon(0.1));
}

TEST_CASE("build_vocab: reserved ids, frequency order, lexicographic ties") {
  const Vocabulary v = build_vocab({{"a", "a", "b"}});
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.token(kPad) == "<pad>");
  CHECK(v.token(kBos) == "<s>");
  CHECK(v.token(kEos) == "</s>");
  CHECK(v.token(kUnk) == "<unk>");

  CHECK(build_vocab({}).size() == 4);

  const Vocabulary tie = build_vocab({{"b", "a"}});
  CHECK(tie.id("a") == 4);
  CHECK(tie.id("b") == 5);
  CHECK(tie.id("zzz") == kUnk);
  CHECK(tie.decode(tie.encode({"b", "a"})) == std::vector<std::string>{"b", "a"});
}

TEST_CASE("corpus files round-trip and malformed lines report their line number") {
  const fs::path dir = temp_dir("toygen-io");
  const TextCorpus corpus{{{"s1", "s2"}, {"t1", "t2"}}, {{"s3"}, {"t3"}}};
  write_corpus(dir / "c.tsv", corpus);
  CHECK(slurp(dir / "c.tsv") == "s1 s2\tt1 t2\ns3\tt3\n");
  CHECK(read_corpus(dir / "c.tsv") == corpus);

  std::ofstream(dir / "bad.tsv") << "s1\tt1\ns2 t2\n";
  try {
    read_corpus(dir / "bad.tsv");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(read_corpus(dir / "missing.tsv"), InputError);
}

TEST_CASE("teacher-forced step count sums target length plus one") {
  Corpus corpus;
  const std::size_t lengths[] = {1, 2, 3, 4, 5, 6, 7, 8, 6, 5};  // sums to 47
  for (std::size_t m : lengths) corpus.push_back({{4}, std::vector<TokenId>(m, 5)});
  CHECK(teacher_forced_steps(corpus) == 57);
}
