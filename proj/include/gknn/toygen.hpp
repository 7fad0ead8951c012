// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic parallel corpora with a controlled domain shift.
//
// A "language" is a token-level mapping from source content tokens to
// target content tokens, followed by a fixed local reordering: inside every
// odd-numbered pair of positions (2,3), (6,7), ... the two tokens swap.
// Two domains share the mapping for a `shared_fraction` of the source
// vocabulary (the high-frequency band of a Zipf sampler, which includes
// the filler tokens) and disagree on the rest.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "gknn/numerics.hpp"

namespace gknn {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

struct DomainSpec {
  std::string name = "general";
  // Content tokens only; the four reserved ids come on top.
  int source_vocab = 200;
  int target_vocab = 200;
  double shared_fraction = 0.8;
  int min_len = 6;
  int max_len = 16;
  int train = 0;
  int valid = 0;
  int test = 0;
  std::uint64_t seed = 1;
  // Sampler shape.
  double zipf_exponent = 1.1;
  int filler_tokens = 10;
  // Probability that a position draws uniformly from the domain-divergent
  // tokens instead of the Zipf sampler ("domain terms").
  double domain_term_rate = 0.0;
  // Probability that a divergent source token is rendered with the other
  // domain's translation (a second word sense).
  double sense_mix = 0.0;
  // Probability that a target token is replaced by a uniformly drawn
  // content token (translation noise; applies to every split).
  double target_noise = 0.0;
};

struct TextPair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  bool operator==(const TextPair&) const = default;
};

using TextCorpus = std::vector<TextPair>;

struct SplitCorpus {
  TextCorpus train;
  TextCorpus valid;
  TextCorpus test;
};

// Mapping tables indexed by source content index (0-based, Zipf rank order).
struct MappingTables {
  std::vector<int> general;   // source index -> target index in domain A
  std::vector<int> shifted;   // source index -> target index in domain B
  std::vector<bool> divergent;
  std::size_t divergent_count() const;
};

struct DomainPair {
  SplitCorpus general;
  SplitCorpus shifted;
  MappingTables tables;
};

// Number of source tokens whose translation differs between the domains:
// round((1 - shared_fraction) * source_vocab).
std::size_t divergent_token_count(const DomainSpec& shifted);

// Target position -> aligned source position for a length-n sentence
// (returns n for the end-of-sentence step and beyond).
std::size_t aligned_source_position(std::size_t target_pos, std::size_t n);

std::string source_token_name(int index);
std::string target_token_name(int index);

// Generates both domains. Throws SpecError on incompatible specs.
DomainPair generate_domain_pair(const DomainSpec& general, const DomainSpec& shifted);

// Translates one source sentence (token indices) under a mapping table.
std::vector<int> translate_indices(const std::vector<int>& source, const std::vector<int>& mapping);

class Vocabulary {
 public:
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  TokenId id(const std::string& token) const;  // kUnk when unknown
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  void add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Ids 0..3 are <pad> <s> </s> <unk>; the rest by descending frequency, ties
// broken lexicographically.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences);

// One pair per line: source tokens, TAB, target tokens (space-separated).
void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus);
TextCorpus read_corpus(const std::filesystem::path& path);

struct SentencePair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

using Corpus = std::vector<SentencePair>;

Corpus encode_corpus(const TextCorpus& corpus, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab);

// Sum over pairs of (target length + 1): the number of teacher-forced steps.
std::size_t teacher_forced_steps(const Corpus& corpus);

}  // namespace gknn
