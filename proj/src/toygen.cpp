// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gknn/errors.hpp"

namespace gknn {
namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

void validate(const DomainSpec& s) {
  if (s.source_vocab < 1 || s.target_vocab < 1) throw SpecError(s.name + ": vocab sizes must be >= 1");
  if (!(s.shared_fraction >= 0.0 && s.shared_fraction <= 1.0)) {
    throw SpecError(s.name + ": shared_fraction must lie in [0, 1]");
  }
  if (s.min_len < 1 || s.max_len < s.min_len) throw SpecError(s.name + ": need 1 <= min_len <= max_len");
  if (s.train < 0 || s.valid < 0 || s.test < 0) throw SpecError(s.name + ": split sizes must be >= 0");
  if (s.filler_tokens < 0 || s.filler_tokens > s.source_vocab) {
    throw SpecError(s.name + ": filler_tokens out of range");
  }
  if (!(s.domain_term_rate >= 0.0 && s.domain_term_rate <= 1.0)) {
    throw SpecError(s.name + ": domain_term_rate must lie in [0, 1]");
  }
  if (!(s.sense_mix >= 0.0 && s.sense_mix <= 1.0)) {
    throw SpecError(s.name + ": sense_mix must lie in [0, 1]");
  }
  if (!(s.target_noise >= 0.0 && s.target_noise <= 1.0)) {
    throw SpecError(s.name + ": target_noise must lie in [0, 1]");
  }
}

class ZipfSampler {
 public:
  ZipfSampler(int n, double exponent) : cdf_(static_cast<std::size_t>(n)) {
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[static_cast<std::size_t>(r)] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  int draw(Rng& rng) const {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                     static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

 private:
  std::vector<double> cdf_;
};

struct Renderer {
  const std::vector<int>& mapping;
  const std::vector<int>& other;
  const std::vector<bool>& divergent;
  double sense_mix;
  double noise;
  int target_vocab;
};

TextPair render(const std::vector<int>& source, const Renderer& r, Rng& rng) {
  TextPair pair;
  for (int s : source) pair.source.push_back(source_token_name(s));
  const std::vector<int> own = translate_indices(source, r.mapping);
  for (std::size_t i = 0; i < own.size(); ++i) {
    int t = own[i];
    const auto s = static_cast<std::size_t>(source[aligned_source_position(i, source.size())]);
    if (r.sense_mix > 0.0 && r.divergent[s] && uniform01(rng) < r.sense_mix) {
      t = r.other[s];
    }
    if (r.noise > 0.0 && uniform01(rng) < r.noise) {
      t = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(r.target_vocab)));
    }
    pair.target.push_back(target_token_name(t));
  }
  return pair;
}

SplitCorpus generate_domain(const DomainSpec& spec, const std::vector<int>& mapping, const std::vector<int>& other,
                            const std::vector<bool>& divergent, const std::vector<int>& divergent_ids) {
  const Renderer renderer{mapping, other, divergent, spec.sense_mix, spec.target_noise, spec.target_vocab};
  Rng rng(spec.seed);
  const ZipfSampler zipf(spec.source_vocab, spec.zipf_exponent);
  std::set<std::vector<int>> seen;

  auto sample_sentence = [&]() {
    std::vector<int> sentence;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const auto len = static_cast<std::size_t>(spec.min_len) +
                       uniform_index(rng, static_cast<std::size_t>(spec.max_len - spec.min_len + 1));
      sentence.clear();
      for (std::size_t i = 0; i < len; ++i) {
        if (!divergent_ids.empty() && uniform01(rng) < spec.domain_term_rate) {
          sentence.push_back(divergent_ids[uniform_index(rng, divergent_ids.size())]);
        } else {
          sentence.push_back(zipf.draw(rng));
        }
      }
      if (seen.insert(sentence).second) return sentence;
    }
    throw SpecError(spec.name + ": could not draw enough distinct sentences; widen lengths or vocab");
  };

  SplitCorpus out;
  auto fill = [&](TextCorpus& split, int count) {
    split.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      split.push_back(render(sample_sentence(), renderer, rng));
    }
  };
  fill(out.train, spec.train);
  fill(out.valid, spec.valid);
  fill(out.test, spec.test);
  return out;
}

}  // namespace

std::size_t MappingTables::divergent_count() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), true));
}

std::size_t divergent_token_count(const DomainSpec& shifted) {
  return static_cast<std::size_t>(
      std::llround((1.0 - shifted.shared_fraction) * static_cast<double>(shifted.source_vocab)));
}

std::size_t aligned_source_position(std::size_t target_pos, std::size_t n) {
  if (target_pos >= n) return n;
  const std::size_t pair = target_pos / 2;
  if (pair % 2 == 1 && 2 * pair + 1 < n) return target_pos ^ 1u;
  return target_pos;
}

std::string source_token_name(int index) { return "s" + std::to_string(index); }
std::string target_token_name(int index) { return "t" + std::to_string(index); }

std::vector<int> translate_indices(const std::vector<int>& source, const std::vector<int>& mapping) {
  std::vector<int> target(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    target[i] = mapping.at(static_cast<std::size_t>(source[aligned_source_position(i, source.size())]));
  }
  return target;
}

DomainPair generate_domain_pair(const DomainSpec& general, const DomainSpec& shifted) {
  validate(general);
  validate(shifted);
  if (general.source_vocab != shifted.source_vocab || general.target_vocab != shifted.target_vocab) {
    throw SpecError("domain specs must share vocab sizes");
  }
  if (general.source_vocab != general.target_vocab) {
    throw SpecError("token-level mapping needs source_vocab == target_vocab");
  }
  const auto v = static_cast<std::size_t>(general.source_vocab);

  DomainPair pair;
  MappingTables& t = pair.tables;
  t.general.resize(v);
  for (std::size_t i = 0; i < v; ++i) t.general[i] = static_cast<int>(i);
  Rng map_rng(general.seed ^ 0x9e3779b97f4a7c15ull);
  for (std::size_t i = v - 1; i > 0; --i) std::swap(t.general[i], t.general[uniform_index(map_rng, i + 1)]);

  // The divergent tokens are the low-frequency end of the Zipf ranking.
  const std::size_t n_div = divergent_token_count(shifted);
  t.divergent.assign(v, false);
  std::vector<int> divergent_ids;
  for (std::size_t i = v - n_div; i < v; ++i) {
    t.divergent[i] = true;
    divergent_ids.push_back(static_cast<int>(i));
  }
  t.shifted = t.general;
  if (n_div >= 2) {
    for (std::size_t j = 0; j < n_div; ++j) {
      t.shifted[static_cast<std::size_t>(divergent_ids[j])] =
          t.general[static_cast<std::size_t>(divergent_ids[(j + 1) % n_div])];
    }
  } else if (n_div == 1) {
    // A lone divergent token borrows the image of the most frequent token.
    const auto only = static_cast<std::size_t>(divergent_ids[0]);
    t.shifted[only] = t.general[only == 0 ? 1 % v : 0];
    if (t.shifted[only] == t.general[only]) throw SpecError("vocab too small for a divergent mapping");
  }

  pair.general = generate_domain(general, t.general, t.shifted, t.divergent, divergent_ids);
  pair.shifted = generate_domain(shifted, t.shifted, t.general, t.divergent, divergent_ids);
  return pair;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<s>", "</s>", "<unk>"}) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(i < tokens_.size() ? tokens_[i] : tokens_[kUnk]);
  return out;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (const auto& t : s) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) vocab.add(token);
  return vocab;
}

void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write corpus " + path.string());
  auto join = [&](const std::vector<std::string>& tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out << ' ';
      out << tokens[i];
    }
  };
  for (const auto& pair : corpus) {
    join(pair.source);
    out << '\t';
    join(pair.target);
    out << '\n';
  }
}

TextCorpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read corpus " + path.string());
  TextCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": missing TAB separator");
    }
    auto split = [](const std::string& text) {
      std::vector<std::string> tokens;
      std::istringstream ss(text);
      for (std::string t; ss >> t;) tokens.push_back(t);
      return tokens;
    };
    TextPair pair{split(line.substr(0, tab)), split(line.substr(tab + 1))};
    if (pair.source.empty() || pair.target.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty side");
    }
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

Corpus encode_corpus(const TextCorpus& corpus, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus) {
    out.push_back({source_vocab.encode(pair.source), target_vocab.encode(pair.target)});
  }
  return out;
}

std::size_t teacher_forced_steps(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& p : corpus) n += p.target.size() + 1;
  return n;
}

}  // namespace gknn
