// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gknn/errors.hpp"

namespace gknn {
namespace {

Json domain_json(const DomainSpec& s) {
  return Json{{"name", s.name},
              {"vocab", s.source_vocab},
              {"shared_fraction", s.shared_fraction},
              {"min_len", s.min_len},
              {"max_len", s.max_len},
              {"train", s.train},
              {"valid", s.valid},
              {"test", s.test},
              {"zipf_exponent", s.zipf_exponent},
              {"filler_tokens", s.filler_tokens},
              {"domain_term_rate", s.domain_term_rate},
              {"sense_mix", s.sense_mix},
              {"target_noise", s.target_noise}};
}

DomainSpec domain_from_json(const Json& j) {
  DomainSpec s;
  s.name = j.at("name").get<std::string>();
  s.source_vocab = j.at("vocab").get<int>();
  s.target_vocab = s.source_vocab;
  s.shared_fraction = j.at("shared_fraction").get<double>();
  s.min_len = j.at("min_len").get<int>();
  s.max_len = j.at("max_len").get<int>();
  s.train = j.at("train").get<int>();
  s.valid = j.at("valid").get<int>();
  s.test = j.at("test").get<int>();
  s.zipf_exponent = j.at("zipf_exponent").get<double>();
  s.filler_tokens = j.at("filler_tokens").get<int>();
  s.domain_term_rate = j.at("domain_term_rate").get<double>();
  s.sense_mix = j.at("sense_mix").get<double>();
  s.target_noise = j.at("target_noise").get<double>();
  return s;
}

const char* type_name(const Json& j) {
  if (j.is_boolean()) return "a boolean";
  if (j.is_number_integer()) return "an integer";
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_object()) return "an object";
  if (j.is_array()) return "an array";
  return "null";
}

bool compatible(const Json& def, const Json& value) {
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string();
  if (def.is_object()) return value.is_object();
  return false;
}

void check_value(const Json& def, const Json& value, const std::string& path) {
  if (!compatible(def, value)) {
    throw ConfigError("config field '" + path + "': expected " + type_name(def) + ", got " + type_name(value));
  }
  if (def.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
    throw ConfigError("config field '" + path + "': must be non-negative");
  }
}

void merge(Json& base, const Json& patch, const std::string& prefix) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config field '" + path + "' is not recognised");
    Json& target = base[it.key()];
    check_value(target, it.value(), path);
    if (target.is_object()) {
      merge(target, it.value(), path);
    } else if (target.is_number_float()) {
      target = it.value().get<double>();
    } else {
      target = it.value();
    }
  }
}

void apply_override(Json& tree, const std::string& assignment) {
  auto [path, value] = parse_override(assignment);
  Json* node = &tree;
  std::string seen;
  std::stringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) keys.push_back(part);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    seen += (i ? "." : "") + keys[i];
    if (!node->is_object() || !node->contains(keys[i])) {
      throw ConfigError("--set " + path + ": field '" + seen + "' is not recognised");
    }
    node = &(*node)[keys[i]];
  }
  if (node->is_object()) throw ConfigError("--set " + path + ": '" + path + "' is a section, not a field");
  // A bare word for a string field arrives as a string already; numbers typed
  // as strings are reported as mismatches below.
  check_value(*node, value, path);
  *node = node->is_number_float() ? Json(value.get<double>()) : value;
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

Json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                      (pos == std::string::npos ? what : what.substr(pos)));
  }
}

RunConfig finish(Json tree, const std::vector<std::string>& overrides, bool use_env) {
  for (const auto& o : overrides) apply_override(tree, o);
  if (use_env) {
    if (const char* env = std::getenv("GKNN_SEED"); env && *env) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (*end != '\0' || env[0] == '-') throw ConfigError("GKNN_SEED must be a non-negative integer, got '" + std::string(env) + "'");
      tree["seed"] = static_cast<std::uint64_t>(v);
    }
  }
  try {
    return RunConfig::from_json(tree);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() {
  general.name = "general";
  general.shared_fraction = 0.8;
  general.train = 8000;
  general.valid = 500;
  general.test = 500;
  general.sense_mix = 0.3;
  general.target_noise = 0.05;
  shifted.name = "shifted";
  shifted.shared_fraction = 0.8;
  shifted.train = 4200;
  shifted.valid = 600;
  shifted.test = 300;
  shifted.domain_term_rate = 0.2;
  shifted.target_noise = 0.03;
  model_train.epochs = 10;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t x = fnv1a(component, fnv1a(std::to_string(seed)));
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Json RunConfig::to_json() const {
  return Json{
      {"seed", seed},
      {"work_dir", work_dir.string()},
      {"data", {{"general", domain_json(general)}, {"shifted", domain_json(shifted)}}},
      {"model",
       {{"embed", embed},
        {"hidden", hidden},
        {"epochs", model_train.epochs},
        {"batch_sentences", model_train.batch_sentences},
        {"lr", model_train.lr}}},
      {"knn",
       {{"lambda", hyper.lambda},
        {"temperature", hyper.temperature},
        {"k", hyper.k},
        {"k_max_adaptive", hyper.k_max_adaptive}}},
      {"meta_k",
       {{"hidden", meta_k.hidden},
        {"epochs", meta_k.epochs},
        {"batch_sentences", meta_k.batch_sentences},
        {"lr", meta_k.lr}}},
      {"selector",
       {{"hidden", selector.hidden},
        {"tau", selector.tau},
        {"lr", selector.lr},
        {"epochs", selector.epochs},
        {"batch_sentences", selector.batch_sentences}}},
      {"decode",
       {{"mode", std::string(mode_name(translate_mode))},
        {"beam", beam},
        {"max_len", max_len},
        {"surviving_only", surviving_only},
        {"workers", workers}}},
      {"benchmark", {{"repeats", repeats}, {"futile_top_n", futile_top_n}}},
      {"index", {{"clusters", index.clusters}, {"probe", index.probe}, {"queries", index.queries}}}};
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.work_dir = j.at("work_dir").get<std::string>();
  c.general = domain_from_json(j.at("data").at("general"));
  c.shifted = domain_from_json(j.at("data").at("shifted"));
  c.general.seed = derive_seed(c.seed, "data.general");
  c.shifted.seed = derive_seed(c.seed, "data.shifted");

  const Json& m = j.at("model");
  c.embed = m.at("embed").get<std::size_t>();
  c.hidden = m.at("hidden").get<std::size_t>();
  c.model_train.epochs = m.at("epochs").get<int>();
  c.model_train.batch_sentences = m.at("batch_sentences").get<int>();
  c.model_train.lr = m.at("lr").get<double>();
  c.model_train.seed = derive_seed(c.seed, "model");

  const Json& k = j.at("knn");
  c.hyper.lambda = k.at("lambda").get<double>();
  c.hyper.temperature = k.at("temperature").get<double>();
  c.hyper.k = k.at("k").get<std::size_t>();
  c.hyper.k_max_adaptive = k.at("k_max_adaptive").get<std::size_t>();
  try {
    c.hyper.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config section 'knn': ") + e.what());
  }

  const Json& mk = j.at("meta_k");
  c.meta_k.hidden = mk.at("hidden").get<std::size_t>();
  c.meta_k.epochs = mk.at("epochs").get<int>();
  c.meta_k.batch_sentences = mk.at("batch_sentences").get<int>();
  c.meta_k.lr = mk.at("lr").get<double>();
  c.meta_k.seed = derive_seed(c.seed, "meta_k");

  const Json& s = j.at("selector");
  c.selector.hidden = s.at("hidden").get<std::size_t>();
  c.selector.tau = s.at("tau").get<double>();
  c.selector.lr = s.at("lr").get<double>();
  c.selector.epochs = s.at("epochs").get<int>();
  c.selector.batch_sentences = s.at("batch_sentences").get<int>();
  c.selector.seed = derive_seed(c.seed, "selector");
  if (!(c.selector.tau > 0.0)) throw ConfigError("config field 'selector.tau': must be positive");

  const Json& d = j.at("decode");
  c.translate_mode = parse_mode(d.at("mode").get<std::string>());
  c.beam = d.at("beam").get<int>();
  c.max_len = d.at("max_len").get<int>();
  c.surviving_only = d.at("surviving_only").get<bool>();
  c.workers = d.at("workers").get<int>();
  if (c.beam < 1) throw ConfigError("config field 'decode.beam': must be >= 1");
  if (c.max_len < 0) throw ConfigError("config field 'decode.max_len': must be >= 0 (0 = automatic)");

  const Json& b = j.at("benchmark");
  c.repeats = b.at("repeats").get<int>();
  c.futile_top_n = b.at("futile_top_n").get<std::size_t>();
  if (c.repeats < 1) throw ConfigError("config field 'benchmark.repeats': must be >= 1");

  const Json& ix = j.at("index");
  c.index.clusters = ix.at("clusters").get<std::size_t>();
  c.index.probe = ix.at("probe").get<std::size_t>();
  c.index.queries = ix.at("queries").get<std::size_t>();
  return c;
}

// Where the workspace lives is not part of the run's identity.
std::uint64_t RunConfig::hash() const {
  Json j = to_json();
  j.erase("work_dir");
  return fnv1a(j.dump());
}

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

DecodeConfig RunConfig::decode_config(DecodeMode mode) const {
  DecodeConfig d;
  d.mode = mode;
  d.beam = beam;
  d.max_len = max_len;
  d.hyper = hyper;
  d.surviving_only = surviving_only;
  d.workers = workers;
  return d;
}

std::pair<std::string, Json> parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  return {key, value};
}

RunConfig config_from_text(const std::string& text, const std::vector<std::string>& overrides, bool use_env) {
  Json tree = RunConfig().to_json();
  merge(tree, parse_config_text(text, "<config>"), "");
  return finish(std::move(tree), overrides, use_env);
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides,
                      bool use_env) {
  Json tree = RunConfig().to_json();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file " + path->string());
    std::stringstream buf;
    buf << in.rdbuf();
    const Json patch = parse_config_text(buf.str(), path->string());
    if (!patch.is_object()) throw ConfigError(path->string() + ": top level must be a JSON object");
    merge(tree, patch, "");
  }
  return finish(std::move(tree), overrides, use_env);
}

}  // namespace gknn
