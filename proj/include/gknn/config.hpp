// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON document, every field optional. Precedence
// is --set override > file > built-in default; GKNN_SEED replaces `seed`
// last. Unknown fields and type mismatches are rejected with the dotted
// field path, JSON syntax errors with line and column.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gknn/decode.hpp"
#include "gknn/json_io.hpp"
#include "gknn/knnprob.hpp"
#include "gknn/model.hpp"
#include "gknn/selector.hpp"
#include "gknn/toygen.hpp"

namespace gknn {

struct IndexConfig {
  std::size_t clusters = 64;
  std::size_t probe = 8;
  std::size_t queries = 1000;
};

struct RunConfig {
  std::uint64_t seed = 2026;
  std::filesystem::path work_dir = "gknn-run";

  DomainSpec general;
  DomainSpec shifted;

  std::size_t embed = 32;
  std::size_t hidden = 64;
  ModelTrainOptions model_train;

  Hyperparams hyper;
  MetaKTrainOptions meta_k;
  SelectorTrainOptions selector;

  DecodeMode translate_mode = DecodeMode::kGated;
  int beam = 4;
  int max_len = 0;
  bool surviving_only = false;
  int workers = 1;

  int repeats = 3;
  std::size_t futile_top_n = 8;
  IndexConfig index;

  RunConfig();

  Json to_json() const;
  // Reads a full tree (as produced by to_json after merging); component
  // seeds are derived from `seed`.
  static RunConfig from_json(const Json& j);

  // FNV-1a of the canonical JSON dump.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  DecodeConfig decode_config(DecodeMode mode) const;
};

// Seed for a named component, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

// Parses "a.b.c=value"; value is JSON when it parses as JSON, else a string.
std::pair<std::string, Json> parse_override(const std::string& assignment);

// Defaults <- file (optional) <- overrides <- GKNN_SEED (if `use_env`).
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides, bool use_env = true);

// Same, from an in-memory document.
RunConfig config_from_text(const std::string& text, const std::vector<std::string>& overrides,
                           bool use_env = true);

}  // namespace gknn
