// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// The experiment pipeline as named stages over a work directory:
//
//   data/         generated corpora (TSV)
//   checkpoints/  model.json, meta_k.json, selector.json, selector_ce_only.json
//   datastore/    shifted.kds
//   outputs/      hypotheses, one file per decoding system
//   reports/      benchmark, redundancy, training curves, search statistics
//   manifests/    one <stage>.json per completed stage
//
// Every manifest records the stage, config hash, seed and (where a model
// is involved) the model checksum. Stages refuse to run when a
// prerequisite manifest is missing or was produced by a different model.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gknn/config.hpp"
#include "gknn/datastore.hpp"
#include "gknn/evalbench.hpp"
#include "gknn/knnprob.hpp"
#include "gknn/model.hpp"
#include "gknn/selector.hpp"
#include "gknn/toygen.hpp"

namespace gknn {

// In execution order; "run-all" runs every one of them.
const std::vector<std::string>& stage_names();

// Throws ConfigError for an unknown stage, MissingArtifactError naming the
// stage to run when a prerequisite is absent, ContractError on a model
// checksum mismatch. Progress lines go to `log`.
void run_stage(std::string_view stage, const RunConfig& cfg, std::ostream& log);

struct Workspace {
  std::filesystem::path root;

  explicit Workspace(std::filesystem::path dir) : root(std::move(dir)) {}

  std::filesystem::path corpus(std::string_view domain, std::string_view split) const;
  std::filesystem::path model() const { return root / "checkpoints" / "model.json"; }
  std::filesystem::path meta_k() const { return root / "checkpoints" / "meta_k.json"; }
  std::filesystem::path selector(bool ce_only = false) const;
  std::filesystem::path datastore() const { return root / "datastore" / "shifted.kds"; }
  std::filesystem::path hypotheses(std::string_view system) const;
  std::filesystem::path report(std::string_view name) const { return root / "reports" / name; }
  std::filesystem::path manifest(std::string_view stage) const;
};

struct LoadedModel {
  ToyModel model;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
};

// Loaders used by the stages, the acceptance suite and the tests. Each
// checks the manifest of the stage that produced the artifact.
TextCorpus load_text_split(const Workspace& ws, std::string_view domain, std::string_view split);
LoadedModel load_model(const Workspace& ws);
Corpus load_split(const Workspace& ws, const LoadedModel& m, std::string_view domain, std::string_view split);
Datastore load_checked_datastore(const Workspace& ws, const ToyModel& model);
MetaKNet load_meta_k(const Workspace& ws, const ToyModel& model);
Selector load_selector(const Workspace& ws, const ToyModel& model, bool ce_only = false);

// The systems compared by the benchmark stage, in report order.
std::vector<BenchmarkEntry> benchmark_entries(const RunConfig& cfg, const ToyModel& model, const Datastore& ds,
                                              const MetaKNet& meta_k, const Selector& joint,
                                              const Selector& ce_only);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace gknn
