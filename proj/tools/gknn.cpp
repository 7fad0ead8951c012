// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// gknn <subcommand> --config path [--set key=value ...]

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gknn/config.hpp"
#include "gknn/errors.hpp"
#include "gknn/pipeline.hpp"

namespace {

const char* describe(const std::string& stage) {
  if (stage == "gen-data") return "Generate the general and shifted synthetic corpora";
  if (stage == "train-model") return "Train and freeze the translation model on the general domain";
  if (stage == "build-datastore") return "Build the key-value datastore from the shifted train split";
  if (stage == "train-meta-k") return "Train the adaptive Meta-k combiner on the shifted valid split";
  if (stage == "train-selector") return "Train the retrieval gate (joint and CE-only) on the shifted valid split";
  if (stage == "translate") return "Decode the shifted test split with decode.mode";
  if (stage == "benchmark") return "Compare pure, vanilla, adaptive and gated decoding";
  if (stage == "measure-redundancy") return "Fraction of positions whose argmax survives kNN revision";
  if (stage == "futile-tokens") return "Rank gold tokens by unchanged-retrieval count";
  if (stage == "search-stats") return "Exact versus clustered search recall and timing";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated kNN-MT workbench"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;

  std::vector<std::string> commands = gknn::stage_names();
  commands.push_back("run-all");
  commands.push_back("show-config");
  for (const auto& name : commands) {
    const char* help = name == "run-all"       ? "Run every stage in order"
                       : name == "show-config" ? "Print the effective configuration"
                                               : describe(name);
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override a field, e.g. --set knn.lambda=0.5")->take_all();
  }

  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    const gknn::RunConfig cfg = gknn::load_config(config_path, overrides);
    if (stage == "show-config") {
      std::cout << cfg.to_json().dump(2) << "\n# config hash " << cfg.hash_hex() << "\n";
      return 0;
    }
    gknn::run_stage(stage, cfg, std::cout);
  } catch (const gknn::Error& e) {
    std::cerr << "gknn " << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gknn " << stage << ": unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
