// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "gknn/errors.hpp"

namespace gknn {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr std::string_view kDomains[] = {"general", "shifted"};
constexpr std::string_view kSplits[] = {"train", "valid", "test"};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

Json vocab_json(const Vocabulary& v) {
  return Json(std::vector<std::string>(v.tokens().begin() + kNumSpecials, v.tokens().end()));
}

Vocabulary vocab_from_json(const Json& j) {
  Vocabulary v;
  for (const auto& t : j) v.add(t.get<std::string>());
  return v;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- manifests ----------------------------------------------------------

void write_manifest(const Workspace& ws, const RunConfig& cfg, std::string_view stage,
                    std::optional<std::uint64_t> model_checksum, const std::vector<fs::path>& artifacts,
                    Json details = Json::object()) {
  Json j{{"stage", std::string(stage)}, {"config_hash", cfg.hash_hex()}, {"seed", cfg.seed}};
  if (model_checksum) j["model_checksum"] = hex(*model_checksum);
  j["artifacts"] = Json::array();
  for (const auto& a : artifacts) j["artifacts"].push_back(fs::relative(a, ws.root).generic_string());
  j["details"] = std::move(details);
  write_json_file(ws.manifest(stage), j);
}

Json require_stage(const Workspace& ws, std::string_view stage) {
  const fs::path path = ws.manifest(stage);
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing output of stage '" + std::string(stage) + "' in " + ws.root.string() +
                               "; run `gknn " + std::string(stage) + "` first");
  }
  Json j = read_json_file(path);
  for (const auto& a : j.at("artifacts")) {
    if (!fs::exists(ws.root / a.get<std::string>())) {
      throw MissingArtifactError("artifact " + a.get<std::string>() + " of stage '" + std::string(stage) +
                                 "' is missing; rerun `gknn " + std::string(stage) + "`");
    }
  }
  return j;
}

void check_model(const Json& manifest, const ToyModel& model) {
  const std::string expected = hex(model.checksum());
  const std::string got = manifest.at("model_checksum").get<std::string>();
  if (got != expected) {
    const std::string stage = manifest.at("stage").get<std::string>();
    throw ContractError("stage '" + stage + "' output was produced by model " + got +
                        " but the current model checkpoint is " + expected + "; rerun `gknn " + stage + "`");
  }
}

// ---- helpers --------------------------------------------------------------

std::vector<std::vector<TokenId>> sources_of(const Corpus& c) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(c.size());
  for (const auto& p : c) out.push_back(p.source);
  return out;
}

std::vector<std::vector<TokenId>> targets_of(const Corpus& c) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(c.size());
  for (const auto& p : c) out.push_back(p.target);
  return out;
}

std::string hypotheses_text(const std::vector<std::vector<TokenId>>& hyps, const Vocabulary& vocab) {
  std::string out;
  for (const auto& h : hyps) {
    out += join_tokens(vocab.decode(h));
    out += '\n';
  }
  return out;
}

std::string selector_curve_csv(const std::vector<SelectorEpochStats>& curve) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,l1,l2,total,precision,recall,retrieving_ratio,degenerate_batches\n";
  for (const auto& s : curve) {
    out << s.epoch << ',' << s.l1 << ',' << s.l2 << ',' << s.total << ',' << s.precision << ',' << s.recall << ','
        << s.retrieving_ratio << ',' << s.degenerate_batches << '\n';
  }
  return out.str();
}

std::string loss_curve_csv(const std::vector<double>& curve) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i + 1 << ',' << curve[i] << '\n';
  return out.str();
}

// ---- stages ---------------------------------------------------------------

void stage_gen_data(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const DomainPair pair = generate_domain_pair(cfg.general, cfg.shifted);
  std::vector<fs::path> files;
  for (auto domain : kDomains) {
    const SplitCorpus& sc = domain == "general" ? pair.general : pair.shifted;
    const TextCorpus* splits[] = {&sc.train, &sc.valid, &sc.test};
    for (std::size_t s = 0; s < 3; ++s) {
      const fs::path path = ws.corpus(domain, kSplits[s]);
      fs::create_directories(path.parent_path());
      write_corpus(path, *splits[s]);
      files.push_back(path);
      log << "  " << domain << "/" << kSplits[s] << ": " << splits[s]->size() << " pairs\n";
    }
  }
  write_manifest(ws, cfg, "gen-data", std::nullopt, files,
                 Json{{"divergent_source_tokens", pair.tables.divergent_count()}});
}

void stage_train_model(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  require_stage(ws, "gen-data");
  const TextCorpus general = load_text_split(ws, "general", "train");
  const TextCorpus shifted = load_text_split(ws, "shifted", "train");
  std::vector<std::vector<std::string>> src;
  std::vector<std::vector<std::string>> tgt;
  for (const TextCorpus* c : {&general, &shifted}) {
    for (const auto& p : *c) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
  }
  LoadedModel m{ToyModel(), build_vocab(src), build_vocab(tgt)};
  m.model = ToyModel(ModelDims{m.source_vocab.size(), m.target_vocab.size(), cfg.embed, cfg.hidden},
                     derive_seed(cfg.seed, "model.init"));
  const Corpus train = encode_corpus(general, m.source_vocab, m.target_vocab);
  const auto t0 = Clock::now();
  const auto curve = train_model(m.model, train, cfg.model_train);
  log << "  " << curve.size() << " epochs in " << seconds_since(t0) << " s, final loss "
      << (curve.empty() ? 0.0 : curve.back()) << "\n";

  const double acc_in = token_accuracy(m.model, load_split(ws, m, "general", "test"));
  const double acc_out = token_accuracy(m.model, load_split(ws, m, "shifted", "test"));
  log << "  token accuracy: in-domain " << acc_in << ", out-of-domain " << acc_out << "\n";

  Json ckpt{{"model", m.model.to_json()},
            {"source_vocab", vocab_json(m.source_vocab)},
            {"target_vocab", vocab_json(m.target_vocab)}};
  fs::create_directories(ws.model().parent_path());
  write_json_file(ws.model(), ckpt);
  write_text(ws.report("model_curve.csv"), loss_curve_csv(curve));
  write_manifest(ws, cfg, "train-model", m.model.checksum(), {ws.model()},
                 Json{{"token_accuracy_in_domain", acc_in}, {"token_accuracy_out_of_domain", acc_out}});
}

void stage_build_datastore(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  require_stage(ws, "train-model");
  const LoadedModel m = load_model(ws);
  const Corpus train = load_split(ws, m, "shifted", "train");
  const Datastore ds = build_datastore(m.model, train, "shifted");
  fs::create_directories(ws.datastore().parent_path());
  save_datastore(ds, ws.datastore());
  log << "  " << ds.size() << " entries of dimension " << ds.dim << "\n";
  write_manifest(ws, cfg, "build-datastore", m.model.checksum(), {ws.datastore()},
                 Json{{"entries", ds.size()}, {"dim", ds.dim}, {"domain", ds.domain}});
}

void stage_train_meta_k(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  const Corpus valid = load_split(ws, m, "shifted", "valid");
  MetaKNet net(cfg.hyper.k_max_adaptive, cfg.meta_k.hidden, derive_seed(cfg.seed, "meta_k.init"));
  const auto curve = train_meta_k(net, valid, m.model, ds, cfg.hyper, cfg.meta_k);
  log << "  meta-k NLL " << (curve.empty() ? 0.0 : curve.back()) << "\n";
  fs::create_directories(ws.meta_k().parent_path());
  write_json_file(ws.meta_k(), net.to_json());
  write_text(ws.report("meta_k_curve.csv"), loss_curve_csv(curve));
  write_manifest(ws, cfg, "train-meta-k", m.model.checksum(), {ws.meta_k()});
}

void stage_train_selector(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  const Corpus valid = load_split(ws, m, "shifted", "valid");
  if (valid.empty()) throw TrainingError("train-selector: the shifted valid split is empty");
  const auto examples = prepare_selector_examples(m.model, ds, valid, cfg.hyper);
  const auto offsets = sentence_offsets(valid);
  const std::size_t d = m.model.hidden_size();
  const std::size_t width = cfg.selector.hidden == 0 ? d : cfg.selector.hidden;
  const std::size_t label0 =
      static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label == 0; }));
  log << "  " << examples.size() << " valid positions, label-0 rate "
      << static_cast<double>(label0) / static_cast<double>(examples.size()) << "\n";

  Json details;
  std::vector<fs::path> files;
  for (const bool ce_only : {false, true}) {
    SelectorTrainOptions opts = cfg.selector;
    opts.mode = ce_only ? SelectorLossMode::kCeOnly : SelectorLossMode::kJoint;
    Selector sel(d, width, derive_seed(cfg.seed, "selector.init"));
    const auto curve = train_selector(sel, examples, offsets, opts);
    const std::string name = ce_only ? "ce_only" : "joint";
    if (!curve.empty()) {
      log << "  " << name << ": precision " << curve.back().precision << ", recall " << curve.back().recall
          << ", retrieving ratio " << curve.back().retrieving_ratio << "\n";
      details[name] = Json{{"precision", curve.back().precision},
                           {"recall", curve.back().recall},
                           {"retrieving_ratio", curve.back().retrieving_ratio},
                           {"degenerate_batches", curve.back().degenerate_batches}};
    }
    fs::create_directories(ws.selector(ce_only).parent_path());
    write_json_file(ws.selector(ce_only), sel.to_json());
    write_text(ws.report(ce_only ? "selector_ce_only_curve.csv" : "selector_curve.csv"), selector_curve_csv(curve));
    files.push_back(ws.selector(ce_only));
  }
  write_manifest(ws, cfg, "train-selector", m.model.checksum(), files, details);
}

void stage_translate(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  Components comps{&m.model, nullptr, nullptr, nullptr};
  std::optional<Datastore> ds;
  std::optional<MetaKNet> meta;
  std::optional<Selector> sel;
  if (cfg.translate_mode != DecodeMode::kPureNmt) {
    ds = load_checked_datastore(ws, m.model);
    comps.datastore = &*ds;
  }
  if (cfg.translate_mode == DecodeMode::kAdaptive) {
    meta = load_meta_k(ws, m.model);
    comps.meta_k = &*meta;
  }
  if (cfg.translate_mode == DecodeMode::kGated) {
    sel = load_selector(ws, m.model);
    comps.selector = &*sel;
  }
  const Corpus test = load_split(ws, m, "shifted", "test");
  const auto result = translate_corpus(cfg.decode_config(cfg.translate_mode), comps, sources_of(test));
  const std::string name(mode_name(cfg.translate_mode));
  write_text(ws.hypotheses(name), hypotheses_text(result.hypotheses, m.target_vocab));
  const double bleu = corpus_bleu(result.hypotheses, targets_of(test));
  log << "  " << name << ": BLEU " << bleu << ", " << result.timing.retrieval_calls << " retrievals over "
      << result.timing.steps << " steps\n";
  write_manifest(ws, cfg, "translate", m.model.checksum(), {ws.hypotheses(name)},
                 Json{{"mode", name}, {"bleu", bleu}});
}

void stage_benchmark(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  const Selector joint = load_selector(ws, m.model);
  const Selector ce_only = load_selector(ws, m.model, true);
  const MetaKNet meta = load_meta_k(ws, m.model);
  const Corpus test = load_split(ws, m, "shifted", "test");

  const auto report = benchmark_suite(benchmark_entries(cfg, m.model, ds, meta, joint, ce_only), test, cfg.repeats);
  std::vector<fs::path> files;
  for (const auto& row : report.rows) {
    write_text(ws.hypotheses(row.name), hypotheses_text(row.hypotheses, m.target_vocab));
    files.push_back(ws.hypotheses(row.name));
  }
  Json j = report.to_json();
  const auto labels = evaluate_selector(joint, m.model, test).labels;
  const auto label0 = static_cast<double>(std::count(labels.begin(), labels.end(), 0));
  j["selector_label0_rate"] = labels.empty() ? 0.0 : label0 / static_cast<double>(labels.size());
  j["test_sentences"] = test.size();
  write_json_file(ws.report("benchmark.json"), j);
  write_text(ws.report("benchmark.txt"), report.table());
  files.push_back(ws.report("benchmark.json"));
  files.push_back(ws.report("benchmark.txt"));
  log << report.table();
  write_manifest(ws, cfg, "benchmark", m.model.checksum(), files);
}

void stage_measure_redundancy(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  const Corpus test = load_split(ws, m, "shifted", "test");
  const auto records = revision_records(m.model, ds, test, cfg.hyper);
  const double ratio = redundancy_ratio(records);
  log << "  redundancy " << ratio << " over " << records.size() << " positions\n";
  write_json_file(ws.report("redundancy.json"),
                  Json{{"redundancy", ratio},
                       {"positions", records.size()},
                       {"lambda", cfg.hyper.lambda},
                       {"temperature", cfg.hyper.temperature},
                       {"k", cfg.hyper.k}});
  write_manifest(ws, cfg, "measure-redundancy", m.model.checksum(), {ws.report("redundancy.json")},
                 Json{{"redundancy", ratio}});
}

void stage_futile_tokens(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  const Corpus test = load_split(ws, m, "shifted", "test");
  const auto records = revision_records(m.model, ds, test, cfg.hyper);
  const auto rows = futile_token_report(records, cfg.futile_top_n);
  write_text(ws.report("futile_tokens.csv"), futile_tokens_csv(rows, m.target_vocab));
  for (const auto& r : rows) {
    log << "  " << m.target_vocab.token(r.token) << ": " << r.unchanged << " / " << r.occurrences << "\n";
  }
  write_manifest(ws, cfg, "futile-tokens", m.model.checksum(), {ws.report("futile_tokens.csv")});
}

void stage_search_stats(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  const LoadedModel m = load_model(ws);
  const Datastore ds = load_checked_datastore(ws, m.model);
  if (ds.empty()) throw InputError("search-stats: the datastore is empty");
  const Corpus test = load_split(ws, m, "shifted", "test");
  std::vector<Vector> queries;
  for (const auto& pair : test) {
    for (auto& step : teacher_forced_pass(m.model, pair)) {
      if (queries.size() >= cfg.index.queries) break;
      queries.push_back(std::move(step.hidden));
    }
  }
  const std::size_t clusters = std::min(cfg.index.clusters, ds.size());
  const std::size_t k = cfg.hyper.k;
  auto t0 = Clock::now();
  const auto index = ClusteredIndex::build(ds, clusters, derive_seed(cfg.seed, "index"));
  const double build_seconds = seconds_since(t0);

  std::vector<NeighborSet> exact;
  t0 = Clock::now();
  for (const auto& q : queries) exact.push_back(knn_search(ds, q, k));
  const double exact_seconds = seconds_since(t0);
  t0 = Clock::now();
  for (const auto& q : queries) knn_search_serial(ds, q, k);
  const double serial_seconds = seconds_since(t0);

  Json probes = Json::array();
  for (std::size_t probe = 1;; probe = std::min(probe * 2, clusters)) {
    std::size_t hits = 0;
    t0 = Clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto approx = index.search(ds, queries[i], k, probe);
      for (const auto& nb : approx) {
        hits += std::any_of(exact[i].begin(), exact[i].end(), [&](const Neighbor& e) { return e.index == nb.index; });
      }
    }
    const double secs = seconds_since(t0);
    std::size_t denom = 0;
    for (const auto& e : exact) denom += e.size();
    const double recall = denom ? static_cast<double>(hits) / static_cast<double>(denom) : 1.0;
    probes.push_back(Json{{"n_probe", probe}, {"recall_at_k", recall}, {"seconds", secs}});
    log << "  n_probe " << probe << ": recall@" << k << " " << recall << " (" << secs << " s)\n";
    if (probe == clusters) break;
  }
  log << "  exact scan " << exact_seconds << " s (serial " << serial_seconds << " s) for " << queries.size()
      << " queries\n";
  write_json_file(ws.report("search_stats.json"), Json{{"entries", ds.size()},
                                                       {"queries", queries.size()},
                                                       {"k", k},
                                                       {"clusters", clusters},
                                                       {"kmeans_iterations", index.iterations()},
                                                       {"build_seconds", build_seconds},
                                                       {"exact_seconds", exact_seconds},
                                                       {"exact_serial_seconds", serial_seconds},
                                                       {"probes", probes}});
  write_manifest(ws, cfg, "search-stats", m.model.checksum(), {ws.report("search_stats.json")});
}

using StageFn = void (*)(const RunConfig&, const Workspace&, std::ostream&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> table{
      {"gen-data", stage_gen_data},
      {"train-model", stage_train_model},
      {"build-datastore", stage_build_datastore},
      {"train-meta-k", stage_train_meta_k},
      {"train-selector", stage_train_selector},
      {"translate", stage_translate},
      {"benchmark", stage_benchmark},
      {"measure-redundancy", stage_measure_redundancy},
      {"futile-tokens", stage_futile_tokens},
      {"search-stats", stage_search_stats},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : stage_table()) out.push_back(name);
    return out;
  }();
  return names;
}

void run_stage(std::string_view stage, const RunConfig& cfg, std::ostream& log) {
  if (stage == "run-all") {
    for (const auto& name : stage_names()) run_stage(name, cfg, log);
    return;
  }
  const auto& table = stage_table();
  const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == stage; });
  if (it == table.end()) throw ConfigError("unknown stage '" + std::string(stage) + "'");
  const Workspace ws(cfg.work_dir);
  fs::create_directories(ws.root);
  log << "[" << stage << "]\n";
  const auto t0 = Clock::now();
  it->second(cfg, ws, log);
  log << "[" << stage << "] done in " << seconds_since(t0) << " s\n";
}

fs::path Workspace::corpus(std::string_view domain, std::string_view split) const {
  return root / "data" / (std::string(domain) + "." + std::string(split) + ".tsv");
}

fs::path Workspace::selector(bool ce_only) const {
  return root / "checkpoints" / (ce_only ? "selector_ce_only.json" : "selector.json");
}

fs::path Workspace::hypotheses(std::string_view system) const {
  return root / "outputs" / (std::string(system) + ".txt");
}

fs::path Workspace::manifest(std::string_view stage) const {
  return root / "manifests" / (std::string(stage) + ".json");
}

TextCorpus load_text_split(const Workspace& ws, std::string_view domain, std::string_view split) {
  require_stage(ws, "gen-data");
  return read_corpus(ws.corpus(domain, split));
}

LoadedModel load_model(const Workspace& ws) {
  const Json manifest = require_stage(ws, "train-model");
  const Json j = read_json_file(ws.model());
  try {
    LoadedModel m{ToyModel::from_json(j.at("model")), vocab_from_json(j.at("source_vocab")),
                  vocab_from_json(j.at("target_vocab"))};
    if (!m.model.frozen()) throw FormatError("model checkpoint is not frozen");
    check_model(manifest, m.model);
    return m;
  } catch (const Json::exception& e) {
    throw FormatError(ws.model().string() + ": " + e.what());
  }
}

Corpus load_split(const Workspace& ws, const LoadedModel& m, std::string_view domain, std::string_view split) {
  return encode_corpus(load_text_split(ws, domain, split), m.source_vocab, m.target_vocab);
}

Datastore load_checked_datastore(const Workspace& ws, const ToyModel& model) {
  const Json manifest = require_stage(ws, "build-datastore");
  check_model(manifest, model);
  Datastore ds = load_datastore(ws.datastore());
  if (ds.dim != model.hidden_size()) {
    throw ContractError("datastore key dimension " + std::to_string(ds.dim) + " != model hidden size " +
                        std::to_string(model.hidden_size()));
  }
  ds.domain = manifest.at("details").at("domain").get<std::string>();
  ds.model_checksum = model.checksum();
  return ds;
}

MetaKNet load_meta_k(const Workspace& ws, const ToyModel& model) {
  const Json manifest = require_stage(ws, "train-meta-k");
  check_model(manifest, model);
  return MetaKNet::from_json(read_json_file(ws.meta_k()));
}

Selector load_selector(const Workspace& ws, const ToyModel& model, bool ce_only) {
  const Json manifest = require_stage(ws, "train-selector");
  check_model(manifest, model);
  Selector sel = Selector::from_json(read_json_file(ws.selector(ce_only)));
  if (sel.input_dim() != model.hidden_size()) {
    throw ContractError("selector input dimension does not match the model hidden size");
  }
  return sel;
}

std::vector<BenchmarkEntry> benchmark_entries(const RunConfig& cfg, const ToyModel& model, const Datastore& ds,
                                              const MetaKNet& meta_k, const Selector& joint,
                                              const Selector& ce_only) {
  std::vector<BenchmarkEntry> out;
  out.push_back({"pure", cfg.decode_config(DecodeMode::kPureNmt), {&model, nullptr, nullptr, nullptr}});
  out.push_back({"vanilla", cfg.decode_config(DecodeMode::kVanilla), {&model, &ds, nullptr, nullptr}});
  out.push_back({"adaptive", cfg.decode_config(DecodeMode::kAdaptive), {&model, &ds, nullptr, &meta_k}});
  out.push_back({"gated", cfg.decode_config(DecodeMode::kGated), {&model, &ds, &joint, nullptr}});
  out.push_back({"gated_ce_only", cfg.decode_config(DecodeMode::kGated), {&model, &ds, &ce_only, nullptr}});
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace gknn
