// docforge: JSONL pipelines over the reward, refinery, synthesis, metric and GRPO modules.
//
//   docforge score    --input docs.jsonl --output scored.jsonl
//   docforge sieve    --input docs.jsonl --output verdicts.jsonl --hardcase hard.jsonl
//   docforge cluster  --input docs.jsonl --output clusters.jsonl --summary strata.json
//   docforge sample   --input docs.jsonl --output sample.jsonl --seed 3
//   docforge synth    --count 100 --seed 7 --output synth.jsonl
//   docforge eval     --input pairs.jsonl --output metrics.jsonl
//   docforge grpo-sim --seed 42 --output steps.jsonl
//
// Exit status: 0 success, 1 input error, 2 configuration error.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "docforge/config.hpp"
#include "docforge/metrics.hpp"
#include "docforge/records.hpp"
#include "docforge/refinery.hpp"
#include "docforge/reward.hpp"
#include "docforge/simulation.hpp"
#include "docforge/synth.hpp"

namespace {

using docforge::Config;
using docforge::Error;
using docforge::ErrorKind;
using docforge::Json;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kConfigError = 2;

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string input = "-";
  std::string output = "-";
  std::string summary;
};

struct Run {
  Config config;
  CommonArgs args;
  std::ostringstream out;
  Json summary = Json::object();
};

std::vector<docforge::Record> read_input(const std::string& path) {
  if (path == "-") return docforge::read_records(std::cin);
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedRecord, "cannot open input " + path);
  return docforge::read_records(in);
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::MalformedRecord, "cannot open output " + path);
  f << text;
}

void emit(Run& run, const Json& j) { docforge::write_record(run.out, j); }

docforge::RewardOptions reward_options(const Config& c) {
  docforge::RewardOptions o;
  o.closure_constant = c.closure_constant;
  return o;
}

/// Rethrows a module error with the record's line number attached.
template <typename F>
auto at_line(const docforge::Record& r, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::BadK) throw;
    throw Error(e.kind(), "line " + std::to_string(r.line) + " (id '" + r.doc.id + "'): " + e.message());
  }
}

// ---------------------------------------------------------------------------

void cmd_score(Run& run) {
  const auto records = read_input(run.args.input);
  const auto opt = reward_options(run.config);
  double sum = 0.0;
  for (const auto& r : records) {
    const auto b = at_line(r, [&] { return docforge::composite_reward(r.doc, std::nullopt, run.config.weights, opt); });
    Json j = r.raw;
    j["r_syntax"] = b.r_syntax;
    j["r_closure"] = b.r_closure;
    j["r_table"] = b.r_table;
    j["r_text"] = r.doc.reference ? Json(b.r_text) : Json(nullptr);
    j["composite"] = b.composite;
    emit(run, j);
    sum += b.composite;
  }
  run.summary["records"] = records.size();
  run.summary["mean_composite"] = records.empty() ? Json(nullptr) : Json(sum / static_cast<double>(records.size()));
}

void cmd_sieve(Run& run, const std::string& hardcase_path) {
  const auto records = read_input(run.args.input);
  std::vector<std::string> ids;
  std::vector<docforge::SieveVerdict> verdicts;
  std::ostringstream hard;
  for (const auto& r : records) {
    const auto v = docforge::sieve(r.doc, run.config.sieve);
    Json j;
    j["id"] = r.doc.id;
    j.update(docforge::verdict_to_json(v));
    emit(run, j);
    if (v.decision == docforge::SieveDecision::HardCase) docforge::write_hardcase(hard, r.doc, v);
    ids.push_back(r.doc.id);
    verdicts.push_back(v);
  }
  const auto routing = docforge::route(ids, verdicts);
  if (!hardcase_path.empty()) write_text(hardcase_path, hard.str());
  run.summary["records"] = records.size();
  run.summary["pass"] = routing.pass.size();
  run.summary["discard"] = routing.discard.size();
  run.summary["hardcase"] = routing.hardcase.size();
}

struct Clustered {
  std::vector<std::vector<double>> features;
  std::vector<docforge::TagVector> tags;
  docforge::ClusterModel model;
  std::vector<docforge::Density> density;
  docforge::DualIndex index;
};

void require_unique_ids(const std::vector<const docforge::Record*>& records) {
  std::map<std::string, std::size_t> seen;
  for (const auto* r : records) {
    auto [it, inserted] = seen.emplace(r->doc.id, r->line);
    if (!inserted) {
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(r->line) + ": duplicate id '" + r->doc.id +
                                                  "' (first seen on line " + std::to_string(it->second) + ")");
    }
  }
}

Clustered cluster_records(const Run& run, const std::vector<const docforge::Record*>& records) {
  Clustered c;
  require_unique_ids(records);
  for (const auto* r : records) {
    c.features.push_back(docforge::layout_features(r->doc));
    c.tags.push_back(docforge::tag_document(r->doc));
    if (c.features.back().size() != c.features.front().size()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "line " + std::to_string(r->line) + ": feature dimension differs from the first record");
    }
  }
  if (records.empty()) return c;
  const auto& k = run.config.cluster;
  if (k.k > records.size()) {
    throw Error(ErrorKind::ConfigError, "cluster.k=" + std::to_string(k.k) + " exceeds the " +
                                            std::to_string(records.size()) + " available documents");
  }
  c.model = docforge::kmeans_fit(c.features, k.k, docforge::derive_seed(run.args.seed, 11), k.max_iters);
  c.density = docforge::label_density(c.model, k.dense_factor, k.rare_factor);
  std::vector<std::string> ids;
  for (const auto* r : records) ids.push_back(r->doc.id);
  c.index = docforge::build_dual_index(ids, c.model.assignments, c.tags, c.density);
  return c;
}

Json strata_report(const Clustered& c) {
  Json strata = Json::array();
  for (const auto& [key, ids] : c.index.strata) {
    strata.push_back({{"cluster", key.first},
                      {"density", docforge::to_string(c.density[key.first])},
                      {"tags", docforge::tags_to_json(key.second)},
                      {"size", ids.size()}});
  }
  return strata;
}

void cmd_cluster(Run& run) {
  const auto records = read_input(run.args.input);
  std::vector<const docforge::Record*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  const auto c = cluster_records(run, ptrs);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t cl = c.model.assignments[i];
    Json j;
    j["id"] = records[i].doc.id;
    j["cluster"] = cl;
    j["density"] = docforge::to_string(c.density[cl]);
    j["tags"] = docforge::tags_to_json(c.tags[i]);
    j["features"] = c.features[i];
    emit(run, j);
  }
  run.summary["records"] = records.size();
  if (!records.empty()) {
    run.summary["inertia"] = c.model.inertia;
    run.summary["iterations"] = c.model.iterations;
    run.summary["cluster_sizes"] = c.model.cluster_sizes();
    run.summary["centroids"] = c.model.centroids;
    run.summary["strata"] = strata_report(c);
  }
}

void cmd_sample(Run& run) {
  const auto records = read_input(run.args.input);
  const bool sieve_first = run.config.order == docforge::PipelineOrder::SieveThenSample;
  std::map<std::string, docforge::SieveDecision> decision;
  for (const auto& r : records) decision[r.doc.id] = docforge::sieve(r.doc, run.config.sieve).decision;
  std::vector<const docforge::Record*> pool;
  for (const auto& r : records) {
    if (!sieve_first || decision[r.doc.id] == docforge::SieveDecision::Pass) pool.push_back(&r);
  }
  run.summary["records"] = records.size();
  run.summary["order"] = docforge::to_string(run.config.order);
  run.summary["pool"] = pool.size();
  if (pool.empty()) throw Error(ErrorKind::EmptyIndex, "no documents left to sample from");
  const auto c = cluster_records(run, pool);
  const auto s = docforge::stratified_sample(c.index, run.config.sample, docforge::derive_seed(run.args.seed, 12));
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < pool.size(); ++i) pos.emplace(pool[i]->doc.id, i);
  std::size_t emitted = 0;
  std::size_t dropped = 0;
  for (const auto& id : s.ids) {
    if (!sieve_first && decision[id] != docforge::SieveDecision::Pass) {
      ++dropped;
      continue;
    }
    const std::size_t i = pos.at(id);
    Json j = pool[i]->raw;
    j["sample_rank"] = emitted++;
    j["cluster"] = c.model.assignments[i];
    j["density"] = docforge::to_string(c.density[c.model.assignments[i]]);
    emit(run, j);
  }
  Json strata = Json::array();
  for (std::size_t i = 0; i < s.strata.size(); ++i) {
    strata.push_back({{"cluster", s.strata[i].first},
                      {"density", docforge::to_string(c.density[s.strata[i].first])},
                      {"tags", docforge::tags_to_json(s.strata[i].second)},
                      {"size", c.index.strata.at(s.strata[i]).size()},
                      {"weight", s.weights[i]},
                      {"drawn", s.counts[i]}});
  }
  run.summary["strata"] = strata;
  run.summary["emitted"] = emitted;
  run.summary["dropped_after_sampling"] = dropped;
}

void cmd_synth(Run& run, std::optional<std::size_t> count, const std::string& corruption) {
  const auto& so = run.config.synth;
  const std::size_t n = count.value_or(so.count);
  std::optional<docforge::CorruptionKind> kind;
  if (!corruption.empty()) {
    kind = docforge::parse_corruption_kind(corruption);
    if (!kind) throw Error(ErrorKind::ConfigError, "unknown corruption '" + corruption + "'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t base_seed = docforge::derive_seed(run.args.seed, i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t doc_seed = attempt == 0 ? base_seed : docforge::derive_seed(base_seed, 100 + attempt);
      docforge::Rng rng(docforge::derive_seed(doc_seed, 1));
      const std::size_t min_struct = kind ? 1 : 0;
      const auto tables = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(std::min(min_struct, so.max_tables)),
                                                               static_cast<std::int64_t>(std::max(min_struct, so.max_tables))));
      const auto formulas = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(std::min(min_struct, so.max_formulas)),
                                                                 static_cast<std::int64_t>(std::max(min_struct, so.max_formulas))));
      const auto paragraphs = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(so.max_paragraphs)));
      auto doc = docforge::gen_document(tables, formulas, paragraphs, doc_seed);
      doc.id = "synth-" + std::to_string(run.args.seed) + "-" + std::to_string(i);
      doc.reference = doc.markdown;
      Json j = docforge::document_to_json(doc);
      j["tables"] = tables;
      j["formulas"] = formulas;
      j["paragraphs"] = paragraphs;
      if (kind) {
        // Documents without the structure a corruption needs are redrawn from a derived seed.
        std::optional<docforge::CorruptedDocument> c;
        try {
          c = docforge::corrupt(doc, {*kind, docforge::derive_seed(doc_seed, 2)});
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::TargetAbsent || attempt >= 1000) throw;
          continue;
        }
        j["markdown"] = c->doc.markdown;
        j["corruption"] = docforge::to_string(*kind);
        j["target"] = docforge::to_string(c->target);
      }
      emit(run, j);
      break;
    }
  }
  run.summary["records"] = n;
}

void cmd_eval(Run& run) {
  const auto records = read_input(run.args.input);
  double ed = 0.0;
  double ro = 0.0;
  double teds_sum = 0.0;
  double teds_s_sum = 0.0;
  std::size_t with_tables = 0;
  for (const auto& r : records) {
    if (!r.doc.reference) {
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(r.line) + ": eval records need a 'reference'");
    }
    const auto& ref = *r.doc.reference;
    const double e = docforge::normalized_edit_distance(docforge::strip_structure(r.doc.markdown),
                                                        docforge::strip_structure(ref));
    const double o = docforge::reading_order_edit(r.doc.markdown, ref);
    const auto t = docforge::document_teds(r.doc.markdown, ref, false);
    const auto ts = docforge::document_teds(r.doc.markdown, ref, true);
    Json j;
    j["id"] = r.doc.id;
    j["edit_distance"] = e;
    j["reading_order_edit"] = o;
    j["teds"] = t ? Json(*t) : Json(nullptr);
    j["teds_s"] = ts ? Json(*ts) : Json(nullptr);
    emit(run, j);
    ed += e;
    ro += o;
    if (t) {
      teds_sum += *t;
      teds_s_sum += *ts;
      ++with_tables;
    }
  }
  const double n = static_cast<double>(records.size());
  run.summary["records"] = records.size();
  run.summary["edit_distance"] = records.empty() ? Json(nullptr) : Json(ed / n);
  run.summary["reading_order_edit"] = records.empty() ? Json(nullptr) : Json(ro / n);
  run.summary["documents_with_tables"] = with_tables;
  run.summary["teds"] = with_tables ? Json(teds_sum / static_cast<double>(with_tables)) : Json(nullptr);
  run.summary["teds_s"] = with_tables ? Json(teds_s_sum / static_cast<double>(with_tables)) : Json(nullptr);
}

void cmd_grpo_sim(Run& run, std::optional<std::size_t> steps) {
  auto cfg = run.config.grpo;
  if (steps) cfg.steps = *steps;
  const auto result = docforge::run_grpo_simulation(cfg, run.args.seed, [&](const docforge::SimStepRecord& s) {
    emit(run, {{"type", "step"},
               {"step", s.step},
               {"cycle", s.cycle},
               {"mean_reward", s.mean_reward},
               {"objective", s.objective},
               {"kl", s.kl},
               {"validity", s.validity}});
  });
  Json summary = {{"type", "summary"},
                  {"steps", result.steps},
                  {"initial_validity", result.initial_validity},
                  {"pre_grpo_validity", result.pre_grpo_validity},
                  {"final_validity", result.final_validity},
                  {"window_means", docforge::window_means(result.records, 100)}};
  emit(run, summary);
  for (const auto& [key, value] : summary.items()) {
    if (key != "type") run.summary[key] = value;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"docforge: structural rewards, corpus refinery and GRPO toolkit for document OCR output"};
  app.require_subcommand(1);
  CommonArgs args;
  std::string hardcase_path;
  std::string corruption;
  std::optional<std::size_t> count;
  std::optional<std::size_t> steps;

  auto add_common = [&](CLI::App* sub, bool has_input) {
    sub->add_option("--config", args.config_path, "JSON configuration file");
    sub->add_option("--seed", args.seed, "Seed for every random choice");
    if (has_input) sub->add_option("--input", args.input, "Input JSONL path or - for stdin");
    sub->add_option("--output", args.output, "Output JSONL path or - for stdout");
    sub->add_option("--summary", args.summary, "Write a JSON run summary (effective config included) here");
  };

  auto* score = app.add_subcommand("score", "Reward breakdown for every record");
  add_common(score, true);
  auto* sieve = app.add_subcommand("sieve", "Pass / Discard / HardCase verdict for every record");
  add_common(sieve, true);
  sieve->add_option("--hardcase", hardcase_path, "HardCase repository JSONL written here");
  auto* cluster = app.add_subcommand("cluster", "Layout clustering, tagging and strata report");
  add_common(cluster, true);
  auto* sample = app.add_subcommand("sample", "Sieve, index and stratified sampling");
  add_common(sample, true);
  auto* synth = app.add_subcommand("synth", "Generate synthetic documents");
  add_common(synth, false);
  synth->add_option("--count", count, "Number of documents (overrides synth.count)");
  synth->add_option("--corrupt", corruption, "Apply DropCell, RemoveCloser, BreakBrace, InjectGarbage or ShuffleRows");
  auto* eval = app.add_subcommand("eval", "Edit distance and TEDS against references");
  add_common(eval, true);
  auto* grpo = app.add_subcommand("grpo-sim", "Toy-policy SFT/GRPO simulation");
  add_common(grpo, false);
  grpo->add_option("--steps", steps, "GRPO steps (overrides grpo.steps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  Run run;
  run.args = args;
  try {
    run.config = args.config_path.empty() ? Config{} : docforge::load_config(args.config_path);
    run.config.validate();
  } catch (const Error& e) {
    std::cerr << "docforge: " << e.what() << '\n';
    return kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "score") cmd_score(run);
    if (command == "sieve") cmd_sieve(run, hardcase_path);
    if (command == "cluster") cmd_cluster(run);
    if (command == "sample") cmd_sample(run);
    if (command == "synth") cmd_synth(run, count, corruption);
    if (command == "eval") cmd_eval(run);
    if (command == "grpo-sim") cmd_grpo_sim(run, steps);
    write_text(args.output, run.out.str());
    if (!args.summary.empty()) {
      Json s;
      s["command"] = command;
      s["seed"] = args.seed;
      for (const auto& [key, value] : run.summary.items()) s[key] = value;
      s["config"] = docforge::config_to_json(run.config);
      write_text(args.summary, s.dump(2) + "\n");
    }
  } catch (const Error& e) {
    std::cerr << "docforge " << command << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::BadK ? kConfigError : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "docforge " << command << ": " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}
