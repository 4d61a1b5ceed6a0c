#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "docforge/error.hpp"
#include "docforge/refinery.hpp"
#include "docforge/reward.hpp"
#include "docforge/simulation.hpp"

namespace docforge {

using Json = nlohmann::ordered_json;

struct ClusterOptions {
  std::size_t k = 4;
  std::size_t max_iters = 100;
  double dense_factor = 2.0;
  double rare_factor = 0.5;
};

enum class PipelineOrder { SieveThenSample, SampleThenSieve };

struct SynthOptions {
  std::size_t count = 100;
  std::size_t max_tables = 2;
  std::size_t max_formulas = 2;
  std::size_t max_paragraphs = 3;
};

/// Effective run configuration. Every field has a default; a config file may
/// override any subset but may not introduce unknown keys.
struct Config {
  RewardWeights weights;
  double closure_constant = 0.2;
  SieveOptions sieve;
  ClusterOptions cluster;
  SampleOptions sample;
  PipelineOrder order = PipelineOrder::SieveThenSample;
  SimConfig grpo;
  SynthOptions synth;

  void validate() const {
    try {
      weights.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, e.message());
    }
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw Error(ErrorKind::ConfigError, msg);
    };
    require(closure_constant > 0.0, "reward.closure_constant must be positive");
    require(sieve.max_non_printable >= 0.0 && sieve.max_non_printable <= 1.0, "sieve.max_non_printable must lie in [0, 1]");
    require(sieve.max_repetition >= 0.0 && sieve.max_repetition <= 1.0, "sieve.max_repetition must lie in [0, 1]");
    require(cluster.k >= 1, "cluster.k must be at least 1");
    require(cluster.dense_factor > 1.0, "cluster.dense_factor must exceed 1");
    require(cluster.rare_factor > 0.0 && cluster.rare_factor < 1.0, "cluster.rare_factor must lie in (0, 1)");
    require(sample.n_out >= 1, "sample.n_out must be at least 1");
    require(sample.rare_boost >= 1.0, "sample.rare_boost must be at least 1");
    require(sample.dense_cap > 0.0 && sample.dense_cap <= 1.0, "sample.dense_cap must lie in (0, 1]");
    require(grpo.step.sampling.top_k >= 1, "grpo.top_k must be at least 1");
    require(grpo.step.sampling.top_p > 0.0 && grpo.step.sampling.top_p <= 1.0, "grpo.top_p must lie in (0, 1]");
    try {
      grpo.validate();
      Vocabulary v(grpo.vocabulary);
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, std::string("grpo: ") + e.message());
    }
    require(synth.max_paragraphs >= 1, "synth.max_paragraphs must be at least 1");
  }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::ConfigError, where() + " must be an object");
    for (const auto& [key, value] : j_.items()) keys_.insert(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    keys_.erase(key);
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t>) {
        if (!v.is_number_unsigned()) throw Error(ErrorKind::ConfigError, "");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw Error(ErrorKind::ConfigError, "");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw Error(ErrorKind::ConfigError, "");
      }
      out = v.template get<T>();
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, where() + "." + key + " has the wrong type");
    }
  }

  ConfigReader child(const char* key) {
    keys_.erase(key);
    static const Json empty = Json::object();
    return ConfigReader(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }
  void take(const char* key) { keys_.erase(key); }
  const Json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    if (!keys_.empty()) throw Error(ErrorKind::ConfigError, "unknown key " + where() + "." + *keys_.begin());
  }

 private:
  std::string where() const { return path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> keys_;
};

}  // namespace detail

inline std::string to_string(PipelineOrder o) {
  return o == PipelineOrder::SieveThenSample ? "sieve_then_sample" : "sample_then_sieve";
}

inline Config config_from_json(const Json& j) {
  Config c;
  detail::ConfigReader root(j, "config");
  {
    auto r = root.child("reward");
    auto w = r.child("weights");
    w.get("syntax", c.weights.syntax);
    w.get("closure", c.weights.closure);
    w.get("table", c.weights.table);
    w.get("text", c.weights.text);
    w.finish();
    r.get("closure_constant", c.closure_constant);
    r.finish();
  }
  {
    auto s = root.child("sieve");
    s.get("max_non_printable", c.sieve.max_non_printable);
    s.get("max_repetition", c.sieve.max_repetition);
    s.finish();
  }
  {
    auto k = root.child("cluster");
    k.get("k", c.cluster.k);
    k.get("max_iters", c.cluster.max_iters);
    k.get("dense_factor", c.cluster.dense_factor);
    k.get("rare_factor", c.cluster.rare_factor);
    k.finish();
  }
  {
    auto s = root.child("sample");
    s.get("n_out", c.sample.n_out);
    s.get("rare_boost", c.sample.rare_boost);
    s.get("dense_cap", c.sample.dense_cap);
    std::string order = to_string(c.order);
    s.get("order", order);
    if (order == "sieve_then_sample") {
      c.order = PipelineOrder::SieveThenSample;
    } else if (order == "sample_then_sieve") {
      c.order = PipelineOrder::SampleThenSieve;
    } else {
      throw Error(ErrorKind::ConfigError, "sample.order must be sieve_then_sample or sample_then_sieve");
    }
    s.finish();
  }
  {
    auto g = root.child("grpo");
    auto& h = c.grpo.step.hyper;
    g.get("group_size", h.group_size);
    g.get("clip_epsilon", h.clip_epsilon);
    g.get("kl_beta", h.kl_beta);
    g.get("advantage_guard", h.advantage_guard);
    g.get("learning_rate", c.grpo.step.learning_rate);
    g.get("inner_updates", c.grpo.step.inner_updates);
    g.get("max_len", c.grpo.step.max_len);
    g.get("top_k", c.grpo.step.sampling.top_k);
    g.get("top_p", c.grpo.step.sampling.top_p);
    g.get("steps", c.grpo.steps);
    g.get("cycles", c.grpo.cycles);
    g.get("sft_steps", c.grpo.sft_steps);
    g.get("sft_learning_rate", c.grpo.sft_learning_rate);
    g.get("sft_targets", c.grpo.sft_targets);
    g.get("eval_samples", c.grpo.eval_samples);
    g.get("reference_refresh", c.grpo.reference_refresh);
    std::string reward = to_string(c.grpo.reward);
    g.get("reward", reward);
    c.grpo.reward = parse_sim_reward(reward);
    if (g.has("vocabulary")) {
      const auto& v = g.at("vocabulary");
      g.take("vocabulary");
      if (!v.is_array() || v.empty()) throw Error(ErrorKind::ConfigError, "grpo.vocabulary must be a non-empty array");
      c.grpo.vocabulary.clear();
      for (const auto& t : v) {
        if (!t.is_string()) throw Error(ErrorKind::ConfigError, "grpo.vocabulary entries must be strings");
        c.grpo.vocabulary.push_back(t.get<std::string>());
      }
    }
    g.finish();
  }
  {
    auto s = root.child("synth");
    s.get("count", c.synth.count);
    s.get("max_tables", c.synth.max_tables);
    s.get("max_formulas", c.synth.max_formulas);
    s.get("max_paragraphs", c.synth.max_paragraphs);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline Json config_to_json(const Config& c) {
  Json j;
  j["reward"]["weights"] = {{"syntax", c.weights.syntax},
                            {"closure", c.weights.closure},
                            {"table", c.weights.table},
                            {"text", c.weights.text}};
  j["reward"]["closure_constant"] = c.closure_constant;
  j["sieve"] = {{"max_non_printable", c.sieve.max_non_printable}, {"max_repetition", c.sieve.max_repetition}};
  j["cluster"] = {{"k", c.cluster.k},
                  {"max_iters", c.cluster.max_iters},
                  {"dense_factor", c.cluster.dense_factor},
                  {"rare_factor", c.cluster.rare_factor}};
  j["sample"] = {{"n_out", c.sample.n_out},
                 {"rare_boost", c.sample.rare_boost},
                 {"dense_cap", c.sample.dense_cap},
                 {"order", to_string(c.order)}};
  const auto& h = c.grpo.step.hyper;
  j["grpo"] = {{"group_size", h.group_size},
               {"clip_epsilon", h.clip_epsilon},
               {"kl_beta", h.kl_beta},
               {"advantage_guard", h.advantage_guard},
               {"learning_rate", c.grpo.step.learning_rate},
               {"inner_updates", c.grpo.step.inner_updates},
               {"max_len", c.grpo.step.max_len},
               {"top_k", c.grpo.step.sampling.top_k},
               {"top_p", c.grpo.step.sampling.top_p},
               {"steps", c.grpo.steps},
               {"cycles", c.grpo.cycles},
               {"sft_steps", c.grpo.sft_steps},
               {"sft_learning_rate", c.grpo.sft_learning_rate},
               {"sft_targets", c.grpo.sft_targets},
               {"eval_samples", c.grpo.eval_samples},
               {"reference_refresh", c.grpo.reference_refresh},
               {"reward", to_string(c.grpo.reward)},
               {"vocabulary", c.grpo.vocabulary}};
  j["synth"] = {{"count", c.synth.count},
                {"max_tables", c.synth.max_tables},
                {"max_formulas", c.synth.max_formulas},
                {"max_paragraphs", c.synth.max_paragraphs}};
  return j;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace docforge
