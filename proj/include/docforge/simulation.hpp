#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "docforge/grpo.hpp"
#include "docforge/reward.hpp"
#include "docforge/rng.hpp"
#include "docforge/structure.hpp"

namespace docforge {

/// True when the text holds at least one table and every table is rectangular.
inline bool has_valid_table(std::string_view markdown) {
  const auto tables = extract_tables(markdown);
  if (tables.empty()) return false;
  return std::all_of(tables.begin(), tables.end(), [](const TableGrid& t) { return is_rectangular(t); });
}

enum class SimReward { TableValidity, TableReward };

inline std::string to_string(SimReward r) { return r == SimReward::TableValidity ? "table_validity" : "r_table"; }

inline SimReward parse_sim_reward(std::string_view s) {
  if (s == "table_validity") return SimReward::TableValidity;
  if (s == "r_table") return SimReward::TableReward;
  throw Error(ErrorKind::ConfigError, "unknown simulation reward '" + std::string(s) + "'");
}

inline RewardFn sim_reward_fn(SimReward kind) {
  if (kind == SimReward::TableReward) return [](const Document& d) { return reward_table(d.markdown); };
  return [](const Document& d) { return has_valid_table(d.markdown) ? 1.0 : 0.0; };
}

struct SimConfig {
  GrpoStepConfig step;
  std::size_t steps = 500;
  /// Number of alternating SFT/GRPO cycles; GRPO steps are split evenly across them.
  std::size_t cycles = 1;
  std::size_t sft_steps = 100;
  double sft_learning_rate = 0.5;
  std::size_t sft_targets = 24;
  std::size_t eval_samples = 400;
  /// GRPO steps between reference-policy refreshes (0 keeps the post-SFT reference).
  std::size_t reference_refresh = 100;
  SimReward reward = SimReward::TableValidity;
  std::vector<std::string> vocabulary = default_toy_vocabulary().tokens();

  void validate() const {
    step.hyper.validate();
    if (!(step.learning_rate > 0.0)) throw Error(ErrorKind::ConfigError, "learning rate must be positive");
    if (!(sft_learning_rate >= 0.0)) throw Error(ErrorKind::ConfigError, "SFT learning rate must be non-negative");
    if (cycles < 1) throw Error(ErrorKind::ConfigError, "cycles must be at least 1");
    if (eval_samples < 1) throw Error(ErrorKind::ConfigError, "eval_samples must be at least 1");
    if (step.max_len < 1) throw Error(ErrorKind::ConfigError, "max_len must be at least 1");
  }
};

struct SimStepRecord {
  std::size_t step = 0;
  std::size_t cycle = 0;
  double mean_reward = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  double validity = 0.0;  // fraction of the step's group holding a valid table
};

struct SimSummary {
  double initial_validity = 0.0;
  double pre_grpo_validity = 0.0;
  double final_validity = 0.0;
  std::size_t steps = 0;
  std::vector<SimStepRecord> records;
};

/// Fraction of `n` fresh samples that decode to a valid table.
inline double measure_validity(const ToyPolicy& policy, std::size_t n, std::size_t max_len, std::uint64_t seed,
                               const SamplingParams& sampling = {}) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = policy_sample(policy, max_len, derive_seed(seed, i), sampling);
    if (has_valid_table(policy.vocabulary().decode(s.tokens))) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(n);
}

/// Random small pipe tables (1-3 columns, 0-2 body rows) written in the toy vocabulary.
inline std::vector<std::string> sft_table_targets(std::size_t count, std::uint64_t seed) {
  static const char* atoms[] = {"a", "b", "c", "x", "y", "1", "2", "3", "42", "total"};
  static const char* seps[] = {"|---|", "|---|---|", "|---|---|---|"};
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto cols = static_cast<std::size_t>(rng.between(1, 3));
    const auto body = static_cast<std::size_t>(rng.between(0, 2));
    auto row = [&] {
      std::string r = "| ";
      for (std::size_t c = 0; c < cols; ++c) {
        if (c) r += " | ";
        r += atoms[rng.below(std::size(atoms))];
      }
      return r + " |";
    };
    std::string t = row() + "\n" + seps[cols - 1];
    for (std::size_t b = 0; b < body; ++b) t += "\n" + row();
    out.push_back(std::move(t));
  }
  return out;
}

using SimObserver = std::function<void(const SimStepRecord&)>;

/// Iterative SFT-GRPO on a bigram toy policy. With zero steps the policy is
/// left untouched and every validity figure is the untrained one.
inline SimSummary run_grpo_simulation(const SimConfig& cfg, std::uint64_t seed, const SimObserver& observe = {}) {
  cfg.validate();
  ToyPolicy policy = ToyPolicy::bigram(Vocabulary(cfg.vocabulary));
  const auto targets = tokenize_targets(policy.vocabulary(), sft_table_targets(cfg.sft_targets, derive_seed(seed, 1)));
  const auto reward_fn = sim_reward_fn(cfg.reward);
  const std::uint64_t eval_seed = derive_seed(seed, 2);

  SimSummary summary;
  summary.initial_validity = measure_validity(policy, cfg.eval_samples, cfg.step.max_len, eval_seed, cfg.step.sampling);
  summary.pre_grpo_validity = summary.initial_validity;
  summary.steps = cfg.steps;
  if (cfg.steps == 0) {
    summary.final_validity = summary.initial_validity;
    return summary;
  }

  const std::size_t cycles = std::min(cfg.cycles, cfg.steps);
  std::size_t step = 0;
  for (std::size_t cycle = 0; cycle < cycles; ++cycle) {
    for (std::size_t s = 0; s < cfg.sft_steps; ++s) sft_step(policy, targets, cfg.sft_learning_rate);
    if (cycle == 0) {
      summary.pre_grpo_validity =
          measure_validity(policy, cfg.eval_samples, cfg.step.max_len, eval_seed, cfg.step.sampling);
    }
    ToyPolicy reference = policy;
    const std::size_t quota = cfg.steps / cycles + (cycle + 1 == cycles ? cfg.steps % cycles : 0);
    for (std::size_t s = 0; s < quota; ++s, ++step) {
      if (cfg.reference_refresh > 0 && s > 0 && s % cfg.reference_refresh == 0) reference = policy;
      const auto stats = grpo_train_step(policy, reference, {}, reward_fn, cfg.step, derive_seed(derive_seed(seed, 3), step));
      SimStepRecord rec;
      rec.step = step;
      rec.cycle = cycle;
      rec.mean_reward = stats.mean_reward;
      rec.objective = stats.objective;
      rec.kl = stats.kl;
      std::size_t ok = 0;
      for (const auto& text : stats.outputs) ok += has_valid_table(text) ? 1 : 0;
      rec.validity = static_cast<double>(ok) / static_cast<double>(stats.outputs.size());
      if (observe) observe(rec);
      summary.records.push_back(rec);
    }
  }
  summary.final_validity = measure_validity(policy, cfg.eval_samples, cfg.step.max_len, eval_seed, cfg.step.sampling);
  return summary;
}

/// Means of consecutive non-overlapping windows of `window` steps (a trailing partial window is dropped).
inline std::vector<double> window_means(const std::vector<SimStepRecord>& records, std::size_t window) {
  std::vector<double> out;
  if (window == 0) return out;
  for (std::size_t start = 0; start + window <= records.size(); start += window) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + window; ++i) sum += records[i].mean_reward;
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

}  // namespace docforge
