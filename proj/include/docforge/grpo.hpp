#pragma once

// Group-relative policy optimisation on a tabular autoregressive policy.
//
// Objective for one group of G sampled outputs o_i with advantages A_i:
//   J = 1/G sum_i mean_t min(rho_it A_i, clip(rho_it, 1-eps, 1+eps) A_i) - beta * KL
//   rho_it = exp(logp_new - logp_old)
//   KL     = mean over all tokens of exp(d) - d - 1,  d = logp_ref - logp_new

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docforge/document.hpp"
#include "docforge/error.hpp"
#include "docforge/rng.hpp"

namespace docforge {

struct GrpoHyperparams {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double advantage_guard = 1e-4;

  void validate() const {
    if (group_size < 2) throw Error(ErrorKind::GroupTooSmall, "group size must be at least 2");
    if (!(clip_epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "clip epsilon must be positive");
    if (!(kl_beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "KL weight must be non-negative");
    if (!(advantage_guard > 0.0)) throw Error(ErrorKind::InvalidArgument, "advantage guard must be positive");
  }
};

/// Per-output, per-token log-probabilities.
using SequenceLogProbs = std::vector<std::vector<double>>;

struct GroupRollout {
  std::vector<std::vector<int>> outputs;
  SequenceLogProbs logp_new;
  SequenceLogProbs logp_old;
  SequenceLogProbs logp_ref;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// (R_i - mean) / (std + guard) with the population standard deviation.
/// Constant groups map to all zeros.
inline std::vector<double> group_advantages(std::span<const double> rewards, double guard) {
  if (rewards.size() < 2) throw Error(ErrorKind::GroupTooSmall, "group advantages need at least 2 rewards");
  if (!(guard >= 0.0)) throw Error(ErrorKind::InvalidArgument, "advantage guard must be non-negative");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  std::vector<double> adv(rewards.size(), 0.0);
  if (*lo == *hi) return adv;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stdev = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (stdev + guard);
  return adv;
}

namespace detail {

inline void check_shapes(const SequenceLogProbs& a, const SequenceLogProbs& b, const char* what) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": group sizes differ or are empty");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size() || a[i].empty()) {
      throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": output " + std::to_string(i) +
                                                " has mismatched or empty token sequences");
    }
  }
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace detail

/// Per-token clipped surrogate min(rho*A, clip(rho)*A).
inline double surrogate_token(double logp_new, double logp_old, double advantage, double eps) {
  const double rho = std::exp(logp_new - logp_old);
  return std::min(rho * advantage, detail::clip(rho, 1.0 - eps, 1.0 + eps) * advantage);
}

/// d surrogate_token / d logp_new. Exactly zero on the flat clipped branch.
inline double surrogate_token_grad(double logp_new, double logp_old, double advantage, double eps) {
  const double rho = std::exp(logp_new - logp_old);
  const double unclipped = rho * advantage;
  const double clipped = detail::clip(rho, 1.0 - eps, 1.0 + eps) * advantage;
  // The clipped branch only wins (with zero slope) when rho lies outside the trust region.
  if (clipped < unclipped) return 0.0;
  return unclipped;
}

inline double clipped_surrogate(const SequenceLogProbs& logp_new, const SequenceLogProbs& logp_old,
                                std::span<const double> advantages, double eps) {
  detail::check_shapes(logp_new, logp_old, "clipped_surrogate");
  if (advantages.size() != logp_new.size()) {
    throw Error(ErrorKind::ShapeMismatch, "clipped_surrogate: one advantage per output required");
  }
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "clip epsilon must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    double seq = 0.0;
    for (std::size_t t = 0; t < logp_new[i].size(); ++t) {
      seq += surrogate_token(logp_new[i][t], logp_old[i][t], advantages[i], eps);
    }
    total += seq / static_cast<double>(logp_new[i].size());
  }
  return total / static_cast<double>(logp_new.size());
}

inline double kl_token(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::exp(d) - d - 1.0;
}

inline double kl_penalty(const SequenceLogProbs& logp_new, const SequenceLogProbs& logp_ref) {
  detail::check_shapes(logp_new, logp_ref, "kl_penalty");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    for (std::size_t t = 0; t < logp_new[i].size(); ++t) {
      total += kl_token(logp_new[i][t], logp_ref[i][t]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double grpo_objective(const GroupRollout& r, const GrpoHyperparams& h) {
  const double surrogate = clipped_surrogate(r.logp_new, r.logp_old, r.advantages, h.clip_epsilon);
  if (h.kl_beta == 0.0) return surrogate;
  return surrogate - h.kl_beta * kl_penalty(r.logp_new, r.logp_ref);
}

/// dJ/d logp_new for every token of every output.
inline SequenceLogProbs grpo_objective_logp_grad(const GroupRollout& r, const GrpoHyperparams& h) {
  detail::check_shapes(r.logp_new, r.logp_old, "grpo_objective_logp_grad");
  detail::check_shapes(r.logp_new, r.logp_ref, "grpo_objective_logp_grad");
  std::size_t tokens = 0;
  for (const auto& seq : r.logp_new) tokens += seq.size();
  const double g = static_cast<double>(r.logp_new.size());
  SequenceLogProbs grad(r.logp_new.size());
  for (std::size_t i = 0; i < r.logp_new.size(); ++i) {
    const double len = static_cast<double>(r.logp_new[i].size());
    grad[i].resize(r.logp_new[i].size());
    for (std::size_t t = 0; t < r.logp_new[i].size(); ++t) {
      const double s = surrogate_token_grad(r.logp_new[i][t], r.logp_old[i][t], r.advantages[i], h.clip_epsilon);
      // d/dlogp_new of exp(d) - d - 1 with d = ref - new is 1 - exp(d).
      const double k = 1.0 - std::exp(r.logp_ref[i][t] - r.logp_new[i][t]);
      grad[i][t] = s / (len * g) - h.kl_beta * k / static_cast<double>(tokens);
    }
  }
  return grad;
}

/// Token inventory of the toy policy. Token 0 is end-of-sequence and decodes to "".
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw Error(ErrorKind::InvalidArgument, "vocabulary must contain end-of-sequence");
    tokens_[0].clear();
    for (std::size_t i = 1; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw Error(ErrorKind::InvalidArgument, "only end-of-sequence may be empty");
      for (std::size_t j = 1; j < i; ++j) {
        if (tokens_[i] == tokens_[j]) throw Error(ErrorKind::InvalidArgument, "duplicate token " + tokens_[i]);
      }
    }
  }

  static constexpr int kEos = 0;

  std::size_t size() const { return tokens_.size(); }
  const std::string& text(int token) const { return tokens_.at(static_cast<std::size_t>(token)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string decode(std::span<const int> seq) const {
    std::string out;
    for (int t : seq) {
      if (t < 0 || static_cast<std::size_t>(t) >= tokens_.size()) {
        throw Error(ErrorKind::UnknownToken, "token id " + std::to_string(t) + " outside the vocabulary");
      }
      out += tokens_[static_cast<std::size_t>(t)];
    }
    return out;
  }

  /// Greedy longest-match tokenisation; appends end-of-sequence.
  std::vector<int> tokenize(std::string_view text) const {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      int best = -1;
      std::size_t best_len = 0;
      for (std::size_t t = 1; t < tokens_.size(); ++t) {
        const auto& tok = tokens_[t];
        if (tok.size() > best_len && text.substr(pos, tok.size()) == tok) {
          best = static_cast<int>(t);
          best_len = tok.size();
        }
      }
      if (best < 0) {
        throw Error(ErrorKind::UnknownToken, "cannot tokenize at byte " + std::to_string(pos));
      }
      out.push_back(best);
      pos += best_len;
    }
    out.push_back(kEos);
    return out;
  }

 private:
  std::vector<std::string> tokens_;
};

/// Structural tokens used by the desk-scale simulation.
inline Vocabulary default_toy_vocabulary() {
  return Vocabulary({"<eos>", "| ",  " | ",   " |",    "\n",   "|---|", "|---|---|", "|---|---|---|",
                     "a",     "b",   "c",     "x",     "y",    "1",     "2",         "3",
                     "42",    "total", "**",  "$",     "\\frac{", "}",  "{",         "<td>",
                     "</td>", "# ", " ",     "-",     "^"});
}

/// Tabular logits keyed by a context derived from the previous token.
class ToyPolicy {
 public:
  /// `context_of[t]` is the context after token t; `context_of[V]` is the start context.
  ToyPolicy(Vocabulary vocab, std::size_t num_contexts, std::vector<std::size_t> context_of)
      : vocab_(std::move(vocab)), num_contexts_(num_contexts), context_of_(std::move(context_of)),
        logits_(num_contexts_ * vocab_.size(), 0.0) {
    if (context_of_.size() != vocab_.size() + 1) {
      throw Error(ErrorKind::ShapeMismatch, "context map must cover every token plus the start context");
    }
    for (std::size_t c : context_of_) {
      if (c >= num_contexts_) throw Error(ErrorKind::ShapeMismatch, "context index out of range");
    }
  }

  /// One context per preceding token plus a start context.
  static ToyPolicy bigram(Vocabulary vocab) {
    const std::size_t v = vocab.size();
    std::vector<std::size_t> ctx(v + 1);
    std::iota(ctx.begin(), ctx.end(), 0);
    return ToyPolicy(std::move(vocab), v + 1, std::move(ctx));
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t num_contexts() const { return num_contexts_; }

  std::size_t start_context() const { return context_of_.back(); }
  std::size_t context_after(int token) const { return context_of_.at(static_cast<std::size_t>(token)); }

  std::span<double> logits(std::size_t ctx) { return {logits_.data() + ctx * vocab_.size(), vocab_.size()}; }
  std::span<const double> logits(std::size_t ctx) const {
    return {logits_.data() + ctx * vocab_.size(), vocab_.size()};
  }
  std::vector<double>& parameters() { return logits_; }
  const std::vector<double>& parameters() const { return logits_; }

  std::vector<double> probabilities(std::size_t ctx) const {
    const auto z = logits(ctx);
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p[j] = std::exp(z[j] - mx);
      sum += p[j];
    }
    for (double& x : p) x /= sum;
    return p;
  }

  double log_prob(std::size_t ctx, int token) const {
    const auto z = logits(ctx);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double x : z) sum += std::exp(x - mx);
    return z[static_cast<std::size_t>(token)] - mx - std::log(sum);
  }

  /// Contexts seen by each token of `seq`, which continues `prompt`.
  std::vector<std::size_t> contexts(std::span<const int> seq, std::span<const int> prompt = {}) const {
    std::vector<std::size_t> ctx(seq.size());
    std::size_t c = prompt.empty() ? start_context() : context_after(prompt.back());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      ctx[t] = c;
      c = context_after(seq[t]);
    }
    return ctx;
  }

  std::vector<double> sequence_log_probs(std::span<const int> seq, std::span<const int> prompt = {}) const {
    check_tokens(seq);
    const auto ctx = contexts(seq, prompt);
    std::vector<double> lp(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) lp[t] = log_prob(ctx[t], seq[t]);
    return lp;
  }

  void check_tokens(std::span<const int> seq) const {
    for (int t : seq) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) {
        throw Error(ErrorKind::UnknownToken, "token id " + std::to_string(t) + " outside the vocabulary");
      }
    }
  }

 private:
  Vocabulary vocab_;
  std::size_t num_contexts_;
  std::vector<std::size_t> context_of_;
  std::vector<double> logits_;
};

struct SamplingParams {
  std::size_t top_k = 50;  // capped at the vocabulary size
  double top_p = 0.99;
};

struct SampledSequence {
  std::vector<int> tokens;
  /// Log-probabilities under the full (untruncated) policy distribution.
  std::vector<double> log_probs;
};

/// Autoregressive top-k / nucleus sampling; deterministic given the seed.
/// Stops after end-of-sequence or `max_len` tokens.
inline SampledSequence policy_sample(const ToyPolicy& policy, std::size_t max_len, std::uint64_t seed,
                                     const SamplingParams& params = {}, std::span<const int> prompt = {}) {
  if (max_len < 1) throw Error(ErrorKind::InvalidArgument, "max_len must be at least 1");
  Rng rng(seed);
  SampledSequence out;
  std::size_t ctx = prompt.empty() ? policy.start_context() : policy.context_after(prompt.back());
  const std::size_t v = policy.vocab_size();
  const std::size_t k = std::max<std::size_t>(1, std::min(params.top_k, v));
  std::vector<std::size_t> order(v);
  while (out.tokens.size() < max_len) {
    const auto p = policy.probabilities(ctx);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < k) {
      mass += p[order[keep]];
      ++keep;
      if (mass >= params.top_p) break;
    }
    double u = rng.uniform() * mass;
    std::size_t pick = order[keep - 1];
    for (std::size_t j = 0; j < keep; ++j) {
      u -= p[order[j]];
      if (u < 0.0) {
        pick = order[j];
        break;
      }
    }
    const int token = static_cast<int>(pick);
    out.tokens.push_back(token);
    out.log_probs.push_back(std::log(p[pick]));
    if (token == Vocabulary::kEos) break;
    ctx = policy.context_after(token);
  }
  return out;
}

/// Chains dJ/dlogp through log-softmax: dlogp(a|c)/dz[c][j] = [j == a] - p_c[j].
inline std::vector<double> logit_gradient(const ToyPolicy& policy, const std::vector<std::vector<int>>& outputs,
                                          const SequenceLogProbs& dlogp, std::span<const int> prompt = {}) {
  std::vector<double> grad(policy.parameters().size(), 0.0);
  const std::size_t v = policy.vocab_size();
  std::vector<std::vector<double>> probs(policy.num_contexts());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto ctx = policy.contexts(outputs[i], prompt);
    for (std::size_t t = 0; t < outputs[i].size(); ++t) {
      const std::size_t c = ctx[t];
      if (probs[c].empty()) probs[c] = policy.probabilities(c);
      const double g = dlogp[i][t];
      if (g == 0.0) continue;
      double* row = grad.data() + c * v;
      for (std::size_t j = 0; j < v; ++j) row[j] -= g * probs[c][j];
      row[static_cast<std::size_t>(outputs[i][t])] += g;
    }
  }
  return grad;
}

/// Mean over targets of the sequence log-likelihood.
inline double sft_objective(const ToyPolicy& policy, const std::vector<std::vector<int>>& targets) {
  if (targets.empty()) return 0.0;
  double total = 0.0;
  for (const auto& seq : targets) {
    for (double lp : policy.sequence_log_probs(seq)) total += lp;
  }
  return total / static_cast<double>(targets.size());
}

inline std::vector<double> sft_gradient(const ToyPolicy& policy, const std::vector<std::vector<int>>& targets) {
  if (targets.empty()) return std::vector<double>(policy.parameters().size(), 0.0);
  SequenceLogProbs dlogp(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    policy.check_tokens(targets[i]);
    dlogp[i].assign(targets[i].size(), 1.0 / static_cast<double>(targets.size()));
  }
  return logit_gradient(policy, targets, dlogp);
}

/// One gradient-ascent step on the mean target log-likelihood.
inline void sft_step(ToyPolicy& policy, const std::vector<std::vector<int>>& targets, double learning_rate) {
  if (targets.empty()) return;
  const auto grad = sft_gradient(policy, targets);
  auto& params = policy.parameters();
  for (std::size_t j = 0; j < params.size(); ++j) params[j] += learning_rate * grad[j];
}

inline std::vector<std::vector<int>> tokenize_targets(const Vocabulary& vocab, std::span<const std::string> texts) {
  std::vector<std::vector<int>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vocab.tokenize(t));
  return out;
}

/// Rollout log-probabilities of `rollout.outputs` under `policy`.
inline SequenceLogProbs rollout_log_probs(const ToyPolicy& policy, const std::vector<std::vector<int>>& outputs,
                                          std::span<const int> prompt = {}) {
  SequenceLogProbs lp;
  lp.reserve(outputs.size());
  for (const auto& seq : outputs) lp.push_back(policy.sequence_log_probs(seq, prompt));
  return lp;
}

/// Value and logit gradient of the GRPO objective at the current policy,
/// holding the sampled outputs, old/reference log-probs and advantages fixed.
struct ObjectiveEval {
  double value = 0.0;
  double kl = 0.0;
  std::vector<double> gradient;
};

inline ObjectiveEval grpo_objective_and_gradient(const ToyPolicy& policy, GroupRollout& rollout,
                                                 const GrpoHyperparams& h, std::span<const int> prompt = {}) {
  rollout.logp_new = rollout_log_probs(policy, rollout.outputs, prompt);
  ObjectiveEval ev;
  ev.value = grpo_objective(rollout, h);
  ev.kl = kl_penalty(rollout.logp_new, rollout.logp_ref);
  ev.gradient = logit_gradient(policy, rollout.outputs, grpo_objective_logp_grad(rollout, h), prompt);
  return ev;
}

struct GrpoStepConfig {
  GrpoHyperparams hyper;
  double learning_rate = 2.0;
  std::size_t max_len = 32;
  SamplingParams sampling;
  /// Gradient steps taken on each sampled group (the old policy stays fixed).
  std::size_t inner_updates = 1;
};

struct StepStats {
  double mean_reward = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  std::vector<double> rewards;
  std::vector<std::string> outputs;
};

using RewardFn = std::function<double(const Document&)>;

/// Samples a group from the current policy, scores it, and ascends the GRPO
/// objective. The policy is written only after every rollout is scored.
inline StepStats grpo_train_step(ToyPolicy& policy, const ToyPolicy& reference, std::span<const int> prompt,
                                 const RewardFn& reward_fn, const GrpoStepConfig& cfg, std::uint64_t seed) {
  cfg.hyper.validate();
  const std::size_t g = cfg.hyper.group_size;
  GroupRollout rollout;
  StepStats stats;
  for (std::size_t i = 0; i < g; ++i) {
    auto sample = policy_sample(policy, cfg.max_len, derive_seed(seed, i), cfg.sampling, prompt);
    Document doc;
    doc.id = "rollout-" + std::to_string(i);
    doc.markdown = policy.vocabulary().decode(sample.tokens);
    rollout.rewards.push_back(reward_fn(doc));
    stats.outputs.push_back(std::move(doc.markdown));
    rollout.outputs.push_back(std::move(sample.tokens));
  }
  rollout.logp_old = rollout_log_probs(policy, rollout.outputs, prompt);
  rollout.logp_ref = rollout_log_probs(reference, rollout.outputs, prompt);
  rollout.advantages = group_advantages(rollout.rewards, cfg.hyper.advantage_guard);

  for (std::size_t u = 0; u < std::max<std::size_t>(1, cfg.inner_updates); ++u) {
    const auto ev = grpo_objective_and_gradient(policy, rollout, cfg.hyper, prompt);
    auto& params = policy.parameters();
    for (std::size_t j = 0; j < params.size(); ++j) params[j] += cfg.learning_rate * ev.gradient[j];
  }
  rollout.logp_new = rollout_log_probs(policy, rollout.outputs, prompt);
  stats.objective = grpo_objective(rollout, cfg.hyper);
  stats.kl = kl_penalty(rollout.logp_new, rollout.logp_ref);
  stats.rewards = rollout.rewards;
  stats.mean_reward =
      std::accumulate(rollout.rewards.begin(), rollout.rewards.end(), 0.0) / static_cast<double>(g);
  return stats;
}

}  // namespace docforge
