#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "docforge/grpo.hpp"
#include "docforge/rng.hpp"
#include "docforge/simulation.hpp"

using namespace docforge;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

// Vocabulary {eos, a, b}; context 0 at the start and after eos, context 1 after a or b.
ToyPolicy tiny_policy(Rng& rng, double scale = 1.0) {
  ToyPolicy p(Vocabulary({"<eos>", "a", "b"}), 2, {0, 1, 1, 0});
  for (double& z : p.parameters()) z = rng.uniform(-scale, scale);
  return p;
}

std::vector<std::vector<int>> random_outputs(Rng& rng, std::size_t g) {
  std::vector<std::vector<int>> out(g);
  for (auto& seq : out) {
    const auto len = rng.between(1, 5);
    for (std::int64_t t = 0; t + 1 < len; ++t) seq.push_back(static_cast<int>(rng.between(1, 2)));
    seq.push_back(0);
  }
  return out;
}

// Vector relative error ||a - b|| / max(||a||, ||b||), with an absolute floor.
double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

template <typename F>
std::vector<double> central_difference(ToyPolicy& policy, F objective, double h = 1e-5) {
  auto& params = policy.parameters();
  std::vector<double> g(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double saved = params[j];
    params[j] = saved + h;
    const double up = objective(policy);
    params[j] = saved - h;
    const double down = objective(policy);
    params[j] = saved;
    g[j] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Advantages

TEST(GroupAdvantages, ConstantGroup) {
  const std::vector<double> r{2, 2, 2};
  EXPECT_EQ(group_advantages(r, 1e-4), (std::vector<double>{0, 0, 0}));
}

TEST(GroupAdvantages, ThreeRewards) {
  const std::vector<double> r{1, 2, 3};
  const auto a = group_advantages(r, 0.0);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(a[0], -1.2247, 1e-3);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  EXPECT_NEAR(a[2], 1.2247, 1e-3);
  EXPECT_NEAR(a[2], 1.0 / s, 1e-12);
}

TEST(GroupAdvantages, TwoRewards) {
  const std::vector<double> r{0, 1};
  const auto a = group_advantages(r, 0.0);
  EXPECT_NEAR(a[0], -1.0, 1e-9);
  EXPECT_NEAR(a[1], 1.0, 1e-9);
}

TEST(GroupAdvantages, GuardShrinksMagnitude) {
  const std::vector<double> r{0, 1};
  const auto a = group_advantages(r, 0.5);
  EXPECT_NEAR(a[1], 0.5 / (0.5 + 0.5), 1e-12);
}

TEST(GroupAdvantages, TooSmall) {
  const std::vector<double> r{1.0};
  try {
    group_advantages(r, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GroupTooSmall);
  }
}

TEST(GroupAdvantages, NormalisedAndAffineInvariant) {
  Rng rng(17);
  for (int n = 0; n < 2000; ++n) {
    const auto g = static_cast<std::size_t>(rng.between(2, 64));
    std::vector<double> r(g);
    for (double& x : r) x = rng.normal() * 3 + 1;
    const auto a = group_advantages(r, 0.0);
    EXPECT_LE(std::abs(mean(a)), 1e-9);
    EXPECT_NEAR(pop_std(a), 1.0, 1e-6);
    const double scale = rng.uniform(0.1, 10.0), shift = rng.uniform(-5, 5);
    std::vector<double> r2(g);
    for (std::size_t i = 0; i < g; ++i) r2[i] = scale * r[i] + shift;
    const auto a2 = group_advantages(r2, 0.0);
    for (std::size_t i = 0; i < g; ++i) EXPECT_NEAR(a2[i], a[i], 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Surrogate and KL

TEST(ClippedSurrogate, OnPolicyEqualsMeanAdvantage) {
  const SequenceLogProbs lp{{-0.5, -1.0}, {-0.2}, {-2.0, -0.1, -0.3}};
  const std::vector<double> adv{0.4, -1.3, 2.0};
  EXPECT_NEAR(clipped_surrogate(lp, lp, adv, 0.2), (0.4 - 1.3 + 2.0) / 3.0, 1e-15);
}

TEST(ClippedSurrogate, ClipsLargeRatio) {
  const SequenceLogProbs lnew{{std::log(1.5)}}, lold{{0.0}};
  const std::vector<double> adv{1.0};
  EXPECT_NEAR(clipped_surrogate(lnew, lold, adv, 0.2), 1.2, 1e-12);
}

TEST(ClippedSurrogate, ClipsSmallRatioWithNegativeAdvantage) {
  const SequenceLogProbs lnew{{std::log(0.5)}}, lold{{0.0}};
  const std::vector<double> adv{-1.0};
  EXPECT_NEAR(clipped_surrogate(lnew, lold, adv, 0.2), -0.8, 1e-12);
}

TEST(ClippedSurrogate, ShapeMismatch) {
  const SequenceLogProbs a{{-1.0, -1.0}}, b{{-1.0}};
  const std::vector<double> adv{1.0};
  try {
    clipped_surrogate(a, b, adv, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(clipped_surrogate(a, a, two, 0.2), Error);
}

TEST(KlPenalty, Values) {
  const SequenceLogProbs a{{-0.3, -1.2}};
  EXPECT_EQ(kl_penalty(a, a), 0.0);
  const SequenceLogProbs lnew{{0.0}}, lref{{std::log(2.0)}};
  EXPECT_NEAR(kl_penalty(lnew, lref), 2.0 - std::log(2.0) - 1.0, 1e-12);
  EXPECT_NEAR(kl_penalty(lnew, lref), 0.3069, 1e-4);
}

TEST(KlPenalty, NonNegativeAndZeroOnlyWhenEqual) {
  Rng rng(23);
  for (int n = 0; n < 10000; ++n) {
    const double x = -rng.uniform(0, 10), y = -rng.uniform(0, 10);
    const double k = kl_token(x, y);
    EXPECT_GE(k, 0.0);
    if (std::abs(x - y) > 1e-6) {
      EXPECT_GT(k, 0.0);
    }
  }
  const SequenceLogProbs a{{-1.0}}, b{{-1.0, -2.0}};
  EXPECT_THROW(kl_penalty(a, b), Error);
}

TEST(GrpoObjective, Compositions) {
  GroupRollout r;
  r.logp_new = r.logp_old = r.logp_ref = {{-0.7, -0.2}, {-1.1}};
  r.advantages = group_advantages(std::vector<double>{0.0, 1.0}, 0.0);
  GrpoHyperparams h;
  h.kl_beta = 0.0;
  EXPECT_NEAR(grpo_objective(r, h), 0.0, 1e-15);
  h.kl_beta = 1.0;
  EXPECT_NEAR(grpo_objective(r, h), 0.0, 1e-15);
}

TEST(GrpoObjective, EqualsComponentsComputedIndependently) {
  Rng rng(31);
  for (int n = 0; n < 200; ++n) {
    GroupRollout r;
    const auto g = static_cast<std::size_t>(rng.between(2, 8));
    std::vector<double> rewards(g);
    for (std::size_t i = 0; i < g; ++i) {
      const auto len = static_cast<std::size_t>(rng.between(1, 6));
      std::vector<double> a(len), b(len), c(len);
      for (std::size_t t = 0; t < len; ++t) {
        a[t] = -rng.uniform(0, 3);
        b[t] = -rng.uniform(0, 3);
        c[t] = -rng.uniform(0, 3);
      }
      r.logp_new.push_back(a);
      r.logp_old.push_back(b);
      r.logp_ref.push_back(c);
      rewards[i] = rng.uniform();
    }
    r.rewards = rewards;
    r.advantages = group_advantages(rewards, 1e-4);
    GrpoHyperparams h;
    h.kl_beta = rng.uniform(0, 0.5);
    h.clip_epsilon = rng.uniform(0.05, 0.5);

    double surrogate = 0.0, kl = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < g; ++i) {
      double seq = 0.0;
      for (std::size_t t = 0; t < r.logp_new[i].size(); ++t) {
        const double rho = std::exp(r.logp_new[i][t] - r.logp_old[i][t]);
        const double clipped = std::clamp(rho, 1 - h.clip_epsilon, 1 + h.clip_epsilon);
        seq += std::min(rho * r.advantages[i], clipped * r.advantages[i]);
        const double d = r.logp_ref[i][t] - r.logp_new[i][t];
        kl += std::exp(d) - d - 1;
        ++tokens;
      }
      surrogate += seq / double(r.logp_new[i].size());
    }
    surrogate /= double(g);
    kl /= double(tokens);
    EXPECT_NEAR(grpo_objective(r, h), surrogate - h.kl_beta * kl, 1e-12);

    // Unbounded trust region and no KL: the plain importance-weighted mean.
    GrpoHyperparams wide;
    wide.clip_epsilon = 1e300;
    wide.kl_beta = 0.0;
    double unclipped = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      double seq = 0.0;
      for (std::size_t t = 0; t < r.logp_new[i].size(); ++t) {
        seq += std::exp(r.logp_new[i][t] - r.logp_old[i][t]) * r.advantages[i];
      }
      unclipped += seq / double(r.logp_new[i].size());
    }
    EXPECT_NEAR(grpo_objective(r, wide), unclipped / double(g), 1e-12);
  }
}

TEST(Clipping, FlatBranchHasZeroSlope) {
  Rng rng(41);
  const double eps = 0.2;
  int hits = 0;
  for (int n = 0; n < 10000; ++n) {
    const double old_lp = -rng.uniform(0, 4);
    const double new_lp = old_lp + rng.uniform(-1, 1);
    const double adv = rng.uniform(-2, 2);
    const double rho = std::exp(new_lp - old_lp);
    const double g = surrogate_token_grad(new_lp, old_lp, adv, eps);
    if ((rho > 1 + eps && adv > 0) || (rho < 1 - eps && adv < 0)) {
      EXPECT_EQ(g, 0.0);
      ++hits;
    } else {
      EXPECT_DOUBLE_EQ(g, rho * adv);
    }
  }
  EXPECT_GT(hits, 1000);
}

TEST(Clipping, AnalyticSlopeMatchesFiniteDifference) {
  Rng rng(43);
  for (int n = 0; n < 2000; ++n) {
    const double old_lp = -rng.uniform(0, 4);
    const double new_lp = old_lp + rng.uniform(-1, 1);
    const double adv = rng.uniform(-2, 2);
    const double rho = std::exp(new_lp - old_lp);
    if (std::abs(rho - 1.2) < 1e-3 || std::abs(rho - 0.8) < 1e-3) continue;
    const double h = 1e-6;
    const double fd =
        (surrogate_token(new_lp + h, old_lp, adv, 0.2) - surrogate_token(new_lp - h, old_lp, adv, 0.2)) / (2 * h);
    EXPECT_NEAR(surrogate_token_grad(new_lp, old_lp, adv, 0.2), fd, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Toy policy

TEST(ToyPolicy, ProbabilitiesNormalise) {
  Rng rng(2);
  auto p = ToyPolicy::bigram(default_toy_vocabulary());
  for (double& z : p.parameters()) z = rng.uniform(-5, 5);
  EXPECT_EQ(p.vocab_size(), 29u);
  for (std::size_t c = 0; c < p.num_contexts(); ++c) {
    const auto pr = p.probabilities(c);
    EXPECT_NEAR(std::accumulate(pr.begin(), pr.end(), 0.0), 1.0, 1e-9);
    for (std::size_t t = 0; t < pr.size(); ++t) EXPECT_NEAR(std::log(pr[t]), p.log_prob(c, int(t)), 1e-12);
  }
}

TEST(ToyPolicy, VocabularyTokenizeAndDecode) {
  const auto v = default_toy_vocabulary();
  const std::string table = "| a | b |\n|---|---|\n| 1 | 2 |";
  const auto ids = v.tokenize(table);
  EXPECT_EQ(ids.back(), Vocabulary::kEos);
  EXPECT_EQ(v.decode(ids), table);
  try {
    v.tokenize("%%");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownToken);
  }
  EXPECT_THROW(Vocabulary({"<eos>", "a", "a"}), Error);
}

TEST(PolicySample, DeterministicGivenSeed) {
  const auto p = ToyPolicy::bigram(default_toy_vocabulary());
  const auto a = policy_sample(p, 32, 99);
  const auto b = policy_sample(p, 32, 99);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.log_probs, b.log_probs);
  EXPECT_LE(a.tokens.size(), 32u);
  EXPECT_NE(policy_sample(p, 32, 100).tokens, a.tokens);
}

TEST(PolicySample, AllMassOnEndOfSequence) {
  auto p = ToyPolicy::bigram(default_toy_vocabulary());
  p.logits(p.start_context())[Vocabulary::kEos] = 100.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto out = policy_sample(p, 32, s);
    ASSERT_EQ(out.tokens.size(), 1u);
    EXPECT_EQ(out.tokens[0], Vocabulary::kEos);
  }
}

TEST(PolicySample, StopsAtMaxLen) {
  auto p = ToyPolicy::bigram(default_toy_vocabulary());
  for (std::size_t c = 0; c < p.num_contexts(); ++c) p.logits(c)[Vocabulary::kEos] = -100.0;
  EXPECT_EQ(policy_sample(p, 7, 1).tokens.size(), 7u);
  EXPECT_THROW(policy_sample(p, 0, 1), Error);
}

TEST(PolicySample, EmpiricalFrequenciesMatchSoftmax) {
  ToyPolicy p(Vocabulary({"<eos>", "a", "b"}), 2, {0, 1, 1, 0});
  auto z = p.logits(0);
  z[0] = 0.2;
  z[1] = 0.9;
  z[2] = -0.4;
  const auto probs = p.probabilities(0);
  std::vector<double> counts(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto s = policy_sample(p, 1, derive_seed(5, i));
    counts[static_cast<std::size_t>(s.tokens[0])] += 1;
    EXPECT_DOUBLE_EQ(s.log_probs[0], std::log(probs[static_cast<std::size_t>(s.tokens[0])]));
  }
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(counts[t] / n, probs[t], 0.01);
}

TEST(PolicySample, NucleusDropsTheTail) {
  ToyPolicy p(Vocabulary({"<eos>", "a", "b"}), 2, {0, 1, 1, 0});
  auto z = p.logits(0);
  z[0] = 0.0;
  z[1] = 6.0;  // ~0.995 of the mass
  z[2] = 0.0;
  for (std::uint64_t s = 0; s < 2000; ++s) EXPECT_EQ(policy_sample(p, 1, s).tokens[0], 1);
  SamplingParams greedy;
  greedy.top_k = 1;
  z[1] = 0.1;
  for (std::uint64_t s = 0; s < 200; ++s) EXPECT_EQ(policy_sample(p, 1, s, greedy).tokens[0], 1);
}

// ---------------------------------------------------------------------------
// Gradients

TEST(Gradients, GrpoObjectiveMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto policy = tiny_policy(rng, 2.0);
    auto old_policy = tiny_policy(rng, 2.0);
    auto ref_policy = tiny_policy(rng, 2.0);
    GroupRollout r;
    r.outputs = random_outputs(rng, 4);
    r.logp_old = rollout_log_probs(old_policy, r.outputs);
    r.logp_ref = rollout_log_probs(ref_policy, r.outputs);
    r.rewards = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    r.advantages = group_advantages(r.rewards, 1e-4);
    GrpoHyperparams h;
    h.clip_epsilon = 0.2;
    h.kl_beta = 0.1;
    const auto analytic = grpo_objective_and_gradient(policy, r, h).gradient;
    const auto numeric = central_difference(policy, [&](const ToyPolicy& p) {
      GroupRollout copy = r;
      copy.logp_new = rollout_log_probs(p, copy.outputs);
      return grpo_objective(copy, h);
    });
    EXPECT_LE(rel_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Gradients, SftLikelihoodMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto policy = tiny_policy(rng, 2.0);
    const auto targets = random_outputs(rng, 3);
    const auto analytic = sft_gradient(policy, targets);
    const auto numeric = central_difference(policy, [&](const ToyPolicy& p) { return sft_objective(p, targets); });
    EXPECT_LE(rel_error(analytic, numeric), 1e-4);
  }
}

TEST(SftStep, LikelihoodRisesMonotonically) {
  const auto vocab = default_toy_vocabulary();
  auto policy = ToyPolicy::bigram(vocab);
  const std::vector<std::string> text{"| a | b |\n|---|---|\n| 1 | 2 |"};
  const auto targets = tokenize_targets(vocab, text);
  double prev = sft_objective(policy, targets);
  for (int i = 0; i < 50; ++i) {
    sft_step(policy, targets, 0.05);
    const double now = sft_objective(policy, targets);
    EXPECT_GT(now, prev);
    prev = now;
  }
}

TEST(SftStep, EmptyTargetsAreNoOp) {
  Rng rng(3);
  auto policy = tiny_policy(rng);
  const auto before = policy.parameters();
  sft_step(policy, {}, 1.0);
  EXPECT_EQ(policy.parameters(), before);
}

TEST(SftStep, UntokenizableTargetRejected) {
  const auto vocab = default_toy_vocabulary();
  const std::vector<std::string> text{"@@@"};
  EXPECT_THROW(tokenize_targets(vocab, text), Error);
  auto policy = ToyPolicy::bigram(vocab);
  EXPECT_THROW(sft_step(policy, {{1, 99}}, 0.1), Error);
}

// ---------------------------------------------------------------------------
// Training step

TEST(GrpoTrainStep, EqualRewardsLeaveParametersUnchanged) {
  Rng rng(12);
  auto policy = ToyPolicy::bigram(default_toy_vocabulary());
  for (double& z : policy.parameters()) z = rng.uniform(-1, 1);
  const ToyPolicy reference = policy;
  const auto before = policy.parameters();
  GrpoStepConfig cfg;
  const auto stats = grpo_train_step(policy, reference, {}, [](const Document&) { return 0.5; }, cfg, 77);
  EXPECT_EQ(policy.parameters(), before);
  EXPECT_EQ(stats.mean_reward, 0.5);
  EXPECT_EQ(stats.rewards.size(), cfg.hyper.group_size);
}

TEST(GrpoTrainStep, RaisesProbabilityOfRewardedOutputs) {
  auto policy = ToyPolicy::bigram(default_toy_vocabulary());
  const ToyPolicy reference = policy;
  const int pipe = 1;  // "| "
  auto reward = [](const Document& d) { return d.markdown.rfind("| ", 0) == 0 ? 1.0 : 0.0; };
  const double before = std::exp(policy.log_prob(policy.start_context(), pipe));
  GrpoStepConfig cfg;
  for (std::uint64_t s = 0; s < 30; ++s) grpo_train_step(policy, reference, {}, reward, cfg, s);
  EXPECT_GT(std::exp(policy.log_prob(policy.start_context(), pipe)), before);
}

TEST(GrpoTrainStep, DeterministicGivenSeed) {
  auto a = ToyPolicy::bigram(default_toy_vocabulary());
  auto b = a;
  const ToyPolicy ref = a;
  GrpoStepConfig cfg;
  const auto fn = sim_reward_fn(SimReward::TableValidity);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto sa = grpo_train_step(a, ref, {}, fn, cfg, s);
    const auto sb = grpo_train_step(b, ref, {}, fn, cfg, s);
    EXPECT_EQ(sa.outputs, sb.outputs);
    EXPECT_EQ(sa.objective, sb.objective);
  }
  EXPECT_EQ(a.parameters(), b.parameters());
}

TEST(GrpoTrainStep, RejectsBadHyperparameters) {
  auto policy = ToyPolicy::bigram(default_toy_vocabulary());
  GrpoStepConfig cfg;
  cfg.hyper.group_size = 1;
  EXPECT_THROW(grpo_train_step(policy, policy, {}, [](const Document&) { return 0.0; }, cfg, 1), Error);
}

// ---------------------------------------------------------------------------
// Simulation plumbing (the full 500-step run lives in the acceptance suite)

TEST(Simulation, ZeroStepsReportsUntrainedValidity) {
  SimConfig cfg;
  cfg.steps = 0;
  cfg.eval_samples = 200;
  const auto s = run_grpo_simulation(cfg, 42);
  const auto untouched = ToyPolicy::bigram(Vocabulary(cfg.vocabulary));
  const double v = measure_validity(untouched, 200, cfg.step.max_len, derive_seed(42, 2), cfg.step.sampling);
  EXPECT_EQ(s.initial_validity, v);
  EXPECT_EQ(s.final_validity, v);
  EXPECT_EQ(s.pre_grpo_validity, v);
  EXPECT_TRUE(s.records.empty());
}

TEST(Simulation, ShortRunIsDeterministic) {
  SimConfig cfg;
  cfg.steps = 20;
  cfg.sft_steps = 10;
  cfg.eval_samples = 50;
  const auto a = run_grpo_simulation(cfg, 3);
  const auto b = run_grpo_simulation(cfg, 3);
  ASSERT_EQ(a.records.size(), 20u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].mean_reward, b.records[i].mean_reward);
    EXPECT_EQ(a.records[i].objective, b.records[i].objective);
  }
  EXPECT_EQ(a.final_validity, b.final_validity);
}

TEST(Simulation, SftTargetsAreValidTables) {
  for (const auto& t : sft_table_targets(50, 9)) {
    EXPECT_TRUE(has_valid_table(t)) << t;
    EXPECT_NO_THROW(default_toy_vocabulary().tokenize(t));
  }
  EXPECT_FALSE(has_valid_table("no table"));
  EXPECT_FALSE(has_valid_table("| a | b |\n|---|---|\n| 1 |"));
}

TEST(Simulation, WindowMeans) {
  std::vector<SimStepRecord> recs(5);
  for (std::size_t i = 0; i < 5; ++i) recs[i].mean_reward = double(i);
  EXPECT_EQ(window_means(recs, 2), (std::vector<double>{0.5, 2.5}));
}
