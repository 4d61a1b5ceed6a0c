#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>

#include "docforge/refinery.hpp"
#include "docforge/reward.hpp"
#include "docforge/rng.hpp"
#include "docforge/synth.hpp"

using namespace docforge;

namespace {

Document doc_of(std::string id, std::string md) {
  Document d;
  d.id = std::move(id);
  d.markdown = std::move(md);
  return d;
}

struct Blobs {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> label;
};

Blobs three_blobs(std::uint64_t seed, std::size_t per_blob = 100) {
  const double centers[3][2] = {{0.0, 0.0}, {1.5, 0.0}, {0.0, 1.5}};
  Rng rng(seed);
  Blobs b;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      b.x.push_back({centers[c][0] + 0.05 * rng.normal(), centers[c][1] + 0.05 * rng.normal()});
      b.label.push_back(c);
    }
  }
  return b;
}

double purity(const std::vector<std::size_t>& assign, const std::vector<std::size_t>& label, std::size_t k) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  for (std::size_t i = 0; i < assign.size(); ++i) ++joint[{assign[i], label[i]}];
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = 0;
    for (const auto& [key, n] : joint) {
      if (key.first == c) best = std::max(best, n);
    }
    correct += best;
  }
  return double(correct) / double(assign.size());
}

// Hamilton apportionment with integer arithmetic on weights scaled to integers.
std::vector<std::size_t> oracle_apportion(const std::vector<long long>& w, std::size_t total) {
  const long long sum = std::accumulate(w.begin(), w.end(), 0LL);
  std::vector<std::size_t> seats(w.size());
  std::vector<std::pair<long long, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const long long num = static_cast<long long>(total) * w[i];
    seats[i] = static_cast<std::size_t>(num / sum);
    given += seats[i];
    rem.push_back({num % sum, i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t r = 0; given < total; ++r, ++given) ++seats[rem[r].second];
  return seats;
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout features

TEST(LayoutFeatures, EmptyDocumentIsZero) {
  EXPECT_EQ(layout_features(doc_of("e", "")), std::vector<double>(kLayoutFeatureCount, 0.0));
}

TEST(LayoutFeatures, LargePipeTable) {
  TableSpec spec;
  spec.rows = 30;
  spec.cols = 4;
  spec.seed = 1;
  const auto f = layout_features(doc_of("t", gen_table(spec).markdown));
  ASSERT_EQ(f.size(), kLayoutFeatureCount);
  EXPECT_NEAR(f[0], 1.0, 1e-12);
  EXPECT_NEAR(f[6], 1.0, 1e-12);
  EXPECT_EQ(f[1], 0.0);
}

TEST(LayoutFeatures, EmbeddingPassesThrough) {
  auto d = doc_of("e", "# heading\ntext");
  d.embedding = std::vector<double>{0.1, 0.9};
  EXPECT_EQ(layout_features(d), (std::vector<double>{0.1, 0.9}));
}

TEST(LayoutFeatures, StayInUnitInterval) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto md = gen_document(seed % 3, seed % 3, 1 + seed % 2, seed).markdown;
    if (seed % 4 == 0) md += "\n# A\n## B\n- item\n- item\n<div>x</div>";
    for (double v : layout_features(doc_of("x", md))) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(LayoutFeatures, FormulaAndHeadingSignals) {
  const auto f = layout_features(doc_of("x", "# A\n## B\n$$\\frac{a}{b}$$"));
  EXPECT_GT(f[1], 0.0);
  EXPECT_NEAR(f[2], std::log(2.0) / std::log(6.0), 1e-12);
}

// ---------------------------------------------------------------------------
// k-means

TEST(KMeans, SingleClusterIsTheMean) {
  const std::vector<std::vector<double>> x{{0, 0}, {2, 0}, {1, 3}, {5, 1}};
  const auto m = kmeans_fit(x, 1, 3);
  ASSERT_EQ(m.k(), 1u);
  EXPECT_NEAR(m.centroids[0][0], 2.0, 1e-12);
  EXPECT_NEAR(m.centroids[0][1], 1.0, 1e-12);
}

TEST(KMeans, IdenticalPointsHaveZeroInertia) {
  const std::vector<std::vector<double>> x(10, std::vector<double>{0.3, 0.7, 0.1});
  for (std::size_t k = 1; k <= 10; ++k) EXPECT_EQ(kmeans_fit(x, k, k).inertia, 0.0);
}

TEST(KMeans, RecoversSeparatedBlobs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = three_blobs(seed);
    const auto m = kmeans_fit(b.x, 3, seed);
    EXPECT_GE(purity(m.assignments, b.label, 3), 0.95) << "seed " << seed;
  }
}

TEST(KMeans, InertiaNeverIncreases) {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<std::vector<double>> x(60, std::vector<double>(3));
    for (auto& v : x) {
      for (double& c : v) c = rng.uniform();
    }
    const auto m = kmeans_fit(x, 1 + seed % 6, seed);
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
      EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-12);
    }
    EXPECT_DOUBLE_EQ(m.inertia_history.back(), m.inertia);
  }
}

TEST(KMeans, AssignmentsAreNearestCentroids) {
  const auto b = three_blobs(9);
  const auto m = kmeans_fit(b.x, 4, 2);
  double inertia = 0.0;
  for (std::size_t i = 0; i < b.x.size(); ++i) {
    const double own = squared_distance(b.x[i], m.centroids[m.assignments[i]]);
    for (const auto& c : m.centroids) EXPECT_LE(own, squared_distance(b.x[i], c) + 1e-15);
    inertia += own;
  }
  EXPECT_NEAR(inertia, m.inertia, 1e-9);
}

TEST(KMeans, Deterministic) {
  const auto b = three_blobs(4);
  const auto m1 = kmeans_fit(b.x, 3, 77);
  const auto m2 = kmeans_fit(b.x, 3, 77);
  EXPECT_EQ(m1.assignments, m2.assignments);
  EXPECT_EQ(m1.centroids, m2.centroids);
}

TEST(KMeans, Errors) {
  const std::vector<std::vector<double>> x{{0.0}, {1.0}};
  try {
    kmeans_fit(x, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadK);
  }
  EXPECT_THROW(kmeans_fit(x, 0, 1), Error);
  try {
    kmeans_fit({{0.0}, {1.0, 2.0}}, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

// ---------------------------------------------------------------------------
// Density

TEST(Density, EqualSizesAreNormal) {
  const std::vector<std::size_t> s{25, 25, 25, 25};
  EXPECT_EQ(label_density(s, 2.0, 0.5), std::vector<Density>(4, Density::Normal));
}

TEST(Density, SkewedSizes) {
  const std::vector<std::size_t> s{90, 5, 5};
  EXPECT_EQ(label_density(s, 2.0, 0.5), (std::vector<Density>{Density::Dense, Density::Rare, Density::Rare}));
}

TEST(Density, SingleClusterIsNormal) {
  const std::vector<std::size_t> s{17};
  EXPECT_EQ(label_density(s, 2.0, 0.5), (std::vector<Density>{Density::Normal}));
}

TEST(Density, BadFactors) {
  const std::vector<std::size_t> s{1, 2};
  EXPECT_THROW(label_density(s, 1.0, 0.5), Error);
  EXPECT_THROW(label_density(s, 2.0, 1.0), Error);
  EXPECT_THROW(label_density(s, 2.0, 0.0), Error);
}

// ---------------------------------------------------------------------------
// Tagging

TEST(Tagging, MostlyTableIsTableHeavy) {
  const std::string md = "Quarterly figures\n| a | b |\n|---|---|\n| 1 | 2 |\n| 3 | 4 |";
  EXPECT_NEAR(layout_features(doc_of("x", md))[0], 0.8, 1e-12);
  EXPECT_EQ(tag_document(doc_of("x", md)).layout, Layout::TableHeavy);
}

TEST(Tagging, EmptyDocumentDefaults) {
  const auto t = tag_document(doc_of("x", ""));
  EXPECT_EQ(t.language, Language::Other);
  EXPECT_EQ(t.layout, Layout::DenseText);
  EXPECT_EQ(t.source, Source::DigitalBorn);
  EXPECT_EQ(t.genre, Genre::Other);
}

TEST(Tagging, ScriptRatios) {
  EXPECT_EQ(tag_document(doc_of("x", "Hello world \xE4\xBD\xA0\xE5\xA5\xBD\xE4\xB8\x96\xE7\x95\x8C")).language,
            Language::Multi);
  EXPECT_EQ(tag_document(doc_of("x", "plain english text")).language, Language::En);
  EXPECT_EQ(tag_document(doc_of("x", "\xE4\xBD\xA0\xE5\xA5\xBD\xE4\xB8\x96\xE7\x95\x8C")).language, Language::Zh);
}

TEST(Tagging, IdHints) {
  const auto t = tag_document(doc_of("scan-receipt-001", "TOTAL 4.50"));
  EXPECT_EQ(t.source, Source::ScannedPdf);
  EXPECT_EQ(t.genre, Genre::Receipt);
  EXPECT_EQ(tag_document(doc_of("photo_contract", "x")).genre, Genre::Legal);
  EXPECT_EQ(tag_document(doc_of("photo_contract", "x")).source, Source::CameraCapture);
  EXPECT_EQ(tag_document(doc_of("two-column-arxiv", "x")).layout, Layout::MultiColumn);
}

TEST(Tagging, ImageRich) {
  EXPECT_EQ(tag_document(doc_of("x", "![a](1.png) ![b](2.png) <img src=\"3.png\">")).layout, Layout::ImageRich);
}

TEST(Tagging, PluggableAndPresetTags) {
  auto d = doc_of("x", "text");
  const Tagger fixed = [](const Document&) { return TagVector{Language::Zh, Layout::ImageRich, Source::ScannedPdf, Genre::Legal}; };
  EXPECT_EQ(tag_document(d, fixed).genre, Genre::Legal);
  d.tags = TagVector{Language::En, Layout::MultiColumn, Source::CameraCapture, Genre::Academic};
  EXPECT_EQ(tag_document(d, fixed), *d.tags);
}

// ---------------------------------------------------------------------------
// Dual index and sampling

TEST(DualIndex, SingleStratum) {
  const std::vector<std::string> ids{"a", "b", "c"};
  const std::vector<std::size_t> clusters{0, 0, 0};
  const std::vector<TagVector> tags(3);
  const auto idx = build_dual_index(ids, clusters, tags, {Density::Normal});
  ASSERT_EQ(idx.strata.size(), 1u);
  EXPECT_EQ(idx.strata.begin()->second, ids);
}

TEST(DualIndex, PartitionOfTwoByTwo) {
  std::vector<std::string> ids;
  std::vector<std::size_t> clusters;
  std::vector<TagVector> tags;
  const TagVector t1{}, t2{Language::Zh, Layout::TableHeavy, Source::ScannedPdf, Genre::Receipt};
  for (int i = 0; i < 40; ++i) {
    ids.push_back("d" + std::to_string(i));
    clusters.push_back(i % 2);
    tags.push_back(i % 3 == 0 ? t1 : t2);
  }
  const auto idx = build_dual_index(ids, clusters, tags, {Density::Normal, Density::Normal});
  EXPECT_LE(idx.strata.size(), 4u);
  EXPECT_EQ(idx.size(), ids.size());
  std::set<std::string> seen;
  for (const auto& [key, members] : idx.strata) {
    for (const auto& id : members) EXPECT_TRUE(seen.insert(id).second) << id;
  }
  EXPECT_EQ(seen.size(), ids.size());
}

TEST(DualIndex, EmptyCorpusAndErrors) {
  EXPECT_EQ(build_dual_index({}, {}, {}, {}).size(), 0u);
  const std::vector<std::string> ids{"a"};
  const std::vector<std::size_t> bad_cluster{5};
  const std::vector<TagVector> tags(1);
  try {
    build_dual_index(ids, bad_cluster, tags, {Density::Normal});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnassignedDocument);
  }
  EXPECT_THROW(build_dual_index(ids, {}, tags, {Density::Normal}), Error);
}

namespace {

DualIndex make_index(const std::vector<std::pair<std::size_t, Density>>& strata) {
  DualIndex idx;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& members = idx.strata[{s, TagVector{}}];
    for (std::size_t i = 0; i < strata[s].first; ++i) members.push_back("s" + std::to_string(s) + "-" + std::to_string(i));
    idx.density.push_back(strata[s].second);
  }
  return idx;
}

}  // namespace

TEST(StratifiedSample, OneStratum) {
  const auto idx = make_index({{7, Density::Normal}});
  SampleOptions opt;
  opt.n_out = 25;
  const auto s = stratified_sample(idx, opt, 1);
  EXPECT_EQ(s.ids.size(), 25u);
  EXPECT_EQ(s.counts, (std::vector<std::size_t>{25}));
}

TEST(StratifiedSample, EqualStrataSplitEvenly) {
  const auto idx = make_index({{10, Density::Normal}, {10, Density::Normal}});
  SampleOptions opt{100, 1.0, 1.0};
  EXPECT_EQ(stratified_sample(idx, opt, 3).counts, (std::vector<std::size_t>{50, 50}));
}

TEST(StratifiedSample, RareBoostAndDenseCap) {
  const auto idx = make_index({{90, Density::Dense}, {10, Density::Rare}});
  const auto s = stratified_sample(idx, SampleOptions{100, 3.0, 0.5}, 3);
  EXPECT_EQ(s.weights, (std::vector<double>{45.0, 30.0}));
  EXPECT_EQ(s.counts, (std::vector<std::size_t>{60, 40}));
  std::size_t from_rare = 0;
  for (const auto& id : s.ids) from_rare += id.rfind("s1-", 0) == 0 ? 1 : 0;
  EXPECT_EQ(from_rare, 40u);
}

TEST(StratifiedSample, CountsMatchIntegerApportionment) {
  Rng rng(19);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(1, 10));
    std::vector<std::pair<std::size_t, Density>> strata;
    std::vector<long long> w;
    for (std::size_t i = 0; i < n; ++i) {
      const auto size = static_cast<std::size_t>(rng.between(1, 50));
      const auto d = static_cast<Density>(rng.below(3));
      strata.push_back({size, d});
      // Weights scaled by 2 so boost 3 and cap 0.5 stay integral.
      w.push_back(static_cast<long long>(size) * (d == Density::Rare ? 6 : d == Density::Dense ? 1 : 2));
    }
    const auto n_out = static_cast<std::size_t>(rng.between(1, 500));
    const auto s = stratified_sample(make_index(strata), SampleOptions{n_out, 3.0, 0.5}, trial);
    EXPECT_EQ(s.counts, oracle_apportion(w, n_out));
    EXPECT_EQ(s.ids.size(), n_out);
  }
}

TEST(StratifiedSample, DeterministicAndSeedSensitive) {
  const auto idx = make_index({{30, Density::Normal}, {5, Density::Rare}, {80, Density::Dense}});
  SampleOptions opt;
  EXPECT_EQ(stratified_sample(idx, opt, 11).ids, stratified_sample(idx, opt, 11).ids);
  EXPECT_NE(stratified_sample(idx, opt, 11).ids, stratified_sample(idx, opt, 12).ids);
}

TEST(StratifiedSample, Errors) {
  try {
    stratified_sample(DualIndex{}, SampleOptions{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyIndex);
  }
  const auto idx = make_index({{3, Density::Normal}});
  EXPECT_THROW(stratified_sample(idx, SampleOptions{0, 3.0, 0.5}, 1), Error);
  EXPECT_THROW(stratified_sample(idx, SampleOptions{5, 0.5, 0.5}, 1), Error);
  EXPECT_THROW(stratified_sample(idx, SampleOptions{5, 3.0, 1.5}, 1), Error);
}

TEST(Apportion, TiesGoToEarlierEntries) {
  const std::vector<double> w{1, 1, 1};
  EXPECT_EQ(apportion(w, 4), (std::vector<std::size_t>{2, 1, 1}));
  // 0.1 and 0.7 are inexact in binary; the two remainders are tied exactly.
  const std::vector<double> inexact{0.7, 0.1, 0.1, 0.1};
  EXPECT_EQ(apportion(inexact, 5), (std::vector<std::size_t>{4, 1, 0, 0}));
  EXPECT_EQ(apportion(w, 0), (std::vector<std::size_t>{0, 0, 0}));
}

// ---------------------------------------------------------------------------
// Sieve and routing

TEST(Sieve, CleanTableDocumentPasses) {
  const auto v = sieve(doc_of("x", "Intro text here.\n\n| a | b |\n|---|---|\n| 1 | 2 |"));
  EXPECT_EQ(v.decision, SieveDecision::Pass);
  EXPECT_TRUE(v.reasons.empty());
}

TEST(Sieve, NonPrintableGarbageDiscarded) {
  std::string md;
  for (int i = 0; i < 60; ++i) md += static_cast<char>('a' + i % 26);
  for (int i = 0; i < 40; ++i) md += '\x01';
  EXPECT_NEAR(non_printable_ratio(md), 0.4, 1e-12);
  const auto v = sieve(doc_of("x", md));
  EXPECT_EQ(v.decision, SieveDecision::Discard);
  EXPECT_TRUE(v.has(SieveReason::GarbageNonPrintable));
}

TEST(Sieve, UnclosedTableIsHardCase) {
  const auto v = sieve(doc_of("x", "<table><tr><td>x</td></tr>"));
  EXPECT_EQ(v.decision, SieveDecision::HardCase);
  EXPECT_TRUE(v.has(SieveReason::StructuralClosure));
}

TEST(Sieve, RepetitionDiscarded) {
  std::string md;
  for (int i = 0; i < 30; ++i) md += "the same words again ";
  EXPECT_GT(repetition_score(md), 0.5);
  const auto v = sieve(doc_of("x", md));
  EXPECT_EQ(v.decision, SieveDecision::Discard);
  EXPECT_TRUE(v.has(SieveReason::GarbageRepetition));
}

TEST(Sieve, RepetitionScoreArithmetic) {
  // Words a b c d a b c d: 5 four-grams, 4 distinct.
  EXPECT_NEAR(repetition_score("a b c d a b c d"), 1.0 - 4.0 / 5.0, 1e-12);
  EXPECT_EQ(repetition_score("too short"), 0.0);
}

TEST(Sieve, BlankDiscarded) {
  const auto v = sieve(doc_of("x", "  \n<div></div>\n**  **"));
  EXPECT_EQ(v.decision, SieveDecision::Discard);
  EXPECT_TRUE(v.has(SieveReason::Blank));
}

TEST(Sieve, PipeCountMismatchIsHardCase) {
  const std::string md = "| a | b |\n| c |";
  EXPECT_FALSE(pipe_counts_consistent(md));
  const auto v = sieve(doc_of("x", md));
  EXPECT_EQ(v.decision, SieveDecision::HardCase);
  EXPECT_TRUE(v.has(SieveReason::TableIntegrity));
}

TEST(Sieve, RaggedTableIsHardCase) {
  const auto v = sieve(doc_of("x", "| a | b |\n|---|---|\n| 1 |"));
  EXPECT_EQ(v.decision, SieveDecision::HardCase);
  EXPECT_TRUE(v.has(SieveReason::TableIntegrity));
}

TEST(Sieve, ThresholdsConfigurable) {
  std::string md = "abcdefghi";
  md += '\x02';
  EXPECT_EQ(sieve(doc_of("x", md)).decision, SieveDecision::Pass);
  SieveOptions strict;
  strict.max_non_printable = 0.05;
  EXPECT_EQ(sieve(doc_of("x", md), strict).decision, SieveDecision::Discard);
}

TEST(Sieve, PassImpliesCleanRewards) {
  Rng rng(6);
  const std::string noise = "|*<>$_\n -abc";
  for (std::uint64_t seed = 0; seed < 1500; ++seed) {
    std::string md = gen_document(seed % 3, seed % 2, 1, seed).markdown;
    for (int k = 0; k < 3; ++k) {
      const auto pos = rng.below(md.size() + 1);
      md.insert(pos, 1, noise[rng.below(noise.size())]);
    }
    const auto d = doc_of("x", md);
    if (sieve(d).decision == SieveDecision::Pass) {
      EXPECT_EQ(reward_closure(d), 0.0) << md;
      EXPECT_EQ(reward_table(d), 1.0) << md;
    }
  }
}

TEST(Route, Partitions) {
  const std::vector<std::string> ids{"p", "d", "h"};
  std::vector<SieveVerdict> v(3);
  v[1].decision = SieveDecision::Discard;
  v[2].decision = SieveDecision::HardCase;
  const auto r = route(ids, v);
  EXPECT_EQ(r.pass, (std::vector<std::string>{"p"}));
  EXPECT_EQ(r.discard, (std::vector<std::string>{"d"}));
  EXPECT_EQ(r.hardcase, (std::vector<std::string>{"h"}));
  const std::vector<SieveVerdict> all_pass(3);
  const auto r2 = route(ids, all_pass);
  EXPECT_EQ(r2.pass, ids);
  EXPECT_TRUE(r2.discard.empty());
  EXPECT_TRUE(r2.hardcase.empty());
  EXPECT_THROW(route(ids, std::vector<SieveVerdict>(2)), Error);
}

TEST(Route, AuditorIsPluggable) {
  const Auditor reject_all = [](const Document&) {
    SieveVerdict v;
    v.decision = SieveDecision::Discard;
    v.reasons = {SieveReason::Blank};
    return v;
  };
  EXPECT_EQ(reject_all(doc_of("x", "fine")).decision, SieveDecision::Discard);
  EXPECT_EQ(rule_auditor()(doc_of("x", "fine text")).decision, SieveDecision::Pass);
}
