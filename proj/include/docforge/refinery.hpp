#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "docforge/document.hpp"
#include "docforge/error.hpp"
#include "docforge/rng.hpp"
#include "docforge/structure.hpp"
#include "docforge/utf8.hpp"

namespace docforge {

// ---------------------------------------------------------------------------
// Layout features

inline constexpr std::size_t kLayoutFeatureCount = 8;

namespace detail {

inline bool overlaps(const ByteRange& r, std::size_t b, std::size_t e) { return r.begin < e && b < r.end; }

}  // namespace detail

/// Text-layout proxy features, each in [0, 1]:
///  0 table-cell density   fraction of non-blank lines inside a table
///  1 formula density      fraction of bytes inside formula spans
///  2 heading entropy      entropy of the heading-level histogram over log(6)
///  3 mean line length     mean non-blank line length / 160, capped at 1
///  4 line-length spread   var / (var + 1600)
///  5 list-item ratio      list items per non-blank line
///  6 pipe ratio           fraction of non-blank lines bounded by `|`
///  7 HTML-tag ratio       fraction of bytes spent on HTML tags
/// A supplied embedding is returned unchanged.
inline std::vector<double> layout_features(const Document& doc) {
  if (doc.embedding) return *doc.embedding;
  std::vector<double> f(kLayoutFeatureCount, 0.0);
  const std::string_view md = doc.markdown;
  const auto lines = detail::split_lines(md);
  std::vector<detail::Line> content;
  for (const auto& ln : lines) {
    if (!detail::trim(md.substr(ln.begin, ln.end - ln.begin)).empty()) content.push_back(ln);
  }
  if (content.empty()) return f;
  const double nlines = static_cast<double>(content.size());
  const double nbytes = static_cast<double>(md.size());

  const auto scanned = detail::scan(md);
  const auto tables = extract_tables(md);
  std::size_t table_lines = 0;
  std::size_t pipe_lines = 0;
  for (const auto& ln : content) {
    if (std::any_of(tables.begin(), tables.end(),
                    [&](const TableGrid& t) { return detail::overlaps(t.source_span, ln.begin, ln.end + 1); })) {
      ++table_lines;
    }
    if (detail::is_pipe_line(md.substr(ln.begin, ln.end - ln.begin))) ++pipe_lines;
  }
  f[0] = static_cast<double>(table_lines) / nlines;

  std::size_t formula_bytes = 0;
  for (const auto& fs : scanned.formulas) formula_bytes += fs.source_span.size();
  f[1] = std::min(1.0, static_cast<double>(formula_bytes) / nbytes);

  std::array<double, 6> levels{};
  double headings = 0.0;
  std::size_t list_items = 0;
  std::size_t html_bytes = 0;
  for (const auto& n : scanned.tree.nodes) {
    if (n.kind == NodeKind::Heading && n.level >= 1 && n.level <= 6) {
      levels[static_cast<std::size_t>(n.level - 1)] += 1.0;
      headings += 1.0;
    } else if (n.kind == NodeKind::ListItem) {
      ++list_items;
    } else if (n.kind == NodeKind::HtmlTag) {
      html_bytes += n.open_len + (n.close_pos ? n.close_len : 0);
    }
  }
  if (headings > 0.0) {
    double h = 0.0;
    for (double c : levels) {
      if (c > 0.0) h -= (c / headings) * std::log(c / headings);
    }
    f[2] = h / std::log(6.0);
  }

  double sum = 0.0;
  double sq = 0.0;
  for (const auto& ln : content) {
    const auto len = static_cast<double>(utf8::length(md.substr(ln.begin, ln.end - ln.begin)));
    sum += len;
    sq += len * len;
  }
  const double mean = sum / nlines;
  const double var = std::max(0.0, sq / nlines - mean * mean);
  f[3] = std::min(1.0, mean / 160.0);
  f[4] = var / (var + 1600.0);
  f[5] = std::min(1.0, static_cast<double>(list_items) / nlines);
  f[6] = static_cast<double>(pipe_lines) / nlines;
  f[7] = std::min(1.0, static_cast<double>(html_bytes) / nbytes);
  return f;
}

// ---------------------------------------------------------------------------
// Clustering

struct ClusterModel {
  std::vector<std::vector<double>> centroids;
  /// Cluster index per input vector, in input order.
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  /// Inertia after each assignment pass; the last entry equals `inertia`.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  std::size_t k() const { return centroids.size(); }
  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(centroids.size(), 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

namespace detail {

inline std::pair<std::vector<std::size_t>, double> assign_nearest(const std::vector<std::vector<double>>& x,
                                                                  const std::vector<std::vector<double>>& c) {
  std::vector<std::size_t> a(x.size());
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double d = squared_distance(x[i], c[j]);
      if (d < best) {
        best = d;
        a[i] = j;
      }
    }
    inertia += best;
  }
  return {a, inertia};
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` centroid updates have run. A cluster that loses
/// all members keeps its previous centroid.
inline ClusterModel kmeans_fit(const std::vector<std::vector<double>>& x, std::size_t k, std::uint64_t seed,
                               std::size_t max_iters = 100) {
  if (k < 1 || k > x.size()) {
    throw Error(ErrorKind::BadK, "k=" + std::to_string(k) + " outside [1, " + std::to_string(x.size()) + "]");
  }
  const std::size_t d = x.front().size();
  for (const auto& v : x) {
    if (v.size() != d) throw Error(ErrorKind::DimensionMismatch, "all vectors must share one dimension");
  }

  Rng rng(seed);
  ClusterModel m;
  m.centroids.push_back(x[rng.below(x.size())]);
  std::vector<double> dist(x.size());
  while (m.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : m.centroids) best = std::min(best, squared_distance(x[i], c));
      dist[i] = best;
      total += best;
    }
    std::size_t pick = x.size() - 1;
    if (total <= 0.0) {
      pick = rng.below(x.size());
    } else {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < x.size(); ++i) {
        u -= dist[i];
        if (u < 0.0 && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    m.centroids.push_back(x[pick]);
  }

  auto [assign, inertia] = detail::assign_nearest(x, m.centroids);
  m.inertia_history.push_back(inertia);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<std::vector<double>> means(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t c = assign[i];
      const double n = static_cast<double>(++counts[c]);
      for (std::size_t j = 0; j < d; ++j) means[c][j] += (x[i][j] - means[c][j]) / n;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) m.centroids[c] = means[c];
    }
    ++m.iterations;
    auto [next, next_inertia] = detail::assign_nearest(x, m.centroids);
    m.inertia_history.push_back(next_inertia);
    const bool fixpoint = next == assign;
    assign = std::move(next);
    inertia = next_inertia;
    if (fixpoint) break;
  }
  m.assignments = std::move(assign);
  m.inertia = inertia;
  return m;
}

enum class Density { Dense, Normal, Rare };

inline std::string_view to_string(Density d) {
  switch (d) {
    case Density::Dense: return "Dense";
    case Density::Normal: return "Normal";
    case Density::Rare: return "Rare";
  }
  return "?";
}

inline std::vector<Density> label_density(std::span<const std::size_t> sizes, double dense_factor, double rare_factor) {
  if (!(dense_factor > 1.0) || !(rare_factor > 0.0) || !(rare_factor < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "density factors must satisfy dense > 1 > rare > 0");
  }
  std::vector<Density> out;
  if (sizes.empty()) return out;
  const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  const double expected = n / static_cast<double>(sizes.size());
  for (auto s : sizes) {
    const double size = static_cast<double>(s);
    if (size > dense_factor * expected) {
      out.push_back(Density::Dense);
    } else if (size < rare_factor * expected) {
      out.push_back(Density::Rare);
    } else {
      out.push_back(Density::Normal);
    }
  }
  return out;
}

inline std::vector<Density> label_density(const ClusterModel& model, double dense_factor, double rare_factor) {
  const auto sizes = model.cluster_sizes();
  return label_density(std::span<const std::size_t>(sizes), dense_factor, rare_factor);
}

// ---------------------------------------------------------------------------
// Tagging

using Tagger = std::function<TagVector(const Document&)>;

namespace detail {

inline bool contains_ci(std::string_view hay, std::string_view needle) {
  if (needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size() && ok; ++j) ok = lower(hay[i + j]) == needle[j];
    if (ok) return true;
  }
  return false;
}

}  // namespace detail

/// Script ratios choose the language, layout features choose the layout, and
/// keywords in the document id choose source and genre.
inline TagVector rule_tagger(const Document& doc) {
  TagVector t;
  std::size_t latin = 0;
  std::size_t cjk = 0;
  for (char32_t cp : utf8::decode(strip_structure(doc.markdown))) {
    if (utf8::is_cjk(cp)) {
      ++cjk;
    } else if (utf8::is_latin_letter(cp)) {
      ++latin;
    }
  }
  if (latin + cjk > 0) {
    const double total = static_cast<double>(latin + cjk);
    const double lr = static_cast<double>(latin) / total;
    const double cr = static_cast<double>(cjk) / total;
    if (lr >= 0.2 && cr >= 0.2) {
      t.language = Language::Multi;
    } else {
      t.language = lr > cr ? Language::En : Language::Zh;
    }
  }

  const Document stripped{doc.id, doc.markdown, std::nullopt, std::nullopt, std::nullopt};
  const auto f = layout_features(stripped);
  std::size_t images = 0;
  for (std::size_t p = doc.markdown.find("!["); p != std::string::npos; p = doc.markdown.find("![", p + 2)) ++images;
  for (std::size_t p = doc.markdown.find("<img"); p != std::string::npos; p = doc.markdown.find("<img", p + 4)) ++images;
  if (f[0] > 0.5) {
    t.layout = Layout::TableHeavy;
  } else if (images >= 3) {
    t.layout = Layout::ImageRich;
  } else if (detail::contains_ci(doc.id, "column")) {
    t.layout = Layout::MultiColumn;
  }

  const std::string_view id = doc.id;
  if (detail::contains_ci(id, "scan")) {
    t.source = Source::ScannedPdf;
  } else if (detail::contains_ci(id, "photo") || detail::contains_ci(id, "camera")) {
    t.source = Source::CameraCapture;
  }
  if (detail::contains_ci(id, "receipt")) {
    t.genre = Genre::Receipt;
  } else if (detail::contains_ci(id, "arxiv") || detail::contains_ci(id, "paper") ||
             detail::contains_ci(id, "thesis")) {
    t.genre = Genre::Academic;
  } else if (detail::contains_ci(id, "invoice") || detail::contains_ci(id, "financ") ||
             detail::contains_ci(id, "annual")) {
    t.genre = Genre::Financial;
  } else if (detail::contains_ci(id, "contract") || detail::contains_ci(id, "legal")) {
    t.genre = Genre::Legal;
  }
  return t;
}

/// Uses the document's own tags when present, otherwise the tagger.
inline TagVector tag_document(const Document& doc, const Tagger& tagger = rule_tagger) {
  if (doc.tags) return *doc.tags;
  return tagger(doc);
}

// ---------------------------------------------------------------------------
// Dual index and stratified sampling

using StratumKey = std::pair<std::size_t, TagVector>;

struct DualIndex {
  std::map<StratumKey, std::vector<std::string>> strata;
  std::vector<Density> density;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [key, ids] : strata) n += ids.size();
    return n;
  }
};

/// Partitions documents by (cluster, tags). `clusters[i]` and `tags[i]` belong to `ids[i]`.
inline DualIndex build_dual_index(std::span<const std::string> ids, std::span<const std::size_t> clusters,
                                  std::span<const TagVector> tags, std::vector<Density> density) {
  if (clusters.size() != ids.size() || tags.size() != ids.size()) {
    throw Error(ErrorKind::UnassignedDocument, "every document needs one cluster and one tag vector");
  }
  DualIndex index;
  index.density = std::move(density);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (clusters[i] >= index.density.size()) {
      throw Error(ErrorKind::UnassignedDocument, "document '" + ids[i] + "' has no valid cluster");
    }
    index.strata[{clusters[i], tags[i]}].push_back(ids[i]);
  }
  return index;
}

/// Largest-remainder (Hamilton) apportionment of `total` seats by weight.
/// Ties in the remainder go to the earlier entry.
inline std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
  std::vector<std::size_t> seats(weights.size(), 0);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(sum > 0.0)) return seats;
  // Remainders are compared on a 1e-9 grid.
  constexpr double kGrid = 1e9;
  std::vector<std::pair<long long, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    long long whole = static_cast<long long>(std::floor(quota));
    long long frac = std::llround((quota - static_cast<double>(whole)) * kGrid);
    if (frac >= static_cast<long long>(kGrid)) {
      ++whole;
      frac = 0;
    }
    seats[i] = static_cast<std::size_t>(whole);
    given += seats[i];
    rem.emplace_back(frac, i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; given < total; ++r, ++given) ++seats[rem[r % rem.size()].second];
  return seats;
}

struct SampleOptions {
  std::size_t n_out = 100;
  double rare_boost = 3.0;
  double dense_cap = 0.5;
};

struct StratifiedSample {
  std::vector<std::string> ids;
  /// Strata in index order with their weights and realised counts.
  std::vector<StratumKey> strata;
  std::vector<double> weights;
  std::vector<std::size_t> counts;
};

/// Apportions `n_out` draws across strata by boosted/capped size, then draws
/// uniformly with replacement inside each stratum.
inline StratifiedSample stratified_sample(const DualIndex& index, const SampleOptions& opt, std::uint64_t seed) {
  if (index.strata.empty()) throw Error(ErrorKind::EmptyIndex, "cannot sample from an empty index");
  if (opt.n_out < 1) throw Error(ErrorKind::InvalidArgument, "n_out must be at least 1");
  if (!(opt.rare_boost >= 1.0)) throw Error(ErrorKind::InvalidArgument, "rare_boost must be at least 1");
  if (!(opt.dense_cap > 0.0 && opt.dense_cap <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "dense_cap must lie in (0, 1]");
  }
  StratifiedSample out;
  for (const auto& [key, ids] : index.strata) {
    double w = static_cast<double>(ids.size());
    const Density d = key.first < index.density.size() ? index.density[key.first] : Density::Normal;
    if (d == Density::Rare) w *= opt.rare_boost;
    if (d == Density::Dense) w *= opt.dense_cap;
    out.strata.push_back(key);
    out.weights.push_back(w);
  }
  out.counts = apportion(out.weights, opt.n_out);
  Rng rng(seed);
  for (std::size_t s = 0; s < out.strata.size(); ++s) {
    const auto& members = index.strata.at(out.strata[s]);
    for (std::size_t i = 0; i < out.counts[s]; ++i) out.ids.push_back(members[rng.below(members.size())]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sieve and routing

enum class SieveDecision { Pass, Discard, HardCase };
enum class SieveReason { StructuralClosure, TableIntegrity, GarbageNonPrintable, GarbageRepetition, Blank };

inline std::string_view to_string(SieveDecision d) {
  switch (d) {
    case SieveDecision::Pass: return "Pass";
    case SieveDecision::Discard: return "Discard";
    case SieveDecision::HardCase: return "HardCase";
  }
  return "?";
}

inline std::string_view to_string(SieveReason r) {
  switch (r) {
    case SieveReason::StructuralClosure: return "StructuralClosure";
    case SieveReason::TableIntegrity: return "TableIntegrity";
    case SieveReason::GarbageNonPrintable: return "GarbageNonPrintable";
    case SieveReason::GarbageRepetition: return "GarbageRepetition";
    case SieveReason::Blank: return "Blank";
  }
  return "?";
}

struct SieveVerdict {
  SieveDecision decision = SieveDecision::Pass;
  std::vector<SieveReason> reasons;

  bool has(SieveReason r) const { return std::find(reasons.begin(), reasons.end(), r) != reasons.end(); }
};

struct SieveOptions {
  double max_non_printable = 0.10;
  double max_repetition = 0.50;
};

/// Share of code points that are control characters (other than tab and
/// newlines) or undecodable bytes.
inline double non_printable_ratio(std::string_view text) {
  std::size_t total = 0;
  std::size_t bad = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = utf8::decode_one(text, pos);
    ++total;
    if (utf8::is_non_printable(cp)) ++bad;
  }
  return total == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(total);
}

/// 1 - distinct/total over word 4-grams of the stripped text; 0 below four words.
inline double repetition_score(std::string_view markdown) {
  const std::string text = strip_structure(markdown);
  std::vector<std::string_view> words;
  std::size_t i = 0;
  const std::string_view s = text;
  while (i < s.size()) {
    while (i < s.size() && detail::is_ws(s[i])) ++i;
    const std::size_t b = i;
    while (i < s.size() && !detail::is_ws(s[i])) ++i;
    if (i > b) words.push_back(s.substr(b, i - b));
  }
  if (words.size() < 4) return 0.0;
  std::set<std::array<std::string_view, 4>> distinct;
  const std::size_t grams = words.size() - 3;
  for (std::size_t w = 0; w < grams; ++w) distinct.insert({words[w], words[w + 1], words[w + 2], words[w + 3]});
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(grams);
}

/// Every pipe block line must carry as many pipes as the block's first line.
inline bool pipe_counts_consistent(std::string_view markdown) {
  for (const auto& block : extract_pipe_blocks(markdown)) {
    for (auto c : block.pipe_counts) {
      if (c != block.pipe_counts.front()) return false;
    }
  }
  return true;
}

inline SieveVerdict sieve(const Document& doc, const SieveOptions& opt = {}) {
  SieveVerdict v;
  if (detail::trim(strip_structure(doc.markdown)).empty()) v.reasons.push_back(SieveReason::Blank);
  if (non_printable_ratio(doc.markdown) > opt.max_non_printable) v.reasons.push_back(SieveReason::GarbageNonPrintable);
  if (repetition_score(doc.markdown) > opt.max_repetition) v.reasons.push_back(SieveReason::GarbageRepetition);
  if (!v.reasons.empty()) {
    v.decision = SieveDecision::Discard;
    return v;
  }
  if (!build_structure_tree(doc.markdown).unclosed.empty()) v.reasons.push_back(SieveReason::StructuralClosure);
  const auto tables = extract_tables(doc.markdown);
  const bool tables_ok = std::all_of(tables.begin(), tables.end(), [](const TableGrid& t) { return is_rectangular(t); });
  if (!tables_ok || !pipe_counts_consistent(doc.markdown)) v.reasons.push_back(SieveReason::TableIntegrity);
  if (!v.reasons.empty()) v.decision = SieveDecision::HardCase;
  return v;
}

/// Pluggable audit stage; the default is the rule sieve.
using Auditor = std::function<SieveVerdict(const Document&)>;

inline Auditor rule_auditor(SieveOptions opt = {}) {
  return [opt](const Document& d) { return sieve(d, opt); };
}

struct Routing {
  std::vector<std::string> pass;
  std::vector<std::string> discard;
  std::vector<std::string> hardcase;
};

inline Routing route(std::span<const std::string> ids, std::span<const SieveVerdict> verdicts) {
  if (ids.size() != verdicts.size()) throw Error(ErrorKind::ShapeMismatch, "one verdict per document required");
  Routing r;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    switch (verdicts[i].decision) {
      case SieveDecision::Pass: r.pass.push_back(ids[i]); break;
      case SieveDecision::Discard: r.discard.push_back(ids[i]); break;
      case SieveDecision::HardCase: r.hardcase.push_back(ids[i]); break;
    }
  }
  return r;
}

}  // namespace docforge
