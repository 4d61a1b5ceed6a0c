#pragma once

// Rule-based rewards for generated Markdown and their weighted composite
//   R(o) = la * r_syntax + lb * r_closure + lc * r_table + ld * r_text.

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "docforge/document.hpp"
#include "docforge/error.hpp"
#include "docforge/latex.hpp"
#include "docforge/levenshtein.hpp"
#include "docforge/structure.hpp"
#include "docforge/utf8.hpp"

namespace docforge {

struct RewardWeights {
  double syntax = 1.0;
  double closure = 1.0;
  double table = 1.0;
  double text = 1.0;

  /// Throws InvalidWeights unless all weights are finite, non-negative, and one is positive.
  void validate() const {
    for (double w : {syntax, closure, table, text}) {
      if (!(w >= 0.0) || w == std::numeric_limits<double>::infinity()) {
        throw Error(ErrorKind::InvalidWeights, "reward weights must be finite and non-negative");
      }
    }
    if (syntax == 0.0 && closure == 0.0 && table == 0.0 && text == 0.0) {
      throw Error(ErrorKind::InvalidWeights, "at least one reward weight must be positive");
    }
  }
};

struct RewardBreakdown {
  double r_syntax = 0.0;
  double r_closure = 0.0;
  double r_table = 1.0;
  double r_text = 0.0;
  double composite = 0.0;
  RewardWeights weights;
};

struct RewardOptions {
  /// Penalty per unclosed node; the closure reward saturates at -1.
  double closure_constant = 0.2;
  const LatexLexicon* lexicon = nullptr;

  const LatexLexicon& lex() const { return lexicon ? *lexicon : LatexLexicon::builtin(); }
};

/// -1 if any formula fails validation, 0 without formulas, otherwise the
/// mean complexity of the formulas.
inline double reward_syntax(std::string_view markdown, const RewardOptions& opt = {}) {
  const auto formulas = extract_formulas(markdown);
  if (formulas.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : formulas) {
    const auto verdict = validate_latex(f.latex, opt.lex());
    if (!verdict.valid) return -1.0;
    sum += *verdict.complexity;
  }
  return sum / static_cast<double>(formulas.size());
}

inline double reward_closure(std::string_view markdown, const RewardOptions& opt = {}) {
  const auto open = build_structure_tree(markdown).unclosed.size();
  if (open == 0) return 0.0;
  return -std::min(1.0, opt.closure_constant * static_cast<double>(open));
}

/// 1 when every table is rectangular after span expansion (vacuously 1 without tables).
inline double reward_table(std::string_view markdown) {
  for (const auto& t : extract_tables(markdown)) {
    if (!is_rectangular(t)) return 0.0;
  }
  return 1.0;
}

/// Normalised edit distance between tag-stripped texts, negated: in [-1, 0].
inline double reward_text(std::string_view markdown, std::string_view reference) {
  const auto a = utf8::decode(strip_structure(markdown));
  const auto b = utf8::decode(strip_structure(reference));
  const std::size_t dist = levenshtein(std::u32string_view(a), std::u32string_view(b));
  const double denom = static_cast<double>(std::max<std::size_t>(1, std::max(a.size(), b.size())));
  return -static_cast<double>(dist) / denom;
}

inline double reward_text(const Document& doc, const std::optional<std::string>& reference = std::nullopt) {
  const auto& ref = reference ? reference : doc.reference;
  if (!ref) throw Error(ErrorKind::MissingReference, "document '" + doc.id + "' has no reference text");
  return reward_text(doc.markdown, *ref);
}

inline double reward_syntax(const Document& doc, const RewardOptions& opt = {}) {
  return reward_syntax(doc.markdown, opt);
}
inline double reward_closure(const Document& doc, const RewardOptions& opt = {}) {
  return reward_closure(doc.markdown, opt);
}
inline double reward_table(const Document& doc) { return reward_table(doc.markdown); }

inline double combine(const RewardWeights& w, double r_syntax, double r_closure, double r_table, double r_text) {
  return w.syntax * r_syntax + w.closure * r_closure + w.table * r_table + w.text * r_text;
}

/// Scores all four components and their weighted sum. A reference is required
/// only when the text weight is positive; otherwise r_text is recorded as 0.
inline RewardBreakdown composite_reward(const Document& doc, const std::optional<std::string>& reference,
                                        const RewardWeights& weights, const RewardOptions& opt = {}) {
  weights.validate();
  const auto& ref = reference ? reference : doc.reference;
  if (weights.text > 0.0 && !ref) {
    throw Error(ErrorKind::MissingReference, "document '" + doc.id + "' has no reference text");
  }
  RewardBreakdown out;
  out.weights = weights;
  out.r_syntax = reward_syntax(doc.markdown, opt);
  out.r_closure = reward_closure(doc.markdown, opt);
  out.r_table = reward_table(doc.markdown);
  out.r_text = ref ? reward_text(doc.markdown, *ref) : 0.0;
  out.composite = combine(weights, out.r_syntax, out.r_closure, out.r_table, out.r_text);
  return out;
}

}  // namespace docforge
