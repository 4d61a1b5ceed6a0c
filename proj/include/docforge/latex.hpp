#pragma once

// Lightweight LaTeX formula checking: brace balance, environment nesting,
// command lexicon membership, dangling scripts, and required arguments.
// No TeX engine is involved; the check is hermetic and deterministic.

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docforge/error.hpp"
#include "docforge/latex_lexicon_data.hpp"

namespace docforge {

class LatexLexicon {
 public:
  /// Parses the line format of resources/latex_commands.txt.
  static LatexLexicon parse(std::string_view text) {
    LatexLexicon lex;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream fields(line);
      std::string first;
      if (!(fields >> first) || first[0] == '#') continue;
      if (first == "env") {
        std::string name;
        int extra = 0;
        if (!(fields >> name)) {
          throw Error(ErrorKind::ConfigError, "lexicon line " + std::to_string(lineno) + ": env without a name");
        }
        fields >> extra;
        lex.environments_[name] = extra;
        continue;
      }
      if (!first.empty() && first[0] == '\\') first.erase(0, 1);
      int arity = 0;
      fields >> arity;
      if (arity < 0 || arity > 9) {
        throw Error(ErrorKind::ConfigError, "lexicon line " + std::to_string(lineno) + ": bad arity");
      }
      lex.commands_[first] = arity;
    }
    return lex;
  }

  static LatexLexicon from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read lexicon file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  static const LatexLexicon& builtin() {
    static const LatexLexicon lex = parse(detail::kBuiltinLatexLexicon);
    return lex;
  }

  std::optional<int> arity(std::string_view command) const {
    const auto it = commands_.find(std::string(command));
    if (it == commands_.end()) return std::nullopt;
    return it->second;
  }

  /// Extra required arguments after \begin{env}, or nullopt for unknown environments.
  std::optional<int> environment(std::string_view name) const {
    const auto it = environments_.find(std::string(name));
    if (it == environments_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t command_count() const { return commands_.size(); }
  std::size_t environment_count() const { return environments_.size(); }

 private:
  std::unordered_map<std::string, int> commands_;
  std::unordered_map<std::string, int> environments_;
};

enum class LatexErrorKind {
  UnbalancedBrace,
  UnmatchedEnvironment,
  UnknownCommand,
  DanglingSuperSubscript,
  EmptyRequiredArgument
};

inline std::string_view to_string(LatexErrorKind k) {
  switch (k) {
    case LatexErrorKind::UnbalancedBrace: return "UnbalancedBrace";
    case LatexErrorKind::UnmatchedEnvironment: return "UnmatchedEnvironment";
    case LatexErrorKind::UnknownCommand: return "UnknownCommand";
    case LatexErrorKind::DanglingSuperSubscript: return "DanglingSuperSubscript";
    case LatexErrorKind::EmptyRequiredArgument: return "EmptyRequiredArgument";
  }
  return "?";
}

struct LatexError {
  LatexErrorKind kind;
  std::size_t position;

  bool operator==(const LatexError&) const = default;
};

struct LatexVerdict {
  bool valid = true;
  std::vector<LatexError> errors;
  /// In (0, 1]; present iff valid.
  std::optional<double> complexity;
  std::size_t command_count = 0;
  std::size_t max_depth = 0;

  bool has(LatexErrorKind k) const {
    return std::any_of(errors.begin(), errors.end(), [k](const LatexError& e) { return e.kind == k; });
  }
};

namespace detail {

inline bool latex_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool latex_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

class LatexChecker {
 public:
  LatexChecker(std::string_view f, const LatexLexicon& lex) : f_(f), lex_(lex) {}

  LatexVerdict run() {
    std::size_t i = 0;
    while (i < f_.size()) {
      const char c = f_[i];
      if (c == '\\') {
        i = command(i);
      } else if (c == '{') {
        braces_.push_back(i);
        depth_max_ = std::max(depth_max_, braces_.size());
        ++i;
      } else if (c == '}') {
        if (braces_.empty()) {
          fail(LatexErrorKind::UnbalancedBrace, i);
        } else {
          braces_.pop_back();
        }
        ++i;
      } else if (c == '^' || c == '_') {
        if (!has_operand(i + 1)) fail(LatexErrorKind::DanglingSuperSubscript, i);
        ++i;
      } else {
        ++i;
      }
    }
    for (std::size_t pos : braces_) fail(LatexErrorKind::UnbalancedBrace, pos);
    for (const auto& open : groups_) fail(LatexErrorKind::UnmatchedEnvironment, open.position);
    std::sort(verdict_.errors.begin(), verdict_.errors.end(),
              [](const LatexError& a, const LatexError& b) { return a.position < b.position; });
    verdict_.valid = verdict_.errors.empty();
    verdict_.command_count = commands_;
    verdict_.max_depth = depth_max_;
    if (verdict_.valid) {
      const double raw = static_cast<double>(commands_ + depth_max_) / 10.0;
      verdict_.complexity = std::clamp(raw, 0.1, 1.0);
    }
    return std::move(verdict_);
  }

 private:
  struct OpenGroup {
    std::string name;  // environment name, or "\\left"
    std::size_t position;
  };

  void fail(LatexErrorKind k, std::size_t pos) { verdict_.errors.push_back({k, pos}); }

  std::size_t skip_space(std::size_t p) const {
    while (p < f_.size() && latex_space(f_[p])) ++p;
    return p;
  }

  bool is_row_break(std::size_t p) const { return p + 1 < f_.size() && f_[p] == '\\' && f_[p + 1] == '\\'; }

  bool has_operand(std::size_t p) const {
    p = skip_space(p);
    if (p >= f_.size()) return false;
    const char c = f_[p];
    if (c == '}' || c == '^' || c == '_' || c == '&') return false;
    return !is_row_break(p);
  }

  // End of the balanced group opening at p, or npos.
  std::size_t group_end(std::size_t p) const {
    int depth = 0;
    for (std::size_t q = p; q < f_.size(); ++q) {
      if (f_[q] == '\\') {
        ++q;
        continue;
      }
      if (f_[q] == '{') ++depth;
      if (f_[q] == '}' && --depth == 0) return q + 1;
    }
    return std::string_view::npos;
  }

  // End of the token starting at p (a command, an escape, or one character).
  std::size_t token_end(std::size_t p) const {
    if (f_[p] != '\\') return p + 1;
    if (p + 1 >= f_.size()) return p + 1;
    if (!latex_letter(f_[p + 1])) return p + 2;
    std::size_t q = p + 1;
    while (q < f_.size() && latex_letter(f_[q])) ++q;
    return q;
  }

  // Checks one required argument at p. Returns the position after it, or
  // nullopt (with an error recorded against `cmd_pos`) when it is missing.
  std::optional<std::size_t> required_arg(std::size_t p, std::size_t cmd_pos) {
    p = skip_space(p);
    if (!has_operand(p)) {
      fail(LatexErrorKind::EmptyRequiredArgument, cmd_pos);
      return std::nullopt;
    }
    if (f_[p] == '{') {
      const std::size_t end = group_end(p);
      if (end == std::string_view::npos) return std::nullopt;  // reported as UnbalancedBrace
      if (skip_space(p + 1) == end - 1) {
        fail(LatexErrorKind::EmptyRequiredArgument, cmd_pos);
        return std::nullopt;
      }
      return end;
    }
    return token_end(p);
  }

  std::optional<std::string> group_text(std::size_t p, std::size_t& end) const {
    p = skip_space(p);
    if (p >= f_.size() || f_[p] != '{') return std::nullopt;
    end = group_end(p);
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(f_.substr(p + 1, end - p - 2));
  }

  bool is_delimiter_token(std::size_t p) const {
    static constexpr std::string_view kChars = "()[]|./<>";
    if (p >= f_.size()) return false;
    if (f_[p] != '\\') return kChars.find(f_[p]) != std::string_view::npos;
    if (p + 1 >= f_.size()) return false;
    const char n = f_[p + 1];
    if (n == '{' || n == '}' || n == '|') return true;
    static constexpr std::string_view kNamed[] = {"langle", "rangle", "lfloor", "rfloor", "lceil", "rceil",
                                                  "lvert", "rvert", "lVert", "rVert", "vert", "Vert",
                                                  "uparrow", "downarrow", "backslash"};
    const std::size_t e = token_end(p);
    const auto name = f_.substr(p + 1, e - p - 1);
    return std::find(std::begin(kNamed), std::end(kNamed), name) != std::end(kNamed);
  }

  std::size_t command(std::size_t i) {
    if (i + 1 >= f_.size()) {
      fail(LatexErrorKind::UnknownCommand, i);
      return i + 1;
    }
    if (!latex_letter(f_[i + 1])) return i + 2;  // single-character escape
    const std::size_t end = token_end(i);
    const auto name = f_.substr(i + 1, end - i - 1);
    const auto arity = lex_.arity(name);
    if (!arity) {
      fail(LatexErrorKind::UnknownCommand, i);
      return end;
    }
    ++commands_;
    if (name == "begin" || name == "end") return environment(i, end, name == "begin");
    if (name == "left" || name == "right") {
      const std::size_t p = skip_space(end);
      if (!is_delimiter_token(p)) {
        fail(LatexErrorKind::EmptyRequiredArgument, i);
        return end;
      }
      if (name == "left") {
        groups_.push_back({"\\left", i});
      } else if (!groups_.empty() && groups_.back().name == "\\left") {
        groups_.pop_back();
      } else {
        fail(LatexErrorKind::UnmatchedEnvironment, i);
      }
      // Consume the delimiter so `\{` / `\}` do not disturb brace counting.
      return token_end(p);
    }
    std::size_t p = end;
    for (int k = 0; k < *arity; ++k) {
      if (k == 0 && name == "sqrt") {
        const std::size_t q = skip_space(p);
        if (q < f_.size() && f_[q] == '[') {
          const std::size_t close = f_.find(']', q);
          if (close != std::string_view::npos) p = close + 1;
        }
      }
      const auto next = required_arg(p, i);
      if (!next) break;
      p = *next;
    }
    return end;
  }

  std::size_t environment(std::size_t i, std::size_t end, bool begin) {
    std::size_t group_close = 0;
    const auto env = group_text(end, group_close);
    if (!env || env->empty()) {
      fail(LatexErrorKind::EmptyRequiredArgument, i);
      return end;
    }
    const auto extra = lex_.environment(*env);
    if (!extra) {
      fail(LatexErrorKind::UnknownCommand, i);
      return group_close;
    }
    if (begin) {
      groups_.push_back({*env, i});
      std::size_t p = group_close;
      for (int k = 0; k < *extra; ++k) {
        const auto next = required_arg(p, i);
        if (!next) break;
        p = *next;
      }
    } else if (!groups_.empty() && groups_.back().name == *env) {
      groups_.pop_back();
    } else {
      fail(LatexErrorKind::UnmatchedEnvironment, i);
    }
    // Environment-name braces are syntax, not nesting.
    return group_close;
  }

  std::string_view f_;
  const LatexLexicon& lex_;
  LatexVerdict verdict_;
  std::vector<std::size_t> braces_;
  std::vector<OpenGroup> groups_;
  std::size_t depth_max_ = 0;
  std::size_t commands_ = 0;
};

}  // namespace detail

/// Validates a formula body (delimiters excluded).
inline LatexVerdict validate_latex(std::string_view formula,
                                   const LatexLexicon& lexicon = LatexLexicon::builtin()) {
  return detail::LatexChecker(formula, lexicon).run();
}

/// min(1, (commands + max brace depth) / 10), floored at 0.1.
/// Throws PreconditionViolated for invalid formulas.
inline double complexity_score(std::string_view formula, const LatexLexicon& lexicon = LatexLexicon::builtin()) {
  const auto verdict = validate_latex(formula, lexicon);
  if (!verdict.valid) {
    throw Error(ErrorKind::PreconditionViolated, "complexity_score requires a valid formula");
  }
  return *verdict.complexity;
}

}  // namespace docforge
