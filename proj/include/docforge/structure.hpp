#pragma once

// Structural parsing of Markdown/HTML pages: closure trees, table grids,
// formula spans and tag-stripped content. All functions are total: malformed
// input produces unclosed nodes or ragged grids, never an exception.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace docforge {

/// Half-open byte range [begin, end) into the source string.
struct ByteRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ByteRange&) const = default;
};

enum class NodeKind { Emphasis, Strong, InlineFormula, DisplayFormula, HtmlTag, CodeFence, Heading, ListItem };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Emphasis: return "Emphasis";
    case NodeKind::Strong: return "Strong";
    case NodeKind::InlineFormula: return "InlineFormula";
    case NodeKind::DisplayFormula: return "DisplayFormula";
    case NodeKind::HtmlTag: return "HtmlTag";
    case NodeKind::CodeFence: return "CodeFence";
    case NodeKind::Heading: return "Heading";
    case NodeKind::ListItem: return "ListItem";
  }
  return "?";
}

struct StructNode {
  NodeKind kind = NodeKind::Emphasis;
  /// Opening marker text ("**", "$", "\\(", "```"), or the lower-case tag name for HtmlTag.
  std::string marker;
  /// Heading level (1-6) or list depth; 0 otherwise.
  int level = 0;
  std::size_t open_pos = 0;
  std::size_t open_len = 0;
  std::optional<std::size_t> close_pos;
  std::size_t close_len = 0;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;

  bool closed() const { return close_pos.has_value(); }
};

/// Ordered forest of structural nodes. `nodes` is in opening order, which is
/// also pre-order; `unclosed` indexes the nodes whose closer never appeared.
struct StructureTree {
  std::vector<StructNode> nodes;
  std::vector<std::size_t> roots;
  std::vector<std::size_t> unclosed;
};

/// The text that closes `node` when appended after it.
inline std::string canonical_closer(const StructNode& node) {
  switch (node.kind) {
    case NodeKind::Emphasis:
    case NodeKind::Strong: return node.marker;
    case NodeKind::InlineFormula: return node.marker == "$" ? "$" : "\\)";
    case NodeKind::DisplayFormula: return node.marker == "$$" ? "$$" : "\\]";
    case NodeKind::HtmlTag: return "</" + node.marker + ">";
    case NodeKind::CodeFence: return "\n" + node.marker + "\n";
    case NodeKind::Heading:
    case NodeKind::ListItem: return "";
  }
  return "";
}

enum class FormulaDelimiter { DoubleDollar, SingleDollar, ParenEscape, BracketEscape };

inline std::string_view to_string(FormulaDelimiter d) {
  switch (d) {
    case FormulaDelimiter::DoubleDollar: return "DoubleDollar";
    case FormulaDelimiter::SingleDollar: return "SingleDollar";
    case FormulaDelimiter::ParenEscape: return "ParenEscape";
    case FormulaDelimiter::BracketEscape: return "BracketEscape";
  }
  return "?";
}

struct FormulaSpan {
  std::string latex;
  FormulaDelimiter delimiter = FormulaDelimiter::SingleDollar;
  ByteRange source_span;
};

enum class TableOrigin { PipeTable, HtmlTable };

struct Cell {
  std::string text;
  int rowspan = 1;
  int colspan = 1;
  bool header = false;

  bool operator==(const Cell&) const = default;
};

struct TableGrid {
  /// Data-bearing rows. For pipe tables the separator row is not a row.
  std::vector<std::vector<Cell>> rows;
  std::optional<std::size_t> header_row_index;
  ByteRange source_span;
  TableOrigin origin = TableOrigin::PipeTable;
  /// Cell count of the `|---|` row (pipe tables only).
  std::optional<std::size_t> separator_width;
};

/// A run of consecutive lines that begin and end with `|`, whether or not it
/// qualifies as a table.
struct PipeBlock {
  ByteRange source_span;
  std::vector<std::size_t> pipe_counts;
  bool has_separator = false;
};

namespace detail {

inline bool is_blank_char(char c) { return c == ' ' || c == '\t' || c == '\r'; }
inline bool is_ws(char c) { return is_blank_char(c) || c == '\n'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
/// Non-ASCII bytes count as word characters.
inline bool is_word(char c) {
  return is_ascii_alpha(c) || is_digit(c) || static_cast<unsigned char>(c) >= 0x80;
}
inline char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_ws(s[b])) ++b;
  while (e > b && is_ws(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::size_t line_end(std::string_view s, std::size_t pos) {
  const std::size_t e = s.find('\n', pos);
  return e == std::string_view::npos ? s.size() : e;
}

struct HtmlTagToken {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past '>'
  std::string name;     // lower case
  bool closing = false;
  bool self_closing = false;
  std::string_view attrs;
};

inline bool is_void_element(std::string_view name) {
  static constexpr std::array<std::string_view, 14> kVoid{"area", "base",  "br",   "col",   "embed",
                                                          "hr",   "img",   "input", "link", "meta",
                                                          "param", "source", "track", "wbr"};
  return std::find(kVoid.begin(), kVoid.end(), name) != kVoid.end();
}

/// Recognises `<name ...>`, `</name>` and `<name/>` at `i`. Tags never span lines.
inline std::optional<HtmlTagToken> parse_html_tag(std::string_view s, std::size_t i) {
  if (i >= s.size() || s[i] != '<') return std::nullopt;
  HtmlTagToken tok;
  tok.begin = i;
  std::size_t j = i + 1;
  if (j < s.size() && s[j] == '/') {
    tok.closing = true;
    ++j;
  }
  if (j >= s.size() || !is_ascii_alpha(s[j])) return std::nullopt;
  const std::size_t name_begin = j;
  while (j < s.size() && (is_ascii_alpha(s[j]) || is_digit(s[j]) || s[j] == '-')) ++j;
  for (std::size_t k = name_begin; k < j; ++k) tok.name.push_back(lower(s[k]));
  if (j >= s.size()) return std::nullopt;
  if (tok.closing) {
    while (j < s.size() && is_blank_char(s[j])) ++j;
    if (j >= s.size() || s[j] != '>') return std::nullopt;
    tok.end = j + 1;
    return tok;
  }
  if (!(is_blank_char(s[j]) || s[j] == '/' || s[j] == '>')) return std::nullopt;
  const std::size_t attrs_begin = j;
  char quote = 0;
  for (; j < s.size(); ++j) {
    const char c = s[j];
    if (c == '\n') return std::nullopt;
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '<') {
      return std::nullopt;
    } else if (c == '>') {
      break;
    }
  }
  if (j >= s.size()) return std::nullopt;
  tok.end = j + 1;
  std::size_t k = j;
  while (k > attrs_begin && is_blank_char(s[k - 1])) --k;
  tok.self_closing = k > attrs_begin && s[k - 1] == '/';
  tok.attrs = s.substr(attrs_begin, (tok.self_closing ? k - 1 : k) - attrs_begin);
  return tok;
}

/// Searches for a two-character closer starting at `from`, stepping over
/// backslash escapes. Returns npos when absent.
inline std::size_t find_closer(std::string_view s, std::size_t from, char a, char b, bool backslash_closer) {
  for (std::size_t j = from; j + 1 < s.size();) {
    if (s[j] == '\\') {
      if (backslash_closer && s[j + 1] == b) return j;
      j += 2;
      continue;
    }
    if (!backslash_closer && s[j] == a && s[j + 1] == b) return j;
    ++j;
  }
  return std::string_view::npos;
}

struct ScanResult {
  StructureTree tree;
  std::vector<FormulaSpan> formulas;
  /// Regions whose content is opaque to table detection: fenced code and formulas.
  std::vector<ByteRange> opaque;
};

class Scanner {
 public:
  explicit Scanner(std::string_view s) : s_(s) {}

  ScanResult run() {
    bool line_start = true;
    while (pos_ < s_.size()) {
      if (line_start) {
        line_start = false;
        if (block_line()) continue;
      }
      const char c = s_[pos_];
      switch (c) {
        case '\n':
          end_line();
          ++pos_;
          line_start = true;
          break;
        case '\\': escape(); break;
        case '`': inline_code(); break;
        case '$': dollar(); break;
        case '*':
        case '_': emphasis(c); break;
        case '<': html(); break;
        default: ++pos_; break;
      }
    }
    if (fence_) out_.opaque.push_back({out_.tree.nodes[*fence_].open_pos, s_.size()});
    for (std::size_t i = 0; i < out_.tree.nodes.size(); ++i) {
      if (!out_.tree.nodes[i].closed()) out_.tree.unclosed.push_back(i);
    }
    return std::move(out_);
  }

 private:
  std::size_t add_node(NodeKind kind, std::string marker, std::size_t open_pos, std::size_t open_len,
                       int level = 0) {
    auto& nodes = out_.tree.nodes;
    const std::size_t idx = nodes.size();
    StructNode n;
    n.kind = kind;
    n.marker = std::move(marker);
    n.level = level;
    n.open_pos = open_pos;
    n.open_len = open_len;
    if (!stack_.empty()) {
      n.parent = stack_.back();
      nodes[stack_.back()].children.push_back(idx);
    } else {
      out_.tree.roots.push_back(idx);
    }
    nodes.push_back(std::move(n));
    return idx;
  }

  void close(std::size_t idx, std::size_t pos, std::size_t len) {
    auto& n = out_.tree.nodes[idx];
    n.close_pos = pos;
    n.close_len = len;
  }

  // Closes stack entry `depth`; everything opened above it stays unclosed.
  void close_stack_entry(std::size_t depth, std::size_t pos, std::size_t len) {
    close(stack_[depth], pos, len);
    stack_.resize(depth);
  }

  // Returns true when the whole line was consumed by a block construct.
  bool block_line() {
    const std::size_t le = line_end(s_, pos_);
    if (fence_) {
      std::size_t p = pos_;
      while (p < le && p - pos_ < 3 && s_[p] == ' ') ++p;
      const auto& fence = out_.tree.nodes[*fence_];
      std::size_t run = 0;
      while (p + run < le && s_[p + run] == fence.marker[0]) ++run;
      if (run == fence.marker.size() && trim(s_.substr(p + run, le - p - run)).empty()) {
        close(*fence_, p, run);
        out_.opaque.push_back({fence.open_pos, le});
        stack_.pop_back();
        fence_.reset();
      }
      pos_ = le;
      return true;
    }
    std::size_t p = pos_;
    while (p < le && p - pos_ < 3 && s_[p] == ' ') ++p;
    if (p < le && (s_[p] == '`' || s_[p] == '~')) {
      const char fc = s_[p];
      std::size_t run = 0;
      while (p + run < le && s_[p + run] == fc) ++run;
      const auto info = s_.substr(p + run, le - p - run);
      if (run >= 3 && (fc == '~' || info.find('`') == std::string_view::npos)) {
        const std::size_t idx = add_node(NodeKind::CodeFence, std::string(run, fc), p, run);
        stack_.push_back(idx);
        fence_ = idx;
        pos_ = le;
        return true;
      }
    }
    if (is_thematic_break(s_.substr(pos_, le - pos_))) {
      pos_ = le;
      return true;
    }
    if (p < le && s_[p] == '#') {
      std::size_t hashes = 0;
      while (p + hashes < le && s_[p + hashes] == '#') ++hashes;
      if (hashes <= 6 && (p + hashes == le || is_blank_char(s_[p + hashes]))) {
        const std::size_t idx = add_node(NodeKind::Heading, std::string(hashes, '#'), p, hashes,
                                         static_cast<int>(hashes));
        close(idx, le, 0);
        pos_ = p + hashes;
        return false;
      }
    }
    std::size_t q = pos_;
    while (q < le && (s_[q] == ' ' || s_[q] == '\t')) ++q;
    const int depth = static_cast<int>((q - pos_) / 2);
    if (q + 1 < le && (s_[q] == '-' || s_[q] == '+' || s_[q] == '*') && is_blank_char(s_[q + 1])) {
      const std::size_t idx = add_node(NodeKind::ListItem, std::string(1, s_[q]), q, 1, depth);
      close(idx, le, 0);
      pos_ = q + 2;
      return false;
    }
    std::size_t d = q;
    while (d < le && is_digit(s_[d]) && d - q < 9) ++d;
    if (d > q && d + 1 < le && (s_[d] == '.' || s_[d] == ')') && is_blank_char(s_[d + 1])) {
      const std::size_t idx = add_node(NodeKind::ListItem, std::string(s_.substr(q, d + 1 - q)), q, d + 1 - q, depth);
      close(idx, le, 0);
      pos_ = d + 2;
      return false;
    }
    return false;
  }

  static bool is_thematic_break(std::string_view line) {
    char mark = 0;
    int count = 0;
    for (char c : line) {
      if (is_blank_char(c)) continue;
      if (c != '-' && c != '*' && c != '_') return false;
      if (mark && c != mark) return false;
      mark = c;
      ++count;
    }
    return count >= 3;
  }

  void end_line() {
    std::vector<std::size_t> kept;
    kept.reserve(stack_.size());
    for (std::size_t idx : stack_) {
      const auto kind = out_.tree.nodes[idx].kind;
      if (kind != NodeKind::Emphasis && kind != NodeKind::Strong) kept.push_back(idx);
    }
    stack_ = std::move(kept);
  }

  void escape() {
    if (pos_ + 1 >= s_.size()) {
      ++pos_;
      return;
    }
    const char nx = s_[pos_ + 1];
    if (nx == '(' || nx == '[') {
      const bool display = nx == '[';
      const char closer = display ? ']' : ')';
      const std::size_t j = find_closer(s_, pos_ + 2, '\\', closer, true);
      const NodeKind kind = display ? NodeKind::DisplayFormula : NodeKind::InlineFormula;
      const std::size_t idx = add_node(kind, display ? "\\[" : "\\(", pos_, 2);
      if (j == std::string_view::npos) {
        pos_ += 2;
        return;
      }
      close(idx, j, 2);
      add_formula(pos_ + 2, j, j + 2,
                  display ? FormulaDelimiter::BracketEscape : FormulaDelimiter::ParenEscape);
      pos_ = j + 2;
      return;
    }
    pos_ += nx == '\n' ? 1 : 2;
  }

  void inline_code() {
    const std::size_t le = line_end(s_, pos_);
    std::size_t run = 0;
    while (pos_ + run < le && s_[pos_ + run] == '`') ++run;
    std::size_t j = pos_ + run;
    while (j < le) {
      if (s_[j] != '`') {
        ++j;
        continue;
      }
      std::size_t r = 0;
      while (j + r < le && s_[j + r] == '`') ++r;
      if (r == run) {
        out_.opaque.push_back({pos_, j + r});
        pos_ = j + r;
        return;
      }
      j += r;
    }
    pos_ += run;
  }

  void dollar() {
    if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '$') {
      const std::size_t j = find_closer(s_, pos_ + 2, '$', '$', false);
      const std::size_t idx = add_node(NodeKind::DisplayFormula, "$$", pos_, 2);
      if (j == std::string_view::npos) {
        pos_ += 2;
        return;
      }
      close(idx, j, 2);
      add_formula(pos_ + 2, j, j + 2, FormulaDelimiter::DoubleDollar);
      pos_ = j + 2;
      return;
    }
    // A single `$` opens a formula only when followed by a non-space,
    // non-digit character; this keeps prices out of formula detection.
    const bool opener = pos_ + 1 < s_.size() && !is_ws(s_[pos_ + 1]) && !is_digit(s_[pos_ + 1]);
    if (!opener) {
      ++pos_;
      return;
    }
    const std::size_t le = line_end(s_, pos_);
    for (std::size_t j = pos_ + 1; j < le;) {
      if (s_[j] == '\\') {
        j += 2;
        continue;
      }
      if (s_[j] == '$') {
        if (j + 1 < s_.size() && is_digit(s_[j + 1])) {
          ++j;
          continue;
        }
        const std::size_t idx = add_node(NodeKind::InlineFormula, "$", pos_, 1);
        close(idx, j, 1);
        add_formula(pos_ + 1, j, j + 1, FormulaDelimiter::SingleDollar);
        pos_ = j + 1;
        return;
      }
      ++j;
    }
    add_node(NodeKind::InlineFormula, "$", pos_, 1);
    ++pos_;
  }

  void add_formula(std::size_t body_begin, std::size_t body_end, std::size_t span_end, FormulaDelimiter d) {
    const std::size_t open_len = d == FormulaDelimiter::SingleDollar ? 1 : 2;
    FormulaSpan f;
    f.latex = std::string(s_.substr(body_begin, body_end - body_begin));
    f.delimiter = d;
    f.source_span = {body_begin - open_len, span_end};
    out_.opaque.push_back(f.source_span);
    out_.formulas.push_back(std::move(f));
  }

  void emphasis(char c) {
    std::size_t run = 0;
    while (pos_ + run < s_.size() && s_[pos_ + run] == c) ++run;
    const char prev = pos_ == 0 ? '\n' : s_[pos_ - 1];
    const char next = pos_ + run < s_.size() ? s_[pos_ + run] : '\n';
    const bool both_ws = is_ws(prev) && is_ws(next);
    const bool intraword = is_word(prev) && is_word(next);
    const bool delimiter = !both_ws && !(c == '_' && intraword) && run <= 3;
    if (!delimiter) {
      pos_ += run;
      return;
    }
    const std::string single(1, c);
    const std::string dbl(2, c);
    if (run == 1) {
      toggle(NodeKind::Emphasis, single, pos_, 1);
    } else if (run == 2) {
      toggle(NodeKind::Strong, dbl, pos_, 2);
    } else {
      const auto strong = find_open(NodeKind::Strong, dbl);
      const auto emph = find_open(NodeKind::Emphasis, single);
      if (!strong && !emph) {
        toggle(NodeKind::Strong, dbl, pos_, 2);
        toggle(NodeKind::Emphasis, single, pos_ + 2, 1);
      } else if (strong && emph) {
        // Close the inner one first so neither is stranded.
        if (*emph > *strong) {
          toggle(NodeKind::Emphasis, single, pos_, 1);
          toggle(NodeKind::Strong, dbl, pos_ + 1, 2);
        } else {
          toggle(NodeKind::Strong, dbl, pos_, 2);
          toggle(NodeKind::Emphasis, single, pos_ + 2, 1);
        }
      } else {
        toggle(NodeKind::Strong, dbl, pos_, 2);
        toggle(NodeKind::Emphasis, single, pos_ + 2, 1);
      }
    }
    pos_ += run;
  }

  std::optional<std::size_t> find_open(NodeKind kind, const std::string& marker) const {
    for (std::size_t d = stack_.size(); d-- > 0;) {
      const auto& n = out_.tree.nodes[stack_[d]];
      if (n.kind == kind && n.marker == marker) return d;
    }
    return std::nullopt;
  }

  void toggle(NodeKind kind, const std::string& marker, std::size_t pos, std::size_t len) {
    if (const auto d = find_open(kind, marker)) {
      close_stack_entry(*d, pos, len);
    } else {
      stack_.push_back(add_node(kind, marker, pos, len));
    }
  }

  void html() {
    if (s_.substr(pos_, 4) == "<!--") {
      const std::size_t e = s_.find("-->", pos_ + 4);
      pos_ = e == std::string_view::npos ? pos_ + 1 : e + 3;
      return;
    }
    const auto tag = parse_html_tag(s_, pos_);
    if (!tag) {
      ++pos_;
      return;
    }
    if (tag->closing) {
      for (std::size_t d = stack_.size(); d-- > 0;) {
        const auto& n = out_.tree.nodes[stack_[d]];
        if (n.kind == NodeKind::HtmlTag && n.marker == tag->name) {
          close_stack_entry(d, tag->begin, tag->end - tag->begin);
          break;
        }
        // Never reach through an open code fence.
        if (n.kind == NodeKind::CodeFence) break;
      }
    } else if (!tag->self_closing && !is_void_element(tag->name)) {
      stack_.push_back(add_node(NodeKind::HtmlTag, tag->name, tag->begin, tag->end - tag->begin));
    }
    pos_ = tag->end;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> stack_;
  std::optional<std::size_t> fence_;
  ScanResult out_;
};

inline ScanResult scan(std::string_view markdown) { return Scanner(markdown).run(); }

inline bool inside(const std::vector<ByteRange>& ranges, std::size_t pos) {
  for (const auto& r : ranges) {
    if (pos >= r.begin && pos < r.end) return true;
  }
  return false;
}

inline std::vector<std::string_view> split_pipe_cells(std::string_view trimmed_line) {
  std::vector<std::string_view> cells;
  if (trimmed_line.size() < 2) return cells;  // a lone "|" has no cells
  const std::string_view content = trimmed_line.substr(1, trimmed_line.size() - 2);
  std::size_t start = 0;
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i] == '\\') {
      ++i;
      continue;
    }
    if (content[i] == '|') {
      cells.push_back(content.substr(start, i - start));
      start = i + 1;
    }
  }
  cells.push_back(content.substr(start));
  return cells;
}

inline std::size_t count_pipes(std::string_view line) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\') {
      ++i;
    } else if (line[i] == '|') {
      ++n;
    }
  }
  return n;
}

inline bool is_separator_row(std::string_view trimmed_line) {
  const auto cells = split_pipe_cells(trimmed_line);
  if (cells.empty()) return false;
  for (auto cell : cells) {
    cell = trim(cell);
    if (cell.empty()) return false;
    std::size_t b = 0;
    std::size_t e = cell.size();
    if (cell[b] == ':') ++b;
    if (e > b && cell[e - 1] == ':') --e;
    if (e <= b) return false;
    for (std::size_t i = b; i < e; ++i) {
      if (cell[i] != '-') return false;
    }
  }
  return true;
}

struct Line {
  std::size_t begin;
  std::size_t end;  // excludes '\n'
};

inline std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t b = 0;
  while (b <= s.size()) {
    const std::size_t e = line_end(s, b);
    lines.push_back({b, e});
    if (e == s.size()) break;
    b = e + 1;
  }
  return lines;
}

inline bool is_pipe_line(std::string_view line) {
  const auto t = trim(line);
  return !t.empty() && t.front() == '|' && t.back() == '|';
}

inline std::vector<PipeBlock> find_pipe_blocks(std::string_view s, const std::vector<ByteRange>& fences,
                                               std::vector<std::vector<Line>>* block_lines = nullptr) {
  std::vector<PipeBlock> blocks;
  const auto lines = split_lines(s);
  std::size_t i = 0;
  while (i < lines.size()) {
    const auto& ln = lines[i];
    const auto text = s.substr(ln.begin, ln.end - ln.begin);
    if (!is_pipe_line(text) || inside(fences, ln.begin)) {
      ++i;
      continue;
    }
    PipeBlock block;
    std::vector<Line> members;
    std::size_t j = i;
    while (j < lines.size()) {
      const auto t = s.substr(lines[j].begin, lines[j].end - lines[j].begin);
      if (!is_pipe_line(t) || inside(fences, lines[j].begin)) break;
      block.pipe_counts.push_back(count_pipes(t));
      members.push_back(lines[j]);
      ++j;
    }
    block.source_span = {members.front().begin, members.back().end};
    if (members.size() >= 2) {
      const auto second = trim(s.substr(members[1].begin, members[1].end - members[1].begin));
      block.has_separator = is_separator_row(second);
    }
    blocks.push_back(std::move(block));
    if (block_lines) block_lines->push_back(std::move(members));
    i = j;
  }
  return blocks;
}

inline std::string collapse_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_ws(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

inline int parse_span_attr(std::string_view attrs, std::string_view key) {
  std::string lowered;
  for (char c : attrs) lowered.push_back(lower(c));
  std::size_t p = 0;
  while ((p = lowered.find(key, p)) != std::string::npos) {
    const bool boundary = p == 0 || !is_ascii_alpha(lowered[p - 1]);
    std::size_t q = p + key.size();
    p = q;
    if (!boundary) continue;
    while (q < lowered.size() && is_blank_char(lowered[q])) ++q;
    if (q >= lowered.size() || lowered[q] != '=') continue;
    ++q;
    while (q < lowered.size() && (is_blank_char(lowered[q]) || lowered[q] == '"' || lowered[q] == '\'')) ++q;
    int v = 0;
    bool any = false;
    while (q < lowered.size() && is_digit(lowered[q]) && v < 100000) {
      v = v * 10 + (lowered[q] - '0');
      any = true;
      ++q;
    }
    return any && v >= 1 ? v : 1;
  }
  return 1;
}

class HtmlTableCollector {
 public:
  explicit HtmlTableCollector(std::string_view s) : s_(s) {}

  std::vector<TableGrid> run(const std::vector<ByteRange>& opaque) {
    std::size_t i = 0;
    while (i < s_.size()) {
      if (s_[i] == '<' && !inside(opaque, i)) {
        if (auto tag = parse_html_tag(s_, i)) {
          on_tag(*tag);
          i = tag->end;
          continue;
        }
      }
      if (!open_.empty() && open_.back().cell_open) open_.back().cell_text.push_back(s_[i]);
      ++i;
    }
    while (!open_.empty()) finish_table(s_.size());
    return std::move(done_);
  }

 private:
  struct Builder {
    std::size_t begin = 0;
    std::vector<std::vector<Cell>> rows;
    bool row_open = false;
    bool cell_open = false;
    Cell cell;
    std::string cell_text;
  };

  void on_tag(const HtmlTagToken& tag) {
    const std::string& n = tag.name;
    if (n == "table") {
      if (tag.closing) {
        if (!open_.empty()) finish_table(tag.end);
      } else {
        open_.push_back(Builder{});
        open_.back().begin = tag.begin;
      }
      return;
    }
    if (open_.empty()) return;
    Builder& b = open_.back();
    if (n == "tr") {
      finish_cell(b);
      finish_row(b);
      if (!tag.closing) {
        b.rows.emplace_back();
        b.row_open = true;
      }
    } else if (n == "td" || n == "th") {
      finish_cell(b);
      if (tag.closing) return;
      if (!b.row_open) {
        b.rows.emplace_back();
        b.row_open = true;
      }
      b.cell_open = true;
      b.cell = Cell{};
      b.cell.header = n == "th";
      b.cell.rowspan = parse_span_attr(tag.attrs, "rowspan");
      b.cell.colspan = parse_span_attr(tag.attrs, "colspan");
      b.cell_text.clear();
    } else if (b.cell_open && (n == "br" || n == "p" || n == "div")) {
      b.cell_text.push_back(' ');
    }
  }

  static void finish_cell(Builder& b) {
    if (!b.cell_open) return;
    b.cell.text = collapse_ws(b.cell_text);
    b.rows.back().push_back(std::move(b.cell));
    b.cell_open = false;
  }

  static void finish_row(Builder& b) { b.row_open = false; }

  void finish_table(std::size_t end) {
    Builder b = std::move(open_.back());
    open_.pop_back();
    finish_cell(b);
    TableGrid g;
    g.origin = TableOrigin::HtmlTable;
    g.source_span = {b.begin, end};
    g.rows = std::move(b.rows);
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      const auto& row = g.rows[r];
      if (!row.empty() && std::all_of(row.begin(), row.end(), [](const Cell& c) { return c.header; })) {
        g.header_row_index = r;
        break;
      }
    }
    done_.push_back(std::move(g));
  }

  std::string_view s_;
  std::vector<Builder> open_;
  std::vector<TableGrid> done_;
};

}  // namespace detail

/// Builds the closure tree. Pairing rules: `*`, `**`, `_`, `__` toggle
/// left-to-right within a line; HTML tags pair through a case-insensitive tag
/// stack; code fences pair on equal fence length; headings and list items are
/// self-closing.
inline StructureTree build_structure_tree(std::string_view markdown) {
  return detail::scan(markdown).tree;
}

/// All formula spans in source order. `$$` is matched before `$`; a single
/// `$` span stays on one line and may not be followed by a digit.
inline std::vector<FormulaSpan> extract_formulas(std::string_view markdown) {
  return detail::scan(markdown).formulas;
}

inline std::vector<TableGrid> extract_tables(std::string_view markdown) {
  const auto scanned = detail::scan(markdown);
  std::vector<ByteRange> fences;
  for (const auto& n : scanned.tree.nodes) {
    if (n.kind == NodeKind::CodeFence) {
      fences.push_back({n.open_pos, n.close_pos ? *n.close_pos + n.close_len : markdown.size()});
    }
  }
  std::vector<TableGrid> tables;
  std::vector<std::vector<detail::Line>> block_lines;
  const auto blocks = detail::find_pipe_blocks(markdown, fences, &block_lines);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!blocks[b].has_separator) continue;
    const auto& lines = block_lines[b];
    TableGrid g;
    g.origin = TableOrigin::PipeTable;
    g.source_span = blocks[b].source_span;
    g.header_row_index = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto t = detail::trim(markdown.substr(lines[i].begin, lines[i].end - lines[i].begin));
      const auto cells = detail::split_pipe_cells(t);
      if (i == 1) {
        g.separator_width = cells.size();
        continue;
      }
      std::vector<Cell> row;
      row.reserve(cells.size());
      for (auto c : cells) row.push_back(Cell{std::string(detail::trim(c)), 1, 1, i == 0});
      g.rows.push_back(std::move(row));
    }
    tables.push_back(std::move(g));
  }
  auto html = detail::HtmlTableCollector(markdown).run(scanned.opaque);
  for (auto& g : html) tables.push_back(std::move(g));
  std::stable_sort(tables.begin(), tables.end(), [](const TableGrid& a, const TableGrid& b) {
    return a.source_span.begin < b.source_span.begin;
  });
  return tables;
}

/// Pipe blocks (with or without a separator row), for raw pipe-count checks.
inline std::vector<PipeBlock> extract_pipe_blocks(std::string_view markdown) {
  const auto scanned = detail::scan(markdown);
  std::vector<ByteRange> fences;
  for (const auto& n : scanned.tree.nodes) {
    if (n.kind == NodeKind::CodeFence) {
      fences.push_back({n.open_pos, n.close_pos ? *n.close_pos + n.close_len : markdown.size()});
    }
  }
  return detail::find_pipe_blocks(markdown, fences);
}

/// Logical grid after rowspan/colspan expansion. A slot is empty when no
/// cell covers it; rows are as wide as their right-most covered slot.
using ExpandedGrid = std::vector<std::vector<std::optional<std::string>>>;

inline ExpandedGrid expand_grid(const TableGrid& grid) {
  const std::size_t nrows = grid.rows.size();
  ExpandedGrid out(nrows);
  auto occupy = [&](std::size_t r, std::size_t c, const std::string& text) {
    auto& row = out[r];
    if (row.size() <= c) row.resize(c + 1);
    row[c] = text;
  };
  for (std::size_t r = 0; r < nrows; ++r) {
    std::size_t col = 0;
    for (const auto& cell : grid.rows[r]) {
      while (col < out[r].size() && out[r][col].has_value()) ++col;
      const std::size_t rs = static_cast<std::size_t>(std::max(1, cell.rowspan));
      const std::size_t cs = static_cast<std::size_t>(std::max(1, cell.colspan));
      for (std::size_t dr = 0; dr < rs && r + dr < nrows; ++dr) {
        for (std::size_t dc = 0; dc < cs; ++dc) {
          // Overlapping spans keep the first writer.
          auto& row = out[r + dr];
          if (row.size() > col + dc && row[col + dc].has_value()) continue;
          occupy(r + dr, col + dc, cell.text);
        }
      }
      col += cs;
    }
  }
  return out;
}

/// Column count of each row after expansion (number of covered slots).
inline std::vector<std::size_t> row_widths(const TableGrid& grid) {
  std::vector<std::size_t> widths;
  for (const auto& row : expand_grid(grid)) {
    widths.push_back(static_cast<std::size_t>(
        std::count_if(row.begin(), row.end(), [](const auto& slot) { return slot.has_value(); })));
  }
  return widths;
}

/// True when the table is non-empty, every expanded row has the same
/// hole-free width, and (for pipe tables) the separator agrees.
inline bool is_rectangular(const TableGrid& grid) {
  if (grid.rows.empty()) return false;
  const auto expanded = expand_grid(grid);
  const std::size_t width = expanded.front().size();
  if (width == 0) return false;
  for (const auto& row : expanded) {
    if (row.size() != width) return false;
    for (const auto& slot : row) {
      if (!slot) return false;
    }
  }
  return !grid.separator_width || *grid.separator_width == width;
}

namespace detail {

inline bool is_block_break_tag(std::string_view name, bool closing) {
  if (name == "br" || name == "hr") return true;
  if (!closing) return false;
  static constexpr std::array<std::string_view, 14> kBlocks{"tr", "p",  "div", "li", "table", "h1", "h2",
                                                            "h3", "h4", "h5",  "h6", "ul",    "ol", "blockquote"};
  return std::find(kBlocks.begin(), kBlocks.end(), name) != kBlocks.end();
}

inline bool is_spacing_tag(std::string_view name) {
  static constexpr std::array<std::string_view, 18> kSpacing{
      "table", "tr", "td", "th", "thead", "tbody", "tfoot", "p", "div", "li", "ul", "ol", "h1", "h2", "h3", "h4",
      "h5", "h6"};
  return std::find(kSpacing.begin(), kSpacing.end(), name) != kSpacing.end();
}

inline bool only_marker_chars(std::string_view line) {
  bool any = false;
  for (char c : line) {
    if (is_blank_char(c)) continue;
    if (c != '|' && c != '-' && c != ':' && c != '+' && c != '=' && c != '*' && c != '_' && c != '#' &&
        c != '`' && c != '~' && c != '>') {
      return false;
    }
    any = true;
  }
  return any;
}

// One stripping pass. Formula bodies are copied verbatim in this pass.
inline std::string strip_pass(std::string_view s) {
  const auto scanned = scan(s);
  std::vector<ByteRange> fence_lines;  // opening/closing fence marker lines
  for (const auto& n : scanned.tree.nodes) {
    if (n.kind != NodeKind::CodeFence) continue;
    fence_lines.push_back({n.open_pos, line_end(s, n.open_pos)});
    if (n.close_pos) fence_lines.push_back({*n.close_pos, line_end(s, *n.close_pos)});
  }
  // Pass 1: formulas -> bodies, HTML tags -> separators, fence lines dropped.
  std::string text;
  std::vector<char> prot;
  text.reserve(s.size());
  prot.reserve(s.size());
  auto push = [&](char c, bool p) {
    text.push_back(c);
    prot.push_back(p ? 1 : 0);
  };
  std::size_t next_formula = 0;
  const auto& formulas = scanned.formulas;
  std::size_t i = 0;
  while (i < s.size()) {
    if (next_formula < formulas.size() && formulas[next_formula].source_span.begin == i) {
      const auto& f = formulas[next_formula++];
      push(' ', false);
      for (char c : f.latex) push(c, true);
      push(' ', false);
      i = f.source_span.end;
      continue;
    }
    while (next_formula < formulas.size() && formulas[next_formula].source_span.begin < i) ++next_formula;
    bool skipped = false;
    for (const auto& r : fence_lines) {
      if (i == r.begin) {
        i = r.end;
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    if (s[i] == '<') {
      if (s.substr(i, 4) == "<!--") {
        const std::size_t e = s.find("-->", i + 4);
        if (e != std::string_view::npos) {
          i = e + 3;
          continue;
        }
      }
      if (auto tag = parse_html_tag(s, i)) {
        if (is_block_break_tag(tag->name, tag->closing)) {
          push('\n', false);
        } else if (is_spacing_tag(tag->name)) {
          push(' ', false);
        }
        i = tag->end;
        continue;
      }
    }
    push(s[i], false);
    ++i;
  }

  // Pass 2: line-level scaffolding and inline markers.
  std::vector<std::string> out_lines;
  std::size_t b = 0;
  while (b <= text.size()) {
    std::size_t e = text.find('\n', b);
    if (e == std::string::npos) e = text.size();
    const std::string_view line(text.data() + b, e - b);
    const bool has_prot = std::any_of(prot.begin() + static_cast<std::ptrdiff_t>(b),
                                      prot.begin() + static_cast<std::ptrdiff_t>(e), [](char p) { return p != 0; });
    const bool originally_blank = trim(line).empty();
    std::string cleaned;
    if (!(!has_prot && only_marker_chars(line))) {
      std::size_t k = b;
      auto is_prot = [&](std::size_t at) { return prot[at] != 0; };
      // Leading block markers.
      while (k < e && is_blank_char(text[k]) && !is_prot(k)) ++k;
      bool again = true;
      while (again && k < e && !is_prot(k)) {
        again = false;
        if (text[k] == '>') {
          ++k;
          again = true;
        } else if (text[k] == '#') {
          std::size_t h = k;
          while (h < e && text[h] == '#' && !is_prot(h)) ++h;
          if (h - k <= 6 && (h == e || is_blank_char(text[h]))) {
            k = h;
            again = true;
          }
        } else if ((text[k] == '-' || text[k] == '+' || text[k] == '*') && k + 1 < e &&
                   is_blank_char(text[k + 1])) {
          k += 2;
          again = true;
        } else if (is_digit(text[k])) {
          std::size_t d = k;
          while (d < e && is_digit(text[d])) ++d;
          if (d + 1 < e && (text[d] == '.' || text[d] == ')') && is_blank_char(text[d + 1])) {
            k = d + 2;
            again = true;
          }
        }
        while (k < e && is_blank_char(text[k]) && !is_prot(k)) ++k;
      }
      for (; k < e; ++k) {
        const char c = text[k];
        if (is_prot(k)) {
          cleaned.push_back(c);
          continue;
        }
        if (c == '\\' && k + 1 < e && !is_prot(k + 1) && std::ispunct(static_cast<unsigned char>(text[k + 1]))) {
          cleaned.push_back(text[k + 1] == '|' ? ' ' : text[k + 1]);
          ++k;
          continue;
        }
        if (c == '|') {
          cleaned.push_back(' ');
          continue;
        }
        if (c == '`') continue;
        if (c == '*' || c == '_') {
          std::size_t r = k;
          while (r < e && text[r] == c && !is_prot(r)) ++r;
          const char prev = k == b ? '\n' : text[k - 1];
          const char next = r < e ? text[r] : '\n';
          const bool both_ws = is_ws(prev) && is_ws(next);
          bool marker = !both_ws;
          if (c == '_') {
            // Underscores only strip at word edges so subscripts like a_{i} survive.
            const bool opening = is_ws(prev) && !is_ws(next);
            const bool closing = !is_ws(prev) && (is_ws(next) || std::string_view(".,;:!?)").find(next) !=
                                                                     std::string_view::npos);
            marker = opening || closing;
          }
          if (marker) {
            k = r - 1;
            continue;
          }
          cleaned.append(text, k, r - k);
          k = r - 1;
          continue;
        }
        cleaned.push_back(c);
      }
    }
    std::string collapsed = collapse_ws(cleaned);
    if (!(collapsed.empty() && !originally_blank)) out_lines.push_back(std::move(collapsed));
    if (e == text.size()) break;
    b = e + 1;
  }
  // Normalise blank lines: no leading/trailing blanks, no runs.
  std::string result;
  bool pending_blank = false;
  for (const auto& line : out_lines) {
    if (line.empty()) {
      pending_blank = !result.empty();
      continue;
    }
    if (!result.empty()) result += pending_blank ? "\n\n" : "\n";
    pending_blank = false;
    result += line;
  }
  return result;
}

}  // namespace detail

/// Removes structural markup (emphasis, heading hashes, table scaffolding,
/// HTML tags, code fences, formula delimiters) and keeps the words in order.
/// Defined as the fixed point of a single stripping pass, so it is idempotent.
inline std::string strip_structure(std::string_view markdown) {
  std::string current = detail::strip_pass(markdown);
  // Every changing pass shortens the text or removes a pipe, so this terminates.
  for (int i = 0; i < 64; ++i) {
    std::string next = detail::strip_pass(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

}  // namespace docforge
