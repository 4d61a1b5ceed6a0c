#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docforge/document.hpp"
#include "docforge/error.hpp"
#include "docforge/rng.hpp"
#include "docforge/structure.hpp"
#include "docforge/utf8.hpp"

namespace docforge {

enum class TableStyle { Pipe, Html, HtmlInvisibleBorders };

inline std::string_view to_string(TableStyle s) {
  switch (s) {
    case TableStyle::Pipe: return "Pipe";
    case TableStyle::Html: return "Html";
    case TableStyle::HtmlInvisibleBorders: return "HtmlInvisibleBorders";
  }
  return "?";
}

struct TableSpec {
  std::size_t rows = 2;
  std::size_t cols = 2;
  double span_probability = 0.0;  // ignored for pipe tables
  TableStyle style = TableStyle::Pipe;
  std::uint64_t seed = 0;
};

struct GeneratedTable {
  std::string markdown;
  /// Expanded logical grid: every slot holds the text of the cell covering it.
  std::vector<std::vector<std::string>> grid;
};

namespace detail {

inline constexpr std::string_view kWords[] = {
    "revenue", "margin",  "asset",   "ledger",  "quarter", "region",  "sample",  "vector", "matrix", "kernel",
    "policy",  "reward",  "signal",  "sensor",  "volume",  "pressure", "density", "layer",  "token",  "window",
    "budget",  "invoice", "tariff",  "clause",  "party",   "article", "section", "figure", "result", "method",
    "north",   "south",   "east",    "west",    "alpha",   "beta",    "gamma",   "delta",  "omega",  "sigma",
    "green",   "amber",   "silver",  "copper",  "carbon",  "oxygen",  "harbor",  "bridge", "valley", "summit",
    "early",   "late",    "total",   "average", "median",  "peak",    "base",    "net",    "gross",  "share"};

inline constexpr std::string_view kLetters = "abcdefghijkmnpqrstuvwxyz";

inline std::string word(Rng& rng) { return std::string(kWords[rng.below(std::size(kWords))]); }

inline std::string cell_text(Rng& rng) {
  switch (rng.below(4)) {
    case 0: return std::to_string(rng.between(0, 9999));
    case 1: return std::to_string(rng.between(0, 999)) + "." + std::to_string(rng.between(0, 99));
    case 2: return word(rng) + " " + word(rng);
    default: return word(rng);
  }
}

struct SpanCell {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t rowspan = 1;
  std::size_t colspan = 1;
  std::string text;
};

/// Tiles an R x C grid with cells, some of which span several rows/columns.
inline std::vector<SpanCell> tile_grid(std::size_t rows, std::size_t cols, double span_p, Rng& rng) {
  std::vector<std::vector<bool>> used(rows, std::vector<bool>(cols, false));
  std::vector<SpanCell> cells;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[r][c]) continue;
      SpanCell cell{r, c, 1, 1, cell_text(rng)};
      if (span_p > 0.0 && rng.chance(span_p)) {
        std::size_t max_cs = 0;
        while (c + max_cs < cols && !used[r][c + max_cs]) ++max_cs;
        cell.colspan = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(std::min<std::size_t>(max_cs, 3))));
        cell.rowspan = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(std::min<std::size_t>(rows - r, 3))));
        if (cell.rowspan == 1 && cell.colspan == 1) cell.colspan = std::min<std::size_t>(2, max_cs);
      }
      // Tiling runs row-major, so slots below a free slot are free too.
      for (std::size_t dr = 0; dr < cell.rowspan; ++dr) {
        for (std::size_t dc = 0; dc < cell.colspan; ++dc) used[r + dr][c + dc] = true;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace detail

/// Deterministic table plus its expanded ground truth. Row 0 is a header row.
inline GeneratedTable gen_table(const TableSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw Error(ErrorKind::InvalidArgument, "tables need at least one row and column");
  if (!(spec.span_probability >= 0.0 && spec.span_probability < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "span probability must lie in [0, 1)");
  }
  Rng rng(spec.seed);
  GeneratedTable out;
  out.grid.assign(spec.rows, std::vector<std::string>(spec.cols));

  if (spec.style == TableStyle::Pipe) {
    for (std::size_t r = 0; r < spec.rows; ++r) {
      std::string line = "|";
      for (std::size_t c = 0; c < spec.cols; ++c) {
        out.grid[r][c] = detail::cell_text(rng);
        line += " " + out.grid[r][c] + " |";
      }
      out.markdown += line + "\n";
      if (r == 0) {
        std::string sep = "|";
        for (std::size_t c = 0; c < spec.cols; ++c) sep += "---|";
        out.markdown += sep + "\n";
      }
    }
    out.markdown.pop_back();
    return out;
  }

  const auto cells = detail::tile_grid(spec.rows, spec.cols, spec.span_probability, rng);
  out.markdown = spec.style == TableStyle::HtmlInvisibleBorders
                     ? "<table border=\"0\" style=\"border-collapse: collapse; border: none\">\n"
                     : "<table>\n";
  std::size_t next = 0;
  for (std::size_t r = 0; r < spec.rows; ++r) {
    out.markdown += "<tr>";
    const char* tag = r == 0 ? "th" : "td";
    while (next < cells.size() && cells[next].row == r) {
      const auto& cell = cells[next++];
      out.markdown += std::string("<") + tag;
      if (cell.rowspan > 1) out.markdown += " rowspan=\"" + std::to_string(cell.rowspan) + "\"";
      if (cell.colspan > 1) out.markdown += " colspan=\"" + std::to_string(cell.colspan) + "\"";
      out.markdown += ">" + cell.text + "</" + tag + ">";
      for (std::size_t dr = 0; dr < cell.rowspan; ++dr) {
        for (std::size_t dc = 0; dc < cell.colspan; ++dc) out.grid[cell.row + dr][cell.col + dc] = cell.text;
      }
    }
    out.markdown += "</tr>\n";
  }
  out.markdown += "</table>";
  return out;
}

inline constexpr int kMaxFormulaDepth = 12;

namespace detail {

inline std::string formula_atom(Rng& rng) {
  static constexpr std::string_view greek[] = {"\\alpha", "\\beta", "\\gamma", "\\theta", "\\lambda", "\\pi", "\\infty"};
  if (rng.chance(0.25)) return std::string(greek[rng.below(std::size(greek))]);
  return std::string(1, kLetters[rng.below(kLetters.size())]);
}

inline std::string formula_at_depth(int depth, Rng& rng) {
  if (depth == 0) return formula_atom(rng);
  const std::string inner = formula_at_depth(depth - 1, rng);
  // Side arguments stay at depth <= 1 so the string grows linearly.
  const std::string side = depth >= 2 && rng.chance(0.3) ? "\\hat{" + formula_atom(rng) + "}" : formula_atom(rng);
  switch (rng.below(7)) {
    case 0: return "\\frac{" + inner + "}{" + side + "}";
    case 1: return "\\frac{" + side + "}{" + inner + "}";
    case 2: return "\\sqrt{" + inner + "}";
    case 3: return formula_atom(rng) + "^{" + inner + "}";
    case 4: return formula_atom(rng) + "_{" + inner + "}";
    case 5: return "\\sum_{" + inner + "} " + formula_atom(rng);
    default: return "\\mathbf{" + inner + "} + " + side;
  }
}

}  // namespace detail

/// Valid LaTeX whose maximum brace depth is exactly `depth`. Depth 0 is a single letter.
inline std::string gen_formula(int depth, std::uint64_t seed) {
  if (depth < 0) throw Error(ErrorKind::InvalidArgument, "formula depth must be non-negative");
  if (depth > kMaxFormulaDepth) {
    throw Error(ErrorKind::DepthTooLarge, "formula depth " + std::to_string(depth) + " exceeds " +
                                              std::to_string(kMaxFormulaDepth));
  }
  Rng rng(seed);
  if (depth == 0) return std::string(1, detail::kLetters[rng.below(detail::kLetters.size())]);
  return detail::formula_at_depth(depth, rng);
}

namespace detail {

inline std::string paragraph(Rng& rng) {
  const auto sentences = rng.between(2, 4);
  const auto bold_at = rng.below(static_cast<std::uint64_t>(sentences));
  std::string p;
  for (std::int64_t s = 0; s < sentences; ++s) {
    const auto n = rng.between(6, 12);
    std::string sentence;
    const auto bold_word = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - 1)));
    for (std::int64_t w = 0; w < n; ++w) {
      std::string token = w > 0 && rng.chance(0.1) ? std::to_string(rng.between(1, 999)) : word(rng);
      if (w == 0) token[0] = static_cast<char>(token[0] - 'a' + 'A');
      if (static_cast<std::uint64_t>(s) == bold_at && w == bold_word) {
        token = "**" + token + " " + word(rng) + "**";
        ++w;
      }
      if (!sentence.empty()) sentence += ' ';
      sentence += token;
    }
    if (!p.empty()) p += ' ';
    p += sentence + ".";
  }
  return p;
}

}  // namespace detail

/// A page of paragraphs, tables and display formulas separated by blank lines.
inline Document gen_document(std::size_t n_tables, std::size_t n_formulas, std::size_t n_paragraphs,
                             std::uint64_t seed) {
  Rng rng(seed);
  enum class Block { Paragraph, Table, Formula };
  std::vector<Block> order;
  order.insert(order.end(), n_paragraphs, Block::Paragraph);
  order.insert(order.end(), n_tables, Block::Table);
  order.insert(order.end(), n_formulas, Block::Formula);
  rng.shuffle(std::span<Block>(order));

  std::vector<std::string> blocks;
  for (Block b : order) {
    switch (b) {
      case Block::Paragraph: blocks.push_back(detail::paragraph(rng)); break;
      case Block::Table: {
        TableSpec spec;
        spec.rows = static_cast<std::size_t>(rng.between(2, 6));
        spec.cols = static_cast<std::size_t>(rng.between(1, 5));
        const auto style = rng.below(3);
        spec.style = style == 0 ? TableStyle::Pipe : style == 1 ? TableStyle::Html : TableStyle::HtmlInvisibleBorders;
        spec.span_probability = spec.style == TableStyle::Pipe ? 0.0 : 0.3;
        spec.seed = rng.next();
        blocks.push_back(gen_table(spec).markdown);
        break;
      }
      case Block::Formula: {
        const int depth = static_cast<int>(rng.between(1, 5));
        blocks.push_back("$$\n" + gen_formula(depth, rng.next()) + "\n$$");
        break;
      }
    }
  }
  Document doc;
  doc.id = "synth-" + std::to_string(seed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) doc.markdown += "\n\n";
    doc.markdown += blocks[i];
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Corruptions

enum class CorruptionKind { DropCell, RemoveCloser, BreakBrace, InjectGarbage, ShuffleRows };
enum class RewardComponent { Syntax, Closure, Table, Text };

inline std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::DropCell: return "DropCell";
    case CorruptionKind::RemoveCloser: return "RemoveCloser";
    case CorruptionKind::BreakBrace: return "BreakBrace";
    case CorruptionKind::InjectGarbage: return "InjectGarbage";
    case CorruptionKind::ShuffleRows: return "ShuffleRows";
  }
  return "?";
}

inline std::string_view to_string(RewardComponent c) {
  switch (c) {
    case RewardComponent::Syntax: return "r_syntax";
    case RewardComponent::Closure: return "r_closure";
    case RewardComponent::Table: return "r_table";
    case RewardComponent::Text: return "r_text";
  }
  return "?";
}

inline std::optional<CorruptionKind> parse_corruption_kind(std::string_view s) {
  for (auto k : {CorruptionKind::DropCell, CorruptionKind::RemoveCloser, CorruptionKind::BreakBrace,
                 CorruptionKind::InjectGarbage, CorruptionKind::ShuffleRows}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// The reward component each corruption is designed to lower.
inline RewardComponent target_component(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::DropCell: return RewardComponent::Table;
    case CorruptionKind::RemoveCloser: return RewardComponent::Closure;
    case CorruptionKind::BreakBrace: return RewardComponent::Syntax;
    case CorruptionKind::InjectGarbage:
    case CorruptionKind::ShuffleRows: return RewardComponent::Text;
  }
  return RewardComponent::Text;
}

struct Corruption {
  CorruptionKind kind = CorruptionKind::DropCell;
  std::uint64_t seed = 0;
};

struct CorruptedDocument {
  Document doc;
  RewardComponent target = RewardComponent::Table;
};

namespace detail {

struct RowSlice {
  std::size_t begin;
  std::size_t end;
};

/// Byte ranges of the data rows of a table (pipe lines, or `<tr>...</tr>` elements).
inline std::vector<RowSlice> table_rows(std::string_view md, const TableGrid& t) {
  std::vector<RowSlice> rows;
  const auto span = md.substr(t.source_span.begin, t.source_span.size());
  if (t.origin == TableOrigin::PipeTable) {
    for (const auto& ln : split_lines(span)) rows.push_back({t.source_span.begin + ln.begin, t.source_span.begin + ln.end});
    // The second line of a pipe table is its separator.
    if (rows.size() >= 2) rows.erase(rows.begin() + 1);
    return rows;
  }
  std::size_t pos = 0;
  while ((pos = span.find("<tr", pos)) != std::string_view::npos) {
    const std::size_t close = span.find("</tr>", pos);
    if (close == std::string_view::npos) break;
    rows.push_back({t.source_span.begin + pos, t.source_span.begin + close + 5});
    pos = close + 5;
  }
  return rows;
}

struct HtmlCellSlice {
  std::size_t begin;
  std::size_t end;
  bool spanning;
};

inline std::vector<HtmlCellSlice> html_cells(std::string_view md, RowSlice row) {
  std::vector<HtmlCellSlice> cells;
  std::size_t i = row.begin;
  while (i < row.end) {
    if (md[i] == '<') {
      if (auto tag = parse_html_tag(md, i); tag && !tag->closing && (tag->name == "td" || tag->name == "th")) {
        const std::string closer = "</" + tag->name + ">";
        const std::size_t close = md.find(closer, tag->end);
        if (close == std::string_view::npos || close > row.end) break;
        const bool spanning = tag->attrs.find("span") != std::string::npos;
        cells.push_back({tag->begin, close + closer.size(), spanning});
        i = close + closer.size();
        continue;
      }
    }
    ++i;
  }
  return cells;
}

inline char garbage_char(Rng& rng) {
  static constexpr char pool[] = {'\x01', '\x02', '\x03', '\x04', '\x05', '\x06', '\x07', '\x08',
                                  '\x0e', '\x0f', '\x10', '\x11', '\x12', '\x13', '\x14', '\x15',
                                  '\x16', '\x17', '\x18', '\x19', '\x1a', '\x1b', '\x1c', '\x7f'};
  return pool[rng.below(sizeof(pool))];
}

}  // namespace detail

/// Applies one labelled corruption. The result keeps the clean text as its reference.
inline CorruptedDocument corrupt(const Document& clean, const Corruption& c) {
  Rng rng(c.seed);
  const std::string& md = clean.markdown;
  CorruptedDocument out;
  out.doc = clean;
  out.doc.reference = clean.reference ? clean.reference : std::optional<std::string>(clean.markdown);
  out.target = target_component(c.kind);
  std::string& dst = out.doc.markdown;
  auto absent = [&](const char* what) {
    return Error(ErrorKind::TargetAbsent, std::string(to_string(c.kind)) + " needs " + what);
  };

  switch (c.kind) {
    case CorruptionKind::DropCell: {
      const auto tables = extract_tables(md);
      if (tables.empty()) throw absent("a table");
      const auto& t = tables[rng.below(tables.size())];
      const auto rows = detail::table_rows(md, t);
      if (rows.empty()) throw absent("a table row");
      if (t.origin == TableOrigin::PipeTable) {
        const auto row = rows[rng.below(rows.size())];
        const auto line = std::string_view(md).substr(row.begin, row.end - row.begin);
        // Remove the last cell together with its trailing pipe.
        const std::size_t last = line.find_last_of('|');
        const std::size_t prev = line.find_last_of('|', last == 0 ? 0 : last - 1);
        const std::size_t cut_begin = prev == std::string_view::npos ? last : prev + 1;
        std::string replaced(line.substr(0, cut_begin));
        while (!replaced.empty() && replaced.back() == ' ') replaced.pop_back();
        if (replaced.empty()) replaced = "|";
        dst = md.substr(0, row.begin) + replaced + md.substr(row.end);
      } else {
        std::vector<detail::HtmlCellSlice> plain;
        std::vector<detail::HtmlCellSlice> any;
        for (const auto& row : rows) {
          for (const auto& cell : detail::html_cells(md, row)) {
            any.push_back(cell);
            if (!cell.spanning) plain.push_back(cell);
          }
        }
        if (any.empty()) throw absent("a table cell");
        const auto& pool = plain.empty() ? any : plain;
        const auto cell = pool[rng.below(pool.size())];
        dst = md.substr(0, cell.begin) + md.substr(cell.end);
      }
      break;
    }
    case CorruptionKind::RemoveCloser: {
      const auto tree = build_structure_tree(md);
      std::vector<const StructNode*> closers;
      for (const auto& n : tree.nodes) {
        const bool kind_ok = n.kind == NodeKind::HtmlTag || n.kind == NodeKind::Strong || n.kind == NodeKind::Emphasis;
        if (kind_ok && n.close_pos && n.close_len > 0) closers.push_back(&n);
      }
      if (closers.empty()) throw absent("a closed emphasis or HTML element");
      const auto* n = closers[rng.below(closers.size())];
      dst = md.substr(0, *n->close_pos) + md.substr(*n->close_pos + n->close_len);
      break;
    }
    case CorruptionKind::BreakBrace: {
      const auto formulas = extract_formulas(md);
      if (formulas.empty()) throw absent("a formula");
      const auto& f = formulas[rng.below(formulas.size())];
      const std::size_t closer_len = f.delimiter == FormulaDelimiter::SingleDollar ? 1 : 2;
      const std::size_t at = f.source_span.end - closer_len;
      dst = md.substr(0, at) + "{" + md.substr(at);
      break;
    }
    case CorruptionKind::InjectGarbage: {
      // One line of control characters; g >= 2(n+2)/3 gives a non-printable share of at least 0.4.
      const std::size_t n = utf8::length(md);
      const std::size_t garbage = (2 * (n + 2) + 2) / 3;
      std::vector<std::size_t> breaks{0, md.size()};
      for (std::size_t p = md.find("\n\n"); p != std::string::npos; p = md.find("\n\n", p + 2)) breaks.push_back(p);
      std::sort(breaks.begin(), breaks.end());
      breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
      const std::size_t at = breaks[rng.below(breaks.size())];
      std::string block;
      for (std::size_t i = 0; i < garbage; ++i) block += detail::garbage_char(rng);
      if (at == 0) {
        dst = block + "\n\n" + md;
      } else if (at == md.size()) {
        dst = md + "\n\n" + block;
      } else {
        dst = md.substr(0, at) + "\n\n" + block + md.substr(at);
      }
      break;
    }
    case CorruptionKind::ShuffleRows: {
      struct Pair {
        detail::RowSlice a;
        detail::RowSlice b;
      };
      std::vector<Pair> pairs;
      for (const auto& t : extract_tables(md)) {
        const auto rows = detail::table_rows(md, t);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (std::size_t j = i + 1; j < rows.size(); ++j) {
            const auto ta = strip_structure(md.substr(rows[i].begin, rows[i].end - rows[i].begin));
            const auto tb = strip_structure(md.substr(rows[j].begin, rows[j].end - rows[j].begin));
            if (!ta.empty() && !tb.empty() && ta != tb) pairs.push_back({rows[i], rows[j]});
          }
        }
      }
      if (pairs.empty()) throw absent("a table with two distinct non-empty rows");
      const auto p = pairs[rng.below(pairs.size())];
      dst = md.substr(0, p.a.begin) + md.substr(p.b.begin, p.b.end - p.b.begin) + md.substr(p.a.end, p.b.begin - p.a.end) +
            md.substr(p.a.begin, p.a.end - p.a.begin) + md.substr(p.b.end);
      break;
    }
  }
  return out;
}

}  // namespace docforge
