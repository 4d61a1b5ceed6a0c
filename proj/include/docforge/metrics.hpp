#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docforge/levenshtein.hpp"
#include "docforge/structure.hpp"
#include "docforge/utf8.hpp"

namespace docforge {

/// Levenshtein distance over code points divided by the longer length; 0 for two empty strings.
inline double normalized_edit_distance(std::string_view a, std::string_view b) {
  const auto ua = utf8::decode(a);
  const auto ub = utf8::decode(b);
  const std::size_t denom = std::max<std::size_t>(1, std::max(ua.size(), ub.size()));
  return static_cast<double>(levenshtein(std::u32string_view(ua), std::u32string_view(ub))) /
         static_cast<double>(denom);
}

/// Line-granular edit distance between tag-stripped texts, normalised by the longer line count.
inline double reading_order_edit(std::string_view pred_markdown, std::string_view ref_markdown) {
  auto lines_of = [](std::string_view md) {
    std::vector<std::string> out;
    const std::string text = strip_structure(md);
    const std::string_view s = text;
    for (const auto& ln : detail::split_lines(s)) {
      auto t = detail::trim(s.substr(ln.begin, ln.end - ln.begin));
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  };
  const auto a = lines_of(pred_markdown);
  const auto b = lines_of(ref_markdown);
  const std::size_t denom = std::max<std::size_t>(1, std::max(a.size(), b.size()));
  return static_cast<double>(levenshtein_dp<std::string>(a, b)) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// Ordered labelled trees

enum class TableNodeKind { Table, Row, Cell };

struct TreeLabel {
  TableNodeKind kind = TableNodeKind::Cell;
  std::string text;
  int rowspan = 1;
  int colspan = 1;

  bool operator==(const TreeLabel&) const = default;
};

struct TableTree {
  struct Node {
    TreeLabel label;
    std::vector<std::size_t> children;
  };
  /// nodes[0] is the root.
  std::vector<Node> nodes;

  std::size_t size() const { return nodes.size(); }

  std::size_t add(TreeLabel label, std::optional<std::size_t> parent = std::nullopt) {
    nodes.push_back({std::move(label), {}});
    const std::size_t id = nodes.size() - 1;
    if (parent) nodes[*parent].children.push_back(id);
    return id;
  }
};

/// Table -> Row* -> Cell(text, spans)*
inline TableTree table_tree(const TableGrid& grid) {
  TableTree t;
  const auto root = t.add({TableNodeKind::Table, "", 1, 1});
  for (const auto& row : grid.rows) {
    const auto r = t.add({TableNodeKind::Row, "", 1, 1}, root);
    for (const auto& cell : row) t.add({TableNodeKind::Cell, cell.text, cell.rowspan, cell.colspan}, r);
  }
  return t;
}

/// Relabel cost: 1 across node kinds or cell spans, otherwise 1 for differing
/// cell text unless `structure_only`.
inline int relabel_cost(const TreeLabel& a, const TreeLabel& b, bool structure_only) {
  if (a.kind != b.kind) return 1;
  if (a.kind != TableNodeKind::Cell) return 0;
  if (a.rowspan != b.rowspan || a.colspan != b.colspan) return 1;
  if (structure_only) return 0;
  return a.text == b.text ? 0 : 1;
}

namespace detail {

struct Postorder {
  std::vector<const TreeLabel*> label;  // 1-based
  std::vector<std::size_t> lml;         // left-most leaf, 1-based
  std::vector<std::size_t> keyroots;
};

inline Postorder postorder(const TableTree& t) {
  Postorder p;
  p.label.push_back(nullptr);
  p.lml.push_back(0);
  if (t.nodes.empty()) return p;
  // Iterative post-order traversal recording left-most leaves.
  struct Frame {
    std::size_t node;
    std::size_t next_child;
    std::size_t leftmost;
  };
  std::vector<Frame> stack{{0, 0, 0}};
  while (!stack.empty()) {
    auto& f = stack.back();
    const auto& kids = t.nodes[f.node].children;
    if (f.next_child < kids.size()) {
      stack.push_back({kids[f.next_child++], 0, 0});
      continue;
    }
    p.label.push_back(&t.nodes[f.node].label);
    const std::size_t idx = p.label.size() - 1;
    const std::size_t lml = kids.empty() ? idx : f.leftmost;
    p.lml.push_back(lml);
    stack.pop_back();
    if (!stack.empty() && stack.back().next_child == 1) stack.back().leftmost = lml;
  }
  const std::size_t n = p.label.size() - 1;
  std::vector<bool> seen(n + 1, false);
  for (std::size_t i = n; i >= 1; --i) {
    if (!seen[p.lml[i]]) {
      p.keyroots.push_back(i);
      seen[p.lml[i]] = true;
    }
  }
  std::sort(p.keyroots.begin(), p.keyroots.end());
  return p;
}

}  // namespace detail

/// Zhang-Shasha ordered tree edit distance with unit insert/delete.
inline std::size_t tree_edit_distance(const TableTree& t1, const TableTree& t2, bool structure_only = false) {
  const auto a = detail::postorder(t1);
  const auto b = detail::postorder(t2);
  const std::size_t n = t1.size();
  const std::size_t m = t2.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::vector<std::size_t>> td(n + 1, std::vector<std::size_t>(m + 1, 0));
  std::vector<std::vector<std::size_t>> fd(n + 2, std::vector<std::size_t>(m + 2, 0));
  for (auto i : a.keyroots) {
    for (auto j : b.keyroots) {
      const std::size_t li = a.lml[i];
      const std::size_t lj = b.lml[j];
      // fd indices are shifted: x stands for node li-1+x.
      fd[0][0] = 0;
      for (std::size_t x = 1; x <= i - li + 1; ++x) fd[x][0] = fd[x - 1][0] + 1;
      for (std::size_t y = 1; y <= j - lj + 1; ++y) fd[0][y] = fd[0][y - 1] + 1;
      for (std::size_t x = 1; x <= i - li + 1; ++x) {
        const std::size_t ni = li + x - 1;
        for (std::size_t y = 1; y <= j - lj + 1; ++y) {
          const std::size_t nj = lj + y - 1;
          const std::size_t del = fd[x - 1][y] + 1;
          const std::size_t ins = fd[x][y - 1] + 1;
          if (a.lml[ni] == li && b.lml[nj] == lj) {
            const std::size_t rel =
                fd[x - 1][y - 1] + static_cast<std::size_t>(relabel_cost(*a.label[ni], *b.label[nj], structure_only));
            fd[x][y] = std::min({del, ins, rel});
            td[ni][nj] = fd[x][y];
          } else {
            const std::size_t px = a.lml[ni] - li;
            const std::size_t py = b.lml[nj] - lj;
            fd[x][y] = std::min({del, ins, fd[px][py] + td[ni][nj]});
          }
        }
      }
    }
  }
  return td[n][m];
}

/// 1 - TED / max(|t1|, |t2|), clamped to [0, 1].
inline double teds(const TableTree& t1, const TableTree& t2, bool structure_only = false) {
  const std::size_t denom = std::max(t1.size(), t2.size());
  if (denom == 0) return 1.0;
  const double d = static_cast<double>(tree_edit_distance(t1, t2, structure_only));
  return std::clamp(1.0 - d / static_cast<double>(denom), 0.0, 1.0);
}

/// Structure-only TEDS: cell text is ignored.
inline double teds_s(const TableTree& t1, const TableTree& t2) { return teds(t1, t2, true); }

/// Mean TEDS over tables paired in source order; unmatched tables score 0.
/// Empty when neither document has a table.
inline std::optional<double> document_teds(std::string_view pred_markdown, std::string_view ref_markdown,
                                           bool structure_only = false) {
  const auto p = extract_tables(pred_markdown);
  const auto r = extract_tables(ref_markdown);
  const std::size_t n = std::max(p.size(), r.size());
  if (n == 0) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < std::min(p.size(), r.size()); ++i) {
    sum += teds(table_tree(p[i]), table_tree(r[i]), structure_only);
  }
  return sum / static_cast<double>(n);
}

}  // namespace docforge
