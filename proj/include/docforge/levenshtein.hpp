#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docforge/utf8.hpp"

namespace docforge {

/// Classic two-row dynamic program over any sequence of equality-comparable
/// symbols (unit insert/delete/substitute costs).
template <typename T>
std::size_t levenshtein_dp(std::span<const T> a, std::span<const T> b) {
  // Common prefix and suffix never contribute to the distance.
  while (!a.empty() && !b.empty() && a.front() == b.front()) {
    a = a.subspan(1);
    b = b.subspan(1);
  }
  while (!a.empty() && !b.empty() && a.back() == b.back()) {
    a = a.first(a.size() - 1);
    b = b.first(b.size() - 1);
  }
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

namespace detail {

// Myers' bit-vector algorithm in its blocked form: one 64-bit column slice per
// block of the pattern, with the horizontal delta carried between blocks.
inline std::size_t levenshtein_myers(std::u32string_view pattern, std::u32string_view text) {
  const std::size_t m = pattern.size();
  const std::size_t words = (m + 63) / 64;
  std::unordered_map<char32_t, std::size_t> slot;
  std::vector<std::uint64_t> peq;
  for (std::size_t i = 0; i < m; ++i) {
    auto [it, inserted] = slot.try_emplace(pattern[i], slot.size());
    if (inserted) peq.resize(peq.size() + words, 0);
    peq[it->second * words + i / 64] |= std::uint64_t{1} << (i % 64);
  }
  // ASCII symbols skip the hash lookup.
  std::vector<std::ptrdiff_t> ascii(128, -1);
  for (const auto& [sym, idx] : slot) {
    if (sym < 128) ascii[sym] = static_cast<std::ptrdiff_t>(idx);
  }
  std::vector<std::uint64_t> pv(words, ~std::uint64_t{0});
  std::vector<std::uint64_t> mv(words, 0);
  const std::uint64_t last_bit = std::uint64_t{1} << ((m - 1) % 64);
  std::size_t score = m;
  for (char32_t c : text) {
    const std::uint64_t* eqs = nullptr;
    if (c < 128) {
      if (ascii[c] >= 0) eqs = &peq[static_cast<std::size_t>(ascii[c]) * words];
    } else if (auto it = slot.find(c); it != slot.end()) {
      eqs = &peq[it->second * words];
    }
    int hin = 1;
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t eq = eqs ? eqs[w] : 0;
      const std::uint64_t p = pv[w];
      const std::uint64_t mm = mv[w];
      const std::uint64_t xv = eq | mm;
      if (hin < 0) eq |= 1;
      const std::uint64_t xh = (((eq & p) + p) ^ p) | eq;
      std::uint64_t ph = mm | ~(xh | p);
      std::uint64_t mh = p & xh;
      const std::uint64_t high = w + 1 == words ? last_bit : (std::uint64_t{1} << 63);
      const int hout = (ph & high) ? 1 : ((mh & high) ? -1 : 0);
      ph <<= 1;
      mh <<= 1;
      if (hin < 0) {
        mh |= 1;
      } else if (hin > 0) {
        ph |= 1;
      }
      pv[w] = mh | ~(xv | ph);
      mv[w] = ph & xv;
      hin = hout;
    }
    score = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(score) + hin);
  }
  return score;
}

}  // namespace detail

/// Edit distance over Unicode scalar values.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  while (!a.empty() && !b.empty() && a.front() == b.front()) {
    a.remove_prefix(1);
    b.remove_prefix(1);
  }
  while (!a.empty() && !b.empty() && a.back() == b.back()) {
    a.remove_suffix(1);
    b.remove_suffix(1);
  }
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  return detail::levenshtein_myers(b, a);
}

/// Edit distance between two UTF-8 strings, counted in scalar values.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a == b) return 0;
  return levenshtein(std::u32string_view(utf8::decode(a)), std::u32string_view(utf8::decode(b)));
}

}  // namespace docforge
