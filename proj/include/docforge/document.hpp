#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace docforge {

enum class Language { En, Zh, Multi, Other };
enum class Layout { DenseText, MultiColumn, TableHeavy, ImageRich };
enum class Source { ScannedPdf, CameraCapture, DigitalBorn };
enum class Genre { Academic, Financial, Legal, Receipt, Other };

/// Semantic tags along the four labelling dimensions.
struct TagVector {
  Language language = Language::Other;
  Layout layout = Layout::DenseText;
  Source source = Source::DigitalBorn;
  Genre genre = Genre::Other;

  auto operator<=>(const TagVector&) const = default;
};

namespace detail {
template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view name, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<E>(i);
  }
  return std::nullopt;
}
inline constexpr std::array<std::string_view, 4> kLanguageNames{"En", "Zh", "Multi", "Other"};
inline constexpr std::array<std::string_view, 4> kLayoutNames{"DenseText", "MultiColumn", "TableHeavy",
                                                              "ImageRich"};
inline constexpr std::array<std::string_view, 3> kSourceNames{"ScannedPdf", "CameraCapture", "DigitalBorn"};
inline constexpr std::array<std::string_view, 5> kGenreNames{"Academic", "Financial", "Legal", "Receipt",
                                                             "Other"};
}  // namespace detail

inline std::string_view to_string(Language v) { return detail::kLanguageNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Layout v) { return detail::kLayoutNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Source v) { return detail::kSourceNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Genre v) { return detail::kGenreNames[static_cast<std::size_t>(v)]; }

inline std::optional<Language> parse_language(std::string_view s) {
  return detail::lookup<Language>(s, detail::kLanguageNames);
}
inline std::optional<Layout> parse_layout(std::string_view s) {
  return detail::lookup<Layout>(s, detail::kLayoutNames);
}
inline std::optional<Source> parse_source(std::string_view s) {
  return detail::lookup<Source>(s, detail::kSourceNames);
}
inline std::optional<Genre> parse_genre(std::string_view s) { return detail::lookup<Genre>(s, detail::kGenreNames); }

/// The unit everything downstream operates on: a generated or curated
/// Markdown page plus whatever side information came with it.
struct Document {
  std::string id;
  std::string markdown;
  std::optional<std::string> reference;
  std::optional<TagVector> tags;
  std::optional<std::vector<double>> embedding;
};

}  // namespace docforge
