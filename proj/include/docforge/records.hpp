#pragma once

// JSONL document records: {"id", "markdown", "reference"?, "embedding"?, "tags"?}.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "docforge/document.hpp"
#include "docforge/error.hpp"
#include "docforge/refinery.hpp"

namespace docforge {

using Json = nlohmann::ordered_json;

struct Record {
  std::size_t line = 0;  // 1-based line number in the input stream
  Json raw;
  Document doc;
};

inline Json tags_to_json(const TagVector& t) {
  return {{"language", to_string(t.language)},
          {"layout", to_string(t.layout)},
          {"source", to_string(t.source)},
          {"genre", to_string(t.genre)}};
}

inline TagVector tags_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedRecord, "'tags' must be an object");
  TagVector t;
  auto field = [&](const char* key, auto parse, auto& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_string()) throw Error(ErrorKind::MalformedRecord, std::string("tags.") + key + " must be a string");
    const auto parsed = parse(v.template get<std::string>());
    if (!parsed) throw Error(ErrorKind::MalformedRecord, std::string("unknown tags.") + key + " value");
    out = *parsed;
  };
  field("language", parse_language, t.language);
  field("layout", parse_layout, t.layout);
  field("source", parse_source, t.source);
  field("genre", parse_genre, t.genre);
  return t;
}

inline Document document_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedRecord, "record is not a JSON object");
  Document d;
  if (!j.contains("id") || !j.at("id").is_string()) {
    throw Error(ErrorKind::MalformedRecord, "record needs a string 'id'");
  }
  d.id = j.at("id").get<std::string>();
  if (!j.contains("markdown") || !j.at("markdown").is_string()) {
    throw Error(ErrorKind::MalformedRecord, "record needs a string 'markdown'");
  }
  d.markdown = j.at("markdown").get<std::string>();
  if (j.contains("reference") && !j.at("reference").is_null()) {
    if (!j.at("reference").is_string()) throw Error(ErrorKind::MalformedRecord, "'reference' must be a string");
    d.reference = j.at("reference").get<std::string>();
  }
  if (j.contains("embedding") && !j.at("embedding").is_null()) {
    const auto& e = j.at("embedding");
    if (!e.is_array()) throw Error(ErrorKind::MalformedRecord, "'embedding' must be an array of numbers");
    std::vector<double> v;
    for (const auto& x : e) {
      if (!x.is_number()) throw Error(ErrorKind::MalformedRecord, "'embedding' must be an array of numbers");
      v.push_back(x.get<double>());
    }
    d.embedding = std::move(v);
  }
  if (j.contains("tags") && !j.at("tags").is_null()) d.tags = tags_from_json(j.at("tags"));
  return d;
}

inline Json document_to_json(const Document& d) {
  Json j;
  j["id"] = d.id;
  j["markdown"] = d.markdown;
  if (d.reference) j["reference"] = *d.reference;
  if (d.embedding) j["embedding"] = *d.embedding;
  if (d.tags) j["tags"] = tags_to_json(*d.tags);
  return j;
}

/// Reads every non-blank line. Throws MalformedRecord naming the line on the first bad record.
inline std::vector<Record> read_records(std::istream& in) {
  std::vector<Record> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Record r;
    r.line = n;
    try {
      r.raw = Json::parse(line);
      r.doc = document_from_json(r.raw);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(n) + ": not valid JSON");
    } catch (const Error& e) {
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(n) + ": " + e.message());
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_record(std::ostream& out, const Json& j) { out << j.dump() << '\n'; }

inline Json verdict_to_json(const SieveVerdict& v) {
  Json reasons = Json::array();
  for (auto r : v.reasons) reasons.push_back(to_string(r));
  return {{"decision", to_string(v.decision)}, {"reasons", reasons}};
}

/// HardCase repository line: {id, markdown, reasons}.
inline void write_hardcase(std::ostream& out, const Document& d, const SieveVerdict& v) {
  Json j;
  j["id"] = d.id;
  j["markdown"] = d.markdown;
  j["reasons"] = verdict_to_json(v)["reasons"];
  write_record(out, j);
}

}  // namespace docforge
