#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "descaudit/detail/csv.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/lexicon.hpp"

namespace descaudit {

enum class Department { None, Men, Women, Boys, Girls, Unisex };

inline const char* to_string(Department d) {
  switch (d) {
    case Department::None: return "None";
    case Department::Men: return "Men";
    case Department::Women: return "Women";
    case Department::Boys: return "Boys";
    case Department::Girls: return "Girls";
    case Department::Unisex: return "Unisex";
  }
  return "None";
}

struct Aspect {
  std::string name;
  std::string value;

  friend bool operator==(const Aspect&, const Aspect&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  size_t first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  size_t last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::optional<Department> department_from_value(std::string_view raw) {
  std::string v = lower(trim(raw));
  if (v == "men") return Department::Men;
  if (v == "women") return Department::Women;
  if (v == "boys") return Department::Boys;
  if (v == "girls") return Department::Girls;
  if (v.rfind("unisex", 0) == 0) return Department::Unisex;
  return std::nullopt;
}

}  // namespace detail

struct ProductListing {
  std::string id;
  std::string title;
  std::vector<std::string> category_path;  // root first
  std::vector<Aspect> aspects;             // input order, names unique
  std::optional<std::string> condition;
  Department department = Department::None;

  friend bool operator==(const ProductListing&,
                         const ProductListing&) = default;

  const Aspect* find_aspect(std::string_view name) const {
    std::string needle = detail::lower(name);
    for (const auto& aspect : aspects) {
      if (detail::lower(aspect.name) == needle) return &aspect;
    }
    return nullptr;
  }
};

// Department precedence: the seller's explicit Department aspect wins over
// gendered category segments; segments are scanned root first.
inline Department derive_department(const std::vector<Aspect>& aspects,
                                    const std::vector<std::string>& categories) {
  for (const auto& aspect : aspects) {
    if (detail::lower(aspect.name) == "department") {
      if (auto dep = detail::department_from_value(aspect.value)) return *dep;
    }
  }
  for (const auto& segment : categories) {
    if (auto dep = detail::department_from_value(segment)) return *dep;
  }
  return Department::None;
}

// Parses the `Key: Value` record layout:
//   Title: ...            (required)
//   Categories: A:B:C     (colon-separated hierarchy, per-segment trimming)
//   Condition: ...
//   <anything else>: ...  (aspect)
inline ProductListing parse_input_block(std::string_view block,
                                        std::string id = {}) {
  ProductListing listing;
  listing.id = std::move(id);

  bool have_title = false;
  bool have_categories = false;
  std::set<std::string> seen_aspects;

  std::istringstream in{std::string(block)};
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    size_t colon = trimmed.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::MalformedLine, "expected `Key: Value`, got '" +
                      trimmed + "'", line_no);
    }
    std::string key = detail::trim(trimmed.substr(0, colon));
    std::string value = detail::trim(trimmed.substr(colon + 1));
    std::string key_lower = detail::lower(key);
    if (key.empty()) {
      throw Error(ErrorCode::MalformedLine, "empty key", line_no);
    }

    if (key_lower == "title") {
      if (have_title) {
        throw Error(ErrorCode::DuplicateKey, "second Title line", line_no);
      }
      listing.title = value;
      have_title = true;
    } else if (key_lower == "categories") {
      if (have_categories) {
        throw Error(ErrorCode::DuplicateKey, "second Categories line", line_no);
      }
      have_categories = true;
      std::string segment;
      std::istringstream path(value);
      while (std::getline(path, segment, ':')) {
        std::string cleaned = detail::trim(segment);
        if (!cleaned.empty()) listing.category_path.push_back(cleaned);
      }
    } else if (key_lower == "condition") {
      if (listing.condition) {
        throw Error(ErrorCode::DuplicateKey, "second Condition line", line_no);
      }
      listing.condition = value;
    } else {
      if (!seen_aspects.insert(key_lower).second) {
        throw Error(ErrorCode::DuplicateKey, "duplicate aspect '" + key + "'",
                    line_no);
      }
      listing.aspects.push_back({key, value});
    }
  }
  if (!have_title) {
    throw Error(ErrorCode::MissingTitle, "block has no Title line");
  }
  listing.department = derive_department(listing.aspects, listing.category_path);
  return listing;
}

// Inverse of parse_input_block up to field identity (Condition is emitted
// last; the parser does not care where it sat).
inline std::string to_input_block(const ProductListing& listing) {
  std::string out = "Title: " + listing.title + "\n";
  if (!listing.category_path.empty()) {
    out += "Categories: ";
    for (size_t i = 0; i < listing.category_path.size(); ++i) {
      if (i) out += ':';
      out += listing.category_path[i];
    }
    out += '\n';
  }
  for (const auto& aspect : listing.aspects) {
    out += aspect.name + ": " + aspect.value + "\n";
  }
  if (listing.condition) {
    out += "Condition: " + *listing.condition + "\n";
  }
  return out;
}

struct DescribedRecord {
  ProductListing listing;
  std::string description;
  std::string model_tag;
};

struct Corpus {
  std::vector<DescribedRecord> records;
  std::string provenance;
};

enum class CorpusFormat { JsonLines, Csv };

namespace detail {

inline ProductListing listing_from_json(const nlohmann::json& obj,
                                        const std::string& id, long line_no) {
  ProductListing listing;
  listing.id = id;
  if (!obj.contains("title") || !obj["title"].is_string()) {
    throw Error(ErrorCode::SchemaError, "listing.title missing", line_no);
  }
  listing.title = obj["title"].get<std::string>();
  if (obj.contains("categories")) {
    if (!obj["categories"].is_array()) {
      throw Error(ErrorCode::SchemaError, "listing.categories must be an array",
                  line_no);
    }
    for (const auto& seg : obj["categories"]) {
      listing.category_path.push_back(seg.get<std::string>());
    }
  }
  if (obj.contains("aspects")) {
    std::set<std::string> seen;
    for (const auto& item : obj["aspects"]) {
      Aspect aspect{item.at("name").get<std::string>(),
                    item.at("value").get<std::string>()};
      if (!seen.insert(lower(aspect.name)).second) {
        throw Error(ErrorCode::SchemaError,
                    "duplicate aspect '" + aspect.name + "'", line_no);
      }
      listing.aspects.push_back(std::move(aspect));
    }
  }
  if (obj.contains("condition") && !obj["condition"].is_null()) {
    listing.condition = obj["condition"].get<std::string>();
  }
  listing.department = derive_department(listing.aspects, listing.category_path);
  return listing;
}

inline void append_record(Corpus& corpus, std::set<std::string>& seen_ids,
                          DescribedRecord record, long line_no) {
  if (record.listing.id.empty()) {
    throw Error(ErrorCode::SchemaError, "record id must be nonempty", line_no);
  }
  if (detail::trim(record.description).empty()) {
    throw Error(ErrorCode::SchemaError, "description must be nonempty",
                line_no);
  }
  if (!seen_ids.insert(record.listing.id).second) {
    throw Error(ErrorCode::DuplicateId,
                "record id '" + record.listing.id + "' repeats", line_no);
  }
  corpus.records.push_back(std::move(record));
}

}  // namespace detail

// Line-delimited JSON: {"id", "description", "listing"|"input_block"
// [, "model_tag"]}. Input order is preserved.
inline Corpus load_corpus_jsonl(std::istream& in, std::string provenance) {
  Corpus corpus;
  corpus.provenance = std::move(provenance);
  std::set<std::string> seen_ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw Error(ErrorCode::SchemaError, "invalid JSON object", line_no);
    }
    if (!obj.contains("id") || !obj["id"].is_string()) {
      throw Error(ErrorCode::SchemaError, "missing string field 'id'", line_no);
    }
    if (!obj.contains("description") || !obj["description"].is_string()) {
      throw Error(ErrorCode::SchemaError, "missing string field 'description'",
                  line_no);
    }
    std::string id = obj["id"].get<std::string>();
    DescribedRecord record;
    if (obj.contains("listing")) {
      record.listing = detail::listing_from_json(obj["listing"], id, line_no);
    } else if (obj.contains("input_block")) {
      try {
        record.listing =
            parse_input_block(obj["input_block"].get<std::string>(), id);
      } catch (const Error& e) {
        throw Error(ErrorCode::SchemaError,
                    std::string("bad input_block: ") + e.what(), line_no);
      }
    } else {
      throw Error(ErrorCode::SchemaError,
                  "record needs either 'listing' or 'input_block'", line_no);
    }
    record.description = obj["description"].get<std::string>();
    if (obj.contains("model_tag") && obj["model_tag"].is_string()) {
      record.model_tag = obj["model_tag"].get<std::string>();
    }
    detail::append_record(corpus, seen_ids, std::move(record), line_no);
  }
  return corpus;
}

// CSV with header `id,input_block,description[,model_tag]`, RFC 4180
// quoting.
inline Corpus load_corpus_csv(std::istream& in, std::string provenance) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto rows = detail::parse_csv(buffer.str());
  if (rows.empty()) {
    throw Error(ErrorCode::SchemaError, "empty CSV corpus", 1);
  }
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> long {
    for (size_t i = 0; i < header.size(); ++i) {
      if (detail::lower(detail::trim(header[i])) == name) {
        return static_cast<long>(i);
      }
    }
    return -1;
  };
  long id_col = column("id");
  long block_col = column("input_block");
  long desc_col = column("description");
  long tag_col = column("model_tag");
  if (id_col < 0 || block_col < 0 || desc_col < 0) {
    throw Error(ErrorCode::SchemaError,
                "CSV header must name id,input_block,description", 1);
  }

  Corpus corpus;
  corpus.provenance = std::move(provenance);
  std::set<std::string> seen_ids;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    long line_no = static_cast<long>(r) + 1;
    size_t needed = static_cast<size_t>(std::max({id_col, block_col, desc_col}));
    if (row.size() <= needed) {
      throw Error(ErrorCode::SchemaError, "row has too few fields", line_no);
    }
    DescribedRecord record;
    try {
      record.listing = parse_input_block(row[static_cast<size_t>(block_col)],
                                         row[static_cast<size_t>(id_col)]);
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError,
                  std::string("bad input_block: ") + e.what(), line_no);
    }
    record.description = row[static_cast<size_t>(desc_col)];
    if (tag_col >= 0 && static_cast<size_t>(tag_col) < row.size()) {
      record.model_tag = row[static_cast<size_t>(tag_col)];
    }
    detail::append_record(corpus, seen_ids, std::move(record), line_no);
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open corpus file " + path);
  }
  return format == CorpusFormat::JsonLines ? load_corpus_jsonl(in, path)
                                           : load_corpus_csv(in, path);
}

struct NeutralityConfig {
  // A listing is gender-neutral only if no category segment matches one of
  // these (case-insensitive) and the department is None.
  std::vector<std::string> gendered_segments = {
      "Clothing",
      "Shoes",
      "Accessories",
      "Clothing, Shoes & Accessories",
      "Men",
      "Women",
      "Boys",
      "Girls",
  };
};

inline bool is_gender_neutral(const ProductListing& listing,
                              const NeutralityConfig& config = {}) {
  if (listing.department != Department::None) return false;
  for (const auto& segment : listing.category_path) {
    std::string seg = detail::lower(detail::trim(segment));
    for (const auto& gendered : config.gendered_segments) {
      if (seg == detail::lower(gendered)) return false;
    }
  }
  return true;
}

}  // namespace descaudit
