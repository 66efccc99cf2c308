#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "descaudit/errors.hpp"

namespace descaudit {

using TokenSequence = std::vector<std::string>;

// Sentinel emitted by mask_gendered_terms. Never produced by normalize(),
// so masking is idempotent.
inline constexpr std::string_view kGenderMask = "<GEN>";

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
  return std::ispunct(c) && c != '\'';
}

// Replaces a few common UTF-8 typographic marks so the tokenizer only has
// to deal with ASCII: curly apostrophe -> ', dashes and curly double
// quotes -> space.
inline std::string fold_typographic_marks(std::string_view text) {
  static const std::vector<std::pair<std::string_view, char>> kFolds = {
      {"\xE2\x80\x99", '\''},  // right single quote
      {"\xE2\x80\x98", ' '},   // left single quote
      {"\xE2\x80\x9C", ' '},   // left double quote
      {"\xE2\x80\x9D", ' '},   // right double quote
      {"\xE2\x80\x93", ' '},   // en dash
      {"\xE2\x80\x94", ' '},   // em dash
      {"\xE2\x80\xA6", ' '},   // ellipsis
  };
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    bool folded = false;
    for (const auto& [seq, repl] : kFolds) {
      if (text.compare(i, seq.size(), seq) == 0) {
        out += repl;
        i += seq.size();
        folded = true;
        break;
      }
    }
    if (!folded) {
      out += text[i];
      ++i;
    }
  }
  return out;
}

}  // namespace detail

// Case-folds, maps punctuation (all but apostrophes) to spaces, strips
// possessive suffixes, then drops remaining apostrophes as separators:
// "boy's" -> boy, "don't" -> don t.
inline TokenSequence normalize(std::string_view text) {
  std::string folded = detail::fold_typographic_marks(text);
  std::string mapped;
  mapped.reserve(folded.size());
  for (unsigned char c : folded) {
    if (c == '-' || detail::is_ascii_punct(c) || std::isspace(c)) {
      mapped += ' ';
    } else {
      mapped += static_cast<char>(std::tolower(c));
    }
  }

  TokenSequence tokens;
  std::istringstream in(mapped);
  std::string raw;
  while (in >> raw) {
    // possessive suffixes: 's or a bare trailing apostrophe
    if (raw.size() >= 2 && raw.compare(raw.size() - 2, 2, "'s") == 0) {
      raw.erase(raw.size() - 2);
    } else if (!raw.empty() && raw.back() == '\'') {
      raw.pop_back();
    }
    // remaining apostrophes separate tokens ("don't" -> don t)
    std::string piece;
    for (char c : raw) {
      if (c == '\'') {
        if (!piece.empty()) tokens.push_back(piece);
        piece.clear();
      } else {
        piece += c;
      }
    }
    if (!piece.empty()) tokens.push_back(piece);
  }
  return tokens;
}

inline std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

enum class PhraseSource {
  BodySize,
  GenderedTerms,
  NonbinaryPairs,
  CallToAction,
  ExplicitExclusion,
  Custom,
};

struct MatchSpan {
  TokenSequence phrase;
  size_t start_token = 0;
  size_t end_token = 0;  // exclusive

  friend bool operator==(const MatchSpan&, const MatchSpan&) = default;
};

// An immutable set of normalized phrases with a first-token index for
// matching.
class PhraseSet {
 public:
  PhraseSet() = default;

  PhraseSet(std::string name, PhraseSource source,
            const std::vector<std::string>& raw_phrases)
      : name_(std::move(name)), source_(source) {
    std::set<TokenSequence> unique;
    for (const auto& raw : raw_phrases) {
      TokenSequence tokens = normalize(raw);
      if (tokens.empty()) continue;
      unique.insert(std::move(tokens));
    }
    phrases_.assign(unique.begin(), unique.end());
    for (size_t i = 0; i < phrases_.size(); ++i) {
      by_first_token_[phrases_[i].front()].push_back(i);
    }
    // longest first so reported matches come out longer-phrase-first
    for (auto& [token, indices] : by_first_token_) {
      std::sort(indices.begin(), indices.end(), [this](size_t a, size_t b) {
        if (phrases_[a].size() != phrases_[b].size())
          return phrases_[a].size() > phrases_[b].size();
        return phrases_[a] < phrases_[b];
      });
    }
  }

  const std::string& name() const { return name_; }
  PhraseSource source() const { return source_; }
  const std::vector<TokenSequence>& phrases() const { return phrases_; }
  bool empty() const { return phrases_.empty(); }
  size_t size() const { return phrases_.size(); }

  bool contains(const TokenSequence& phrase) const {
    return std::binary_search(phrases_.begin(), phrases_.end(), phrase);
  }

  // All occurrences of all phrases as contiguous token runs. Overlaps are
  // all reported; output ordered by (start_token, longer phrase first).
  std::vector<MatchSpan> find(const TokenSequence& tokens) const {
    std::vector<MatchSpan> matches;
    for (size_t start = 0; start < tokens.size(); ++start) {
      auto it = by_first_token_.find(tokens[start]);
      if (it == by_first_token_.end()) continue;
      for (size_t index : it->second) {
        const TokenSequence& phrase = phrases_[index];
        if (start + phrase.size() > tokens.size()) continue;
        if (std::equal(phrase.begin(), phrase.end(),
                       tokens.begin() + static_cast<long>(start))) {
          matches.push_back(
              {phrase, start, start + phrase.size()});
        }
      }
    }
    return matches;
  }

 private:
  std::string name_;
  PhraseSource source_ = PhraseSource::Custom;
  std::vector<TokenSequence> phrases_;
  std::unordered_map<std::string, std::vector<size_t>> by_first_token_;
};

inline std::vector<MatchSpan> find_phrases(const TokenSequence& tokens,
                                           const PhraseSet& set) {
  return set.find(tokens);
}

// Expands {GENDER_SING} -> woman|man and {GENDER_PLUR} -> women|men.
// Substitution is linked per expansion: the feminine (or masculine) form
// is used for every placeholder of one output phrase.
inline std::vector<std::string> expand_gender_templates(
    const std::vector<std::string>& templates) {
  std::vector<std::string> out;
  for (const auto& tpl : templates) {
    size_t brace = tpl.find('{');
    if (brace == std::string::npos) {
      out.push_back(tpl);
      continue;
    }
    // validate placeholders before substituting
    size_t pos = 0;
    while ((pos = tpl.find('{', pos)) != std::string::npos) {
      size_t close = tpl.find('}', pos);
      if (close == std::string::npos) {
        throw Error(ErrorCode::UnknownPlaceholder,
                    "unterminated placeholder in template: " + tpl);
      }
      std::string ph = tpl.substr(pos, close - pos + 1);
      if (ph != "{GENDER_SING}" && ph != "{GENDER_PLUR}") {
        throw Error(ErrorCode::UnknownPlaceholder, ph + " in template: " + tpl);
      }
      pos = close + 1;
    }
    for (bool feminine : {true, false}) {
      std::string phrase = tpl;
      auto substitute = [&phrase](std::string_view ph, std::string_view word) {
        size_t at = 0;
        while ((at = phrase.find(ph, at)) != std::string::npos) {
          phrase.replace(at, ph.size(), word);
          at += word.size();
        }
      };
      substitute("{GENDER_SING}", feminine ? "woman" : "man");
      substitute("{GENDER_PLUR}", feminine ? "women" : "men");
      out.push_back(phrase);
    }
  }
  return out;
}

inline std::vector<std::string> read_vocab_lines(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open vocabulary file " + path);
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    size_t last = line.find_last_not_of(" \t");
    lines.push_back(line.substr(first, last - first + 1));
  }
  return lines;
}

// One template per line, `#` comments, {GENDER_SING}/{GENDER_PLUR}
// placeholders.
inline PhraseSet load_phrase_set(const std::string& path, std::string name,
                                 PhraseSource source) {
  return PhraseSet(std::move(name), source,
                   expand_gender_templates(read_vocab_lines(path)));
}

enum class Gender { Feminine, Masculine };

struct GenderCounts {
  size_t total = 0;
  size_t feminine = 0;
  size_t masculine = 0;
};

// The paired single-token gendered vocabulary. The two source files are
// position-aligned, which also yields the swap mapping (woman <-> man,
// boys <-> girls, ...).
class GenderLexicon {
 public:
  GenderLexicon() = default;

  GenderLexicon(std::vector<std::string> feminine,
                std::vector<std::string> masculine) {
    if (feminine.size() != masculine.size()) {
      throw Error(ErrorCode::SchemaError,
                  "gendered term files must pair line-for-line (" +
                      std::to_string(feminine.size()) + " vs " +
                      std::to_string(masculine.size()) + " terms)");
    }
    for (size_t i = 0; i < feminine.size(); ++i) {
      TokenSequence f = normalize(feminine[i]);
      TokenSequence m = normalize(masculine[i]);
      if (f.size() != 1 || m.size() != 1) {
        throw Error(ErrorCode::SchemaError,
                    "gendered terms must be single tokens: '" + feminine[i] +
                        "' / '" + masculine[i] + "'");
      }
      feminine_.push_back(f[0]);
      masculine_.push_back(m[0]);
      gender_of_[f[0]] = Gender::Feminine;
      gender_of_[m[0]] = Gender::Masculine;
      swap_of_[f[0]] = m[0];
      swap_of_[m[0]] = f[0];
    }
  }

  static GenderLexicon from_files(const std::string& feminine_path,
                                  const std::string& masculine_path) {
    return GenderLexicon(read_vocab_lines(feminine_path),
                         read_vocab_lines(masculine_path));
  }

  const std::vector<std::string>& feminine_terms() const { return feminine_; }
  const std::vector<std::string>& masculine_terms() const {
    return masculine_;
  }

  bool is_gendered(const std::string& token) const {
    return gender_of_.count(token) > 0;
  }

  // Counterpart of a gendered token, empty when the token is not gendered.
  std::string swap(const std::string& token) const {
    auto it = swap_of_.find(token);
    return it == swap_of_.end() ? std::string() : it->second;
  }

  GenderCounts count(const TokenSequence& tokens) const {
    GenderCounts counts;
    for (const auto& token : tokens) {
      auto it = gender_of_.find(token);
      if (it == gender_of_.end()) continue;
      ++counts.total;
      if (it->second == Gender::Feminine) {
        ++counts.feminine;
      } else {
        ++counts.masculine;
      }
    }
    return counts;
  }

  TokenSequence mask(const TokenSequence& tokens) const {
    TokenSequence out = tokens;
    for (auto& token : out) {
      if (gender_of_.count(token)) token = std::string(kGenderMask);
    }
    return out;
  }

  // The term files alternate singular/plural line pairs (woman/women,
  // lady/ladies, ...); the plurals feed the explicit-exclusion pattern
  // family.
  std::vector<std::string> plural_terms() const {
    std::vector<std::string> plurals;
    for (const auto& list : {feminine_, masculine_}) {
      for (size_t i = 1; i < list.size(); i += 2) {
        plurals.push_back(list[i]);
      }
    }
    return plurals;
  }

 private:
  std::vector<std::string> feminine_;
  std::vector<std::string> masculine_;
  std::unordered_map<std::string, Gender> gender_of_;
  std::unordered_map<std::string, std::string> swap_of_;
};

inline GenderCounts count_gendered_terms(const TokenSequence& tokens,
                                         const GenderLexicon& lexicon) {
  return lexicon.count(tokens);
}

inline TokenSequence mask_gendered_terms(const TokenSequence& tokens,
                                         const GenderLexicon& lexicon) {
  return lexicon.mask(tokens);
}

}  // namespace descaudit
