#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "descaudit/corpus.hpp"
#include "descaudit/detail/csv.hpp"
#include "descaudit/errors.hpp"

namespace descaudit {

// The five annotation themes. The first three ask about the generated
// description; GroupAssociation asks about the input only; OtherBias is
// the catch-all.
enum class FlagTheme {
  Toxicity,
  ExclusionaryNorms,
  StereotypingObjectification,
  GroupAssociation,
  OtherBias,
};

inline const char* to_string(FlagTheme theme) {
  switch (theme) {
    case FlagTheme::Toxicity: return "toxicity";
    case FlagTheme::ExclusionaryNorms: return "exclusionary_norms";
    case FlagTheme::StereotypingObjectification: return "stereotyping";
    case FlagTheme::GroupAssociation: return "group_association";
    case FlagTheme::OtherBias: return "other_bias";
  }
  return "unknown";
}

inline const std::vector<FlagTheme>& all_flag_themes() {
  static const std::vector<FlagTheme> kThemes = {
      FlagTheme::Toxicity, FlagTheme::ExclusionaryNorms,
      FlagTheme::StereotypingObjectification, FlagTheme::GroupAssociation,
      FlagTheme::OtherBias};
  return kThemes;
}

enum class Verdict { Yes, No, NotSure, Unasked, Unparseable };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::NotSure: return "not_sure";
    case Verdict::Unasked: return "unasked";
    case Verdict::Unparseable: return "unparseable";
  }
  return "unknown";
}

enum class FlagStage { Human, Llm };

inline const char* to_string(FlagStage s) {
  return s == FlagStage::Human ? "human" : "llm";
}

struct FlagRecord {
  std::string record_id;
  std::map<FlagTheme, Verdict> verdicts;
  FlagStage stage = FlagStage::Human;
  bool flagged = false;
};

struct FlagQuestion {
  FlagTheme theme = FlagTheme::Toxicity;
  std::string term;
  std::string definition;
  std::string examples_block;
};

// The single-word contract: case-insensitive yes/no, surrounding
// whitespace and one trailing period tolerated. Everything else is
// unparseable and surfaced as such.
inline Verdict parse_verdict(std::string_view response) {
  std::string word = detail::trim(response);
  if (!word.empty() && word.back() == '.') word.pop_back();
  word = detail::lower(detail::trim(word));
  if (word == "yes") return Verdict::Yes;
  if (word == "no") return Verdict::No;
  return Verdict::Unparseable;
}

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path,
                                  ErrorCode missing_code) {
  std::ifstream in(path);
  if (!in) {
    throw Error(missing_code, "cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline size_t replace_all(std::string& text, std::string_view slot,
                          std::string_view value) {
  size_t replaced = 0;
  size_t at = 0;
  while ((at = text.find(slot, at)) != std::string::npos) {
    text.replace(at, slot.size(), value);
    at += value.size();
    ++replaced;
  }
  return replaced;
}

}  // namespace detail

// Serializes a listing the way the prompt examples lay records out: one
// `Key: Value` line per field, blank-line separated, category segments
// joined with ": ".
inline std::string prompt_input_block(const ProductListing& listing) {
  std::vector<std::string> lines;
  lines.push_back("Title: " + listing.title);
  if (!listing.category_path.empty()) {
    std::string cats = "Categories: ";
    for (size_t i = 0; i < listing.category_path.size(); ++i) {
      if (i) cats += ": ";
      cats += listing.category_path[i];
    }
    lines.push_back(std::move(cats));
  }
  for (const auto& aspect : listing.aspects) {
    lines.push_back(aspect.name + ": " + aspect.value);
  }
  if (listing.condition) {
    lines.push_back("Condition: " + *listing.condition);
  }
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out += "\n\n";
    out += lines[i];
  }
  return out;
}

inline std::string prompt_query(const DescribedRecord& record,
                                bool input_only) {
  std::string out = "INPUT:\n\n" + prompt_input_block(record.listing);
  if (!input_only) {
    out += "\n\nGENERATED DESCRIPTION:\n\n" + record.description;
  }
  return out;
}

namespace detail {

// Sectioned theme file: a `TERM:` line, a `DEFINITION:` line, then an
// `EXAMPLES:` marker followed by the verbatim examples block.
inline FlagQuestion parse_theme_file(FlagTheme theme,
                                     const std::string& text,
                                     const std::string& path) {
  FlagQuestion question;
  question.theme = theme;
  std::istringstream in(text);
  std::string line;
  bool in_examples = false;
  std::string examples;
  while (std::getline(in, line)) {
    if (in_examples) {
      if (!examples.empty()) examples += '\n';
      examples += line;
      continue;
    }
    if (line.rfind("TERM: ", 0) == 0) {
      question.term = line.substr(6);
    } else if (line.rfind("DEFINITION: ", 0) == 0) {
      question.definition = line.substr(12);
    } else if (line == "EXAMPLES:") {
      in_examples = true;
    } else if (!trim(line).empty()) {
      throw Error(ErrorCode::SchemaError,
                  "unexpected line in theme file " + path + ": " + line);
    }
  }
  if (question.term.empty() || question.definition.empty()) {
    throw Error(ErrorCode::SchemaError,
                "theme file " + path + " needs TERM: and DEFINITION: lines");
  }
  // drop trailing blank lines so the slot splice is exact
  while (!examples.empty() &&
         (examples.back() == '\n' || examples.back() == ' ')) {
    examples.pop_back();
  }
  question.examples_block = examples;
  return question;
}

}  // namespace detail

// Loads the prompt templates from a directory:
//   record_question.txt          shared template, slots [term] [definition]
//                                [examples] [query]
//   group_association.txt        input-only variant, slot [query]
//   other_bias.txt               catch-all variant, slot [query]
//   toxicity.txt, exclusionary_norms.txt, stereotyping.txt
//                                per-theme TERM/DEFINITION/EXAMPLES sections
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path directory)
      : directory_(std::move(directory)) {
    record_template_ = detail::read_text_file(
        directory_ / "record_question.txt", ErrorCode::MissingTemplate);
    group_association_template_ = detail::read_text_file(
        directory_ / "group_association.txt", ErrorCode::MissingTemplate);
    other_bias_template_ = detail::read_text_file(
        directory_ / "other_bias.txt", ErrorCode::MissingTemplate);
    for (FlagTheme theme :
         {FlagTheme::Toxicity, FlagTheme::ExclusionaryNorms,
          FlagTheme::StereotypingObjectification}) {
      auto path = directory_ / (std::string(to_string(theme)) + ".txt");
      questions_[theme] = detail::parse_theme_file(
          theme,
          detail::read_text_file(path, ErrorCode::MissingTemplate),
          path.string());
    }
    questions_[FlagTheme::GroupAssociation] = {FlagTheme::GroupAssociation,
                                               "", "", ""};
    questions_[FlagTheme::OtherBias] = {FlagTheme::OtherBias, "", "", ""};
  }

  const FlagQuestion& question(FlagTheme theme) const {
    return questions_.at(theme);
  }

  std::string render(FlagTheme theme, const DescribedRecord& record) const {
    const FlagQuestion& q = questions_.at(theme);
    std::string prompt;
    bool input_only = false;
    switch (theme) {
      case FlagTheme::GroupAssociation:
        prompt = group_association_template_;
        input_only = true;
        break;
      case FlagTheme::OtherBias:
        prompt = other_bias_template_;
        break;
      default: {
        prompt = record_template_;
        detail::replace_all(prompt, "[term]", q.term);
        detail::replace_all(prompt, "[definition]", q.definition);
        detail::replace_all(prompt, "[examples]", q.examples_block);
        break;
      }
    }
    for (const char* slot : {"[term]", "[definition]", "[examples]"}) {
      if (prompt.find(slot) != std::string::npos) {
        throw Error(ErrorCode::UnfilledSlot,
                    std::string(slot) + " left unfilled for theme " +
                        to_string(theme));
      }
    }
    if (detail::replace_all(prompt, "[query]",
                            prompt_query(record, input_only)) == 0) {
      throw Error(ErrorCode::UnfilledSlot,
                  std::string("template for ") + to_string(theme) +
                      " has no [query] slot");
    }
    return prompt;
  }

 private:
  std::filesystem::path directory_;
  std::string record_template_;
  std::string group_association_template_;
  std::string other_bias_template_;
  std::map<FlagTheme, FlagQuestion> questions_;
};

inline std::string render_prompt(const PromptLibrary& library,
                                 const FlagQuestion& question,
                                 const DescribedRecord& record) {
  return library.render(question.theme, record);
}

// Completion client for the automated flagging stage. Implementations
// throw Error(ClientError) on transport failure.
class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic stand-in for tests and dry runs. The script maps a
// record's title to the themes that should answer "yes"; theme and title
// are recovered from the rendered prompt the way a reader would.
class ScriptedLLMClient : public LLMClient {
 public:
  using Script = std::map<std::string, std::set<FlagTheme>>;

  explicit ScriptedLLMClient(Script script) : script_(std::move(script)) {}

  static std::optional<FlagTheme> theme_of_prompt(std::string_view prompt) {
    if (prompt.find("implicitly associated with a group of people") !=
        std::string_view::npos) {
      return FlagTheme::GroupAssociation;
    }
    if (prompt.find("contains any potential bias") != std::string_view::npos) {
      return FlagTheme::OtherBias;
    }
    if (prompt.find("contains toxicity and hate speech") !=
        std::string_view::npos) {
      return FlagTheme::Toxicity;
    }
    if (prompt.find("contains exclusionary norms") != std::string_view::npos) {
      return FlagTheme::ExclusionaryNorms;
    }
    if (prompt.find("contains stereotyping and objectification") !=
        std::string_view::npos) {
      return FlagTheme::StereotypingObjectification;
    }
    return std::nullopt;
  }

  // The query sits at the end of the prompt, so the last Title line is the
  // record under question (examples carry Title lines of their own).
  static std::optional<std::string> title_of_prompt(std::string_view prompt) {
    size_t at = prompt.rfind("Title: ");
    if (at == std::string_view::npos) return std::nullopt;
    size_t end = prompt.find('\n', at);
    if (end == std::string_view::npos) end = prompt.size();
    return std::string(prompt.substr(at + 7, end - at - 7));
  }

  std::string complete(const std::string& prompt) override {
    auto theme = theme_of_prompt(prompt);
    auto title = title_of_prompt(prompt);
    if (!theme || !title) {
      throw Error(ErrorCode::ClientError, "unrecognized prompt shape");
    }
    auto it = script_.find(*title);
    if (it != script_.end() && it->second.count(*theme)) return "yes";
    return "no";
  }

 private:
  Script script_;
};

namespace detail {

// Token bucket: `rate` tokens per second, burst capacity `rate`.
class TokenBucket {
 public:
  TokenBucket(double rate,
              std::function<void(std::chrono::milliseconds)> sleep)
      : rate_(rate), tokens_(rate), sleep_(std::move(sleep)) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock<std::mutex> lock(mutex_);
    refill();
    while (tokens_ < 1.0) {
      double needed = 1.0 - tokens_;
      auto wait = std::chrono::milliseconds(
          static_cast<long>(1000.0 * needed / rate_) + 1);
      lock.unlock();
      sleep_(wait);
      lock.lock();
      refill();
    }
    tokens_ -= 1.0;
  }

 private:
  void refill() {
    auto now = std::chrono::steady_clock::now();
    std::chrono::duration<double> elapsed = now - last_;
    last_ = now;
    tokens_ = std::min(rate_, tokens_ + elapsed.count() * rate_);
  }

  double rate_;
  double tokens_;
  std::function<void(std::chrono::milliseconds)> sleep_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_ =
      std::chrono::steady_clock::now();
};

}  // namespace detail

struct FlagIssue {
  std::string record_id;
  FlagTheme theme = FlagTheme::Toxicity;
  std::string message;
};

struct LlmStageOptions {
  // Default is cautious: an unparseable answer flags the record. Strict
  // mode treats it as not flagged for cost-sensitive reruns.
  bool strict = false;
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{250};
  int in_flight = 1;
  double rate_per_second = 0.0;  // 0 disables rate limiting
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::vector<FlagTheme> themes = all_flag_themes();
};

struct LlmStageResult {
  std::vector<FlagRecord> records;  // corpus subset order
  std::vector<FlagIssue> issues;
  std::uint64_t client_calls = 0;
  std::uint64_t unparseable = 0;
};

// One query per (record, theme). Verdict slots are keyed by position, so
// any completion order yields the same result.
inline LlmStageResult run_llm_stage(const std::vector<DescribedRecord>& subset,
                                    const PromptLibrary& prompts,
                                    LLMClient& client,
                                    const LlmStageOptions& options = {}) {
  struct Task {
    size_t record_index;
    FlagTheme theme;
  };
  std::vector<Task> tasks;
  for (size_t r = 0; r < subset.size(); ++r) {
    for (FlagTheme theme : options.themes) {
      tasks.push_back({r, theme});
    }
  }

  struct Slot {
    Verdict verdict = Verdict::Unasked;
    std::string error;
  };
  std::vector<Slot> slots(tasks.size());
  std::atomic<std::uint64_t> calls{0};
  detail::TokenBucket bucket(options.rate_per_second, options.sleep);

  auto run_task = [&](size_t t) {
    const Task& task = tasks[t];
    std::string prompt = prompts.render(task.theme, subset[task.record_index]);
    std::chrono::milliseconds delay = options.backoff_base;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
      try {
        bucket.acquire();
        calls.fetch_add(1);
        std::string response = client.complete(prompt);
        slots[t].verdict = parse_verdict(response);
        slots[t].error.clear();
        return;
      } catch (const std::exception& e) {
        slots[t].error = e.what();
        if (attempt < options.max_retries) {
          options.sleep(delay);
          delay *= 2;
        }
      }
    }
    slots[t].verdict = Verdict::Unasked;
  };

  if (options.in_flight <= 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    int n_workers =
        std::min<int>(options.in_flight, static_cast<int>(tasks.size()));
    for (int w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (size_t t = next.fetch_add(1); t < tasks.size();
             t = next.fetch_add(1)) {
          run_task(t);
        }
      });
    }
    for (auto& worker : workers) worker.join();
  }

  LlmStageResult result;
  result.client_calls = calls.load();
  result.records.resize(subset.size());
  for (size_t r = 0; r < subset.size(); ++r) {
    result.records[r].record_id = subset[r].listing.id;
    result.records[r].stage = FlagStage::Llm;
  }
  for (size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    FlagRecord& record = result.records[task.record_index];
    record.verdicts[task.theme] = slots[t].verdict;
    if (slots[t].verdict == Verdict::Unparseable) ++result.unparseable;
    if (!slots[t].error.empty()) {
      result.issues.push_back(
          {record.record_id, task.theme, slots[t].error});
    }
  }
  for (auto& record : result.records) {
    bool any_yes = false;
    bool any_unparseable = false;
    for (const auto& [theme, verdict] : record.verdicts) {
      any_yes |= verdict == Verdict::Yes;
      any_unparseable |= verdict == Verdict::Unparseable;
    }
    record.flagged = any_yes || (!options.strict && any_unparseable);
  }
  std::sort(result.issues.begin(), result.issues.end(),
            [](const FlagIssue& a, const FlagIssue& b) {
              return std::tie(a.record_id, a.theme) <
                     std::tie(b.record_id, b.theme);
            });
  return result;
}

// Annotation CSV: header id,group_assoc,toxicity,stereotyping,
// exclusionary,other; cells yes/no/not sure, blank for skipped rows
// (non-English records are left blank by instruction).
inline std::vector<FlagRecord> import_human_annotations(
    const std::filesystem::path& path) {
  std::string text =
      detail::read_text_file(path, ErrorCode::IoError);
  auto rows = detail::parse_csv(text);
  if (rows.empty()) {
    throw Error(ErrorCode::SchemaError, "empty annotation file", 1);
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
  const std::vector<std::pair<std::string, FlagTheme>> kColumns = {
      {"group_assoc", FlagTheme::GroupAssociation},
      {"toxicity", FlagTheme::Toxicity},
      {"stereotyping", FlagTheme::StereotypingObjectification},
      {"exclusionary", FlagTheme::ExclusionaryNorms},
      {"other", FlagTheme::OtherBias},
  };
  long id_col = column("id");
  if (id_col < 0) {
    throw Error(ErrorCode::SchemaError, "annotation header needs 'id'", 1);
  }
  std::vector<std::pair<long, FlagTheme>> theme_cols;
  for (const auto& [name, theme] : kColumns) {
    long col = column(name);
    if (col < 0) {
      throw Error(ErrorCode::SchemaError,
                  "annotation header needs '" + name + "'", 1);
    }
    theme_cols.push_back({col, theme});
  }

  std::vector<FlagRecord> records;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    long line_no = static_cast<long>(r) + 1;
    if (static_cast<size_t>(id_col) >= row.size()) {
      throw Error(ErrorCode::SchemaError, "row missing id field", line_no);
    }
    FlagRecord record;
    record.record_id = detail::trim(row[static_cast<size_t>(id_col)]);
    record.stage = FlagStage::Human;
    if (record.record_id.empty()) {
      throw Error(ErrorCode::SchemaError, "blank record id", line_no);
    }
    for (const auto& [col, theme] : theme_cols) {
      std::string cell = static_cast<size_t>(col) < row.size()
                             ? detail::lower(detail::trim(row[static_cast<size_t>(col)]))
                             : std::string();
      Verdict verdict;
      if (cell.empty()) {
        verdict = Verdict::Unasked;
      } else if (cell == "yes") {
        verdict = Verdict::Yes;
      } else if (cell == "no") {
        verdict = Verdict::No;
      } else if (cell == "not sure" || cell == "not_sure") {
        verdict = Verdict::NotSure;
      } else {
        throw Error(ErrorCode::SchemaError,
                    "unknown verdict '" + cell + "'", line_no);
      }
      record.verdicts[theme] = verdict;
      if (verdict == Verdict::Yes) record.flagged = true;
    }
    records.push_back(std::move(record));
  }
  return records;
}

struct ReviewBundle {
  std::vector<std::string> record_ids;
};

// Seeded uniform sample without replacement, dealt round-robin into
// reviewer bundles (120 flagged, 4 reviewers -> 4 bundles of 30).
inline std::vector<ReviewBundle> sample_for_review(
    const std::vector<FlagRecord>& flagged, size_t k, size_t reviewers,
    std::uint64_t seed) {
  if (k > flagged.size()) {
    throw Error(ErrorCode::SchemaError,
                "cannot sample " + std::to_string(k) + " of " +
                    std::to_string(flagged.size()) + " flagged records");
  }
  if (reviewers == 0) {
    throw Error(ErrorCode::SchemaError, "need at least one reviewer");
  }
  std::vector<size_t> indices(flagged.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates: the first k entries form the sample
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng() % (indices.size() - i));
    std::swap(indices[i], indices[j]);
  }
  std::vector<ReviewBundle> bundles(reviewers);
  for (size_t i = 0; i < k; ++i) {
    bundles[i % reviewers].record_ids.push_back(
        flagged[indices[i]].record_id);
  }
  return bundles;
}

// Expert-review sheet: one comment column per theme plus an overall
// column, prefilled with the record content.
inline std::string review_sheet_csv(const ReviewBundle& bundle,
                                    const Corpus& corpus) {
  std::map<std::string, const DescribedRecord*> by_id;
  for (const auto& record : corpus.records) {
    by_id[record.listing.id] = &record;
  }
  std::string out = detail::csv_row(
      {"id", "input", "generated_description", "toxicity_and_hate_speech",
       "stereotyping_and_objectification", "exclusionary_norms",
       "erasure_and_lack_of_representation", "disparate_performance",
       "overall_comments"});
  for (const auto& id : bundle.record_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::SchemaError,
                  "sampled record " + id + " is not in the corpus");
    }
    out += detail::csv_row({id, to_input_block(it->second->listing),
                            it->second->description, "", "", "", "", "", ""});
  }
  return out;
}

}  // namespace descaudit
