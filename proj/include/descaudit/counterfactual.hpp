#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "descaudit/classifier.hpp"
#include "descaudit/corpus.hpp"
#include "descaudit/detail/fnv.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/lexicon.hpp"

namespace descaudit {

enum class SwapAxis { MenWomen, BoysGirls };

inline const char* to_string(SwapAxis axis) {
  return axis == SwapAxis::MenWomen ? "men_women" : "boys_girls";
}

namespace detail {

inline bool is_child_pair(const std::string& feminine_term) {
  return feminine_term == "girl" || feminine_term == "girls";
}

// Bidirectional token map for one axis, drawn from the paired gendered
// vocabulary.
inline std::map<std::string, std::string> axis_token_map(
    const GenderLexicon& lexicon, SwapAxis axis) {
  std::map<std::string, std::string> map;
  const auto& fem = lexicon.feminine_terms();
  const auto& masc = lexicon.masculine_terms();
  for (size_t i = 0; i < fem.size(); ++i) {
    bool child = is_child_pair(fem[i]);
    if ((axis == SwapAxis::BoysGirls) != child) continue;
    map[fem[i]] = masc[i];
    map[masc[i]] = fem[i];
  }
  return map;
}

inline bool is_word_char(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '\'';
}

// Swaps whole words through `map`, preserving the surface form: case
// pattern and possessive suffix ("Men's Shoes" -> "Women's Shoes").
inline std::string swap_surface_tokens(
    const std::string& text, const std::map<std::string, std::string>& map,
    size_t* swapped_count = nullptr) {
  std::string folded = fold_typographic_marks(text);
  std::string out;
  out.reserve(folded.size());
  size_t i = 0;
  while (i < folded.size()) {
    if (!is_word_char(folded[i])) {
      out += folded[i];
      ++i;
      continue;
    }
    size_t start = i;
    while (i < folded.size() && is_word_char(folded[i])) ++i;
    std::string word = folded.substr(start, i - start);

    std::string suffix;
    if (word.size() >= 2 && word.compare(word.size() - 2, 2, "'s") == 0) {
      suffix = word.substr(word.size() - 2);
      word.erase(word.size() - 2);
    } else if (!word.empty() && word.back() == '\'') {
      suffix = "'";
      word.pop_back();
    }

    std::string key = lower(word);
    auto it = map.find(key);
    if (it == map.end() || word.empty()) {
      out += word + suffix;
      continue;
    }
    std::string replacement = it->second;
    bool all_upper = word.size() > 1 &&
                     std::all_of(word.begin(), word.end(), [](unsigned char c) {
                       return std::isupper(c);
                     });
    if (all_upper) {
      for (auto& c : replacement) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
    } else if (std::isupper(static_cast<unsigned char>(word.front()))) {
      replacement.front() = static_cast<char>(
          std::toupper(static_cast<unsigned char>(replacement.front())));
    }
    if (swapped_count) ++(*swapped_count);
    out += replacement + suffix;
  }
  return out;
}

inline bool has_axis_token(const ProductListing& listing,
                           const std::map<std::string, std::string>& map) {
  for (const auto& token : normalize(listing.title)) {
    if (map.count(token)) return true;
  }
  for (const auto& segment : listing.category_path) {
    for (const auto& token : normalize(segment)) {
      if (map.count(token)) return true;
    }
  }
  return false;
}

}  // namespace detail

inline bool has_axis_evidence(const ProductListing& listing,
                              const GenderLexicon& lexicon, SwapAxis axis) {
  if (axis == SwapAxis::MenWomen &&
      (listing.department == Department::Men ||
       listing.department == Department::Women)) {
    return true;
  }
  if (axis == SwapAxis::BoysGirls &&
      (listing.department == Department::Boys ||
       listing.department == Department::Girls)) {
    return true;
  }
  return detail::has_axis_token(listing, detail::axis_token_map(lexicon, axis));
}

inline SwapAxis detect_swap_axis(const ProductListing& listing,
                                 const GenderLexicon& lexicon) {
  bool adult = has_axis_evidence(listing, lexicon, SwapAxis::MenWomen);
  bool child = has_axis_evidence(listing, lexicon, SwapAxis::BoysGirls);
  if (adult && child) {
    throw Error(ErrorCode::AmbiguousAxis,
                "listing " + listing.id + " carries both adult and child "
                "gender evidence");
  }
  if (!adult && !child) {
    throw Error(ErrorCode::NothingToSwap,
                "listing " + listing.id + " has no gendered field");
  }
  return adult ? SwapAxis::MenWomen : SwapAxis::BoysGirls;
}

// Swaps the gendered fields and nothing else: the department aspect, the
// gendered title tokens, and gendered category segments. Applying the
// swap twice returns the original listing.
inline ProductListing swap_gender(const ProductListing& listing,
                                  SwapAxis axis, const GenderLexicon& lexicon) {
  SwapAxis detected = detect_swap_axis(listing, lexicon);  // validates too
  if (detected != axis) {
    throw Error(ErrorCode::NothingToSwap,
                "listing " + listing.id + " has no gendered field on axis " +
                    to_string(axis));
  }
  auto map = detail::axis_token_map(lexicon, axis);

  ProductListing swapped = listing;
  swapped.title = detail::swap_surface_tokens(listing.title, map);
  for (auto& segment : swapped.category_path) {
    segment = detail::swap_surface_tokens(segment, map);
  }
  for (auto& aspect : swapped.aspects) {
    if (detail::lower(aspect.name) == "department") {
      aspect.value = detail::swap_surface_tokens(aspect.value, map);
    }
  }
  swapped.department =
      derive_department(swapped.aspects, swapped.category_path);
  return swapped;
}

struct CounterfactualPair {
  std::string pair_id;
  ProductListing base;
  ProductListing swapped;
  SwapAxis swap_axis = SwapAxis::MenWomen;
};

inline CounterfactualPair derive_pair(const ProductListing& listing,
                                      const GenderLexicon& lexicon) {
  CounterfactualPair pair;
  pair.pair_id = listing.id;
  pair.base = listing;
  pair.swap_axis = detect_swap_axis(listing, lexicon);
  pair.swapped = swap_gender(listing, pair.swap_axis, lexicon);
  return pair;
}

enum class PairSide { Base, Swapped };

inline const char* to_string(PairSide side) {
  return side == PairSide::Base ? "base" : "swapped";
}

// External description generator. Implementations throw
// Error(GeneratorError) on failure; callers retry with backoff.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const std::string& input_block,
                               int sample_index) = 0;
  virtual std::string tag() const { return "generator"; }
};

// Deterministic stub for pipeline tests and dry runs.
class EchoGenerator : public TextGenerator {
 public:
  std::string generate(const std::string& input_block,
                       int sample_index) override {
    std::string title = "item";
    std::istringstream in(input_block);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("Title: ", 0) == 0) {
        title = line.substr(7);
        break;
      }
    }
    return "Presenting " + title + ", sample " +
           std::to_string(sample_index) + ".";
  }
  std::string tag() const override { return "echo-stub"; }
};

namespace detail {

inline std::string replay_file_name(const std::string& input_block,
                                    int sample_index) {
  return "gen-" + fnv1a64_hex(input_block) + "-" +
         std::to_string(sample_index) + ".txt";
}

}  // namespace detail

// Replays generations captured by RecordingGenerator from a directory.
class ReplayGenerator : public TextGenerator {
 public:
  explicit ReplayGenerator(std::filesystem::path directory)
      : directory_(std::move(directory)) {}

  std::string generate(const std::string& input_block,
                       int sample_index) override {
    auto path = directory_ / detail::replay_file_name(input_block, sample_index);
    std::ifstream in(path);
    if (!in) {
      throw Error(ErrorCode::GeneratorError,
                  "no recorded generation at " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  }
  std::string tag() const override { return "replay"; }

 private:
  std::filesystem::path directory_;
};

class RecordingGenerator : public TextGenerator {
 public:
  RecordingGenerator(TextGenerator& inner, std::filesystem::path directory)
      : inner_(inner), directory_(std::move(directory)) {
    std::filesystem::create_directories(directory_);
  }

  std::string generate(const std::string& input_block,
                       int sample_index) override {
    std::string text = inner_.generate(input_block, sample_index);
    auto path = directory_ / detail::replay_file_name(input_block, sample_index);
    std::ofstream out(path);
    out << text;
    return text;
  }
  std::string tag() const override { return inner_.tag(); }

 private:
  TextGenerator& inner_;
  std::filesystem::path directory_;
};

struct GenerationBatch {
  std::string pair_id;
  PairSide side = PairSide::Base;
  std::vector<std::string> texts;  // sample order, failed slots omitted
  std::string generator_tag;
  bool partial = false;
  std::string partial_reason;
  std::vector<int> failed_indices;
};

struct GenerationOptions {
  int samples_per_side = 1;
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{250};  // doubles per retry
  int in_flight = 1;
  // Injectable for tests; real runs sleep between retries.
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  // Append-only JSONL of completed samples; pre-existing lines are not
  // regenerated, so interrupted runs resume where they stopped.
  std::optional<std::filesystem::path> resume_path;
};

namespace detail {

struct SampleKey {
  std::string pair_id;
  PairSide side;
  int index;
  friend bool operator<(const SampleKey& a, const SampleKey& b) {
    return std::tie(a.pair_id, a.side, a.index) <
           std::tie(b.pair_id, b.side, b.index);
  }
};

inline std::map<SampleKey, std::string> load_completed_samples(
    const std::filesystem::path& path) {
  std::map<SampleKey, std::string> completed;
  std::ifstream in(path);
  if (!in) return completed;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded()) {
      throw Error(ErrorCode::SchemaError, "bad batch line", line_no);
    }
    SampleKey key{obj.at("pair_id").get<std::string>(),
                  obj.at("side").get<std::string>() == "swapped"
                      ? PairSide::Swapped
                      : PairSide::Base,
                  obj.at("sample_index").get<int>()};
    completed[key] = obj.at("text").get<std::string>();
  }
  return completed;
}

}  // namespace detail

// Runs `samples_per_side` generations for both sides of every pair.
// Requests run concurrently up to `in_flight`; assembly is keyed by
// (pair_id, side, sample index), so completion order never matters.
inline std::vector<GenerationBatch> generate_batches(
    const std::vector<CounterfactualPair>& pairs,
    const GenerationOptions& options, TextGenerator& generator) {
  if (options.samples_per_side < 1) {
    throw Error(ErrorCode::SchemaError, "samples_per_side must be >= 1");
  }

  struct Task {
    size_t pair_index;
    PairSide side;
    int sample_index;
    std::string input_block;
  };
  std::vector<Task> tasks;
  for (size_t p = 0; p < pairs.size(); ++p) {
    for (PairSide side : {PairSide::Base, PairSide::Swapped}) {
      const ProductListing& listing =
          side == PairSide::Base ? pairs[p].base : pairs[p].swapped;
      std::string block = to_input_block(listing);
      for (int s = 0; s < options.samples_per_side; ++s) {
        tasks.push_back({p, side, s, block});
      }
    }
  }

  std::map<detail::SampleKey, std::string> completed;
  if (options.resume_path) {
    completed = detail::load_completed_samples(*options.resume_path);
  }

  struct Slot {
    std::optional<std::string> text;
    std::string error;
  };
  std::vector<Slot> results(tasks.size());

  std::ofstream sink;
  std::mutex sink_mutex;
  if (options.resume_path) {
    sink.open(*options.resume_path, std::ios::app);
    if (!sink) {
      throw Error(ErrorCode::IoError,
                  "cannot open " + options.resume_path->string());
    }
  }

  auto run_task = [&](size_t t) {
    const Task& task = tasks[t];
    detail::SampleKey key{pairs[task.pair_index].pair_id, task.side,
                          task.sample_index};
    if (auto it = completed.find(key); it != completed.end()) {
      results[t].text = it->second;
      return;
    }
    std::chrono::milliseconds delay = options.backoff_base;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
      try {
        std::string text = generator.generate(task.input_block,
                                              task.sample_index);
        results[t].text = std::move(text);
        break;
      } catch (const std::exception& e) {
        results[t].error = e.what();
        if (attempt < options.max_retries) {
          options.sleep(delay);
          delay *= 2;
        }
      }
    }
    if (results[t].text && options.resume_path) {
      nlohmann::json obj;
      obj["pair_id"] = key.pair_id;
      obj["side"] = to_string(key.side);
      obj["sample_index"] = key.index;
      obj["text"] = *results[t].text;
      obj["generator_tag"] = generator.tag();
      std::lock_guard<std::mutex> lock(sink_mutex);
      sink << obj.dump() << '\n';
      sink.flush();
    }
  };

  if (options.in_flight <= 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    int n_workers = std::min<int>(options.in_flight,
                                  static_cast<int>(tasks.size()));
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

  std::vector<GenerationBatch> batches;
  batches.reserve(pairs.size() * 2);
  for (size_t p = 0; p < pairs.size(); ++p) {
    for (PairSide side : {PairSide::Base, PairSide::Swapped}) {
      GenerationBatch batch;
      batch.pair_id = pairs[p].pair_id;
      batch.side = side;
      batch.generator_tag = generator.tag();
      batches.push_back(std::move(batch));
    }
  }
  for (size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    GenerationBatch& batch =
        batches[task.pair_index * 2 + (task.side == PairSide::Base ? 0 : 1)];
    if (results[t].text) {
      batch.texts.push_back(std::move(*results[t].text));
    } else {
      batch.partial = true;
      batch.failed_indices.push_back(task.sample_index);
      if (batch.partial_reason.empty()) batch.partial_reason = results[t].error;
    }
  }
  return batches;
}

inline std::vector<GenerationBatch> generate_batches(
    const std::vector<CounterfactualPair>& pairs, int samples_per_side,
    TextGenerator& generator) {
  GenerationOptions options;
  options.samples_per_side = samples_per_side;
  return generate_batches(pairs, options, generator);
}

struct DatasetBundle {
  LabeledDataset documents;
  std::map<std::string, std::uint64_t> label_counts;
};

// Normalizes, masks and labels every generated text by its side. The
// classifier must find gender signal beyond the explicit vocabulary.
inline DatasetBundle build_classifier_dataset(
    const std::vector<GenerationBatch>& batches,
    const GenderLexicon& lexicon) {
  DatasetBundle bundle;
  std::uint64_t side_counts[2] = {0, 0};
  for (const auto& batch : batches) {
    side_counts[batch.side == PairSide::Base ? 0 : 1] += batch.texts.size();
    for (const auto& text : batch.texts) {
      LabeledDocument doc;
      doc.tokens = lexicon.mask(normalize(text));
      doc.label = to_string(batch.side);
      ++bundle.label_counts[doc.label];
      bundle.documents.push_back(std::move(doc));
    }
  }
  if (side_counts[0] == 0 || side_counts[1] == 0) {
    throw Error(ErrorCode::EmptySide,
                "classifier dataset needs texts on both sides");
  }
  return bundle;
}

inline nlohmann::json listing_to_json(const ProductListing& listing) {
  nlohmann::json obj;
  obj["title"] = listing.title;
  obj["categories"] = listing.category_path;
  nlohmann::json aspects = nlohmann::json::array();
  for (const auto& aspect : listing.aspects) {
    aspects.push_back({{"name", aspect.name}, {"value", aspect.value}});
  }
  obj["aspects"] = std::move(aspects);
  if (listing.condition) obj["condition"] = *listing.condition;
  return obj;
}

inline nlohmann::json pair_to_json(const CounterfactualPair& pair) {
  nlohmann::json obj;
  obj["pair_id"] = pair.pair_id;
  obj["axis"] = to_string(pair.swap_axis);
  obj["base"] = listing_to_json(pair.base);
  obj["swapped"] = listing_to_json(pair.swapped);
  return obj;
}

// Pair file: {"pairs": [{pair_id, base, [swapped], [axis]}]}. A missing
// swapped side is derived with swap_gender, so curated overrides and
// automation coexist.
inline std::vector<CounterfactualPair> load_pairs(
    const std::filesystem::path& path, const GenderLexicon& lexicon) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open pair file " + path.string());
  }
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("pairs") ||
      !doc["pairs"].is_array()) {
    throw Error(ErrorCode::SchemaError,
                "pair file must be {\"pairs\": [...]}");
  }
  std::vector<CounterfactualPair> pairs;
  std::set<std::string> seen;
  for (const auto& entry : doc["pairs"]) {
    CounterfactualPair pair;
    pair.pair_id = entry.at("pair_id").get<std::string>();
    if (!seen.insert(pair.pair_id).second) {
      throw Error(ErrorCode::DuplicateId, "pair id " + pair.pair_id);
    }
    pair.base = detail::listing_from_json(entry.at("base"), pair.pair_id, -1);
    if (entry.contains("swapped")) {
      pair.swapped =
          detail::listing_from_json(entry["swapped"], pair.pair_id, -1);
      pair.swap_axis = entry.contains("axis") &&
                               entry["axis"].get<std::string>() == "boys_girls"
                           ? SwapAxis::BoysGirls
                           : SwapAxis::MenWomen;
    } else {
      pair.swap_axis = detect_swap_axis(pair.base, lexicon);
      pair.swapped = swap_gender(pair.base, pair.swap_axis, lexicon);
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

inline std::vector<GenerationBatch> read_batches_jsonl(
    const std::filesystem::path& path) {
  auto samples = detail::load_completed_samples(path);
  std::map<std::pair<std::string, PairSide>, GenerationBatch> grouped;
  for (const auto& [key, text] : samples) {
    GenerationBatch& batch = grouped[{key.pair_id, key.side}];
    batch.pair_id = key.pair_id;
    batch.side = key.side;
    batch.texts.push_back(text);
  }
  std::vector<GenerationBatch> batches;
  for (auto& [key, batch] : grouped) batches.push_back(std::move(batch));
  return batches;
}

}  // namespace descaudit
