#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "descaudit/errors.hpp"
#include "descaudit/lexicon.hpp"

namespace descaudit {

struct LabeledDocument {
  TokenSequence tokens;  // masked, normalized
  std::string label;
};

using LabeledDataset = std::vector<LabeledDocument>;

// Unigrams plus adjacent bigrams (joined with '_') in stable sorted index
// order; features below min_count are dropped.
class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;

  static FeatureVocabulary build(const LabeledDataset& docs, int min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& doc : docs) {
      for (const auto& feature : enumerate_ngrams(doc.tokens)) {
        ++counts[feature];
      }
    }
    FeatureVocabulary vocab;
    for (const auto& [feature, count] : counts) {
      if (count >= static_cast<std::uint64_t>(min_count)) {
        vocab.index_[feature] = vocab.features_.size();
        vocab.features_.push_back(feature);
      }
    }
    vocab.min_count_ = min_count;
    return vocab;
  }

  static std::vector<std::string> enumerate_ngrams(const TokenSequence& tokens) {
    std::vector<std::string> ngrams;
    ngrams.reserve(tokens.size() * 2);
    for (size_t i = 0; i < tokens.size(); ++i) {
      ngrams.push_back(tokens[i]);
      if (i + 1 < tokens.size()) {
        ngrams.push_back(tokens[i] + "_" + tokens[i + 1]);
      }
    }
    return ngrams;
  }

  size_t size() const { return features_.size(); }
  int min_count() const { return min_count_; }
  const std::vector<std::string>& features() const { return features_; }

  long index_of(const std::string& feature) const {
    auto it = index_.find(feature);
    return it == index_.end() ? -1 : static_cast<long>(it->second);
  }

 private:
  std::vector<std::string> features_;
  std::unordered_map<std::string, size_t> index_;
  int min_count_ = 0;
};

using SparseCounts = std::map<size_t, std::uint32_t>;  // feature index -> count

// Multiset counts of in-vocabulary unigrams and adjacent bigrams;
// out-of-vocabulary n-grams are dropped. The mask sentinel participates
// like any other token.
inline SparseCounts featurize(const TokenSequence& document,
                              const FeatureVocabulary& vocab) {
  SparseCounts counts;
  for (const auto& feature : FeatureVocabulary::enumerate_ngrams(document)) {
    long index = vocab.index_of(feature);
    if (index >= 0) ++counts[static_cast<size_t>(index)];
  }
  return counts;
}

// Multinomial naive Bayes with additive smoothing. Likelihoods per class
// form a proper distribution over the vocabulary.
struct GenderClassifierModel {
  FeatureVocabulary vocabulary;
  std::vector<std::string> classes;          // sorted
  std::vector<double> log_prior;             // per class
  std::vector<std::vector<double>> log_like; // [class][feature]
  double alpha = 1.0;
  std::uint64_t seed = 0;

  size_t class_index(const std::string& label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) {
      throw Error(ErrorCode::SchemaError, "unknown class label " + label);
    }
    return static_cast<size_t>(it - classes.begin());
  }

  std::vector<double> scores(const TokenSequence& document) const {
    SparseCounts counts = featurize(document, vocabulary);
    std::vector<double> out(classes.size());
    for (size_t c = 0; c < classes.size(); ++c) {
      double score = log_prior[c];
      for (const auto& [feature, count] : counts) {
        score += static_cast<double>(count) * log_like[c][feature];
      }
      out[c] = score;
    }
    return out;
  }

  // Posterior ties break toward the lexicographically first class.
  std::string predict(const TokenSequence& document) const {
    std::vector<double> s = scores(document);
    size_t best = 0;
    for (size_t c = 1; c < s.size(); ++c) {
      if (s[c] > s[best]) best = c;
    }
    return classes[best];
  }
};

inline GenderClassifierModel train(const LabeledDataset& dataset,
                                   const FeatureVocabulary& vocab,
                                   double alpha = 1.0,
                                   std::uint64_t seed = 0) {
  if (!(alpha > 0.0)) {
    throw Error(ErrorCode::SchemaError, "smoothing alpha must be positive");
  }
  if (vocab.size() == 0) {
    throw Error(ErrorCode::EmptyVocabulary,
                "no feature meets the min_count threshold");
  }
  GenderClassifierModel model;
  model.vocabulary = vocab;
  model.alpha = alpha;
  model.seed = seed;

  std::map<std::string, std::uint64_t> doc_counts;
  for (const auto& doc : dataset) ++doc_counts[doc.label];
  if (doc_counts.size() < 2) {
    throw Error(ErrorCode::SingleClassDataset,
                "training data must cover at least two labels");
  }
  for (const auto& [label, count] : doc_counts) model.classes.push_back(label);

  const size_t n_classes = model.classes.size();
  const size_t n_features = vocab.size();
  std::vector<std::vector<std::uint64_t>> counts(
      n_classes, std::vector<std::uint64_t>(n_features, 0));
  std::vector<std::uint64_t> totals(n_classes, 0);
  for (const auto& doc : dataset) {
    size_t c = model.class_index(doc.label);
    for (const auto& [feature, count] : featurize(doc.tokens, vocab)) {
      counts[c][feature] += count;
      totals[c] += count;
    }
  }

  const double total_docs = static_cast<double>(dataset.size());
  model.log_prior.resize(n_classes);
  model.log_like.assign(n_classes, std::vector<double>(n_features));
  for (size_t c = 0; c < n_classes; ++c) {
    model.log_prior[c] =
        std::log(static_cast<double>(doc_counts[model.classes[c]]) / total_docs);
    const double denom =
        static_cast<double>(totals[c]) + alpha * static_cast<double>(n_features);
    for (size_t f = 0; f < n_features; ++f) {
      model.log_like[c][f] =
          std::log((static_cast<double>(counts[c][f]) + alpha) / denom);
    }
  }
  return model;
}

struct RankedFeature {
  std::string feature;
  double log_odds = 0.0;
};

// Per-class ranking by log P(f|class) - log P(f|other); requires the
// two-class model this pipeline produces. Ties break by feature index.
inline std::map<std::string, std::vector<RankedFeature>> top_features(
    const GenderClassifierModel& model, size_t k) {
  if (model.classes.size() != 2) {
    throw Error(ErrorCode::SchemaError,
                "top_features expects a two-class model");
  }
  if (k == 0) {
    throw Error(ErrorCode::SchemaError, "k must be at least 1");
  }
  std::map<std::string, std::vector<RankedFeature>> out;
  const size_t n_features = model.vocabulary.size();
  for (size_t c = 0; c < 2; ++c) {
    size_t other = 1 - c;
    std::vector<size_t> order(n_features);
    for (size_t f = 0; f < n_features; ++f) order[f] = f;
    std::vector<double> odds(n_features);
    for (size_t f = 0; f < n_features; ++f) {
      odds[f] = model.log_like[c][f] - model.log_like[other][f];
    }
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return odds[a] > odds[b];
    });
    std::vector<RankedFeature> ranked;
    for (size_t i = 0; i < std::min(k, n_features); ++i) {
      ranked.push_back(
          {model.vocabulary.features()[order[i]], odds[order[i]]});
    }
    out[model.classes[c]] = std::move(ranked);
  }
  return out;
}

struct SplitDataset {
  LabeledDataset train;
  LabeledDataset held_out;
  std::uint64_t seed = 0;
};

namespace detail {

// Deterministic Fisher-Yates on top of mt19937_64 so splits are identical
// across platforms; std::shuffle leaves the algorithm unspecified.
inline void deterministic_shuffle(std::vector<size_t>& values,
                                  std::mt19937_64& rng) {
  for (size_t i = values.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace detail

// Stratified split: each label is shuffled and cut separately so label
// balance carries into the held-out set.
inline SplitDataset stratified_split(const LabeledDataset& dataset,
                                     double held_out_fraction,
                                     std::uint64_t seed) {
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) {
    throw Error(ErrorCode::SchemaError,
                "held_out_fraction must lie in (0, 1)");
  }

  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t i = 0; i < dataset.size(); ++i) {
    by_label[dataset[i].label].push_back(i);
  }

  SplitDataset split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [label, indices] : by_label) {
    detail::deterministic_shuffle(indices, rng);
    size_t held = static_cast<size_t>(
        std::llround(held_out_fraction * static_cast<double>(indices.size())));
    if (indices.size() > 1 && held == 0) held = 1;
    if (held >= indices.size()) held = indices.size() - 1;
    for (size_t i = 0; i < indices.size(); ++i) {
      (i < held ? split.held_out : split.train).push_back(dataset[indices[i]]);
    }
  }
  return split;
}

struct EvalReport {
  double accuracy = 0.0;
  std::map<std::string, std::map<std::string, std::uint64_t>>
      confusion;  // true label -> predicted label -> count
  std::uint64_t held_out_size = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<RankedFeature>> top_features;
};

inline EvalReport evaluate(const GenderClassifierModel& model,
                           const LabeledDataset& held_out) {
  EvalReport report;
  report.seed = model.seed;
  report.held_out_size = held_out.size();
  std::uint64_t correct = 0;
  for (const auto& doc : held_out) {
    std::string predicted = model.predict(doc.tokens);
    ++report.confusion[doc.label][predicted];
    if (predicted == doc.label) ++correct;
  }
  if (!held_out.empty()) {
    report.accuracy =
        static_cast<double>(correct) / static_cast<double>(held_out.size());
  }
  return report;
}

struct ClassifierConfig {
  double alpha = 1.0;
  int min_count = 2;
  double held_out_fraction = 0.2;
  std::uint64_t seed = 0;
  size_t top_k = 15;
};

struct Experiment {
  GenderClassifierModel model;
  EvalReport report;
};

// Split, fit on the training portion (vocabulary included, so the held-out
// set stays unseen), evaluate, and rank discriminative features.
inline Experiment run_experiment(const LabeledDataset& dataset,
                                 const ClassifierConfig& config = {}) {
  SplitDataset split =
      stratified_split(dataset, config.held_out_fraction, config.seed);
  FeatureVocabulary vocab =
      FeatureVocabulary::build(split.train, config.min_count);
  Experiment experiment;
  experiment.model = train(split.train, vocab, config.alpha, config.seed);
  experiment.report = evaluate(experiment.model, split.held_out);
  if (experiment.model.classes.size() == 2) {
    experiment.report.top_features =
        top_features(experiment.model, config.top_k);
  }
  return experiment;
}

inline nlohmann::json model_to_json(const GenderClassifierModel& model) {
  nlohmann::json obj;
  obj["alpha"] = model.alpha;
  obj["seed"] = model.seed;
  obj["classes"] = model.classes;
  obj["min_count"] = model.vocabulary.min_count();
  obj["vocabulary"] = model.vocabulary.features();
  obj["log_prior"] = model.log_prior;
  obj["log_likelihood"] = model.log_like;
  return obj;
}

inline GenderClassifierModel model_from_json(const nlohmann::json& obj) {
  GenderClassifierModel model;
  model.alpha = obj.at("alpha").get<double>();
  model.seed = obj.at("seed").get<std::uint64_t>();
  model.classes = obj.at("classes").get<std::vector<std::string>>();
  model.log_prior = obj.at("log_prior").get<std::vector<double>>();
  model.log_like =
      obj.at("log_likelihood").get<std::vector<std::vector<double>>>();

  LabeledDataset pseudo;
  for (const auto& feature : obj.at("vocabulary")) {
    // rebuild the index through the public path: one pseudo-document per
    // feature, min_count 1, which reproduces sorted order
    pseudo.push_back({{feature.get<std::string>()}, "x"});
  }
  model.vocabulary = FeatureVocabulary::build(pseudo, 1);
  if (model.vocabulary.size() != obj.at("vocabulary").size()) {
    throw Error(ErrorCode::SchemaError, "model vocabulary is not unique");
  }
  return model;
}

}  // namespace descaudit
