#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "descaudit/corpus.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/lexicon.hpp"
#include "descaudit/stats.hpp"

namespace descaudit {

// AdvertisedFeatureBias and ProductActivityBias are reserved for the
// counterfactual/classifier path; lexicon detectors never emit them.
enum class BiasCategory {
  BodySizeAssumption,
  TargetGroupExclusion,
  NonbinaryExclusion,
  TargetGroupAssumption,
  AdvertisedFeatureBias,
  ProductActivityBias,
  PersuasionDisparity,
  Toxicity,
};

inline const char* to_string(BiasCategory c) {
  switch (c) {
    case BiasCategory::BodySizeAssumption: return "body_size_assumption";
    case BiasCategory::TargetGroupExclusion: return "target_group_exclusion";
    case BiasCategory::NonbinaryExclusion: return "nonbinary_exclusion";
    case BiasCategory::TargetGroupAssumption: return "target_group_assumption";
    case BiasCategory::AdvertisedFeatureBias: return "advertised_feature_bias";
    case BiasCategory::ProductActivityBias: return "product_activity_bias";
    case BiasCategory::PersuasionDisparity: return "persuasion_disparity";
    case BiasCategory::Toxicity: return "toxicity";
  }
  return "unknown";
}

inline const char* display_name(BiasCategory c) {
  switch (c) {
    case BiasCategory::BodySizeAssumption: return "Body size assumptions";
    case BiasCategory::TargetGroupExclusion: return "Target group exclusion";
    case BiasCategory::NonbinaryExclusion: return "Nonbinary exclusion";
    case BiasCategory::TargetGroupAssumption: return "Target group assumptions";
    case BiasCategory::AdvertisedFeatureBias: return "Advertised feature bias";
    case BiasCategory::ProductActivityBias: return "Product-activity associations";
    case BiasCategory::PersuasionDisparity: return "Persuasion disparities";
    case BiasCategory::Toxicity: return "Toxicity";
  }
  return "Unknown";
}

struct AuditFinding {
  std::string record_id;
  BiasCategory category = BiasCategory::BodySizeAssumption;
  std::vector<MatchSpan> matches;
  std::map<std::string, double> metrics;
  std::string note;
  // Routed to a manual queue instead of the flag counts (suppressed
  // top-level categories such as media plots and artists).
  bool needs_review = false;
};

enum class DetectorKind {
  BodySize,
  TargetGroupExclusion,
  NonbinaryExclusion,
  TargetGroupAssumption,
  CallToAction,
  Toxicity,
};

inline const char* to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::BodySize: return "body_size";
    case DetectorKind::TargetGroupExclusion: return "target_group_exclusion";
    case DetectorKind::NonbinaryExclusion: return "nonbinary_exclusion";
    case DetectorKind::TargetGroupAssumption: return "target_group_assumption";
    case DetectorKind::CallToAction: return "call_to_action";
    case DetectorKind::Toxicity: return "toxicity";
  }
  return "unknown";
}

inline std::optional<DetectorKind> detector_kind_from_string(
    std::string_view name) {
  for (DetectorKind k :
       {DetectorKind::BodySize, DetectorKind::TargetGroupExclusion,
        DetectorKind::NonbinaryExclusion, DetectorKind::TargetGroupAssumption,
        DetectorKind::CallToAction, DetectorKind::Toxicity}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

struct VocabPaths {
  std::string body_size = "vocab/body_size.txt";
  std::string gendered_feminine = "vocab/gendered_terms_feminine.txt";
  std::string gendered_masculine = "vocab/gendered_terms_masculine.txt";
  std::string nonbinary_pairs = "vocab/nonbinary_pairs.txt";
  std::string call_to_action = "vocab/call_to_action.txt";

  std::vector<std::string> all(const std::filesystem::path& base) const {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    return {resolve(body_size), resolve(gendered_feminine),
            resolve(gendered_masculine), resolve(nonbinary_pairs),
            resolve(call_to_action)};
  }
};

struct DetectorConfig {
  std::set<DetectorKind> enabled = {
      DetectorKind::BodySize, DetectorKind::TargetGroupExclusion,
      DetectorKind::NonbinaryExclusion, DetectorKind::TargetGroupAssumption,
      DetectorKind::CallToAction};
  // Clothing scope: taxonomies differ, so the segment list is data.
  std::vector<std::string> clothing_segments = {
      "Clothing", "Shoes", "Accessories", "Clothing, Shoes & Accessories"};
  bool body_size_clothing_only = true;
  NeutralityConfig neutrality;
  // Top-level categories whose assumption hits go to the review queue
  // (media plots and artist names dominate the false positives there).
  std::vector<std::string> suppressed_top_level = {"Movies", "Music", "Books"};
  double toxicity_threshold = 0.7;
  std::vector<std::string> exclusion_verbs = {"designed", "made"};
  VocabPaths vocab;
};

inline DetectorConfig detector_config_from_json(const nlohmann::json& obj) {
  DetectorConfig config;
  if (obj.contains("enabled")) {
    config.enabled.clear();
    for (const auto& name : obj["enabled"]) {
      auto kind = detector_kind_from_string(name.get<std::string>());
      if (!kind) {
        throw Error(ErrorCode::SchemaError,
                    "unknown detector '" + name.get<std::string>() + "'");
      }
      config.enabled.insert(*kind);
    }
  }
  if (obj.contains("clothing_segments")) {
    config.clothing_segments =
        obj["clothing_segments"].get<std::vector<std::string>>();
  }
  if (obj.contains("body_size_clothing_only")) {
    config.body_size_clothing_only = obj["body_size_clothing_only"].get<bool>();
  }
  if (obj.contains("gendered_segments")) {
    config.neutrality.gendered_segments =
        obj["gendered_segments"].get<std::vector<std::string>>();
  }
  if (obj.contains("suppressed_top_level")) {
    config.suppressed_top_level =
        obj["suppressed_top_level"].get<std::vector<std::string>>();
  }
  if (obj.contains("toxicity_threshold")) {
    config.toxicity_threshold = obj["toxicity_threshold"].get<double>();
    if (!(config.toxicity_threshold > 0.0 && config.toxicity_threshold < 1.0)) {
      throw Error(ErrorCode::SchemaError,
                  "toxicity_threshold must lie in (0, 1)");
    }
  }
  if (obj.contains("exclusion_verbs")) {
    config.exclusion_verbs =
        obj["exclusion_verbs"].get<std::vector<std::string>>();
  }
  if (obj.contains("vocab")) {
    const auto& v = obj["vocab"];
    auto set_path = [&](const char* key, std::string& target) {
      if (v.contains(key)) target = v[key].get<std::string>();
    };
    set_path("body_size", config.vocab.body_size);
    set_path("gendered_feminine", config.vocab.gendered_feminine);
    set_path("gendered_masculine", config.vocab.gendered_masculine);
    set_path("nonbinary_pairs", config.vocab.nonbinary_pairs);
    set_path("call_to_action", config.vocab.call_to_action);
  }
  return config;
}

// `(designed|made)( exclusively)? for <plural gendered term>`, expanded to
// literal phrases so the matching core stays regex-free.
inline PhraseSet build_explicit_exclusion_set(
    const GenderLexicon& lexicon, const std::vector<std::string>& verbs) {
  std::vector<std::string> phrases;
  for (const auto& verb : verbs) {
    for (const char* adverb : {"", " exclusively"}) {
      for (const auto& term : lexicon.plural_terms()) {
        phrases.push_back(verb + std::string(adverb) + " for " + term);
      }
    }
  }
  return PhraseSet("explicit_exclusion", PhraseSource::ExplicitExclusion,
                   phrases);
}

struct LexiconBundle {
  PhraseSet body_size;
  PhraseSet nonbinary;
  PhraseSet call_to_action;
  PhraseSet explicit_exclusion;
  GenderLexicon gender;

  static LexiconBundle load(const VocabPaths& paths,
                            const std::filesystem::path& base,
                            const std::vector<std::string>& exclusion_verbs = {
                                "designed", "made"}) {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    LexiconBundle bundle;
    bundle.body_size = load_phrase_set(resolve(paths.body_size), "body_size",
                                       PhraseSource::BodySize);
    bundle.nonbinary = load_phrase_set(resolve(paths.nonbinary_pairs),
                                       "nonbinary_pairs",
                                       PhraseSource::NonbinaryPairs);
    bundle.call_to_action = load_phrase_set(resolve(paths.call_to_action),
                                            "call_to_action",
                                            PhraseSource::CallToAction);
    bundle.gender = GenderLexicon::from_files(
        resolve(paths.gendered_feminine), resolve(paths.gendered_masculine));
    bundle.explicit_exclusion =
        build_explicit_exclusion_set(bundle.gender, exclusion_verbs);
    return bundle;
  }
};

// External toxicity scorer (e.g. a hosted moderation API). Implementations
// throw Error(ScorerUnavailable) so records are marked unscored rather
// than silently passed.
class ToxicityScorer {
 public:
  virtual ~ToxicityScorer() = default;
  virtual double score(const std::string& text) = 0;
};

namespace detail {

inline bool segment_matches(std::string_view segment, std::string_view entry) {
  std::string seg = lower(trim(segment));
  std::string ent = lower(trim(entry));
  if (seg == ent) return true;
  if (seg.size() > ent.size() && seg.compare(0, ent.size(), ent) == 0 &&
      !std::isalnum(static_cast<unsigned char>(seg[ent.size()]))) {
    return true;
  }
  return false;
}

}  // namespace detail

class BiasDetectors {
 public:
  BiasDetectors(LexiconBundle lexicons, DetectorConfig config = {})
      : lexicons_(std::move(lexicons)), config_(std::move(config)) {}

  const DetectorConfig& config() const { return config_; }
  const LexiconBundle& lexicons() const { return lexicons_; }

  bool in_clothing_scope(const ProductListing& listing) const {
    for (const auto& segment : listing.category_path) {
      for (const auto& entry : config_.clothing_segments) {
        if (detail::lower(detail::trim(segment)) == detail::lower(entry)) {
          return true;
        }
      }
    }
    return false;
  }

  bool is_suppressed(const ProductListing& listing) const {
    if (listing.category_path.empty()) return false;
    for (const auto& entry : config_.suppressed_top_level) {
      if (detail::segment_matches(listing.category_path.front(), entry)) {
        return true;
      }
    }
    return false;
  }

  std::optional<AuditFinding> detect_body_size(
      const DescribedRecord& record) const {
    if (config_.body_size_clothing_only && !in_clothing_scope(record.listing)) {
      return std::nullopt;
    }
    auto matches = lexicons_.body_size.find(normalize(record.description));
    if (matches.empty()) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::BodySizeAssumption;
    finding.matches = std::move(matches);
    return finding;
  }

  std::optional<AuditFinding> detect_target_group_exclusion(
      const DescribedRecord& record) const {
    if (!in_clothing_scope(record.listing)) return std::nullopt;
    TokenSequence tokens = normalize(record.description);
    auto matches = lexicons_.explicit_exclusion.find(tokens);
    if (matches.empty()) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::TargetGroupExclusion;
    finding.matches = std::move(matches);
    finding.metrics["gender_mention_count"] =
        static_cast<double>(lexicons_.gender.count(tokens).total);
    return finding;
  }

  std::optional<AuditFinding> detect_nonbinary_exclusion(
      const DescribedRecord& record) const {
    auto matches = lexicons_.nonbinary.find(normalize(record.description));
    if (matches.empty()) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::NonbinaryExclusion;
    finding.matches = std::move(matches);
    return finding;
  }

  std::optional<AuditFinding> detect_target_group_assumption(
      const DescribedRecord& record) const {
    if (!is_gender_neutral(record.listing, config_.neutrality)) {
      return std::nullopt;
    }
    TokenSequence tokens = normalize(record.description);
    GenderCounts counts = lexicons_.gender.count(tokens);
    if (counts.total == 0) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::TargetGroupAssumption;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (lexicons_.gender.is_gendered(tokens[i])) {
        finding.matches.push_back({{tokens[i]}, i, i + 1});
      }
    }
    finding.metrics["gender_mention_count"] = static_cast<double>(counts.total);
    if (is_suppressed(record.listing)) {
      finding.needs_review = true;
      finding.note = "suppressed top-level category; review manually";
    }
    return finding;
  }

  std::optional<AuditFinding> detect_call_to_action(
      const DescribedRecord& record) const {
    auto matches = lexicons_.call_to_action.find(normalize(record.description));
    if (matches.empty()) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::PersuasionDisparity;
    finding.matches = std::move(matches);
    return finding;
  }

  std::optional<AuditFinding> detect_toxicity(const DescribedRecord& record,
                                              ToxicityScorer& scorer) const {
    double value;
    try {
      value = scorer.score(record.description);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ScorerUnavailable,
                  "record " + record.listing.id + ": " + e.what());
    }
    if (value < config_.toxicity_threshold) return std::nullopt;
    AuditFinding finding;
    finding.record_id = record.listing.id;
    finding.category = BiasCategory::Toxicity;
    finding.metrics["toxicity"] = value;
    return finding;
  }

 private:
  LexiconBundle lexicons_;
  DetectorConfig config_;
};

struct CategoryStats {
  std::uint64_t flagged = 0;
  std::uint64_t denominator = 0;
  std::optional<ProportionEstimate> rate;  // absent when denominator is 0
};

struct GroupStats {
  std::uint64_t size = 0;
  std::map<std::string, CategoryStats> categories;  // keyed by category slug
};

struct RecordIssue {
  std::string record_id;
  std::string detector;
  std::string message;
};

enum class GroupingKind { Department, TopLevelCategory };

inline const char* to_string(GroupingKind g) {
  return g == GroupingKind::Department ? "department" : "top_level_category";
}

struct AuditReport {
  std::uint64_t corpus_size = 0;
  std::map<std::string, CategoryStats> overall;  // keyed by category slug
  // grouping name -> group key -> stats
  std::map<std::string, std::map<std::string, GroupStats>> groupings;
  std::vector<AuditFinding> findings;      // flagged, sorted by record id
  std::vector<AuditFinding> needs_review;  // surfaced, not counted as flagged
  std::vector<std::string> unscored_toxicity;
  std::vector<RecordIssue> issues;
  std::map<std::string, double> metrics;
  // Call-to-action rate, men's vs women's departments, when both sides
  // have records and the pooled rate is non-degenerate.
  std::optional<TwoProportionTest> cta_department_test;
};

namespace detail {

inline std::string group_key(GroupingKind kind, const ProductListing& listing) {
  if (kind == GroupingKind::Department) {
    return to_string(listing.department);
  }
  return listing.category_path.empty() ? std::string("(none)")
                                       : listing.category_path.front();
}

inline void bump(std::map<std::string, CategoryStats>& stats,
                 BiasCategory category, bool eligible, bool flagged) {
  CategoryStats& entry = stats[to_string(category)];
  if (eligible) ++entry.denominator;
  if (flagged) ++entry.flagged;
}

}  // namespace detail

// Applies every enabled detector to every record. Counts are pure
// integer aggregations, so the result is identical under any record
// permutation; findings and issues are sorted by record id.
inline AuditReport audit_corpus(
    const Corpus& corpus, const BiasDetectors& detectors,
    ToxicityScorer* scorer = nullptr,
    const std::vector<GroupingKind>& groupers = {GroupingKind::Department,
                                                 GroupingKind::TopLevelCategory},
    double ci_level = 0.95) {
  const DetectorConfig& config = detectors.config();
  AuditReport report;
  report.corpus_size = corpus.records.size();

  struct Cell {
    BiasCategory category;
    bool eligible;
    bool flagged;
  };

  std::uint64_t mention_sum = 0;
  std::uint64_t mention_records = 0;
  std::uint64_t cta_flagged[2] = {0, 0};  // [men, women]
  std::uint64_t cta_total[2] = {0, 0};

  for (const auto& record : corpus.records) {
    std::vector<Cell> cells;
    auto run_lexicon = [&](DetectorKind kind, BiasCategory category,
                           bool eligible,
                           std::optional<AuditFinding> finding) {
      bool flagged = false;
      if (finding) {
        if (finding->needs_review) {
          report.needs_review.push_back(std::move(*finding));
        } else {
          flagged = true;
          report.findings.push_back(std::move(*finding));
        }
      }
      (void)kind;
      cells.push_back({category, eligible, flagged});
    };

    const bool clothing = detectors.in_clothing_scope(record.listing);
    if (config.enabled.count(DetectorKind::BodySize)) {
      bool eligible = !config.body_size_clothing_only || clothing;
      run_lexicon(DetectorKind::BodySize, BiasCategory::BodySizeAssumption,
                  eligible, detectors.detect_body_size(record));
    }
    if (config.enabled.count(DetectorKind::TargetGroupExclusion)) {
      run_lexicon(DetectorKind::TargetGroupExclusion,
                  BiasCategory::TargetGroupExclusion, clothing,
                  detectors.detect_target_group_exclusion(record));
      if (clothing) {
        mention_sum +=
            detectors.lexicons().gender.count(normalize(record.description))
                .total;
        ++mention_records;
      }
    }
    if (config.enabled.count(DetectorKind::NonbinaryExclusion)) {
      run_lexicon(DetectorKind::NonbinaryExclusion,
                  BiasCategory::NonbinaryExclusion, true,
                  detectors.detect_nonbinary_exclusion(record));
    }
    if (config.enabled.count(DetectorKind::TargetGroupAssumption)) {
      run_lexicon(DetectorKind::TargetGroupAssumption,
                  BiasCategory::TargetGroupAssumption, true,
                  detectors.detect_target_group_assumption(record));
    }
    if (config.enabled.count(DetectorKind::CallToAction)) {
      auto finding = detectors.detect_call_to_action(record);
      bool flagged = finding.has_value();
      if (record.listing.department == Department::Men) {
        ++cta_total[0];
        if (flagged) ++cta_flagged[0];
      } else if (record.listing.department == Department::Women) {
        ++cta_total[1];
        if (flagged) ++cta_flagged[1];
      }
      run_lexicon(DetectorKind::CallToAction, BiasCategory::PersuasionDisparity,
                  true, std::move(finding));
    }
    if (config.enabled.count(DetectorKind::Toxicity) && scorer != nullptr) {
      try {
        auto finding = detectors.detect_toxicity(record, *scorer);
        run_lexicon(DetectorKind::Toxicity, BiasCategory::Toxicity, true,
                    std::move(finding));
      } catch (const Error& e) {
        report.unscored_toxicity.push_back(record.listing.id);
        report.issues.push_back(
            {record.listing.id, to_string(DetectorKind::Toxicity), e.what()});
        cells.push_back({BiasCategory::Toxicity, false, false});
      }
    }

    for (const Cell& cell : cells) {
      detail::bump(report.overall, cell.category, cell.eligible, cell.flagged);
    }
    for (GroupingKind grouping : groupers) {
      auto& groups = report.groupings[to_string(grouping)];
      GroupStats& group =
          groups[detail::group_key(grouping, record.listing)];
      ++group.size;
      for (const Cell& cell : cells) {
        detail::bump(group.categories, cell.category, cell.eligible,
                     cell.flagged);
      }
    }
  }

  auto fill_rates = [&](std::map<std::string, CategoryStats>& stats) {
    for (auto& [name, entry] : stats) {
      if (entry.denominator > 0) {
        entry.rate = proportion_ci(entry.flagged, entry.denominator, ci_level);
      }
    }
  };
  fill_rates(report.overall);
  for (auto& [name, groups] : report.groupings) {
    for (auto& [key, group] : groups) fill_rates(group.categories);
  }

  if (mention_records > 0) {
    report.metrics["mean_gender_mentions_clothing_scope"] =
        static_cast<double>(mention_sum) / static_cast<double>(mention_records);
    report.metrics["gender_mention_records"] =
        static_cast<double>(mention_records);
  }
  if (cta_total[0] > 0 && cta_total[1] > 0) {
    std::uint64_t pooled = cta_flagged[0] + cta_flagged[1];
    if (pooled > 0 && pooled < cta_total[0] + cta_total[1]) {
      report.cta_department_test = two_proportion_z(
          cta_flagged[0], cta_total[0], cta_flagged[1], cta_total[1]);
    }
  }

  auto by_record = [](const AuditFinding& a, const AuditFinding& b) {
    if (a.record_id != b.record_id) return a.record_id < b.record_id;
    return to_string(a.category) < std::string(to_string(b.category));
  };
  std::sort(report.findings.begin(), report.findings.end(), by_record);
  std::sort(report.needs_review.begin(), report.needs_review.end(), by_record);
  std::sort(report.unscored_toxicity.begin(), report.unscored_toxicity.end());
  std::sort(report.issues.begin(), report.issues.end(),
            [](const RecordIssue& a, const RecordIssue& b) {
              return std::tie(a.record_id, a.detector, a.message) <
                     std::tie(b.record_id, b.detector, b.message);
            });
  return report;
}

}  // namespace descaudit
