#pragma once

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "descaudit/classifier.hpp"
#include "descaudit/detail/fnv.hpp"
#include "descaudit/detectors.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/stats.hpp"

namespace descaudit {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_digest;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::uint64_t seed = 0;
  std::string generated_at;  // RFC 3339 UTC
};

namespace detail {

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot digest " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return fnv1a64_hex(buffer.str());
}

// Honors SOURCE_DATE_EPOCH so runs can be made byte-reproducible.
inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buffer;
}

}  // namespace detail

inline RunManifest make_manifest(const nlohmann::json& config,
                                 const std::vector<std::string>& input_paths,
                                 std::uint64_t seed) {
  RunManifest manifest;
  manifest.config_digest = detail::fnv1a64_hex(config.dump());
  for (const auto& path : input_paths) {
    manifest.inputs.push_back({path, detail::file_digest(path)});
  }
  manifest.seed = seed;
  manifest.generated_at = detail::utc_timestamp();
  return manifest;
}

inline nlohmann::json manifest_to_json(const RunManifest& manifest) {
  nlohmann::json obj;
  obj["tool_version"] = manifest.tool_version;
  obj["config_digest"] = manifest.config_digest;
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [path, digest] : manifest.inputs) {
    inputs.push_back({{"path", path}, {"digest", digest}});
  }
  obj["inputs"] = std::move(inputs);
  obj["seed"] = manifest.seed;
  obj["generated_at"] = manifest.generated_at;
  return obj;
}

inline nlohmann::json proportion_to_json(const ProportionEstimate& est) {
  return {{"successes", est.successes}, {"trials", est.trials},
          {"p_hat", est.p_hat},         {"ci_low", est.ci_low},
          {"ci_high", est.ci_high},     {"level", est.level}};
}

inline nlohmann::json ztest_to_json(const TwoProportionTest& test) {
  return {{"x1", test.x1}, {"n1", test.n1},
          {"x2", test.x2}, {"n2", test.n2},
          {"p1", test.p1}, {"p2", test.p2},
          {"pooled_p", test.pooled_p},
          {"z", test.z},   {"p_value", test.p_value}};
}

namespace detail {

inline nlohmann::json category_stats_to_json(
    const std::map<std::string, CategoryStats>& stats) {
  nlohmann::json obj = nlohmann::json::object();
  for (const auto& [name, entry] : stats) {
    nlohmann::json cell;
    cell["flagged"] = entry.flagged;
    cell["denominator"] = entry.denominator;
    if (entry.rate) cell["rate"] = proportion_to_json(*entry.rate);
    obj[name] = std::move(cell);
  }
  return obj;
}

inline nlohmann::json finding_to_json(const AuditFinding& finding) {
  nlohmann::json obj;
  obj["record_id"] = finding.record_id;
  obj["category"] = to_string(finding.category);
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& match : finding.matches) {
    matches.push_back({{"phrase", join_tokens(match.phrase)},
                       {"start_token", match.start_token},
                       {"end_token", match.end_token}});
  }
  obj["matches"] = std::move(matches);
  obj["metrics"] = finding.metrics;
  if (!finding.note.empty()) obj["note"] = finding.note;
  return obj;
}

}  // namespace detail

inline nlohmann::json audit_report_to_json(const AuditReport& report,
                                           const RunManifest& manifest) {
  nlohmann::json obj;
  obj["manifest"] = manifest_to_json(manifest);
  obj["corpus_size"] = report.corpus_size;
  obj["categories"] = detail::category_stats_to_json(report.overall);
  nlohmann::json groupings = nlohmann::json::object();
  for (const auto& [name, groups] : report.groupings) {
    nlohmann::json group_obj = nlohmann::json::object();
    for (const auto& [key, group] : groups) {
      group_obj[key] = {{"size", group.size},
                        {"categories",
                         detail::category_stats_to_json(group.categories)}};
    }
    groupings[name] = std::move(group_obj);
  }
  obj["groupings"] = std::move(groupings);
  obj["metrics"] = report.metrics;
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& finding : report.findings) {
    findings.push_back(detail::finding_to_json(finding));
  }
  obj["findings"] = std::move(findings);
  nlohmann::json review = nlohmann::json::array();
  for (const auto& finding : report.needs_review) {
    review.push_back(detail::finding_to_json(finding));
  }
  obj["needs_review"] = std::move(review);
  obj["unscored_toxicity"] = report.unscored_toxicity;
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& issue : report.issues) {
    issues.push_back({{"record_id", issue.record_id},
                      {"detector", issue.detector},
                      {"message", issue.message}});
  }
  obj["issues"] = std::move(issues);
  if (report.cta_department_test) {
    obj["cta_department_test"] = ztest_to_json(*report.cta_department_test);
  }
  return obj;
}

namespace detail {

inline std::string percent(double value, int decimals = 1) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.*f%%", decimals, value * 100.0);
  return buffer;
}

}  // namespace detail

// Markdown per-category tables in the shape of the findings summaries:
// rate plus confidence interval per category, then per group.
inline std::string audit_report_to_markdown(const AuditReport& report,
                                            const RunManifest& manifest) {
  std::ostringstream out;
  out << "# Corpus audit\n\n";
  if (report.corpus_size == 0) {
    out << "**No records in corpus.**\n";
  }
  out << "Records: " << report.corpus_size << "\n\n";
  out << "| Category | Flagged | Denominator | Rate | 95% CI |\n";
  out << "| --- | --- | --- | --- | --- |\n";
  for (const auto& [name, entry] : report.overall) {
    out << "| " << name << " | " << entry.flagged << " | "
        << entry.denominator << " | ";
    if (entry.rate) {
      out << detail::percent(entry.rate->p_hat) << " | ("
          << detail::percent(entry.rate->ci_low) << ", "
          << detail::percent(entry.rate->ci_high) << ") |\n";
    } else {
      out << "- | - |\n";
    }
  }
  out << "\n";
  for (const auto& [grouping, groups] : report.groupings) {
    out << "## By " << grouping << "\n\n";
    out << "| Group | Size | Category | Flagged | Rate | 95% CI |\n";
    out << "| --- | --- | --- | --- | --- | --- |\n";
    for (const auto& [key, group] : groups) {
      for (const auto& [name, entry] : group.categories) {
        out << "| " << key << " | " << group.size << " | " << name << " | "
            << entry.flagged << " | ";
        if (entry.rate) {
          out << detail::percent(entry.rate->p_hat) << " | ("
              << detail::percent(entry.rate->ci_low) << ", "
              << detail::percent(entry.rate->ci_high) << ") |\n";
        } else {
          out << "- | - |\n";
        }
      }
    }
    out << "\n";
  }
  if (!report.metrics.empty()) {
    out << "## Metrics\n\n";
    for (const auto& [name, value] : report.metrics) {
      out << "- " << name << ": " << value << "\n";
    }
    out << "\n";
  }
  if (report.cta_department_test) {
    const auto& test = *report.cta_department_test;
    out << "## Call-to-action disparity (Men vs Women departments)\n\n";
    out << "- men: " << test.x1 << "/" << test.n1 << " ("
        << detail::percent(test.p1) << ")\n";
    out << "- women: " << test.x2 << "/" << test.n2 << " ("
        << detail::percent(test.p2) << ")\n";
    char z_buffer[64];
    std::snprintf(z_buffer, sizeof z_buffer, "- Z=%.3f, p=%.4g\n", test.z,
                  test.p_value);
    out << z_buffer;
  }
  return out.str();
}

// CSV flattening of per-record findings.
inline std::string audit_report_to_csv(const AuditReport& report) {
  std::string out = detail::csv_row(
      {"record_id", "category", "needs_review", "phrases", "metrics", "note"});
  auto emit = [&out](const AuditFinding& finding) {
    std::string phrases;
    for (size_t i = 0; i < finding.matches.size(); ++i) {
      if (i) phrases += "; ";
      phrases += join_tokens(finding.matches[i].phrase);
    }
    std::string metrics;
    for (const auto& [key, value] : finding.metrics) {
      if (!metrics.empty()) metrics += "; ";
      std::ostringstream v;
      v << key << "=" << value;
      metrics += v.str();
    }
    out += detail::csv_row({finding.record_id, to_string(finding.category),
                            finding.needs_review ? "yes" : "no", phrases,
                            metrics, finding.note});
  };
  for (const auto& finding : report.findings) emit(finding);
  for (const auto& finding : report.needs_review) emit(finding);
  return out;
}

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json obj;
  obj["accuracy"] = report.accuracy;
  obj["held_out_size"] = report.held_out_size;
  obj["seed"] = report.seed;
  obj["confusion"] = report.confusion;
  nlohmann::json features = nlohmann::json::object();
  for (const auto& [label, ranked] : report.top_features) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& feature : ranked) {
      list.push_back({{"feature", feature.feature},
                      {"log_odds", feature.log_odds}});
    }
    features[label] = std::move(list);
  }
  obj["top_features"] = std::move(features);
  return obj;
}

// Canonical serialization: nlohmann::json keeps object keys sorted and
// prints doubles with shortest round-trip formatting, so identical inputs
// give identical bytes.
inline std::string canonical_json(const nlohmann::json& obj) {
  return obj.dump(2) + "\n";
}

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  out << text;
}

}  // namespace descaudit
