// descaudit: audits AI-generated product descriptions for gendered
// language patterns, runs counterfactual generation experiments, trains
// the gender classifier, and drives the staged flagging pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "descaudit/classifier.hpp"
#include "descaudit/corpus.hpp"
#include "descaudit/counterfactual.hpp"
#include "descaudit/detectors.hpp"
#include "descaudit/errors.hpp"
#include "descaudit/flagging.hpp"
#include "descaudit/http_clients.hpp"
#include "descaudit/lexicon.hpp"
#include "descaudit/report.hpp"
#include "descaudit/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitExternal = 3;

int exit_code_for(const descaudit::Error& error) {
  switch (error.code()) {
    case descaudit::ErrorCode::GeneratorError:
    case descaudit::ErrorCode::ClientError:
    case descaudit::ErrorCode::ScorerUnavailable:
      return kExitExternal;
    case descaudit::ErrorCode::Usage:
      return kExitUsage;
    default:
      return kExitInput;
  }
}

struct GlobalOptions {
  std::string config_path;
  std::string data_dir;
  std::string format = "json";
  std::string out;
  std::uint64_t seed = 0;
};

fs::path resolve_data_dir(const GlobalOptions& options, const json& config) {
  if (!options.data_dir.empty()) return options.data_dir;
  if (config.contains("data_dir")) return config["data_dir"].get<std::string>();
  if (const char* env = std::getenv("DESCAUDIT_DATA_DIR")) return env;
  return DESCAUDIT_DEFAULT_DATA_DIR;
}

json load_config(const GlobalOptions& options) {
  if (options.config_path.empty()) return json::object();
  std::ifstream in(options.config_path);
  if (!in) {
    throw descaudit::Error(descaudit::ErrorCode::IoError,
                           "cannot open config " + options.config_path);
  }
  json config = json::parse(in, nullptr, false);
  if (config.is_discarded() || !config.is_object()) {
    throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                           "config must be a JSON object");
  }
  return config;
}

descaudit::CorpusFormat corpus_format_for(const std::string& path,
                                          bool force_csv) {
  if (force_csv || path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
    return descaudit::CorpusFormat::Csv;
  }
  return descaudit::CorpusFormat::JsonLines;
}

void emit(const GlobalOptions& options, const std::string& text) {
  if (options.out.empty()) {
    std::cout << text;
  } else {
    descaudit::write_text(options.out, text);
  }
}

descaudit::DetectorConfig detector_config(const json& config) {
  if (config.contains("detectors")) {
    return descaudit::detector_config_from_json(config["detectors"]);
  }
  return descaudit::DetectorConfig();
}

descaudit::LexiconBundle load_lexicons(const descaudit::DetectorConfig& dconf,
                                       const fs::path& data_dir) {
  return descaudit::LexiconBundle::load(dconf.vocab, data_dir,
                                        dconf.exclusion_verbs);
}

json flag_records_to_json(const std::vector<descaudit::FlagRecord>& records) {
  json list = json::array();
  for (const auto& record : records) {
    json verdicts = json::object();
    for (const auto& [theme, verdict] : record.verdicts) {
      verdicts[descaudit::to_string(theme)] = descaudit::to_string(verdict);
    }
    list.push_back({{"record_id", record.record_id},
                    {"stage", descaudit::to_string(record.stage)},
                    {"flagged", record.flagged},
                    {"verdicts", std::move(verdicts)}});
  }
  return list;
}

std::vector<std::string> flagged_ids_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw descaudit::Error(descaudit::ErrorCode::IoError,
                           "cannot open flag file " + path.string());
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("records")) {
    throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                           "flag file must contain 'records'");
  }
  std::vector<std::string> ids;
  for (const auto& record : doc["records"]) {
    if (record.at("flagged").get<bool>()) {
      ids.push_back(record.at("record_id").get<std::string>());
    }
  }
  return ids;
}

std::vector<descaudit::FlagRecord> flag_records_from_file(
    const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw descaudit::Error(descaudit::ErrorCode::IoError,
                           "cannot open flag file " + path.string());
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("records")) {
    throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                           "flag file must contain 'records'");
  }
  std::vector<descaudit::FlagRecord> records;
  for (const auto& entry : doc["records"]) {
    descaudit::FlagRecord record;
    record.record_id = entry.at("record_id").get<std::string>();
    record.flagged = entry.at("flagged").get<bool>();
    records.push_back(std::move(record));
  }
  return records;
}

int cmd_ingest(const GlobalOptions& options, const std::string& corpus_path,
               bool force_csv) {
  descaudit::Corpus corpus = descaudit::load_corpus(
      corpus_path, corpus_format_for(corpus_path, force_csv));
  json summary;
  summary["records"] = corpus.records.size();
  json departments = json::object();
  for (const auto& record : corpus.records) {
    std::string key = descaudit::to_string(record.listing.department);
    departments[key] = departments.value(key, 0) + 1;
  }
  summary["departments"] = departments;
  emit(options, descaudit::canonical_json(summary));
  return kExitOk;
}

int cmd_audit(const GlobalOptions& options, const json& config,
              const std::string& corpus_path, bool force_csv) {
  const fs::path data_dir = resolve_data_dir(options, config);
  descaudit::DetectorConfig dconf = detector_config(config);
  descaudit::LexiconBundle lexicons = load_lexicons(dconf, data_dir);
  descaudit::Corpus corpus = descaudit::load_corpus(
      corpus_path, corpus_format_for(corpus_path, force_csv));
  descaudit::BiasDetectors detectors(std::move(lexicons), dconf);

  std::unique_ptr<descaudit::ToxicityScorer> scorer;
  if (dconf.enabled.count(descaudit::DetectorKind::Toxicity) &&
      config.contains("toxicity") && config["toxicity"].contains("endpoint")) {
    descaudit::HttpEndpoint endpoint;
    endpoint.url = config["toxicity"]["endpoint"].get<std::string>();
    endpoint.api_key_env =
        config["toxicity"].value("api_key_env", std::string());
    scorer = std::make_unique<descaudit::HttpToxicityScorer>(endpoint);
  }

  descaudit::AuditReport report =
      descaudit::audit_corpus(corpus, detectors, scorer.get());

  std::vector<std::string> inputs = {corpus_path};
  for (const auto& vocab : dconf.vocab.all(data_dir)) inputs.push_back(vocab);
  descaudit::RunManifest manifest =
      descaudit::make_manifest(config, inputs, options.seed);

  if (options.format == "markdown") {
    emit(options, descaudit::audit_report_to_markdown(report, manifest));
  } else if (options.format == "csv") {
    emit(options, descaudit::audit_report_to_csv(report));
  } else {
    emit(options, descaudit::canonical_json(
                      descaudit::audit_report_to_json(report, manifest)));
  }
  if (report.corpus_size == 0) {
    std::cerr << "warning: no records in corpus\n";
  }
  return kExitOk;
}

int cmd_pairs(const GlobalOptions& options, const json& config,
              const std::string& corpus_path, const std::string& pairs_path,
              std::size_t limit) {
  const fs::path data_dir = resolve_data_dir(options, config);
  descaudit::DetectorConfig dconf = detector_config(config);
  descaudit::LexiconBundle lexicons = load_lexicons(dconf, data_dir);

  std::vector<descaudit::CounterfactualPair> pairs;
  std::size_t skipped = 0;
  if (!pairs_path.empty()) {
    pairs = descaudit::load_pairs(pairs_path, lexicons.gender);
  } else {
    descaudit::Corpus corpus =
        descaudit::load_corpus(corpus_path, corpus_format_for(corpus_path, false));
    for (const auto& record : corpus.records) {
      if (limit > 0 && pairs.size() >= limit) break;
      try {
        pairs.push_back(descaudit::derive_pair(record.listing, lexicons.gender));
      } catch (const descaudit::Error&) {
        ++skipped;
      }
    }
  }

  json doc;
  json list = json::array();
  for (const auto& pair : pairs) list.push_back(descaudit::pair_to_json(pair));
  doc["pairs"] = std::move(list);
  emit(options, descaudit::canonical_json(doc));
  std::cerr << "pairs: " << pairs.size() << " built, " << skipped
            << " listings skipped (no unambiguous gendered field)\n";
  return kExitOk;
}

int cmd_generate(const GlobalOptions& options, const json& config,
                 const std::string& pairs_path, int n, bool stub,
                 const std::string& replay_dir, const std::string& endpoint_url,
                 int in_flight, const std::string& out_path) {
  const fs::path data_dir = resolve_data_dir(options, config);
  descaudit::DetectorConfig dconf = detector_config(config);
  descaudit::LexiconBundle lexicons = load_lexicons(dconf, data_dir);
  auto pairs = descaudit::load_pairs(pairs_path, lexicons.gender);

  std::unique_ptr<descaudit::TextGenerator> generator;
  if (stub) {
    generator = std::make_unique<descaudit::EchoGenerator>();
  } else if (!replay_dir.empty()) {
    generator = std::make_unique<descaudit::ReplayGenerator>(replay_dir);
  } else if (!endpoint_url.empty() ||
             (config.contains("generator") &&
              config["generator"].contains("endpoint"))) {
    descaudit::HttpEndpoint endpoint;
    endpoint.url = !endpoint_url.empty()
                       ? endpoint_url
                       : config["generator"]["endpoint"].get<std::string>();
    if (config.contains("generator")) {
      endpoint.api_key_env =
          config["generator"].value("api_key_env", std::string());
    }
    generator = std::make_unique<descaudit::HttpTextGenerator>(endpoint);
  } else {
    throw descaudit::Error(descaudit::ErrorCode::Usage,
                           "generate needs --stub, --replay or --endpoint");
  }

  descaudit::GenerationOptions gen_options;
  gen_options.samples_per_side = n;
  gen_options.in_flight = in_flight;
  gen_options.resume_path = fs::path(out_path);
  auto batches = descaudit::generate_batches(pairs, gen_options, *generator);

  std::size_t texts = 0;
  std::size_t partial = 0;
  for (const auto& batch : batches) {
    texts += batch.texts.size();
    partial += batch.partial ? 1 : 0;
  }
  json summary{{"pairs", pairs.size()},
               {"batches", batches.size()},
               {"texts", texts},
               {"partial_batches", partial},
               {"out", out_path}};
  std::cout << descaudit::canonical_json(summary);
  return kExitOk;
}

descaudit::LabeledDataset dataset_from_file(
    const fs::path& path, const descaudit::GenderLexicon& lexicon) {
  std::ifstream in(path);
  if (!in) {
    throw descaudit::Error(descaudit::ErrorCode::IoError,
                           "cannot open dataset " + path.string());
  }
  descaudit::LabeledDataset dataset;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.contains("label")) {
      throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                             "dataset line needs 'label'", line_no);
    }
    descaudit::LabeledDocument doc;
    doc.label = obj["label"].get<std::string>();
    if (obj.contains("tokens")) {
      doc.tokens = obj["tokens"].get<std::vector<std::string>>();
    } else if (obj.contains("text")) {
      doc.tokens = lexicon.mask(descaudit::normalize(obj["text"].get<std::string>()));
    } else {
      throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                             "dataset line needs 'tokens' or 'text'", line_no);
    }
    dataset.push_back(std::move(doc));
  }
  return dataset;
}

int cmd_classify(const GlobalOptions& options, const json& config,
                 const std::string& batches_path, const std::string& dataset_path,
                 double alpha, int min_count, double held_out, std::size_t top_k,
                 const std::string& model_out) {
  const fs::path data_dir = resolve_data_dir(options, config);
  descaudit::DetectorConfig dconf = detector_config(config);
  descaudit::LexiconBundle lexicons = load_lexicons(dconf, data_dir);

  descaudit::LabeledDataset dataset;
  if (!batches_path.empty()) {
    auto batches = descaudit::read_batches_jsonl(batches_path);
    dataset = descaudit::build_classifier_dataset(batches, lexicons.gender)
                  .documents;
  } else if (!dataset_path.empty()) {
    dataset = dataset_from_file(dataset_path, lexicons.gender);
  } else {
    throw descaudit::Error(descaudit::ErrorCode::Usage,
                           "classify needs --batches or --dataset");
  }

  descaudit::ClassifierConfig cconf;
  cconf.alpha = alpha;
  cconf.min_count = min_count;
  cconf.held_out_fraction = held_out;
  cconf.seed = options.seed;
  cconf.top_k = top_k;
  if (config.contains("classifier")) {
    const json& c = config["classifier"];
    cconf.alpha = c.value("alpha", cconf.alpha);
    cconf.min_count = c.value("min_count", cconf.min_count);
    cconf.held_out_fraction =
        c.value("held_out_fraction", cconf.held_out_fraction);
    cconf.top_k = c.value("top_k", cconf.top_k);
  }

  descaudit::Experiment experiment = descaudit::run_experiment(dataset, cconf);
  if (!model_out.empty()) {
    descaudit::write_text(model_out,
                          descaudit::canonical_json(
                              descaudit::model_to_json(experiment.model)));
  }
  emit(options, descaudit::canonical_json(
                    descaudit::eval_report_to_json(experiment.report)));
  return kExitOk;
}

int cmd_flag_import(const GlobalOptions& options,
                    const std::string& annotations_path) {
  auto records = descaudit::import_human_annotations(annotations_path);
  std::size_t flagged = 0;
  for (const auto& record : records) flagged += record.flagged ? 1 : 0;
  json doc{{"stage", "human"},
           {"records", flag_records_to_json(records)},
           {"total", records.size()},
           {"flagged", flagged}};
  emit(options, descaudit::canonical_json(doc));
  std::cerr << "human stage: " << records.size() << " rows, " << flagged
            << " flagged\n";
  return kExitOk;
}

int cmd_flag_llm(const GlobalOptions& options, const json& config,
                 const std::string& corpus_path, const std::string& flags_path,
                 const std::string& mock_path, bool strict, int in_flight) {
  const fs::path data_dir = resolve_data_dir(options, config);
  fs::path prompts_dir = data_dir / "prompts";
  if (config.contains("prompts_dir")) {
    prompts_dir = config["prompts_dir"].get<std::string>();
  }
  descaudit::PromptLibrary prompts(prompts_dir);

  descaudit::Corpus corpus = descaudit::load_corpus(
      corpus_path, corpus_format_for(corpus_path, false));
  std::vector<descaudit::DescribedRecord> subset;
  if (!flags_path.empty()) {
    auto ids = flagged_ids_from_file(flags_path);
    std::set<std::string> wanted(ids.begin(), ids.end());
    for (const auto& record : corpus.records) {
      if (wanted.count(record.listing.id)) subset.push_back(record);
    }
  } else {
    subset = corpus.records;
  }

  std::unique_ptr<descaudit::LLMClient> client;
  if (!mock_path.empty()) {
    std::ifstream in(mock_path);
    if (!in) {
      throw descaudit::Error(descaudit::ErrorCode::IoError,
                             "cannot open mock script " + mock_path);
    }
    json script_json = json::parse(in, nullptr, false);
    if (script_json.is_discarded() || !script_json.contains("yes")) {
      throw descaudit::Error(descaudit::ErrorCode::SchemaError,
                             "mock script must map titles under 'yes'");
    }
    descaudit::ScriptedLLMClient::Script script;
    for (const auto& [title, themes] : script_json["yes"].items()) {
      for (const auto& theme_name : themes) {
        for (descaudit::FlagTheme theme : descaudit::all_flag_themes()) {
          if (theme_name.get<std::string>() == descaudit::to_string(theme)) {
            script[title].insert(theme);
          }
        }
      }
    }
    client = std::make_unique<descaudit::ScriptedLLMClient>(std::move(script));
  } else if (config.contains("llm") && config["llm"].contains("endpoint")) {
    descaudit::HttpEndpoint endpoint;
    endpoint.url = config["llm"]["endpoint"].get<std::string>();
    endpoint.api_key_env = config["llm"].value("api_key_env", std::string());
    std::optional<fs::path> log_path;
    if (config["llm"].contains("log")) {
      log_path = config["llm"]["log"].get<std::string>();
    }
    client = std::make_unique<descaudit::HttpLLMClient>(
        endpoint, config["llm"].value("model", "gpt-4o"), log_path);
  } else {
    throw descaudit::Error(descaudit::ErrorCode::Usage,
                           "flag llm needs --mock or an llm.endpoint config");
  }

  descaudit::LlmStageOptions stage_options;
  stage_options.strict = strict;
  stage_options.in_flight = in_flight;
  if (config.contains("llm")) {
    stage_options.rate_per_second =
        config["llm"].value("rate_per_second", 0.0);
  }
  descaudit::LlmStageResult result =
      descaudit::run_llm_stage(subset, prompts, *client, stage_options);

  std::size_t flagged = 0;
  for (const auto& record : result.records) flagged += record.flagged ? 1 : 0;
  json issues = json::array();
  for (const auto& issue : result.issues) {
    issues.push_back({{"record_id", issue.record_id},
                      {"theme", descaudit::to_string(issue.theme)},
                      {"message", issue.message}});
  }
  json doc{{"stage", "llm"},
           {"records", flag_records_to_json(result.records)},
           {"total", result.records.size()},
           {"flagged", flagged},
           {"client_calls", result.client_calls},
           {"unparseable", result.unparseable},
           {"issues", std::move(issues)}};
  emit(options, descaudit::canonical_json(doc));
  std::cerr << "llm stage: " << subset.size() << " records, "
            << result.client_calls << " calls, " << flagged << " flagged\n";
  return kExitOk;
}

int cmd_flag_sample(const GlobalOptions& options, const std::string& corpus_path,
                    const std::string& flags_path, std::size_t k,
                    std::size_t reviewers, const std::string& out_dir) {
  descaudit::Corpus corpus = descaudit::load_corpus(
      corpus_path, corpus_format_for(corpus_path, false));
  auto flag_records = flag_records_from_file(flags_path);
  std::vector<descaudit::FlagRecord> flagged;
  for (const auto& record : flag_records) {
    if (record.flagged) flagged.push_back(record);
  }
  auto bundles =
      descaudit::sample_for_review(flagged, k, reviewers, options.seed);
  fs::create_directories(out_dir);
  json summary;
  json sizes = json::array();
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    std::string sheet = descaudit::review_sheet_csv(bundles[b], corpus);
    fs::path path = fs::path(out_dir) /
                    ("review_bundle_" + std::to_string(b + 1) + ".csv");
    descaudit::write_text(path, sheet);
    sizes.push_back(bundles[b].record_ids.size());
  }
  summary["bundles"] = sizes;
  summary["sampled"] = k;
  summary["out_dir"] = out_dir;
  std::cout << descaudit::canonical_json(summary);
  return kExitOk;
}

int cmd_stats_ci(const GlobalOptions& options, std::uint64_t x,
                 std::uint64_t n, double level) {
  descaudit::ProportionEstimate est = descaudit::proportion_ci(x, n, level);
  emit(options,
       descaudit::canonical_json(descaudit::proportion_to_json(est)));
  return kExitOk;
}

int cmd_stats_ztest(const GlobalOptions& options, std::uint64_t x1,
                    std::uint64_t n1, std::uint64_t x2, std::uint64_t n2) {
  descaudit::TwoProportionTest test =
      descaudit::two_proportion_z(x1, n1, x2, n2);
  emit(options, descaudit::canonical_json(descaudit::ztest_to_json(test)));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audits AI-generated product descriptions for gendered "
               "language patterns"};
  app.require_subcommand(1);

  GlobalOptions options;
  app.add_option("--config", options.config_path, "JSON config file");
  app.add_option("--seed", options.seed, "seed for sampling and splits");
  app.add_option("--format", options.format, "output format")
      ->check(CLI::IsMember({"json", "markdown", "csv"}));
  app.add_option("--out", options.out, "output file (default: stdout)");
  app.add_option("--data-dir", options.data_dir,
                 "directory with vocab/ and prompts/");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a corpus file");
  std::string ingest_path;
  bool ingest_csv = false;
  ingest->add_option("corpus", ingest_path, "corpus file")->required();
  ingest->add_flag("--csv", ingest_csv, "force CSV parsing");

  // audit
  auto* audit = app.add_subcommand("audit", "run detectors and statistics");
  std::string audit_path;
  bool audit_csv = false;
  audit->add_option("corpus", audit_path, "corpus file")->required();
  audit->add_flag("--csv", audit_csv, "force CSV parsing");

  // pairs
  auto* pairs = app.add_subcommand("pairs", "build counterfactual pairs");
  std::string pairs_corpus, pairs_file;
  std::size_t pairs_limit = 0;
  pairs->add_option("--in", pairs_corpus, "corpus to derive pairs from");
  pairs->add_option("--pairs", pairs_file, "existing pair file to validate");
  pairs->add_option("--limit", pairs_limit, "maximum number of pairs");

  // generate
  auto* generate = app.add_subcommand("generate",
                                      "run generation batches for pairs");
  std::string gen_pairs, gen_out, gen_replay, gen_endpoint;
  int gen_n = 1;
  int gen_in_flight = 1;
  bool gen_stub = false;
  generate->add_option("--pairs", gen_pairs, "pair file")->required();
  generate->add_option("--n", gen_n, "samples per side")->required();
  generate->add_option("--out", gen_out, "batch JSONL sink (resume-safe)")
      ->required();
  generate->add_flag("--stub", gen_stub, "use the deterministic stub");
  generate->add_option("--replay", gen_replay, "replay directory");
  generate->add_option("--endpoint", gen_endpoint, "generator endpoint URL");
  generate->add_option("--in-flight", gen_in_flight, "max concurrent requests");

  // classify
  auto* classify = app.add_subcommand("classify",
                                      "train and evaluate the gender classifier");
  std::string cls_batches, cls_dataset, cls_model_out;
  double cls_alpha = 1.0, cls_held_out = 0.2;
  int cls_min_count = 2;
  std::size_t cls_top_k = 15;
  classify->add_option("--batches", cls_batches, "generation batch JSONL");
  classify->add_option("--dataset", cls_dataset, "labeled dataset JSONL");
  classify->add_option("--alpha", cls_alpha, "additive smoothing");
  classify->add_option("--min-count", cls_min_count, "feature count floor");
  classify->add_option("--held-out", cls_held_out, "held-out fraction");
  classify->add_option("--top-k", cls_top_k, "features to report per class");
  classify->add_option("--model-out", cls_model_out, "model artifact path");

  // flag
  auto* flag = app.add_subcommand("flag", "staged flagging pipeline");
  flag->require_subcommand(1);
  auto* flag_import = flag->add_subcommand("import",
                                           "import human annotations");
  std::string import_annotations;
  flag_import->add_option("--annotations", import_annotations,
                          "annotation CSV")->required();
  auto* flag_llm = flag->add_subcommand("llm", "run the automated stage");
  std::string llm_corpus, llm_flags, llm_mock;
  bool llm_strict = false;
  int llm_in_flight = 1;
  flag_llm->add_option("--corpus", llm_corpus, "corpus file")->required();
  flag_llm->add_option("--flags", llm_flags,
                       "previous stage output; only flagged ids are queried");
  flag_llm->add_option("--mock", llm_mock, "scripted client JSON");
  flag_llm->add_flag("--strict", llm_strict,
                     "treat unparseable answers as not flagged");
  flag_llm->add_option("--in-flight", llm_in_flight, "max concurrent calls");
  auto* flag_sample = flag->add_subcommand("sample",
                                           "sample flagged records for review");
  std::string sample_corpus, sample_flags, sample_out_dir = ".";
  std::size_t sample_k = 0, sample_reviewers = 1;
  flag_sample->add_option("--corpus", sample_corpus, "corpus file")->required();
  flag_sample->add_option("--flags", sample_flags, "flag stage output")
      ->required();
  flag_sample->add_option("--k", sample_k, "sample size")->required();
  flag_sample->add_option("--reviewers", sample_reviewers, "bundle count");
  flag_sample->add_option("--out-dir", sample_out_dir, "bundle directory");

  // stats
  auto* stats = app.add_subcommand("stats", "standalone statistics");
  stats->require_subcommand(1);
  auto* stats_ci = stats->add_subcommand("ci", "proportion confidence interval");
  std::uint64_t ci_x = 0, ci_n = 0;
  double ci_level = 0.95;
  stats_ci->add_option("x", ci_x, "successes")->required();
  stats_ci->add_option("n", ci_n, "trials")->required();
  stats_ci->add_option("--level", ci_level, "confidence level");
  auto* stats_ztest = stats->add_subcommand("ztest",
                                            "pooled two-proportion z-test");
  std::uint64_t zt_x1 = 0, zt_n1 = 0, zt_x2 = 0, zt_n2 = 0;
  stats_ztest->add_option("x1", zt_x1, "successes, sample 1")->required();
  stats_ztest->add_option("n1", zt_n1, "trials, sample 1")->required();
  stats_ztest->add_option("x2", zt_x2, "successes, sample 2")->required();
  stats_ztest->add_option("n2", zt_n2, "trials, sample 2")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    json config = load_config(options);
    if (ingest->parsed()) return cmd_ingest(options, ingest_path, ingest_csv);
    if (audit->parsed()) return cmd_audit(options, config, audit_path, audit_csv);
    if (pairs->parsed()) {
      if (pairs_corpus.empty() && pairs_file.empty()) {
        throw descaudit::Error(descaudit::ErrorCode::Usage,
                               "pairs needs --in or --pairs");
      }
      return cmd_pairs(options, config, pairs_corpus, pairs_file, pairs_limit);
    }
    if (generate->parsed()) {
      return cmd_generate(options, config, gen_pairs, gen_n, gen_stub,
                          gen_replay, gen_endpoint, gen_in_flight, gen_out);
    }
    if (classify->parsed()) {
      return cmd_classify(options, config, cls_batches, cls_dataset, cls_alpha,
                          cls_min_count, cls_held_out, cls_top_k, cls_model_out);
    }
    if (flag->parsed()) {
      if (flag_import->parsed()) {
        return cmd_flag_import(options, import_annotations);
      }
      if (flag_llm->parsed()) {
        return cmd_flag_llm(options, config, llm_corpus, llm_flags, llm_mock,
                            llm_strict, llm_in_flight);
      }
      if (flag_sample->parsed()) {
        return cmd_flag_sample(options, sample_corpus, sample_flags, sample_k,
                               sample_reviewers, sample_out_dir);
      }
    }
    if (stats->parsed()) {
      if (stats_ci->parsed()) return cmd_stats_ci(options, ci_x, ci_n, ci_level);
      if (stats_ztest->parsed()) {
        return cmd_stats_ztest(options, zt_x1, zt_n1, zt_x2, zt_n2);
      }
    }
  } catch (const descaudit::Error& e) {
    std::cerr << "descaudit: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "descaudit: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}
