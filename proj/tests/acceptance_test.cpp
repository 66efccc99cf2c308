// Acceptance suite: one test per criterion, each printing a pass/fail
// line with its measured values.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "descaudit/classifier.hpp"
#include "descaudit/corpus.hpp"
#include "descaudit/counterfactual.hpp"
#include "descaudit/detectors.hpp"
#include "descaudit/flagging.hpp"
#include "descaudit/report.hpp"
#include "descaudit/stats.hpp"
#include "testutil.hpp"

using namespace descaudit;
using nlohmann::json;

namespace {

struct CriterionBanner {
  explicit CriterionBanner(std::string name) : name_(std::move(name)) {
    start_ = std::chrono::steady_clock::now();
  }
  ~CriterionBanner() {
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start_);
    bool failed = ::testing::Test::HasFailure();
    std::printf("[%s] %s (%.2fs)\n", failed ? "FAIL" : "PASS", name_.c_str(),
                elapsed.count() / 1000.0);
    std::fflush(stdout);
  }
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

LexiconBundle load_bundle() {
  DetectorConfig config;
  return LexiconBundle::load(config.vocab, testutil::data_dir(),
                             config.exclusion_verbs);
}

double round1_percent(double fraction) {
  return std::round(fraction * 1000.0) / 10.0;
}

DescribedRecord clothing_record(const std::string& id,
                                const std::string& description) {
  DescribedRecord record;
  record.listing = parse_input_block(
      "Title: Carrier Garment\nCategories: Clothing, Shoes & "
      "Accessories:Women:Tops\nDepartment: Women",
      id);
  record.description = description;
  return record;
}

DescribedRecord neutral_record(const std::string& id,
                               const std::string& description) {
  DescribedRecord record;
  record.listing =
      parse_input_block("Title: Carrier Object\nCategories: Collectibles", id);
  record.description = description;
  return record;
}

}  // namespace

TEST(Acceptance, Criterion1CiReproduction) {
  CriterionBanner banner(
      "criterion 1: proportion_ci reproduces the four published intervals");
  struct Case {
    std::uint64_t x, n;
    double rate, low, high;
  };
  const Case cases[] = {
      {313, 2183, 14.3, 12.9, 15.8},
      {266, 1874, 14.2, 12.6, 15.8},
      {283, 2649, 10.7, 9.5, 11.9},
      {211, 2250, 9.4, 8.2, 10.6},
  };
  for (const auto& c : cases) {
    ProportionEstimate est = proportion_ci(c.x, c.n);
    EXPECT_EQ(round1_percent(est.p_hat), c.rate) << c.x << "/" << c.n;
    EXPECT_EQ(round1_percent(est.ci_low), c.low) << c.x << "/" << c.n;
    EXPECT_EQ(round1_percent(est.ci_high), c.high) << c.x << "/" << c.n;
  }
}

TEST(Acceptance, Criterion2ZToPReproduction) {
  CriterionBanner banner("criterion 2: z to two-sided p mapping");
  EXPECT_NEAR(2.0 * normal_sf(2.250), 0.024, 0.0005);
  EXPECT_LT(2.0 * normal_sf(4.632), 0.0001);
}

TEST(Acceptance, Criterion3ZTestOracle) {
  CriterionBanner banner(
      "criterion 3: pooled z agrees with the reference route on 1,000 cases");
  std::mt19937_64 rng(101);
  int checked = 0;
  while (checked < 1000) {
    std::uint64_t n1 = 2 + rng() % 10000;
    std::uint64_t n2 = 2 + rng() % 10000;
    std::uint64_t x1 = rng() % (n1 + 1);
    std::uint64_t x2 = rng() % (n2 + 1);
    if (x1 + x2 == 0 || x1 + x2 == n1 + n2) continue;
    double expected = testutil::reference_pooled_z(x1, n1, x2, n2);
    TwoProportionTest forward = two_proportion_z(x1, n1, x2, n2);
    ASSERT_NEAR(forward.z, expected, 1e-9);
    TwoProportionTest backward = two_proportion_z(x2, n2, x1, n1);
    ASSERT_EQ(forward.z, -backward.z);  // antisymmetry, exact
    ++checked;
  }
  TwoProportionTest symmetric = two_proportion_z(37, 500, 37, 500);
  EXPECT_EQ(symmetric.z, 0.0);
  EXPECT_EQ(symmetric.p_value, 1.0);
}

TEST(Acceptance, Criterion4VocabularyRoundTrip) {
  CriterionBanner banner(
      "criterion 4: vocabulary round-trip and clean-corpus false positives");
  LexiconBundle bundle = load_bundle();
  DetectorConfig config;
  BiasDetectors detectors(bundle, config);

  size_t phrases_checked = 0;
  auto expect_single_hit = [&](const std::optional<AuditFinding>& finding,
                               const TokenSequence& phrase) {
    ASSERT_TRUE(finding.has_value()) << join_tokens(phrase);
    size_t exact = 0;
    for (const auto& match : finding->matches) {
      if (match.phrase == phrase) ++exact;
    }
    EXPECT_EQ(exact, 1u) << join_tokens(phrase);
    ++phrases_checked;
  };

  for (const auto& phrase : bundle.body_size.phrases()) {
    auto record = clothing_record("c", "xx " + join_tokens(phrase) + " yy");
    expect_single_hit(detectors.detect_body_size(record), phrase);
  }
  for (const auto& phrase : bundle.explicit_exclusion.phrases()) {
    auto record = clothing_record("c", "xx " + join_tokens(phrase) + " yy");
    expect_single_hit(detectors.detect_target_group_exclusion(record), phrase);
  }
  for (const auto& phrase : bundle.nonbinary.phrases()) {
    auto record = neutral_record("c", "xx " + join_tokens(phrase) + " yy");
    expect_single_hit(detectors.detect_nonbinary_exclusion(record), phrase);
  }
  for (const auto& phrase : bundle.call_to_action.phrases()) {
    auto record = neutral_record("c", "xx " + join_tokens(phrase) + " yy");
    expect_single_hit(detectors.detect_call_to_action(record), phrase);
  }
  for (const auto& list :
       {bundle.gender.feminine_terms(), bundle.gender.masculine_terms()}) {
    for (const auto& term : list) {
      auto record = neutral_record("c", "xx " + term + " yy");
      auto finding = detectors.detect_target_group_assumption(record);
      ASSERT_TRUE(finding.has_value()) << term;
      EXPECT_EQ(finding->metrics.at("gender_mention_count"), 1.0) << term;
      ++phrases_checked;
    }
  }
  EXPECT_EQ(phrases_checked, 43u + 64u + 28u + 13u + 32u);

  // 1,000 clean sentences: zero hits across every lexicon detector
  const std::vector<std::string> safe = {
      "oak",     "ceramic", "vase",    "lamp",   "sturdy",  "vintage",
      "blue",    "cotton",  "fabric",  "durable", "stitched", "pocket",
      "zipper",  "lining",  "classic", "pattern", "crafted", "quality",
      "premium", "finish",  "wooden",  "handle",  "bright",  "compact",
      "portable", "device", "battery", "includes", "original", "box",
      "collector", "edition", "rare",  "piece",   "excellent", "gently",
      "used",    "across",  "surface", "with",    "a",        "the",
      "in",      "of",      "soft",    "warm",    "texture",  "weave"};
  std::mt19937_64 rng(55);
  Corpus clean;
  for (int i = 0; i < 1000; ++i) {
    std::string sentence;
    int words = 6 + static_cast<int>(rng() % 10);
    for (int w = 0; w < words; ++w) {
      sentence += (w ? " " : "") + safe[rng() % safe.size()];
    }
    sentence += ".";
    std::string id = "clean-" + std::to_string(i);
    clean.records.push_back(i % 2 == 0 ? clothing_record(id, sentence)
                                       : neutral_record(id, sentence));
  }
  AuditReport report = audit_corpus(clean, detectors);
  EXPECT_TRUE(report.findings.empty());
  EXPECT_TRUE(report.needs_review.empty());
}

TEST(Acceptance, Criterion5PaperQuoteFixtures) {
  CriterionBanner banner("criterion 5: quoted descriptions produce the "
                         "specified findings");
  LexiconBundle bundle = load_bundle();
  DetectorConfig config;
  BiasDetectors detectors(bundle, config);
  Corpus corpus = load_corpus(
      (testutil::fixture_dir() / "corpus.jsonl").string(),
      CorpusFormat::JsonLines);
  auto record = [&](const std::string& id) -> const DescribedRecord& {
    for (const auto& r : corpus.records) {
      if (r.listing.id == id) return r;
    }
    throw std::runtime_error("missing fixture " + id);
  };

  // "comfortable fit for all shapes and sizes": exactly the "all shapes"
  // phrase, matched inside a clothing record
  auto jacket = detectors.detect_body_size(record("jacket-007"));
  ASSERT_TRUE(jacket.has_value());
  ASSERT_EQ(jacket->matches.size(), 1u);
  EXPECT_EQ(join_tokens(jacket->matches[0].phrase), "all shapes");

  // "ideal for regular-sized women" matches through hyphen normalization
  auto sized = detectors.detect_body_size(
      clothing_record("tmp", "A flowing cut, ideal for regular-sized women."));
  ASSERT_TRUE(sized.has_value());
  EXPECT_EQ(join_tokens(sized->matches[0].phrase), "regular sized women");

  // track pants: four gender mentions and the "get these" call to action
  const auto& pants = record("trackpants-003");
  EXPECT_EQ(bundle.gender.count(normalize(pants.description)).total, 4u);
  auto cta = detectors.detect_call_to_action(pants);
  ASSERT_TRUE(cta.has_value());
  EXPECT_EQ(join_tokens(cta->matches[0].phrase), "get these");

  // baby bottle: target-group assumption on a gender-neutral input
  auto bottle = detectors.detect_target_group_assumption(record("babybottle-004"));
  ASSERT_TRUE(bottle.has_value());
  EXPECT_FALSE(bottle->needs_review);

  // toy car: nonbinary-exclusive "boys and girls"
  auto matchbox = detectors.detect_nonbinary_exclusion(record("matchbox-005"));
  ASSERT_TRUE(matchbox.has_value());
  EXPECT_EQ(join_tokens(matchbox->matches[0].phrase), "boys and girls");
}

TEST(Acceptance, Criterion6ClassifierPlantedSignal) {
  CriterionBanner banner(
      "criterion 6: planted-signal classifier accuracy and top features");
  testutil::PlantedCorpus planted = testutil::make_planted_corpus(500, 424242);
  ASSERT_EQ(planted.documents.size(), 1000u);

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ClassifierConfig config;
    config.seed = seed;
    config.top_k = 15;
    Experiment experiment = run_experiment(planted.documents, config);
    EXPECT_GE(experiment.report.accuracy, 0.95) << "seed " << seed;
    EXPECT_EQ(experiment.report.held_out_size, 200u);

    auto count_planted = [&](const std::string& label,
                             const std::vector<std::string>& bigrams) {
      std::set<std::string> top;
      for (const auto& feature : experiment.report.top_features.at(label)) {
        top.insert(feature.feature);
      }
      int found = 0;
      for (const auto& bigram : bigrams) found += top.count(bigram) ? 1 : 0;
      return found;
    };
    EXPECT_GE(count_planted(planted.label_a, planted.class_a_bigrams), 8)
        << "seed " << seed;
    EXPECT_GE(count_planted(planted.label_b, planted.class_b_bigrams), 8)
        << "seed " << seed;
  }

  // label-shuffled control: signal destroyed
  LabeledDataset shuffled = planted.documents;
  std::vector<std::string> labels;
  labels.reserve(shuffled.size());
  for (const auto& doc : shuffled) labels.push_back(doc.label);
  std::mt19937_64 rng(1);
  for (size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[rng() % i]);
  }
  for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i].label = labels[i];
  ClassifierConfig control;
  control.seed = 1;
  Experiment experiment = run_experiment(shuffled, control);
  EXPECT_GE(experiment.report.accuracy, 0.4);
  EXPECT_LE(experiment.report.accuracy, 0.6);
}

TEST(Acceptance, Criterion7MaskingAndSwapProperties) {
  CriterionBanner banner("criterion 7: masking and swap properties on "
                         "fuzzed inputs");
  LexiconBundle bundle = load_bundle();
  const GenderLexicon& lexicon = bundle.gender;

  std::vector<std::string> pieces = {
      "mom",    "Dads",   "GUYS",   "boy's",  "ladies", "denim", "tote",
      "girl",   "women",  "dude",   "it's",   "don't",  "34\"",  "on-the-go",
      "Grandma", "hem",   "zip",    "<GEN>",  "sisters", "gal"};
  std::mt19937_64 rng(202);
  for (int round = 0; round < 10000; ++round) {
    std::string text;
    int words = static_cast<int>(rng() % 18);
    for (int w = 0; w < words; ++w) {
      text += (w ? " " : "") + pieces[rng() % pieces.size()];
    }
    TokenSequence tokens = normalize(text);
    TokenSequence masked = lexicon.mask(tokens);
    ASSERT_EQ(lexicon.count(masked).total, 0u) << text;
    ASSERT_EQ(lexicon.mask(masked), masked) << text;
    ASSERT_EQ(masked.size(), tokens.size());
  }

  std::vector<std::string> neutral_words = {"classic", "canvas", "jacket",
                                            "vintage", "cotton", "belt",
                                            "leather", "scarf"};
  std::vector<std::string> adult_words = {"men",  "women", "ladies", "guys",
                                          "mom",  "dads",  "gal",    "dudes"};
  int swapped_count = 0;
  while (swapped_count < 1000) {
    std::string title;
    int words = 2 + static_cast<int>(rng() % 5);
    for (int w = 0; w < words; ++w) {
      std::string word = (rng() % 3 == 0)
                             ? adult_words[rng() % adult_words.size()]
                             : neutral_words[rng() % neutral_words.size()];
      if (rng() % 4 == 0) {
        word[0] = static_cast<char>(std::toupper(word[0]));
      } else if (rng() % 7 == 0) {
        for (auto& c : word) c = static_cast<char>(std::toupper(c));
      }
      if (rng() % 6 == 0) word += "'s";
      title += (w ? " " : "") + word;
    }
    std::string block = "Title: " + title + "\nColor: Blue";
    if (rng() % 2) {
      block += std::string("\nDepartment: ") + (rng() % 2 ? "Men" : "Women");
    }
    ProductListing listing = parse_input_block(block, "fuzz");

    ProductListing swapped;
    try {
      swapped = swap_gender(listing, SwapAxis::MenWomen, lexicon);
    } catch (const Error&) {
      continue;  // no adult-axis evidence in this draw
    }
    ++swapped_count;
    ASSERT_EQ(swap_gender(swapped, SwapAxis::MenWomen, lexicon), listing)
        << title;
    // the diff touches gendered fields only
    ASSERT_EQ(lexicon.mask(normalize(listing.title)),
              lexicon.mask(normalize(swapped.title)))
        << title;
    ASSERT_EQ(listing.condition, swapped.condition);
    ASSERT_EQ(listing.category_path.size(), swapped.category_path.size());
    ASSERT_EQ(listing.aspects.size(), swapped.aspects.size());
    for (size_t i = 0; i < listing.aspects.size(); ++i) {
      ASSERT_EQ(listing.aspects[i].name, swapped.aspects[i].name);
      if (detail::lower(listing.aspects[i].name) != "department") {
        ASSERT_EQ(listing.aspects[i].value, swapped.aspects[i].value);
      }
    }
  }
}

TEST(Acceptance, Criterion8FunnelReplicationAtMockScale) {
  CriterionBanner banner(
      "criterion 8: 10,000 -> 7,527 -> 120 funnel and prompt goldens");
  auto dir = testutil::temp_dir("funnel");

  // synthetic corpus; titles carry the record id for the scripted client
  Corpus corpus;
  std::string annotations =
      "id,group_assoc,toxicity,stereotyping,exclusionary,other\n";
  char id_buffer[16];
  for (int i = 0; i < 10000; ++i) {
    std::snprintf(id_buffer, sizeof id_buffer, "rec-%05d", i);
    DescribedRecord record;
    record.listing = parse_input_block("Title: " + std::string(id_buffer),
                                       id_buffer);
    record.description = "A plain, well made item.";
    corpus.records.push_back(std::move(record));
    annotations += std::string(id_buffer) +
                   (i < 7527 ? ",no,no,no,yes,no\n" : ",no,no,no,no,no\n");
  }
  testutil::write_file(dir / "annotations.csv", annotations);

  auto human = import_human_annotations(dir / "annotations.csv");
  ASSERT_EQ(human.size(), 10000u);
  std::vector<DescribedRecord> flagged_subset;
  for (size_t i = 0; i < human.size(); ++i) {
    if (human[i].flagged) flagged_subset.push_back(corpus.records[i]);
  }
  EXPECT_EQ(flagged_subset.size(), 7527u);

  ScriptedLLMClient::Script script;
  for (int i = 0; i < 120; ++i) {
    std::snprintf(id_buffer, sizeof id_buffer, "rec-%05d", i);
    script[id_buffer] = {FlagTheme::StereotypingObjectification};
  }
  ScriptedLLMClient client(std::move(script));
  PromptLibrary prompts(testutil::data_dir() / "prompts");
  LlmStageResult llm = run_llm_stage(flagged_subset, prompts, client);
  EXPECT_EQ(llm.client_calls, 7527u * 5u);

  std::vector<FlagRecord> llm_flagged;
  for (const auto& record : llm.records) {
    if (record.flagged) llm_flagged.push_back(record);
  }
  EXPECT_EQ(llm_flagged.size(), 120u);

  auto bundles = sample_for_review(llm_flagged, 120, 4, 17);
  ASSERT_EQ(bundles.size(), 4u);
  for (const auto& bundle : bundles) {
    EXPECT_EQ(bundle.record_ids.size(), 30u);
  }

  // rendered prompts are byte-identical to the goldens
  DescribedRecord golden_record;
  golden_record.listing = parse_input_block(
      "Title: Philips Avent Glass Natural Baby Bottle, 8oz, 3pk\n"
      "Categories: Baby: Feeding: Bottle Feeding: Baby Bottles",
      "bottle-1");
  golden_record.description =
      "Introducing the Philips Avent Glass Natural Baby Bottle, a perfect "
      "addition to your baby feeding collection. Made with high-quality "
      "glass, this bottle is durable and easy to clean, making it a "
      "practical choice for everyday use. Ideal for use at home or "
      "on-the-go, the Philips Avent Glass Natural Baby Bottle is a "
      "must-have for any mom.";
  for (FlagTheme theme : all_flag_themes()) {
    std::string expected = testutil::read_file(
        testutil::golden_dir() /
        ("prompt_" + std::string(to_string(theme)) + ".txt"));
    ASSERT_FALSE(expected.empty()) << to_string(theme);
    EXPECT_EQ(prompts.render(theme, golden_record), expected)
        << to_string(theme);
  }
}

TEST(Acceptance, Criterion9Determinism) {
  CriterionBanner banner(
      "criterion 9: byte-identical audits and permutation invariance");
  std::string corpus_path = (testutil::fixture_dir() / "corpus.jsonl").string();
  std::string command = "SOURCE_DATE_EPOCH=1700000000 " + testutil::cli_path() +
                        " audit " + corpus_path;
  auto first = testutil::run_command(command);
  auto second = testutil::run_command(command);
  ASSERT_EQ(first.exit_code, 0) << first.output;
  ASSERT_EQ(second.exit_code, 0);
  EXPECT_EQ(first.output, second.output);

  LexiconBundle bundle = load_bundle();
  DetectorConfig config;
  BiasDetectors detectors(bundle, config);
  Corpus corpus = load_corpus(corpus_path, CorpusFormat::JsonLines);
  AuditReport base = audit_corpus(corpus, detectors);
  std::mt19937_64 rng(7);
  for (int round = 0; round < 3; ++round) {
    for (size_t i = corpus.records.size(); i > 1; --i) {
      std::swap(corpus.records[i - 1], corpus.records[rng() % i]);
    }
    AuditReport permuted = audit_corpus(corpus, detectors);
    RunManifest manifest;  // fixed
    EXPECT_EQ(canonical_json(audit_report_to_json(permuted, manifest)),
              canonical_json(audit_report_to_json(base, manifest)));
  }
}

TEST(Acceptance, Criterion10CounterfactualArithmetic) {
  CriterionBanner banner(
      "criterion 10: 50 pairs x 500 samples -> 25,000 per label");
  auto dir = testutil::temp_dir("counterfactual_scale");

  std::string corpus;
  for (int i = 0; i < 50; ++i) {
    json listing{{"title", "Men's Jacket " + std::to_string(i)},
                 {"categories", {"Clothing", "Men"}},
                 {"aspects", json::array({{{"name", "Department"},
                                           {"value", "Men"}}})}};
    json record{{"id", "pair-" + std::to_string(i)},
                {"description", "A warm, durable jacket."},
                {"listing", listing}};
    corpus += record.dump() + "\n";
  }
  testutil::write_file(dir / "corpus.jsonl", corpus);

  auto pairs_run = testutil::run_cli(
      "--out " + (dir / "pairs.json").string() + " pairs --in " +
      (dir / "corpus.jsonl").string());
  ASSERT_EQ(pairs_run.exit_code, 0) << pairs_run.output;
  json pairs_doc = json::parse(testutil::read_file(dir / "pairs.json"));
  ASSERT_EQ(pairs_doc["pairs"].size(), 50u);

  auto generate_run = testutil::run_cli(
      "generate --pairs " + (dir / "pairs.json").string() +
      " --n 500 --stub --out " + (dir / "batches.jsonl").string());
  ASSERT_EQ(generate_run.exit_code, 0) << generate_run.output;
  json summary = json::parse(generate_run.output);
  EXPECT_EQ(summary["texts"], 50000);
  EXPECT_EQ(summary["batches"], 100);
  EXPECT_EQ(summary["partial_batches"], 0);

  auto batches = read_batches_jsonl(dir / "batches.jsonl");
  std::uint64_t per_side[2] = {0, 0};
  for (const auto& batch : batches) {
    per_side[batch.side == PairSide::Base ? 0 : 1] += batch.texts.size();
  }
  EXPECT_EQ(per_side[0], 25000u);
  EXPECT_EQ(per_side[1], 25000u);

  LexiconBundle bundle = load_bundle();
  DatasetBundle dataset = build_classifier_dataset(batches, bundle.gender);
  EXPECT_EQ(dataset.documents.size(), 50000u);
  EXPECT_EQ(dataset.label_counts.at("base"), 25000u);
  EXPECT_EQ(dataset.label_counts.at("swapped"), 25000u);
}
