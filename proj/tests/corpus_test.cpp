#include "descaudit/corpus.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "testutil.hpp"

using namespace descaudit;

namespace {

const char* kNecklaceBlock =
    "Title: Silver Tone PEACOCK Necklace Pendant Long Chain 34\"\n"
    "Categories: Jewelry & Watches:Fashion Jewelry:Necklaces & Pendants\n"
    "Shape: Bird\n"
    "Type: Necklace\n"
    "Color: Silver\n"
    "Style: Pendant\n"
    "Necklace Length: 34 in\n"
    "Condition: Pre-owned";

const char* kBicycleBlock =
    "Title: Black Specialized Diverge E5 Bicycle size L\n"
    "Categories: Sporting Goods: Cycling: Bicycles\n"
    "Condition: New\n"
    "Brand: Specialized\n"
    "Department: Men";

}  // namespace

TEST(ParseInputBlock, NecklaceRecord) {
  ProductListing listing = parse_input_block(kNecklaceBlock, "n1");
  EXPECT_EQ(listing.title,
            "Silver Tone PEACOCK Necklace Pendant Long Chain 34\"");
  EXPECT_EQ(listing.category_path,
            (std::vector<std::string>{"Jewelry & Watches", "Fashion Jewelry",
                                      "Necklaces & Pendants"}));
  EXPECT_EQ(listing.aspects.size(), 5u);
  EXPECT_EQ(listing.aspects[0].name, "Shape");
  EXPECT_EQ(listing.aspects[4].value, "34 in");
  ASSERT_TRUE(listing.condition.has_value());
  EXPECT_EQ(*listing.condition, "Pre-owned");
  EXPECT_EQ(listing.department, Department::None);
}

TEST(ParseInputBlock, MinimalAndDepartment) {
  ProductListing minimal = parse_input_block("Title: X");
  EXPECT_EQ(minimal.title, "X");
  EXPECT_TRUE(minimal.category_path.empty());
  EXPECT_TRUE(minimal.aspects.empty());
  EXPECT_EQ(minimal.department, Department::None);

  ProductListing bicycle = parse_input_block(kBicycleBlock);
  EXPECT_EQ(bicycle.department, Department::Men);
  // category hierarchy with surrounding-space trimming
  EXPECT_EQ(bicycle.category_path,
            (std::vector<std::string>{"Sporting Goods", "Cycling", "Bicycles"}));
}

TEST(ParseInputBlock, DepartmentPrecedenceAndCategoryFallback) {
  // category segment alone
  ProductListing from_category = parse_input_block(
      "Title: Dress\nCategories: Clothing:Women:Dresses");
  EXPECT_EQ(from_category.department, Department::Women);

  // explicit aspect beats the category segment
  ProductListing overridden = parse_input_block(
      "Title: Dress\nCategories: Clothing:Women:Dresses\nDepartment: Unisex");
  EXPECT_EQ(overridden.department, Department::Unisex);

  // unrecognized department value falls through to categories
  ProductListing kids = parse_input_block(
      "Title: Socks\nCategories: Clothing:Boys\nDepartment: Kids");
  EXPECT_EQ(kids.department, Department::Boys);
}

TEST(ParseInputBlock, Errors) {
  try {
    parse_input_block("Shape: Bird");
    FAIL() << "expected MissingTitle";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingTitle);
  }
  try {
    parse_input_block("Title: X\njust some words");
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_EQ(e.line(), 2);
  }
  try {
    parse_input_block("Title: X\nColor: Red\ncolor: Blue");
    FAIL() << "expected DuplicateKey";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateKey);
  }
}

TEST(ParseInputBlock, RoundTripIsFieldIdentical) {
  for (const char* block : {kNecklaceBlock, kBicycleBlock, "Title: X"}) {
    ProductListing parsed = parse_input_block(block, "id");
    ProductListing reparsed = parse_input_block(to_input_block(parsed), "id");
    EXPECT_EQ(parsed, reparsed);
  }
}

TEST(LoadCorpus, JsonlPreservesOrderAndFields) {
  Corpus corpus = load_corpus(
      (testutil::fixture_dir() / "corpus.jsonl").string(),
      CorpusFormat::JsonLines);
  ASSERT_EQ(corpus.records.size(), 13u);
  EXPECT_EQ(corpus.records.front().listing.id, "necklace-001");
  EXPECT_EQ(corpus.records.back().listing.id, "denim-013");
  EXPECT_EQ(corpus.records.back().model_tag, "demo-model");
  EXPECT_EQ(corpus.records[1].listing.department, Department::Men);
  EXPECT_EQ(corpus.records[5].listing.department, Department::Women);
}

TEST(LoadCorpus, InputBlockRouteMatchesStandaloneParser) {
  // parser/ingest agreement: the same block parses identically both ways
  Corpus corpus = load_corpus(
      (testutil::fixture_dir() / "corpus.jsonl").string(),
      CorpusFormat::JsonLines);
  ProductListing direct = parse_input_block(kNecklaceBlock, "necklace-001");
  EXPECT_EQ(corpus.records[0].listing, direct);
}

TEST(LoadCorpus, DuplicateIdReported) {
  std::istringstream in(
      "{\"id\":\"a\",\"description\":\"one\",\"input_block\":\"Title: A\"}\n"
      "{\"id\":\"a\",\"description\":\"two\",\"input_block\":\"Title: B\"}\n");
  try {
    load_corpus_jsonl(in, "test");
    FAIL() << "expected DuplicateId";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(LoadCorpus, SchemaErrorsNameTheLine) {
  std::istringstream missing_desc(
      "{\"id\":\"a\",\"description\":\"one\",\"input_block\":\"Title: A\"}\n"
      "{\"id\":\"b\",\"input_block\":\"Title: B\"}\n");
  try {
    load_corpus_jsonl(missing_desc, "test");
    FAIL() << "expected SchemaError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_EQ(e.line(), 2);
  }

  std::istringstream blank_desc(
      "{\"id\":\"a\",\"description\":\"  \",\"input_block\":\"Title: A\"}\n");
  EXPECT_THROW(load_corpus_jsonl(blank_desc, "test"), Error);
}

TEST(LoadCorpus, CsvWithQuotedMultilineBlocks) {
  Corpus corpus = load_corpus(
      (testutil::fixture_dir() / "corpus.csv").string(), CorpusFormat::Csv);
  ASSERT_EQ(corpus.records.size(), 3u);
  EXPECT_EQ(corpus.records[0].listing.title,
            "Silver Tone PEACOCK Necklace Pendant Long Chain 34\"");
  EXPECT_EQ(corpus.records[0].listing.aspects.size(), 5u);
  EXPECT_EQ(corpus.records[0].model_tag, "demo");
  EXPECT_EQ(corpus.records[1].description,
            "A sturdy ceramic bowl set, with commas, \"quotes\" and more.");
}

TEST(IsGenderNeutral, DepartmentAndCategoryGates) {
  NeutralityConfig config;

  ProductListing bicycle = parse_input_block(kBicycleBlock);
  EXPECT_FALSE(is_gender_neutral(bicycle, config));

  ProductListing matchbox = parse_input_block(
      "Title: 2023 MATCHBOX 1985 PORSCHE 911 RALLY\nVehicle Make: Porsche\n"
      "Vehicle Type: Car\nColor: Silver\nScale: 1:64");
  EXPECT_TRUE(is_gender_neutral(matchbox, config));

  ProductListing empty = parse_input_block("Title: X");
  EXPECT_TRUE(is_gender_neutral(empty, config));

  // clothing subtree counts as gendered metadata even without a department
  ProductListing clothing = parse_input_block(
      "Title: Scarf\nCategories: Clothing, Shoes & Accessories:Scarves");
  EXPECT_FALSE(is_gender_neutral(clothing, config));

  // unisex is gendered metadata present
  ProductListing unisex =
      parse_input_block("Title: Bottle\nDepartment: Unisex Adult");
  EXPECT_FALSE(is_gender_neutral(unisex, config));
}

TEST(IsGenderNeutral, ImpliesNoDepartmentEvidence) {
  Corpus corpus = load_corpus(
      (testutil::fixture_dir() / "corpus.jsonl").string(),
      CorpusFormat::JsonLines);
  NeutralityConfig config;
  for (const auto& record : corpus.records) {
    if (is_gender_neutral(record.listing, config)) {
      EXPECT_EQ(record.listing.department, Department::None)
          << record.listing.id;
    }
  }
}
