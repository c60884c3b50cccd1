#include <gtest/gtest.h>

#include <random>
#include <string>

#include "kestrel/error.hpp"
#include "kestrel/geometry.hpp"
#include "kestrel/lexicon.hpp"
#include "kestrel/model.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

Claim claim(ClaimType type, std::string text, std::vector<std::string> targets) {
  return Claim{"c1", type, std::move(text), std::move(targets), 1};
}

TEST(TargetKey, NormalizesPunctuationCaseAndSpaces) {
  EXPECT_EQ(TargetKey::from_phrase("  Dining   Table! ").str(), "dining_table");
  EXPECT_EQ(TargetKey::from_phrase("traffic-light").str(), "trafficlight");
  EXPECT_EQ(TargetKey::from_phrase("cell_phone").str(), "cell_phone");
  try {
    TargetKey::from_phrase(" ?! ");
    FAIL() << "expected InvalidTarget";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidTarget);
  }
}

TEST(TargetKey, IdempotentProperty) {
  std::mt19937 rng(29);
  const std::string alphabet = "abcXYZ 09_-!.,\t";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int n = testing::uniform_int(rng, 1, 20);
    for (int i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    try {
      const auto k = TargetKey::from_phrase(s);
      EXPECT_EQ(TargetKey::from_phrase(k.str()).str(), k.str());
      EXPECT_EQ(k.str().find(' '), std::string::npos);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidTarget);
    }
  }
}

TEST(Answers, ParsingIsStrictButLeadingTokenIsLenient) {
  EXPECT_EQ(parse_binary_answer(" YES "), BinaryAnswer::Yes);
  EXPECT_EQ(parse_binary_answer("no"), BinaryAnswer::No);
  EXPECT_FALSE(parse_binary_answer("yes, there is"));
  EXPECT_EQ(leading_binary_answer("Yes, there is a dog."), BinaryAnswer::Yes);
  EXPECT_EQ(leading_binary_answer("No. It is a cat"), BinaryAnswer::No);
  EXPECT_FALSE(leading_binary_answer("Maybe"));
  EXPECT_FALSE(leading_binary_answer(""));
  EXPECT_EQ(negate(BinaryAnswer::Yes), BinaryAnswer::No);
}

TEST(ClaimValidation, AcceptsWellFormedClaims) {
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "There is a dog.", {"dog"})).ok());
  EXPECT_TRUE(validate_claim(claim(ClaimType::Position, "The cup is left of the book.", {"cup", "book"})).ok());
  // Position targets may carry spatial words.
  EXPECT_TRUE(validate_claim(claim(ClaimType::Position, "x", {"left cup"})).ok());
}

TEST(ClaimValidation, ReportsEachViolation) {
  auto c = claim(ClaimType::Color, "", {"red car"});
  c.id = " ";
  c.priority = 0;
  const auto r = validate_claim(c);
  EXPECT_TRUE(r.has(ViolationCode::EmptyId));
  EXPECT_TRUE(r.has(ViolationCode::EmptyText));
  EXPECT_TRUE(r.has(ViolationCode::NonPositivePriority));
  EXPECT_TRUE(r.has(ViolationCode::AttributeWord));

  EXPECT_TRUE(validate_claim(claim(ClaimType::Count, "x", {"two dogs"})).has(ViolationCode::AttributeWord));
  EXPECT_TRUE(validate_claim(claim(ClaimType::Count, "x", {"many dogs"})).has(ViolationCode::AttributeWord));
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "x", {"dog", "cat"})).has(ViolationCode::TargetCount));
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "x", {})).has(ViolationCode::TargetCount));
  EXPECT_TRUE(validate_claim(claim(ClaimType::Position, "x", {"a", "b", "c"})).has(ViolationCode::TargetCount));
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "x", {"  "})).has(ViolationCode::EmptyTarget));
}

TEST(ClaimValidation, ExtraStopWordsAreRejectedInTargets) {
  const std::vector<std::string> extra = {"Shiny"};
  const auto lex = Lexicon::builtin().with_extra_stop_words(extra);
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "x", {"shiny car"})).ok());
  EXPECT_TRUE(validate_claim(claim(ClaimType::Existence, "x", {"shiny car"}), lex).has(ViolationCode::AttributeWord));
  EXPECT_EQ(lex.classify("shiny"), WordClass::Custom);
}

TEST(Stance, NegationsFlipStance) {
  const std::string q = "Is there a dog in the image?";
  EXPECT_EQ(claim_stance(claim(ClaimType::Existence, "There is a dog.", {"dog"}), q), Stance::Affirms);
  EXPECT_EQ(claim_stance(claim(ClaimType::Existence, "There is no dog.", {"dog"}), q), Stance::Denies);
  EXPECT_EQ(claim_stance(claim(ClaimType::Existence, "A dog isn't present.", {"dog"}), q), Stance::Denies);
}

TEST(Stance, MismatchedAttributesDeny) {
  EXPECT_EQ(claim_stance(claim(ClaimType::Count, "There are three cups.", {"cup"}), "Are there two cups?"),
            Stance::Denies);
  EXPECT_EQ(claim_stance(claim(ClaimType::Count, "There are 2 cups.", {"cup"}), "Are there two cups?"),
            Stance::Affirms);
  EXPECT_EQ(claim_stance(claim(ClaimType::Color, "The car is blue.", {"car"}), "Is the car red?"), Stance::Denies);
  EXPECT_EQ(claim_stance(claim(ClaimType::Color, "The car is not blue.", {"car"}), "Is the car red?"),
            Stance::Affirms);
  EXPECT_EQ(claim_stance(claim(ClaimType::Color, "The car is grey.", {"car"}), "Is the car gray?"), Stance::Affirms);
}

TEST(Stance, PositionHandlesSwappedTargets) {
  const std::string q = "Is the cup to the left of the book?";
  EXPECT_EQ(claim_stance(claim(ClaimType::Position, "The cup is left of the book.", {"cup", "book"}), q),
            Stance::Affirms);
  EXPECT_EQ(claim_stance(claim(ClaimType::Position, "The cup is right of the book.", {"cup", "book"}), q),
            Stance::Denies);
  EXPECT_EQ(claim_stance(claim(ClaimType::Position, "The book is right of the cup.", {"book", "cup"}), q),
            Stance::Affirms);
  EXPECT_EQ(claim_stance(claim(ClaimType::Position, "The book is left of the cup.", {"book", "cup"}), q),
            Stance::Denies);
}

TEST(Lexicon, RoutingAndNumbers) {
  EXPECT_EQ(route_claim_type("How many dogs are there?"), ClaimType::Count);
  EXPECT_EQ(route_claim_type("Are there 3 cups?"), ClaimType::Count);
  EXPECT_EQ(route_claim_type("Is the car red?"), ClaimType::Color);
  EXPECT_EQ(route_claim_type("Is the cup below the lamp?"), ClaimType::Position);
  EXPECT_EQ(route_claim_type("Is there a giraffe?"), ClaimType::Existence);
  EXPECT_EQ(claimed_count("There are twelve eggs."), 12);
  EXPECT_FALSE(claimed_count("There are eggs."));
  EXPECT_EQ(number_word(3), "three");
  EXPECT_EQ(number_word(42), "42");
  EXPECT_EQ(basic_color_terms().size(), 11u);
  EXPECT_EQ(Lexicon::builtin().canonical_color("silver"), "gray");
}

TEST(Lexicon, RelationPhrasesAbsorbFunctionWords) {
  const auto tokens = tokenize("Is the cup to the left of the book?");
  const auto m = find_relation(tokens);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->relation, Relation::LeftOf);
  EXPECT_EQ(tokens[m->begin], "to");
  EXPECT_EQ(tokens[m->end - 1], "of");
  EXPECT_EQ(find_relation(tokenize("the lamp on top of the desk"))->relation, Relation::Above);
  EXPECT_FALSE(find_relation(tokenize("a dog and a cat")));
}

TEST(Lexicon, TargetExtraction) {
  EXPECT_EQ(extract_targets("Is there a dog in the image?", ClaimType::Existence),
            std::vector<std::string>{"dog"});
  EXPECT_EQ(extract_targets("Are there two red cars?", ClaimType::Count), std::vector<std::string>{"cars"});
  EXPECT_EQ(extract_targets("Is the cup to the left of the book?", ClaimType::Position),
            (std::vector<std::string>{"cup", "book"}));
  EXPECT_TRUE(extract_targets("Is there?", ClaimType::Existence).empty());
}

TEST(Claims, DedupKeyIgnoresIdsAndPunctuation) {
  auto a = claim(ClaimType::Existence, "There is a Dog.", {"Dog"});
  auto b = claim(ClaimType::Existence, "there is a dog", {"dog"});
  b.id = "c9";
  b.priority = 5;
  EXPECT_EQ(claim_dedup_key(a), claim_dedup_key(b));
  b.type = ClaimType::Count;
  EXPECT_NE(claim_dedup_key(a), claim_dedup_key(b));
}

}  // namespace
}  // namespace kestrel
