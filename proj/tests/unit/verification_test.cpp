#include <gtest/gtest.h>

#include <random>

#include "kestrel/error.hpp"
#include "kestrel/verification.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

ClaimCheck check(std::string id, CheckStatus s, double conf, std::vector<std::string> cites = {"e1"}) {
  ClaimCheck c;
  c.claim_id = std::move(id);
  c.status = c.original_status = s;
  c.confidence = conf;
  c.citations = std::move(cites);
  return c;
}

const std::map<std::string, ClaimType> kTypes = {{"a", ClaimType::Existence}, {"b", ClaimType::Position}};

TEST(Citations, StripsUnknownAndDowngrades) {
  std::vector<ClaimCheck> checks = {check("a", CheckStatus::Contradicted, 0.9, {"e1", "bogus", "e1"}),
                                    check("b", CheckStatus::Supported, 0.95, {"ghost"})};
  const auto v = validate_citations(checks, {"e1", "e2"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].citation, "bogus");
  EXPECT_EQ(checks[0].citations, std::vector<std::string>{"e1"});
  EXPECT_EQ(checks[0].status, CheckStatus::Contradicted);
  EXPECT_EQ(checks[1].status, CheckStatus::Insufficient);
  EXPECT_EQ(checks[1].original_status, CheckStatus::Supported);
  EXPECT_DOUBLE_EQ(checks[1].confidence, 0.95);
  EXPECT_EQ(checks[1].stripped_citations, std::vector<std::string>{"ghost"});
}

TEST(Consolidate, Rules) {
  GateConfig g;
  EXPECT_THROW(consolidate({}, g, kTypes), Error);
  // One confident cited contradiction wins over everything.
  EXPECT_EQ(consolidate({check("a", CheckStatus::Supported, 0.99), check("b", CheckStatus::Contradicted, 0.90)}, g,
                        kTypes),
            CheckStatus::Contradicted);
  // Below the position gate.
  EXPECT_EQ(consolidate({check("b", CheckStatus::Contradicted, 0.89)}, g, kTypes), CheckStatus::Insufficient);
  EXPECT_EQ(consolidate({check("a", CheckStatus::Contradicted, 0.9, {})}, g, kTypes), CheckStatus::Insufficient);
  g.require_citations_for_flip = false;
  EXPECT_EQ(consolidate({check("a", CheckStatus::Contradicted, 0.9, {})}, g, kTypes), CheckStatus::Contradicted);
  EXPECT_EQ(consolidate({check("a", CheckStatus::Supported, 0.82), check("b", CheckStatus::Supported, 0.9)}, g,
                        kTypes),
            CheckStatus::Supported);
  EXPECT_EQ(consolidate({check("a", CheckStatus::Supported, 0.82), check("b", CheckStatus::Insufficient, 0.9)}, g,
                        kTypes),
            CheckStatus::Insufficient);
  // Unknown claims are never confident.
  EXPECT_EQ(consolidate({check("zzz", CheckStatus::Supported, 1.0)}, g, kTypes), CheckStatus::Insufficient);
}

// Reference consolidation written from the rule statement, over every list.
CheckStatus reference(const std::vector<ClaimCheck>& cs, const GateConfig& g) {
  bool any_contra = false, all_sup = true;
  for (const auto& c : cs) {
    const double gate = g.gate_for(kTypes.at(c.claim_id));
    const bool conf = c.confidence >= gate;
    const bool cited = !c.citations.empty() || !g.require_citations_for_flip;
    if (c.status == CheckStatus::Contradicted && conf && cited) any_contra = true;
    if (!(c.status == CheckStatus::Supported && conf)) all_sup = false;
  }
  return any_contra ? CheckStatus::Contradicted : (all_sup ? CheckStatus::Supported : CheckStatus::Insufficient);
}

TEST(Consolidate, RandomListsMatchReferenceProperty) {
  std::mt19937 rng(61);
  const std::vector<double> confs = {0.0, 0.5, 0.82, 0.8199, 0.9, 0.95, 1.0};
  for (int trial = 0; trial < 5000; ++trial) {
    GateConfig g;
    g.require_citations_for_flip = rng() & 1;
    std::vector<ClaimCheck> cs(testing::uniform_int(rng, 1, 4));
    for (auto& c : cs) {
      c = check((rng() & 1) ? "a" : "b", static_cast<CheckStatus>(rng() % 3), confs[rng() % confs.size()]);
      if (rng() % 3 == 0) c.citations.clear();
    }
    EXPECT_EQ(consolidate(cs, g, kTypes), reference(cs, g));
  }
}

TEST(Totalize, OneCheckPerClaimInOrder) {
  const std::vector<Claim> claims = {{"a", ClaimType::Existence, "t", {"dog"}, 1},
                                     {"b", ClaimType::Position, "t", {"x", "y"}, 1}};
  std::vector<std::string> dropped;
  const auto out = totalize({check("b", CheckStatus::Supported, 0.9), check("x", CheckStatus::Supported, 0.9),
                             check("b", CheckStatus::Contradicted, 0.9)},
                            claims, &dropped);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].claim_id, "a");
  EXPECT_TRUE(out[0].synthesized);
  EXPECT_EQ(out[0].status, CheckStatus::Insufficient);
  EXPECT_EQ(out[1].status, CheckStatus::Supported);
  EXPECT_EQ(dropped, std::vector<std::string>{"x"});
}

TEST(VerifyRound, StripsCitationsOutsideTheRoundSlice) {
  VerifyInput in;
  in.question = "Is there a dog?";
  in.claims = {{"c1", ClaimType::Existence, "There is a dog.", {"dog"}, 1}};
  in.evidence.resize(1);
  in.evidence[0].id = "e_exist_dog";
  in.evidence[0].text = "no instance of 'dog' detected at threshold 0.50.";
  in.context = ImageData::of(Image(4, 4));
  LambdaChatBackend judge([](const ChatRequest&) {
    return std::string(R"({"verdict":"contradicted","checked":[{"claim_id":"c1","status":"contradicted",)"
                       R"("confidence":0.95,"citations":["e_exist_dog","e_seg_dog"]}]})");
  });
  const auto out = verify_round(in, judge, "m", GateConfig{}, BackendOptions{});
  EXPECT_EQ(out.report.verdict, CheckStatus::Contradicted);
  EXPECT_EQ(out.report.advisory_verdict, CheckStatus::Contradicted);
  EXPECT_EQ(out.report.checked[0].stripped_citations, std::vector<std::string>{"e_seg_dog"});
  EXPECT_TRUE(std::any_of(out.events.begin(), out.events.end(),
                          [](const TraceEvent& e) { return e.kind == "citation_stripped"; }));
}

TEST(VerifyRound, UnparseableOutputIsSkippedNotFatal) {
  VerifyInput in;
  in.question = "q";
  in.claims = {{"c1", ClaimType::Existence, "There is a dog.", {"dog"}, 1}};
  in.context = ImageData::of(Image(4, 4));
  LambdaChatBackend judge([](const ChatRequest&) { return std::string("I refuse."); });
  const auto out = verify_round(in, judge, "m", GateConfig{}, BackendOptions{});
  EXPECT_TRUE(out.report.skipped);
  EXPECT_FALSE(out.report.parse_error.empty());
  EXPECT_EQ(out.report.verdict, CheckStatus::Insufficient);
  EXPECT_EQ(out.report.checked.size(), 1u);
}

}  // namespace
}  // namespace kestrel
