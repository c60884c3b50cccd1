#include <gtest/gtest.h>

#include "kestrel/error.hpp"
#include "kestrel/refine.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

using Step = ScriptedChatBackend::Step;

const char* kInitYes = R"({"answer":"Yes","verifiable_claims":[{"id":"c1","type":"existence","text":"There is a dog.","targets":["dog"],"priority":1}]})";
const char* kGuardUnclear = R"({"answer":"unclear","confidence":"low","reason":"small image"})";
const char* kContradicts = R"({"verdict":"contradicted","checked":[{"claim_id":"c1","status":"contradicted","confidence":0.95,"citations":["e_exist_dog"]}]})";
const char* kSupportsC2 = R"({"checked":[{"claim_id":"c2","status":"supported","confidence":0.95,"citations":["e_exist_dog"]}]})";
const char* kRefineNo = R"({"Answer":"No","new_claims":[{"id":"n1","type":"existence","text":"There is no dog.","targets":["dog"],"priority":2}]})";

Sample dog_question() {
  return {"s1", ImageRef(std::make_shared<const Image>(32, 24)), "Is there a dog in the image?", {}};
}

std::shared_ptr<SegmentationBackend> empty_grounder() {
  return std::make_shared<LambdaSegmentationBackend>([](const SegmentRequest&) { return SegmentResponse{}; });
}

bool has_event(const RunTrace& t, const std::string& stage, const std::string& kind) {
  return std::any_of(t.events.begin(), t.events.end(),
                     [&](const TraceEvent& e) { return e.stage == stage && e.kind == kind; });
}

TEST(Pipeline, ContradictionFlipsThenSupportHolds) {
  auto init = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_purpose("init", kInitYes),
      ScriptedChatBackend::expect_purpose("yes_guard", kGuardUnclear)});
  auto judge = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_text("[e_exist_dog] (existence_text) no instance of 'dog' detected", kContradicts),
      ScriptedChatBackend::expect_text("There is no dog.", kSupportsC2)});
  auto refiner = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_text("PreviousAnswer: \"Yes\"", kRefineNo),
      ScriptedChatBackend::expect_text("PreviousAnswer: \"No\"", kRefineNo)});
  BackendSet b{init, judge, refiner, nullptr, empty_grounder()};
  EngineConfig cfg;
  cfg.gate.max_rounds = 2;

  const auto t = run_sample(dog_question(), b, cfg);
  ASSERT_EQ(t.error, "");
  EXPECT_EQ(t.initial_answer, BinaryAnswer::Yes);
  EXPECT_EQ(t.final_answer, BinaryAnswer::No);
  ASSERT_TRUE(t.yes_guard);
  EXPECT_EQ(t.yes_guard->answer, GuardAnswer::Unclear);
  ASSERT_EQ(t.rounds.size(), 2u);
  EXPECT_EQ(t.rounds[0].gate_decision, GateDecision::Flipped);
  EXPECT_EQ(t.rounds[0].trigger_citations, std::vector<std::string>{"e_exist_dog"});
  EXPECT_TRUE(t.rounds[0].grounding.at(0).rechecked);
  EXPECT_EQ(t.rounds[1].claims.at(0).id, "c2");
  EXPECT_EQ(t.rounds[1].gate_decision, GateDecision::KeptSupported);
  EXPECT_TRUE(t.rounds[1].new_evidence_ids.empty());
  EXPECT_NE(std::find(t.rounds[1].flags.begin(), t.rounds[1].flags.end(), "escalated"), t.rounds[1].flags.end());
  EXPECT_EQ(t.stop_reason, StopReason::MaxRounds);
  EXPECT_EQ(judge->remaining(), 0u);
  EXPECT_EQ(refiner->remaining(), 0u);
}

TEST(Pipeline, HighConfidenceGuardNoRaisesPriority) {
  auto init = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_purpose("init", kInitYes),
      ScriptedChatBackend::expect_purpose("yes_guard", R"({"answer":"no","confidence":"high","reason":"none"})")});
  auto judge = std::make_shared<LambdaChatBackend>([](const ChatRequest&) { return std::string(kContradicts); });
  auto refiner = std::make_shared<LambdaChatBackend>([](const ChatRequest&) { return std::string(kRefineNo); });
  EngineConfig cfg;
  cfg.gate.use_self_refinement = false;
  const auto t = run_sample(dog_question(), {init, judge, refiner, nullptr, empty_grounder()}, cfg);
  EXPECT_TRUE(t.has_flag("low_trust_initial"));
  EXPECT_EQ(t.initial_claims.at(0).priority, kMaxClaimPriority);
  // Without refinement the verdict alone drives the answer, for one round.
  EXPECT_EQ(t.rounds.size(), 1u);
  EXPECT_EQ(t.final_answer, BinaryAnswer::No);
  EXPECT_EQ(t.stop_reason, StopReason::MaxRounds);
}

TEST(Pipeline, UnparseableInitFallsBackToDirectAnswer) {
  auto init = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_purpose("init", "no idea"),
      ScriptedChatBackend::expect_text("PrevSummary", "still no idea"),
      ScriptedChatBackend::expect_purpose("direct_answer", "No, I see no dog.")});
  auto judge = std::make_shared<LambdaChatBackend>([](const ChatRequest&) { return std::string("{}"); });
  EngineConfig cfg;
  cfg.gate.use_self_refinement = false;
  const auto t = run_sample(dog_question(), {init, judge, nullptr, nullptr, empty_grounder()}, cfg);
  EXPECT_TRUE(t.has_flag("fallback_init"));
  EXPECT_EQ(t.initial_answer, BinaryAnswer::No);
  EXPECT_EQ(t.initial_claims.at(0).targets, std::vector<std::string>{"dog"});
  EXPECT_TRUE(has_event(t, "init", "parse_error"));
}

TEST(Pipeline, BackendFailureEndsWithEarlyError) {
  auto init = std::make_shared<ScriptedChatBackend>(std::vector<Step>{
      ScriptedChatBackend::expect_purpose("init", kInitYes), ScriptedChatBackend::any(kGuardUnclear)});
  auto judge = std::make_shared<LambdaChatBackend>([](const ChatRequest&) -> std::string {
    throw Error(ErrorCode::BackendUnavailable, "judge down");
  });
  const auto t = run_sample(dog_question(), {init, judge, nullptr, nullptr, empty_grounder()}, EngineConfig{});
  EXPECT_EQ(t.stop_reason, StopReason::EarlyError);
  EXPECT_EQ(t.error_stage, "verify");
  EXPECT_EQ(t.final_answer, BinaryAnswer::Yes);  // the initial answer survives
  EXPECT_TRUE(has_event(t, "verify", "error"));

  const auto none = run_sample(dog_question(), {}, EngineConfig{});
  EXPECT_EQ(none.stop_reason, StopReason::EarlyError);
  EXPECT_TRUE(none.has_flag("init_unavailable"));
  EXPECT_EQ(none.final_answer, BinaryAnswer::No);
}

TEST(Pipeline, ScriptMismatchIsReportedAsAnError) {
  auto init = std::make_shared<ScriptedChatBackend>(
      std::vector<Step>{ScriptedChatBackend::expect_purpose("refine", kInitYes)});
  const auto t = run_sample(dog_question(), {init, nullptr, nullptr, nullptr, empty_grounder()}, EngineConfig{});
  EXPECT_EQ(t.stop_reason, StopReason::EarlyError);
  EXPECT_NE(t.error.find("expected purpose 'refine'"), std::string::npos) << t.error;
}

TEST(Pipeline, AblationsSkipStages) {
  auto init = std::make_shared<LambdaChatBackend>([](const ChatRequest& r) {
    return std::string(r.purpose == "init" ? kInitYes : kGuardUnclear);
  });
  auto refiner = std::make_shared<LambdaChatBackend>([](const ChatRequest&) { return std::string(kRefineNo); });
  EngineConfig cfg;
  cfg.gate.use_grounding = false;
  cfg.gate.use_claim_verification = false;
  const auto t = run_sample(dog_question(), {init, nullptr, refiner, nullptr, nullptr}, cfg);
  ASSERT_EQ(t.error, "");
  ASSERT_FALSE(t.rounds.empty());
  EXPECT_TRUE(t.rounds[0].grounding.empty());
  EXPECT_TRUE(t.rounds[0].evidence.empty());
  EXPECT_TRUE(t.rounds[0].report.skipped);
  // No verification means no gate either: the refiner's proposal is taken.
  EXPECT_EQ(t.rounds[0].gate_decision, GateDecision::Flipped);
  EXPECT_EQ(t.final_answer, BinaryAnswer::No);
}

}  // namespace
}  // namespace kestrel
