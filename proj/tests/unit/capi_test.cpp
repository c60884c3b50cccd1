#include <gtest/gtest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "kestrel/kestrel.h"
#include "test_util.hpp"

namespace {

using nlohmann::json;
using kestrel::testing::TempDir;

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  kestrel_string_free(s);
  return out;
}

struct Config {
  Config() { EXPECT_EQ(kestrel_config_new(&ptr), KESTREL_OK); }
  ~Config() { kestrel_config_free(ptr); }
  kestrel_config* ptr = nullptr;
};

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(kestrel_version(), "0.1.0");
  EXPECT_STREQ(kestrel_status_name(KESTREL_OK), "Ok");
  EXPECT_STRNE(kestrel_status_name(KESTREL_E_CACHE_MISS), kestrel_status_name(KESTREL_E_IO));
}

TEST(CApi, ConfigSetValidateAndDiagnostics) {
  Config c;
  EXPECT_EQ(kestrel_config_set(c.ptr, "gate.position", "0.95"), KESTREL_OK);
  EXPECT_EQ(kestrel_config_set(c.ptr, "gate.nonsense", "1"), KESTREL_E_INVALID_CONFIG);
  EXPECT_NE(std::string(kestrel_last_error()).find("gate.nonsense"), std::string::npos);
  EXPECT_EQ(kestrel_config_set(c.ptr, "gate.existence", "2"), KESTREL_OK);  // parses; range is checked later
  char* diag = nullptr;
  EXPECT_EQ(kestrel_config_validate(c.ptr, &diag), KESTREL_E_INVALID_CONFIG);
  const auto d = json::parse(take(diag));
  ASSERT_TRUE(d.is_array());
  EXPECT_EQ(d.at(0)["field"], "gate.existence");

  char* text = nullptr;
  ASSERT_EQ(kestrel_config_serialize(c.ptr, &text), KESTREL_OK);
  EXPECT_NE(take(text).find("position = 0.95"), std::string::npos);
  char* keys = nullptr;
  ASSERT_EQ(kestrel_config_keys(&keys), KESTREL_OK);
  EXPECT_GT(json::parse(take(keys)).size(), 30u);

  EXPECT_EQ(kestrel_config_new(nullptr), KESTREL_E_INVALID_ARGUMENT);
  EXPECT_EQ(kestrel_config_set(nullptr, "gate.count", "0.9"), KESTREL_E_INVALID_ARGUMENT);
}

TEST(CApi, ConfigFileErrors) {
  TempDir dir;
  kestrel::testing::write_file(dir / "k.conf", "[loop]\nmax_rounds = many\n");
  Config c;
  char* diag = nullptr;
  EXPECT_EQ(kestrel_config_load(c.ptr, (dir / "k.conf").c_str(), &diag), KESTREL_E_INVALID_CONFIG);
  EXPECT_EQ(json::parse(take(diag)).at(0)["field"], "loop.max_rounds");
}

TEST(CApi, SimulateEvaluateRenderReplay) {
  TempDir dir;
  Config c;
  ASSERT_EQ(kestrel_config_set(c.ptr, "run.workers", "2"), KESTREL_OK);
  ASSERT_EQ(kestrel_config_set(c.ptr, "run.seed", "5"), KESTREL_OK);
  char* summary = nullptr;
  ASSERT_EQ(kestrel_simulate(c.ptr, 3, dir.path().c_str(), &summary), KESTREL_OK) << kestrel_last_error();
  const auto s = json::parse(take(summary));
  EXPECT_EQ(s["early_errors"], 0);
  EXPECT_EQ(s["transitions"]["over_corrected"], 0);
  for (const char* f : {"traces.jsonl", "labels.jsonl", "manifest.json", "responses.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_TRUE(std::filesystem::is_directory(dir / "artifacts"));

  const auto traces = (dir / "traces.jsonl").string();
  const auto labels = (dir / "labels.jsonl").string();
  char* report = nullptr;
  ASSERT_EQ(kestrel_eval_pope(traces.c_str(), labels.c_str(), &report), KESTREL_OK);
  const auto pope = json::parse(take(report));
  EXPECT_EQ(pope["samples"], s["samples"]);
  EXPECT_FALSE(pope["table"].get<std::string>().empty());
  ASSERT_EQ(kestrel_transitions(traces.c_str(), labels.c_str(), &report), KESTREL_OK);
  take(report);
  ASSERT_EQ(kestrel_efficiency(traces.c_str(), 3, &report), KESTREL_OK);
  take(report);
  EXPECT_EQ(kestrel_eval_pope(traces.c_str(), nullptr, &report), KESTREL_E_INVALID_ARGUMENT);

  char* text = nullptr;
  ASSERT_EQ(kestrel_render_trace(traces.c_str(), nullptr, &text), KESTREL_OK);
  EXPECT_NE(take(text).find("final answer"), std::string::npos);

  TempDir again;
  ASSERT_EQ(kestrel_replay(c.ptr, traces.c_str(), (dir / "responses.jsonl").c_str(), again.path().c_str(), &summary),
            KESTREL_OK)
      << kestrel_last_error();
  const auto r = json::parse(take(summary));
  EXPECT_EQ(r["identical"], s["samples"]);
  EXPECT_TRUE(r["differing"].empty());

  TempDir regate;
  ASSERT_EQ(kestrel_config_set(c.ptr, "gate.existence", "1.0"), KESTREL_OK);
  ASSERT_EQ(kestrel_replay(c.ptr, traces.c_str(), nullptr, regate.path().c_str(), &summary), KESTREL_OK)
      << kestrel_last_error();
  const auto g = json::parse(take(summary));
  EXPECT_EQ(g["mode"], "regate");
  EXPECT_LE(g["regated_flips"].get<int>(), g["recorded_flips"].get<int>());
}

TEST(CApi, ErrorsCarryMessages) {
  char* out = nullptr;
  EXPECT_EQ(kestrel_eval_pope("/nonexistent/traces.jsonl", "/nonexistent/labels.jsonl", &out), KESTREL_E_IO);
  EXPECT_NE(std::string(kestrel_last_error()), "");
  EXPECT_EQ(kestrel_dataset_labels("imagenet", "/x", nullptr, "/y"), KESTREL_E_INVALID_ARGUMENT);
}

}  // namespace
