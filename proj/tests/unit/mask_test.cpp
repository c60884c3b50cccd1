#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "kestrel/error.hpp"
#include "kestrel/mask.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

using nlohmann::json;
using testing::uniform;
using testing::uniform_int;

Mask random_mask(std::mt19937& rng, int w, int h, double density) {
  Mask m(w, h);
  std::bernoulli_distribution on(density);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (on(rng)) m.set(x, y);
    }
  }
  return m;
}

TEST(Mask, RleStartsWithBackground) {
  Mask m(3, 2);
  m.set(0, 0);
  m.set(1, 0);
  m.set(2, 1);
  const auto rle = encode_rle(m);
  EXPECT_EQ(rle["size"], json({2, 3}));
  EXPECT_EQ(rle["counts"], json({0, 2, 3, 1}));
}

TEST(Mask, RleRoundTripProperty) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 400; ++trial) {
    const int w = uniform_int(rng, 1, 30), h = uniform_int(rng, 1, 30);
    const auto m = random_mask(rng, w, h, uniform(rng, 0.0, 1.0));
    const auto rle = encode_rle(m);
    long long total = 0;
    for (const auto& c : rle["counts"]) total += c.get<long long>();
    EXPECT_EQ(total, static_cast<long long>(w) * h);
    EXPECT_EQ(decode_rle(rle, w, h), m);
    EXPECT_EQ(decode_wire_mask({{"format", "rle"}, {"data", rle}}, w, h), m);
  }
}

TEST(Mask, RleRejectsContractViolations) {
  const json ok = {{"size", {2, 2}}, {"counts", {1, 2, 1}}};
  EXPECT_NO_THROW(decode_rle(ok, 2, 2));
  auto code_of = [](const json& data, int w, int h) {
    try {
      decode_rle(data, w, h);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of(ok, 3, 2), ErrorCode::MalformedResponse);                                      // size mismatch
  EXPECT_EQ(code_of({{"size", {2, 2}}, {"counts", {1, 2}}}, 2, 2), ErrorCode::MalformedResponse);  // short
  EXPECT_EQ(code_of({{"size", {2, 2}}, {"counts", {3, 2}}}, 2, 2), ErrorCode::MalformedResponse);  // long
  EXPECT_EQ(code_of({{"size", {2, 2}}, {"counts", {-1, 5}}}, 2, 2), ErrorCode::MalformedResponse);
  EXPECT_EQ(code_of({{"counts", {4}}}, 2, 2), ErrorCode::MalformedResponse);
}

TEST(Mask, PolygonFormsAgree) {
  const json pairs = {{2, 2}, {8, 2}, {8, 6}, {2, 6}};
  const json flat = {2, 2, 8, 2, 8, 6, 2, 6};
  const json rings = {pairs};
  const auto a = rasterize_polygon(pairs, 12, 10);
  EXPECT_EQ(a, rasterize_polygon(flat, 12, 10));
  EXPECT_EQ(a, rasterize_polygon(rings, 12, 10));
  const auto box = mask_to_bbox(a);
  EXPECT_EQ(box.x0, 2);
  EXPECT_EQ(box.y0, 2);
  EXPECT_GE(box.x1, 8);
  EXPECT_GE(box.y1, 6);
  EXPECT_THROW(rasterize_polygon(json{{1, 1}, {2, 2}}, 5, 5), Error);
  EXPECT_THROW(rasterize_polygon(json{1, 2, 3}, 5, 5), Error);
  EXPECT_THROW(decode_wire_mask({{"format", "bitmap"}, {"data", json::array()}}, 5, 5), Error);
}

TEST(Mask, FillBoxAndArea) {
  Mask m(10, 10);
  m.fill_box({2, 3, 5, 7});
  EXPECT_EQ(m.area(), 12);
  EXPECT_EQ(mask_to_bbox(m), (BBox{2, 3, 5, 7}));
  m.fill_box({8, 8, 20, 20});  // clipped to the frame
  EXPECT_EQ(m.area(), 16);
  EXPECT_THROW(mask_to_bbox(Mask(4, 4)), Error);
}

}  // namespace
}  // namespace kestrel
