#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kestrel/error.hpp"
#include "kestrel/geometry.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

using testing::uniform_int;

TEST(Geometry, RelateUsesDominantAxis) {
  const BBox a{0, 0, 10, 10};
  EXPECT_EQ(relate(a, BBox{20, 0, 30, 10}), Relation::LeftOf);
  EXPECT_EQ(relate(BBox{20, 0, 30, 10}, a), Relation::RightOf);
  EXPECT_EQ(relate(a, BBox{0, 20, 10, 30}), Relation::Above);
  EXPECT_EQ(relate(BBox{0, 20, 10, 30}, a), Relation::Below);
  // |dx| == |dy| goes horizontal.
  EXPECT_EQ(relate(a, BBox{5, 5, 15, 15}), Relation::LeftOf);
  EXPECT_EQ(relate(a, a), Relation::Coincident);
}

TEST(Geometry, HalfPixelCentersStayExact) {
  // Centers (0.5, 0.5) and (1, 1): a diagonal tie goes horizontal.
  EXPECT_EQ(relate(BBox{0, 0, 1, 1}, BBox{0, 0, 2, 2}), Relation::LeftOf);
  EXPECT_EQ(relate(BBox{0, 0, 2, 1}, BBox{0, 0, 2, 2}), Relation::Above);
}

TEST(Geometry, InverseIsAnInvolution) {
  for (auto r : {Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below, Relation::Coincident}) {
    EXPECT_EQ(inverse(inverse(r)), r);
  }
  EXPECT_EQ(to_phrase(Relation::LeftOf), "left of");
  EXPECT_EQ(to_phrase(Relation::Below), "below");
}

TEST(Geometry, UnionBoxCoversEveryInput) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<BBox> boxes;
    const int n = uniform_int(rng, 1, 6);
    for (int i = 0; i < n; ++i) {
      const int x0 = uniform_int(rng, 0, 50), y0 = uniform_int(rng, 0, 50);
      boxes.push_back({x0, y0, x0 + uniform_int(rng, 1, 20), y0 + uniform_int(rng, 1, 20)});
    }
    const auto u = union_box(boxes);
    bool touches_x0 = false, touches_x1 = false;
    for (const auto& b : boxes) {
      EXPECT_LE(u.x0, b.x0);
      EXPECT_LE(u.y0, b.y0);
      EXPECT_GE(u.x1, b.x1);
      EXPECT_GE(u.y1, b.y1);
      touches_x0 |= b.x0 == u.x0;
      touches_x1 |= b.x1 == u.x1;
    }
    EXPECT_TRUE(touches_x0 && touches_x1);
  }
  EXPECT_THROW(union_box({}), Error);
}

std::string oracle_cell(double cx, double cy, int w, int h) {
  auto band = [](double v, int extent) { return v < extent / 3.0 ? 0 : v < 2.0 * extent / 3.0 ? 1 : 2; };
  static const char* cols[] = {"left", "center", "right"};
  static const char* rows[] = {"top", "middle", "bottom"};
  return std::string(cols[band(cx, w)]) + "-" + rows[band(cy, h)];
}

TEST(Geometry, GridCellMatchesThirds) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5000; ++trial) {
    const int w = uniform_int(rng, 3, 400), h = uniform_int(rng, 3, 400);
    const int x0 = uniform_int(rng, 0, w - 1), y0 = uniform_int(rng, 0, h - 1);
    const BBox b{x0, y0, uniform_int(rng, x0 + 1, w), uniform_int(rng, y0 + 1, h)};
    EXPECT_EQ(grid_cell(center2(b), w, h), oracle_cell((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0, w, h));
  }
  EXPECT_EQ(grid_cell(center2(BBox{0, 0, 2, 2}), 300, 300), "left-top");
  EXPECT_EQ(grid_cell(center2(BBox{140, 140, 160, 160}), 300, 300), "center-middle");
  EXPECT_EQ(grid_cell(center2(BBox{290, 290, 300, 300}), 300, 300), "right-bottom");
}

TEST(Geometry, BoxPredicates) {
  const BBox b{2, 3, 7, 9};
  EXPECT_EQ(b.width(), 5);
  EXPECT_EQ(b.height(), 6);
  EXPECT_EQ(b.area(), 30);
  EXPECT_TRUE(b.contains(2, 3));
  EXPECT_FALSE(b.contains(7, 3));
  EXPECT_TRUE(b.within(7, 9));
  EXPECT_FALSE(b.within(6, 9));
  EXPECT_FALSE((BBox{3, 3, 3, 5}).valid());
}

}  // namespace
}  // namespace kestrel
