#include "kestrel/geometry.hpp"

#include <algorithm>
#include <cstdlib>

#include "kestrel/error.hpp"

namespace kestrel {

BBox union_box(std::span<const BBox> boxes) {
  if (boxes.empty()) throw Error(ErrorCode::InvalidArgument, "union of zero boxes");
  BBox u = boxes.front();
  for (const auto& b : boxes.subspan(1)) {
    u.x0 = std::min(u.x0, b.x0);
    u.y0 = std::min(u.y0, b.y0);
    u.x1 = std::max(u.x1, b.x1);
    u.y1 = std::max(u.y1, b.y1);
  }
  return u;
}

std::string_view to_phrase(Relation r) noexcept {
  switch (r) {
    case Relation::LeftOf: return "left of";
    case Relation::RightOf: return "right of";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
    case Relation::Coincident: return "coincident/ambiguous";
  }
  return "coincident/ambiguous";
}

Relation inverse(Relation r) noexcept {
  switch (r) {
    case Relation::LeftOf: return Relation::RightOf;
    case Relation::RightOf: return Relation::LeftOf;
    case Relation::Above: return Relation::Below;
    case Relation::Below: return Relation::Above;
    case Relation::Coincident: return Relation::Coincident;
  }
  return Relation::Coincident;
}

Relation relate(Center2 a, Center2 b) noexcept {
  const long long dx = a.x2 - b.x2;
  const long long dy = a.y2 - b.y2;
  if (dx == 0 && dy == 0) return Relation::Coincident;
  if (std::llabs(dx) >= std::llabs(dy)) return dx < 0 ? Relation::LeftOf : Relation::RightOf;
  return dy < 0 ? Relation::Above : Relation::Below;
}

std::string grid_cell(Center2 c, int image_width, int image_height) {
  // c is doubled, so x < W/3 becomes 3 * x2 < 2 * W.
  auto band = [](long long v2, int extent) {
    if (3 * v2 < 2LL * extent) return 0;
    if (3 * v2 < 4LL * extent) return 1;
    return 2;
  };
  static constexpr std::string_view kCols[] = {"left", "center", "right"};
  static constexpr std::string_view kRows[] = {"top", "middle", "bottom"};
  std::string out(kCols[band(c.x2, image_width)]);
  out += '-';
  out += kRows[band(c.y2, image_height)];
  return out;
}

}  // namespace kestrel
