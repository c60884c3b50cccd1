#pragma once

#include <span>
#include <string>
#include <string_view>

namespace kestrel {

/// Half-open pixel box [x0, x1) x [y0, y1). Used for every box in the engine,
/// including the segmentation wire contract.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  long long area() const noexcept { return static_cast<long long>(width()) * height(); }
  bool valid() const noexcept { return x0 < x1 && y0 < y1; }
  bool within(int image_width, int image_height) const noexcept {
    return valid() && x0 >= 0 && y0 >= 0 && x1 <= image_width && y1 <= image_height;
  }
  bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// A box center in doubled coordinates so half-pixel centers stay exact.
struct Center2 {
  long long x2 = 0;
  long long y2 = 0;
};

inline Center2 center2(const BBox& b) noexcept {
  return {static_cast<long long>(b.x0) + b.x1, static_cast<long long>(b.y0) + b.y1};
}

BBox union_box(std::span<const BBox> boxes);

enum class Relation { LeftOf, RightOf, Above, Below, Coincident };

std::string_view to_phrase(Relation r) noexcept;
Relation inverse(Relation r) noexcept;

/// Relation of A to B from box centers along the dominant axis: horizontal when
/// |dx| >= |dy| (ties go horizontal), vertical otherwise; image y grows downward.
Relation relate(Center2 a, Center2 b) noexcept;
inline Relation relate(const BBox& a, const BBox& b) noexcept { return relate(center2(a), center2(b)); }

/// 3x3 grid cell name "<left|center|right>-<top|middle|bottom>".
std::string grid_cell(Center2 c, int image_width, int image_height);

}  // namespace kestrel
