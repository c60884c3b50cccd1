#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/geometry.hpp"

namespace kestrel {

/// Binary mask over the full image frame, row-major, one byte per pixel.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool at(int x, int y) const noexcept { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) noexcept { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  void fill_box(const BBox& b) noexcept;
  long long area() const noexcept;

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Tight half-open bounds of all set pixels; throws Error(EmptyMask).
BBox mask_to_bbox(const Mask& mask);

/// Wire form {"size":[H,W],"counts":[bg,fg,bg,...]}: row-major runs over the
/// whole image, alternating background/foreground, starting with background
/// (a leading zero when pixel 0 is set).
nlohmann::json encode_rle(const Mask& mask);

/// Decodes the "data" member of a wire mask. Throws Error(MalformedResponse)
/// when sizes disagree with the image or runs do not cover it exactly.
Mask decode_rle(const nlohmann::json& data, int width, int height);

/// Polygon data: [[x,y],...] or [[[x,y],...], ...] (several rings), or flat
/// [x0,y0,x1,y1,...]. Filled with the even-odd rule.
Mask rasterize_polygon(const nlohmann::json& data, int width, int height);

/// Dispatches on {"format": "rle"|"polygon", "data": ...}.
Mask decode_wire_mask(const nlohmann::json& mask, int width, int height);

}  // namespace kestrel
