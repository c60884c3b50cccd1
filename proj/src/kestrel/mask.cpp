#include "kestrel/mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgproc.hpp>

#include "kestrel/error.hpp"

namespace kestrel {

void Mask::fill_box(const BBox& b) noexcept {
  const int x0 = std::max(0, b.x0), y0 = std::max(0, b.y0);
  const int x1 = std::min(width_, b.x1), y1 = std::min(height_, b.y1);
  for (int y = y0; y < y1; ++y) {
    std::fill_n(bits_.begin() + static_cast<std::ptrdiff_t>(y) * width_ + x0, std::max(0, x1 - x0), 1);
  }
}

long long Mask::area() const noexcept {
  return std::count(bits_.begin(), bits_.end(), 1);
}

BBox mask_to_bbox(const Mask& mask) {
  int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max();
  int x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    const auto* row = mask.bits().data() + static_cast<std::size_t>(y) * mask.width();
    const auto* first = std::find(row, row + mask.width(), 1);
    if (first == row + mask.width()) continue;
    const auto last = std::find(std::make_reverse_iterator(row + mask.width()),
                                 std::make_reverse_iterator(row), 1);
    x0 = std::min(x0, static_cast<int>(first - row));
    x1 = std::max(x1, static_cast<int>(last.base() - row));
    y0 = std::min(y0, y);
    y1 = y + 1;
  }
  if (x1 < 0) throw Error(ErrorCode::EmptyMask, "mask has no set pixels");
  return {x0, y0, x1, y1};
}

nlohmann::json encode_rle(const Mask& mask) {
  std::vector<long long> counts;
  std::uint8_t cur = 0;
  long long run = 0;
  for (auto b : mask.bits()) {
    if (b != cur) {
      counts.push_back(run);
      run = 0;
      cur = b;
    }
    ++run;
  }
  counts.push_back(run);
  return {{"size", {mask.height(), mask.width()}}, {"counts", counts}};
}

Mask decode_rle(const nlohmann::json& data, int width, int height) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::MalformedResponse, "rle mask: " + what); };
  if (!data.is_object() || !data.contains("size") || !data.contains("counts")) {
    throw bad("expected {\"size\":[H,W],\"counts\":[...]}");
  }
  const auto& size = data["size"];
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() || !size[1].is_number_integer()) {
    throw bad("size must be [H,W]");
  }
  if (size[0].get<long long>() != height || size[1].get<long long>() != width) {
    throw bad("size [" + size[0].dump() + "," + size[1].dump() + "] does not match image " +
              std::to_string(height) + "x" + std::to_string(width));
  }
  const auto& counts = data["counts"];
  if (!counts.is_array()) throw bad("counts must be an array");
  Mask mask(width, height);
  const long long total = static_cast<long long>(width) * height;
  long long pos = 0;
  bool fg = false;
  for (const auto& c : counts) {
    if (!c.is_number_integer() || c.get<long long>() < 0) throw bad("counts must be non-negative integers");
    const long long n = c.get<long long>();
    if (n > total - pos) throw bad("runs exceed image size");
    if (fg) {
      for (long long i = pos; i < pos + n; ++i) {
        mask.set(static_cast<int>(i % width), static_cast<int>(i / width));
      }
    }
    pos += n;
    fg = !fg;
  }
  if (pos != total) throw bad("runs cover " + std::to_string(pos) + " of " + std::to_string(total) + " pixels");
  return mask;
}

namespace {

std::vector<cv::Point> ring_points(const nlohmann::json& ring) {
  std::vector<cv::Point> pts;
  auto coord = [](const nlohmann::json& v) {
    if (!v.is_number()) throw Error(ErrorCode::MalformedResponse, "polygon mask: non-numeric coordinate");
    return static_cast<int>(std::lround(v.get<double>()));
  };
  if (!ring.empty() && ring[0].is_array()) {
    for (const auto& p : ring) {
      if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::MalformedResponse, "polygon mask: points must be [x,y]");
      pts.emplace_back(coord(p[0]), coord(p[1]));
    }
  } else {
    if (ring.size() % 2 != 0) throw Error(ErrorCode::MalformedResponse, "polygon mask: odd coordinate count");
    for (std::size_t i = 0; i < ring.size(); i += 2) pts.emplace_back(coord(ring[i]), coord(ring[i + 1]));
  }
  if (pts.size() < 3) throw Error(ErrorCode::MalformedResponse, "polygon mask: fewer than 3 points");
  return pts;
}

}  // namespace

Mask rasterize_polygon(const nlohmann::json& data, int width, int height) {
  if (!data.is_array() || data.empty()) throw Error(ErrorCode::MalformedResponse, "polygon mask: expected array");
  std::vector<std::vector<cv::Point>> rings;
  const bool multi = data[0].is_array() && !data[0].empty() && data[0][0].is_array();
  if (multi) {
    for (const auto& r : data) rings.push_back(ring_points(r));
  } else {
    rings.push_back(ring_points(data));
  }
  cv::Mat m = cv::Mat::zeros(height, width, CV_8UC1);
  cv::fillPoly(m, rings, cv::Scalar(1));
  Mask mask(width, height);
  for (int y = 0; y < height; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) {
      if (row[x]) mask.set(x, y);
    }
  }
  return mask;
}

Mask decode_wire_mask(const nlohmann::json& mask, int width, int height) {
  if (!mask.is_object() || !mask.contains("format") || !mask.contains("data") || !mask["format"].is_string()) {
    throw Error(ErrorCode::MalformedResponse, "mask must be {\"format\":..., \"data\":...}");
  }
  const auto format = mask["format"].get<std::string>();
  if (format == "rle") return decode_rle(mask["data"], width, height);
  if (format == "polygon") return rasterize_polygon(mask["data"], width, height);
  throw Error(ErrorCode::MalformedResponse, "unknown mask format '" + format + "'");
}

}  // namespace kestrel
