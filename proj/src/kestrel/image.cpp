#include "kestrel/image.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"

namespace kestrel {

namespace {

cv::Mat as_mat(const Image& image) {
  // OpenCV never writes through this header; the const_cast only satisfies its API.
  return cv::Mat(image.height(), image.width(), CV_8UC3,
                 const_cast<std::uint8_t*>(image.bytes().data()));
}

Image from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                out.bytes().data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  }
  return out;
}

}  // namespace

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const noexcept {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set(int x, int y, Rgb c) noexcept {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) noexcept {
  x0 = std::clamp(x0, 0, width_);
  x1 = std::clamp(x1, 0, width_);
  y0 = std::clamp(y0, 0, height_);
  y1 = std::clamp(y1, 0, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

std::string Image::content_hash() const {
  std::vector<std::uint8_t> buf;
  const std::string header = std::to_string(width_) + "x" + std::to_string(height_) + "\n";
  buf.reserve(header.size() + data_.size());
  buf.insert(buf.end(), header.begin(), header.end());
  buf.insert(buf.end(), data_.begin(), data_.end());
  return sha256_hex(buf);
}

Image decode_image(std::span<const std::uint8_t> encoded) {
  if (encoded.empty()) throw Error(ErrorCode::ImageDecodeError, "empty image payload");
  const cv::Mat raw(1, static_cast<int>(encoded.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(encoded.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ImageDecodeError, e.what());
  }
  if (bgr.empty()) throw Error(ErrorCode::ImageDecodeError, "unsupported or corrupt image data");
  return from_bgr(bgr);
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ImageDecodeError, "cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::ImageDecodeError, path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "cannot encode an empty image");
  cv::Mat bgr;
  cv::cvtColor(as_mat(image), bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> out;
  cv::imencode(".png", bgr, out);
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image resize(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "resize to empty size");
  cv::Mat dst;
  cv::resize(as_mat(image), dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    std::copy_n(dst.ptr<std::uint8_t>(y), static_cast<std::size_t>(width) * 3,
                out.bytes().data() + static_cast<std::size_t>(y) * width * 3);
  }
  return out;
}

Image crop(const Image& image, int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, image.width());
  x1 = std::clamp(x1, 0, image.width());
  y0 = std::clamp(y0, 0, image.height());
  y1 = std::clamp(y1, 0, image.height());
  if (x1 <= x0 || y1 <= y0) throw Error(ErrorCode::InvalidArgument, "empty crop region");
  Image out(x1 - x0, y1 - y0);
  const std::size_t row = static_cast<std::size_t>(x1 - x0) * 3;
  for (int y = y0; y < y1; ++y) {
    const auto* src = image.bytes().data() + (static_cast<std::size_t>(y) * image.width() + x0) * 3;
    std::copy_n(src, row, out.bytes().data() + static_cast<std::size_t>(y - y0) * row);
  }
  return out;
}

std::string ImageRef::describe() const {
  if (const auto* p = std::get_if<std::filesystem::path>(&source_)) return p->string();
  if (const auto* b = std::get_if<std::vector<std::uint8_t>>(&source_)) {
    return "<" + std::to_string(b->size()) + " encoded bytes>";
  }
  if (const auto* d = std::get_if<ImagePtr>(&source_)) {
    return *d ? "<raster " + std::to_string((*d)->width()) + "x" + std::to_string((*d)->height()) + ">"
              : "<null raster>";
  }
  return "<none>";
}

ImagePtr ImageRef::load() const {
  if (const auto* p = std::get_if<std::filesystem::path>(&source_)) {
    return std::make_shared<const Image>(load_image(*p));
  }
  if (const auto* b = std::get_if<std::vector<std::uint8_t>>(&source_)) {
    return std::make_shared<const Image>(decode_image(*b));
  }
  if (const auto* d = std::get_if<ImagePtr>(&source_); d && *d) return *d;
  throw Error(ErrorCode::ImageDecodeError, "image reference is empty");
}

}  // namespace kestrel
