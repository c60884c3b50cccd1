#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace kestrel {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Packed 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {255, 255, 255});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const noexcept;
  void set(int x, int y, Rgb c) noexcept;
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) noexcept;

  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  /// SHA-256 over dimensions and pixels, hex encoded.
  std::string content_hash() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

using ImagePtr = std::shared_ptr<const Image>;

Image decode_image(std::span<const std::uint8_t> encoded);
Image load_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);

/// Bilinear resize.
Image resize(const Image& image, int width, int height);
Image crop(const Image& image, int x0, int y0, int x1, int y1);

/// Opaque image handle: a file path, encoded bytes, or an already decoded raster.
class ImageRef {
 public:
  ImageRef() = default;
  explicit ImageRef(std::filesystem::path path) : source_(std::move(path)) {}
  explicit ImageRef(std::vector<std::uint8_t> encoded) : source_(std::move(encoded)) {}
  explicit ImageRef(ImagePtr decoded) : source_(std::move(decoded)) {}

  bool has_path() const noexcept { return std::holds_alternative<std::filesystem::path>(source_); }
  const std::filesystem::path* path() const noexcept {
    return std::get_if<std::filesystem::path>(&source_);
  }
  std::string describe() const;

  /// Decodes on demand; throws Error(ImageDecodeError).
  ImagePtr load() const;

 private:
  std::variant<std::monostate, std::filesystem::path, std::vector<std::uint8_t>, ImagePtr> source_;
};

}  // namespace kestrel
