#include <gtest/gtest.h>

#include <random>

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"
#include "kestrel/image.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

TEST(Hashing, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_NE(fnv1a64("a", 1), fnv1a64("a"));
}

TEST(Hashing, Base64RoundTripProperty) {
  std::mt19937 rng(43);
  const std::vector<std::uint8_t> foo = {'f', 'o', 'o', 'b'};
  EXPECT_EQ(base64_encode(foo), "Zm9vYg==");
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::uint8_t> data(testing::uniform_int(rng, 0, 64));
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
}

Image noise_image(std::mt19937& rng, int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                     static_cast<std::uint8_t>(rng())});
    }
  }
  return img;
}

TEST(Image, PngRoundTripIsLossless) {
  std::mt19937 rng(47);
  const auto img = noise_image(rng, 17, 9);
  const auto decoded = decode_image(encode_png(img));
  EXPECT_EQ(decoded, img);
  EXPECT_EQ(decoded.content_hash(), img.content_hash());

  testing::TempDir dir;
  write_png(img, dir / "x.png");
  EXPECT_EQ(load_image(dir / "x.png"), img);
  const ImageRef ref(dir / "x.png");
  EXPECT_TRUE(ref.has_path());
  EXPECT_EQ(*ref.load(), img);
}

TEST(Image, DecodeFailuresAreTyped) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4};
  try {
    decode_image(junk);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageDecodeError);
  }
  EXPECT_THROW(ImageRef().load(), Error);
  EXPECT_THROW(load_image("/nonexistent/image.png"), Error);
}

TEST(Image, HashSeesDimensionsAndPixels) {
  Image a(4, 2), b(2, 4), c(4, 2);
  EXPECT_NE(a.content_hash(), b.content_hash());
  EXPECT_EQ(a.content_hash(), c.content_hash());
  c.set(3, 1, {0, 0, 0});
  EXPECT_NE(a.content_hash(), c.content_hash());
}

TEST(Image, CropAndResize) {
  Image img(10, 8, {255, 255, 255});
  img.fill_rect(2, 2, 5, 4, {255, 0, 0});
  const auto c = crop(img, 2, 2, 5, 4);
  EXPECT_EQ(c.width(), 3);
  EXPECT_EQ(c.height(), 2);
  EXPECT_EQ(c.at(0, 0), (Rgb{255, 0, 0}));
  EXPECT_EQ(crop(img, -5, -5, 100, 100), img);
  EXPECT_THROW(crop(img, 5, 5, 5, 6), Error);
  const auto r = resize(Image(4, 4, {10, 20, 30}), 9, 7);
  EXPECT_EQ(r.width(), 9);
  EXPECT_EQ(r.height(), 7);
  EXPECT_EQ(r.at(8, 6), (Rgb{10, 20, 30}));
}

TEST(Image, RefDescriptions) {
  auto img = std::make_shared<const Image>(3, 2);
  EXPECT_EQ(ImageRef(img).describe(), "<raster 3x2>");
  EXPECT_EQ(ImageRef(std::filesystem::path("a/b.jpg")).describe(), "a/b.jpg");
}

}  // namespace
}  // namespace kestrel
