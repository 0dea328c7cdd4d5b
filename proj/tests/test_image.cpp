#include "apvit/image.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"

using namespace apvit;

namespace {

ImageU8 random_u8(int size, int channels, unsigned seed) {
  ImageU8 img = ImageU8::make(size, size, channels);
  std::mt19937_64 rng(seed);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

}  // namespace

TEST_CASE("pnm write and read round trip, grayscale and color") {
  testutil::TmpDir tmp("pnm");
  ImageU8 g = ImageU8::make(3, 5, 1);
  for (size_t i = 0; i < g.data.size(); ++i)
    g.data[i] = static_cast<std::uint8_t>(i * 7);
  write_pnm(g, tmp / "g.pgm");
  ImageU8 g2 = read_pnm(tmp / "g.pgm");
  CHECK(g2.h == 3);
  CHECK(g2.w == 5);
  CHECK(g2.c == 1);
  CHECK(g2.data == g.data);

  ImageU8 rgb = ImageU8::make(4, 2, 3);
  for (size_t i = 0; i < rgb.data.size(); ++i)
    rgb.data[i] = static_cast<std::uint8_t>(255 - i);
  write_pnm(rgb, tmp / "c.ppm");
  ImageU8 rgb2 = read_pnm(tmp / "c.ppm");
  CHECK(rgb2.c == 3);
  CHECK(rgb2.data == rgb.data);

  CHECK_THROWS_AS(read_pnm(tmp / "missing.pgm"), DataError);
}

TEST_CASE("bilinear resize matches hand-computed half-pixel samples") {
  // 2x2 upsampled to 4x4; output centers map back via (o + 0.5) * 2/4 - 0.5.
  ImageU8 src = ImageU8::make(2, 2, 1);
  src.at(0, 0) = 0;
  src.at(0, 1) = 200;
  src.at(1, 0) = 100;
  src.at(1, 1) = 40;
  ImageU8 out = resize_bilinear(src, 4, 4);
  auto expect = [&](int oy, int ox) {
    double fy = (oy + 0.5) * 0.5 - 0.5, fx = (ox + 0.5) * 0.5 - 0.5;
    int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
    double wy = fy - y0, wx = fx - x0;
    auto v = [&](int y, int x) {
      return static_cast<double>(src.at(std::clamp(y, 0, 1), std::clamp(x, 0, 1)));
    };
    double b = (1 - wy) * ((1 - wx) * v(y0, x0) + wx * v(y0, x0 + 1)) +
               wy * ((1 - wx) * v(y0 + 1, x0) + wx * v(y0 + 1, x0 + 1));
    return static_cast<std::uint8_t>(std::lround(b));
  };
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(y, x) == expect(y, x));
  // Corner pixels replicate the source corners.
  CHECK(out.at(0, 0) == 0);
  CHECK(out.at(3, 3) == 40);
  // Dead-center pixel blends all four neighbors at weight 1/4.
  CHECK(static_cast<int>(out.at(1, 1)) ==
        static_cast<int>(std::lround((0 + 200 + 100 + 40) / 4.0)));
}

TEST_CASE("identity resize is exact") {
  ImageU8 src = random_u8(8, 1, 42);
  ImageU8 out = resize_bilinear(src, 8, 8);
  CHECK(out.data == src.data);
}

TEST_CASE("rotate90 quarter turns compose to identity") {
  ImageU8 src = random_u8(6, 1, 7);
  ImageU8 r = src;
  for (int i = 0; i < 4; ++i) r = rotate90(r, 1);
  CHECK(r.data == src.data);
  ImageU8 direct = rotate90(src, 3);
  ImageU8 stepped = rotate90(rotate90(rotate90(src, 1), 1), 1);
  CHECK(direct.data == stepped.data);
  CHECK(rotate90(src, 0).data == src.data);
  CHECK(rotate90(src, -1).data == rotate90(src, 3).data);
}

TEST_CASE("center crop takes the middle window") {
  ImageU8 src = ImageU8::make(6, 6, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) src.at(y, x) = static_cast<std::uint8_t>(y * 6 + x);
  ImageU8 out = center_crop(src, 2);
  CHECK(out.h == 2);
  CHECK(out.w == 2);
  CHECK(out.at(0, 0) == 2 * 6 + 2);
  CHECK(out.at(1, 1) == 3 * 6 + 3);
}

TEST_CASE("small-angle rotation keeps size; zero angle is identity") {
  ImageU8 src = random_u8(16, 1, 3);
  ImageU8 out = rotate_angle(src, 5.0);
  CHECK(out.h == 16);
  CHECK(out.w == 16);
  ImageU8 zero = rotate_angle(src, 0.0);
  CHECK(zero.data == src.data);
}

TEST_CASE("gray u8 conversion clamps and scales") {
  MatD m(1, 3);
  m << -0.5, 0.5, 1.5;
  ImageU8 img = gray_to_u8(m);
  CHECK(img.data[0] == 0);
  CHECK(img.data[1] == 128);
  CHECK(img.data[2] == 255);
  MatD back = u8_to_gray(img);
  CHECK(back(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("heatmap overlay keeps dimensions and blends toward red") {
  ImageU8 base = ImageU8::make(4, 4, 1, 100);
  MatD heat = MatD::Zero(4, 4);
  heat(1, 2) = 1.0;
  ImageU8 out = overlay_heatmap(base, heat, 0.5);
  CHECK(out.c == 3);
  CHECK(out.h == 4);
  // Untouched pixel stays gray, hot pixel moves red above green/blue.
  CHECK(out.at(0, 0, 0) == out.at(0, 0, 1));
  CHECK(out.at(1, 2, 0) > out.at(1, 2, 2));
}
