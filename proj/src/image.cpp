#include "apvit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace apvit {

namespace {

int read_pnm_int(std::istream& in) {
  // Skips whitespace and '#' comments, per the PNM family grammar.
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF) throw DataError("truncated PNM header");
  int value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    ch = in.get();
  }
  return value;
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  char p, kind;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6'))
    throw DataError("unsupported image format (want P5/P6 PNM): " + path);
  ImageU8 img;
  img.c = kind == '5' ? 1 : 3;
  img.w = read_pnm_int(in);
  img.h = read_pnm_int(in);
  int maxval = read_pnm_int(in);
  if (maxval != 255) throw DataError("only 8-bit PNM supported: " + path);
  img.data.resize(static_cast<size_t>(img.h) * img.w * img.c);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw DataError("truncated image payload: " + path);
  return img;
}

void write_pnm(const ImageU8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path);
  out << (img.c == 1 ? "P5" : "P6") << "\n"
      << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw DataError("short write: " + path);
}

ImageU8 center_crop(const ImageU8& img, int size) {
  if (size <= 0) size = std::min(img.h, img.w);
  size = std::min({size, img.h, img.w});
  int y0 = (img.h - size) / 2;
  int x0 = (img.w - size) / 2;
  ImageU8 out = ImageU8::make(size, size, img.c);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        out.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
  return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (img.h == out_h && img.w == out_w) return img;
  ImageU8 out = ImageU8::make(out_h, out_w, img.c);
  double sy = static_cast<double>(img.h) / out_h;
  double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::clamp(y0, 0, img.h - 1);
    int yb = std::clamp(y0 + 1, 0, img.h - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::clamp(x0, 0, img.w - 1);
      int xb = std::clamp(x0 + 1, 0, img.w - 1);
      for (int ch = 0; ch < img.c; ++ch) {
        double v = (1 - wy) * ((1 - wx) * img.at(ya, xa, ch) + wx * img.at(ya, xb, ch)) +
                   wy * ((1 - wx) * img.at(yb, xa, ch) + wx * img.at(yb, xb, ch));
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

ImageU8 rotate90(const ImageU8& img, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  ImageU8 out = (k == 2) ? ImageU8::make(img.h, img.w, img.c)
                         : ImageU8::make(img.w, img.h, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        std::uint8_t v = img.at(y, x, ch);
        if (k == 1)
          out.at(x, img.h - 1 - y, ch) = v;
        else if (k == 2)
          out.at(img.h - 1 - y, img.w - 1 - x, ch) = v;
        else
          out.at(img.w - 1 - x, y, ch) = v;
      }
  return out;
}

ImageU8 rotate_angle(const ImageU8& img, double degrees, std::uint8_t fill) {
  double rad = degrees * M_PI / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
  ImageU8 out = ImageU8::make(img.h, img.w, img.c, fill);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      // inverse mapping: output pixel pulled from rotated source location
      double dy = y - cy, dx = x - cx;
      double sy = cs * dy + sn * dx + cy;
      double sx = -sn * dy + cs * dx + cx;
      int y0 = static_cast<int>(std::floor(sy));
      int x0 = static_cast<int>(std::floor(sx));
      if (y0 < 0 || x0 < 0 || y0 + 1 >= img.h || x0 + 1 >= img.w) continue;
      double wy = sy - y0, wx = sx - x0;
      for (int ch = 0; ch < img.c; ++ch) {
        double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x0 + 1, ch)) +
                   wy * ((1 - wx) * img.at(y0 + 1, x0, ch) + wx * img.at(y0 + 1, x0 + 1, ch));
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(clamp(v, 0.0, 255.0)));
      }
    }
  return out;
}

ImageU8 gray_to_u8(const MatD& m) {
  ImageU8 img = ImageU8::make(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      img.at(y, x) = static_cast<std::uint8_t>(std::lround(clamp(m(y, x), 0.0, 1.0) * 255.0));
  return img;
}

MatD u8_to_gray(const ImageU8& img) {
  MatD m(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double v = 0;
      for (int ch = 0; ch < img.c; ++ch) v += img.at(y, x, ch);
      m(y, x) = v / (img.c * 255.0);
    }
  return m;
}

ImageU8 overlay_heatmap(const ImageU8& base, const MatD& heat, double alpha) {
  if (heat.rows() != base.h || heat.cols() != base.w)
    throw DataError("overlay: heatmap shape mismatch");
  ImageU8 out = ImageU8::make(base.h, base.w, 3);
  for (int y = 0; y < base.h; ++y)
    for (int x = 0; x < base.w; ++x) {
      double g = 0;
      for (int ch = 0; ch < base.c; ++ch) g += base.at(y, x, ch);
      g /= base.c;
      double t = clamp(heat(y, x), 0.0, 1.0);
      // blue -> green -> red ramp
      double r = clamp(2.0 * t - 1.0, 0.0, 1.0) + clamp(1.0 - std::abs(2.0 * t - 0.5) * 2.0, 0.0, 1.0) * 0.2;
      double gr = clamp(1.0 - std::abs(2.0 * t - 1.0), 0.0, 1.0);
      double b = clamp(1.0 - 2.0 * t, 0.0, 1.0);
      double rr = (1 - alpha) * g + alpha * 255.0 * r;
      double gg = (1 - alpha) * g + alpha * 255.0 * gr;
      double bb = (1 - alpha) * g + alpha * 255.0 * b;
      out.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(clamp(rr, 0.0, 255.0)));
      out.at(y, x, 1) = static_cast<std::uint8_t>(std::lround(clamp(gg, 0.0, 255.0)));
      out.at(y, x, 2) = static_cast<std::uint8_t>(std::lround(clamp(bb, 0.0, 255.0)));
    }
  return out;
}

}  // namespace apvit
