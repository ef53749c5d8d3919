#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/tensor.hpp"

namespace cdet {

// Pixels flow through the system as (3,H,W) floats in [0,1]; PNG is the
// at-rest format.
inline void write_png(const std::string& path, const Tensor<float>& pixels) {
  if (pixels.ndim() != 3 || pixels.dim(0) != 3) throw DataError("write_png: expects (3,H,W)");
  const auto H = pixels.dim(1), W = pixels.dim(2);
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("write_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(W) * 3);
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(pixels.at(c, y, x), 0.f, 1.f);
        row[static_cast<std::size_t>(x * 3 + c)] =
            static_cast<png_byte>(std::lround(v * 255.f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Tensor<float> read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw DataError("read_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const auto W = static_cast<std::int64_t>(png_get_image_width(png, info));
  const auto H = static_cast<std::int64_t>(png_get_image_height(png, info));
  // Normalize any input to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Tensor<float> pixels({3, H, W});
  std::vector<png_byte> row(static_cast<std::size_t>(W) * 3);
  for (std::int64_t y = 0; y < H; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::int64_t x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        pixels.at(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)]) / 255.f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return pixels;
}

// Plain bilinear resize (align_corners=false), border-replicating.
inline Tensor<float> resize_bilinear(const Tensor<float>& src, std::int64_t out_h,
                                     std::int64_t out_w) {
  const std::int64_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
  Tensor<float> dst({C, out_h, out_w});
  const float sy = static_cast<float>(H) / static_cast<float>(out_h);
  const float sx = static_cast<float>(W) / static_cast<float>(out_w);
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const float fy = (static_cast<float>(oy) + 0.5f) * sy - 0.5f;
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
      const float dy = fy - static_cast<float>(y0);
      const std::int64_t ya = std::clamp<std::int64_t>(y0, 0, H - 1);
      const std::int64_t yb = std::clamp<std::int64_t>(y0 + 1, 0, H - 1);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const float fx = (static_cast<float>(ox) + 0.5f) * sx - 0.5f;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
        const float dx = fx - static_cast<float>(x0);
        const std::int64_t xa = std::clamp<std::int64_t>(x0, 0, W - 1);
        const std::int64_t xb = std::clamp<std::int64_t>(x0 + 1, 0, W - 1);
        const float top = src.at(c, ya, xa) * (1 - dx) + src.at(c, ya, xb) * dx;
        const float bot = src.at(c, yb, xa) * (1 - dx) + src.at(c, yb, xb) * dx;
        dst.at(c, oy, ox) = top * (1 - dy) + bot * dy;
      }
    }
  return dst;
}

// Aspect-preserving resize with centered gray padding. Maps boxes to model
// input coordinates and back.
struct LetterboxTransform {
  float scale = 1.f;
  float pad_x = 0.f;
  float pad_y = 0.f;
  int src_w = 0, src_h = 0;
  int dst_w = 0, dst_h = 0;

  BoundingBox apply(const BoundingBox& b) const {
    BoundingBox out = b;
    out.x_min = b.x_min * scale + pad_x;
    out.x_max = b.x_max * scale + pad_x;
    out.y_min = b.y_min * scale + pad_y;
    out.y_max = b.y_max * scale + pad_y;
    return out;
  }
  BoundingBox invert(const BoundingBox& b) const {
    BoundingBox out = b;
    out.x_min = (b.x_min - pad_x) / scale;
    out.x_max = (b.x_max - pad_x) / scale;
    out.y_min = (b.y_min - pad_y) / scale;
    out.y_max = (b.y_max - pad_y) / scale;
    return out.clipped(static_cast<float>(src_w), static_cast<float>(src_h));
  }
};

struct LetterboxResult {
  Tensor<float> pixels;  // (3, dst_h, dst_w)
  std::vector<BoundingBox> boxes;
  LetterboxTransform transform;
};

inline LetterboxResult letterbox(const ImageSample& sample, int dst_h, int dst_w,
                                 float fill = 0.5f) {
  const std::int64_t H = sample.pixels.dim(1), W = sample.pixels.dim(2);
  LetterboxResult res;
  res.transform.src_w = static_cast<int>(W);
  res.transform.src_h = static_cast<int>(H);
  res.transform.dst_w = dst_w;
  res.transform.dst_h = dst_h;
  const float scale = std::min(static_cast<float>(dst_w) / static_cast<float>(W),
                               static_cast<float>(dst_h) / static_cast<float>(H));
  const auto new_w = std::max<std::int64_t>(1, std::llround(static_cast<float>(W) * scale));
  const auto new_h = std::max<std::int64_t>(1, std::llround(static_cast<float>(H) * scale));
  const auto pad_x = (dst_w - new_w) / 2;
  const auto pad_y = (dst_h - new_h) / 2;
  res.transform.scale = scale;
  res.transform.pad_x = static_cast<float>(pad_x);
  res.transform.pad_y = static_cast<float>(pad_y);

  Tensor<float> resized = resize_bilinear(sample.pixels, new_h, new_w);
  res.pixels = Tensor<float>::full({3, dst_h, dst_w}, fill);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < new_h; ++y)
      for (std::int64_t x = 0; x < new_w; ++x)
        res.pixels.at(c, y + pad_y, x + pad_x) = resized.at(c, y, x);

  for (const auto& b : sample.boxes) {
    BoundingBox m = res.transform.apply(b).clipped(static_cast<float>(dst_w),
                                                   static_cast<float>(dst_h));
    if (m.valid()) res.boxes.push_back(m);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Annotation drawing: colored box outlines plus a small 5x7 bitmap label of
// "<class> <score>". Colors are fixed per class id so goldens are stable.
// ---------------------------------------------------------------------------

inline std::array<float, 3> class_color(int class_id) {
  static const std::array<std::array<float, 3>, 8> palette = {{{0.90f, 0.10f, 0.10f},
                                                               {0.10f, 0.70f, 0.95f},
                                                               {0.95f, 0.75f, 0.10f},
                                                               {0.20f, 0.85f, 0.25f},
                                                               {0.80f, 0.25f, 0.90f},
                                                               {0.95f, 0.45f, 0.10f},
                                                               {0.25f, 0.30f, 0.95f},
                                                               {0.70f, 0.70f, 0.70f}}};
  return palette[static_cast<std::size_t>(class_id) % palette.size()];
}

namespace detail {

// 5x7 glyphs for [a-z0-9. ], row bits packed LSB-left.
inline const std::uint8_t* glyph5x7(char ch) {
  static const std::uint8_t digits[11][7] = {
      {0x0E, 0x11, 0x19, 0x15, 0x13, 0x11, 0x0E},  // 0
      {0x04, 0x06, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
      {0x0E, 0x11, 0x10, 0x08, 0x04, 0x02, 0x1F},  // 2
      {0x0E, 0x11, 0x10, 0x0C, 0x10, 0x11, 0x0E},  // 3
      {0x08, 0x0C, 0x0A, 0x09, 0x1F, 0x08, 0x08},  // 4
      {0x1F, 0x01, 0x0F, 0x10, 0x10, 0x11, 0x0E},  // 5
      {0x0C, 0x02, 0x01, 0x0F, 0x11, 0x11, 0x0E},  // 6
      {0x1F, 0x10, 0x08, 0x04, 0x02, 0x02, 0x02},  // 7
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
      {0x0E, 0x11, 0x11, 0x1E, 0x10, 0x08, 0x06},  // 9
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x06, 0x06},  // .
  };
  static const std::uint8_t letters[26][7] = {
      {0x00, 0x00, 0x0E, 0x10, 0x1E, 0x11, 0x1E},  // a
      {0x01, 0x01, 0x0F, 0x11, 0x11, 0x11, 0x0F},  // b
      {0x00, 0x00, 0x0E, 0x01, 0x01, 0x11, 0x0E},  // c
      {0x10, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x1E},  // d
      {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x01, 0x0E},  // e
      {0x0C, 0x02, 0x07, 0x02, 0x02, 0x02, 0x02},  // f
      {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x0E},  // g
      {0x01, 0x01, 0x0F, 0x11, 0x11, 0x11, 0x11},  // h
      {0x04, 0x00, 0x06, 0x04, 0x04, 0x04, 0x0E},  // i
      {0x08, 0x00, 0x0C, 0x08, 0x08, 0x09, 0x06},  // j
      {0x01, 0x01, 0x09, 0x05, 0x03, 0x05, 0x09},  // k
      {0x06, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // l
      {0x00, 0x00, 0x0B, 0x15, 0x15, 0x15, 0x15},  // m
      {0x00, 0x00, 0x0F, 0x11, 0x11, 0x11, 0x11},  // n
      {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E},  // o
      {0x00, 0x00, 0x0F, 0x11, 0x0F, 0x01, 0x01},  // p
      {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10},  // q
      {0x00, 0x00, 0x0D, 0x03, 0x01, 0x01, 0x01},  // r
      {0x00, 0x00, 0x1E, 0x01, 0x0E, 0x10, 0x0F},  // s
      {0x02, 0x02, 0x07, 0x02, 0x02, 0x12, 0x0C},  // t
      {0x00, 0x00, 0x11, 0x11, 0x11, 0x19, 0x16},  // u
      {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04},  // v
      {0x00, 0x00, 0x15, 0x15, 0x15, 0x15, 0x0A},  // w
      {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11},  // x
      {0x00, 0x00, 0x11, 0x11, 0x1E, 0x10, 0x0E},  // y
      {0x00, 0x00, 0x1F, 0x08, 0x04, 0x02, 0x1F},  // z
  };
  static const std::uint8_t blank[7] = {0, 0, 0, 0, 0, 0, 0};
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch == '.') return digits[10];
  if (ch >= 'a' && ch <= 'z') return letters[ch - 'a'];
  return blank;
}

inline void put_pixel(Tensor<float>& img, std::int64_t y, std::int64_t x,
                      const std::array<float, 3>& color) {
  if (y < 0 || y >= img.dim(1) || x < 0 || x >= img.dim(2)) return;
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[static_cast<std::size_t>(c)];
}

}  // namespace detail

inline void draw_text(Tensor<float>& img, const std::string& text, std::int64_t y, std::int64_t x,
                      const std::array<float, 3>& color) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const std::uint8_t* glyph = detail::glyph5x7(text[i]);
    for (int gy = 0; gy < 7; ++gy)
      for (int gx = 0; gx < 5; ++gx)
        if (glyph[gy] & (1u << gx))
          detail::put_pixel(img, y + gy, x + static_cast<std::int64_t>(i) * 6 + gx, color);
  }
}

inline void draw_detection(Tensor<float>& img, const Detection& det) {
  const auto color = class_color(det.class_id);
  const auto x0 = static_cast<std::int64_t>(std::lround(det.box.x_min));
  const auto y0 = static_cast<std::int64_t>(std::lround(det.box.y_min));
  const auto x1 = static_cast<std::int64_t>(std::lround(det.box.x_max));
  const auto y1 = static_cast<std::int64_t>(std::lround(det.box.y_max));
  for (std::int64_t x = x0; x <= x1; ++x) {
    detail::put_pixel(img, y0, x, color);
    detail::put_pixel(img, y1, x, color);
  }
  for (std::int64_t y = y0; y <= y1; ++y) {
    detail::put_pixel(img, y, x0, color);
    detail::put_pixel(img, y, x1, color);
  }
  char score[16];
  std::snprintf(score, sizeof(score), "%.2f", det.score);
  const std::string label =
      class_names()[static_cast<std::size_t>(det.class_id)] + " " + score;
  draw_text(img, label, y0 - 9 < 0 ? y1 + 2 : y0 - 9, x0 + 1, color);
}

}  // namespace cdet
