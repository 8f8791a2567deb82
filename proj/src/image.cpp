#include "denseloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "binary_io.hpp"

namespace denseloc {

GrayImage to_gray(const RgbImage& img) {
  GrayImage g(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto* p = img.at(x, y);
      g(y, x) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
  return g;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RgbImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("'" + path + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path + "': corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img = RgbImage(int(png_get_image_width(png, info)), int(png_get_image_height(png, info)));
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.at(0, y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const RgbImage& img) {
  if (img.empty()) throw IoError("refusing to write empty image '" + path + "'");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, const_cast<png_bytep>(img.at(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

DepthMap read_depth(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("IDPT");
  const auto w = in.u32();
  const auto h = in.u32();
  if (w == 0 || h == 0 || w > 65536 || h > 65536) throw IoError("'" + path + "': bad depth dimensions");
  DepthMap d{int(w), int(h)};
  in.raw(d.values.data(), d.values.size() * sizeof(float));
  in.expect_end();
  for (auto& v : d.values)
    if (!(v > 0.0f) || !std::isfinite(v)) v = 0.0f;
  return d;
}

void write_depth(const std::string& path, const DepthMap& depth) {
  detail::BinaryWriter out(path);
  out.magic("IDPT");
  out.u32(std::uint32_t(depth.width));
  out.u32(std::uint32_t(depth.height));
  out.raw(depth.values.data(), depth.values.size() * sizeof(float));
}

Eigen::Vector3f sample_bilinear(const RgbImage& img, double x, double y, bool wrap_x) {
  const int W = img.width, H = img.height;
  y = std::clamp(y, 0.0, double(H - 1));
  if (!wrap_x) x = std::clamp(x, 0.0, double(W - 1));
  const int x0 = int(std::floor(x));
  const int y0 = std::min(int(std::floor(y)), H - 1);
  const int y1 = std::min(y0 + 1, H - 1);
  const float ax = float(x - x0), ay = float(y - y0);
  auto col = [&](int xi) {
    if (wrap_x) return ((xi % W) + W) % W;
    return std::min(xi, W - 1);
  };
  const int xa = col(x0), xb = col(x0 + 1);
  Eigen::Vector3f out;
  for (int c = 0; c < 3; ++c) {
    const float top = (1 - ax) * img.at(xa, y0)[c] + ax * img.at(xb, y0)[c];
    const float bot = (1 - ax) * img.at(xa, y1)[c] + ax * img.at(xb, y1)[c];
    out[c] = (1 - ay) * top + ay * bot;
  }
  return out;
}

RgbImage downscale_to_fit(const RgbImage& img, int max_side, double* scale) {
  const int longer = std::max(img.width, img.height);
  if (longer <= max_side) {
    if (scale) *scale = 1.0;
    return img;
  }
  const double s = double(max_side) / longer;
  const int W = std::max(1, int(std::lround(img.width * s)));
  const int H = std::max(1, int(std::lround(img.height * s)));
  if (scale) *scale = s;
  RgbImage out(W, H);
  const double sx = double(img.width) / W, sy = double(img.height) / H;
  for (int y = 0; y < H; ++y) {
    const int y0 = int(std::floor(y * sy)), y1 = std::max(y0 + 1, int(std::floor((y + 1) * sy)));
    for (int x = 0; x < W; ++x) {
      const int x0 = int(std::floor(x * sx)), x1 = std::max(x0 + 1, int(std::floor((x + 1) * sx)));
      double acc[3] = {0, 0, 0};
      int n = 0;
      for (int yy = y0; yy < std::min(y1, img.height); ++yy)
        for (int xx = x0; xx < std::min(x1, img.width); ++xx, ++n)
          for (int c = 0; c < 3; ++c) acc[c] += img.at(xx, yy)[c];
      for (int c = 0; c < 3; ++c) out.at(x, y)[c] = std::uint8_t(std::lround(acc[c] / std::max(n, 1)));
    }
  }
  return out;
}

}  // namespace denseloc
