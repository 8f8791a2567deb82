#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace denseloc {

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(size_t(w) * h * 3, fill) {}

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t* at(int x, int y) { return &data[(size_t(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const { return &data[(size_t(y) * width + x) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

/// Single-channel float image, row-major (rows = height).
using GrayImage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Luminance in [0, 255].
GrayImage to_gray(const RgbImage& img);

/// Per-pixel depth in meters, 0 marks an invalid pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(size_t(w) * h, 0.0f) {}

  float at(int x, int y) const { return values[size_t(y) * width + x]; }
  float& at(int x, int y) { return values[size_t(y) * width + x]; }
  bool valid(int x, int y) const {
    const float d = at(x, y);
    return d > 0.0f && d < std::numeric_limits<float>::infinity();
  }
  bool operator==(const DepthMap&) const = default;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RgbImage read_png(const std::string& path);
void write_png(const std::string& path, const RgbImage& img);

/// "IDPT" depth file: magic, u32 width, u32 height, float32 row-major, little-endian.
DepthMap read_depth(const std::string& path);
void write_depth(const std::string& path, const DepthMap& depth);

/// Bilinear color sample at continuous coordinates (pixel centers at integers),
/// clamped at the borders. `wrap_x` wraps horizontally instead.
Eigen::Vector3f sample_bilinear(const RgbImage& img, double x, double y, bool wrap_x = false);

/// Area-averaged downscale so that the longer side is at most `max_side`.
/// Returns the input unchanged when it already fits; `scale` receives new/old size.
RgbImage downscale_to_fit(const RgbImage& img, int max_side, double* scale = nullptr);

}  // namespace denseloc
