#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "denseloc/image.hpp"

namespace denseloc {

enum class Level : std::uint8_t { coarse = 0, fine = 1 };

/// Column-major dim x cells matrix; column i holds the descriptor of cell i.
using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

/// Grid placement shared by float and binary grids. Cell (r, c) covers pixels
/// [c*stride, c*stride + patch) x [r*stride, r*stride + patch); linear index r*cols + c.
struct GridGeometry {
  Level level = Level::fine;
  int stride = 4;
  int patch = 24;
  int rows = 0;
  int cols = 0;
  int dim = 128;
  int image_width = 0;
  int image_height = 0;

  int cells() const { return rows * cols; }
  int row_of(int cell) const { return cell / cols; }
  int col_of(int cell) const { return cell % cols; }
  double center_x(int cell) const { return col_of(cell) * stride + 0.5 * (patch - 1); }
  double center_y(int cell) const { return row_of(cell) * stride + 0.5 * (patch - 1); }
  Eigen::Vector2d center(int cell) const { return {center_x(cell), center_y(cell)}; }
  bool same_layout(const GridGeometry& o) const {
    return stride == o.stride && patch == o.patch && rows == o.rows && cols == o.cols && dim == o.dim;
  }
  bool operator==(const GridGeometry&) const = default;

  /// rows = floor((height - patch) / stride) + 1, likewise cols.
  static GridGeometry for_image(Level level, int stride, int patch, int dim, int width, int height);
};

struct FeatureGrid {
  GridGeometry geometry;
  DescriptorMatrix descriptors;

  Eigen::Ref<const Eigen::VectorXf> descriptor(int cell) const { return descriptors.col(cell); }
  bool is_empty_cell(int cell) const { return descriptors.col(cell).isZero(0.0f); }
};

struct FeaturePyramid {
  FeatureGrid coarse;
  FeatureGrid fine;
};

/// Bit-packed descriptors, dim/8 bytes per cell, bit d in byte d/8 at position d%8.
struct BinaryFeatureGrid {
  GridGeometry geometry;
  std::vector<std::uint8_t> bits;
  std::vector<float> thresholds;

  int bytes_per_cell() const { return geometry.dim / 8; }
  std::span<const std::uint8_t> descriptor(int cell) const {
    return {bits.data() + size_t(cell) * bytes_per_cell(), size_t(bytes_per_cell())};
  }
  /// Cells whose bit-vector is all zero carry no evidence and are treated as empty.
  bool is_empty_cell(int cell) const;
};

struct BinaryFeaturePyramid {
  BinaryFeatureGrid coarse;
  BinaryFeatureGrid fine;
};

struct LevelSpec {
  int stride = 4;
  int patch = 24;
};

struct DenseConfig {
  LevelSpec coarse{16, 64};
  LevelSpec fine{4, 24};
  double smoothing_sigma = 1.0;
  // Cells whose mean gradient magnitude (gray levels per pixel) falls below this
  // carry no descriptor.
  double min_mean_gradient = 0.5;
};

/// Dense 4x4x8 gradient-orientation histograms, RootSIFT-normalised.
FeatureGrid extract_grid(const GrayImage& gray, Level level, LevelSpec spec, const DenseConfig& config = {});
FeaturePyramid extract_dense(const RgbImage& rgb, const DenseConfig& config = {});

/// L1-normalise, square root, L2-normalise. Zero stays zero.
Eigen::VectorXf rootsift(const Eigen::Ref<const Eigen::VectorXf>& histogram);

/// Per-dimension median over the sample columns.
std::vector<float> fit_binarizer(const DescriptorMatrix& sample, int min_samples = 1000);

BinaryFeatureGrid binarize(const FeatureGrid& grid, std::span<const float> thresholds);

float l2_distance(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b);
int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Storage per cell descriptor in bytes.
inline size_t float_descriptor_bytes(int dim) { return size_t(dim) * sizeof(float); }
inline size_t binary_descriptor_bytes(int dim) { return size_t(dim) / 8; }

/// "DFMP" float feature-map file with two levels (coarse first).
void write_feature_maps(const std::string& path, const FeaturePyramid& pyramid);
FeaturePyramid read_feature_maps(const std::string& path);
/// "DFMB" bit-packed feature-map file.
void write_binary_feature_maps(const std::string& path, const BinaryFeaturePyramid& pyramid);
/// Thresholds are not stored in DFMB; pass the ones from the matching "DFTH" files.
BinaryFeaturePyramid read_binary_feature_maps(const std::string& path, std::span<const float> coarse_thresholds,
                                              std::span<const float> fine_thresholds);

void write_thresholds(const std::string& path, std::span<const float> thresholds);
std::vector<float> read_thresholds(const std::string& path);

}  // namespace denseloc
