#include "denseloc/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "binary_io.hpp"

namespace denseloc {

namespace {

constexpr int kSpatialBins = 4;
constexpr int kOrientationBins = 8;
constexpr int kDim = kSpatialBins * kSpatialBins * kOrientationBins;

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0) return img;
  const int radius = std::max(1, int(std::ceil(3 * sigma)));
  std::vector<float> k(2 * radius + 1);
  float sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = float(std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : k) v /= sum;
  const int H = int(img.rows()), W = int(img.cols());
  GrayImage tmp(H, W), out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img(y, std::clamp(x + i, 0, W - 1));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(std::clamp(y + i, 0, H - 1), x);
      out(y, x) = acc;
    }
  return out;
}

// Summed-area tables of orientation-binned gradient magnitude, one per bin,
// each (H+1) x (W+1) row-major.
struct OrientationIntegrals {
  int W = 0, H = 0;
  std::array<std::vector<double>, kOrientationBins> tables;

  double box(int bin, int x0, int y0, int x1, int y1) const {  // [x0,x1) x [y0,y1)
    const auto& t = tables[bin];
    const size_t s = size_t(W) + 1;
    return t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
  }
};

OrientationIntegrals orientation_integrals(const GrayImage& img) {
  const int H = int(img.rows()), W = int(img.cols());
  OrientationIntegrals oi;
  oi.W = W;
  oi.H = H;
  std::array<std::vector<float>, kOrientationBins> channels;
  for (auto& c : channels) c.assign(size_t(W) * H, 0.0f);
  const double bin_width = 2.0 * M_PI / kOrientationBins;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float gx = 0.5f * (img(y, std::min(x + 1, W - 1)) - img(y, std::max(x - 1, 0)));
      const float gy = 0.5f * (img(std::min(y + 1, H - 1), x) - img(std::max(y - 1, 0), x));
      const float mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0f) continue;
      double theta = std::atan2(double(gy), double(gx));
      if (theta < 0) theta += 2 * M_PI;
      const double b = theta / bin_width;
      const int b0 = int(std::floor(b)) % kOrientationBins;
      const float w = float(b - std::floor(b));
      channels[b0][size_t(y) * W + x] += mag * (1 - w);
      channels[(b0 + 1) % kOrientationBins][size_t(y) * W + x] += mag * w;
    }
  const size_t s = size_t(W) + 1;
  for (int b = 0; b < kOrientationBins; ++b) {
    auto& t = oi.tables[b];
    t.assign(s * (H + 1), 0.0);
    for (int y = 0; y < H; ++y) {
      double row = 0;
      for (int x = 0; x < W; ++x) {
        row += channels[b][size_t(y) * W + x];
        t[(y + 1) * s + x + 1] = t[y * s + x + 1] + row;
      }
    }
  }
  return oi;
}

}  // namespace

GridGeometry GridGeometry::for_image(Level level, int stride, int patch, int dim, int width, int height) {
  if (stride <= 0 || patch <= 0) throw std::invalid_argument("grid stride and patch must be positive");
  if (width < patch || height < patch)
    throw std::invalid_argument("image " + std::to_string(width) + "x" + std::to_string(height) +
                                " is smaller than one " + std::to_string(patch) + " px patch");
  GridGeometry g;
  g.level = level;
  g.stride = stride;
  g.patch = patch;
  g.dim = dim;
  g.rows = (height - patch) / stride + 1;
  g.cols = (width - patch) / stride + 1;
  g.image_width = width;
  g.image_height = height;
  return g;
}

bool BinaryFeatureGrid::is_empty_cell(int cell) const {
  for (auto b : descriptor(cell))
    if (b) return false;
  return true;
}

Eigen::VectorXf rootsift(const Eigen::Ref<const Eigen::VectorXf>& histogram) {
  if ((histogram.array() < 0).any()) throw std::invalid_argument("rootsift: negative histogram component");
  const float l1 = histogram.sum();
  if (!(l1 > 0)) return Eigen::VectorXf::Zero(histogram.size());
  Eigen::VectorXf v = (histogram / l1).cwiseSqrt();
  const float n = v.norm();
  return n > 0 ? Eigen::VectorXf(v / n) : Eigen::VectorXf::Zero(histogram.size());
}

FeatureGrid extract_grid(const GrayImage& gray, Level level, LevelSpec spec, const DenseConfig& config) {
  if (spec.patch % kSpatialBins != 0) throw std::invalid_argument("patch size must be divisible by 4");
  FeatureGrid grid;
  grid.geometry = GridGeometry::for_image(level, spec.stride, spec.patch, kDim, int(gray.cols()), int(gray.rows()));
  const GridGeometry& g = grid.geometry;
  const OrientationIntegrals oi = orientation_integrals(gaussian_blur(gray, config.smoothing_sigma));
  const int bin = spec.patch / kSpatialBins;
  const double min_mass = config.min_mean_gradient * spec.patch * spec.patch;

  grid.descriptors.setZero(kDim, g.cells());
  Eigen::VectorXf hist(kDim);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const int x0 = c * g.stride, y0 = r * g.stride;
      double mass = 0;
      for (int by = 0; by < kSpatialBins; ++by)
        for (int bx = 0; bx < kSpatialBins; ++bx)
          for (int o = 0; o < kOrientationBins; ++o) {
            const int xa = x0 + bx * bin, ya = y0 + by * bin;
            const double v = std::max(0.0, oi.box(o, xa, ya, xa + bin, ya + bin));
            hist[(by * kSpatialBins + bx) * kOrientationBins + o] = float(v);
            mass += v;
          }
      if (mass <= min_mass || mass <= 0) continue;
      grid.descriptors.col(r * g.cols + c) = rootsift(hist);
    }
  }
  return grid;
}

FeaturePyramid extract_dense(const RgbImage& rgb, const DenseConfig& config) {
  if (config.coarse.stride % config.fine.stride != 0)
    throw std::invalid_argument("coarse stride must be a multiple of the fine stride");
  const GrayImage gray = to_gray(rgb);
  return {extract_grid(gray, Level::coarse, config.coarse, config),
          extract_grid(gray, Level::fine, config.fine, config)};
}

std::vector<float> fit_binarizer(const DescriptorMatrix& sample, int min_samples) {
  if (sample.cols() == 0) throw std::invalid_argument("fit_binarizer: empty sample");
  if (sample.cols() < min_samples)
    throw std::invalid_argument("fit_binarizer: need at least " + std::to_string(min_samples) + " samples, got " +
                                std::to_string(sample.cols()));
  const Eigen::Index n = sample.cols();
  std::vector<float> thresholds(static_cast<size_t>(sample.rows()));
  std::vector<float> values(static_cast<size_t>(n));
  for (Eigen::Index d = 0; d < sample.rows(); ++d) {
    for (Eigen::Index i = 0; i < n; ++i) values[size_t(i)] = sample(d, i);
    const auto mid = values.begin() + n / 2;
    std::nth_element(values.begin(), mid, values.end());
    float m = *mid;
    if (n % 2 == 0) {
      const float lower = *std::max_element(values.begin(), mid);
      m = 0.5f * (lower + m);
    }
    thresholds[size_t(d)] = m;
  }
  return thresholds;
}

BinaryFeatureGrid binarize(const FeatureGrid& grid, std::span<const float> thresholds) {
  const int dim = grid.geometry.dim;
  if (int(thresholds.size()) != dim) throw std::invalid_argument("binarize: threshold/descriptor dimension mismatch");
  if (dim % 8 != 0) throw std::invalid_argument("binarize: dimension must be divisible by 8");
  BinaryFeatureGrid out;
  out.geometry = grid.geometry;
  out.thresholds.assign(thresholds.begin(), thresholds.end());
  out.bits.assign(size_t(grid.geometry.cells()) * (dim / 8), 0);
  for (int cell = 0; cell < grid.geometry.cells(); ++cell) {
    std::uint8_t* dst = out.bits.data() + size_t(cell) * (dim / 8);
    for (int d = 0; d < dim; ++d)
      if (grid.descriptors(d, cell) > thresholds[size_t(d)]) dst[d / 8] |= std::uint8_t(1u << (d % 8));
  }
  return out;
}

float l2_distance(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("descriptor dimension mismatch");
  return (a - b).norm();
}

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("descriptor dimension mismatch");
  int d = 0;
  size_t i = 0;
  for (; i + 8 <= a.size(); i += 8) {
    std::uint64_t x, y;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    d += std::popcount(x ^ y);
  }
  for (; i < a.size(); ++i) d += std::popcount(unsigned(a[i] ^ b[i]));
  return d;
}

namespace {

void write_level_header(detail::BinaryWriter& out, const GridGeometry& g) {
  out.u32(std::uint32_t(g.stride));
  out.u32(std::uint32_t(g.patch));
  out.u32(std::uint32_t(g.rows));
  out.u32(std::uint32_t(g.cols));
  out.u32(std::uint32_t(g.dim));
}

GridGeometry read_level_header(detail::BinaryReader& in, Level level, bool binary) {
  GridGeometry g;
  g.level = level;
  g.stride = int(in.u32());
  g.patch = int(in.u32());
  g.rows = int(in.u32());
  g.cols = int(in.u32());
  g.dim = int(in.u32());
  const auto bad = [&](const char* what) { throw IoError("'" + in.path() + "': " + what); };
  if (g.stride <= 0 || g.patch <= 0 || g.rows <= 0 || g.cols <= 0 || g.dim <= 0) bad("non-positive grid field");
  if (g.rows > 1 << 16 || g.cols > 1 << 16 || g.dim > 1 << 16) bad("grid field out of range");
  if (binary && g.dim % 8 != 0) bad("binary dimension not divisible by 8");
  // The format does not record the source size; use the smallest consistent one.
  g.image_width = (g.cols - 1) * g.stride + g.patch;
  g.image_height = (g.rows - 1) * g.stride + g.patch;
  return g;
}

void check_two_levels(detail::BinaryReader& in) {
  const auto levels = in.u8();
  if (levels != 2) throw IoError("'" + in.path() + "': expected 2 levels, found " + std::to_string(levels));
}

}  // namespace

void write_feature_maps(const std::string& path, const FeaturePyramid& pyramid) {
  detail::BinaryWriter out(path);
  out.magic("DFMP");
  out.u8(2);
  for (const FeatureGrid* g : {&pyramid.coarse, &pyramid.fine}) {
    write_level_header(out, g->geometry);
    // Column-major dim x cells is exactly row-major cells x dim.
    out.raw(g->descriptors.data(), size_t(g->descriptors.size()) * sizeof(float));
  }
}

FeaturePyramid read_feature_maps(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("DFMP");
  check_two_levels(in);
  FeaturePyramid p;
  for (auto [grid, level] : {std::pair{&p.coarse, Level::coarse}, std::pair{&p.fine, Level::fine}}) {
    grid->geometry = read_level_header(in, level, false);
    grid->descriptors.resize(grid->geometry.dim, grid->geometry.cells());
    in.raw(grid->descriptors.data(), size_t(grid->descriptors.size()) * sizeof(float));
  }
  in.expect_end();
  if (p.coarse.geometry.dim != p.fine.geometry.dim || p.coarse.geometry.stride % p.fine.geometry.stride != 0)
    throw IoError("'" + path + "': inconsistent levels");
  return p;
}

void write_binary_feature_maps(const std::string& path, const BinaryFeaturePyramid& pyramid) {
  detail::BinaryWriter out(path);
  out.magic("DFMB");
  out.u8(2);
  for (const BinaryFeatureGrid* g : {&pyramid.coarse, &pyramid.fine}) {
    write_level_header(out, g->geometry);
    out.raw(g->bits.data(), g->bits.size());
  }
}

BinaryFeaturePyramid read_binary_feature_maps(const std::string& path, std::span<const float> coarse_thresholds,
                                              std::span<const float> fine_thresholds) {
  detail::BinaryReader in(path);
  in.expect_magic("DFMB");
  check_two_levels(in);
  BinaryFeaturePyramid p;
  for (auto [grid, level, thr] : {std::tuple{&p.coarse, Level::coarse, coarse_thresholds},
                                  std::tuple{&p.fine, Level::fine, fine_thresholds}}) {
    grid->geometry = read_level_header(in, level, true);
    grid->bits.resize(size_t(grid->geometry.cells()) * (grid->geometry.dim / 8));
    in.raw(grid->bits.data(), grid->bits.size());
    if (!thr.empty() && int(thr.size()) != grid->geometry.dim)
      throw IoError("'" + path + "': threshold dimension mismatch");
    grid->thresholds.assign(thr.begin(), thr.end());
  }
  in.expect_end();
  return p;
}

void write_thresholds(const std::string& path, std::span<const float> thresholds) {
  detail::BinaryWriter out(path);
  out.magic("DFTH");
  out.u32(std::uint32_t(thresholds.size()));
  out.raw(thresholds.data(), thresholds.size() * sizeof(float));
}

std::vector<float> read_thresholds(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("DFTH");
  const auto dim = in.u32();
  if (dim == 0 || dim > (1u << 16)) throw IoError("'" + path + "': bad threshold dimension");
  std::vector<float> t(dim);
  in.raw(t.data(), t.size() * sizeof(float));
  in.expect_end();
  return t;
}

}  // namespace denseloc
