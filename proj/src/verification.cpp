#include "denseloc/verification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace denseloc {

double SynthesizedView::valid_fraction() const {
  if (mask.empty()) return 0.0;
  return double(std::count(mask.begin(), mask.end(), std::uint8_t(1))) / double(mask.size());
}

std::vector<const RgbdEntry*> entries_within(const std::vector<RgbdEntry>& db, const Vector3d& center, double radius) {
  std::vector<const RgbdEntry*> out;
  for (const auto& e : db)
    if ((e.pose.center() - center).norm() <= radius) out.push_back(&e);
  return out;
}

SynthesizedView synthesize_view(std::span<const RgbdEntry* const> entries, const Posed& pose, const Intrinsics& K,
                                int max_splat) {
  if (entries.empty()) throw std::invalid_argument("synthesize_view: no database entries to render");
  if (!pose.is_valid(1e-6)) throw std::invalid_argument("synthesize_view: invalid pose");
  SynthesizedView view;
  view.width = K.width;
  view.height = K.height;
  view.rgb = RgbImage(K.width, K.height);
  view.mask.assign(size_t(K.width) * K.height, 0);
  view.z.assign(size_t(K.width) * K.height, std::numeric_limits<float>::infinity());

  for (const RgbdEntry* e : entries) {
    // Source camera frame straight to target camera frame.
    const Matrix3d M = pose.R * e->pose.R.transpose();
    const Vector3d m = pose.t - M * e->pose.t;
    const double inv_fs = 1.0 / e->K.f;
    const Vector3d step = M.col(0) * inv_fs;
    for (int y = 0; y < e->depth.height; ++y) {
      // Target-frame direction of the source ray through (0, y); advances by `step` per pixel.
      Vector3d dir = M * Vector3d(-e->K.cx * inv_fs, (y - e->K.cy) * inv_fs, 1.0) - step;
      for (int x = 0; x < e->depth.width; ++x) {
        dir += step;
        if (!e->depth.valid(x, y)) continue;
        const double zs = e->depth.at(x, y);
        const Vector3d p = zs * dir + m;
        if (!(p.z() > kBehindCameraDepth)) continue;
        const double u = K.f * p.x() / p.z() + K.cx;
        const double v = K.f * p.y() / p.z() + K.cy;
        // Point spacing at the source is zs / fs meters.
        const int s = std::clamp(int(std::lround(K.f * zs * inv_fs / p.z())), 1, max_splat);
        const int x0 = int(std::floor(u - 0.5 * (s - 1) + 0.5));
        const int y0 = int(std::floor(v - 0.5 * (s - 1) + 0.5));
        if (x0 + s <= 0 || y0 + s <= 0 || x0 >= K.width || y0 >= K.height) continue;
        const float z = float(p.z());
        const std::uint8_t* color = e->rgb.at(x, y);
        for (int yy = std::max(y0, 0); yy < std::min(y0 + s, K.height); ++yy) {
          for (int xx = std::max(x0, 0); xx < std::min(x0 + s, K.width); ++xx) {
            const size_t i = size_t(yy) * K.width + xx;
            if (z < view.z[i]) {
              view.z[i] = z;
              view.mask[i] = 1;
              std::copy(color, color + 3, view.rgb.at(xx, yy));
            }
          }
        }
      }
    }
  }
  return view;
}

namespace {

// One scanline pass over `n` samples at stride `step`. Writes into `out`/`defined`.
void fill_line(const std::vector<Eigen::Vector3f>& src, const std::vector<std::uint8_t>& known, size_t start,
               size_t step, int n, std::vector<Eigen::Vector3f>& out, std::vector<std::uint8_t>& defined) {
  int prev = -1;
  for (int i = 0; i <= n; ++i) {
    const bool is_known = i < n && known[start + size_t(i) * step];
    if (i < n && !is_known) continue;
    // Blank run (prev, i).
    if (prev < 0 && i == n) return;  // no known sample on this line
    for (int j = prev + 1; j < i; ++j) {
      Eigen::Vector3f c;
      if (prev < 0) {
        c = src[start + size_t(i) * step];
      } else if (i == n) {
        c = src[start + size_t(prev) * step];
      } else {
        const float a = float(j - prev) / float(i - prev);
        c = (1 - a) * src[start + size_t(prev) * step] + a * src[start + size_t(i) * step];
      }
      out[start + size_t(j) * step] = c;
      defined[start + size_t(j) * step] = 1;
    }
    if (i < n) {
      out[start + size_t(i) * step] = src[start + size_t(i) * step];
      defined[start + size_t(i) * step] = 1;
    }
    prev = i;
  }
}

}  // namespace

RgbImage fill_holes(const SynthesizedView& view) {
  const int W = view.width, H = view.height;
  const size_t N = size_t(W) * H;
  if (std::find(view.mask.begin(), view.mask.end(), std::uint8_t(1)) == view.mask.end())
    throw std::invalid_argument("fill_holes: view has no rendered pixels");

  std::vector<Eigen::Vector3f> cur(N);
  std::vector<std::uint8_t> known(view.mask.begin(), view.mask.end());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto* p = view.rgb.at(x, y);
      cur[size_t(y) * W + x] = Eigen::Vector3f(p[0], p[1], p[2]);
    }

  while (std::find(known.begin(), known.end(), std::uint8_t(0)) != known.end()) {
    std::vector<Eigen::Vector3f> horiz(N), vert(N);
    std::vector<std::uint8_t> hdef(N, 0), vdef(N, 0);
    for (int y = 0; y < H; ++y) fill_line(cur, known, size_t(y) * W, 1, W, horiz, hdef);
    for (int x = 0; x < W; ++x) fill_line(cur, known, size_t(x), size_t(W), H, vert, vdef);
    std::vector<std::uint8_t> next(N, 0);
    for (size_t i = 0; i < N; ++i) {
      if (known[i]) {
        next[i] = 1;
      } else if (hdef[i] && vdef[i]) {
        cur[i] = 0.5f * (horiz[i] + vert[i]);
        next[i] = 1;
      } else if (hdef[i] || vdef[i]) {
        cur[i] = hdef[i] ? horiz[i] : vert[i];
        next[i] = 1;
      }
    }
    known.swap(next);
  }

  RgbImage out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const size_t i = size_t(y) * W + x;
      if (view.mask[i]) {
        std::copy(view.rgb.at(x, y), view.rgb.at(x, y) + 3, out.at(x, y));
      } else {
        for (int c = 0; c < 3; ++c) out.at(x, y)[c] = std::uint8_t(std::lround(std::clamp(cur[i][c], 0.0f, 255.0f)));
      }
    }
  return out;
}

VerificationScore densepv_score(const RgbImage& query, const SynthesizedView& view, const VerificationOptions& opts) {
  if (query.width != view.width || query.height != view.height)
    throw std::invalid_argument("densepv_score: query and rendering differ in size");
  VerificationScore score;
  const LevelSpec spec{opts.stride, opts.patch};
  const GridGeometry g = GridGeometry::for_image(Level::fine, spec.stride, spec.patch, 128, view.width, view.height);
  score.rows = g.rows;
  score.cols = g.cols;
  score.cell_distance.assign(size_t(g.cells()), std::numeric_limits<float>::quiet_NaN());
  if (std::find(view.mask.begin(), view.mask.end(), std::uint8_t(1)) == view.mask.end()) return score;

  // Integral image of the mask.
  const int W = view.width, H = view.height;
  std::vector<int> integral(size_t(W + 1) * (H + 1), 0);
  for (int y = 0; y < H; ++y) {
    int row = 0;
    for (int x = 0; x < W; ++x) {
      row += view.mask[size_t(y) * W + x];
      integral[size_t(y + 1) * (W + 1) + x + 1] = integral[size_t(y) * (W + 1) + x + 1] + row;
    }
  }
  std::vector<int> participating;
  const int area = spec.patch * spec.patch;
  for (int cell = 0; cell < g.cells(); ++cell) {
    const int x0 = g.col_of(cell) * g.stride, y0 = g.row_of(cell) * g.stride;
    const int x1 = x0 + g.patch, y1 = y0 + g.patch;
    const int covered = integral[size_t(y1) * (W + 1) + x1] - integral[size_t(y0) * (W + 1) + x1] -
                        integral[size_t(y1) * (W + 1) + x0] + integral[size_t(y0) * (W + 1) + x0];
    if (covered >= opts.min_patch_valid * area) participating.push_back(cell);
  }
  score.valid_fraction = double(participating.size()) / double(g.cells());
  score.usable = score.valid_fraction >= opts.min_valid_fraction && !participating.empty();
  if (!score.usable) return score;

  const FeatureGrid fq = extract_grid(to_gray(query), Level::fine, spec, opts.descriptor);
  const FeatureGrid fr = extract_grid(to_gray(fill_holes(view)), Level::fine, spec, opts.descriptor);
  std::vector<float> d;
  d.reserve(participating.size());
  for (int cell : participating) {
    const float dist = l2_distance(fq.descriptor(cell), fr.descriptor(cell));
    score.cell_distance[size_t(cell)] = dist;
    d.push_back(dist);
  }
  // Lower middle for even counts.
  const auto mid = d.begin() + std::ptrdiff_t((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  score.similarity = -double(*mid);
  return score;
}

SelectionResult select_best(const std::vector<ScoredHypothesis>& scored) {
  if (scored.empty()) throw std::invalid_argument("select_best: no hypotheses");
  SelectionResult res;
  for (int i = 0; i < int(scored.size()); ++i) {
    const auto& s = scored[size_t(i)];
    if (!s.score.usable) continue;
    if (res.best < 0) {
      res.best = i;
      continue;
    }
    const auto& b = scored[size_t(res.best)];
    const bool better =
        s.score.similarity != b.score.similarity ? s.score.similarity > b.score.similarity
        : s.hypothesis.inlier_count != b.hypothesis.inlier_count ? s.hypothesis.inlier_count > b.hypothesis.inlier_count
                                                                  : s.candidate_rank < b.candidate_rank;
    if (better) res.best = i;
  }
  if (res.best >= 0) return res;
  res.used_fallback = true;
  res.best = 0;
  for (int i = 1; i < int(scored.size()); ++i) {
    const auto& s = scored[size_t(i)];
    const auto& b = scored[size_t(res.best)];
    if (s.hypothesis.inlier_count > b.hypothesis.inlier_count ||
        (s.hypothesis.inlier_count == b.hypothesis.inlier_count && s.candidate_rank < b.candidate_rank))
      res.best = i;
  }
  return res;
}

RgbImage error_heat_map(const VerificationScore& score, const VerificationOptions& opts, int width, int height) {
  RgbImage img(width, height);
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (float d : score.cell_distance)
    if (!std::isnan(d)) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  if (!(hi >= lo) || score.cols == 0) return img;
  const float range = hi > lo ? hi - lo : 1.0f;
  const double off = 0.5 * (opts.patch - 1);
  for (int y = 0; y < height; ++y) {
    const int r = std::clamp(int(std::lround((y - off) / opts.stride)), 0, score.rows - 1);
    for (int x = 0; x < width; ++x) {
      const int c = std::clamp(int(std::lround((x - off) / opts.stride)), 0, score.cols - 1);
      const float d = score.cell_distance[size_t(r) * score.cols + c];
      if (std::isnan(d)) continue;
      const float t = (d - lo) / range;
      // Blue (agreeing) to red (disagreeing) through green.
      std::uint8_t* p = img.at(x, y);
      p[0] = std::uint8_t(std::lround(255 * std::clamp(2 * t - 1, 0.0f, 1.0f)));
      p[1] = std::uint8_t(std::lround(255 * (1 - std::abs(2 * t - 1))));
      p[2] = std::uint8_t(std::lround(255 * std::clamp(1 - 2 * t, 0.0f, 1.0f)));
    }
  }
  return img;
}

}  // namespace denseloc
