#include "denseloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace denseloc {

std::vector<double> default_distance_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 8; ++i) t.push_back(0.25 * i);
  return t;
}

RateCurve localized_rate(const std::vector<PoseError>& errors, const std::vector<double>& thresholds,
                         double angle_gate) {
  if (errors.empty()) throw std::invalid_argument("localized_rate: no error records");
  RateCurve curve;
  curve.thresholds = thresholds;
  std::sort(curve.thresholds.begin(), curve.thresholds.end());
  curve.angle_gate = angle_gate;
  for (double d : curve.thresholds) {
    const auto hits = std::count_if(errors.begin(), errors.end(),
                                    [&](const PoseError& e) { return e.positional <= d && e.angular <= angle_gate; });
    curve.rates.push_back(100.0 * double(hits) / double(errors.size()));
  }
  return curve;
}

PoseError median_errors(const std::vector<PoseError>& errors) {
  if (errors.empty()) throw std::invalid_argument("median_errors: no error records");
  std::vector<double> pos, ang;
  for (const auto& e : errors) {
    pos.push_back(e.positional);
    ang.push_back(e.angular);
  }
  const auto lower_middle = [](std::vector<double>& v) {
    const auto mid = v.begin() + std::ptrdiff_t((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  return {lower_middle(pos), lower_middle(ang)};
}

std::string format_rate_table(const std::vector<RateCurve>& curves, const std::vector<std::string>& column_names) {
  if (curves.empty()) return {};
  std::ostringstream out;
  char buf[64];
  if (!column_names.empty()) {
    out << '~';
    for (const auto& name : column_names) out << " & " << name;
    out << " \\\\\n";
  }
  for (size_t i = 0; i < curves.front().thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2fm", curves.front().thresholds[i]);
    out << ' ' << buf;
    for (const auto& c : curves) {
      std::snprintf(buf, sizeof(buf), "%.1f", c.rates.at(i));
      out << " & " << buf;
    }
    out << " \\\\\n";
  }
  return out.str();
}

std::string format_rate_csv(const RateCurve& curve) {
  std::ostringstream out;
  out << "threshold_m,angle_gate_deg,rate_percent\n";
  char buf[96];
  for (size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.6f\n", curve.thresholds[i], curve.angle_gate, curve.rates[i]);
    out << buf;
  }
  return out.str();
}

std::vector<std::uint8_t> detect_edges(const GrayImage& gray, double percentile) {
  const int H = int(gray.rows()), W = int(gray.cols());
  std::vector<float> mag(size_t(W) * H, 0.0f);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float gx = 0.5f * (gray(y, std::min(x + 1, W - 1)) - gray(y, std::max(x - 1, 0)));
      const float gy = 0.5f * (gray(std::min(y + 1, H - 1), x) - gray(std::max(y - 1, 0), x));
      mag[size_t(y) * W + x] = std::sqrt(gx * gx + gy * gy);
    }
  std::vector<float> sorted = mag;
  const size_t k = std::min(sorted.size() - 1, size_t(std::floor(percentile * double(sorted.size()))));
  std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(k), sorted.end());
  const float thr = sorted[k];
  std::vector<std::uint8_t> edges(mag.size(), 0);
  for (size_t i = 0; i < mag.size(); ++i) edges[i] = mag[i] >= thr && mag[i] > 0 ? 1 : 0;
  return edges;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void dt1d(const std::vector<double>& f, std::vector<double>& d, int n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<int> v(static_cast<size_t>(n));
  std::vector<double> z(size_t(n) + 1);
  const auto meet = [&](int q, int p) {
    return ((f[size_t(q)] + double(q) * q) - (f[size_t(p)] + double(p) * p)) / (2.0 * (q - p));
  };
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[size_t(q)] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = meet(q, v[size_t(k)]);
    while (s <= z[size_t(k)]) {
      --k;
      s = meet(q, v[size_t(k)]);
    }
    ++k;
    v[size_t(k)] = q;
    z[size_t(k)] = s;
    z[size_t(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.begin() + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[size_t(j) + 1] < q) ++j;
    const int p = v[size_t(j)];
    d[size_t(q)] = double(q - p) * (q - p) + f[size_t(p)];
  }
}

}  // namespace

std::vector<float> distance_transform(const std::vector<std::uint8_t>& mask, int width, int height) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(size_t(width) * height);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = mask[i] ? 0.0 : inf;
  const int n = std::max(width, height);
  std::vector<double> f(static_cast<size_t>(n)), d(static_cast<size_t>(n));
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) f[size_t(y)] = grid[size_t(y) * width + x];
    dt1d(f, d, height);
    for (int y = 0; y < height; ++y) grid[size_t(y) * width + x] = d[size_t(y)];
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) f[size_t(x)] = grid[size_t(y) * width + x];
    dt1d(f, d, width);
    for (int x = 0; x < width; ++x) grid[size_t(y) * width + x] = d[size_t(x)];
  }
  std::vector<float> out(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) out[i] = float(std::sqrt(grid[i]));
  return out;
}

EdgeCheckResult edge_reprojection_check(const std::vector<std::uint8_t>& edges, int width, int height,
                                        const std::vector<Vector2d>& projected, double gross_cutoff_px,
                                        double accept_px) {
  std::vector<const Vector2d*> inside;
  for (const auto& p : projected)
    if (p.allFinite() && p.x() >= -0.5 && p.y() >= -0.5 && p.x() < width - 0.5 && p.y() < height - 0.5)
      inside.push_back(&p);
  if (inside.empty()) throw std::invalid_argument("edge_reprojection_check: no projected point inside the image");
  const std::vector<float> dt = distance_transform(edges, width, height);
  std::vector<double> kept;
  EdgeCheckResult res;
  for (const Vector2d* p : inside) {
    const int x = std::clamp(int(std::lround(p->x())), 0, width - 1);
    const int y = std::clamp(int(std::lround(p->y())), 0, height - 1);
    const double d = dt[size_t(y) * width + x];
    if (d > gross_cutoff_px) {
      ++res.dropped;
      continue;
    }
    kept.push_back(d);
  }
  res.kept = int(kept.size());
  if (kept.empty()) return res;
  const auto mid = kept.begin() + std::ptrdiff_t((kept.size() - 1) / 2);
  std::nth_element(kept.begin(), mid, kept.end());
  res.median_px = *mid;
  res.accepted = *mid < accept_px;
  return res;
}

EdgeCheckResult edge_reprojection_check(const RgbImage& query, const std::vector<Vector2d>& projected,
                                        double gross_cutoff_px, double accept_px) {
  const auto edges = detect_edges(to_gray(query));
  return edge_reprojection_check(edges, query.width, query.height, projected, gross_cutoff_px, accept_px);
}

}  // namespace denseloc
