#pragma once

#include <optional>
#include <string>
#include <vector>

#include "denseloc/geometry.hpp"
#include "denseloc/image.hpp"

namespace denseloc {

struct RateCurve {
  std::vector<double> thresholds;  // meters
  double angle_gate = 10.0;        // degrees
  std::vector<double> rates;       // percent
};

std::vector<double> default_distance_thresholds();  // 0.25 .. 2.0 step 0.25

/// rate(d) = 100 * |{positional <= d and angular <= gate}| / total.
RateCurve localized_rate(const std::vector<PoseError>& errors, const std::vector<double>& thresholds,
                         double angle_gate = 10.0);

/// Componentwise medians; the lower middle for even counts.
PoseError median_errors(const std::vector<PoseError>& errors);

/// One row per threshold: "0.25m & 38.9 \\" (LaTeX tabular body, rates to one decimal).
/// Multiple curves become extra columns in the given order.
std::string format_rate_table(const std::vector<RateCurve>& curves, const std::vector<std::string>& column_names = {});

std::string format_rate_csv(const RateCurve& curve);

struct EdgeCheckResult {
  std::optional<double> median_px;  // nullopt when every point was dropped
  bool accepted = false;
  int kept = 0;
  int dropped = 0;
};

/// Pixels whose gradient magnitude reaches the 90th percentile.
std::vector<std::uint8_t> detect_edges(const GrayImage& gray, double percentile = 0.9);

/// Exact Euclidean distance (pixels) from every pixel to the nearest set pixel.
std::vector<float> distance_transform(const std::vector<std::uint8_t>& mask, int width, int height);

/// Median distance from projected points to the nearest query edge, after
/// dropping distances above `gross_cutoff_px`; accepted iff median < `accept_px`.
EdgeCheckResult edge_reprojection_check(const RgbImage& query, const std::vector<Vector2d>& projected,
                                        double gross_cutoff_px = 20.0, double accept_px = 5.0);
EdgeCheckResult edge_reprojection_check(const std::vector<std::uint8_t>& edges, int width, int height,
                                        const std::vector<Vector2d>& projected, double gross_cutoff_px = 20.0,
                                        double accept_px = 5.0);

}  // namespace denseloc
