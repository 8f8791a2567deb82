#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "denseloc/features.hpp"
#include "denseloc/geometry.hpp"
#include "denseloc/image.hpp"
#include "denseloc/pose_solver.hpp"
#include "denseloc/scene.hpp"

namespace denseloc {

struct SynthesizedView {
  int width = 0;
  int height = 0;
  RgbImage rgb;
  std::vector<std::uint8_t> mask;  // 1 where at least one point landed
  std::vector<float> z;            // +inf where nothing landed

  bool valid(int x, int y) const { return mask[size_t(y) * width + x] != 0; }
  double valid_fraction() const;
};

struct VerificationOptions {
  int stride = 8;
  int patch = 16;
  double min_patch_valid = 0.5;     // fraction of a cell's patch that must be rendered
  double min_valid_fraction = 0.3;  // participating cells needed for a usable score
  double render_radius = 10.0;      // meters around the hypothesised camera center
  int max_splat = 5;
  DenseConfig descriptor;
};

/// Database entries whose camera center lies within `radius` of `center`.
std::vector<const RgbdEntry*> entries_within(const std::vector<RgbdEntry>& db, const Vector3d& center, double radius);

/// Z-buffered point splatting of every valid database pixel into the view (pose, K).
SynthesizedView synthesize_view(std::span<const RgbdEntry* const> entries, const Posed& pose, const Intrinsics& K,
                                int max_splat = 5);

/// Scanline linear inter/extrapolation of blank pixels (horizontal and vertical
/// passes averaged, repeated on the result until every pixel is defined).
RgbImage fill_holes(const SynthesizedView& view);

struct VerificationScore {
  double similarity = -std::numeric_limits<double>::infinity();
  double valid_fraction = 0.0;
  bool usable = false;
  int rows = 0, cols = 0;
  std::vector<float> cell_distance;  // NaN for non-participating cells
};

/// Negated median RootSIFT distance between the query and the hole-filled rendering.
VerificationScore densepv_score(const RgbImage& query, const SynthesizedView& view,
                                const VerificationOptions& opts = {});

struct ScoredHypothesis {
  PoseHypothesis hypothesis;
  VerificationScore score;
  int candidate_rank = 0;  // position after re-ranking, 1-based
};

struct SelectionResult {
  int best = -1;              // index into the scored list
  bool used_fallback = false;  // no usable score, picked by inlier count
};

/// Argmax similarity among usable scores (ties: more inliers, then lower rank);
/// falls back to the largest inlier count when nothing is usable.
SelectionResult select_best(const std::vector<ScoredHypothesis>& scored);

/// Per-cell descriptor distance painted as a heat map at the view resolution.
RgbImage error_heat_map(const VerificationScore& score, const VerificationOptions& opts, int width, int height);

}  // namespace denseloc
