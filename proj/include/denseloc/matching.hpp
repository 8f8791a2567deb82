#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "denseloc/features.hpp"
#include "denseloc/geometry.hpp"

namespace denseloc {

struct CellMatch {
  Vector2d query_px;
  Vector2d db_px;
  Level level = Level::coarse;
  double distance = 0.0;
  int query_cell = -1;
  int db_cell = -1;

  bool operator==(const CellMatch&) const = default;
};

/// Mutually nearest cells between two grids; nearest-neighbour ties go to the
/// lowest linear cell index. Empty cells never take part.
std::vector<CellMatch> mutual_nn(const FeatureGrid& query, const FeatureGrid& db);
std::vector<CellMatch> mutual_nn(const BinaryFeatureGrid& query, const BinaryFeatureGrid& db);

/// Mutual nearest neighbours restricted to the given (ascending) cell subsets.
std::vector<CellMatch> mutual_nn_subset(const FeatureGrid& query, const FeatureGrid& db,
                                        const std::vector<int>& query_cells, const std::vector<int>& db_cells);
std::vector<CellMatch> mutual_nn_subset(const BinaryFeatureGrid& query, const BinaryFeatureGrid& db,
                                        const std::vector<int>& query_cells, const std::vector<int>& db_cells);

/// Fine cells whose centers fall inside the central stride square of coarse cell
/// `coarse_cell`, grown by `dilation` coarse cells on each side. Ascending order.
std::vector<int> fine_window(const GridGeometry& coarse, const GridGeometry& fine, int coarse_cell, int dilation);

/// Fine mutual-NN search inside each coarse match's windows (query footprint vs db
/// footprint dilated by one coarse cell), merged with one match per query cell.
std::vector<CellMatch> refine_fine(const std::vector<CellMatch>& coarse_matches, const FeatureGrid& coarse_query,
                                   const FeatureGrid& coarse_db, const FeatureGrid& fine_query,
                                   const FeatureGrid& fine_db);
std::vector<CellMatch> refine_fine(const std::vector<CellMatch>& coarse_matches, const BinaryFeatureGrid& coarse_query,
                                   const BinaryFeatureGrid& coarse_db, const BinaryFeatureGrid& fine_query,
                                   const BinaryFeatureGrid& fine_db);

/// Normalised 4+-point DLT; throws std::invalid_argument on fewer than four points.
Matrix3d fit_homography(const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst);

/// max(|dst - H src|, |src - H^-1 dst|) in pixels.
double symmetric_transfer_error(const Matrix3d& H, const Matrix3d& H_inv, const Vector2d& src, const Vector2d& dst);

struct HomographyOptions {
  double threshold_px = 8.0;
  int min_inliers = 12;
  double confidence = 0.999;
  int max_iterations = 2000;
  int max_homographies = 2;
};

struct CandidateVerdict {
  std::string id;
  int retrieval_rank = 0;  // 1-based
  std::vector<CellMatch> matches;          // fine matches that were verified
  std::vector<int> inlier_homography;      // per match: -1 outlier, else homography index
  std::vector<CellMatch> inliers;
  std::vector<Matrix3d> homographies;
  int score = 0;

  int homography_count() const { return int(homographies.size()); }
};

/// Up to two sequential RANSAC homographies; score = total inliers.
CandidateVerdict verify_homographies(const std::vector<CellMatch>& matches, const HomographyOptions& opts,
                                     std::uint64_t seed);

/// Indices into `verdicts` ordered by descending score, ties by ascending retrieval rank.
std::vector<int> rerank(const std::vector<CandidateVerdict>& verdicts, int keep = 10);

/// Text dump: "qx qy dx dy dist inlierFlag" per match.
void write_match_dump(std::ostream& out, const CandidateVerdict& verdict);

}  // namespace denseloc
