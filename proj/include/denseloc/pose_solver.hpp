#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "denseloc/geometry.hpp"

namespace denseloc {

/// Query pixel paired with the world point seen at the matched database pixel.
struct Correspondence2D3D {
  Vector2d pixel;
  Vector3d point;
};

class DegenerateConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Smallest height of the triangle spanned by three points.
double min_triangle_height(const Vector3d& a, const Vector3d& b, const Vector3d& c);

/// Every real perspective-three-point solution (Grunert's quartic), polished and
/// checked by reprojection. Throws DegenerateConfiguration for collinear points.
std::vector<Posed> solve_p3p(const Correspondence2D3D& c0, const Correspondence2D3D& c1,
                             const Correspondence2D3D& c2, const Intrinsics& K);

/// d(residual)/d(axis-angle, translation) for the update R <- exp(w) R, t <- t + dt. Returns nullopt for points behind the camera.
std::optional<Eigen::Matrix<double, 2, 6>> reprojection_jacobian(const Posed& pose, const Vector3d& X,
                                                                 const Intrinsics& K);

/// Pose perturbed by the 6-vector (axis-angle, translation) in the same parametrisation.
Posed apply_update(const Posed& pose, const Eigen::Matrix<double, 6, 1>& delta);

struct RefineOptions {
  double huber_delta = 5.0;  // pixels
  int max_iterations = 100;
  double min_step = 1e-10;
  double min_cost_decrease = 1e-12;
};

struct RefineResult {
  Posed pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Sum of Huber-robustified squared reprojection errors.
double robust_cost(const Posed& pose, const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                   double huber_delta);

/// Levenberg-Marquardt over rotation and translation; never increases the cost.
RefineResult refine_pose(const Posed& initial, const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                         const RefineOptions& opts = {});

struct RansacOptions {
  double threshold_px = 10.0;
  double confidence = 0.999;
  int max_iterations = 5000;
  int min_inliers = 12;
};

struct PoseHypothesis {
  std::string db_id;
  Posed pose;
  std::vector<int> inliers;
  int inlier_count = 0;
  double mean_error_px = 0.0;
  int iterations = 0;
};

/// Reprojection error in pixels, +inf behind the camera.
double reprojection_error(const Posed& pose, const Correspondence2D3D& c, const Intrinsics& K);

/// P3P inside LO-RANSAC (local optimisation = refine_pose on the inliers of every
/// new best model). Throws std::invalid_argument on fewer than three
/// correspondences; returns nullopt when no model reaches the inlier floor.
std::optional<PoseHypothesis> p3p_lo_ransac(const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                                            const RansacOptions& opts, std::uint64_t seed);

}  // namespace denseloc
