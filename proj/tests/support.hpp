#pragma once

#include <algorithm>
#include <random>

#include "denseloc/geometry.hpp"
#include "denseloc/pose_solver.hpp"
#include "denseloc/synthetic.hpp"

namespace denseloc::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix3d random_rotation(std::mt19937_64& rng, double max_angle_deg = 180.0) {
  Vector3d axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  if (axis.norm() < 1e-3) axis = Vector3d::UnitX();
  const double angle = uniform(rng, -max_angle_deg, max_angle_deg) * M_PI / 180.0;
  return rotation_from_axis_angle<double>(axis.normalized() * angle);
}

inline Posed random_pose(std::mt19937_64& rng, double max_angle_deg = 180.0, double max_translation = 2.0) {
  return Posed(random_rotation(rng, max_angle_deg),
               Vector3d(uniform(rng, -max_translation, max_translation), uniform(rng, -max_translation, max_translation),
                        uniform(rng, -max_translation, max_translation)));
}

/// Camera inside a synthetic-room-sized box looking at points 1-8 m away.
inline Posed room_pose(std::mt19937_64& rng) {
  return Posed::from_center(random_rotation(rng), Vector3d(uniform(rng, 1, 7), uniform(rng, 0.5, 2.5), uniform(rng, 1, 5)));
}

/// World point seen by `pose` at a random pixel of K with depth in [zmin, zmax].
inline Vector3d random_visible_point(std::mt19937_64& rng, const Posed& pose, const Intrinsics& K, double zmin = 1.0,
                                     double zmax = 8.0) {
  const Vector2d px(uniform(rng, 0, K.width - 1), uniform(rng, 0, K.height - 1));
  return backproject<double>(px, uniform(rng, zmin, zmax), pose, K);
}

inline Correspondence2D3D exact_correspondence(const Vector3d& X, const Posed& pose, const Intrinsics& K) {
  return {*project<double>(X, pose, K), X};
}

/// 2D-3D correspondences for `pose`: `inliers` exact (plus Gaussian pixel noise),
/// the rest paired with uniform random pixels.
inline std::vector<Correspondence2D3D> make_correspondences(std::mt19937_64& rng, const Posed& pose,
                                                            const Intrinsics& K, int inliers, int outliers,
                                                            double noise_px = 0.0) {
  std::normal_distribution<double> noise(0.0, noise_px > 0 ? noise_px : 1.0);
  std::vector<Correspondence2D3D> out;
  for (int i = 0; i < inliers + outliers; ++i) {
    const Vector3d X = random_visible_point(rng, pose, K);
    Correspondence2D3D c = exact_correspondence(X, pose, K);
    if (i < inliers) {
      if (noise_px > 0) c.pixel += Vector2d(noise(rng), noise(rng));
    } else {
      c.pixel = Vector2d(uniform(rng, 0, K.width - 1), uniform(rng, 0, K.height - 1));
    }
    out.push_back(c);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Share of rays of camera a (sampled every 8 px) whose surface point is seen,
/// unoccluded, by camera b.
inline double directed_overlap(const SyntheticRoom& room, const Posed& a, const Intrinsics& Ka, const Posed& b,
                               const Intrinsics& Kb) {
  int visible = 0, total = 0;
  for (int y = 0; y < Ka.height; y += 8)
    for (int x = 0; x < Ka.width; x += 8) {
      ++total;
      const Vector3d dir = a.R.transpose() * Vector3d((x - Ka.cx) / Ka.f, (y - Ka.cy) / Ka.f, 1.0);
      const Vector3d X = a.center() + room.intersect(a.center(), dir).first * dir;
      const auto p = project<double>(X, b, Kb);
      if (!p || !Kb.contains(*p)) continue;
      const Vector3d back = b.R.transpose() * Vector3d((p->x() - Kb.cx) / Kb.f, (p->y() - Kb.cy) / Kb.f, 1.0);
      const double s = room.intersect(b.center(), back).first;
      if ((b.center() + s * back - X).norm() < 0.05 * s) ++visible;
    }
  return double(visible) / total;
}

/// Symmetric overlap: a distant view that holds the whole frustum of the other at
/// a fraction of its scale does not count as overlapping.
inline double view_overlap(const SyntheticRoom& room, const Posed& a, const Intrinsics& Ka, const Posed& b,
                           const Intrinsics& Kb) {
  return std::min(directed_overlap(room, a, Ka, b, Kb), directed_overlap(room, b, Kb, a, Ka));
}

}  // namespace denseloc::testing
