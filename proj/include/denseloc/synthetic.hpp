#pragma once

#include <array>
#include <optional>
#include <cstdint>
#include <vector>

#include "denseloc/scene.hpp"

namespace denseloc {

/// Axis-aligned box room [0, extent] with procedurally textured planes and
/// world y pointing down (y = 0 is the ceiling, y = extent.y the floor).
class SyntheticRoom {
 public:
  struct Blotch {
    Eigen::Vector2d center;
    double radius = 0.1;
    Eigen::Vector3f color;
  };

  struct PlaneTexture {
    Eigen::Vector3f base;
    std::vector<Blotch> blotches;
    double checker = 0.0;  // tile size in meters, 0 = none
    std::vector<float> tile_gain;
    double noise = 0.0;    // amplitude of per-point hash noise (0..255 units)
    // Spatial hash of blotches over plane coordinates.
    double cell = 0.4;
    int cells_a = 0, cells_b = 0;
    std::vector<std::vector<int>> buckets;
  };

  /// Plane i: normal axis i / 2, offset 0 (even i) or extent (odd i).
  static constexpr int kPlanes = 6;
  static constexpr int kCeiling = 2;  // y = 0, deliberately near-uniform

  SyntheticRoom(std::uint64_t seed, const Vector3d& extent, bool duplicate_texture_confusers = false);

  const Vector3d& extent() const { return extent_; }
  bool contains(const Vector3d& p, double margin = 0.0) const;

  /// Nearest plane hit along a ray (direction need not be unit); returns the ray
  /// parameter and plane index, or plane -1 when nothing is hit.
  std::pair<double, int> intersect(const Vector3d& origin, const Vector3d& dir) const;

  /// Plane normal n and offset d with n . X = d for points on plane `i`.
  std::pair<Vector3d, double> plane(int i) const;

  Eigen::Vector3f color_at(const Vector3d& world_point, int plane) const;

  /// Analytic render: 2x2 supersampled color, exact z-depth at pixel centers.
  std::pair<RgbImage, DepthMap> render(const Posed& pose, const Intrinsics& K) const;

 private:
  Eigen::Vector2d plane_coords(const Vector3d& X, int plane) const;

  Vector3d extent_;
  std::array<PlaneTexture, kPlanes> textures_;
  std::optional<Eigen::AlignedBox2d> confuser_panel_;  // on the south wall, in wall coordinates
};

struct DatabaseGridSpec {
  std::vector<double> xs{2.0, 4.0, 6.0};
  std::vector<double> zs{2.0, 4.0};
  double height = 1.5;  // camera y (meters below the ceiling)
  std::vector<double> yaws{0, 60, 120, 180, 240, 300};
  std::vector<double> pitches{0};
  CutoutSize size{320, 240};
  double fov_deg = 60.0;
};

struct QuerySpec {
  int count = 25;
  double min_offset = 0.2;  // horizontal displacement from the seeding database camera (m)
  double max_offset = 0.6;
  double max_height_offset = 0.15;
  double max_yaw_offset = 20.0;  // degrees
  double max_pitch = 8.0;
  double wall_margin = 1.0;  // minimum distance to walls (m)
};

struct SyntheticScene {
  SyntheticRoom room;
  std::vector<RgbdEntry> database;
  std::vector<QueryImage> queries;
};

struct SceneSpec {
  Vector3d extent{8.0, 3.0, 6.0};
  DatabaseGridSpec database;
  QuerySpec queries;
  bool confusers = false;
};

/// Deterministic in `seed`. Throws std::invalid_argument when a camera falls outside the room.
SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec = {});

}  // namespace denseloc
