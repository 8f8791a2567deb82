#pragma once

#include <optional>
#include <string>
#include <vector>

#include "denseloc/geometry.hpp"
#include "denseloc/image.hpp"

namespace denseloc {

/// One pose-registered RGBD database image.
struct RgbdEntry {
  std::string id;
  RgbImage rgb;
  DepthMap depth;
  Intrinsics K;
  Posed pose;
};

/// Equirectangular RGBD panorama. Pixel (u, v) sits at azimuth u/W*360 - 180 and
/// elevation 90 - v/H*180 degrees, in the frame of `pose` (yaw 0, pitch 0).
struct Panorama {
  std::string id;
  RgbImage rgb;
  DepthMap depth;  // ray length in meters
  Posed pose;
};

struct QueryImage {
  std::string id;
  RgbImage rgb;
  double f = 0.0;
  std::optional<Posed> gt_pose;

  Intrinsics intrinsics() const { return Intrinsics::centered(f, rgb.width, rgb.height); }
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks the entry invariants, throwing LoadError naming the entry.
void validate_entry(const RgbdEntry& e);

/// JSON array of {id, rgb_path, depth_path, fx, cx, cy, pose}. Relative paths
/// resolve against the manifest's directory.
std::vector<RgbdEntry> load_database(const std::string& manifest_path);
/// JSON array of {id, rgb_path, f, gt_pose?}.
std::vector<QueryImage> load_queries(const std::string& manifest_path);

/// Writes images, depth files and the manifest into `dir`.
void save_database(const std::string& dir, const std::vector<RgbdEntry>& db,
                   const std::string& manifest_name = "database.json");
void save_queries(const std::string& dir, const std::vector<QueryImage>& queries,
                  const std::string& manifest_name = "queries.json");

struct CutoutSize {
  int width = 1600;
  int height = 1200;
};

/// Perspective RGBD view sampled from a panorama along yaw/pitch.
RgbdEntry cutout_from_panorama(const Panorama& pano, double yaw_deg, double pitch_deg,
                               double fov_deg = 60.0, CutoutSize size = {});

/// Standard grid: 12 yaw stations (30 degree stride) times pitches -30, 0, +30.
std::vector<RgbdEntry> cutout_grid(const Panorama& pano, double fov_deg = 60.0, CutoutSize size = {});

}  // namespace denseloc
