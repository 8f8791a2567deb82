#include "denseloc/scene.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace denseloc {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_entry(const RgbdEntry& e) {
  const std::string who = "entry '" + e.id + "': ";
  if (e.rgb.width != e.depth.width || e.rgb.height != e.depth.height)
    throw LoadError(who + "dimension mismatch, rgb " + std::to_string(e.rgb.width) + "x" +
                    std::to_string(e.rgb.height) + " vs depth " + std::to_string(e.depth.width) + "x" +
                    std::to_string(e.depth.height));
  if (e.K.width != e.rgb.width || e.K.height != e.rgb.height || !e.K.is_valid())
    throw LoadError(who + "invalid intrinsics");
  if (!e.pose.is_valid(1e-6)) throw LoadError(who + "pose rotation is not a rotation");
}

namespace {

json read_json_array(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw LoadError("manifest '" + path + "': " + ex.what());
  }
  if (!j.is_array()) throw LoadError("manifest '" + path + "' must be a JSON array");
  return j;
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

template <typename Fn>
auto with_entry_context(const std::string& id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& ex) {
    throw LoadError("entry '" + id + "': " + ex.what());
  }
}

json pose_json(const Posed& pose) { return pose_to_numbers(pose); }

}  // namespace

std::vector<RgbdEntry> load_database(const std::string& manifest_path) {
  const json arr = read_json_array(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<RgbdEntry> out;
  out.reserve(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) {
    const json& item = arr[i];
    const std::string id = item.contains("id") && item["id"].is_string() ? item["id"].get<std::string>()
                                                                          : "#" + std::to_string(i);
    out.push_back(with_entry_context(id, [&] {
      RgbdEntry e;
      e.id = id;
      e.rgb = read_png(resolve(base, item.at("rgb_path").get<std::string>()));
      e.depth = read_depth(resolve(base, item.at("depth_path").get<std::string>()));
      e.pose = pose_from_numbers(item.at("pose").get<std::vector<double>>());
      e.K = Intrinsics(item.at("fx").get<double>(), item.at("cx").get<double>(), item.at("cy").get<double>(),
                       e.rgb.width, e.rgb.height);
      validate_entry(e);
      return e;
    }));
  }
  return out;
}

std::vector<QueryImage> load_queries(const std::string& manifest_path) {
  const json arr = read_json_array(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<QueryImage> out;
  for (size_t i = 0; i < arr.size(); ++i) {
    const json& item = arr[i];
    const std::string id = item.contains("id") && item["id"].is_string() ? item["id"].get<std::string>()
                                                                          : "#" + std::to_string(i);
    out.push_back(with_entry_context(id, [&] {
      QueryImage q;
      q.id = id;
      q.rgb = read_png(resolve(base, item.at("rgb_path").get<std::string>()));
      q.f = item.at("f").get<double>();
      if (!(q.f > 0)) throw LoadError("entry '" + id + "': focal length must be positive");
      if (item.contains("gt_pose") && !item["gt_pose"].is_null())
        q.gt_pose = pose_from_numbers(item["gt_pose"].get<std::vector<double>>());
      return q;
    }));
  }
  return out;
}

void save_database(const std::string& dir, const std::vector<RgbdEntry>& db, const std::string& manifest_name) {
  fs::create_directories(dir);
  json arr = json::array();
  for (const auto& e : db) {
    const std::string rgb = e.id + ".png", depth = e.id + ".idpt";
    write_png((fs::path(dir) / rgb).string(), e.rgb);
    write_depth((fs::path(dir) / depth).string(), e.depth);
    arr.push_back({{"id", e.id}, {"rgb_path", rgb}, {"depth_path", depth}, {"fx", e.K.f},
                   {"cx", e.K.cx}, {"cy", e.K.cy}, {"pose", pose_json(e.pose)}});
  }
  std::ofstream out(fs::path(dir) / manifest_name);
  out << arr.dump(1) << '\n';
  if (!out) throw IoError("failed writing manifest in '" + dir + "'");
}

void save_queries(const std::string& dir, const std::vector<QueryImage>& queries, const std::string& manifest_name) {
  fs::create_directories(dir);
  json arr = json::array();
  for (const auto& q : queries) {
    const std::string rgb = q.id + ".png";
    write_png((fs::path(dir) / rgb).string(), q.rgb);
    json item = {{"id", q.id}, {"rgb_path", rgb}, {"f", q.f}};
    if (q.gt_pose) item["gt_pose"] = pose_json(*q.gt_pose);
    arr.push_back(std::move(item));
  }
  std::ofstream out(fs::path(dir) / manifest_name);
  out << arr.dump(1) << '\n';
  if (!out) throw IoError("failed writing manifest in '" + dir + "'");
}

RgbdEntry cutout_from_panorama(const Panorama& pano, double yaw_deg, double pitch_deg, double fov_deg,
                               CutoutSize size) {
  if (!(fov_deg > 0 && fov_deg < 180)) throw std::invalid_argument("cutout fov must lie in (0, 180) degrees");
  if (size.width <= 0 || size.height <= 0) throw std::invalid_argument("cutout size must be positive");
  if (pano.rgb.width != 2 * pano.rgb.height || pano.depth.width != pano.rgb.width ||
      pano.depth.height != pano.rgb.height)
    throw std::invalid_argument("panorama '" + pano.id + "' must be 2:1 with matching depth");

  const double f = 0.5 * size.width / std::tan(0.5 * fov_deg * M_PI / 180.0);
  RgbdEntry e;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "_y%03d_p%+03d", int(std::lround(yaw_deg)), int(std::lround(pitch_deg)));
  e.id = pano.id + buf;
  e.K = Intrinsics::centered(f, size.width, size.height);
  const Matrix3d R_local = yaw_pitch_rotation(yaw_deg, pitch_deg);
  e.pose = Posed(R_local, Vector3d::Zero()) * pano.pose;
  e.rgb = RgbImage(size.width, size.height);
  e.depth = DepthMap(size.width, size.height);

  const int PW = pano.rgb.width, PH = pano.rgb.height;
  for (int v = 0; v < size.height; ++v) {
    for (int u = 0; u < size.width; ++u) {
      const Vector3d ray_cam((u - e.K.cx) / f, (v - e.K.cy) / f, 1.0);
      const Vector3d d = R_local.transpose() * ray_cam;
      const double az = std::atan2(d.x(), d.z()) * 180.0 / M_PI;
      const double el = std::asin(std::clamp(-d.y() / d.norm(), -1.0, 1.0)) * 180.0 / M_PI;
      const double pu = (az + 180.0) / 360.0 * PW;
      const double pv = (90.0 - el) / 180.0 * PH;
      const Eigen::Vector3f c = sample_bilinear(pano.rgb, pu, pv, /*wrap_x=*/true);
      for (int k = 0; k < 3; ++k) e.rgb.at(u, v)[k] = std::uint8_t(std::clamp(std::lround(c[k]), 0L, 255L));
      const int nu = ((int(std::lround(pu)) % PW) + PW) % PW;
      const int nv = std::clamp(int(std::lround(pv)), 0, PH - 1);
      const float range = pano.depth.at(nu, nv);
      if (pano.depth.valid(nu, nv)) e.depth.at(u, v) = float(range / ray_cam.norm());
    }
  }
  return e;
}

std::vector<RgbdEntry> cutout_grid(const Panorama& pano, double fov_deg, CutoutSize size) {
  std::vector<RgbdEntry> out;
  for (int pitch : {-30, 0, 30})
    for (int yaw = 0; yaw < 360; yaw += 30) out.push_back(cutout_from_panorama(pano, yaw, pitch, fov_deg, size));
  return out;
}

}  // namespace denseloc
