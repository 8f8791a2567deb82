#include "denseloc/synthetic.hpp"

#include <cmath>
#include <random>

namespace denseloc {

namespace {

// Portable uniform draws (std distributions are implementation-defined).
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform() { return double(engine() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int index(int n) { return int(uniform() * n) % n; }
};

float smoothstep(float e0, float e1, float x) {
  const float t = std::clamp((x - e0) / (e1 - e0), 0.0f, 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

std::uint32_t hash2(std::int64_t a, std::int64_t b, std::uint32_t salt) {
  std::uint64_t h = std::uint64_t(a) * 0x9E3779B97F4A7C15ull ^ (std::uint64_t(b) + 0x632BE59BD9B4E019ull + salt);
  h ^= h >> 31;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 29;
  return std::uint32_t(h);
}

Eigen::Vector3f random_color(Rng& rng) {
  return Eigen::Vector3f(float(rng.uniform(10, 245)), float(rng.uniform(10, 245)), float(rng.uniform(10, 245)));
}

}  // namespace

SyntheticRoom::SyntheticRoom(std::uint64_t seed, const Vector3d& extent, bool duplicate_texture_confusers)
    : extent_(extent) {
  if (!(extent.minCoeff() > 0)) throw std::invalid_argument("room extent must be positive");
  Rng rng(seed ^ 0xA5A5A5A5ull);
  const std::array<std::pair<double, double>, kPlanes> sizes = {{
      {extent.z(), extent.y()}, {extent.z(), extent.y()},  // x walls
      {extent.x(), extent.z()}, {extent.x(), extent.z()},  // ceiling, floor
      {extent.x(), extent.y()}, {extent.x(), extent.y()},  // z walls
  }};
  for (int p = 0; p < kPlanes; ++p) {
    PlaneTexture& tex = textures_[p];
    tex.base = Eigen::Vector3f(float(rng.uniform(90, 170)), float(rng.uniform(90, 170)), float(rng.uniform(90, 170)));
    const auto [A, B] = sizes[p];
    if (p == kCeiling) {
      tex.noise = 2.0;
    } else {
      const int count = int(45.0 * A * B);
      for (int i = 0; i < count; ++i) {
        Blotch b;
        b.center = Eigen::Vector2d(rng.uniform(-0.2, A + 0.2), rng.uniform(-0.2, B + 0.2));
        b.radius = 0.03 + 0.25 * std::pow(rng.uniform(), 2.0);
        b.color = random_color(rng);
        tex.blotches.push_back(b);
      }
      if (p == 3) {
        tex.checker = 0.5;
        const int n = int(std::ceil(A / tex.checker) * std::ceil(B / tex.checker));
        for (int i = 0; i < n; ++i) tex.tile_gain.push_back(float(rng.uniform(0.6, 1.4)));
      }
    }
    tex.cells_a = int(std::ceil(A / tex.cell)) + 2;
    tex.cells_b = int(std::ceil(B / tex.cell)) + 2;
    tex.buckets.assign(size_t(tex.cells_a) * tex.cells_b, {});
    for (int i = 0; i < int(tex.blotches.size()); ++i) {
      const Blotch& b = tex.blotches[i];
      const double r = b.radius + 0.02;
      const int a0 = std::max(0, int(std::floor((b.center.x() - r) / tex.cell)) + 1);
      const int a1 = std::min(tex.cells_a - 1, int(std::floor((b.center.x() + r) / tex.cell)) + 1);
      const int b0 = std::max(0, int(std::floor((b.center.y() - r) / tex.cell)) + 1);
      const int b1 = std::min(tex.cells_b - 1, int(std::floor((b.center.y() + r) / tex.cell)) + 1);
      for (int bb = b0; bb <= b1; ++bb)
        for (int aa = a0; aa <= a1; ++aa) tex.buckets[size_t(bb) * tex.cells_a + aa].push_back(i);
    }
  }
  // The middle of the south wall (z = 0) repeats the facing part of the north
  // wall, mirrored so both read identically when faced from inside the room.
  if (duplicate_texture_confusers)
    confuser_panel_ = Eigen::AlignedBox2d(Eigen::Vector2d(0.25 * extent.x(), 0.2 * extent.y()),
                                          Eigen::Vector2d(0.75 * extent.x(), 0.8 * extent.y()));
}

bool SyntheticRoom::contains(const Vector3d& p, double margin) const {
  return (p.array() > margin).all() && (p.array() < extent_.array() - margin).all();
}

std::pair<Vector3d, double> SyntheticRoom::plane(int i) const {
  Vector3d n = Vector3d::Zero();
  n[i / 2] = 1.0;
  return {n, (i % 2) ? extent_[i / 2] : 0.0};
}

std::pair<double, int> SyntheticRoom::intersect(const Vector3d& origin, const Vector3d& dir) const {
  double best = std::numeric_limits<double>::infinity();
  int best_plane = -1;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dir[axis]) < 1e-15) continue;
    const int p = dir[axis] > 0 ? 2 * axis + 1 : 2 * axis;
    const double target = dir[axis] > 0 ? extent_[axis] : 0.0;
    const double s = (target - origin[axis]) / dir[axis];
    if (s > 0 && s < best) {
      best = s;
      best_plane = p;
    }
  }
  return {best, best_plane};
}

Eigen::Vector2d SyntheticRoom::plane_coords(const Vector3d& X, int plane) const {
  const Vector3d& L = extent_;
  switch (plane) {
    case 0: return {X.z(), X.y()};
    case 1: return {L.z() - X.z(), X.y()};
    case 2:
    case 3: return {X.x(), X.z()};
    case 4: return {L.x() - X.x(), X.y()};
    default: return {X.x(), X.y()};
  }
}

Eigen::Vector3f SyntheticRoom::color_at(const Vector3d& X, int plane) const {
  const Eigen::Vector2d ab = plane_coords(X, plane);
  const bool copied = plane == 4 && confuser_panel_ && confuser_panel_->contains(ab);
  const PlaneTexture& tex = textures_[copied ? 5 : plane];
  Eigen::Vector3f c = tex.base;
  if (tex.checker > 0) {
    const int ta = int(std::floor(ab.x() / tex.checker)), tb = int(std::floor(ab.y() / tex.checker));
    const int per_row = int(std::ceil(extent_.x() / tex.checker));
    const int idx = std::clamp(tb, 0, 1 << 20) * per_row + std::clamp(ta, 0, per_row - 1);
    c *= tex.tile_gain[size_t(idx) % tex.tile_gain.size()];
  }
  const int ca = std::clamp(int(std::floor(ab.x() / tex.cell)) + 1, 0, tex.cells_a - 1);
  const int cb = std::clamp(int(std::floor(ab.y() / tex.cell)) + 1, 0, tex.cells_b - 1);
  if (!tex.buckets.empty()) {
    for (int i : tex.buckets[size_t(cb) * tex.cells_a + ca]) {
      const Blotch& b = tex.blotches[i];
      const float r = float((ab - b.center).norm());
      const float alpha = 0.9f * (1.0f - smoothstep(float(b.radius) - 0.015f, float(b.radius) + 0.015f, r));
      if (alpha > 0) c = (1 - alpha) * c + alpha * b.color;
    }
  }
  if (tex.noise > 0) {
    const auto h = hash2(std::int64_t(std::floor(ab.x() * 100)), std::int64_t(std::floor(ab.y() * 100)), 7u);
    c.array() += float(tex.noise * (double(h & 0xFFFF) / 65535.0 - 0.5));
  }
  return c.cwiseMax(0.0f).cwiseMin(255.0f);
}

std::pair<RgbImage, DepthMap> SyntheticRoom::render(const Posed& pose, const Intrinsics& K) const {
  RgbImage rgb(K.width, K.height);
  DepthMap depth(K.width, K.height);
  const Vector3d origin = pose.center();
  const Matrix3d Rt = pose.R.transpose();
  static constexpr double kSub[4][2] = {{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}};
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Vector3d ray_c((u - K.cx) / K.f, (v - K.cy) / K.f, 1.0);
      const auto [s, p] = intersect(origin, Rt * ray_c);
      if (p >= 0) depth.at(u, v) = float(s);  // ray_c has unit z, so s is the z-depth
      Eigen::Vector3f acc = Eigen::Vector3f::Zero();
      for (const auto& o : kSub) {
        const Vector3d ray_s((u + o[0] - K.cx) / K.f, (v + o[1] - K.cy) / K.f, 1.0);
        const Vector3d d = Rt * ray_s;
        const auto [ss, ps] = intersect(origin, d);
        if (ps >= 0) acc += color_at(origin + ss * d, ps);
      }
      acc *= 0.25f;
      for (int k = 0; k < 3; ++k) rgb.at(u, v)[k] = std::uint8_t(std::lround(std::clamp(acc[k], 0.0f, 255.0f)));
    }
  }
  return {std::move(rgb), std::move(depth)};
}

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec) {
  SyntheticScene scene{SyntheticRoom(seed, spec.extent, spec.confusers), {}, {}};
  const SyntheticRoom& room = scene.room;
  const DatabaseGridSpec& g = spec.database;
  const double f = 0.5 * g.size.width / std::tan(0.5 * g.fov_deg * M_PI / 180.0);
  const Intrinsics K = Intrinsics::centered(f, g.size.width, g.size.height);

  int n = 0;
  for (double z : g.zs) {
    for (double x : g.xs) {
      const Vector3d c(x, g.height, z);
      if (!room.contains(c)) throw std::invalid_argument("database camera outside the room");
      for (double pitch : g.pitches) {
        for (double yaw : g.yaws) {
          RgbdEntry e;
          char id[32];
          std::snprintf(id, sizeof(id), "db%04d", n++);
          e.id = id;
          e.K = K;
          e.pose = Posed::from_center(yaw_pitch_rotation(yaw, pitch), c);
          std::tie(e.rgb, e.depth) = room.render(e.pose, K);
          scene.database.push_back(std::move(e));
        }
      }
    }
  }

  const QuerySpec& q = spec.queries;
  Rng rng(seed * 0x2545F4914F6CDD1Dull + 17);
  for (int i = 0; i < q.count; ++i) {
    QueryImage query;
    char id[32];
    std::snprintf(id, sizeof(id), "q%04d", i);
    query.id = id;
    query.f = f;
    Posed pose;
    // Rejection-sample a displaced camera that stays clear of the walls.
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw std::invalid_argument("query camera outside the room");
      const RgbdEntry& anchor = scene.database[size_t(rng.index(int(scene.database.size())))];
      const double ang = rng.uniform(0, 2 * M_PI);
      const double r = rng.uniform(q.min_offset, q.max_offset);
      const Vector3d c = anchor.pose.center() +
                         Vector3d(r * std::cos(ang), rng.uniform(-q.max_height_offset, q.max_height_offset),
                                  r * std::sin(ang));
      const Vector3d fwd = anchor.pose.R.row(2).transpose();
      const double yaw0 = std::atan2(fwd.x(), fwd.z()) * 180.0 / M_PI;
      const double yaw = yaw0 + rng.uniform(-q.max_yaw_offset, q.max_yaw_offset);
      const double pitch = rng.uniform(-q.max_pitch, q.max_pitch);
      const bool clear = c.x() > q.wall_margin && c.x() < spec.extent.x() - q.wall_margin &&
                         c.z() > q.wall_margin && c.z() < spec.extent.z() - q.wall_margin &&
                         room.contains(c, 0.3);
      if (!clear) continue;
      pose = Posed::from_center(yaw_pitch_rotation(yaw, pitch), c);
      break;
    }
    query.gt_pose = pose;
    query.rgb = room.render(pose, Intrinsics::centered(f, g.size.width, g.size.height)).first;
    scene.queries.push_back(std::move(query));
  }
  return scene;
}

}  // namespace denseloc
