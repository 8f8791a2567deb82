#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace denseloc {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vector2d = Vec2<double>;
using Vector3d = Vec3<double>;
using Matrix3d = Mat3<double>;

/// Rigid world-to-camera transform: x_cam = R * x_world + t.
/// The camera looks along +z, image x points right and y points down.
template <typename Scalar>
struct Pose {
  Mat3<Scalar> R = Mat3<Scalar>::Identity();
  Vec3<Scalar> t = Vec3<Scalar>::Zero();

  Pose() = default;
  Pose(const Mat3<Scalar>& rotation, const Vec3<Scalar>& translation)
      : R(rotation), t(translation) {}

  static Pose identity() { return Pose(); }

  /// Pose of a camera with orientation R placed at world position `center`.
  static Pose from_center(const Mat3<Scalar>& rotation, const Vec3<Scalar>& center) {
    return Pose(rotation, -rotation * center);
  }

  Vec3<Scalar> center() const { return -R.transpose() * t; }

  Vec3<Scalar> transform(const Vec3<Scalar>& x_world) const { return R * x_world + t; }

  Pose inverse() const { return Pose(R.transpose(), -R.transpose() * t); }

  /// (*this) * other applies `other` first.
  Pose operator*(const Pose& other) const { return Pose(R * other.R, R * other.t + t); }

  template <typename Other>
  Pose<Other> cast() const {
    return Pose<Other>(R.template cast<Other>(), t.template cast<Other>());
  }

  /// Orthonormality and handedness of R.
  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    const Mat3<Scalar> gram = R.transpose() * R;
    return (gram - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - Scalar(1)) <= tol && t.allFinite();
  }
};

using Posed = Pose<double>;

/// Pinhole intrinsics with a single focal length and zero distortion.
struct Intrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Intrinsics() = default;
  Intrinsics(double focal, double px, double py, int w, int h)
      : f(focal), cx(px), cy(py), width(w), height(h) {}

  /// Principal point at the image center.
  static Intrinsics centered(double focal, int w, int h) {
    return Intrinsics(focal, 0.5 * w, 0.5 * h, w, h);
  }

  bool is_valid() const {
    return f > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }

  /// Same camera resampled by `scale` (new size = round(scale * size)).
  Intrinsics scaled(double scale) const;

  bool contains(const Vector2d& p) const {
    return p.x() >= -0.5 && p.y() >= -0.5 && p.x() < width - 0.5 && p.y() < height - 0.5;
  }
};

struct PoseError {
  double positional = 0.0;  // meters
  double angular = 0.0;     // degrees
};

inline constexpr double kBehindCameraDepth = 1e-9;

/// Pixel coordinates of a world point, or nullopt when it lies behind the camera.
template <typename Scalar>
std::optional<Vec2<Scalar>> project(const Vec3<Scalar>& X, const Pose<Scalar>& pose,
                                    const Intrinsics& K) {
  const Vec3<Scalar> x = pose.transform(X);
  if (!(x.z() > Scalar(kBehindCameraDepth))) return std::nullopt;
  return Vec2<Scalar>(Scalar(K.f) * x.x() / x.z() + Scalar(K.cx),
                      Scalar(K.f) * x.y() / x.z() + Scalar(K.cy));
}

/// World point seen at pixel `p` with camera-frame depth `depth`.
template <typename Scalar>
Vec3<Scalar> backproject(const Vec2<Scalar>& p, Scalar depth, const Pose<Scalar>& pose,
                         const Intrinsics& K) {
  if (!(depth > Scalar(0))) throw std::invalid_argument("backproject: depth must be positive");
  const Vec3<Scalar> x_cam((p.x() - Scalar(K.cx)) / Scalar(K.f) * depth,
                           (p.y() - Scalar(K.cy)) / Scalar(K.f) * depth, depth);
  return pose.R.transpose() * (x_cam - pose.t);
}

template <typename Scalar>
Scalar rotation_angle_deg(const Mat3<Scalar>& R) {
  using std::atan2;
  const Vec3<Scalar> axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return atan2(axis.norm() / Scalar(2), (R.trace() - Scalar(1)) / Scalar(2)) * Scalar(180.0 / M_PI);
}

template <typename Scalar>
PoseError pose_error(const Pose<Scalar>& est, const Pose<Scalar>& gt) {
  PoseError e;
  e.positional = double((est.center() - gt.center()).norm());
  e.angular = double(rotation_angle_deg<Scalar>(est.R * gt.R.transpose()));
  return e;
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
template <typename Scalar>
Mat3<Scalar> rotation_from_axis_angle(const Vec3<Scalar>& w) {
  const Scalar theta = w.norm();
  if (theta < Scalar(1e-12)) {
    Mat3<Scalar> W;
    W << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
    return Mat3<Scalar>::Identity() + W;
  }
  return Eigen::AngleAxis<Scalar>(theta, w / theta).toRotationMatrix();
}

/// Nearest rotation matrix in the Frobenius sense.
Matrix3d orthonormalize(const Matrix3d& R);

/// World-to-camera rotation for a camera with world y pointing down. Yaw turns
/// the optical axis from +z towards +x, positive pitch tilts it up (towards -y).
Matrix3d yaw_pitch_rotation(double yaw_deg, double pitch_deg);

/// Twelve decimals: R row-major, then t.
std::string format_pose(const Posed& pose);
Posed parse_pose(const std::string& text);
Posed pose_from_numbers(const std::vector<double>& v);
std::vector<double> pose_to_numbers(const Posed& pose);

std::vector<Posed> read_poses(std::istream& in);
void write_poses(std::ostream& out, const std::vector<Posed>& poses);

}  // namespace denseloc
