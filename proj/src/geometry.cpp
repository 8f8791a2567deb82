#include "denseloc/geometry.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/SVD>

namespace denseloc {

Intrinsics Intrinsics::scaled(double scale) const {
  Intrinsics k;
  k.width = std::max(1, int(std::lround(width * scale)));
  k.height = std::max(1, int(std::lround(height * scale)));
  k.f = f * scale;
  k.cx = cx * scale;
  k.cy = cy * scale;
  return k;
}

Matrix3d orthonormalize(const Matrix3d& R) {
  Eigen::JacobiSVD<Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0) {
    Matrix3d U = svd.matrixU();
    U.col(2) *= -1.0;
    out = U * svd.matrixV().transpose();
  }
  return out;
}

Matrix3d yaw_pitch_rotation(double yaw_deg, double pitch_deg) {
  const double yaw = yaw_deg * M_PI / 180.0;
  const double pitch = pitch_deg * M_PI / 180.0;
  Matrix3d Ry;
  Ry << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);
  Matrix3d Rx;
  Rx << 1, 0, 0, 0, std::cos(pitch), -std::sin(pitch), 0, std::sin(pitch), std::cos(pitch);
  // Ry * Rx maps camera axes into the world; transpose gives world-to-camera.
  return (Ry * Rx).transpose();
}

std::vector<double> pose_to_numbers(const Posed& pose) {
  std::vector<double> v;
  v.reserve(12);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v.push_back(pose.R(r, c));
  for (int i = 0; i < 3; ++i) v.push_back(pose.t(i));
  return v;
}

Posed pose_from_numbers(const std::vector<double>& v) {
  if (v.size() != 12) throw std::invalid_argument("pose needs 12 numbers, got " + std::to_string(v.size()));
  Posed pose;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.R(r, c) = v[3 * r + c];
  pose.t = Vector3d(v[9], v[10], v[11]);
  if (!pose.R.allFinite() || !pose.t.allFinite()) throw std::invalid_argument("pose has non-finite entries");
  // Text round-trips lose a few ulps; accept near-rotations and snap them back.
  if (!pose.is_valid(1e-6)) throw std::invalid_argument("pose rotation is not orthonormal");
  if (!pose.is_valid(1e-12)) pose.R = orthonormalize(pose.R);
  return pose;
}

std::string format_pose(const Posed& pose) {
  std::string out;
  char buf[32];
  for (double x : pose_to_numbers(pose)) {
    if (!out.empty()) out += ' ';
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out += buf;
  }
  return out;
}

Posed parse_pose(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    try {
      size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed pose token '" + tok + "'");
    }
  }
  return pose_from_numbers(v);
}

std::vector<Posed> read_poses(std::istream& in) {
  std::vector<Posed> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    poses.push_back(parse_pose(line));
  }
  return poses;
}

void write_poses(std::ostream& out, const std::vector<Posed>& poses) {
  for (const auto& p : poses) out << format_pose(p) << '\n';
}

}  // namespace denseloc
