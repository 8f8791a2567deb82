#include "denseloc/pose_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace denseloc {

namespace {

using Poly = std::vector<double>;  // coefficient i multiplies v^i

Poly mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly add(Poly a, const Poly& b, double scale = 1.0) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (size_t i = 0; i < b.size(); ++i) a[i] += scale * b[i];
  return a;
}

double eval(const Poly& p, double x) {
  double r = 0;
  for (size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

double eval_derivative(const Poly& p, double x) {
  double r = 0;
  for (size_t i = p.size(); i-- > 1;) r = r * x + double(i) * p[i];
  return r;
}

std::vector<double> real_roots(Poly p) {
  double scale = 0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0) return {};
  while (p.size() > 1 && std::abs(p.back()) < 1e-13 * scale) p.pop_back();
  const int n = int(p.size()) - 1;
  std::vector<double> roots;
  if (n < 1) return roots;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) C(0, i) = -p[size_t(n - 1 - i)] / p[size_t(n)];
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  for (int i = 0; i < n; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = eval_derivative(p, x);
      if (d == 0) break;
      const double step = eval(p, x) / d;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Newton on the three law-of-cosines equations for the ray lengths.
void polish_lengths(Vector3d& s, double ca, double cb, double cg, double a2, double b2, double c2) {
  for (int it = 0; it < 5; ++it) {
    Vector3d F(s[1] * s[1] + s[2] * s[2] - 2 * s[1] * s[2] * ca - a2,
               s[0] * s[0] + s[2] * s[2] - 2 * s[0] * s[2] * cb - b2,
               s[0] * s[0] + s[1] * s[1] - 2 * s[0] * s[1] * cg - c2);
    Matrix3d J;
    J << 0, 2 * s[1] - 2 * s[2] * ca, 2 * s[2] - 2 * s[1] * ca,
        2 * s[0] - 2 * s[2] * cb, 0, 2 * s[2] - 2 * s[0] * cb,
        2 * s[0] - 2 * s[1] * cg, 2 * s[1] - 2 * s[0] * cg, 0;
    const Vector3d step = J.fullPivLu().solve(F);
    if (!step.allFinite()) return;
    s -= step;
    if (step.norm() < 1e-15 * s.norm()) return;
  }
}

// Orthonormal frame with x along (b - a) and z normal to the triangle.
Matrix3d triangle_frame(const Vector3d& a, const Vector3d& b, const Vector3d& c) {
  const Vector3d e1 = (b - a).normalized();
  const Vector3d e3 = e1.cross(c - a).normalized();
  Matrix3d F;
  F.col(0) = e1;
  F.col(1) = e3.cross(e1);
  F.col(2) = e3;
  return F;
}

Vector3d bearing(const Vector2d& px, const Intrinsics& K) {
  return Vector3d((px.x() - K.cx) / K.f, (px.y() - K.cy) / K.f, 1.0).normalized();
}

}  // namespace

double min_triangle_height(const Vector3d& a, const Vector3d& b, const Vector3d& c) {
  const double twice_area = (b - a).cross(c - a).norm();
  const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
  return longest > 0 ? twice_area / longest : 0.0;
}

double reprojection_error(const Posed& pose, const Correspondence2D3D& c, const Intrinsics& K) {
  const auto p = project(c.point, pose, K);
  return p ? (*p - c.pixel).norm() : std::numeric_limits<double>::infinity();
}

std::vector<Posed> solve_p3p(const Correspondence2D3D& m0, const Correspondence2D3D& m1,
                             const Correspondence2D3D& m2, const Intrinsics& K) {
  const Vector3d& X1 = m0.point;
  const Vector3d& X2 = m1.point;
  const Vector3d& X3 = m2.point;
  if (!(min_triangle_height(X1, X2, X3) > 1e-9)) throw DegenerateConfiguration("solve_p3p: collinear world points");

  const Vector3d j1 = bearing(m0.pixel, K), j2 = bearing(m1.pixel, K), j3 = bearing(m2.pixel, K);
  const double ca = j2.dot(j3), cb = j1.dot(j3), cg = j1.dot(j2);
  const double a2 = (X2 - X3).squaredNorm(), b2 = (X1 - X3).squaredNorm(), c2 = (X1 - X2).squaredNorm();

  // With s2 = u s1, s3 = v s1: u = N(v) / D(v), and the remaining constraint
  // D^2 + N^2 - 2 cos(gamma) N D - (c^2/b^2) Q D^2 = 0 is a quartic in v.
  const double r = (a2 - c2) / b2;
  const Poly N = {r + 1.0, -2.0 * r * cb, r - 1.0};
  const Poly D = {2.0 * cg, -2.0 * ca};
  const Poly Q = {1.0, -2.0 * cb, 1.0};
  const Poly D2 = mul(D, D);
  Poly quartic = add(D2, mul(N, N));
  quartic = add(quartic, mul(N, D), -2.0 * cg);
  quartic = add(quartic, mul(Q, D2), -c2 / b2);

  std::vector<Posed> out;
  const Matrix3d Fw = triangle_frame(X1, X2, X3);
  for (double v : real_roots(quartic)) {
    const double d = eval(D, v);
    const double q = eval(Q, v);
    if (!(q > 0)) continue;
    const double s1 = std::sqrt(b2 / q);
    // Near D = 0 (symmetric configurations, often double roots) N/D is 0/0; the
    // two roots of s1^2 (1 + u^2 - 2 u cos(gamma)) = c^2 cover that case.
    std::vector<double> us;
    if (std::abs(d) > 1e-14) us.push_back(eval(N, v) / d);
    const double disc = cg * cg - 1.0 + c2 / (s1 * s1);
    if (disc >= 0) {
      us.push_back(cg + std::sqrt(disc));
      us.push_back(cg - std::sqrt(disc));
    }
    for (double u : us) {
      Vector3d s(s1, u * s1, v * s1);
      if (!(s.minCoeff() > 0)) continue;
      polish_lengths(s, ca, cb, cg, a2, b2, c2);
      if (!(s.minCoeff() > 0) || !s.allFinite()) continue;

      const Vector3d P1 = s[0] * j1, P2 = s[1] * j2, P3 = s[2] * j3;
      const Matrix3d R = orthonormalize(triangle_frame(P1, P2, P3) * Fw.transpose());
      const Posed pose(R, P1 - R * X1);
      if (!pose.is_valid(1e-9)) continue;
      bool consistent = true;
      for (const Correspondence2D3D* c : {&m0, &m1, &m2})
        consistent = consistent && reprojection_error(pose, *c, K) < 1e-6;
      if (!consistent) continue;
      const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Posed& o) {
        return (o.R - pose.R).norm() < 1e-9 && (o.t - pose.t).norm() < 1e-9;
      });
      if (!duplicate) out.push_back(pose);
    }
  }
  return out;
}

std::optional<Eigen::Matrix<double, 2, 6>> reprojection_jacobian(const Posed& pose, const Vector3d& X,
                                                                 const Intrinsics& K) {
  const Vector3d RX = pose.R * X;
  const Vector3d x = RX + pose.t;
  if (!(x.z() > kBehindCameraDepth)) return std::nullopt;
  Eigen::Matrix<double, 2, 3> dpi;
  const double iz = 1.0 / x.z();
  dpi << K.f * iz, 0, -K.f * x.x() * iz * iz, 0, K.f * iz, -K.f * x.y() * iz * iz;
  Matrix3d skew;
  skew << 0, -RX.z(), RX.y(), RX.z(), 0, -RX.x(), -RX.y(), RX.x(), 0;
  Eigen::Matrix<double, 2, 6> J;
  J.leftCols<3>() = -dpi * skew;
  J.rightCols<3>() = dpi;
  return J;
}

Posed apply_update(const Posed& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  const Matrix3d dR = rotation_from_axis_angle<double>(delta.head<3>());
  return Posed(dR * pose.R, pose.t + delta.tail<3>());
}

namespace {

constexpr double kBehindPenaltyPx = 1e4;

double huber(double e, double delta) { return e <= delta ? e * e : 2 * delta * e - delta * delta; }

}  // namespace

double robust_cost(const Posed& pose, const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                   double huber_delta) {
  double cost = 0;
  for (const auto& c : corr) cost += huber(std::min(reprojection_error(pose, c, K), kBehindPenaltyPx), huber_delta);
  return cost;
}

RefineResult refine_pose(const Posed& initial, const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                         const RefineOptions& opts) {
  RefineResult res;
  res.pose = initial;
  res.initial_cost = res.final_cost = robust_cost(initial, corr, K, opts.huber_delta);
  if (!std::isfinite(res.initial_cost)) {
    res.diverged = true;
    return res;
  }
  if (corr.size() < 3) return res;
  double lambda = 1e-3;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : corr) {
      const auto J = reprojection_jacobian(res.pose, c.point, K);
      if (!J) continue;
      const Vector2d r = *project(c.point, res.pose, K) - c.pixel;
      const double e = r.norm();
      const double w = e <= opts.huber_delta ? 1.0 : opts.huber_delta / e;
      H += w * J->transpose() * *J;
      g += w * J->transpose() * r;
    }
    bool improved = false;
    double step_norm = 0;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Mat6 A = H;
      A.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Vec6 step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10;
        continue;
      }
      step_norm = step.norm();
      const Posed candidate = apply_update(res.pose, step);
      const double cost = robust_cost(candidate, corr, K, opts.huber_delta);
      if (std::isfinite(cost) && cost < res.final_cost) {
        const double decrease = res.final_cost - cost;
        res.pose = candidate;
        res.final_cost = cost;
        lambda = std::max(lambda / 10, 1e-12);
        improved = true;
        if (decrease < opts.min_cost_decrease) return res;
      } else {
        lambda *= 10;
      }
      if (step_norm < opts.min_step) break;
    }
    if (!improved || step_norm < opts.min_step) break;
  }
  res.pose.R = orthonormalize(res.pose.R);
  // Re-orthonormalisation moves the pose by ~1e-16; keep the cost bookkeeping honest.
  res.final_cost = std::min(res.final_cost, robust_cost(res.pose, corr, K, opts.huber_delta));
  return res;
}

namespace {

std::vector<int> inliers_of(const Posed& pose, const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                            double tau) {
  std::vector<int> in;
  for (int i = 0; i < int(corr.size()); ++i)
    if (reprojection_error(pose, corr[size_t(i)], K) < tau) in.push_back(i);
  return in;
}

std::vector<Correspondence2D3D> subset(const std::vector<Correspondence2D3D>& corr, const std::vector<int>& idx) {
  std::vector<Correspondence2D3D> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(corr[size_t(i)]);
  return out;
}

}  // namespace

std::optional<PoseHypothesis> p3p_lo_ransac(const std::vector<Correspondence2D3D>& corr, const Intrinsics& K,
                                            const RansacOptions& opts, std::uint64_t seed) {
  if (corr.size() < 3) throw std::invalid_argument("p3p_lo_ransac: need at least 3 correspondences");
  const int n = int(corr.size());
  std::mt19937_64 rng(seed);
  RefineOptions ropts;
  ropts.huber_delta = 0.5 * opts.threshold_px;

  Posed best_pose;
  std::vector<int> best_inliers;
  int needed = opts.max_iterations;
  int it = 0;
  for (; it < std::min(needed, opts.max_iterations); ++it) {
    int idx[3];
    for (int k = 0; k < 3; ++k) {
      bool fresh;
      do {
        idx[k] = int(rng() % std::uint64_t(n));
        fresh = std::find(idx, idx + k, idx[k]) == idx + k;
      } while (!fresh);
    }
    std::vector<Posed> models;
    try {
      models = solve_p3p(corr[size_t(idx[0])], corr[size_t(idx[1])], corr[size_t(idx[2])], K);
    } catch (const DegenerateConfiguration&) {
      continue;
    }
    for (const Posed& m : models) {
      auto in = inliers_of(m, corr, K, opts.threshold_px);
      if (in.size() <= best_inliers.size()) continue;
      best_pose = m;
      best_inliers = std::move(in);
      // Local optimisation on the new consensus set.
      if (best_inliers.size() >= 3) {
        const RefineResult lo = refine_pose(best_pose, subset(corr, best_inliers), K, ropts);
        auto lo_in = inliers_of(lo.pose, corr, K, opts.threshold_px);
        if (!lo.diverged && lo_in.size() >= best_inliers.size()) {
          best_pose = lo.pose;
          best_inliers = std::move(lo_in);
        }
      }
      const double w = double(best_inliers.size()) / n;
      const double denom = std::log(1.0 - w * w * w);
      if (denom < 0) needed = std::max(1, int(std::ceil(std::log(1.0 - opts.confidence) / denom)));
    }
  }
  if (int(best_inliers.size()) < std::max(opts.min_inliers, 3)) return std::nullopt;

  const RefineResult final_fit = refine_pose(best_pose, subset(corr, best_inliers), K, ropts);
  if (!final_fit.diverged) {
    auto in = inliers_of(final_fit.pose, corr, K, opts.threshold_px);
    if (in.size() >= best_inliers.size()) {
      best_pose = final_fit.pose;
      best_inliers = std::move(in);
    }
  }
  if (int(best_inliers.size()) < opts.min_inliers) return std::nullopt;

  PoseHypothesis h;
  h.pose = best_pose;
  h.inliers = best_inliers;
  h.inlier_count = int(best_inliers.size());
  h.iterations = it;
  double sum = 0;
  for (int i : best_inliers) sum += reprojection_error(best_pose, corr[size_t(i)], K);
  h.mean_error_px = sum / double(best_inliers.size());
  return h;
}

}  // namespace denseloc
