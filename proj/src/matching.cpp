#include "denseloc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/SVD>

namespace denseloc {

namespace {

double cell_distance(const FeatureGrid& a, int i, const FeatureGrid& b, int j) {
  return double(l2_distance(a.descriptor(i), b.descriptor(j)));
}
double cell_distance(const BinaryFeatureGrid& a, int i, const BinaryFeatureGrid& b, int j) {
  return double(hamming_distance(a.descriptor(i), b.descriptor(j)));
}

template <typename Grid>
void check_pair(const Grid& q, const Grid& d) {
  if (q.geometry.cells() == 0 || d.geometry.cells() == 0) throw std::invalid_argument("mutual_nn: empty grid");
  if (q.geometry.dim != d.geometry.dim) throw std::invalid_argument("mutual_nn: descriptor dimension mismatch");
}

template <typename Grid>
std::vector<CellMatch> mutual_nn_impl(const Grid& q, const Grid& d, const std::vector<int>& qcells,
                                      const std::vector<int>& dcells) {
  std::vector<int> qs, ds;
  for (int c : qcells)
    if (!q.is_empty_cell(c)) qs.push_back(c);
  for (int c : dcells)
    if (!d.is_empty_cell(c)) ds.push_back(c);
  std::vector<CellMatch> out;
  if (qs.empty() || ds.empty()) return out;

  const size_t nq = qs.size(), nd = ds.size();
  std::vector<double> dist(nq * nd);
  for (size_t i = 0; i < nq; ++i)
    for (size_t j = 0; j < nd; ++j) dist[i * nd + j] = cell_distance(q, qs[i], d, ds[j]);

  // Strict < keeps the first (lowest-index) minimum.
  std::vector<size_t> row_best(nq, 0), col_best(nd, 0);
  for (size_t i = 0; i < nq; ++i)
    for (size_t j = 1; j < nd; ++j)
      if (dist[i * nd + j] < dist[i * nd + row_best[i]]) row_best[i] = j;
  for (size_t j = 0; j < nd; ++j)
    for (size_t i = 1; i < nq; ++i)
      if (dist[i * nd + j] < dist[col_best[j] * nd + j]) col_best[j] = i;

  for (size_t i = 0; i < nq; ++i) {
    const size_t j = row_best[i];
    if (col_best[j] != i) continue;
    CellMatch m;
    m.query_cell = qs[i];
    m.db_cell = ds[j];
    m.query_px = q.geometry.center(qs[i]);
    m.db_px = d.geometry.center(ds[j]);
    m.level = q.geometry.level;
    m.distance = dist[i * nd + j];
    out.push_back(m);
  }
  return out;
}

std::vector<int> all_cells(const GridGeometry& g) {
  std::vector<int> v(static_cast<size_t>(g.cells()));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Index range [first, last) of fine cells along one axis whose centers lie in [lo, hi).
std::pair<int, int> fine_range(double lo, double hi, const GridGeometry& fine, int count) {
  const double off = 0.5 * (fine.patch - 1);
  const int first = std::max(0, int(std::ceil((lo - off) / fine.stride)));
  const int last = std::min(count, int(std::ceil((hi - off) / fine.stride)));
  return {first, last};
}

template <typename Grid>
std::vector<CellMatch> refine_fine_impl(const std::vector<CellMatch>& coarse_matches, const Grid& cq, const Grid& cd,
                                        const Grid& fq, const Grid& fd) {
  if (cq.geometry.stride % fq.geometry.stride != 0 || cd.geometry.stride % fd.geometry.stride != 0 ||
      cq.geometry.stride / fq.geometry.stride != cd.geometry.stride / fd.geometry.stride)
    throw std::invalid_argument("refine_fine: coarse/fine stride ratio must be a common integer");
  std::map<int, CellMatch> best;  // keyed by query fine cell
  for (const CellMatch& cm : coarse_matches) {
    const auto qwin = fine_window(cq.geometry, fq.geometry, cm.query_cell, 0);
    const auto dwin = fine_window(cd.geometry, fd.geometry, cm.db_cell, 1);
    for (const CellMatch& m : mutual_nn_impl(fq, fd, qwin, dwin)) {
      auto it = best.find(m.query_cell);
      if (it == best.end()) {
        best.emplace(m.query_cell, m);
      } else if (m.distance < it->second.distance ||
                 (m.distance == it->second.distance && m.db_cell < it->second.db_cell)) {
        it->second = m;
      }
    }
  }
  std::vector<CellMatch> out;
  out.reserve(best.size());
  for (auto& [cell, m] : best) out.push_back(m);
  return out;
}

}  // namespace

std::vector<CellMatch> mutual_nn(const FeatureGrid& query, const FeatureGrid& db) {
  check_pair(query, db);
  return mutual_nn_impl(query, db, all_cells(query.geometry), all_cells(db.geometry));
}

std::vector<CellMatch> mutual_nn(const BinaryFeatureGrid& query, const BinaryFeatureGrid& db) {
  check_pair(query, db);
  return mutual_nn_impl(query, db, all_cells(query.geometry), all_cells(db.geometry));
}

std::vector<CellMatch> mutual_nn_subset(const FeatureGrid& query, const FeatureGrid& db,
                                        const std::vector<int>& query_cells, const std::vector<int>& db_cells) {
  check_pair(query, db);
  return mutual_nn_impl(query, db, query_cells, db_cells);
}

std::vector<CellMatch> mutual_nn_subset(const BinaryFeatureGrid& query, const BinaryFeatureGrid& db,
                                        const std::vector<int>& query_cells, const std::vector<int>& db_cells) {
  check_pair(query, db);
  return mutual_nn_impl(query, db, query_cells, db_cells);
}

std::vector<int> fine_window(const GridGeometry& coarse, const GridGeometry& fine, int coarse_cell, int dilation) {
  const double half = 0.5 * coarse.stride + dilation * coarse.stride;
  const double cx = coarse.center_x(coarse_cell), cy = coarse.center_y(coarse_cell);
  const auto [c0, c1] = fine_range(cx - half, cx + half, fine, fine.cols);
  const auto [r0, r1] = fine_range(cy - half, cy + half, fine, fine.rows);
  std::vector<int> cells;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) cells.push_back(r * fine.cols + c);
  return cells;
}

std::vector<CellMatch> refine_fine(const std::vector<CellMatch>& coarse_matches, const FeatureGrid& coarse_query,
                                   const FeatureGrid& coarse_db, const FeatureGrid& fine_query,
                                   const FeatureGrid& fine_db) {
  return refine_fine_impl(coarse_matches, coarse_query, coarse_db, fine_query, fine_db);
}

std::vector<CellMatch> refine_fine(const std::vector<CellMatch>& coarse_matches, const BinaryFeatureGrid& coarse_query,
                                   const BinaryFeatureGrid& coarse_db, const BinaryFeatureGrid& fine_query,
                                   const BinaryFeatureGrid& fine_db) {
  return refine_fine_impl(coarse_matches, coarse_query, coarse_db, fine_query, fine_db);
}

namespace {

// Similarity that maps points to zero mean and average distance sqrt(2).
Matrix3d normalizing_transform(const std::vector<Vector2d>& pts) {
  Vector2d mean = Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  double spread = 0;
  for (const auto& p : pts) spread += (p - mean).norm();
  spread /= double(pts.size());
  const double s = spread > 0 ? std::sqrt(2.0) / spread : 1.0;
  Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

Vector2d apply(const Matrix3d& H, const Vector2d& p) {
  const Vector3d x = H * p.homogeneous();
  return x.hnormalized();
}

}  // namespace

Matrix3d fit_homography(const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst) {
  if (src.size() != dst.size() || src.size() < 4) throw std::invalid_argument("fit_homography: need >= 4 point pairs");
  const Matrix3d Ts = normalizing_transform(src), Td = normalizing_transform(dst);
  const Eigen::Index n = Eigen::Index(src.size());
  Eigen::MatrixXd A(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector2d s = apply(Ts, src[size_t(i)]), d = apply(Td, dst[size_t(i)]);
    A.row(2 * i) << -s.x(), -s.y(), -1, 0, 0, 0, d.x() * s.x(), d.x() * s.y(), d.x();
    A.row(2 * i + 1) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
  }
  Eigen::Matrix<double, 9, 1> h;
  if (n == 4) {
    // Square-pad so the full V is available for the null vector.
    Eigen::Matrix<double, 9, 9> M = Eigen::Matrix<double, 9, 9>::Zero();
    M.topRows(8) = A;
    Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(M, Eigen::ComputeFullV);
    h = svd.matrixV().col(8);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    h = svd.matrixV().col(8);
  }
  Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Matrix3d H = Td.inverse() * Hn * Ts;
  if (std::abs(H(2, 2)) > 1e-12) H /= H(2, 2);
  return H;
}

double symmetric_transfer_error(const Matrix3d& H, const Matrix3d& H_inv, const Vector2d& src, const Vector2d& dst) {
  const Vector3d f = H * src.homogeneous();
  const Vector3d b = H_inv * dst.homogeneous();
  if (std::abs(f.z()) < 1e-12 || std::abs(b.z()) < 1e-12) return std::numeric_limits<double>::infinity();
  return std::max((f.hnormalized() - dst).norm(), (b.hnormalized() - src).norm());
}

namespace {

struct HomographyFit {
  Matrix3d H = Matrix3d::Identity();
  std::vector<int> inliers;  // indices into the active set
};

bool usable(const Matrix3d& H) {
  return H.allFinite() && std::abs(H.determinant()) > 1e-12;
}

bool within(const Matrix3d& H, const Vector2d& from, const Vector2d& to, double tau2) {
  const Vector3d x = H * from.homogeneous();
  if (std::abs(x.z()) < 1e-12) return false;
  return (x.hnormalized() - to).squaredNorm() < tau2;
}

std::vector<int> count_inliers(const Matrix3d& H, const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst,
                               double tau) {
  std::vector<int> in;
  if (!usable(H)) return in;
  const Matrix3d Hi = H.inverse();
  const double tau2 = tau * tau;
  for (int i = 0; i < int(src.size()); ++i)
    if (within(H, src[size_t(i)], dst[size_t(i)], tau2) && within(Hi, dst[size_t(i)], src[size_t(i)], tau2))
      in.push_back(i);
  return in;
}

double twice_area(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
  return std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

bool degenerate_sample(const Vector2d* p) {
  for (int i = 0; i < 4; ++i)
    if (twice_area(p[(i + 1) % 4], p[(i + 2) % 4], p[(i + 3) % 4]) < 1.0) return true;
  return false;
}

// Exact homography through four point pairs with h33 = 1.
std::optional<Matrix3d> minimal_homography(const Vector2d* s, const Vector2d* d) {
  if (degenerate_sample(s) || degenerate_sample(d)) return std::nullopt;
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    A.row(2 * i) << s[i].x(), s[i].y(), 1, 0, 0, 0, -d[i].x() * s[i].x(), -d[i].x() * s[i].y();
    A.row(2 * i + 1) << 0, 0, 0, s[i].x(), s[i].y(), 1, -d[i].y() * s[i].x(), -d[i].y() * s[i].y();
    b(2 * i) = d[i].x();
    b(2 * i + 1) = d[i].y();
  }
  const Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(b);
  if (!h.allFinite()) return std::nullopt;
  Matrix3d H;
  H << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return H;
}

HomographyFit ransac_homography(const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst,
                                const HomographyOptions& opts, std::mt19937_64& rng) {
  HomographyFit best;
  const int n = int(src.size());
  if (n < 4) return best;
  int needed = opts.max_iterations;
  Vector2d s[4], d[4];
  for (int it = 0; it < std::min(needed, opts.max_iterations); ++it) {
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = int(rng() % std::uint64_t(n));
        fresh = std::find(idx, idx + k, idx[k]) == idx + k;
      } while (!fresh);
      s[k] = src[size_t(idx[k])];
      d[k] = dst[size_t(idx[k])];
    }
    const auto H = minimal_homography(s, d);
    if (!H) continue;
    auto in = count_inliers(*H, src, dst, opts.threshold_px);
    if (in.size() > best.inliers.size()) {
      best.H = *H;
      best.inliers = std::move(in);
      const double w = double(best.inliers.size()) / n;
      const double denom = std::log(1.0 - std::pow(w, 4));
      if (denom < 0) needed = int(std::ceil(std::log(1.0 - opts.confidence) / denom));
    }
  }
  // Least-squares refit on the consensus set; keep it only if support does not shrink.
  if (best.inliers.size() >= 4) {
    std::vector<Vector2d> is, id;
    for (int i : best.inliers) {
      is.push_back(src[size_t(i)]);
      id.push_back(dst[size_t(i)]);
    }
    const Matrix3d H = fit_homography(is, id);
    auto in = count_inliers(H, src, dst, opts.threshold_px);
    if (in.size() >= best.inliers.size()) {
      best.H = H;
      best.inliers = std::move(in);
    }
  }
  return best;
}

}  // namespace

CandidateVerdict verify_homographies(const std::vector<CellMatch>& matches, const HomographyOptions& opts,
                                     std::uint64_t seed) {
  CandidateVerdict v;
  v.matches = matches;
  v.inlier_homography.assign(matches.size(), -1);
  std::mt19937_64 rng(seed);
  std::vector<int> active(matches.size());
  std::iota(active.begin(), active.end(), 0);
  for (int h = 0; h < opts.max_homographies && active.size() >= 4; ++h) {
    std::vector<Vector2d> src, dst;
    for (int i : active) {
      src.push_back(matches[size_t(i)].query_px);
      dst.push_back(matches[size_t(i)].db_px);
    }
    const HomographyFit fit = ransac_homography(src, dst, opts, rng);
    if (int(fit.inliers.size()) < opts.min_inliers) break;
    std::vector<char> taken(active.size(), 0);
    for (int k : fit.inliers) {
      taken[size_t(k)] = 1;
      v.inlier_homography[size_t(active[size_t(k)])] = h;
    }
    v.homographies.push_back(fit.H);
    std::vector<int> rest;
    for (size_t k = 0; k < active.size(); ++k)
      if (!taken[k]) rest.push_back(active[k]);
    active = std::move(rest);
  }
  for (size_t i = 0; i < matches.size(); ++i)
    if (v.inlier_homography[i] >= 0) v.inliers.push_back(matches[i]);
  v.score = int(v.inliers.size());
  return v;
}

std::vector<int> rerank(const std::vector<CandidateVerdict>& verdicts, int keep) {
  if (keep < 1) throw std::invalid_argument("rerank: keep must be at least 1");
  std::vector<int> order(verdicts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& x = verdicts[size_t(a)];
    const auto& y = verdicts[size_t(b)];
    return x.score != y.score ? x.score > y.score : x.retrieval_rank < y.retrieval_rank;
  });
  if (int(order.size()) > keep) order.resize(size_t(keep));
  return order;
}

void write_match_dump(std::ostream& out, const CandidateVerdict& verdict) {
  for (size_t i = 0; i < verdict.matches.size(); ++i) {
    const CellMatch& m = verdict.matches[i];
    out << m.query_px.x() << ' ' << m.query_px.y() << ' ' << m.db_px.x() << ' ' << m.db_px.y() << ' ' << m.distance
        << ' ' << (verdict.inlier_homography[i] >= 0 ? 1 : 0) << '\n';
  }
}

}  // namespace denseloc
