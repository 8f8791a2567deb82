#include "denseloc/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "binary_io.hpp"

namespace denseloc {

namespace {

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// Squared distances between every column of X and every column of C (n x k).
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C) {
  Eigen::MatrixXd D = (-2.0 * X.transpose() * C);
  D.colwise() += X.colwise().squaredNorm().transpose();
  D.rowwise() += C.colwise().squaredNorm();
  return D.cwiseMax(0.0);
}

}  // namespace

Vocabulary train_vocabulary(const DescriptorMatrix& sample, int k, std::uint64_t seed, const KMeansOptions& opts) {
  if (k < 1) throw std::invalid_argument("train_vocabulary: k must be positive");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < sample.cols(); ++i)
    if (!sample.col(i).isZero(0.0f)) keep.push_back(i);
  const Eigen::Index n = Eigen::Index(keep.size());
  if (n < Eigen::Index(opts.min_samples_per_cluster) * k)
    throw std::invalid_argument("train_vocabulary: sample too small (" + std::to_string(n) + " non-zero descriptors for k=" +
                                std::to_string(k) + ")");
  Eigen::MatrixXd X(sample.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) X.col(i) = sample.col(keep[size_t(i)]).cast<double>();

  std::mt19937_64 rng(seed);
  // k-means++ seeding.
  Eigen::MatrixXd C(X.rows(), k);
  C.col(0) = X.col(Eigen::Index(uniform01(rng) * double(n)) % n);
  Eigen::VectorXd best = squared_distances(X, C.leftCols(1)).col(0);
  for (int j = 1; j < k; ++j) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= best[pick];
        if (r < 0) break;
      }
    } else {
      pick = Eigen::Index(uniform01(rng) * double(n)) % n;
    }
    C.col(j) = X.col(pick);
    best = best.cwiseMin(squared_distances(X, C.col(j)).col(0));
  }

  std::vector<int> label(size_t(n), 0);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Eigen::MatrixXd D = squared_distances(X, C);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index j;
      D.row(i).minCoeff(&j);
      label[size_t(i)] = int(j);
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(X.rows(), k);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.col(label[size_t(i)]) += X.col(i);
      count[label[size_t(i)]] += 1;
    }
    double movement = 0;
    for (int j = 0; j < k; ++j) {
      if (count[j] == 0) continue;  // empty cluster keeps its centroid
      const Eigen::VectorXd c = sum.col(j) / count[j];
      movement = std::max(movement, (c - C.col(j)).norm());
      C.col(j) = c;
    }
    if (movement < opts.tolerance) break;
  }
  Vocabulary v;
  v.seed = seed;
  v.centroids = C.cast<float>();
  return v;
}

int assign_cluster(const Vocabulary& vocab, const Eigen::Ref<const Eigen::VectorXf>& d) {
  int best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (int j = 0; j < vocab.k(); ++j) {
    const float dist = (vocab.centroids.col(j) - d).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = j;
    }
  }
  return best;
}

GlobalDescriptor aggregate(const FeatureGrid& grid, const Vocabulary& vocab) {
  if (grid.geometry.dim != vocab.dim()) throw std::invalid_argument("aggregate: vocabulary/descriptor dimension mismatch");
  const int k = vocab.k(), dim = vocab.dim();
  Eigen::MatrixXd residuals = Eigen::MatrixXd::Zero(dim, k);
  for (int cell = 0; cell < grid.geometry.cells(); ++cell) {
    if (grid.is_empty_cell(cell)) continue;
    const int j = assign_cluster(vocab, grid.descriptor(cell));
    residuals.col(j) += (grid.descriptor(cell) - vocab.centroids.col(j)).cast<double>();
  }
  for (int j = 0; j < k; ++j) {
    const double n = residuals.col(j).norm();
    if (n > 0) residuals.col(j) /= n;
  }
  const double total = residuals.norm();
  if (total > 0) residuals /= total;
  return Eigen::Map<Eigen::VectorXd>(residuals.data(), residuals.size()).cast<float>();
}

RetrievalIndex::RetrievalIndex(std::vector<std::string> ids, Eigen::MatrixXf descriptors)
    : ids_(std::move(ids)), descriptors_(std::move(descriptors)) {
  if (Eigen::Index(ids_.size()) != descriptors_.cols())
    throw std::invalid_argument("retrieval index: id count does not match descriptor count");
}

void RetrievalIndex::add(const std::string& id, const GlobalDescriptor& d) {
  if (!ids_.empty() && d.size() != descriptors_.rows())
    throw std::invalid_argument("retrieval index: descriptor dimension mismatch");
  descriptors_.conservativeResize(d.size(), descriptors_.cols() + 1);
  descriptors_.col(descriptors_.cols() - 1) = d;
  ids_.push_back(id);
}

std::vector<RetrievalHit> RetrievalIndex::retrieve_top_n(const GlobalDescriptor& query, int n) const {
  if (ids_.empty()) throw std::invalid_argument("retrieve_top_n: empty index");
  if (n < 1) throw std::invalid_argument("retrieve_top_n: N must be at least 1");
  if (query.size() != descriptors_.rows()) throw std::invalid_argument("retrieve_top_n: dimension mismatch");
  std::vector<RetrievalHit> hits(ids_.size());
  for (int i = 0; i < size(); ++i)
    hits[size_t(i)] = {ids_[size_t(i)], i, double((descriptors_.col(i) - query).norm())};
  const auto less = [](const RetrievalHit& a, const RetrievalHit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  const size_t m = std::min(size_t(n), hits.size());
  std::partial_sort(hits.begin(), hits.begin() + std::ptrdiff_t(m), hits.end(), less);
  hits.resize(m);
  return hits;
}

void write_index(const std::string& path, const RetrievalIndex& index) {
  detail::BinaryWriter out(path);
  out.magic("VIDX");
  out.u32(std::uint32_t(index.size()));
  out.u32(std::uint32_t(index.dim()));
  for (const auto& id : index.ids()) out.str(id);
  out.raw(index.descriptors().data(), size_t(index.descriptors().size()) * sizeof(float));
}

RetrievalIndex read_index(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("VIDX");
  const auto count = in.u32(), dim = in.u32();
  if (count > (1u << 24) || dim > (1u << 20)) throw IoError("'" + path + "': index header out of range");
  std::vector<std::string> ids(count);
  for (auto& id : ids) id = in.str();
  Eigen::MatrixXf d(dim, count);
  in.raw(d.data(), size_t(d.size()) * sizeof(float));
  in.expect_end();
  return RetrievalIndex(std::move(ids), std::move(d));
}

void write_vocabulary(const std::string& path, const Vocabulary& vocab) {
  detail::BinaryWriter out(path);
  out.magic("VVOC");
  out.u32(std::uint32_t(vocab.k()));
  out.u32(std::uint32_t(vocab.dim()));
  out.u32(std::uint32_t(vocab.seed & 0xFFFFFFFFu));
  out.u32(std::uint32_t(vocab.seed >> 32));
  out.raw(vocab.centroids.data(), size_t(vocab.centroids.size()) * sizeof(float));
}

Vocabulary read_vocabulary(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("VVOC");
  const auto k = in.u32(), dim = in.u32();
  if (k == 0 || k > (1u << 16) || dim == 0 || dim > (1u << 16)) throw IoError("'" + path + "': vocabulary header out of range");
  Vocabulary v;
  v.seed = in.u32();
  v.seed |= std::uint64_t(in.u32()) << 32;
  v.centroids.resize(dim, k);
  in.raw(v.centroids.data(), size_t(v.centroids.size()) * sizeof(float));
  in.expect_end();
  return v;
}

}  // namespace denseloc
