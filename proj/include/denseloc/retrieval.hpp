#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "denseloc/features.hpp"

namespace denseloc {

struct Vocabulary {
  std::uint64_t seed = 0;
  DescriptorMatrix centroids;  // dim x k

  int k() const { return int(centroids.cols()); }
  int dim() const { return int(centroids.rows()); }
};

using GlobalDescriptor = Eigen::VectorXf;

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // max centroid movement
  int min_samples_per_cluster = 10;
};

/// k-means with k-means++ seeding; zero columns of `sample` are ignored.
Vocabulary train_vocabulary(const DescriptorMatrix& sample, int k, std::uint64_t seed, const KMeansOptions& opts = {});

/// Index of the nearest centroid (ties to the lowest index).
int assign_cluster(const Vocabulary& vocab, const Eigen::Ref<const Eigen::VectorXf>& descriptor);

/// VLAD over the non-empty cells of `grid` with intra- and global L2 normalisation.
GlobalDescriptor aggregate(const FeatureGrid& grid, const Vocabulary& vocab);
inline GlobalDescriptor aggregate(const FeaturePyramid& pyramid, const Vocabulary& vocab) {
  return aggregate(pyramid.fine, vocab);
}

struct RetrievalHit {
  std::string id;
  int index = 0;  // row in the index
  double distance = 0.0;
};

class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(std::vector<std::string> ids, Eigen::MatrixXf descriptors);

  void add(const std::string& id, const GlobalDescriptor& d);

  int size() const { return int(ids_.size()); }
  int dim() const { return int(descriptors_.rows()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXf& descriptors() const { return descriptors_; }  // dim x count

  /// Exact scan; ascending L2 distance, ties by ascending id.
  std::vector<RetrievalHit> retrieve_top_n(const GlobalDescriptor& query, int n = 100) const;

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixXf descriptors_;
};

/// "VIDX": magic, u32 count, u32 dim, length-prefixed ids, float32 row per entry.
void write_index(const std::string& path, const RetrievalIndex& index);
RetrievalIndex read_index(const std::string& path);
/// "VVOC": magic, u32 k, u32 dim, u32 seed-lo, u32 seed-hi, float32 centroid rows.
void write_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::string& path);

}  // namespace denseloc
