#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "denseloc/config.hpp"
#include "denseloc/evaluation.hpp"
#include "denseloc/features.hpp"
#include "denseloc/retrieval.hpp"
#include "denseloc/scene.hpp"

namespace denseloc {

/// Everything precomputed over the database: feature maps, optional binary
/// codes, the vocabulary and the global-descriptor index.
struct DatabaseIndex {
  std::vector<FeaturePyramid> pyramids;
  std::vector<BinaryFeaturePyramid> binary;  // empty unless binarised
  std::vector<float> coarse_thresholds, fine_thresholds;
  Vocabulary vocabulary;
  RetrievalIndex retrieval;
};

/// Extracts features for every entry, trains the vocabulary, aggregates the
/// index and (when config.binary) fits the binarizers.
DatabaseIndex build_index(const std::vector<RgbdEntry>& db, const PipelineConfig& config);

/// Writes vocabulary.vvoc, index.vidx, thresholds_{coarse,fine}.dfth and one
/// <id>.dfmp (and <id>.dfmb when binarised) per entry into `dir`.
void save_index(const std::string& dir, const std::vector<RgbdEntry>& db, const DatabaseIndex& index);
DatabaseIndex load_index(const std::string& dir, const std::vector<RgbdEntry>& db);

struct CandidateRecord {
  std::string db_id;
  int retrieval_rank = 0;
  int homography_inliers = 0;
  int homographies = 0;
  std::optional<Posed> pose;
  int pose_inliers = 0;
  double mean_error_px = 0.0;
  std::optional<double> similarity;  // set when DensePV ran and the score was usable
  double valid_fraction = 0.0;
};

struct LocalizationRecord {
  std::string query_id;
  std::optional<Posed> pose;  // final answer
  std::string failure;        // empty on success
  std::string retrieval_top1;
  std::optional<Posed> retrieval_pose;  // pose of the top retrieved database image
  std::optional<Posed> densepe_pose;    // largest P3P inlier count
  std::vector<CandidateRecord> candidates;
  int selected = -1;  // index into candidates
  bool densepv_used = false;
  std::optional<Posed> gt_pose;
  std::optional<PoseError> error;
};

class Localizer {
 public:
  Localizer(const std::vector<RgbdEntry>& db, const DatabaseIndex& index, PipelineConfig config);

  LocalizationRecord localize(const QueryImage& query) const;

  const PipelineConfig& config() const { return config_; }

 private:
  const std::vector<RgbdEntry>& db_;
  const DatabaseIndex& index_;
  PipelineConfig config_;
};

/// Localises every query; per-query failures are recorded, never thrown.
std::vector<LocalizationRecord> run_pipeline(const std::vector<RgbdEntry>& db, const DatabaseIndex& index,
                                             const std::vector<QueryImage>& queries, const PipelineConfig& config);
std::vector<LocalizationRecord> run_pipeline(const std::vector<RgbdEntry>& db, const std::vector<QueryImage>& queries,
                                             const PipelineConfig& config);

enum class PoseSource { final, densepe, retrieval };

/// Errors for the chosen pose source; failed or missing poses count as infinitely wrong.
std::vector<PoseError> record_errors(const std::vector<LocalizationRecord>& records,
                                     PoseSource source = PoseSource::final);

/// One JSON object per line.
void write_records(std::ostream& out, const std::vector<LocalizationRecord>& records);
std::vector<LocalizationRecord> read_records(std::istream& in);

/// "<db id> <12 pose numbers> <inliers> <mean error>" per candidate with a pose.
void write_hypothesis_dump(std::ostream& out, const LocalizationRecord& record);

}  // namespace denseloc
