#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "denseloc/features.hpp"
#include "denseloc/matching.hpp"
#include "denseloc/pose_solver.hpp"
#include "denseloc/verification.hpp"

namespace denseloc {

/// Every tunable constant of the localisation pipeline.
struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 1;

  // Retrieval.
  int top_n = 100;
  int vocab_k = 32;
  int vocab_sample = 10000;
  int kmeans_max_iterations = 100;

  // Dense features and matching.
  DenseConfig dense;
  bool binary = false;
  int binarizer_min_samples = 1000;
  HomographyOptions homography{.threshold_px = 0.0};  // threshold <= 0: 2 x fine stride
  int keep = 10;

  // Pose estimation. The inlier threshold is given at `pose_reference_side`
  // pixels and scaled with the query's working resolution, but never below
  // `pose_threshold_min_strides` fine-grid strides.
  RansacOptions ransac;
  double pose_reference_side = 1600.0;
  double pose_threshold_min_strides = 1.5;
  int max_query_side = 1600;

  // Verification.
  bool densepv = true;
  VerificationOptions verification;

  // Evaluation.
  double angle_gate = 10.0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies one key=value setting; throws ConfigError on unknown keys or bad values.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value);

/// UTF-8 file of `key = value` lines; '#' starts a comment, [sections] are ignored.
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});

/// Current values of every key, in `key = value` form.
std::string dump_config(const PipelineConfig& config);

}  // namespace denseloc
