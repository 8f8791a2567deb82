#include "denseloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace denseloc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Deterministic, evenly spaced subsample of the non-empty descriptors of `grids`.
DescriptorMatrix sample_descriptors(const std::vector<const FeatureGrid*>& grids, int max_count) {
  std::vector<std::pair<const FeatureGrid*, int>> cells;
  for (const FeatureGrid* g : grids)
    for (int c = 0; c < g->geometry.cells(); ++c)
      if (!g->is_empty_cell(c)) cells.emplace_back(g, c);
  const size_t n = std::min(cells.size(), size_t(std::max(max_count, 0)));
  const int dim = grids.empty() ? 0 : grids.front()->geometry.dim;
  DescriptorMatrix out(dim, Eigen::Index(n));
  for (size_t i = 0; i < n; ++i) {
    const size_t src = n == cells.size() ? i : size_t(double(i) * double(cells.size()) / double(n));
    out.col(Eigen::Index(i)) = cells[src].first->descriptor(cells[src].second);
  }
  return out;
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads > 0 ? threads : int(std::thread::hardware_concurrency()), count));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

BinaryFeaturePyramid binarize_pyramid(const FeaturePyramid& p, const std::vector<float>& coarse,
                                      const std::vector<float>& fine) {
  return {binarize(p.coarse, coarse), binarize(p.fine, fine)};
}

// Depth at a continuous pixel: bilinear when the four neighbours agree, else nearest.
std::optional<double> depth_at(const DepthMap& depth, const Vector2d& px) {
  const int x0 = int(std::floor(px.x())), y0 = int(std::floor(px.y()));
  const double ax = px.x() - x0, ay = px.y() - y0;
  if (x0 >= 0 && y0 >= 0 && x0 + 1 < depth.width && y0 + 1 < depth.height && depth.valid(x0, y0) &&
      depth.valid(x0 + 1, y0) && depth.valid(x0, y0 + 1) && depth.valid(x0 + 1, y0 + 1)) {
    const float a = depth.at(x0, y0), b = depth.at(x0 + 1, y0), c = depth.at(x0, y0 + 1), d = depth.at(x0 + 1, y0 + 1);
    const float lo = std::min({a, b, c, d}), hi = std::max({a, b, c, d});
    if (hi <= 1.05f * lo)
      return (1 - ay) * ((1 - ax) * a + ax * b) + ay * ((1 - ax) * c + ax * d);
  }
  const int xn = int(std::lround(px.x())), yn = int(std::lround(px.y()));
  if (xn < 0 || yn < 0 || xn >= depth.width || yn >= depth.height || !depth.valid(xn, yn)) return std::nullopt;
  return double(depth.at(xn, yn));
}

std::vector<Correspondence2D3D> correspondences(const std::vector<CellMatch>& matches, const RgbdEntry& entry) {
  std::vector<Correspondence2D3D> out;
  out.reserve(matches.size());
  for (const CellMatch& m : matches) {
    const auto z = depth_at(entry.depth, m.db_px);
    if (!z) continue;
    const Vector3d X = backproject<double>(m.db_px, *z, entry.pose, entry.K);
    if (X.allFinite()) out.push_back({m.query_px, X});
  }
  return out;
}

}  // namespace

DatabaseIndex build_index(const std::vector<RgbdEntry>& db, const PipelineConfig& config) {
  if (db.empty()) throw std::invalid_argument("build_index: empty database");
  DatabaseIndex index;
  index.pyramids.resize(db.size());
  parallel_for(int(db.size()), config.threads,
               [&](int i) { index.pyramids[size_t(i)] = extract_dense(db[size_t(i)].rgb, config.dense); });

  std::vector<const FeatureGrid*> fine, coarse;
  for (const auto& p : index.pyramids) {
    fine.push_back(&p.fine);
    coarse.push_back(&p.coarse);
  }
  KMeansOptions km;
  km.max_iterations = config.kmeans_max_iterations;
  index.vocabulary = train_vocabulary(sample_descriptors(fine, config.vocab_sample), config.vocab_k, config.seed, km);
  for (size_t i = 0; i < db.size(); ++i)
    index.retrieval.add(db[i].id, aggregate(index.pyramids[i].fine, index.vocabulary));

  if (config.binary) {
    const int budget = std::max(config.vocab_sample, config.binarizer_min_samples);
    index.coarse_thresholds = fit_binarizer(sample_descriptors(coarse, budget), config.binarizer_min_samples);
    index.fine_thresholds = fit_binarizer(sample_descriptors(fine, budget), config.binarizer_min_samples);
    for (const auto& p : index.pyramids)
      index.binary.push_back(binarize_pyramid(p, index.coarse_thresholds, index.fine_thresholds));
  }
  return index;
}

void save_index(const std::string& dir, const std::vector<RgbdEntry>& db, const DatabaseIndex& index) {
  fs::create_directories(dir);
  const fs::path d(dir);
  write_vocabulary((d / "vocabulary.vvoc").string(), index.vocabulary);
  write_index((d / "index.vidx").string(), index.retrieval);
  for (size_t i = 0; i < db.size(); ++i) write_feature_maps((d / (db[i].id + ".dfmp")).string(), index.pyramids[i]);
  if (!index.binary.empty()) {
    write_thresholds((d / "thresholds_coarse.dfth").string(), index.coarse_thresholds);
    write_thresholds((d / "thresholds_fine.dfth").string(), index.fine_thresholds);
    for (size_t i = 0; i < db.size(); ++i)
      write_binary_feature_maps((d / (db[i].id + ".dfmb")).string(), index.binary[i]);
  }
}

DatabaseIndex load_index(const std::string& dir, const std::vector<RgbdEntry>& db) {
  const fs::path d(dir);
  DatabaseIndex index;
  index.vocabulary = read_vocabulary((d / "vocabulary.vvoc").string());
  index.retrieval = read_index((d / "index.vidx").string());
  if (index.retrieval.ids().size() != db.size())
    throw IoError("index in '" + dir + "' covers " + std::to_string(index.retrieval.size()) + " images, database has " +
                  std::to_string(db.size()));
  for (size_t i = 0; i < db.size(); ++i) {
    if (index.retrieval.ids()[i] != db[i].id) throw IoError("index order does not match the database manifest");
    FeaturePyramid p = read_feature_maps((d / (db[i].id + ".dfmp")).string());
    for (FeatureGrid* g : {&p.coarse, &p.fine}) {
      g->geometry.image_width = db[i].rgb.width;
      g->geometry.image_height = db[i].rgb.height;
    }
    index.pyramids.push_back(std::move(p));
  }
  if (fs::exists(d / "thresholds_fine.dfth")) {
    index.coarse_thresholds = read_thresholds((d / "thresholds_coarse.dfth").string());
    index.fine_thresholds = read_thresholds((d / "thresholds_fine.dfth").string());
    for (size_t i = 0; i < db.size(); ++i) {
      const fs::path bin = d / (db[i].id + ".dfmb");
      index.binary.push_back(fs::exists(bin) ? read_binary_feature_maps(bin.string(), index.coarse_thresholds,
                                                                         index.fine_thresholds)
                                             : binarize_pyramid(index.pyramids[i], index.coarse_thresholds,
                                                                index.fine_thresholds));
    }
  }
  return index;
}

Localizer::Localizer(const std::vector<RgbdEntry>& db, const DatabaseIndex& index, PipelineConfig config)
    : db_(db), index_(index), config_(std::move(config)) {
  if (index_.pyramids.size() != db_.size()) throw std::invalid_argument("Localizer: index does not match database");
  if (config_.binary && index_.binary.size() != db_.size())
    throw std::invalid_argument("Localizer: binary mode requested but the index has no binary codes");
}

LocalizationRecord Localizer::localize(const QueryImage& query) const {
  LocalizationRecord rec;
  rec.query_id = query.id;
  rec.gt_pose = query.gt_pose;
  const PipelineConfig& cfg = config_;
  const auto finish = [&]() -> LocalizationRecord {
    if (rec.pose && rec.gt_pose) rec.error = pose_error(*rec.pose, *rec.gt_pose);
    return rec;
  };
  try {
    double scale = 1.0;
    const RgbImage work = downscale_to_fit(query.rgb, cfg.max_query_side, &scale);
    const Intrinsics K = Intrinsics::centered(query.f * scale, work.width, work.height);
    const FeaturePyramid pyramid = extract_dense(work, cfg.dense);
    std::optional<BinaryFeaturePyramid> bin;
    if (cfg.binary) bin = binarize_pyramid(pyramid, index_.coarse_thresholds, index_.fine_thresholds);

    // Candidate retrieval.
    const auto hits = index_.retrieval.retrieve_top_n(aggregate(pyramid.fine, index_.vocabulary), cfg.top_n);
    rec.retrieval_top1 = hits.front().id;
    rec.retrieval_pose = db_[size_t(hits.front().index)].pose;

    // Dense matching and homography verification.
    HomographyOptions hopts = cfg.homography;
    if (hopts.threshold_px <= 0) hopts.threshold_px = 2.0 * cfg.dense.fine.stride;
    std::vector<CandidateVerdict> verdicts(hits.size());
    for (size_t k = 0; k < hits.size(); ++k) {
      const int i = hits[k].index;
      std::vector<CellMatch> fine;
      if (bin) {
        const auto& d = index_.binary[size_t(i)];
        fine = refine_fine(mutual_nn(bin->coarse, d.coarse), bin->coarse, d.coarse, bin->fine, d.fine);
      } else {
        const auto& d = index_.pyramids[size_t(i)];
        fine = refine_fine(mutual_nn(pyramid.coarse, d.coarse), pyramid.coarse, d.coarse, pyramid.fine, d.fine);
      }
      verdicts[k] = verify_homographies(fine, hopts, cfg.seed ^ std::uint64_t(k));
      verdicts[k].id = hits[k].id;
      verdicts[k].retrieval_rank = int(k) + 1;
    }
    const std::vector<int> kept = rerank(verdicts, cfg.keep);

    // P3P-LO-RANSAC per kept candidate.
    RansacOptions ropts = cfg.ransac;
    ropts.threshold_px = std::max(cfg.ransac.threshold_px * std::max(work.width, work.height) / cfg.pose_reference_side,
                                  cfg.pose_threshold_min_strides * cfg.dense.fine.stride);
    std::vector<ScoredHypothesis> scored;
    std::vector<int> scored_candidate;
    for (size_t r = 0; r < kept.size(); ++r) {
      const CandidateVerdict& v = verdicts[size_t(kept[r])];
      const RgbdEntry& entry = db_[size_t(hits[size_t(kept[r])].index)];
      CandidateRecord cr;
      cr.db_id = v.id;
      cr.retrieval_rank = v.retrieval_rank;
      cr.homography_inliers = v.score;
      cr.homographies = v.homography_count();
      const auto corr = correspondences(v.inliers, entry);
      if (corr.size() >= 3) {
        if (auto h = p3p_lo_ransac(corr, K, ropts, cfg.seed ^ (0x5DEECE66Dull + std::uint64_t(r)))) {
          h->db_id = v.id;
          cr.pose = h->pose;
          cr.pose_inliers = h->inlier_count;
          cr.mean_error_px = h->mean_error_px;
          scored.push_back({std::move(*h), {}, int(r) + 1});
          scored_candidate.push_back(int(rec.candidates.size()));
        }
      }
      rec.candidates.push_back(std::move(cr));
    }
    if (scored.empty()) {
      rec.failure = "no pose hypothesis reached the inlier floor";
      return finish();
    }
    int densepe_best = 0;
    for (int i = 1; i < int(scored.size()); ++i)
      if (scored[size_t(i)].hypothesis.inlier_count > scored[size_t(densepe_best)].hypothesis.inlier_count)
        densepe_best = i;
    rec.densepe_pose = scored[size_t(densepe_best)].hypothesis.pose;

    if (!cfg.densepv) {
      rec.selected = scored_candidate[size_t(densepe_best)];
      rec.pose = rec.densepe_pose;
      return finish();
    }

    // Pose verification by view synthesis.
    for (size_t i = 0; i < scored.size(); ++i) {
      const Posed& pose = scored[i].hypothesis.pose;
      const auto entries = entries_within(db_, pose.center(), cfg.verification.render_radius);
      if (entries.empty()) continue;
      const SynthesizedView view = synthesize_view(entries, pose, K, cfg.verification.max_splat);
      scored[i].score = densepv_score(work, view, cfg.verification);
      CandidateRecord& cr = rec.candidates[size_t(scored_candidate[i])];
      cr.valid_fraction = scored[i].score.valid_fraction;
      if (scored[i].score.usable) cr.similarity = scored[i].score.similarity;
    }
    const SelectionResult sel = select_best(scored);
    rec.densepv_used = !sel.used_fallback;
    rec.selected = scored_candidate[size_t(sel.best)];
    rec.pose = scored[size_t(sel.best)].hypothesis.pose;
  } catch (const std::exception& ex) {
    rec.pose.reset();
    rec.failure = ex.what();
  }
  return finish();
}

std::vector<LocalizationRecord> run_pipeline(const std::vector<RgbdEntry>& db, const DatabaseIndex& index,
                                             const std::vector<QueryImage>& queries, const PipelineConfig& config) {
  std::vector<LocalizationRecord> records(queries.size());
  if (queries.empty()) return records;
  const Localizer localizer(db, index, config);
  parallel_for(int(queries.size()), config.threads,
               [&](int i) { records[size_t(i)] = localizer.localize(queries[size_t(i)]); });
  return records;
}

std::vector<LocalizationRecord> run_pipeline(const std::vector<RgbdEntry>& db, const std::vector<QueryImage>& queries,
                                             const PipelineConfig& config) {
  if (queries.empty()) return {};
  const DatabaseIndex index = build_index(db, config);
  return run_pipeline(db, index, queries, config);
}

std::vector<PoseError> record_errors(const std::vector<LocalizationRecord>& records, PoseSource source) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<PoseError> out;
  for (const auto& r : records) {
    if (!r.gt_pose) continue;
    const std::optional<Posed>& p =
        source == PoseSource::final ? r.pose : source == PoseSource::densepe ? r.densepe_pose : r.retrieval_pose;
    out.push_back(p ? pose_error(*p, *r.gt_pose) : PoseError{inf, inf});
  }
  return out;
}

namespace {

json pose_to_json(const std::optional<Posed>& p) { return p ? json(pose_to_numbers(*p)) : json(nullptr); }

std::optional<Posed> pose_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return pose_from_numbers(j.get<std::vector<double>>());
}

}  // namespace

void write_records(std::ostream& out, const std::vector<LocalizationRecord>& records) {
  for (const auto& r : records) {
    json cands = json::array();
    for (const auto& c : r.candidates) {
      cands.push_back({{"db_id", c.db_id},
                       {"retrieval_rank", c.retrieval_rank},
                       {"homography_inliers", c.homography_inliers},
                       {"homographies", c.homographies},
                       {"pose", pose_to_json(c.pose)},
                       {"pose_inliers", c.pose_inliers},
                       {"mean_error_px", c.mean_error_px},
                       {"similarity", c.similarity ? json(*c.similarity) : json(nullptr)},
                       {"valid_fraction", c.valid_fraction}});
    }
    json j = {{"query_id", r.query_id},
              {"pose", pose_to_json(r.pose)},
              {"failure", r.failure},
              {"retrieval_top1", r.retrieval_top1},
              {"retrieval_pose", pose_to_json(r.retrieval_pose)},
              {"densepe_pose", pose_to_json(r.densepe_pose)},
              {"selected", r.selected},
              {"densepv_used", r.densepv_used},
              {"gt_pose", pose_to_json(r.gt_pose)},
              {"candidates", cands}};
    if (r.error) j["error"] = {{"positional_m", r.error->positional}, {"angular_deg", r.error->angular}};
    out << j.dump() << '\n';
  }
}

std::vector<LocalizationRecord> read_records(std::istream& in) {
  std::vector<LocalizationRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      LocalizationRecord r;
      r.query_id = j.at("query_id").get<std::string>();
      r.pose = pose_from_json(j.value("pose", json(nullptr)));
      r.failure = j.value("failure", std::string());
      r.retrieval_top1 = j.value("retrieval_top1", std::string());
      r.retrieval_pose = pose_from_json(j.value("retrieval_pose", json(nullptr)));
      r.densepe_pose = pose_from_json(j.value("densepe_pose", json(nullptr)));
      r.selected = j.value("selected", -1);
      r.densepv_used = j.value("densepv_used", false);
      r.gt_pose = pose_from_json(j.value("gt_pose", json(nullptr)));
      for (const auto& c : j.value("candidates", json::array())) {
        CandidateRecord cr;
        cr.db_id = c.at("db_id").get<std::string>();
        cr.retrieval_rank = c.value("retrieval_rank", 0);
        cr.homography_inliers = c.value("homography_inliers", 0);
        cr.homographies = c.value("homographies", 0);
        cr.pose = pose_from_json(c.value("pose", json(nullptr)));
        cr.pose_inliers = c.value("pose_inliers", 0);
        cr.mean_error_px = c.value("mean_error_px", 0.0);
        if (c.contains("similarity") && !c["similarity"].is_null()) cr.similarity = c["similarity"].get<double>();
        cr.valid_fraction = c.value("valid_fraction", 0.0);
        r.candidates.push_back(std::move(cr));
      }
      if (r.pose && r.gt_pose) r.error = pose_error(*r.pose, *r.gt_pose);
      out.push_back(std::move(r));
    } catch (const std::exception& ex) {
      throw IoError("records line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_hypothesis_dump(std::ostream& out, const LocalizationRecord& record) {
  for (const auto& c : record.candidates) {
    if (!c.pose) continue;
    out << c.db_id << ' ' << format_pose(*c.pose) << ' ' << c.pose_inliers << ' ' << c.mean_error_px << '\n';
  }
}

}  // namespace denseloc
