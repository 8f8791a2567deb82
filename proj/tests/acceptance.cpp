// One PASS/FAIL line per acceptance criterion; nonzero exit when any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "denseloc/evaluation.hpp"
#include "denseloc/pipeline.hpp"
#include "denseloc/pose_solver.hpp"
#include "denseloc/synthetic.hpp"
#include "denseloc/verification.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace denseloc;
using namespace denseloc::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::printf("%s  %-28s %s  [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

Outcome geometry_oracles() {
  const auto t0 = Clock::now();
  const Intrinsics K = Intrinsics::centered(500, 640, 480);
  std::mt19937_64 rng(1);

  double roundtrip = 0;
  for (int i = 0; i < 1000; ++i) {
    const Posed pose = random_pose(rng);
    const Vector2d px(uniform(rng, 0, K.width - 1), uniform(rng, 0, K.height - 1));
    const Vector3d X = backproject<double>(px, uniform(rng, 0.5, 20), pose, K);
    roundtrip = std::max(roundtrip, (*project<double>(X, pose, K) - px).norm());
  }

  double p3p_pos = 0, p3p_ang = 0;
  int triples = 0;
  while (triples < 1000) {
    const Posed gt = random_pose(rng);
    std::array<Correspondence2D3D, 3> c;
    for (auto& x : c) x = exact_correspondence(random_visible_point(rng, gt, K), gt, K);
    if (min_triangle_height(c[0].point, c[1].point, c[2].point) < 0.05) continue;
    double pos = INFINITY, ang = INFINITY;
    for (const Posed& s : solve_p3p(c[0], c[1], c[2], K)) {
      const PoseError e = pose_error(s, gt);
      if (e.positional < pos) pos = e.positional, ang = e.angular;
    }
    p3p_pos = std::max(p3p_pos, pos);
    p3p_ang = std::max(p3p_ang, ang);
    ++triples;
  }

  double jac = 0;
  for (int i = 0; i < 200; ++i) {
    const Posed pose = random_pose(rng);
    const Vector3d X = random_visible_point(rng, pose, K);
    const auto J = reprojection_jacobian(pose, X, K);
    if (!J) return {false, "no Jacobian for a visible point"};
    for (int k = 0; k < 6; ++k) {
      Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
      d[k] = 1e-6;
      const Vector2d fd = (*project<double>(X, apply_update(pose, d), K) - *project<double>(X, apply_update(pose, -d), K)) / 2e-6;
      jac = std::max(jac, (fd - J->col(k)).norm() / std::max(1.0, J->col(k).norm()));
    }
  }
  const double t = seconds_since(t0);
  const bool ok = roundtrip <= 1e-6 && p3p_pos <= 1e-6 && p3p_ang <= 1e-5 && jac <= 1e-5 && t < 10;
  return {ok, fmt("roundtrip %.1e px, P3P %d triples max %.1e m / %.1e deg, Jacobian rel %.1e, %.1f s < 10 s",
                  roundtrip, triples, p3p_pos, p3p_ang, jac, t)};
}

Outcome robust_fitting() {
  const auto t0 = Clock::now();
  const Intrinsics K = Intrinsics::centered(500, 640, 480);
  int ok = 0;
  double worst_pos = 0, worst_ang = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const Posed gt = room_pose(rng);
    const auto corr = make_correspondences(rng, gt, K, 80, 120, 1.0);  // 60% outliers
    RansacOptions opts;
    opts.threshold_px = 4.0;
    const auto h = p3p_lo_ransac(corr, K, opts, seed);
    if (!h) continue;
    const PoseError e = pose_error(h->pose, gt);
    worst_pos = std::max(worst_pos, e.positional);
    worst_ang = std::max(worst_ang, e.angular);
    ok += e.positional <= 0.01 && e.angular <= 0.1;
  }

  HomographyOptions hopts;
  hopts.threshold_px = 8.0;
  double worst_plane = 1.0;
  int two_found = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 11);
    const TwoPlaneMatches tp = two_plane_matches(rng);
    const CandidateVerdict v = verify_homographies(tp.matches, hopts, seed);
    two_found += v.homography_count() == 2;
    for (double share : plane_recovery(tp, v)) worst_plane = std::min(worst_plane, share);
  }
  const double t = seconds_since(t0);
  return {ok == 50 && two_found == 20 && worst_plane >= 0.9 && t < 30,
          fmt("RANSAC 60%% outliers %d/50 seeds (worst %.4f m / %.3f deg); two planes %d/20, worst plane recovery "
              "%.0f%%; %.1f s < 30 s",
              ok, worst_pos, worst_ang, two_found, 100 * worst_plane, t)};
}

Outcome matching_oracles() {
  std::mt19937_64 rng(2024);
  int mutual_ok = 0, refine_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    FeatureGrid q = make_grid(Level::coarse, 16, 64, 8, 8, 4), d = q;
    fill_random(q, rng);
    fill_random(d, rng);
    mutual_ok += pairs_of(mutual_nn(q, d)) == oracle_mutual(q, d, all(64), all(64));

    FeatureGrid cq = make_grid(Level::coarse, 16, 64, 5, 6, 4), cd = cq;
    fill_random(cq, rng);
    fill_random(cd, rng);
    FeatureGrid fq = make_grid(Level::fine, 4, 24, 27, 31, 4), fd = fq;
    fill_random(fq, rng);
    fill_random(fd, rng);
    const auto coarse = mutual_nn(cq, cd);
    const auto fine = refine_fine(coarse, cq, cd, fq, fd);
    refine_ok += as_map(fine) == oracle_refine(coarse, cq, cd, fq, fd) && as_map(fine).size() == fine.size();
  }
  return {mutual_ok == 100 && refine_ok == 100,
          fmt("mutual_nn %d/100, refine_fine %d/100 random grid pairs equal to brute force", mutual_ok, refine_ok)};
}

struct SceneRun {
  int db_views = 0, queries = 0;
  std::vector<LocalizationRecord> records;
  double seconds = 0;
};

SceneRun run_scene(std::uint64_t seed, bool confusers, bool binary) {
  const auto t0 = Clock::now();
  SceneSpec spec;
  spec.confusers = confusers;
  const SyntheticScene scene = generate_synthetic_scene(seed, spec);
  PipelineConfig config;
  config.seed = seed;
  config.binary = binary;
  SceneRun run;
  run.db_views = int(scene.database.size());
  run.queries = int(scene.queries.size());
  run.records = run_pipeline(scene.database, scene.queries, config);
  run.seconds = seconds_since(t0);
  return run;
}

double rate_at(const std::vector<LocalizationRecord>& records, double metres, double degrees,
               PoseSource source = PoseSource::final) {
  return localized_rate(record_errors(records, source), {metres}, degrees).rates[0];
}

SceneRun float_run;  // seed 1, no confusers; shared with the binarization check

Outcome end_to_end() {
  const auto t0 = Clock::now();
  float_run = run_scene(1, false, false);
  const double fine = rate_at(float_run.records, 0.1, 2.0);

  std::string per_seed;
  bool ordered = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SceneRun run = run_scene(seed, true, false);
    const double full = rate_at(run.records, 0.5, 10), pe = rate_at(run.records, 0.5, 10, PoseSource::densepe),
                 ret = rate_at(run.records, 0.5, 10, PoseSource::retrieval);
    ordered = ordered && full >= pe && pe >= ret;
    per_seed += fmt(" %.0f/%.0f/%.0f", full, pe, ret);
  }
  const double t = seconds_since(t0);
  const bool ok = float_run.db_views >= 36 && float_run.queries >= 25 && fine >= 90.0 && ordered && t < 300;
  return {ok, fmt("%d views, %d queries: %.0f%% within 0.1 m / 2 deg; confuser rate@0.5m full/no-DensePV/retrieval "
                  "per seed:%s; %.0f s < 300 s",
                  float_run.db_views, float_run.queries, fine, per_seed.c_str(), t)};
}

Outcome densepv() {
  const SyntheticScene s = generate_synthetic_scene(3);
  std::vector<const RgbdEntry*> entries;
  for (const auto& e : s.database) entries.push_back(&e);

  int bad_pixels = 0;
  long checked = 0;
  for (const RgbdEntry& e : s.database) {
    const RgbdEntry* one[] = {&e};
    const SynthesizedView v = synthesize_view(one, e.pose, e.K);
    for (int y = 0; y < e.K.height; ++y)
      for (int x = 0; x < e.K.width; ++x) {
        if (!e.depth.valid(x, y)) continue;
        ++checked;
        bool bad = !v.valid(x, y);
        for (int c = 0; c < 3 && !bad; ++c) bad = std::abs(int(v.rgb.at(x, y)[c]) - int(e.rgb.at(x, y)[c])) > 2;
        bad_pixels += bad;
      }
  }

  std::mt19937_64 rng(30);
  int wins = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& q = s.queries[size_t(i) % s.queries.size()];
    const Vector3d axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Posed off = Posed::from_center(
        rotation_from_axis_angle<double>(axis.normalized() * (30.0 * M_PI / 180.0)) * q.gt_pose->R,
        q.gt_pose->center());
    const VerificationScore gt = densepv_score(q.rgb, synthesize_view(entries, *q.gt_pose, q.intrinsics()));
    const VerificationScore perturbed = densepv_score(q.rgb, synthesize_view(entries, off, q.intrinsics()));
    wins += gt.usable && (!perturbed.usable || gt.similarity > perturbed.similarity);
  }
  return {wins >= 95 && bad_pixels == 0,
          fmt("ground truth beats 30 deg perturbation %d/100; identity render %d of %ld valid pixels off by > 2/255",
              wins, bad_pixels, checked)};
}

Outcome binarization() {
  const SyntheticScene scene = generate_synthetic_scene(1);
  PipelineConfig config;
  config.seed = 1;
  config.binary = true;
  const DatabaseIndex index = build_index(scene.database, config);
  size_t float_bytes = 0, binary_bytes = 0;
  for (size_t i = 0; i < index.pyramids.size(); ++i) {
    for (const FeatureGrid* g : {&index.pyramids[i].coarse, &index.pyramids[i].fine})
      float_bytes += size_t(g->descriptors.size()) * sizeof(float);
    binary_bytes += index.binary[i].coarse.bits.size() + index.binary[i].fine.bits.size();
  }
  const auto records = run_pipeline(scene.database, index, scene.queries, config);
  const double bin = rate_at(records, 0.5, 10), flt = rate_at(float_run.records, 0.5, 10);
  const bool ok = binary_bytes * 32 == float_bytes && std::abs(bin - flt) <= 3.0;
  return {ok, fmt("storage %zu / %zu bytes = 1/%.2f; rate@0.5m binary %.1f%% vs float %.1f%%", binary_bytes,
                  float_bytes, double(float_bytes) / double(binary_bytes), bin, flt)};
}

Outcome evaluation_math() {
  std::vector<std::string> failed;
  auto expect = [&](bool cond, const char* what) {
    if (!cond) failed.push_back(what);
  };
  expect(std::abs(localized_rate({{0.1, 1}, {0.6, 2}, {0.3, 20}}, {0.5}, 10).rates[0] - 100.0 / 3) < 1e-12,
         "rate example");
  expect(localized_rate({{0.5, 10}}, {0.5}, 10).rates[0] == 100.0, "inclusive bounds");
  const PoseError m = median_errors({{1, 30}, {3, 10}, {2, 20}});
  expect(m.positional == 2 && m.angular == 20, "odd median");
  const PoseError m2 = median_errors({{1, 1}, {2, 4}});
  expect(m2.positional == 1 && m2.angular == 1, "even median");

  std::vector<PoseError> e;
  for (int i = 0; i < 329; ++i) e.push_back({i < 128 ? 0.1 : i < 186 ? 0.4 : i < 230 ? 0.9 : 5.0, 1.0});
  expect(format_rate_table({localized_rate(e, {0.25, 0.5, 1.0})}) ==
             " 0.25m & 38.9 \\\\\n 0.50m & 56.5 \\\\\n 1.00m & 69.9 \\\\\n",
         "table layout");

  std::vector<std::uint8_t> edges(64 * 64, 0);
  for (int y = 0; y < 64; ++y) edges[size_t(y) * 64 + 10] = 1;
  const EdgeCheckResult near = edge_reprojection_check(edges, 64, 64, {{35, 5}, {12, 5}, {14, 5}});
  expect(near.dropped == 1 && near.median_px == 2.0 && near.accepted, "20 px cutoff");
  const EdgeCheckResult far = edge_reprojection_check(edges, 64, 64, {{15, 5}, {16, 5}, {17, 5}});
  expect(far.median_px == 6.0 && !far.accepted, "5 px acceptance");
  const EdgeCheckResult at = edge_reprojection_check(edges, 64, 64, {{14, 5}, {15, 5}, {15, 6}});
  expect(at.median_px == 5.0 && !at.accepted, "5 px is rejected");
  expect(!edge_reprojection_check(edges, 64, 64, {{40, 5}}).median_px, "all dropped");

  std::string detail = "rates, medians, table layout, 20 px cutoff and 5 px rule";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  report("geometry oracle suite", geometry_oracles);
  report("robust-fitting suite", robust_fitting);
  report("matching oracle suite", matching_oracles);
  report("end-to-end synthetic scene", end_to_end);
  report("DensePV discrimination", densepv);
  report("binarization", binarization);
  report("evaluation math", evaluation_math);
  std::printf("%d failed, %.0f s total\n", failures, seconds_since(t0));
  return failures ? 1 : 0;
}
