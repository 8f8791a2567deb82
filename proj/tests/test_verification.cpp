#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "denseloc/synthetic.hpp"
#include "denseloc/verification.hpp"
#include "support.hpp"

using namespace denseloc;
using namespace denseloc::testing;

namespace {

const SyntheticScene& scene() {
  static const SyntheticScene s = generate_synthetic_scene(3);
  return s;
}

std::vector<const RgbdEntry*> all_entries(const std::vector<RgbdEntry>& db) {
  std::vector<const RgbdEntry*> out;
  for (const auto& e : db) out.push_back(&e);
  return out;
}

SynthesizedView full_view(const RgbImage& img) {
  SynthesizedView v;
  v.width = img.width;
  v.height = img.height;
  v.rgb = img;
  v.mask.assign(size_t(img.width) * img.height, 1);
  v.z.assign(v.mask.size(), 1.0f);
  return v;
}

SynthesizedView blank_view(int w, int h) {
  SynthesizedView v;
  v.width = w;
  v.height = h;
  v.rgb = RgbImage(w, h);
  v.mask.assign(size_t(w) * h, 0);
  v.z.assign(v.mask.size(), std::numeric_limits<float>::infinity());
  return v;
}

void set(SynthesizedView& v, int x, int y, std::uint8_t value) {
  std::fill(v.rgb.at(x, y), v.rgb.at(x, y) + 3, value);
  v.mask[size_t(y) * v.width + x] = 1;
}

double gray_correlation(const RgbImage& a, const RgbImage& b, const std::vector<std::uint8_t>& mask) {
  const GrayImage ga = to_gray(a), gb = to_gray(b);
  double sa = 0, sb = 0, n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (mask[size_t(y) * a.width + x]) sa += ga(y, x), sb += gb(y, x), ++n;
  sa /= n;
  sb /= n;
  double ab = 0, aa = 0, bb = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (mask[size_t(y) * a.width + x]) {
        ab += (ga(y, x) - sa) * (gb(y, x) - sb);
        aa += (ga(y, x) - sa) * (ga(y, x) - sa);
        bb += (gb(y, x) - sb) * (gb(y, x) - sb);
      }
  return ab / std::sqrt(aa * bb);
}

ScoredHypothesis scored(double similarity, int inliers, int rank, bool usable = true) {
  ScoredHypothesis s;
  s.score.similarity = similarity;
  s.score.usable = usable;
  s.hypothesis.inlier_count = inliers;
  s.candidate_rank = rank;
  return s;
}

}  // namespace

TEST_CASE("rendering a database entry from its own pose reproduces it") {
  for (const RgbdEntry& e : scene().database) {
    const RgbdEntry* one[] = {&e};
    const SynthesizedView v = synthesize_view(one, e.pose, e.K);
    int bad = 0;
    for (int y = 0; y < e.K.height; ++y)
      for (int x = 0; x < e.K.width; ++x) {
        if (!e.depth.valid(x, y)) continue;
        bad += !v.valid(x, y);
        for (int c = 0; c < 3; ++c) bad += std::abs(int(v.rgb.at(x, y)[c]) - int(e.rgb.at(x, y)[c])) > 2;
        bad += std::abs(v.z[size_t(y) * v.width + x] - e.depth.at(x, y)) > 1e-3 * e.depth.at(x, y);
      }
    CHECK_MESSAGE(bad == 0, e.id);
  }
}

TEST_CASE("the z-test keeps the nearest point") {
  const Intrinsics K = Intrinsics::centered(10, 3, 3);
  auto entry = [&](float depth, std::uint8_t value) {
    RgbdEntry e;
    e.id = "e";
    e.K = K;
    e.rgb = RgbImage(3, 3, value);
    e.depth = DepthMap(3, 3);
    e.depth.at(1, 1) = depth;
    return e;
  };
  const RgbdEntry near = entry(1.0f, 200), far = entry(2.0f, 50);
  for (const auto& order : {std::vector<const RgbdEntry*>{&near, &far}, std::vector<const RgbdEntry*>{&far, &near}}) {
    const SynthesizedView v = synthesize_view(order, Posed(), K);
    REQUIRE(v.valid(1, 1));
    CHECK(v.rgb.at(1, 1)[0] == 200);
    CHECK(v.z[4] == 1.0f);
  }
  CHECK_THROWS_AS(synthesize_view(std::vector<const RgbdEntry*>{}, Posed(), K), std::invalid_argument);
}

TEST_CASE("stored depth is the minimum over every splatted point") {
  const auto& s = scene();
  const Posed pose = *s.queries[0].gt_pose;
  const Intrinsics K = s.queries[0].intrinsics();
  const auto entries = all_entries(s.database);
  const SynthesizedView v = synthesize_view(entries, pose, K);
  int violations = 0;
  for (const RgbdEntry* e : entries)
    for (int y = 0; y < e->K.height; y += 3)
      for (int x = 0; x < e->K.width; x += 3) {
        const Vector3d X = backproject<double>({double(x), double(y)}, e->depth.at(x, y), e->pose, e->K);
        const auto p = project<double>(X, pose, K);
        if (!p) continue;
        const int u = int(std::lround(p->x())), w = int(std::lround(p->y()));
        if (u < 0 || w < 0 || u >= K.width || w >= K.height) continue;
        violations += v.z[size_t(w) * K.width + u] > pose.transform(X).z() * (1 + 1e-6);
      }
  CHECK(violations == 0);
}

TEST_CASE("renders from query poses agree with the analytic renderer") {
  const auto& s = scene();
  for (const auto& q : s.queries) {
    const Intrinsics K = q.intrinsics();
    const auto entries = entries_within(s.database, q.gt_pose->center(), 10.0);
    const SynthesizedView v = synthesize_view(entries, *q.gt_pose, K);
    const RgbImage truth = s.room.render(*q.gt_pose, K).first;
    const double r = gray_correlation(v.rgb, truth, v.mask);
    CHECK_MESSAGE(r >= 0.95, q.id << " correlation " << r);
    CHECK(v.valid_fraction() > 0.9);
  }
}

TEST_CASE("entries_within") {
  const auto& db = scene().database;
  const Vector3d c = db[0].pose.center();
  const auto near = entries_within(db, c, 0.1);
  CHECK(near.size() == 6);  // one position, six yaws
  CHECK(entries_within(db, c, 100.0).size() == db.size());
  CHECK(entries_within(db, Vector3d(100, 0, 0), 1.0).empty());
}

TEST_CASE("fill_holes examples") {
  SUBCASE("nothing blank") {
    const SynthesizedView v = full_view(scene().database[0].rgb);
    CHECK(fill_holes(v) == v.rgb);
  }
  SUBCASE("linear interpolation along a row") {
    SynthesizedView v = blank_view(5, 1);
    set(v, 0, 0, 10);
    set(v, 4, 0, 50);
    const RgbImage out = fill_holes(v);
    const int expected[] = {10, 20, 30, 40, 50};
    for (int x = 0; x < 5; ++x) CHECK(out.at(x, 0)[0] == expected[x]);
  }
  SUBCASE("a single pixel extrapolates everywhere") {
    SynthesizedView v = blank_view(7, 5);
    set(v, 2, 3, 77);
    const RgbImage out = fill_holes(v);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) CHECK(out.at(x, y)[1] == 77);
  }
  SUBCASE("horizontal and vertical passes are averaged") {
    SynthesizedView v = blank_view(3, 3);
    set(v, 0, 1, 0);
    set(v, 2, 1, 100);
    set(v, 1, 0, 20);
    set(v, 1, 2, 20);
    // Center: horizontal gives 50, vertical gives 20.
    CHECK(fill_holes(v).at(1, 1)[0] == 35);
  }
  SUBCASE("valid pixels are unchanged") {
    std::mt19937_64 rng(2);
    SynthesizedView v = full_view(scene().database[3].rgb);
    for (auto& m : v.mask) m = uniform(rng, 0, 1) < 0.3;
    const RgbImage out = fill_holes(v);
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x)
        if (v.valid(x, y)) CHECK(std::equal(out.at(x, y), out.at(x, y) + 3, v.rgb.at(x, y)));
  }
  CHECK_THROWS_AS(fill_holes(blank_view(4, 4)), std::invalid_argument);
}

TEST_CASE("densepv_score examples") {
  const RgbImage& img = scene().queries[0].rgb;
  const VerificationScore self = densepv_score(img, full_view(img));
  CHECK(self.usable);
  CHECK(self.similarity == 0.0);
  CHECK(self.valid_fraction == 1.0);

  // Only the left tenth of the image is rendered.
  SynthesizedView sparse = full_view(img);
  for (int y = 0; y < img.height; ++y)
    for (int x = img.width / 10; x < img.width; ++x) sparse.mask[size_t(y) * img.width + x] = 0;
  const VerificationScore s = densepv_score(img, sparse);
  CHECK_FALSE(s.usable);
  CHECK(std::isinf(s.similarity));
  CHECK(s.similarity < 0);
  CHECK(s.valid_fraction < 0.3);

  CHECK_THROWS_AS(densepv_score(scene().database[0].rgb, full_view(RgbImage(10, 10))), std::invalid_argument);

  const RgbImage heat = error_heat_map(self, VerificationOptions{}, img.width, img.height);
  CHECK(heat.width == img.width);
  CHECK(heat.height == img.height);
}

TEST_CASE("densepv_score ignores a global gain and bias") {
  const auto& s = scene();
  const auto& q = s.queries[2];
  const SynthesizedView v = synthesize_view(all_entries(s.database), *q.gt_pose, q.intrinsics());
  // Compress the range first so that gain 1.3 and bias 10 do not clip.
  auto affine = [](const RgbImage& img, double gain, double bias) {
    RgbImage out = img;
    for (auto& c : out.data) c = std::uint8_t(std::lround(std::clamp(gain * c + bias, 0.0, 255.0)));
    return out;
  };
  const RgbImage query = affine(q.rgb, 0.7, 0);
  SynthesizedView base = v;
  base.rgb = affine(v.rgb, 0.7, 0);
  SynthesizedView bright = v;
  bright.rgb = affine(base.rgb, 1.3, 10);
  const VerificationScore a = densepv_score(query, base), b = densepv_score(affine(query, 1.3, 10), bright);
  REQUIRE(a.usable);
  REQUIRE(b.usable);
  MESSAGE("similarity " << a.similarity << " vs " << b.similarity);
  // Residual differences come from 8-bit rounding only.
  CHECK(std::abs(b.similarity - a.similarity) < 0.01);
}

TEST_CASE("ground truth outscores a pose rotated by 30 degrees") {
  const auto& s = scene();
  const auto entries = all_entries(s.database);
  std::mt19937_64 rng(30);
  int wins = 0, trials = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& q = s.queries[size_t(i) % s.queries.size()];
    Vector3d axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Matrix3d dR = rotation_from_axis_angle<double>(axis.normalized() * (30.0 * M_PI / 180.0));
    const Posed off = Posed::from_center(dR * q.gt_pose->R, q.gt_pose->center());
    const VerificationScore gt = densepv_score(q.rgb, synthesize_view(entries, *q.gt_pose, q.intrinsics()));
    const VerificationScore bad = densepv_score(q.rgb, synthesize_view(entries, off, q.intrinsics()));
    wins += gt.usable && (!bad.usable || gt.similarity > bad.similarity);
    ++trials;
  }
  MESSAGE("ground truth preferred in " << wins << "/" << trials);
  CHECK(wins >= 95);
}

TEST_CASE("select_best examples") {
  CHECK(select_best({scored(-0.4, 9, 1), scored(-0.1, 5, 2), scored(-0.3, 7, 3)}).best == 1);
  const SelectionResult fb =
      select_best({scored(0, 20, 1, false), scored(0, 55, 2, false), scored(0, 31, 3, false)});
  CHECK(fb.best == 1);
  CHECK(fb.used_fallback);
  CHECK(select_best({scored(-0.2, 10, 1), scored(-0.2, 40, 2)}).best == 1);
  CHECK(select_best({scored(-0.2, 40, 2), scored(-0.2, 40, 1)}).best == 1);
  // An unusable hypothesis never wins against a usable one.
  CHECK(select_best({scored(0, 500, 1, false), scored(-0.9, 1, 2)}).best == 1);
  CHECK_THROWS_AS(select_best({}), std::invalid_argument);
}

TEST_CASE("select_best is invariant to increasing transforms of the similarity") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredHypothesis> a;
    const int n = 1 + int(rng() % 10);
    for (int i = 0; i < n; ++i)
      a.push_back(scored(-uniform(rng, 0, 1), int(rng() % 50), i + 1, uniform(rng, 0, 1) < 0.8));
    auto b = a;
    for (auto& s : b) s.score.similarity = std::exp(3 * s.score.similarity) + 7;
    CHECK(select_best(a).best == select_best(b).best);
  }
}
