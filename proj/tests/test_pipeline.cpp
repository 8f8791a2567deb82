#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "denseloc/pipeline.hpp"
#include "denseloc/synthetic.hpp"

using namespace denseloc;

namespace {

SceneSpec small_spec() {
  SceneSpec spec;
  spec.queries.count = 4;
  return spec;
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.top_n = 12;
  c.keep = 4;
  return c;
}

struct Fixture {
  SyntheticScene scene = generate_synthetic_scene(6, small_spec());
  PipelineConfig config = small_config();
  DatabaseIndex index = build_index(scene.database, config);
  const std::vector<QueryImage>& queries = scene.queries;
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::string serialize(const std::vector<LocalizationRecord>& r) {
  std::ostringstream out;
  write_records(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("config parsing") {
  PipelineConfig c;
  apply_setting(c, "top_n", " 50 ");
  apply_setting(c, "binary", "on");
  apply_setting(c, "render_radius", "\"7.5\"");
  CHECK(c.top_n == 50);
  CHECK(c.binary);
  CHECK(c.verification.render_radius == 7.5);
  CHECK_THROWS_AS(apply_setting(c, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "top_n", "ten"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "top_n", "10 px"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "densepv", "maybe"), ConfigError);

  const auto dir = std::filesystem::temp_directory_path() / "denseloc_test_config";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.toml").string();
  {
    std::ofstream out(path);
    out << "# comment\n[retrieval]\ntop_n = 30  # trailing\nkeep=5\n\nseed = 99\n";
  }
  const PipelineConfig loaded = load_config(path);
  CHECK(loaded.top_n == 30);
  CHECK(loaded.keep == 5);
  CHECK(loaded.seed == 99);

  // dump_config round-trips.
  {
    std::ofstream out(path);
    out << dump_config(c);
  }
  CHECK(dump_config(load_config(path)) == dump_config(c));

  {
    std::ofstream out(path);
    out << "top_n = 3\nthis line is wrong\n";
  }
  try {
    load_config(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config((dir / "missing.toml").string()), ConfigError);
}

TEST_CASE("no queries give no records") {
  const Fixture& f = fixture();
  CHECK(run_pipeline(f.scene.database, f.index, {}, f.config).empty());
}

TEST_CASE("pipeline localizes, is deterministic and round-trips its records") {
  const Fixture& f = fixture();
  const auto a = run_pipeline(f.scene.database, f.index, f.queries, f.config);
  REQUIRE(a.size() == f.queries.size());
  int good = 0;
  for (const auto& r : a) {
    CHECK(r.densepv_used);
    CHECK(r.candidates.size() <= size_t(f.config.keep));
    REQUIRE(r.error);
    good += r.error->positional <= 0.1 && r.error->angular <= 2.0;
  }
  CHECK(good >= 3);

  PipelineConfig threaded = f.config;
  threaded.threads = 2;
  const auto b = run_pipeline(f.scene.database, f.index, f.queries, threaded);
  CHECK(serialize(a) == serialize(b));

  std::istringstream in(serialize(a));
  const auto back = read_records(in);
  REQUIRE(back.size() == a.size());
  CHECK(serialize(back) == serialize(a));
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].query_id == a[i].query_id);
    CHECK(back[i].selected == a[i].selected);
    REQUIRE(back[i].pose.has_value() == a[i].pose.has_value());
    if (a[i].pose) {
      const PoseError e = pose_error(*back[i].pose, *a[i].pose);
      CHECK(e.positional < 1e-9);
      CHECK(e.angular < 1e-6);
    }
  }

  const auto errs = record_errors(a, PoseSource::retrieval);
  REQUIRE(errs.size() == a.size());
  std::ostringstream dump;
  write_hypothesis_dump(dump, a[0]);
  std::istringstream lines(dump.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string id;
    double v;
    int count = 0;
    fields >> id;
    while (fields >> v) ++count;
    CHECK(count == 14);
    ++n;
  }
  CHECK(n > 0);
}

TEST_CASE("without DensePV the pose with most inliers is selected") {
  const Fixture& f = fixture();
  PipelineConfig c = f.config;
  c.densepv = false;
  for (const auto& r : run_pipeline(f.scene.database, f.index, f.queries, c)) {
    CHECK_FALSE(r.densepv_used);
    if (r.selected < 0) continue;
    int best = 0;
    for (const auto& cand : r.candidates) best = std::max(best, cand.pose ? cand.pose_inliers : 0);
    CHECK(r.candidates[size_t(r.selected)].pose_inliers == best);
    for (const auto& cand : r.candidates) CHECK_FALSE(cand.similarity);
  }
}

TEST_CASE("record errors for missing poses are infinite") {
  LocalizationRecord r;
  r.query_id = "q";
  r.failure = "nothing";
  r.gt_pose = Posed();
  const auto e = record_errors({r});
  REQUIRE(e.size() == 1);
  CHECK(std::isinf(e[0].positional));
  std::istringstream in(serialize({r}));
  const auto back = read_records(in);
  REQUIRE(back.size() == 1);
  CHECK(back[0].failure == "nothing");
  CHECK_FALSE(back[0].pose);
}

TEST_CASE("saved index reloads identically") {
  const Fixture& f = fixture();
  const auto dir = std::filesystem::temp_directory_path() / "denseloc_test_index";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_index(dir.string(), f.scene.database, f.index);
  const DatabaseIndex back = load_index(dir.string(), f.scene.database);
  REQUIRE(back.pyramids.size() == f.index.pyramids.size());
  CHECK(back.pyramids[0].fine.descriptors == f.index.pyramids[0].fine.descriptors);
  CHECK(back.retrieval.descriptors() == f.index.retrieval.descriptors());
  CHECK(back.retrieval.ids() == f.index.retrieval.ids());

  std::vector<QueryImage> one(f.queries.begin(), f.queries.begin() + 1);
  CHECK(serialize(run_pipeline(f.scene.database, back, one, f.config)) ==
        serialize(run_pipeline(f.scene.database, f.index, one, f.config)));
  std::filesystem::remove_all(dir);
}
