#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "denseloc/config.hpp"
#include "denseloc/evaluation.hpp"
#include "denseloc/pipeline.hpp"
#include "denseloc/synthetic.hpp"

namespace fs = std::filesystem;
using namespace denseloc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> settings;
  int threads = 0;
};

PipelineConfig make_config(const CommonArgs& a) {
  PipelineConfig cfg = a.config_path.empty() ? PipelineConfig{} : load_config(a.config_path);
  for (const std::string& s : a.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.threads > 0) cfg.threads = a.threads;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.settings, "override one setting, key=value (repeatable)");
  cmd->add_option("--threads", a.threads, "worker threads (0: config value)");
}

bool parse_on_off(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("expected on|off, got '" + v + "'");
}

int cmd_synth(const std::string& out, std::uint64_t seed, bool confusers, int queries) {
  SceneSpec spec;
  spec.confusers = confusers;
  spec.queries.count = queries;
  const SyntheticScene scene = generate_synthetic_scene(seed, spec);
  save_database(out, scene.database);
  save_queries(out, scene.queries);
  std::printf("wrote %zu database views and %zu queries to %s\n", scene.database.size(), scene.queries.size(),
              out.c_str());
  return 0;
}

int cmd_index(const std::string& db_path, const std::string& out, const PipelineConfig& cfg) {
  const auto db = load_database(db_path);
  const DatabaseIndex index = build_index(db, cfg);
  save_index(out, db, index);
  std::printf("indexed %zu database views into %s%s\n", db.size(), out.c_str(),
              index.binary.empty() ? "" : " (with binary codes)");
  return 0;
}

int cmd_localize(const std::string& db_path, const std::string& query_path, const std::string& index_dir,
                 const std::string& out, const PipelineConfig& cfg) {
  const auto db = load_database(db_path);
  const auto queries = load_queries(query_path);
  DatabaseIndex index;
  if (index_dir.empty()) {
    index = build_index(db, cfg);
  } else {
    index = load_index(index_dir, db);
    if (cfg.binary && index.binary.empty()) {
      std::fprintf(stderr, "index in %s has no binary codes; rebuilding\n", index_dir.c_str());
      index = build_index(db, cfg);
    }
  }
  const auto records = run_pipeline(db, index, queries, cfg);
  std::ofstream os(out);
  if (!os) throw IoError("cannot write '" + out + "'");
  write_records(os, records);
  int failed = 0;
  for (const auto& r : records) {
    if (!r.pose) {
      ++failed;
      std::fprintf(stderr, "%s: %s\n", r.query_id.c_str(), r.failure.c_str());
    }
  }
  std::printf("localized %zu/%zu queries -> %s\n", records.size() - size_t(failed), records.size(), out.c_str());
  return failed > 0 ? 2 : 0;
}

int cmd_evaluate(const std::vector<std::string>& record_paths, const std::string& query_path,
                 const std::string& csv_path, const std::string& source_name, double gate) {
  std::map<std::string, Posed> gt;
  if (!query_path.empty())
    for (const auto& q : load_queries(query_path))
      if (q.gt_pose) gt[q.id] = *q.gt_pose;
  PoseSource source = PoseSource::final;
  if (source_name == "densepe") source = PoseSource::densepe;
  else if (source_name == "retrieval") source = PoseSource::retrieval;
  else if (source_name != "final") throw ConfigError("unknown --source '" + source_name + "'");

  std::vector<RateCurve> curves;
  std::vector<std::string> names;
  std::string csv;
  for (const auto& path : record_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    auto records = read_records(in);
    if (!gt.empty())
      for (auto& r : records)
        if (auto it = gt.find(r.query_id); it != gt.end()) r.gt_pose = it->second;
    const auto errors = record_errors(records, source);
    if (errors.empty()) throw std::runtime_error("'" + path + "': no records with ground truth");
    curves.push_back(localized_rate(errors, default_distance_thresholds(), gate));
    names.push_back(fs::path(path).stem().string());
    const PoseError med = median_errors(errors);
    std::printf("%s: %zu queries, median error %.3f m / %.2f deg\n", names.back().c_str(), errors.size(),
                med.positional, med.angular);
    csv += format_rate_csv(curves.back());
  }
  std::printf("%s", format_rate_table(curves, names).c_str());
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot write '" + csv_path + "'");
    os << csv;
  }
  return 0;
}

int cmd_render(const std::string& db_path, const std::string& pose_text, const std::string& query_path,
               const std::string& query_id, double f, int width, int height, const std::string& out_prefix,
               const PipelineConfig& cfg) {
  const auto db = load_database(db_path);
  Posed pose;
  std::optional<QueryImage> query;
  if (!query_path.empty()) {
    for (auto& q : load_queries(query_path))
      if (q.id == query_id || query_id.empty()) {
        query = std::move(q);
        break;
      }
    if (!query) throw LoadError("query '" + query_id + "' not found in " + query_path);
  }
  if (!pose_text.empty()) {
    pose = parse_pose(pose_text);
  } else if (query && query->gt_pose) {
    pose = *query->gt_pose;
  } else {
    throw ConfigError("render needs --pose or a query with a ground-truth pose");
  }
  double scale = 1.0;
  RgbImage work;
  Intrinsics K;
  if (query) {
    work = downscale_to_fit(query->rgb, cfg.max_query_side, &scale);
    K = Intrinsics::centered(query->f * scale, work.width, work.height);
  } else {
    if (!(f > 0) || width <= 0 || height <= 0) throw ConfigError("render needs --f, --width and --height");
    K = Intrinsics::centered(f, width, height);
  }
  const auto entries = entries_within(db, pose.center(), cfg.verification.render_radius);
  if (entries.empty()) throw std::runtime_error("no database entry within the render radius");
  const SynthesizedView view = synthesize_view(entries, pose, K, cfg.verification.max_splat);
  write_png(out_prefix + "_render.png", fill_holes(view));
  std::printf("wrote %s_render.png\n", out_prefix.c_str());
  if (query) {
    const VerificationScore score = densepv_score(work, view, cfg.verification);
    write_png(out_prefix + "_heat.png", error_heat_map(score, cfg.verification, work.width, work.height));
    std::printf("wrote %s_heat.png (similarity %.4f, valid fraction %.3f%s)\n", out_prefix.c_str(), score.similarity,
                score.valid_fraction, score.usable ? "" : ", unusable");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense indoor visual localization"};
  app.require_subcommand(1);

  std::string db_path, query_path, index_dir, out, csv_path, pose_text, query_id, source = "final";
  std::vector<std::string> record_paths;
  CommonArgs common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic RGBD scene with queries");
  std::uint64_t synth_seed = 1;
  bool confusers = false;
  int synth_queries = 25;
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "scene seed");
  synth->add_flag("--confusers", confusers, "copy a panel of one wall's texture onto the opposite wall");
  synth->add_option("--queries", synth_queries, "number of queries")->check(CLI::PositiveNumber);

  auto* index = app.add_subcommand("index", "build vocabulary, retrieval index and feature maps");
  std::string binary_flag;
  index->add_option("--db", db_path, "database manifest")->required()->check(CLI::ExistingFile);
  index->add_option("--out", out, "index directory")->required();
  index->add_option("--binary", binary_flag, "also store binary codes (on|off)");
  add_common(index, common);

  auto* localize = app.add_subcommand("localize", "localize queries against a database");
  int top_n = -1, keep = -1;
  bool no_densepv = false;
  std::optional<std::uint64_t> seed;
  localize->add_option("--db", db_path, "database manifest")->required()->check(CLI::ExistingFile);
  localize->add_option("--queries", query_path, "query manifest")->required()->check(CLI::ExistingFile);
  localize->add_option("--index", index_dir, "prebuilt index directory (built on demand when absent)");
  localize->add_option("--out", out, "output records (JSON lines)")->required();
  localize->add_option("--top-n", top_n, "retrieval shortlist size");
  localize->add_option("--keep", keep, "candidates kept after dense reranking");
  localize->add_option("--binary", binary_flag, "binary descriptors (on|off)");
  localize->add_flag("--no-densepv", no_densepv, "select poses by inlier count");
  localize->add_option("--seed", seed, "random seed");
  add_common(localize, common);

  auto* evaluate = app.add_subcommand("evaluate", "rate table, median errors and CSV curve");
  double gate = -1;
  evaluate->add_option("records", record_paths, "record files")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--queries", query_path, "query manifest with ground truth")->check(CLI::ExistingFile);
  evaluate->add_option("--csv", csv_path, "write rate curves as CSV");
  evaluate->add_option("--source", source, "pose to evaluate: final|densepe|retrieval");
  evaluate->add_option("--angle-gate", gate, "angular gate in degrees");
  add_common(evaluate, common);

  auto* render = app.add_subcommand("render", "synthesize a view and an error heat map");
  double f = 0;
  int width = 0, height = 0;
  render->add_option("--db", db_path, "database manifest")->required()->check(CLI::ExistingFile);
  render->add_option("--pose", pose_text, "12 numbers: R row-major then t");
  render->add_option("--queries", query_path, "query manifest (enables the heat map)")->check(CLI::ExistingFile);
  render->add_option("--query-id", query_id, "query to compare against");
  render->add_option("--f", f, "focal length when no query is given");
  render->add_option("--width", width);
  render->add_option("--height", height);
  render->add_option("--out", out, "output prefix")->required();
  add_common(render, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(out, synth_seed, confusers, synth_queries);
    PipelineConfig cfg = make_config(common);
    if (!binary_flag.empty()) cfg.binary = parse_on_off(binary_flag);
    if (*index) return cmd_index(db_path, out, cfg);
    if (*localize) {
      if (top_n > 0) cfg.top_n = top_n;
      if (keep > 0) cfg.keep = keep;
      if (no_densepv) cfg.densepv = false;
      if (seed) cfg.seed = *seed;
      return cmd_localize(db_path, query_path, index_dir, out, cfg);
    }
    if (*evaluate) return cmd_evaluate(record_paths, query_path, csv_path, source, gate > 0 ? gate : cfg.angle_gate);
    if (*render) return cmd_render(db_path, pose_text, query_path, query_id, f, width, height, out, cfg);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 1;
}
