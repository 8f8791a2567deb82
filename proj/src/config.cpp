#include "denseloc/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace denseloc {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value '" + v + "' for '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for '" + key + "'");
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
std::string show(T v) {
  std::ostringstream out;
  out.precision(17);
  if constexpr (std::is_same_v<T, bool>)
    out << (v ? "true" : "false");
  else
    out << v;
  return out.str();
}

#define DL_FIELD(name, member, type)                                                                  \
  {                                                                                                   \
    name, Field {                                                                                     \
      [](PipelineConfig& c, const std::string& k, const std::string& v) {                             \
        if constexpr (std::is_same_v<type, bool>)                                                     \
          c.member = parse_bool(k, v);                                                                \
        else                                                                                          \
          c.member = parse_number<type>(k, v);                                                        \
      },                                                                                              \
          [](const PipelineConfig& c) { return show<type>(c.member); }                               \
    }                                                                                                 \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      DL_FIELD("seed", seed, std::uint64_t),
      DL_FIELD("threads", threads, int),
      DL_FIELD("top_n", top_n, int),
      DL_FIELD("vocab_k", vocab_k, int),
      DL_FIELD("vocab_sample", vocab_sample, int),
      DL_FIELD("kmeans_max_iterations", kmeans_max_iterations, int),
      DL_FIELD("coarse_stride", dense.coarse.stride, int),
      DL_FIELD("coarse_patch", dense.coarse.patch, int),
      DL_FIELD("fine_stride", dense.fine.stride, int),
      DL_FIELD("fine_patch", dense.fine.patch, int),
      DL_FIELD("smoothing_sigma", dense.smoothing_sigma, double),
      DL_FIELD("min_mean_gradient", dense.min_mean_gradient, double),
      DL_FIELD("binary", binary, bool),
      DL_FIELD("binarizer_min_samples", binarizer_min_samples, int),
      DL_FIELD("homography_threshold_px", homography.threshold_px, double),
      DL_FIELD("homography_min_inliers", homography.min_inliers, int),
      DL_FIELD("homography_confidence", homography.confidence, double),
      DL_FIELD("homography_max_iterations", homography.max_iterations, int),
      DL_FIELD("max_homographies", homography.max_homographies, int),
      DL_FIELD("keep", keep, int),
      DL_FIELD("pose_threshold_px", ransac.threshold_px, double),
      DL_FIELD("pose_reference_side", pose_reference_side, double),
      DL_FIELD("pose_threshold_min_strides", pose_threshold_min_strides, double),
      DL_FIELD("pose_confidence", ransac.confidence, double),
      DL_FIELD("pose_max_iterations", ransac.max_iterations, int),
      DL_FIELD("pose_min_inliers", ransac.min_inliers, int),
      DL_FIELD("max_query_side", max_query_side, int),
      DL_FIELD("densepv", densepv, bool),
      DL_FIELD("densepv_stride", verification.stride, int),
      DL_FIELD("densepv_patch", verification.patch, int),
      DL_FIELD("densepv_min_patch_valid", verification.min_patch_valid, double),
      DL_FIELD("densepv_min_valid_fraction", verification.min_valid_fraction, double),
      DL_FIELD("render_radius", verification.render_radius, double),
      DL_FIELD("max_splat", verification.max_splat, int),
      DL_FIELD("angle_gate", angle_gate, double),
  };
  return table;
}

#undef DL_FIELD

}  // namespace

void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, unquote(trim(value)));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

std::string dump_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace denseloc
