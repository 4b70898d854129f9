#pragma once

#include "odrgen/clustering.hpp"
#include "odrgen/extraction.hpp"
#include "odrgen/lane_builder.hpp"
#include "odrgen/odr.hpp"
#include "odrgen/topology.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <sstream>

namespace odrgen {

struct PipelineConfig {
  ExtractionConfig extraction;
  ClusterConfig clustering;
  SearchConfig search;
  TopologyConfig topology;
  ExportConfig export_cfg;
  double eval_step = 1.0;
  std::uint64_t seed = 42;
  unsigned threads = 1;

  void validate() const {
    extraction.validate();
    clustering.validate();
    search.validate();
    topology.validate();
    export_cfg.validate();
    if (!(eval_step > 0)) throw ConfigError("evaluation: step must be > 0");
    if (threads < 1) throw ConfigError("pipeline: threads must be >= 1");
  }

  /// One seed drives every randomized stage.
  void apply_seed(std::uint64_t s) {
    seed = s;
    extraction.rng_seed = s;
    clustering.rng_seed = s;
  }
};

namespace config {

namespace detail {

struct Field {
  const char* section;
  const char* key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  if (!ingest::detail::parse_double(v, out) || !std::isfinite(out))
    throw ConfigError("config: '" + key + "' is not a number: " + v);
  return out;
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("config: '" + key + "' must be an integer: " + v);
  return static_cast<std::int64_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' must be true or false: " + v);
}

#define ODRGEN_DOUBLE(sec, name, member)                                                                   \
  Field {                                                                                                   \
    sec, name, [](PipelineConfig& c, const std::string& v) { c.member = to_double(name, v); },             \
        [](const PipelineConfig& c) { return format_double(c.member); }                                     \
  }
#define ODRGEN_INT(sec, name, member, type)                                                                \
  Field {                                                                                                   \
    sec, name, [](PipelineConfig& c, const std::string& v) { c.member = static_cast<type>(to_int(name, v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.member); }                                    \
  }
#define ODRGEN_BOOL(sec, name, member)                                                                     \
  Field {                                                                                                   \
    sec, name, [](PipelineConfig& c, const std::string& v) { c.member = to_bool(name, v); },               \
        [](const PipelineConfig& c) { return std::string(c.member ? "true" : "false"); }                    \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      ODRGEN_DOUBLE("extraction", "max_range", extraction.max_range),
      ODRGEN_DOUBLE("extraction", "sensor_height", extraction.sensor_height),
      ODRGEN_DOUBLE("extraction", "plane_raise", extraction.plane_raise),
      ODRGEN_DOUBLE("extraction", "reflectivity_threshold", extraction.reflectivity_threshold),
      ODRGEN_DOUBLE("extraction", "outlier_radius", extraction.outlier_radius),
      ODRGEN_INT("extraction", "outlier_min_neighbors", extraction.outlier_min_neighbors, int),
      ODRGEN_INT("extraction", "ransac_iterations", extraction.ransac_iterations, int),
      ODRGEN_DOUBLE("extraction", "ransac_inlier_tol", extraction.ransac_inlier_tol),
      ODRGEN_DOUBLE("clustering", "dbscan_eps", clustering.dbscan_eps),
      ODRGEN_INT("clustering", "dbscan_min_pts", clustering.dbscan_min_pts, int),
      ODRGEN_DOUBLE("clustering", "split_threshold", clustering.split_threshold),
      ODRGEN_DOUBLE("clustering", "slice_length", clustering.slice_length),
      ODRGEN_INT("clustering", "line_ransac_iterations", clustering.line_ransac_iterations, int),
      ODRGEN_DOUBLE("clustering", "line_ransac_tol", clustering.line_ransac_tol),
      ODRGEN_DOUBLE("search", "step", search.step),
      ODRGEN_DOUBLE("search", "search_length", search.search_length),
      ODRGEN_DOUBLE("search", "ball_radius", search.ball_radius),
      ODRGEN_DOUBLE("search", "gamma", search.gamma),
      ODRGEN_DOUBLE("search", "combine_length", search.combine_length),
      ODRGEN_DOUBLE("search", "seg_attach_tol", search.seg_attach_tol),
      ODRGEN_BOOL("search", "combine_follow_curvature", search.combine_follow_curvature),
      ODRGEN_DOUBLE("topology", "nominal_lane_width", topology.nominal_lane_width),
      ODRGEN_DOUBLE("topology", "max_ray_factor", topology.max_ray_factor),
      ODRGEN_DOUBLE("topology", "max_segment_length", topology.max_segment_length),
      ODRGEN_DOUBLE("topology", "default_lane_width", topology.default_lane_width),
      ODRGEN_DOUBLE("topology", "min_lane_width", topology.min_lane_width),
      ODRGEN_DOUBLE("topology", "max_lane_width", topology.max_lane_width),
      ODRGEN_DOUBLE("topology", "contradiction_ratio", topology.contradiction_ratio),
      ODRGEN_INT("topology", "contradiction_min_support", topology.contradiction_min_support, int),
      ODRGEN_BOOL("topology", "literal_modulo", topology.literal_modulo),
      ODRGEN_DOUBLE("export", "segment_length", export_cfg.segment_length),
      ODRGEN_DOUBLE("export", "lookahead_fraction", export_cfg.lookahead_fraction),
      ODRGEN_DOUBLE("export", "endpoint_weight", export_cfg.endpoint_weight),
      ODRGEN_DOUBLE("export", "sample_step", export_cfg.sample_step),
      ODRGEN_DOUBLE("export", "max_gap", export_cfg.max_gap),
      ODRGEN_DOUBLE("export", "max_kink_deg", export_cfg.max_kink_deg),
      ODRGEN_BOOL("export", "fix_bv", export_cfg.fix_bv),
      ODRGEN_BOOL("export", "chain_anchor", export_cfg.chain_anchor),
      ODRGEN_DOUBLE("evaluation", "step", eval_step),
      Field{"pipeline", "seed",
            [](PipelineConfig& c, const std::string& v) { c.apply_seed(static_cast<std::uint64_t>(to_int("seed", v))); },
            [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      ODRGEN_INT("pipeline", "threads", threads, unsigned),
  };
  return f;
}

#undef ODRGEN_DOUBLE
#undef ODRGEN_INT
#undef ODRGEN_BOOL

}  // namespace detail

/// INI text with [extraction] [clustering] [search] [topology] [export]
/// [evaluation] [pipeline] sections. Unknown sections or keys are refused.
inline PipelineConfig parse(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const auto& fs = detail::fields();
      auto it = std::find_if(fs.begin(), fs.end(), [&](const detail::Field& f) { return section == f.section && key == f.key; });
      if (it == fs.end()) throw ConfigError("config: unknown key '" + section + "." + key + "'");
      it->set(cfg, node.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  return parse(f);
}

/// Every field, grouped by section; parse(to_ini(c)) == c.
inline std::string to_ini(const PipelineConfig& cfg) {
  std::ostringstream out;
  std::string current;
  for (const auto& f : detail::fields()) {
    if (current != f.section) {
      if (!current.empty()) out << '\n';
      current = f.section;
      out << '[' << current << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace config
}  // namespace odrgen
