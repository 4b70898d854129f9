#pragma once

#include "odrgen/config.hpp"
#include "odrgen/evaluation.hpp"
#include "odrgen/odr_xml.hpp"
#include "odrgen/synth.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <iostream>

namespace odrgen {

/// Stage messages; discarded when no stream is set.
struct Logger {
  std::ostream* os = &std::cerr;
  void operator()(const std::string& stage, const std::string& msg) const {
    if (os) *os << "[" << stage << "] " << msg << '\n';
  }
};

struct ExtractResult {
  PointCloud markings;  // World frame, outliers removed
  std::vector<PlaneSample> planes;
  Vec3 origin = Vec3::Zero();
  std::size_t frames = 0, input_points = 0, filtered_points = 0;
};

struct BuildResult {
  RoadModel model;
  std::vector<RelativeLookup> lookups;
  GlobalLookupResult global;
  std::size_t clusters = 0, candidates = 0, combined = 0;
};

namespace pipeline {

inline ExtractResult extract(const Recording& rec, const PipelineConfig& cfg, const Logger& log = {}) {
  ExtractResult r;
  r.origin = rec.origin;
  r.frames = rec.frames.size();
  r.markings.frame = CoordFrame::World;
  if (rec.frames.empty()) {
    log("extract", "warning: empty recording");
    return r;
  }
  std::vector<extraction::FrameExtraction> per(rec.frames.size());
  parallel_for(rec.frames.size(), cfg.threads,
               [&](std::size_t i) { per[i] = extraction::extract_frame(rec.frames[i], cfg.extraction); });
  std::vector<PointCloud> clouds;
  for (std::size_t i = 0; i < per.size(); ++i) {
    r.input_points += rec.frames[i].cloud.size();
    if (per[i].plane) r.planes.push_back(*per[i].plane);
    clouds.push_back(std::move(per[i].markings));
  }
  const PointCloud merged = ingest::merge_world(clouds);
  r.filtered_points = merged.size();
  r.markings = extraction::remove_radius_outliers(merged, cfg.extraction, cfg.threads);
  log("extract", std::to_string(r.frames) + " frames, " + std::to_string(r.input_points) + " points in, " +
                     std::to_string(r.filtered_points) + " after plane/reflectivity filter, " +
                     std::to_string(r.markings.size()) + " after outlier removal, " + std::to_string(r.planes.size()) +
                     " plane samples");
  return r;
}

inline BuildResult build(const PointCloud& markings, const std::vector<PlaneSample>& planes, const Vec3& origin,
                         const PipelineConfig& cfg, const Logger& log = {}) {
  BuildResult r;
  if (markings.empty()) throw EstimationError("no marking points to build a road from");
  std::size_t noise = 0;
  const auto clusters = clustering::build_clusters(markings, cfg.clustering, &noise, cfg.threads);
  r.clusters = clusters.size();
  log("build", std::to_string(clusters.size()) + " clusters, " + std::to_string(noise) + " noise points");
  const auto candidates = lanes::generate_candidates(clusters, cfg.search);
  r.candidates = candidates.size();
  const auto lines = lanes::combine_candidates(candidates, cfg.search);
  r.combined = lines.size();
  log("build", std::to_string(candidates.size()) + " candidate lines, " + std::to_string(lines.size()) +
                   " after combination");
  r.lookups = topology::relative_lookup(lines, cfg.topology, cfg.threads);
  r.global = topology::global_lookup(r.lookups, lines, cfg.topology);
  log("build", std::to_string(r.global.superlines.size()) + " superlines, " +
                   std::to_string(r.global.dropped_line_ids.size()) + " lines without relations dropped");
  r.model = topology::build_road_model(r.global.superlines, r.lookups, cfg.topology);
  r.model.origin = origin;
  r.model.plane_samples = planes;
  if (r.model.line_count < 2) log("build", "warning: single marking line, degenerate single-lane model");
  log("build", "lane_count " + std::to_string(r.model.lane_count) + ", " +
                   std::to_string(r.model.reference_polyline.size()) + " reference points");
  return r;
}

/// Export plus the continuity self-check; a violation is an export error.
inline OdrDocument export_checked(const RoadModel& model, const PipelineConfig& cfg, std::vector<Junction>* joints,
                                  const Logger& log = {}) {
  const OdrDocument doc = odr::export_road(model, cfg.export_cfg);
  const auto js = evaluation::continuity_report(doc);
  if (joints) *joints = js;
  double gap = 0, kink = 0;
  for (const auto& j : js) {
    gap = std::max(gap, j.gap);
    kink = std::max(kink, j.kink_deg);
  }
  log("export", std::to_string(doc.plan_view.size()) + " geometries, length " + format_double(doc.length()) +
                    " m, max gap " + format_double(gap) + " m, max kink " + format_double(kink) + " deg");
  if (!evaluation::continuity_ok(js, cfg.export_cfg.max_gap, cfg.export_cfg.max_kink_deg))
    throw ExportError("continuity check failed: max gap " + format_double(gap) + " m, max kink " +
                      format_double(kink) + " deg");
  return doc;
}

// Intermediate files ---------------------------------------------------------

inline constexpr const char* kCloudTag = " odrgen-cloud v1";
inline constexpr const char* kPlanesTag = " odrgen-planes v1";

namespace detail {

inline std::string vec_text(const Vec3& v) {
  return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
}

inline Vec3 parse_origin(const std::vector<std::string>& comments, const std::string& file) {
  for (const auto& c : comments) {
    const auto t = ingest::detail::trim(c);
    if (t.rfind("origin=", 0) != 0) continue;
    const auto f = synth::detail::split(std::string(t.substr(7)), ',');
    double v[3];
    if (f.size() != 3) throw ParseError(file, 0, "bad origin comment");
    for (int i = 0; i < 3; ++i)
      if (!ingest::detail::parse_double(f[static_cast<std::size_t>(i)], v[i]))
        throw ParseError(file, 0, "bad origin comment");
    return {v[0], v[1], v[2]};
  }
  return Vec3::Zero();
}

inline void require_tag(const std::vector<std::string>& comments, const char* tag, const std::string& file) {
  if (comments.empty() || comments.front() != tag)
    throw ParseError(file, 1, std::string("missing header '#") + tag + "'");
}

}  // namespace detail

inline void write_markings(const std::filesystem::path& path, const PointCloud& cloud, const Vec3& origin) {
  ingest::write_point_file(cloud, path, PointFormat::Csv, {kCloudTag, " origin=" + detail::vec_text(origin)});
}

inline PointCloud read_markings(const std::filesystem::path& path, Vec3* origin) {
  std::vector<std::string> comments;
  PointCloud c = ingest::read_point_file(path, CoordFrame::World, &comments);
  detail::require_tag(comments, kCloudTag, path.string());
  if (origin) *origin = detail::parse_origin(comments, path.string());
  return c;
}

inline void write_planes(const std::filesystem::path& path, const std::vector<PlaneSample>& planes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << '#' << kPlanesTag << "\nx,y,z,nx,ny,nz,inliers\n";
  for (const auto& p : planes)
    out << detail::vec_text(p.position) << ',' << detail::vec_text(p.normal) << ',' << p.inliers << '\n';
}

inline std::vector<PlaneSample> read_planes(const std::filesystem::path& path) {
  std::vector<std::string> comments;
  std::vector<PlaneSample> out;
  ingest::detail::read_numeric_csv(
      path, 7,
      [&](std::span<const double> v, std::size_t line) {
        PlaneSample p{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, static_cast<std::size_t>(v[6])};
        if (!p.position.allFinite() || !(std::abs(p.normal.norm() - 1.0) < 1e-6))
          throw ParseError(path.string(), line, "invalid plane sample");
        out.push_back(p);
      },
      &comments);
  detail::require_tag(comments, kPlanesTag, path.string());
  return out;
}

inline nlohmann::json road_model_json(const RoadModel& m) {
  using nlohmann::json;
  auto v3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j;
  j["format"] = "odrgen-road-model";
  j["version"] = 1;
  j["origin"] = v3(m.origin);
  j["lane_count"] = m.lane_count;
  j["line_count"] = m.line_count;
  j["lane_widths"] = m.lane_widths;
  j["width_sigma"] = m.width_sigma;
  j["width_samples"] = m.width_samples;
  j["reference_polyline"] = json::array();
  for (const auto& p : m.reference_polyline) j["reference_polyline"].push_back(v3(p));
  j["plane_samples"] = json::array();
  for (const auto& p : m.plane_samples)
    j["plane_samples"].push_back({{"position", v3(p.position)}, {"normal", v3(p.normal)}, {"inliers", p.inliers}});
  return j;
}

inline RoadModel road_model_from_json(const nlohmann::json& j, const std::string& file = "<json>") {
  try {
    if (j.at("format") != "odrgen-road-model" || j.at("version") != 1)
      throw ParseError(file, 0, "not an odrgen road model (format/version)");
    auto v3 = [](const nlohmann::json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
    RoadModel m;
    m.origin = v3(j.at("origin"));
    m.lane_count = j.at("lane_count").get<int>();
    m.line_count = j.at("line_count").get<int>();
    m.lane_widths = j.at("lane_widths").get<std::vector<double>>();
    m.width_sigma = j.at("width_sigma").get<double>();
    m.width_samples = j.at("width_samples").get<std::vector<double>>();
    for (const auto& p : j.at("reference_polyline")) m.reference_polyline.push_back(v3(p));
    for (const auto& p : j.at("plane_samples"))
      m.plane_samples.push_back({v3(p.at("position")), v3(p.at("normal")), p.at("inliers").get<std::size_t>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file, 0, std::string("road model: ") + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

/// Relation graph as an edge list: source_id,target_id,side,distance,support.
inline void write_relations(const std::filesystem::path& path, const std::vector<RelativeLookup>& lookups) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "source_id,target_id,side,distance,support\n";
  for (const auto& lk : lookups)
    for (const auto& e : lk.entries)
      out << lk.source_id << ',' << e.line_id << ',' << to_string(e.side) << ',' << format_double(e.distance) << ','
          << e.support << '\n';
}

// Subcommands ------------------------------------------------------------------

inline void cmd_extract(const std::filesystem::path& recording, const std::filesystem::path& out_dir,
                        const PipelineConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto rec = ingest::read_recording(recording);
  const auto r = extract(rec, cfg, log);
  std::filesystem::create_directories(out_dir);
  write_markings(out_dir / "markings.csv", r.markings, r.origin);
  write_planes(out_dir / "planes.csv", r.planes);
}

inline BuildResult cmd_build(const std::filesystem::path& markings, const std::filesystem::path& planes,
                             const std::filesystem::path& out_dir, const PipelineConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  Vec3 origin;
  const auto cloud = read_markings(markings, &origin);
  const auto pl = planes.empty() || !std::filesystem::exists(planes) ? std::vector<PlaneSample>{} : read_planes(planes);
  auto r = build(cloud, pl, origin, cfg, log);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "road_model.json", road_model_json(r.model));
  write_relations(out_dir / "relations.csv", r.lookups);
  return r;
}

inline OdrDocument cmd_export(const std::filesystem::path& model_path, const std::filesystem::path& out_dir,
                              const PipelineConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto model = road_model_from_json(read_json(model_path), model_path.string());
  std::vector<Junction> js;
  std::filesystem::create_directories(out_dir);
  OdrDocument doc;
  try {
    doc = export_checked(model, cfg, &js, log);
  } catch (...) {
    write_json(out_dir / "continuity.json", evaluation::to_json(js));
    throw;
  }
  odr::write_opendrive(doc, out_dir / "road.xodr");
  write_json(out_dir / "continuity.json", evaluation::to_json(js));
  return doc;
}

inline MapDistanceReport cmd_eval(const std::filesystem::path& a, const std::filesystem::path& b, double step,
                                  const std::filesystem::path& out_json, unsigned threads = 1) {
  const auto da = odr::read_opendrive(a), db = odr::read_opendrive(b);
  const auto r = evaluation::map_distance(da, db, step, threads);
  if (!out_json.empty()) write_json(out_json, evaluation::to_json(r));
  return r;
}

/// Writes <out>/recording/, <out>/truth.xodr and <out>/truth_centerline.csv.
inline SyntheticScene cmd_synth(const SceneSpec& spec, const std::filesystem::path& out_dir,
                                std::optional<std::uint64_t> perturb_seed = std::nullopt,
                                PointFormat format = PointFormat::Csv) {
  auto scene = synth::generate_scene(spec);
  if (perturb_seed) scene.recording = synth::perturb_recording(scene.recording, *perturb_seed);
  std::filesystem::create_directories(out_dir);
  ingest::write_recording(scene.recording, out_dir / "recording", format);
  odr::write_opendrive(scene.truth.doc, out_dir / "truth.xodr");
  std::ofstream c(out_dir / "truth_centerline.csv");
  c << "x,y,z\n";
  for (const auto& p : scene.truth.centerline) c << detail::vec_text(p) << '\n';
  return scene;
}

struct RunReport {
  ExtractResult extract;
  BuildResult build;
  OdrDocument doc;
  std::vector<Junction> joints;
  double seconds = 0;
};

/// extract -> build -> export -> continuity check, writing every intermediate.
inline RunReport cmd_run(const std::filesystem::path& recording, const std::filesystem::path& out_dir,
                         const PipelineConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  const auto rec = ingest::read_recording(recording);
  rep.extract = extract(rec, cfg, log);
  std::filesystem::create_directories(out_dir);
  write_markings(out_dir / "markings.csv", rep.extract.markings, rep.extract.origin);
  write_planes(out_dir / "planes.csv", rep.extract.planes);
  rep.build = build(rep.extract.markings, rep.extract.planes, rep.extract.origin, cfg, log);
  write_json(out_dir / "road_model.json", road_model_json(rep.build.model));
  write_relations(out_dir / "relations.csv", rep.build.lookups);
  try {
    rep.doc = export_checked(rep.build.model, cfg, &rep.joints, log);
  } catch (...) {
    write_json(out_dir / "continuity.json", evaluation::to_json(rep.joints));
    throw;
  }
  odr::write_opendrive(rep.doc, out_dir / "road.xodr");
  write_json(out_dir / "continuity.json", evaluation::to_json(rep.joints));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json report;
  report["frames"] = rep.extract.frames;
  report["input_points"] = rep.extract.input_points;
  report["marking_points"] = rep.extract.markings.size();
  report["clusters"] = rep.build.clusters;
  report["candidate_lines"] = rep.build.candidates;
  report["combined_lines"] = rep.build.combined;
  report["superlines"] = rep.build.global.superlines.size();
  report["lane_count"] = rep.build.model.lane_count;
  report["lane_widths"] = rep.build.model.lane_widths;
  report["width_sigma"] = rep.build.model.width_sigma;
  report["geometries"] = rep.doc.plan_view.size();
  report["road_length"] = rep.doc.length();
  report["continuity"] = evaluation::to_json(rep.joints);
  write_json(out_dir / "report.json", report);
  return rep;
}

}  // namespace pipeline
}  // namespace odrgen
