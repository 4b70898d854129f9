// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "odrgen/pipeline.hpp"

#include "golden.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <cstdio>
#include <cstring>
#include <thread>

using namespace odrgen;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::printf("%s %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

PipelineConfig run_config() {
  PipelineConfig cfg;
  cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  return cfg;
}

struct Run {
  pipeline::RunReport rep;
  MapDistanceReport vs_truth;
};

Run synth_and_run(const SceneSpec& spec, const fs::path& dir, std::optional<std::uint64_t> perturb) {
  pipeline::cmd_synth(spec, dir, perturb);
  Run r;
  r.rep = pipeline::cmd_run(dir / "recording", dir / "out", run_config(), Logger{nullptr});
  r.vs_truth = pipeline::cmd_eval(dir / "out" / "road.xodr", dir / "truth.xodr", 1.0, dir / "out" / "eval.json");
  return r;
}

void a6_oracles() {
  std::mt19937_64 rng(2024);
  int dbscan_ok = 0, outlier_ok = 0, plane_ok = 0;
  const int instances = 20;
  for (int t = 0; t < instances; ++t) {
    std::uniform_int_distribution<int> count(200, 2000);
    std::uniform_real_distribution<double> u(0, 1);
    const int n = count(rng);
    const double extent = 5 + 25 * u(rng);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(extent * u(rng), extent * u(rng), 0.2 * u(rng));
    const double eps = 0.3 + 0.4 * u(rng);
    const int min_pts = 3 + static_cast<int>(5 * u(rng));

    const auto labels = clustering::dbscan_labels(pts, eps, min_pts);
    const auto core = oracle::dbscan_core(pts, eps, min_pts);
    bool same = labels.core.size() == core.size();
    for (std::size_t i = 0; same && i < core.size(); ++i) same = (labels.core[i] != 0) == (core[i] != 0);
    dbscan_ok += same;

    const auto kept = extraction::remove_radius_outliers(test::world_cloud(pts), ExtractionConfig{}, 2);
    const auto keep = oracle::radius_keep(pts, ExtractionConfig{}.outlier_radius, ExtractionConfig{}.outlier_min_neighbors);
    std::vector<Vec3> expect;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (keep[i]) expect.push_back(pts[i]);
    outlier_ok += kept.positions() == expect;

    // Ground with sub-tolerance roughness plus obstacles well clear of it.
    const double a = 0.05 * (u(rng) - 0.5), b = 0.05 * (u(rng) - 0.5), c = u(rng) - 0.5;
    std::vector<Vec3> scene;
    std::vector<std::size_t> ground;
    for (int i = 0; i < n; ++i) {
      const double x = 40 * (u(rng) - 0.5), y = 40 * (u(rng) - 0.5);
      const bool obstacle = u(rng) < 0.25;
      const double z = a * x + b * y + c + (obstacle ? 0.4 + 2.5 * u(rng) : 0.03 * (u(rng) - 0.5));
      if (!obstacle) ground.push_back(scene.size());
      scene.emplace_back(x, y, z);
    }
    ExtractionConfig cfg;
    cfg.rng_seed = static_cast<std::uint64_t>(t) + 1;
    const auto fit = extraction::fit_ground_plane_detailed(test::world_cloud(scene), cfg);
    const auto ls = oracle::least_squares_plane(scene, ground);
    plane_ok += fit.inliers == ground && oracle::plane_inliers(scene, ls.normal, ls.offset, cfg.ransac_inlier_tol) == ground;
  }
  report("A6", dbscan_ok == instances && outlier_ok == instances && plane_ok == instances,
         "dbscan core " + std::to_string(dbscan_ok) + "/" + std::to_string(instances) + ", radius outlier " +
             std::to_string(outlier_ok) + "/" + std::to_string(instances) + ", ground plane " + std::to_string(plane_ok) +
             "/" + std::to_string(instances));
}

void a4_fitting() {
  const double R = 500;
  Segment arc, line;
  for (double s : odr::sample_positions(100, 1.0)) {
    const Vec2 p = oracle::arc_point(0, 0, 0, 1 / R, s);
    arc.points.emplace_back(p.x(), p.y(), 0);
    line.points.emplace_back(s * std::cos(0.7), s * std::sin(0.7), 0);
  }
  auto eval_fit = [](const Segment& seg, auto&& err) {
    const double hdg = odr::eval_rot(seg);
    const auto fit = odr::fit_param_poly3(seg, hdg, ExportConfig{});
    Geometry g;
    g.x = fit.origin.x();
    g.y = fit.origin.y();
    g.hdg = hdg;
    g.length = fit.length;
    g.poly = fit.curve;
    const odr::GeometryEvaluator ev(g);
    double worst = 0;
    for (double s : odr::sample_positions(fit.length, 1.0)) worst = std::max(worst, err(ev.at(s)));
    return worst;
  };
  const double radial = eval_fit(arc, [&](const Vec3& p) { return std::abs((p.head<2>() - Vec2(0, R)).norm() - R); });
  const double straight =
      eval_fit(line, [](const Vec3& p) { return std::abs(p.x() * std::sin(0.7) - p.y() * std::cos(0.7)); });
  report("A4", radial <= 0.01 && straight <= 1e-6, fmt("arc R500 max radial %.4g m (<= 0.01), straight %.3g m (<= 1e-6)", radial, straight));
}

void a7_metrics(const OdrDocument& out, const OdrDocument& truth, const std::vector<MapDistanceReport>& runs) {
  const auto self = evaluation::map_distance(out, out);
  OdrDocument a, b;
  Geometry g;
  g.kind = GeometryKind::Line;
  g.length = 500;
  g.hdg = 0.4;
  b.plan_view = {g};
  g.x = -0.25 * std::sin(0.4);
  g.y = 0.25 * std::cos(0.4);
  a.plan_view = {g};
  const auto off = evaluation::map_distance(a, b);
  bool rmse_ok = true;
  for (const auto& r : runs) rmse_ok = rmse_ok && r.rmse >= r.avg_distance;
  const auto cross = evaluation::map_distance(truth, out);
  rmse_ok = rmse_ok && cross.rmse >= cross.avg_distance && off.rmse >= off.avg_distance;
  const bool ok = self.avg_distance == 0 && self.rmse == 0 && std::abs(off.avg_distance - 0.25) <= 1e-9 &&
                  off.sigma <= 1e-9 && rmse_ok;
  report("A7", ok, fmt("self avg %.3g, offset fixture avg %.12g sigma %.3g, rmse >= avg on all runs", self.avg_distance,
                       off.avg_distance, off.sigma));
}

void a8_round_trip(const OdrDocument& doc, const fs::path& work) {
  odr::write_opendrive(doc, work / "roundtrip.xodr");
  const auto back = odr::read_opendrive(work / "roundtrip.xodr");
  const auto pa = odr::sample_reference_line(doc, 1.0), pb = odr::sample_reference_line(back, 1.0);
  double worst = pa.size() == pb.size() ? 0.0 : 1e9;
  for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) worst = std::max(worst, (pa[i] - pb[i]).norm());
  const std::string golden = test::read_text(test::data_path("golden_minimal.xodr"));
  const std::string x1 = odr::to_xml_string(test::minimal_document()), x2 = odr::to_xml_string(test::minimal_document());
  const bool golden_ok = !golden.empty() && x1 == golden && x2 == golden;
  report("A8", worst <= 1e-9 && golden_ok,
         fmt("round-trip max deviation %.3g m over %.0f samples (<= 1e-9), golden bytes ", worst,
             static_cast<double>(pa.size())) +
             (golden_ok ? "identical" : "differ"));
}

void a9_stabilizer() {
  const Vec3 x = Vec3::UnitX(), y = Vec3::UnitY(), a(0.6, 0.8, 0);
  bool ok = lanes::stabilize_direction(x, x, 0.5) == x;
  ok = ok && lanes::stabilize_direction(a, x, 1.0) == a && lanes::stabilize_direction(a, x, 0.0) == x;
  ok = ok && (lanes::stabilize_direction(x, y, 0.5) - Vec3(std::sqrt(0.5), std::sqrt(0.5), 0)).norm() <= 1e-15;
  ok = ok && lanes::stabilize_direction(x, -x, 0.5) == x;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1), g(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = Vec3(u(rng), u(rng), u(rng)).normalized(), q = Vec3(u(rng), u(rng), u(rng)).normalized();
    ok = ok && std::abs(lanes::stabilize_direction(p, q, g(rng)).norm() - 1) <= 1e-12;
  }
  report("A9", ok, "fixed point, gamma 0/1, orthogonal renormalization, antiparallel fallback, unit length");
}

CandidateLine collinear(std::uint64_t id, double x0) {
  CandidateLine l;
  l.id = id;
  for (int i = 0; i < 3; ++i) {
    l.cluster_ids.push_back(id * 10 + static_cast<std::size_t>(i));
    l.centers.emplace_back(x0 + 18.0 * i, 0, 0);
    l.directions.push_back(Vec3::UnitX());
  }
  return l;
}

void a10_occlusion() {
  const auto near = lanes::combine_candidates({collinear(1, 0), collinear(2, 76)}, SearchConfig{});
  const auto far = lanes::combine_candidates({collinear(1, 0), collinear(2, 106)}, SearchConfig{});
  report("A10", near.size() == 1 && far.size() == 2,
         "40 m gap -> " + std::to_string(near.size()) + " line(s), 70 m gap -> " + std::to_string(far.size()) + " line(s)");
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "odrgen_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--work") == 0) work = argv[i + 1];
  fs::remove_all(work);
  fs::create_directories(work);

  try {
    const SceneSpec spec = synth::load_scene_spec(test::data_path("highway_5km.ini"));
    const Run base = synth_and_run(spec, work / "a1", std::nullopt);
    const auto& m = base.vs_truth;
    report("A1", m.avg_distance <= 0.15 && m.rmse <= 0.30 && base.rep.seconds <= 60,
           fmt("avg %.3f m (<= 0.15), rmse %.3f m (<= 0.30), max %.3f m, run %.1f s (<= 60)", m.avg_distance, m.rmse,
               m.max_distance, base.rep.seconds));

    const auto& model = base.rep.build.model;
    const auto widths = evaluation::lane_width_stats(model);
    report("A2", model.lane_count == 3 && std::abs(widths.mean - 3.5) <= 0.20 && widths.sigma <= 0.25,
           fmt("lane_count %.0f (== 3), width mean %.3f m (3.5 +- 0.20), sigma %.3f m (<= 0.25)", model.lane_count,
               widths.mean, widths.sigma));

    double gap = 0, kink = 0;
    for (const auto& j : evaluation::continuity_report(base.rep.doc)) gap = std::max(gap, j.gap), kink = std::max(kink, j.kink_deg);
    ExportConfig loose = run_config().export_cfg;
    loose.chain_anchor = false;
    double kink_free = 0;
    for (const auto& j : evaluation::continuity_report(odr::export_road(model, loose)))
      kink_free = std::max(kink_free, j.kink_deg);
    report("A3", gap <= 0.01 && kink <= 0.5,
           fmt("max gap %.3g m (<= 0.01), max kink %.3g deg (<= 0.5); unchained fit max kink %.3g deg", gap, kink,
               kink_free));

    a4_fitting();

    const Run p1 = synth_and_run(spec, work / "a5_1", 101), p2 = synth_and_run(spec, work / "a5_2", 202);
    const auto mutual = evaluation::map_distance(p1.rep.doc, p2.rep.doc);
    report("A5", mutual.avg_distance <= 0.20,
           fmt("mutual avg %.3f m (<= 0.20), rmse %.3f m; vs truth %.3f / %.3f m", mutual.avg_distance, mutual.rmse,
               p1.vs_truth.avg_distance, p2.vs_truth.avg_distance));

    a6_oracles();
    a7_metrics(base.rep.doc, odr::read_opendrive(work / "a1" / "truth.xodr"), {m, p1.vs_truth, p2.vs_truth, mutual});
    a8_round_trip(base.rep.doc, work);
    a9_stabilizer();
    a10_occlusion();
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance aborted: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
