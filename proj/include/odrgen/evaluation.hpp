#pragma once

#include "odrgen/odr.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace odrgen {

struct MapDistanceReport {
  double rmse = 0;
  double avg_distance = 0;
  double sigma = 0;
  double max_distance = 0;
  std::size_t sample_count = 0;
  double eval_length = 0;
};

struct Junction {
  std::size_t index = 0;  // joint between geometry index and index + 1
  double gap = 0;         // meters
  double kink_deg = 0;
};

struct LaneWidthStats {
  double mean = 0;
  double sigma = 0;
  std::size_t samples = 0;
};

namespace evaluation {

/// Nearest-neighbour distance in XY from every sample of `a` (spacing step) to
/// a dense sampling of `b` (spacing step/10).
inline MapDistanceReport map_distance(const OdrDocument& a, const OdrDocument& b, double step = 1.0,
                                      unsigned threads = 1) {
  if (!(step > 0)) throw ConfigError("evaluation step must be > 0");
  const auto pa = odr::sample_reference_line(a, step);
  const auto pb = odr::sample_reference_line(b, step, 10);
  if (pa.empty() || pb.empty()) throw EstimationError("map_distance: empty sampling");
  std::vector<Vec2> bxy;
  bxy.reserve(pb.size());
  for (const auto& p : pb) bxy.push_back(p.head<2>());
  const Grid2 grid(bxy, std::max(step, 1.0));

  std::vector<double> dist(pa.size());
  parallel_for(pa.size(), threads, [&](std::size_t i) {
    const Vec2 q = pa[i].head<2>();
    const double best = (bxy[*grid.nearest(q)] - q).squaredNorm();
    dist[i] = std::sqrt(best);
  });

  MapDistanceReport r;
  r.sample_count = dist.size();
  double sum = 0, sum2 = 0;
  for (double d : dist) {
    sum += d;
    sum2 += d * d;
    r.max_distance = std::max(r.max_distance, d);
  }
  const double n = static_cast<double>(dist.size());
  r.avg_distance = sum / n;
  // rmse >= avg holds exactly; summation rounding can break it by an ulp.
  r.rmse = std::max(std::sqrt(sum2 / n), r.avg_distance);
  double var = 0;
  for (double d : dist) var += (d - r.avg_distance) * (d - r.avg_distance);
  r.sigma = std::sqrt(var / n);
  r.eval_length = odr::ReferenceLine(a).length();
  return r;
}

/// End-to-start gap and heading change at every geometry joint.
inline std::vector<Junction> continuity_report(const OdrDocument& doc) {
  std::vector<Junction> out;
  for (std::size_t i = 0; i + 1 < doc.plan_view.size(); ++i) {
    const odr::GeometryEvaluator cur(doc.plan_view[i]), next(doc.plan_view[i + 1]);
    const Vec3 e = cur.at(doc.plan_view[i].length);
    const Vec3 s = next.at(0.0);
    out.push_back({i, (e.head<2>() - s.head<2>()).norm(), rad2deg(std::abs(wrap_angle(s.z() - e.z())))});
  }
  return out;
}

inline bool continuity_ok(const std::vector<Junction>& js, double max_gap, double max_kink_deg) {
  return std::all_of(js.begin(), js.end(),
                     [&](const Junction& j) { return j.gap <= max_gap && j.kink_deg <= max_kink_deg; });
}

inline LaneWidthStats lane_width_stats(const RoadModel& model) {
  if (model.line_count < 2 || model.width_samples.empty())
    throw EstimationError("lane width statistics need at least two marking lines");
  LaneWidthStats st;
  st.samples = model.width_samples.size();
  for (double w : model.width_samples) st.mean += w;
  st.mean /= static_cast<double>(st.samples);
  for (double w : model.width_samples) st.sigma += (w - st.mean) * (w - st.mean);
  st.sigma = std::sqrt(st.sigma / static_cast<double>(st.samples));
  return st;
}

inline nlohmann::json to_json(const MapDistanceReport& r) {
  return {{"rmse", r.rmse},
          {"avg_distance", r.avg_distance},
          {"sigma", r.sigma},
          {"max_distance", r.max_distance},
          {"sample_count", r.sample_count},
          {"eval_length", r.eval_length}};
}

inline nlohmann::json to_json(const std::vector<Junction>& js) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& j : js) arr.push_back({{"index", j.index}, {"gap", j.gap}, {"kink_deg", j.kink_deg}});
  return arr;
}

inline std::string format_table(const MapDistanceReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-16s %12s\n%-16s %12.3f m\n%-16s %12.3f m\n%-16s %12.3f m\n%-16s %12.3f m\n%-16s %12.1f m\n%-16s %12zu\n",
                "metric", "value", "RMSE", r.rmse, "avg. distance", r.avg_distance, "std. deviation", r.sigma,
                "max distance", r.max_distance, "eval. length", r.eval_length, "samples", r.sample_count);
  return buf;
}

}  // namespace evaluation
}  // namespace odrgen
