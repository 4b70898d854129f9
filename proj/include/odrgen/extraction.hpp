#pragma once

#include "odrgen/ingest.hpp"
#include "odrgen/spatial_grid.hpp"

#include <random>

namespace odrgen {

/// Upward shift of the fitted road plane; the average European curbstone height.
inline constexpr double PLANE_RAISE = 0.15;
/// Marking reflectivity threshold on the normalized [0, 1] scale.
inline constexpr double REFLECTIVITY_THRESHOLD = 0.5;

struct ExtractionConfig {
  double max_range = 200.0;
  double sensor_height = 1.8;
  double plane_raise = PLANE_RAISE;
  double reflectivity_threshold = REFLECTIVITY_THRESHOLD;
  double outlier_radius = 0.5;
  int outlier_min_neighbors = 4;
  int ransac_iterations = 200;
  double ransac_inlier_tol = 0.05;
  std::uint64_t rng_seed = 42;

  void validate() const {
    if (!(max_range > 0 && sensor_height > 0 && plane_raise > 0 && outlier_radius > 0 && ransac_inlier_tol > 0))
      throw ConfigError("extraction: all lengths must be > 0");
    if (!(reflectivity_threshold > 0 && reflectivity_threshold < 1))
      throw ConfigError("extraction: reflectivity_threshold must lie in (0,1)");
    if (outlier_min_neighbors < 1) throw ConfigError("extraction: outlier_min_neighbors must be >= 1");
    if (ransac_iterations < 1) throw ConfigError("extraction: ransac_iterations must be >= 1");
  }
};

/// Plane normal . p = offset, normal pointing up.
struct GroundPlane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::size_t inlier_count = 0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct PlaneFit {
  GroundPlane plane;
  std::vector<std::size_t> inliers;  // ascending
  Vec3 centroid = Vec3::Zero();      // of the inliers
};

/// World-frame ground plane observation: unit normal and inlier centroid.
struct PlaneSample {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  std::size_t inliers = 0;
};

namespace extraction {

inline PointCloud crop(const PointCloud& cloud, const ExtractionConfig& cfg) {
  PointCloud out;
  out.frame = cloud.frame;
  const double r2 = cfg.max_range * cfg.max_range;
  for (const auto& p : cloud.points)
    if (p.x * p.x + p.y * p.y + p.z * p.z <= r2 && p.z <= cfg.sensor_height) out.points.push_back(p);
  return out;
}

namespace detail {

/// Total-least-squares plane through the given points.
inline GroundPlane tls_plane(const std::vector<Vec3>& pts, const std::vector<std::size_t>& idx, Vec3* centroid) {
  Vec3 mean = Vec3::Zero();
  for (auto i : idx) mean += pts[i];
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : idx) {
    const Vec3 d = pts[i] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Vec3 n = es.eigenvectors().col(0).normalized();
  if (n.z() < 0) n = -n;
  if (centroid) *centroid = mean;
  return {n, n.dot(mean), idx.size()};
}

inline std::vector<std::size_t> inliers_of(const std::vector<Vec3>& pts, const GroundPlane& pl, double tol) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(pl.signed_distance(pts[i])) <= tol) in.push_back(i);
  return in;
}

}  // namespace detail

/// RANSAC over 3-point minimal sets, then total-least-squares refinement over the
/// consensus set until it stops changing.
inline PlaneFit fit_ground_plane_detailed(const PointCloud& cloud, const ExtractionConfig& cfg) {
  const auto pts = cloud.positions();
  const std::size_t n = pts.size();
  if (n < 3) throw EstimationError("ground plane needs >= 3 points, got " + std::to_string(n));

  // Collinear / coincident data has a rank-deficient scatter.
  {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(n);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov, Eigen::EigenvaluesOnly);
    const auto ev = es.eigenvalues();
    if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) throw EstimationError("ground plane: points are collinear");
  }

  std::mt19937_64 rng(cfg.rng_seed);
  const double tol = cfg.ransac_inlier_tol;
  GroundPlane best;
  std::size_t best_count = 0;
  bool found = false;
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    const std::size_t i = rng() % n, j = rng() % n, k = rng() % n;
    if (i == j || j == k || i == k) continue;
    Vec3 nrm = (pts[j] - pts[i]).cross(pts[k] - pts[i]);
    const double len = nrm.norm();
    if (!(len > 1e-12)) continue;
    nrm /= len;
    if (nrm.z() < 0) nrm = -nrm;
    const GroundPlane cand{nrm, nrm.dot(pts[i]), 0};
    std::size_t count = 0;
    for (const auto& p : pts) count += std::abs(cand.signed_distance(p)) <= tol;
    if (count > best_count) {
      best_count = count;
      best = cand;
      found = true;
    }
  }

  std::vector<std::size_t> inliers;
  if (found && best_count >= 3) {
    inliers = detail::inliers_of(pts, best, tol);
  } else {
    inliers.resize(n);
    std::iota(inliers.begin(), inliers.end(), 0);
  }

  PlaneFit fit;
  for (int round = 0; round < 5; ++round) {
    fit.plane = detail::tls_plane(pts, inliers, &fit.centroid);
    auto next = detail::inliers_of(pts, fit.plane, tol);
    if (next.size() < 3 || next == inliers) break;
    inliers = std::move(next);
  }
  fit.inliers = detail::inliers_of(pts, fit.plane, tol);
  if (fit.inliers.size() < 3) fit.inliers = inliers;
  fit.plane.inlier_count = fit.inliers.size();
  return fit;
}

inline GroundPlane fit_ground_plane(const PointCloud& cloud, const ExtractionConfig& cfg) {
  return fit_ground_plane_detailed(cloud, cfg).plane;
}

/// Keeps points no higher than plane_raise above the plane with reflectivity at
/// or above the threshold.
inline PointCloud filter_markings(const PointCloud& cloud, const GroundPlane& plane, const ExtractionConfig& cfg) {
  PointCloud out;
  out.frame = cloud.frame;
  for (const auto& p : cloud.points)
    if (plane.signed_distance(p.pos()) <= cfg.plane_raise && p.reflectivity >= cfg.reflectivity_threshold)
      out.points.push_back(p);
  return out;
}

/// Mask of points with at least min_neighbors *other* points within radius.
inline std::vector<char> radius_inlier_mask(const std::vector<Vec3>& pts, double radius, int min_neighbors,
                                            unsigned threads = 1) {
  std::vector<char> keep(pts.size(), 0);
  if (pts.empty()) return keep;
  const Grid3 grid(pts, radius);
  const double r2 = radius * radius;
  parallel_for(pts.size(), threads, [&](std::size_t i) {
    int count = 0;
    grid.for_each_in_radius(pts[i], radius, [&](std::size_t j, double d2) {
      if (j != i && d2 <= r2) ++count;
    });
    keep[i] = count >= min_neighbors;
  });
  return keep;
}

inline PointCloud remove_radius_outliers(const PointCloud& cloud, const ExtractionConfig& cfg,
                                         unsigned threads = 1) {
  if (cloud.frame != CoordFrame::World) throw StructuralError("remove_radius_outliers expects a World-frame cloud");
  const auto keep = radius_inlier_mask(cloud.positions(), cfg.outlier_radius, cfg.outlier_min_neighbors, threads);
  PointCloud out;
  out.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (keep[i]) out.points.push_back(cloud.points[i]);
  return out;
}

struct FrameExtraction {
  PointCloud markings;  // World frame, before outlier removal
  std::optional<PlaneSample> plane;
};

/// Crop, fit ground plane, filter markings, transform to world. A frame whose
/// plane cannot be estimated contributes nothing.
inline FrameExtraction extract_frame(const Frame& frame, const ExtractionConfig& cfg) {
  FrameExtraction out;
  out.markings.frame = CoordFrame::World;
  const PointCloud cropped = crop(frame.cloud, cfg);
  PlaneFit fit;
  try {
    fit = fit_ground_plane_detailed(cropped, cfg);
  } catch (const EstimationError&) {
    return out;
  }
  Frame filtered{filter_markings(cropped, fit.plane, cfg), frame.pose, frame.timestamp};
  out.markings = ingest::to_world(filtered);
  const double c = std::cos(frame.pose.yaw), s = std::sin(frame.pose.yaw);
  const Vec3& n = fit.plane.normal;
  const Vec3& m = fit.centroid;
  PlaneSample ps;
  ps.normal = Vec3(c * n.x() - s * n.y(), s * n.x() + c * n.y(), n.z());
  ps.position = Vec3(c * m.x() - s * m.y(), s * m.x() + c * m.y(), m.z()) + frame.pose.translation;
  ps.inliers = fit.inliers.size();
  out.plane = ps;
  return out;
}

}  // namespace extraction
}  // namespace odrgen
