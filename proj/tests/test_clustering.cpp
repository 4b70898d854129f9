#include "odrgen/clustering.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace odrgen;
using test::world_cloud;

namespace {

std::vector<Vec3> blob(const Vec3& c, int n, double r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-r, r);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.push_back(c + Vec3(u(rng), u(rng), 0.0));
  return out;
}

Cluster cluster_of(const std::vector<Vec3>& pts) { return clustering::make_cluster(world_cloud(pts), ClusterConfig{}); }

/// Checks labels against the brute-force core set and core connectivity; border
/// points must carry the label of some core point within eps.
void expect_matches_oracle(const std::vector<Vec3>& pts, double eps, int min_pts) {
  const auto lab = clustering::dbscan_labels(pts, eps, min_pts);
  const auto core = oracle::dbscan_core(pts, eps, min_pts);
  ASSERT_EQ(lab.core, core);
  const auto comp = oracle::core_components(pts, core, eps);
  std::map<long, int> comp_to_label;
  std::set<int> used;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!core[i]) continue;
    auto [it, fresh] = comp_to_label.emplace(comp[i], lab.labels[i]);
    EXPECT_EQ(it->second, lab.labels[i]) << "core point " << i << " split from its component";
    if (fresh) EXPECT_TRUE(used.insert(lab.labels[i]).second) << "two components share label " << lab.labels[i];
  }
  EXPECT_EQ(static_cast<std::size_t>(lab.cluster_count), comp_to_label.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (core[i]) continue;
    bool reachable = false, label_ok = false;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (core[j] && (pts[i] - pts[j]).norm() <= eps) {
        reachable = true;
        label_ok = label_ok || lab.labels[j] == lab.labels[i];
      }
    if (reachable)
      EXPECT_TRUE(label_ok) << "border point " << i;
    else
      EXPECT_EQ(lab.labels[i], -1) << "noise point " << i;
  }
}

}  // namespace

TEST(Dbscan, TwoSeparatedBlobs) {
  std::mt19937_64 rng(1);
  auto pts = blob(Vec3(0, 0, 0), 50, 0.3, rng);
  const auto b = blob(Vec3(10, 0, 0), 50, 0.3, rng);
  pts.insert(pts.end(), b.begin(), b.end());
  const auto r = clustering::dbscan(world_cloud(pts), ClusterConfig{});
  EXPECT_EQ(r.clusters.size(), 2u);
  EXPECT_TRUE(r.noise.empty());
}

TEST(Dbscan, SinglePointIsNoise) {
  const auto r = clustering::dbscan(world_cloud({Vec3(1, 2, 3)}), ClusterConfig{});
  EXPECT_TRUE(r.clusters.empty());
  EXPECT_EQ(r.noise.size(), 1u);
}

TEST(Dbscan, Random500MatchesBruteForce) {
  std::mt19937_64 rng(500);
  std::uniform_real_distribution<double> u(0, 15);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(u(rng), u(rng), 0.0);
  expect_matches_oracle(pts, 0.4, 5);
}

TEST(DbscanProperty, RandomInstancesMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> n(50, 1500);
    std::uniform_real_distribution<double> u(0, 20), z(0, 0.2);
    const int count = n(rng);
    std::vector<Vec3> pts;
    for (int i = 0; i < count; ++i) pts.emplace_back(u(rng), u(rng) * 0.5, z(rng));
    SCOPED_TRACE("seed " + std::to_string(seed));
    expect_matches_oracle(pts, 0.4, 5);
  }
}

TEST(DbscanProperty, CoreSetPermutationInvariant) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) pts.emplace_back(u(rng), u(rng), 0.0);
  const auto a = clustering::dbscan_labels(pts, 0.4, 5);
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> sh;
  for (auto i : perm) sh.push_back(pts[i]);
  const auto b = clustering::dbscan_labels(sh, 0.4, 5);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(b.core[k], a.core[perm[k]]);
  EXPECT_EQ(a.cluster_count, b.cluster_count);
}

TEST(Split, ShortClusterUnchanged) {
  const auto c = cluster_of(test::dash(0, 12, 0));
  EXPECT_NEAR(c.length, 12.0, 1e-9);
  const auto out = clustering::split_cluster(c, ClusterConfig{});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].points.size(), c.points.size());
}

TEST(Split, ThirtySixMetersGivesSixSixMeterSlices) {
  const auto c = cluster_of(test::dash(0, 36, 0, 0.05));
  const auto out = clustering::split_cluster(c, ClusterConfig{});
  ASSERT_EQ(out.size(), 6u);
  for (const auto& s : out) EXPECT_NEAR(s.length, 6.0, 0.06);
}

TEST(Split, ThirtyOneMetersGivesSixUniformSlices) {
  const auto c = cluster_of(test::dash(0, 31, 0, 0.01));
  const auto out = clustering::split_cluster(c, ClusterConfig{});
  ASSERT_EQ(out.size(), 6u);
  double sum = 0;
  for (const auto& s : out) {
    // Slice extents are quantized to the point spacing.
    EXPECT_NEAR(s.length, 31.0 / 6.0, 0.02);
    sum += s.length;
  }
  // Gaps between adjacent slices are one point spacing each.
  EXPECT_NEAR(sum + 5 * 0.01, 31.0, 0.011);
}

TEST(SplitProperty, SlicesPartitionPoints) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> len(31, 120), j(-0.05, 0.05);
  for (int trial = 0; trial < 10; ++trial) {
    auto pts = test::dash(0, len(rng), 0, 0.1);
    for (auto& p : pts) p.y() += j(rng);
    const auto c = cluster_of(pts);
    const auto out = clustering::split_cluster(c, ClusterConfig{});
    std::size_t total = 0;
    for (const auto& s : out) {
      total += s.points.size();
      EXPECT_LE(s.length, 6.0 + 1e-9);
    }
    EXPECT_EQ(total, pts.size());
  }
}

TEST(CenterBB, Examples) {
  EXPECT_EQ(clustering::calc_center_bb(world_cloud({Vec3(0, 0, 0), Vec3(2, 4, 1)})), Vec3(1, 2, 0.5));
  EXPECT_EQ(clustering::calc_center_bb(world_cloud({Vec3(3, -1, 2)})), Vec3(3, -1, 2));
  std::vector<Vec3> sym;
  for (double dx : {-3.0, -1.0, 1.0, 3.0})
    for (double dy : {-0.075, 0.075}) sym.emplace_back(5 + dx, 5 + dy, 0);
  EXPECT_NEAR((clustering::calc_center_bb(world_cloud(sym)) - Vec3(5, 5, 0)).norm(), 0.0, 1e-12);
  EXPECT_THROW(clustering::calc_center_bb(PointCloud{}), EstimationError);
}

TEST(LineRansac, CollinearDiagonal) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(0.1 * i, 0.1 * i, 0);
  const Vec3 d = clustering::line_ransac(world_cloud(pts), ClusterConfig{});
  EXPECT_NEAR(std::abs(d.dot(Vec3(1, 1, 0).normalized())), 1.0, 1e-6);
  EXPECT_NEAR(d.norm(), 1.0, 1e-9);
}

TEST(LineRansac, JitteredDashWithinTwoDegrees) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 0.03);
  const double yaw = 0.3;
  const Vec3 axis(std::cos(yaw), std::sin(yaw), 0);
  std::vector<Vec3> pts;
  for (double t = -3; t <= 3; t += 0.1) pts.push_back(t * axis + Vec3(n(rng), n(rng), n(rng)));
  const Vec3 d = clustering::line_ransac(world_cloud(pts), ClusterConfig{});
  EXPECT_LT(rad2deg(std::acos(std::min(1.0, std::abs(d.dot(axis))))), 2.0);
}

TEST(LineRansac, TwoPointsExactChord) {
  const Vec3 d = clustering::line_ransac(world_cloud({Vec3(0, 0, 0), Vec3(3, 4, 0)}), ClusterConfig{});
  EXPECT_NEAR(std::abs(d.dot(Vec3(0.6, 0.8, 0))), 1.0, 1e-15);
  EXPECT_THROW(clustering::line_ransac(world_cloud({Vec3(1, 1, 1)}), ClusterConfig{}), EstimationError);
}

TEST(LineRansacProperty, PermutationInvariant) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 0.03);
  std::vector<Vec3> pts;
  for (double t = 0; t <= 6; t += 0.1) pts.emplace_back(t, 0.2 * t + n(rng), n(rng));
  const Vec3 a = clustering::line_ransac(world_cloud(pts), ClusterConfig{});
  std::shuffle(pts.begin(), pts.end(), rng);
  const Vec3 b = clustering::line_ransac(world_cloud(pts), ClusterConfig{});
  EXPECT_NEAR((a - b).norm(), 0.0, 1e-12);
}

TEST(ClusterInvariants, DirectionCenterLength) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = blob(Vec3(trial, 2.0 * trial, 0), 40, 0.5 + trial * 0.1, rng);
    const auto c = cluster_of(pts);
    EXPECT_NEAR(c.raw_direction.norm(), 1.0, 1e-9);
    EXPECT_GE(c.length, 0.0);
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    EXPECT_TRUE((c.center.array() >= lo.array()).all() && (c.center.array() <= hi.array()).all());
  }
}

TEST(UnifyDirection, Examples) {
  std::vector<Cluster> cs(3);
  cs[0].center = Vec3(100, 0, 0);
  cs[0].raw_direction = Vec3(-1, 0, 0);
  cs[1].center = Vec3(100, 0, 0);
  cs[1].raw_direction = Vec3(1, 0, 0);
  cs[2].center = Vec3(50, 50, 0);
  cs[2].raw_direction = Vec3(0, -1, 0);
  clustering::unify_direction(cs);
  EXPECT_EQ(cs[0].raw_direction, Vec3(1, 0, 0));
  EXPECT_EQ(cs[1].raw_direction, Vec3(1, 0, 0));
  EXPECT_EQ(cs[2].raw_direction, Vec3(0, 1, 0));
  EXPECT_EQ(cs[2].raw_direction.dot(cs[2].center), 50.0);
}

TEST(UnifyDirectionProperty, NonNegativeDotAndIdempotent) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-100, 100);
  std::vector<Cluster> cs(100);
  for (auto& c : cs) {
    c.center = Vec3(u(rng), u(rng), 0);
    c.raw_direction = Vec3(u(rng), u(rng), 0).normalized();
  }
  clustering::unify_direction(cs);
  auto again = cs;
  clustering::unify_direction(again);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_GE(cs[i].raw_direction.dot(cs[i].center), 0.0);
    EXPECT_EQ(cs[i].raw_direction, again[i].raw_direction);
  }
}
