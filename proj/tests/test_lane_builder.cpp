#include "odrgen/lane_builder.hpp"
#include "odrgen/synth.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace odrgen;

namespace {

std::vector<Cluster> clusters_at(const std::vector<Vec3>& centers, const Vec3& dir = Vec3::UnitX()) {
  std::vector<Cluster> out;
  for (const auto& c : centers) {
    Cluster k;
    k.center = c;
    k.raw_direction = dir;
    k.length = 6.0;
    out.push_back(k);
  }
  return out;
}

CandidateLine line_of(std::uint64_t id, const std::vector<Vec3>& centers) {
  CandidateLine l;
  l.id = id;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    l.cluster_ids.push_back(id * 100 + i);
    l.centers.push_back(centers[i]);
    l.directions.push_back(Vec3::UnitX());
  }
  return l;
}

std::vector<Vec3> row(double x0, double x1, double y, double spacing = 18.0) {
  std::vector<Vec3> out;
  for (double x = x0; x <= x1 + 1e-9; x += spacing) out.emplace_back(x, y, 0.0);
  return out;
}

/// Cluster-id sets of the lines, sorted, as a canonical partition.
std::vector<std::vector<std::size_t>> partition(const std::vector<CandidateLine>& lines) {
  std::vector<std::vector<std::size_t>> p;
  for (const auto& l : lines) {
    auto ids = l.cluster_ids;
    std::sort(ids.begin(), ids.end());
    p.push_back(ids);
  }
  std::sort(p.begin(), p.end());
  return p;
}

/// Noise-free marking points of a synthetic scene, world frame.
PointCloud marking_points(const SceneSpec& spec) {
  const auto scene = synth::generate_scene(spec);
  PointCloud out;
  out.frame = CoordFrame::World;
  for (const auto& f : scene.recording.frames)
    for (const auto& p : ingest::to_world(f).points)
      if (p.reflectivity >= 0.5) out.points.push_back(p);
  return out;
}

}  // namespace

TEST(Stabilize, FixedPoint) {
  EXPECT_EQ(lanes::stabilize_direction(Vec3::UnitX(), Vec3::UnitX(), 0.5), Vec3::UnitX());
}

TEST(Stabilize, OrthogonalBlendIsRenormalized) {
  const Vec3 v = lanes::stabilize_direction(Vec3::UnitX(), Vec3::UnitY(), 0.5);
  EXPECT_NEAR((v - Vec3(std::sqrt(0.5), std::sqrt(0.5), 0)).norm(), 0.0, 1e-15);
}

TEST(Stabilize, GammaBoundaries) {
  const Vec3 a = Vec3(0.6, 0.8, 0), b = Vec3(1, 0, 0);
  EXPECT_EQ(lanes::stabilize_direction(a, b, 1.0), a);
  EXPECT_EQ(lanes::stabilize_direction(a, b, 0.0), b);
}

TEST(Stabilize, AntiparallelFallsBackToLatest) {
  EXPECT_EQ(lanes::stabilize_direction(Vec3::UnitX(), -Vec3::UnitX(), 0.5), Vec3::UnitX());
}

TEST(StabilizeProperty, UnitLength) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), g(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = Vec3(u(rng), u(rng), u(rng)).normalized(), b = Vec3(u(rng), u(rng), u(rng)).normalized();
    EXPECT_NEAR(lanes::stabilize_direction(a, b, g(rng)).norm(), 1.0, 1e-12);
  }
}

TEST(SearchMark, EighteenMetersJoins) {
  const auto cl = clusters_at({Vec3(0, 0, 0), Vec3(18, 0, 0)});
  const auto lines = lanes::generate_candidates(cl, SearchConfig{});
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].size(), 2u);
}

TEST(SearchMark, ThirtyMetersSeparates) {
  const auto cl = clusters_at({Vec3(0, 0, 0), Vec3(30, 0, 0)});
  EXPECT_EQ(lanes::generate_candidates(cl, SearchConfig{}).size(), 2u);
}

TEST(SearchMark, ParallelMarkingNotCaptured) {
  const auto cl = clusters_at({Vec3(0, 0, 0), Vec3(18, 3.5, 0)});
  EXPECT_EQ(lanes::generate_candidates(cl, SearchConfig{}).size(), 2u);
}

TEST(SearchMarkProperty, ConsumptionIsExclusive) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 300), v(-8, 8);
  std::vector<Vec3> centers;
  for (int i = 0; i < 300; ++i) centers.emplace_back(u(rng), v(rng), 0.0);
  const auto cl = clusters_at(centers);
  for (const auto& lines :
       {lanes::generate_candidates(cl, SearchConfig{}), lanes::combine_candidates(lanes::generate_candidates(cl, SearchConfig{}), SearchConfig{})}) {
    std::vector<int> seen(cl.size(), 0);
    for (const auto& l : lines)
      for (auto id : l.cluster_ids) ++seen[id];
    for (std::size_t i = 0; i < cl.size(); ++i) EXPECT_EQ(seen[i], 1) << "cluster " << i;
  }
}

TEST(DistSort, Examples) {
  const auto l = lanes::dist_sort(line_of(1, {Vec3(20, 0, 0), Vec3(0, 0, 0), Vec3(10, 0, 0)}));
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l.centers[0], Vec3(0, 0, 0));
  EXPECT_EQ(l.centers[1], Vec3(10, 0, 0));
  EXPECT_EQ(l.centers[2], Vec3(20, 0, 0));
  EXPECT_EQ(l.cluster_ids[0], 101u);
  const auto single = lanes::dist_sort(line_of(2, {Vec3(5, 5, 0)}));
  EXPECT_EQ(single.centers, std::vector<Vec3>{Vec3(5, 5, 0)});
  const auto again = lanes::dist_sort(l);
  EXPECT_EQ(again.centers, l.centers);
}

TEST(Combine, FortyMeterGapMerges) {
  const auto out = lanes::combine_candidates({line_of(1, row(0, 36, 0)), line_of(2, row(76, 112, 0))}, SearchConfig{});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 1u);
  EXPECT_EQ(out[0].size(), 6u);
}

TEST(Combine, SeventyMeterGapStaysSplit) {
  const auto out = lanes::combine_candidates({line_of(1, row(0, 36, 0)), line_of(2, row(106, 142, 0))}, SearchConfig{});
  EXPECT_EQ(out.size(), 2u);
}

TEST(Combine, ParallelLinesNotMerged) {
  const auto out = lanes::combine_candidates({line_of(1, row(0, 90, 0)), line_of(2, row(9, 99, 3.5))}, SearchConfig{});
  EXPECT_EQ(out.size(), 2u);
}

TEST(Combine, CurvedGapFollowsArc) {
  // R = 500 m arc, 45 m occlusion: a straight probe would miss by about 2 m.
  const double R = 500;
  auto arc_line = [&](std::uint64_t id, double s0, double s1) {
    CandidateLine l = line_of(id, {});
    for (double s = s0; s <= s1 + 1e-9; s += 18) {
      l.cluster_ids.push_back(id * 100 + l.size());
      l.centers.emplace_back(R * std::sin(s / R), R * (1 - std::cos(s / R)), 0);
      l.directions.emplace_back(std::cos(s / R), std::sin(s / R), 0);
    }
    return l;
  };
  const auto out = lanes::combine_candidates({arc_line(1, 0, 90), arc_line(2, 135, 225)}, SearchConfig{});
  EXPECT_EQ(out.size(), 1u);
}

TEST(CombineProperty, ConfluentUnderInputOrder) {
  std::vector<CandidateLine> lines;
  std::uint64_t id = 1;
  for (double y : {0.0, 3.5, 7.0})
    for (double x0 : {0.0, 80.0, 150.0, 300.0}) lines.push_back(line_of(id++, row(x0 + y, x0 + y + 36, y)));
  const auto ref = partition(lanes::combine_candidates(lines, SearchConfig{}));
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(lines.begin(), lines.end(), rng);
    EXPECT_EQ(partition(lanes::combine_candidates(lines, SearchConfig{})), ref);
  }
}

TEST(Builder, NoiseFreeThreeLineHighway) {
  SceneSpec spec;
  spec.lane_count = 2;
  spec.centerline = {{Primitive::Kind::Straight, 300, 0, 0}, {Primitive::Kind::Arc, 0, 1000, 12}};
  spec.marking_width = 0.0;
  spec.ground_density = 0.0;
  const auto cloud = marking_points(spec);
  const auto clusters = clustering::build_clusters(cloud, ClusterConfig{});
  const auto lines = lanes::combine_candidates(lanes::generate_candidates(clusters, SearchConfig{}), SearchConfig{});
  ASSERT_EQ(lines.size(), 3u);
  std::size_t covered = 0;
  for (const auto& l : lines) covered += l.size();
  EXPECT_EQ(covered, clusters.size());
  for (const auto& l : lines) {
    const double y0 = l.centers.front().y();
    EXPECT_TRUE(std::abs(y0 - synth::line_offset(spec, 0)) < 0.5 || std::abs(y0 - synth::line_offset(spec, 1)) < 0.5 ||
                std::abs(y0 - synth::line_offset(spec, 2)) < 0.5)
        << y0;
  }
}
