#include "support.hpp"

#include <gtest/gtest.h>

using namespace odrgen;
using odrgen::test::TempDir;
using odrgen::test::write_text;

namespace {

Frame make_frame(std::vector<MarkPoint> pts, Pose pose) {
  Frame f;
  f.cloud.points = std::move(pts);
  f.pose = pose;
  return f;
}

}  // namespace

TEST(Ingest, SingleRowFrame) {
  TempDir d("ingest");
  write_text(d / "rec/frame_000000.csv", "x,y,z,reflectivity\n1,2,0.1,0.8\n");
  write_text(d / "rec/poses.csv", "timestamp,tx,ty,tz,yaw\n0,0,0,0,0\n");
  const auto rec = ingest::read_recording(d / "rec");
  ASSERT_EQ(rec.frames.size(), 1u);
  ASSERT_EQ(rec.frames[0].cloud.size(), 1u);
  EXPECT_EQ(rec.frames[0].cloud.points[0], (MarkPoint{1, 2, 0.1, 0.8}));
  EXPECT_EQ(rec.frames[0].cloud.frame, CoordFrame::Vehicle);
}

TEST(Ingest, ReflectivityOutOfRangeNamesFileAndLine) {
  TempDir d("ingest");
  write_text(d / "rec/frame_000000.csv", "x,y,z,reflectivity\n1,2,0.1,0.8\n1,2,0.1,1.5\n");
  write_text(d / "rec/poses.csv", "0,0,0,0,0\n");
  try {
    ingest::read_recording(d / "rec");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("frame_000000.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MalformedRowIsParseError) {
  TempDir d("ingest");
  write_text(d / "f.csv", "1,2,3,0.5\n1,2,abc,0.5\n");
  EXPECT_THROW(ingest::read_point_file(d / "f.csv"), ParseError);
  write_text(d / "g.csv", "1,2,3\n");
  EXPECT_THROW(ingest::read_point_file(d / "g.csv"), ParseError);
}

TEST(Ingest, EmptyDirectoryIsEmptyRecording) {
  TempDir d("ingest");
  const auto rec = ingest::read_recording(d.path());
  EXPECT_TRUE(rec.frames.empty());
}

TEST(Ingest, MissingPosesIsStructuralError) {
  TempDir d("ingest");
  write_text(d / "frame_000000.csv", "1,2,0,0.5\n");
  EXPECT_THROW(ingest::read_recording(d.path()), StructuralError);
}

TEST(Ingest, PoseCountMismatchIsStructuralError) {
  TempDir d("ingest");
  write_text(d / "frame_000000.csv", "1,2,0,0.5\n");
  write_text(d / "poses.csv", "0,0,0,0,0\n1,1,0,0,0\n");
  EXPECT_THROW(ingest::read_recording(d.path()), StructuralError);
}

TEST(Ingest, NonIncreasingTimestampsRejected) {
  TempDir d("ingest");
  write_text(d / "frame_000000.csv", "1,2,0,0.5\n");
  write_text(d / "frame_000001.csv", "1,2,0,0.5\n");
  write_text(d / "poses.csv", "1,0,0,0,0\n1,1,0,0,0\n");
  EXPECT_THROW(ingest::read_recording(d.path()), StructuralError);
}

TEST(Ingest, PosesRelativeToFirstTranslation) {
  TempDir d("ingest");
  write_text(d / "frame_000000.csv", "0,0,0,0.5\n");
  write_text(d / "frame_000001.csv", "0,0,0,0.5\n");
  write_text(d / "poses.csv", "0,1000,2000,30,0\n0.5,1010,2000,30,0\n");
  const auto rec = ingest::read_recording(d.path());
  EXPECT_EQ(rec.origin, Vec3(1000, 2000, 30));
  EXPECT_EQ(rec.frames[0].pose.translation, Vec3::Zero());
  EXPECT_EQ(rec.frames[1].pose.translation, Vec3(10, 0, 0));
}

TEST(Ingest, RecordingRoundTripCsvAndBinary) {
  TempDir d("ingest");
  Recording rec;
  rec.origin = Vec3(500, -20, 3);
  for (int i = 0; i < 3; ++i) {
    Frame f = make_frame({{0.25 * i, -1.5, 0.125, 0.75}, {3, 4, -0.5, 1.0}}, Pose{Vec3(i * 2.0, 0.5 * i, 0), 0.1 * i});
    f.timestamp = i * 0.5;
    rec.frames.push_back(f);
  }
  for (auto fmt : {PointFormat::Csv, PointFormat::Binary}) {
    const auto dir = d / (fmt == PointFormat::Csv ? "csv" : "bin");
    ingest::write_recording(rec, dir, fmt);
    const auto back = ingest::read_recording(dir);
    ASSERT_EQ(back.frames.size(), 3u);
    EXPECT_NEAR((back.origin - rec.origin).norm(), 0.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) {
      ASSERT_EQ(back.frames[i].cloud.size(), 2u);
      for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(back.frames[i].cloud.points[k], rec.frames[i].cloud.points[k]);
      EXPECT_NEAR((back.frames[i].pose.translation - rec.frames[i].pose.translation).norm(), 0.0, 1e-9);
      EXPECT_NEAR(back.frames[i].pose.yaw, rec.frames[i].pose.yaw, 1e-15);
    }
  }
}

TEST(Ingest, BinarySizeNotMultipleOf16) {
  TempDir d("ingest");
  write_text(d / "f.bin", std::string(20, '\0'));
  EXPECT_THROW(ingest::read_point_file(d / "f.bin"), ParseError);
}

TEST(Transform, IdentityPose) {
  const auto w = ingest::to_world(make_frame({{1, 2, 3, 0.5}}, Pose{}));
  EXPECT_EQ(w.frame, CoordFrame::World);
  EXPECT_EQ(w.points[0], (MarkPoint{1, 2, 3, 0.5}));
}

TEST(Transform, PureTranslation) {
  const auto w = ingest::to_world(make_frame({{1, 2, 3, 0.5}}, Pose{Vec3(10, 0, 0), 0}));
  EXPECT_EQ(w.points[0], (MarkPoint{11, 2, 3, 0.5}));
}

TEST(Transform, QuarterTurnYaw) {
  const auto w = ingest::to_world(make_frame({{1, 0, 0, 0.5}}, Pose{Vec3::Zero(), kPi / 2}));
  EXPECT_NEAR(w.points[0].x, 0.0, 1e-15);
  EXPECT_NEAR(w.points[0].y, 1.0, 1e-15);
}

TEST(Transform, WorldFrameInputRejected) {
  Frame f = make_frame({{1, 0, 0, 0.5}}, Pose{});
  f.cloud.frame = CoordFrame::World;
  EXPECT_THROW(ingest::to_world(f), StructuralError);
}

TEST(TransformProperty, IsometryAndInverse) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50, 50), yaw(-kPi, kPi);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MarkPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({u(rng), u(rng), u(rng) * 0.1, 0.5});
    const Pose pose{Vec3(u(rng) * 100, u(rng) * 100, u(rng)), yaw(rng)};
    const Frame f = make_frame(pts, pose);
    const auto w = ingest::to_world(f);
    for (int i = 0; i < 10; ++i)
      for (int j = i + 1; j < 10; ++j)
        EXPECT_NEAR((w.points[i].pos() - w.points[j].pos()).norm(), (pts[i].pos() - pts[j].pos()).norm(), 1e-9);
    const auto back = ingest::to_vehicle(w, pose);
    for (int i = 0; i < 10; ++i) EXPECT_NEAR((back.points[i].pos() - pts[i].pos()).norm(), 0.0, 1e-9);
  }
}

TEST(Merge, ConcatenatesInOrder) {
  PointCloud a, b;
  a.frame = b.frame = CoordFrame::World;
  a.points = {{1, 0, 0, 0.5}, {2, 0, 0, 0.5}};
  b.points = {{3, 0, 0, 0.5}};
  const std::vector<PointCloud> v{a, b};
  const auto m = ingest::merge_world(v);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.points[0].x, 1);
  EXPECT_EQ(m.points[2].x, 3);
  EXPECT_TRUE(ingest::merge_world(std::vector<PointCloud>{}).empty());
}

TEST(Merge, VehicleFrameInputRejected) {
  PointCloud a, b;
  a.frame = CoordFrame::World;
  b.frame = CoordFrame::Vehicle;
  const std::vector<PointCloud> v{a, b};
  EXPECT_THROW(ingest::merge_world(v), StructuralError);
}
