#pragma once

#include "odrgen/common.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string_view>

namespace odrgen {

/// One LiDAR return. Reflectivity is normalized to [0, 1].
struct MarkPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double reflectivity = 0.0;

  Vec3 pos() const { return {x, y, z}; }
  bool operator==(const MarkPoint&) const = default;
};

enum class CoordFrame { Vehicle, World };

struct PointCloud {
  std::vector<MarkPoint> points;
  CoordFrame frame = CoordFrame::Vehicle;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  std::vector<Vec3> positions() const {
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = points[i].pos();
    return out;
  }
};

/// 4-DoF pose: translation in the world frame and yaw about world Z.
struct Pose {
  Vec3 translation = Vec3::Zero();
  double yaw = 0.0;
};

struct Frame {
  PointCloud cloud;
  Pose pose;
  double timestamp = 0.0;
};

/// Frames with poses relative to `origin` (the first pose's translation).
struct Recording {
  std::vector<Frame> frames;
  Vec3 origin = Vec3::Zero();
};

enum class PointFormat { Csv, Binary };

namespace ingest {

inline bool valid_point(const MarkPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && p.reflectivity >= 0.0 &&
         p.reflectivity <= 1.0;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// Splits a CSV row into `n` doubles; false if the column count or any value is bad.
inline bool parse_row(std::string_view line, std::span<double> out) {
  std::size_t col = 0;
  while (true) {
    const auto comma = line.find(',');
    const auto field = line.substr(0, comma);
    if (col >= out.size() || !parse_double(field, out[col])) return false;
    ++col;
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return col == out.size();
}

inline bool looks_like_header(std::string_view line) {
  for (char c : line)
    if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') return true;
  return false;
}

/// Reads numeric rows of `ncols` columns. Skips blank lines, '#' comments and an
/// optional first header row. Calls fn(values, line_no) per row.
template <class Fn>
void read_numeric_csv(const std::filesystem::path& path, std::size_t ncols, Fn&& fn,
                      std::vector<std::string>* comments = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool seen_data = false;
  std::vector<double> values(ncols);
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (comments) comments->emplace_back(t.substr(1));
      continue;
    }
    if (!parse_row(t, values)) {
      if (!seen_data && looks_like_header(t)) {
        seen_data = true;
        continue;
      }
      throw ParseError(path.string(), line_no, "expected " + std::to_string(ncols) + " numeric columns");
    }
    seen_data = true;
    fn(std::span<const double>(values), line_no);
  }
}

inline float load_f32_le(const unsigned char* p) {
  std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                    (std::uint32_t(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline void store_f32_le(unsigned char* p, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  p[0] = static_cast<unsigned char>(u);
  p[1] = static_cast<unsigned char>(u >> 8);
  p[2] = static_cast<unsigned char>(u >> 16);
  p[3] = static_cast<unsigned char>(u >> 24);
}

}  // namespace detail

/// Reads a point file: CSV rows `x,y,z,reflectivity`, or packed little-endian
/// float32 quadruples when the extension is `.bin`.
inline PointCloud read_point_file(const std::filesystem::path& path, CoordFrame frame = CoordFrame::Vehicle,
                                  std::vector<std::string>* comments = nullptr) {
  PointCloud cloud;
  cloud.frame = frame;
  if (path.extension() == ".bin") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 16 != 0)
      throw ParseError(path.string(), 0, "binary size " + std::to_string(bytes.size()) + " not a multiple of 16");
    cloud.points.reserve(bytes.size() / 16);
    for (std::size_t off = 0, rec = 1; off < bytes.size(); off += 16, ++rec) {
      MarkPoint p{detail::load_f32_le(&bytes[off]), detail::load_f32_le(&bytes[off + 4]),
                  detail::load_f32_le(&bytes[off + 8]), detail::load_f32_le(&bytes[off + 12])};
      if (!valid_point(p)) throw ParseError(path.string(), rec, "point out of range (record index)");
      cloud.points.push_back(p);
    }
    return cloud;
  }
  detail::read_numeric_csv(
      path, 4,
      [&](std::span<const double> v, std::size_t line_no) {
        MarkPoint p{v[0], v[1], v[2], v[3]};
        if (!valid_point(p))
          throw ParseError(path.string(), line_no, "point out of range (coordinates finite, reflectivity in [0,1])");
        cloud.points.push_back(p);
      },
      comments);
  return cloud;
}

inline void write_point_file(const PointCloud& cloud, const std::filesystem::path& path, PointFormat format,
                             const std::vector<std::string>& comments = {}) {
  if (format == PointFormat::Binary) {
    std::vector<unsigned char> bytes(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      detail::store_f32_le(&bytes[i * 16], static_cast<float>(p.x));
      detail::store_f32_le(&bytes[i * 16 + 4], static_cast<float>(p.y));
      detail::store_f32_le(&bytes[i * 16 + 8], static_cast<float>(p.z));
      detail::store_f32_le(&bytes[i * 16 + 12], static_cast<float>(p.reflectivity));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return;
  }
  std::ostringstream os;
  for (const auto& c : comments) os << '#' << c << '\n';
  os << "x,y,z,reflectivity\n";
  for (const auto& p : cloud.points)
    os << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z)
       << ',' << format_double(p.reflectivity) << '\n';
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << os.str();
}

inline bool is_frame_file(const std::filesystem::path& p) {
  const auto ext = p.extension();
  return (ext == ".csv" || ext == ".bin") && p.filename() != "poses.csv";
}

/// Reads `poses.csv` (timestamp,tx,ty,tz,yaw) and per-frame point files, pairing
/// the i-th pose row with the i-th frame file in filename order. Poses are made
/// relative to the first pose's translation, which becomes Recording::origin.
inline Recording read_recording(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("recording directory does not exist: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_frame_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  const auto pose_path = dir / "poses.csv";
  Recording rec;
  if (!fs::exists(pose_path)) {
    if (files.empty()) return rec;
    throw StructuralError("missing poses.csv in " + dir.string() + " (" + std::to_string(files.size()) +
                          " frame files)");
  }

  struct PoseRow {
    double t;
    Pose pose;
    std::size_t line;
  };
  std::vector<PoseRow> rows;
  detail::read_numeric_csv(pose_path, 5, [&](std::span<const double> v, std::size_t line_no) {
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError(pose_path.string(), line_no, "non-finite pose value");
    rows.push_back({v[0], Pose{Vec3(v[1], v[2], v[3]), wrap_angle(v[4])}, line_no});
  });
  if (rows.size() != files.size())
    throw StructuralError("pose/frame count mismatch: " + std::to_string(rows.size()) + " poses vs " +
                          std::to_string(files.size()) + " frame files");

  rec.frames.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rec.frames[i].cloud = read_point_file(files[i], CoordFrame::Vehicle);
    rec.frames[i].pose = rows[i].pose;
    rec.frames[i].timestamp = rows[i].t;
  }
  std::stable_sort(rec.frames.begin(), rec.frames.end(),
                   [](const Frame& a, const Frame& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 1; i < rec.frames.size(); ++i)
    if (!(rec.frames[i].timestamp > rec.frames[i - 1].timestamp))
      throw StructuralError("timestamps not strictly increasing at frame " + std::to_string(i));

  if (!rec.frames.empty()) {
    rec.origin = rec.frames.front().pose.translation;
    for (auto& f : rec.frames) f.pose.translation -= rec.origin;
  }
  return rec;
}

/// Writes a recording in the layout read_recording expects; poses are written
/// in absolute coordinates (origin added back).
inline void write_recording(const Recording& rec, const std::filesystem::path& dir,
                            PointFormat format = PointFormat::Csv) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream poses;
  poses << "timestamp,tx,ty,tz,yaw\n";
  const char* ext = format == PointFormat::Binary ? ".bin" : ".csv";
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    const Vec3 t = f.pose.translation + rec.origin;
    poses << format_double(f.timestamp) << ',' << format_double(t.x()) << ','
          << format_double(t.y()) << ',' << format_double(t.z()) << ','
          << format_double(f.pose.yaw) << '\n';
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu%s", i, ext);
    write_point_file(f.cloud, dir / name, format);
  }
  std::ofstream out(dir / "poses.csv");
  if (!out) throw IoError("cannot write " + (dir / "poses.csv").string());
  out << poses.str();
}

/// Rotates by yaw, then translates.
inline PointCloud to_world(const Frame& frame) {
  if (frame.cloud.frame != CoordFrame::Vehicle) throw StructuralError("to_world expects a Vehicle-frame cloud");
  const double c = std::cos(frame.pose.yaw), s = std::sin(frame.pose.yaw);
  const Vec3& t = frame.pose.translation;
  PointCloud out;
  out.frame = CoordFrame::World;
  out.points.resize(frame.cloud.size());
  for (std::size_t i = 0; i < frame.cloud.size(); ++i) {
    const auto& p = frame.cloud.points[i];
    out.points[i] = {c * p.x - s * p.y + t.x(), s * p.x + c * p.y + t.y(), p.z + t.z(), p.reflectivity};
  }
  return out;
}

/// Inverse of to_world for the same pose.
inline PointCloud to_vehicle(const PointCloud& world, const Pose& pose) {
  if (world.frame != CoordFrame::World) throw StructuralError("to_vehicle expects a World-frame cloud");
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  PointCloud out;
  out.frame = CoordFrame::Vehicle;
  out.points.resize(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) {
    const auto& p = world.points[i];
    const double dx = p.x - pose.translation.x(), dy = p.y - pose.translation.y();
    out.points[i] = {c * dx + s * dy, -s * dx + c * dy, p.z - pose.translation.z(), p.reflectivity};
  }
  return out;
}

inline PointCloud merge_world(std::span<const PointCloud> clouds) {
  PointCloud out;
  out.frame = CoordFrame::World;
  std::size_t total = 0;
  for (const auto& c : clouds) {
    if (c.frame != CoordFrame::World) throw StructuralError("merge_world: input cloud is not World-frame");
    total += c.size();
  }
  out.points.reserve(total);
  for (const auto& c : clouds) out.points.insert(out.points.end(), c.points.begin(), c.points.end());
  return out;
}

}  // namespace ingest
}  // namespace odrgen
