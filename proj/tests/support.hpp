#pragma once

#include "odrgen/ingest.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace odrgen::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("odrgen_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(ODRGEN_TEST_DATA) / name; }

inline PointCloud world_cloud(const std::vector<Vec3>& pts, double refl = 0.9) {
  PointCloud c;
  c.frame = CoordFrame::World;
  for (const auto& p : pts) c.points.push_back({p.x(), p.y(), p.z(), refl});
  return c;
}

/// Points along x from x0 to x1 (inclusive) at y, spacing `step`.
inline std::vector<Vec3> dash(double x0, double x1, double y, double step = 0.1) {
  std::vector<Vec3> out;
  const auto n = static_cast<long>(std::floor((x1 - x0) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.emplace_back(x0 + static_cast<double>(i) * step, y, 0.0);
  return out;
}

}  // namespace odrgen::test
