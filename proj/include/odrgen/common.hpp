#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace odrgen {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

/// Error categories; each maps onto one CLI exit code.
enum class ErrorKind { Config, Parse, Structural, Estimation, Topology, Export, Unsupported, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct ParseError : Error {
  ParseError(const std::string& file, std::size_t line, const std::string& w)
      : Error(ErrorKind::Parse, file + ":" + std::to_string(line) + ": " + w), file_(file), line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};
struct StructuralError : Error {
  explicit StructuralError(const std::string& w) : Error(ErrorKind::Structural, w) {}
};
struct EstimationError : Error {
  explicit EstimationError(const std::string& w) : Error(ErrorKind::Estimation, w) {}
};
struct TopologyError : Error {
  TopologyError(const std::string& w, std::vector<std::uint64_t> ids = {})
      : Error(ErrorKind::Topology, w), ids_(std::move(ids)) {}
  const std::vector<std::uint64_t>& line_ids() const noexcept { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};
struct ExportError : Error {
  explicit ExportError(const std::string& w) : Error(ErrorKind::Export, w) {}
};
struct UnsupportedFeature : Error {
  explicit UnsupportedFeature(const std::string& w) : Error(ErrorKind::Unsupported, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

/// 0 ok, 2 config, 3 data, 4 topology, 5 export/validation.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Topology: return 4;
    case ErrorKind::Export: return 5;
    default: return 3;
  }
}

/// Shortest round-trip text (17 significant digits), -0 printed as 0.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v == 0.0 ? 0.0 : v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

/// Wrap into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Distance from q to segment [a, b]; degenerate segments collapse to a point.
template <class V>
double point_segment_distance(const V& q, const V& a, const V& b, double* t_out = nullptr) {
  const V ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((q - a).dot(ab) / len2, 0.0, 1.0);
  if (t_out) *t_out = t;
  return (a + t * ab - q).norm();
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// Run fn(i) for i in [0, n) over at most `threads` workers. Static striping keeps
/// output placement independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Principal (largest-variance) direction and centroid of a point set.
template <int Dim>
std::pair<Eigen::Matrix<double, Dim, 1>, Eigen::Matrix<double, Dim, 1>> principal_axis(
    const std::vector<Eigen::Matrix<double, Dim, 1>>& pts) {
  using V = Eigen::Matrix<double, Dim, 1>;
  V mean = V::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix<double, Dim, Dim> cov = Eigen::Matrix<double, Dim, Dim>::Zero();
  for (const auto& p : pts) {
    const V d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, Dim, Dim>> es(cov);
  return {es.eigenvectors().col(Dim - 1), mean};
}

}  // namespace odrgen
