#pragma once

#include "odrgen/odr.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <set>
#include <sstream>

namespace odrgen {

struct Primitive {
  enum class Kind { Straight, Arc } kind = Kind::Straight;
  double length = 0;     // Straight
  double radius = 0;     // Arc
  double angle_deg = 0;  // Arc, positive turns left

  double arc_length() const { return kind == Kind::Straight ? length : radius * std::abs(deg2rad(angle_deg)); }
  double curvature() const {
    return kind == Kind::Straight ? 0.0 : (angle_deg >= 0 ? 1.0 : -1.0) / radius;
  }
};

struct SceneSpec {
  std::vector<Primitive> centerline;
  int lane_count = 3;
  double lane_width = 3.5;
  double dash_length = 6.0;
  double dash_gap = 12.0;
  double point_spacing = 0.1;
  double marking_width = 0.15;
  double noise_sigma = 0.0;
  double dropout_fraction = 0.0;
  std::map<int, double> line_dropout;  // per-line override, line 0 = leftmost
  double clutter_density = 0.0;        // points per m^2
  double high_refl_fraction = 0.2;
  double ground_density = 0.3;         // low-reflectivity road returns per m^2
  double margin = 3.0;                 // ground/clutter strip beyond the outer lines
  std::vector<std::pair<double, double>> elevation;  // (s, grade) knots, grade linear between knots
  double bank_angle_deg = 0.0;
  double start_heading_deg = 0.0;
  double frame_length = 20.0;
  double frame_interval = 0.5;  // seconds between frames
  Vec3 geo_offset = Vec3::Zero();
  std::uint64_t seed = 1;

  double length() const {
    double l = 0;
    for (const auto& p : centerline) l += p.arc_length();
    return l;
  }

  void validate() const {
    if (centerline.empty()) throw ConfigError("scene: centerline has no primitives");
    for (const auto& p : centerline) {
      if (p.kind == Primitive::Kind::Straight && !(p.length > 0)) throw ConfigError("scene: straight length must be > 0");
      if (p.kind == Primitive::Kind::Arc) {
        if (!(p.radius >= 200)) throw ConfigError("scene: arc radius must be >= 200 m");
        if (!(p.angle_deg != 0 && std::abs(p.angle_deg) < 180)) throw ConfigError("scene: arc angle must be in (0, 180) degrees");
      }
    }
    if (lane_count < 1) throw ConfigError("scene: lane_count must be >= 1");
    if (!(lane_width > 0 && dash_length > 0 && dash_gap >= 0 && point_spacing > 0 && marking_width >= 0))
      throw ConfigError("scene: marking dimensions must be positive");
    if (!(noise_sigma >= 0)) throw ConfigError("scene: noise_sigma must be >= 0");
    if (!(dropout_fraction >= 0 && dropout_fraction < 1)) throw ConfigError("scene: dropout_fraction must lie in [0, 1)");
    for (const auto& [k, f] : line_dropout) {
      if (k < 0 || k > lane_count) throw ConfigError("scene: line_dropout index out of range");
      if (!(f >= 0 && f <= 1)) throw ConfigError("scene: line_dropout fraction must lie in [0, 1]");
    }
    if (!(clutter_density >= 0 && ground_density >= 0 && margin >= 0)) throw ConfigError("scene: densities must be >= 0");
    if (!(high_refl_fraction >= 0 && high_refl_fraction <= 1)) throw ConfigError("scene: high_refl_fraction must lie in [0, 1]");
    for (std::size_t i = 1; i < elevation.size(); ++i)
      if (!(elevation[i].first > elevation[i - 1].first)) throw ConfigError("scene: elevation knots must increase in s");
    if (!elevation.empty() && elevation.front().first != 0.0) throw ConfigError("scene: first elevation knot must be at s=0");
    if (!(std::abs(bank_angle_deg) < 10)) throw ConfigError("scene: bank_angle_deg must be below 10 degrees");
    if (!(frame_length > 0 && frame_interval > 0)) throw ConfigError("scene: frame_length and frame_interval must be > 0");
  }
};

struct GroundTruth {
  std::vector<Vec3> centerline;               // local frame, 1 m spacing
  std::vector<std::vector<Vec3>> lines;       // marking lines, left to right
  int lane_count = 0;
  std::vector<double> lane_widths;
  OdrDocument doc;                            // local frame of the recording
};

struct SyntheticScene {
  Recording recording;  // absolute coordinates; origin not yet subtracted
  GroundTruth truth;
};

namespace synth {

/// Deterministic generator independent of the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2 * kPi * u2);
    return r * std::cos(2 * kPi * u2);
  }

 private:
  std::mt19937_64 eng_;
  std::optional<double> spare_;
};

/// Analytic centerline: position and heading at arclength s (local frame, starts at 0).
class Centerline {
 public:
  explicit Centerline(const SceneSpec& spec) {
    double s = 0, h = deg2rad(spec.start_heading_deg);
    Vec2 p = Vec2::Zero();
    for (const auto& prim : spec.centerline) {
      Piece piece{s, prim.arc_length(), prim.curvature(), p, h};
      pieces_.push_back(piece);
      const Vec3 e = eval(piece, piece.length);
      p = e.head<2>();
      h = e.z();
      s += piece.length;
    }
    length_ = s;
  }

  double length() const { return length_; }

  /// (x, y, heading) with heading unwrapped.
  Vec3 pose(double s) const {
    s = std::clamp(s, 0.0, length_);
    std::size_t i = 0;
    while (i + 1 < pieces_.size() && pieces_[i + 1].s0 <= s) ++i;
    return eval(pieces_[i], s - pieces_[i].s0);
  }

  /// Line/arc geometries of the centerline, shifted by -shift.
  std::vector<Geometry> geometries(const Vec2& shift) const {
    std::vector<Geometry> out;
    for (const auto& p : pieces_) {
      Geometry g;
      g.s = p.s0;
      g.x = p.start.x() - shift.x();
      g.y = p.start.y() - shift.y();
      g.hdg = wrap_angle(p.hdg0);
      g.length = p.length;
      g.kind = p.curvature == 0 ? GeometryKind::Line : GeometryKind::Arc;
      g.curvature = p.curvature;
      out.push_back(g);
    }
    return out;
  }

 private:
  struct Piece {
    double s0, length, curvature;
    Vec2 start;
    double hdg0;
  };
  static Vec3 eval(const Piece& p, double ds) {
    const double c = std::cos(p.hdg0), s = std::sin(p.hdg0);
    Vec2 local;
    if (p.curvature == 0) {
      local = {ds, 0};
    } else {
      const double k = p.curvature;
      local = {std::sin(k * ds) / k, (1 - std::cos(k * ds)) / k};
    }
    return {p.start.x() + c * local.x() - s * local.y(), p.start.y() + s * local.x() + c * local.y(),
            p.hdg0 + p.curvature * ds};
  }

  std::vector<Piece> pieces_;
  double length_ = 0;
};

/// Elevation of the centerline: grade interpolated linearly between knots, so
/// z is piecewise quadratic. One exact record per knot interval.
inline std::vector<CubicRecord> elevation_records(const SceneSpec& spec) {
  std::vector<CubicRecord> recs;
  if (spec.elevation.empty()) return {{0, 0, 0, 0, 0}};
  double z = 0;
  for (std::size_t i = 0; i < spec.elevation.size(); ++i) {
    const auto [s0, g0] = spec.elevation[i];
    if (i + 1 < spec.elevation.size()) {
      const auto [s1, g1] = spec.elevation[i + 1];
      const double slope = (g1 - g0) / (s1 - s0);
      recs.push_back({s0, z, g0, 0.5 * slope, 0});
      z += g0 * (s1 - s0) + 0.5 * slope * (s1 - s0) * (s1 - s0);
    } else {
      recs.push_back({s0, z, g0, 0, 0});
    }
  }
  return recs;
}

/// Lateral offset of marking line k (positive left of the centerline).
inline double line_offset(const SceneSpec& spec, int k) {
  return (0.5 * spec.lane_count - k) * spec.lane_width;
}

/// Lateral offset of the ego lane center.
inline double ego_offset(const SceneSpec& spec) {
  const int e = spec.lane_count / 2;
  return 0.5 * (line_offset(spec, e) + line_offset(spec, e + 1));
}

namespace detail {

struct ScenePoint {
  double s;
  Vec3 pos;
  double reflectivity;
};

}  // namespace detail

/// Builds a recording (per-frame vehicle clouds, absolute poses) and the analytic truth.
inline SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const Centerline cl(spec);
  const auto elev = elevation_records(spec);
  const double tan_bank = std::tan(deg2rad(spec.bank_angle_deg));
  const double L = cl.length();
  Rng rng(spec.seed);

  auto surface = [&](double s, double t) {
    const Vec3 c = cl.pose(s);
    const Vec2 left(-std::sin(c.z()), std::cos(c.z()));
    const Vec2 xy = c.head<2>() + t * left;
    return Vec3(xy.x(), xy.y(), odr::profile_at(elev, s) + t * tan_bank);
  };
  auto jitter = [&](Vec3 p) {
    if (spec.noise_sigma > 0) p += spec.noise_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    return p;
  };

  std::vector<detail::ScenePoint> pts;
  const int nlines = spec.lane_count + 1;
  const double cycle = spec.dash_length + spec.dash_gap;
  for (int k = 0; k < nlines; ++k) {
    const double t = line_offset(spec, k);
    const bool solid = k == 0 || k == nlines - 1;
    const double drop = spec.line_dropout.count(k) ? spec.line_dropout.at(k) : spec.dropout_fraction;
    const double piece = solid ? spec.dash_length : cycle;
    const auto pieces = static_cast<std::size_t>(std::ceil(L / piece));
    for (std::size_t j = 0; j < pieces; ++j) {
      const double s0 = static_cast<double>(j) * piece;
      const bool dropped = drop >= 1.0 || rng.uniform() < drop;
      if (dropped) continue;
      const double s1 = std::min(L, s0 + (solid ? piece : spec.dash_length));
      for (double s = s0; s < s1; s += spec.point_spacing) {
        const double dt = rng.uniform(-0.5, 0.5) * spec.marking_width;
        pts.push_back({s, jitter(surface(s, t + dt)), rng.uniform(0.6, 1.0)});
      }
    }
  }

  const double t_hi = line_offset(spec, 0) + spec.margin, t_lo = line_offset(spec, spec.lane_count) - spec.margin;
  const double area = L * (t_hi - t_lo);
  const auto ground = static_cast<std::size_t>(std::llround(spec.ground_density * area));
  for (std::size_t i = 0; i < ground; ++i) {
    const double s = rng.uniform(0, L), t = rng.uniform(t_lo, t_hi);
    pts.push_back({s, jitter(surface(s, t)), rng.uniform(0.05, 0.35)});
  }
  const auto clutter = static_cast<std::size_t>(std::llround(spec.clutter_density * area));
  for (std::size_t i = 0; i < clutter; ++i) {
    const bool elevated = i % 2 == 1;
    const bool bright = rng.uniform() < spec.high_refl_fraction;
    const double s = rng.uniform(0, L);
    double t = rng.uniform(t_lo, t_hi);
    // Bright returns on the surface next to a line are indistinguishable from paint.
    for (int attempt = 0; bright && !elevated && attempt < 100; ++attempt) {
      bool near = false;
      for (int k = 0; k < nlines; ++k) near = near || std::abs(t - line_offset(spec, k)) < 1.0;
      if (!near) break;
      t = rng.uniform(t_lo, t_hi);
    }
    Vec3 p = surface(s, t);
    if (elevated) p.z() += rng.uniform(0.3, 3.0);
    pts.push_back({s, jitter(p), bright ? rng.uniform(0.6, 1.0) : rng.uniform(0.05, 0.35)});
  }

  SyntheticScene out;
  const double te = ego_offset(spec);
  const auto frames = static_cast<std::size_t>(std::ceil(L / spec.frame_length));
  std::vector<std::vector<std::size_t>> members(frames);
  for (std::size_t i = 0; i < pts.size(); ++i)
    members[std::min(frames - 1, static_cast<std::size_t>(pts[i].s / spec.frame_length))].push_back(i);
  Vec3 ego0 = Vec3::Zero();
  for (std::size_t f = 0; f < frames; ++f) {
    const double sp = static_cast<double>(f) * spec.frame_length;
    const Vec3 c = cl.pose(sp);
    const Vec3 local = surface(sp, te);
    if (f == 0) ego0 = local;
    Pose pose{local + spec.geo_offset, wrap_angle(c.z())};
    PointCloud world;
    world.frame = CoordFrame::World;
    for (auto i : members[f]) {
      const Vec3 p = pts[i].pos + spec.geo_offset;
      world.points.push_back({p.x(), p.y(), p.z(), pts[i].reflectivity});
    }
    out.recording.frames.push_back({ingest::to_vehicle(world, pose), pose, static_cast<double>(f) * spec.frame_interval});
  }

  auto& truth = out.truth;
  truth.lane_count = spec.lane_count;
  truth.lane_widths.assign(static_cast<std::size_t>(spec.lane_count), spec.lane_width);
  truth.lines.resize(static_cast<std::size_t>(nlines));
  for (double s : odr::sample_positions(L, 1.0)) {
    truth.centerline.push_back(surface(s, 0) - ego0);
    for (int k = 0; k < nlines; ++k) truth.lines[static_cast<std::size_t>(k)].push_back(surface(s, line_offset(spec, k)) - ego0);
  }
  auto& doc = truth.doc;
  doc.georeference = odr::georeference_placeholder();
  doc.offset = spec.geo_offset + ego0;
  doc.plan_view = cl.geometries(ego0.head<2>());
  doc.elevation = elev;
  for (auto& r : doc.elevation) r.a -= ego0.z();
  if (spec.bank_angle_deg != 0) doc.superelevation = {{0, deg2rad(spec.bank_angle_deg), 0, 0, 0}};
  odr::assign_lanes(doc, truth.lane_widths, 0.5 * spec.lane_count * spec.lane_width);
  return out;
}

/// Adds isotropic Gaussian noise to every point; structure and counts unchanged.
inline Recording perturb_recording(const Recording& rec, std::uint64_t seed, double sigma = 0.03) {
  Recording out = rec;
  Rng rng(seed);
  for (auto& f : out.frames)
    for (auto& p : f.cloud.points) {
      p.x += sigma * rng.normal();
      p.y += sigma * rng.normal();
      p.z += sigma * rng.normal();
    }
  return out;
}

namespace detail {

inline double to_num(const std::string& key, const std::string& v) {
  double out = 0;
  if (!ingest::detail::parse_double(v, out) || !std::isfinite(out))
    throw ConfigError("scene: value for '" + key + "' is not a number: " + v);
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto t = ingest::detail::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace detail

/// Parses `straight:L` and `arc:R:angle_deg` items separated by commas.
inline std::vector<Primitive> parse_primitives(const std::string& text) {
  std::vector<Primitive> out;
  for (const auto& item : detail::split(text, ',')) {
    const auto f = detail::split(item, ':');
    Primitive p;
    if (f.size() == 2 && f[0] == "straight") {
      p.kind = Primitive::Kind::Straight;
      p.length = detail::to_num("primitives", f[1]);
    } else if (f.size() == 3 && f[0] == "arc") {
      p.kind = Primitive::Kind::Arc;
      p.radius = detail::to_num("primitives", f[1]);
      p.angle_deg = detail::to_num("primitives", f[2]);
    } else {
      throw ConfigError("scene: bad primitive '" + item + "' (expected straight:L or arc:R:deg)");
    }
    out.push_back(p);
  }
  return out;
}

/// Key-value scene description ([scene] section); unknown keys are refused.
inline SceneSpec parse_scene_spec(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("scene: " + e.message() + " at line " + std::to_string(e.line()));
  }
  SceneSpec spec;
  for (const auto& [section, body] : tree) {
    if (section != "scene") throw ConfigError("scene: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      auto num = [&] { return detail::to_num(key, v); };
      if (key == "primitives") spec.centerline = parse_primitives(v);
      else if (key == "lane_count") spec.lane_count = static_cast<int>(num());
      else if (key == "lane_width") spec.lane_width = num();
      else if (key == "dash_length") spec.dash_length = num();
      else if (key == "dash_gap") spec.dash_gap = num();
      else if (key == "point_spacing") spec.point_spacing = num();
      else if (key == "marking_width") spec.marking_width = num();
      else if (key == "noise_sigma") spec.noise_sigma = num();
      else if (key == "dropout_fraction") spec.dropout_fraction = num();
      else if (key == "clutter_density") spec.clutter_density = num();
      else if (key == "high_refl_fraction") spec.high_refl_fraction = num();
      else if (key == "ground_density") spec.ground_density = num();
      else if (key == "margin") spec.margin = num();
      else if (key == "bank_angle_deg") spec.bank_angle_deg = num();
      else if (key == "start_heading_deg") spec.start_heading_deg = num();
      else if (key == "frame_length") spec.frame_length = num();
      else if (key == "frame_interval") spec.frame_interval = num();
      else if (key == "seed") spec.seed = static_cast<std::uint64_t>(num());
      else if (key == "geo_offset") {
        const auto f = detail::split(v, ',');
        if (f.size() != 3) throw ConfigError("scene: geo_offset needs x,y,z");
        spec.geo_offset = Vec3(detail::to_num(key, f[0]), detail::to_num(key, f[1]), detail::to_num(key, f[2]));
      } else if (key == "elevation") {
        spec.elevation.clear();
        for (const auto& item : detail::split(v, ',')) {
          const auto f = detail::split(item, ':');
          if (f.size() != 2) throw ConfigError("scene: elevation knots are s:grade");
          spec.elevation.emplace_back(detail::to_num(key, f[0]), detail::to_num(key, f[1]));
        }
      } else if (key == "line_dropout") {
        spec.line_dropout.clear();
        for (const auto& item : detail::split(v, ',')) {
          const auto f = detail::split(item, ':');
          if (f.size() != 2) throw ConfigError("scene: line_dropout items are line:fraction");
          spec.line_dropout[static_cast<int>(detail::to_num(key, f[0]))] = detail::to_num(key, f[1]);
        }
      } else {
        throw ConfigError("scene: unknown key '" + key + "'");
      }
    }
  }
  spec.validate();
  return spec;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scene file: " + path.string());
  return parse_scene_spec(f);
}

}  // namespace synth
}  // namespace odrgen
