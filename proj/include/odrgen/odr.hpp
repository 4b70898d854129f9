#pragma once

#include "odrgen/topology.hpp"

#include <array>

namespace odrgen {

/// u(p) = aU + bU p + cU p^2 + dU p^3, likewise v(p).
struct ParamPoly3 {
  double aU = 0, bU = 0, cU = 0, dU = 0;
  double aV = 0, bV = 0, cV = 0, dV = 0;
  bool normalized = true;  // pRange: p in [0,1] if true, else p in [0,length]

  Vec2 eval(double p) const {
    return {aU + p * (bU + p * (cU + p * dU)), aV + p * (bV + p * (cV + p * dV))};
  }
  Vec2 derivative(double p) const {
    return {bU + p * (2 * cU + 3 * p * dU), bV + p * (2 * cV + 3 * p * dV)};
  }
  bool operator==(const ParamPoly3&) const = default;
};

enum class GeometryKind { Line, Arc, ParamPoly3 };

struct Geometry {
  double s = 0, x = 0, y = 0, hdg = 0, length = 0;
  GeometryKind kind = GeometryKind::ParamPoly3;
  double curvature = 0;  // Arc only
  ParamPoly3 poly;       // ParamPoly3 only
  bool operator==(const Geometry&) const = default;
};

/// value(s) = a + b ds + c ds^2 + d ds^3 with ds = s - this->s.
struct CubicRecord {
  double s = 0, a = 0, b = 0, c = 0, d = 0;
  double eval(double at) const {
    const double ds = at - s;
    return a + ds * (b + ds * (c + ds * d));
  }
  bool operator==(const CubicRecord&) const = default;
};

struct LaneSpec {
  int id = 0;
  std::string type = "driving";
  double width = 3.5;
  bool operator==(const LaneSpec&) const = default;
};

struct OdrDocument {
  std::string name = "odrgen";
  std::string georeference;
  Vec3 offset = Vec3::Zero();  // inertial coordinates of the local origin
  std::string road_id = "1";
  std::vector<Geometry> plan_view;
  std::vector<CubicRecord> elevation;
  std::vector<CubicRecord> superelevation;
  double lane_offset = 0.0;         // lateral position of lane 0 relative to the reference line, + left
  std::vector<LaneSpec> left_lanes;   // ids 1, 2, ... outward
  std::vector<LaneSpec> right_lanes;  // ids -1, -2, ... outward

  double length() const {
    double l = 0;
    for (const auto& g : plan_view) l += g.length;
    return l;
  }
  bool operator==(const OdrDocument&) const = default;

  /// Non-empty, finite, positive lengths, s contiguous and strictly increasing.
  void validate() const {
    if (plan_view.empty()) throw ExportError("OpenDRIVE document has no geometries");
    double expect = 0.0;
    for (std::size_t i = 0; i < plan_view.size(); ++i) {
      const auto& g = plan_view[i];
      if (!(std::isfinite(g.s) && std::isfinite(g.x) && std::isfinite(g.y) && std::isfinite(g.hdg) &&
            std::isfinite(g.length)))
        throw ExportError("geometry " + std::to_string(i) + " has non-finite values");
      if (!(g.length > 0)) throw ExportError("geometry " + std::to_string(i) + " has non-positive length");
      if (i > 0 && !(g.s > plan_view[i - 1].s)) throw ExportError("geometry s values are not strictly increasing");
      if (std::abs(g.s - expect) > 1e-6 * std::max(1.0, expect))
        throw ExportError("geometry " + std::to_string(i) + " s=" + std::to_string(g.s) + " does not match preceding length sum " +
                          std::to_string(expect));
      expect += g.length;
    }
    for (const auto* recs : {&elevation, &superelevation})
      for (std::size_t i = 1; i < recs->size(); ++i)
        if (!((*recs)[i].s > (*recs)[i - 1].s)) throw ExportError("profile records are not strictly increasing in s");
  }
};

struct ExportConfig {
  double segment_length = 100.0;
  double lookahead_fraction = 0.125;
  double endpoint_weight = 100.0;
  double sample_step = 1.0;
  double max_gap = 0.01;       // continuity check, meters
  double max_kink_deg = 0.5;   // continuity check, degrees
  bool fix_bv = false;         // pin the start heading exactly to hdg
  bool chain_anchor = true;    // start each geometry at the previous curve's end point and heading

  void validate() const {
    if (!(segment_length > 0)) throw ConfigError("export: segment_length must be > 0");
    if (!(lookahead_fraction > 0 && lookahead_fraction < 0.5))
      throw ConfigError("export: lookahead_fraction must lie in (0, 0.5)");
    if (!(endpoint_weight >= 1)) throw ConfigError("export: endpoint_weight must be >= 1");
    if (!(sample_step > 0)) throw ConfigError("export: sample_step must be > 0");
    if (!(max_gap > 0 && max_kink_deg > 0)) throw ConfigError("export: continuity limits must be > 0");
  }
};

struct Segment {
  std::vector<Vec3> lookback;   // preceding neighbor points, in chain order
  std::vector<Vec3> points;     // own points; boundary points shared with neighbors
  std::vector<Vec3> lookahead;  // following neighbor points, in chain order
};

namespace odr {

namespace detail {

inline constexpr std::array<double, 5> kGaussX = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                                  0.9061798459386640};
inline constexpr std::array<double, 5> kGaussW = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                  0.4786286704993665, 0.2369268850561891};

/// Integral of |r'(p)| over [p0, p1] with 5-point Gauss-Legendre.
inline double arc_length(const ParamPoly3& c, double p0, double p1) {
  const double h = 0.5 * (p1 - p0), m = 0.5 * (p1 + p0);
  double acc = 0;
  for (std::size_t i = 0; i < 5; ++i) acc += kGaussW[i] * c.derivative(m + h * kGaussX[i]).norm();
  return acc * h;
}

inline std::vector<double> cumulative_chord(const std::vector<Vec2>& pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

}  // namespace detail

/// Arclength of a paramPoly3 over p in [0, p_end] by composite Gauss-Legendre.
inline double poly_length(const ParamPoly3& c, double p_end = 1.0, int intervals = 64) {
  double acc = 0;
  for (int i = 0; i < intervals; ++i)
    acc += detail::arc_length(c, p_end * i / intervals, p_end * (i + 1) / intervals);
  return acc;
}

/// Evaluates one geometry at local arclength ds: inertial x, y and heading.
class GeometryEvaluator {
 public:
  static constexpr int kTableSize = 1000;

  explicit GeometryEvaluator(const Geometry& g) : g_(g) {
    if (g.kind != GeometryKind::ParamPoly3) return;
    p_end_ = g.poly.normalized ? 1.0 : g.length;
    table_.resize(kTableSize + 1, 0.0);
    for (int i = 0; i < kTableSize; ++i)
      table_[i + 1] = table_[i] + detail::arc_length(g.poly, p_at(i), p_at(i + 1));
  }

  const Geometry& geometry() const { return g_; }

  /// Curve parameter for local arclength ds; table lookup then Newton safeguarded by bisection.
  double param_at(double ds) const {
    const double target = std::clamp(ds, 0.0, g_.length) * (table_.back() / g_.length);
    auto it = std::upper_bound(table_.begin(), table_.end(), target);
    std::size_t i = it == table_.begin() ? 0 : static_cast<std::size_t>(it - table_.begin()) - 1;
    if (i >= static_cast<std::size_t>(kTableSize)) return p_end_;
    double lo = p_at(static_cast<int>(i)), hi = p_at(static_cast<int>(i) + 1);
    const double base = table_[i];
    const double seg = table_[i + 1] - base;
    double p = seg > 0 ? lo + (hi - lo) * (target - base) / seg : lo;
    for (int iter = 0; iter < 50; ++iter) {
      const double f = base + detail::arc_length(g_.poly, lo_ref(i), p) - target;
      if (std::abs(f) < 1e-12) break;
      if (f > 0) hi = p; else lo = p;
      const double d = g_.poly.derivative(p).norm();
      double next = d > 0 ? p - f / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - p) < 1e-15) break;
      p = next;
    }
    return p;
  }

  /// (x, y, heading) at local arclength ds.
  Vec3 at(double ds) const {
    const double c = std::cos(g_.hdg), s = std::sin(g_.hdg);
    Vec2 local;
    double h = 0;
    switch (g_.kind) {
      case GeometryKind::Line:
        local = {ds, 0.0};
        break;
      case GeometryKind::Arc: {
        const double k = g_.curvature;
        if (std::abs(k) < 1e-15) {
          local = {ds, 0.0};
        } else {
          local = {std::sin(k * ds) / k, (1.0 - std::cos(k * ds)) / k};
        }
        h = k * ds;
        break;
      }
      case GeometryKind::ParamPoly3: {
        if (ds <= 0) {
          local = g_.poly.eval(0);
          const Vec2 d = g_.poly.derivative(0);
          h = std::atan2(d.y(), d.x());
          break;
        }
        const double p = ds >= g_.length ? p_end_ : param_at(ds);
        local = g_.poly.eval(p);
        const Vec2 d = g_.poly.derivative(p);
        h = std::atan2(d.y(), d.x());
        break;
      }
    }
    return {g_.x + c * local.x() - s * local.y(), g_.y + s * local.x() + c * local.y(), wrap_angle(g_.hdg + h)};
  }

 private:
  double p_at(int i) const { return p_end_ * static_cast<double>(i) / kTableSize; }
  double lo_ref(std::size_t i) const { return p_at(static_cast<int>(i)); }

  Geometry g_;
  double p_end_ = 1.0;
  std::vector<double> table_;
};

/// Profile value (elevation, superelevation) at s from the governing record.
inline double profile_at(const std::vector<CubicRecord>& recs, double s) {
  if (recs.empty()) return 0.0;
  auto it = std::upper_bound(recs.begin(), recs.end(), s, [](double v, const CubicRecord& r) { return v < r.s; });
  if (it == recs.begin()) return recs.front().eval(s);
  return std::prev(it)->eval(s);
}

/// Reference-line evaluator over a whole planView.
class ReferenceLine {
 public:
  explicit ReferenceLine(const OdrDocument& doc) : elevation_(doc.elevation) {
    for (const auto& g : doc.plan_view) geoms_.emplace_back(g);
    length_ = doc.length();
  }

  double length() const { return length_; }
  std::size_t geometry_count() const { return geoms_.size(); }
  const GeometryEvaluator& geometry(std::size_t i) const { return geoms_[i]; }

  /// (x, y, heading) at road s.
  Vec3 pose(double s) const {
    if (geoms_.empty()) throw ExportError("reference line has no geometries");
    std::size_t i = locate(s);
    return geoms_[i].at(s - geoms_[i].geometry().s);
  }
  /// (x, y, z) at road s.
  Vec3 point(double s) const {
    const Vec3 p = pose(s);
    return {p.x(), p.y(), profile_at(elevation_, s)};
  }

 private:
  std::size_t locate(double s) const {
    std::size_t lo = 0;
    for (std::size_t i = 1; i < geoms_.size(); ++i)
      if (geoms_[i].geometry().s <= s) lo = i;
    return lo;
  }

  std::vector<GeometryEvaluator> geoms_;
  std::vector<CubicRecord> elevation_;
  double length_ = 0;
};

/// Sample positions 0, step, 2 step, ..., L (L always included).
inline std::vector<double> sample_positions(double length, double step, int subdivisions = 1) {
  if (!(step > 0)) throw ConfigError("sampling step must be > 0");
  std::vector<double> s;
  const double sub = step / subdivisions;
  for (std::size_t k = 0;; ++k) {
    const double base = static_cast<double>(k) * step;
    if (base > length + 1e-9) break;
    for (int m = 0; m < subdivisions; ++m) {
      const double v = m == 0 ? base : base + m * sub;
      if (v > length + 1e-9) break;
      s.push_back(std::min(v, length));
    }
  }
  if (s.empty() || length - s.back() > 1e-9) s.push_back(length);
  return s;
}

inline std::vector<Vec3> sample_reference_line(const OdrDocument& doc, double step, int subdivisions = 1) {
  const ReferenceLine ref(doc);
  std::vector<Vec3> out;
  for (double s : sample_positions(ref.length(), step, subdivisions)) out.push_back(ref.point(s));
  return out;
}

/// Splits a chain-sorted polyline into consecutive pieces of about
/// segment_length cumulative chord, sharing boundary points. A remainder shorter
/// than half a segment joins its predecessor. Each piece carries neighbor
/// points within lookahead_fraction of its own chord length on either side.
inline std::vector<Segment> split_by_dist(const std::vector<Vec3>& polyline, const ExportConfig& cfg) {
  std::vector<Vec2> xy;
  for (const auto& p : polyline) xy.push_back(p.head<2>());
  const auto cum = detail::cumulative_chord(xy);
  const double total = cum.empty() ? 0.0 : cum.back();
  if (polyline.size() < 2 || total < 1.0)
    throw EstimationError("reference polyline too short to export (" + std::to_string(total) + " m)");

  auto count = static_cast<std::size_t>(std::floor(total / cfg.segment_length + 1e-9));
  const double rem = total - static_cast<double>(count) * cfg.segment_length;
  if (count == 0 || rem >= 0.5 * cfg.segment_length - 1e-9) ++count;

  std::vector<std::size_t> bounds{0};
  for (std::size_t k = 1; k < count; ++k) {
    const double target = static_cast<double>(k) * cfg.segment_length;
    auto it = std::lower_bound(cum.begin(), cum.end(), target - 1e-9);
    std::size_t idx = static_cast<std::size_t>(it - cum.begin());
    if (idx <= bounds.back()) idx = bounds.back() + 1;
    if (idx >= polyline.size() - 1) break;
    bounds.push_back(idx);
  }
  bounds.push_back(polyline.size() - 1);

  std::vector<Segment> segs;
  for (std::size_t j = 0; j + 1 < bounds.size(); ++j) {
    const std::size_t b0 = bounds[j], b1 = bounds[j + 1];
    Segment seg;
    seg.points.assign(polyline.begin() + static_cast<std::ptrdiff_t>(b0),
                      polyline.begin() + static_cast<std::ptrdiff_t>(b1) + 1);
    const double ext = cfg.lookahead_fraction * (cum[b1] - cum[b0]);
    for (std::size_t i = b0; i-- > 0;) {
      if (cum[b0] - cum[i] > ext) break;
      seg.lookback.insert(seg.lookback.begin(), polyline[i]);
    }
    for (std::size_t i = b1 + 1; i < polyline.size(); ++i) {
      if (cum[i] - cum[b1] > ext) break;
      seg.lookahead.push_back(polyline[i]);
    }
    segs.push_back(std::move(seg));
  }
  return segs;
}

/// Heading of the principal direction of the segment's own points, oriented
/// along the chain.
inline double eval_rot(const Segment& seg) {
  if (seg.points.size() < 2) throw EstimationError("eval_rot needs >= 2 points");
  std::vector<Vec2> xy;
  for (const auto& p : seg.points) xy.push_back(p.head<2>());
  Vec2 dir = principal_axis<2>(xy).first;
  const Vec2 chain = xy.back() - xy.front();
  if (dir.dot(chain) < 0) dir = -dir;
  return wrap_angle(std::atan2(dir.y(), dir.x()));
}

/// Weighted least squares polynomial of degree <= `degree` (at most 3); the
/// constant term is pinned to zero if requested. Degree is reduced when the data
/// cannot determine all coefficients. Returns {a, b, c, d}.
inline std::array<double, 4> weighted_cubic_fit(std::span<const double> p, std::span<const double> y,
                                                std::span<const double> w, int degree = 3,
                                                bool zero_intercept = false, bool zero_slope = false) {
  const std::size_t n = p.size();
  std::vector<double> distinct(p.begin(), p.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> powers;
  for (int k = zero_intercept ? 1 : 0; k <= std::min(degree, 3); ++k)
    if (!(zero_slope && k == 1)) powers.push_back(k);
  std::size_t usable = distinct.size();
  if (zero_intercept) usable -= static_cast<std::size_t>(std::count(distinct.begin(), distinct.end(), 0.0));
  while (powers.size() > usable) powers.pop_back();
  std::array<double, 4> out{0, 0, 0, 0};
  if (powers.empty()) return out;

  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(powers.size()));
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double sw = std::sqrt(w[i]);
    for (std::size_t k = 0; k < powers.size(); ++k)
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = sw * std::pow(p[i], powers[k]);
    b(static_cast<Eigen::Index>(i)) = sw * y[i];
  }
  const Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  for (std::size_t k = 0; k < powers.size(); ++k) out[static_cast<std::size_t>(powers[k])] = x(static_cast<Eigen::Index>(k));
  return out;
}

struct PolyFit {
  ParamPoly3 curve;
  double length = 0;
  Vec2 origin = Vec2::Zero();
  std::vector<double> own_params;  // p of the segment's own points
};

/// End state of the preceding curve.
struct Anchor {
  Vec2 point = Vec2::Zero();
  double heading = 0;
};

namespace detail {

/// u and v fitted jointly with the start tangent fixed to direction (1, tau):
/// bV = tau * bU.
inline std::pair<std::array<double, 4>, std::array<double, 4>> tangent_constrained_fit(
    const std::vector<double>& p, const std::vector<double>& u, const std::vector<double>& v,
    const std::vector<double>& w, double tau) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 5);
  Eigen::VectorXd b(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = std::sqrt(w[static_cast<std::size_t>(i)]), t = p[static_cast<std::size_t>(i)];
    A(i, 0) = sw * t;
    A(i, 1) = sw * t * t;
    A(i, 2) = sw * t * t * t;
    b(i) = sw * u[static_cast<std::size_t>(i)];
    A(n + i, 0) = sw * tau * t;
    A(n + i, 3) = sw * t * t;
    A(n + i, 4) = sw * t * t * t;
    b(n + i) = sw * v[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  return {{0, x(0), x(1), x(2)}, {0, tau * x(0), x(3), x(4)}};
}

}  // namespace detail

/// Rotates all points by -hdg about the start, parameterizes by cumulative chord
/// normalized to the own span (extensions fall outside [0,1]) and fits u(p), v(p)
/// with the own endpoints weighted by endpoint_weight. With an anchor the curve
/// starts at the anchor point with the anchor heading.
inline PolyFit fit_param_poly3(const Segment& seg, double hdg, const ExportConfig& cfg,
                               const Anchor* anchor = nullptr) {
  if (seg.points.size() < 2) throw EstimationError("fit_param_poly3 needs >= 2 points");
  std::vector<Vec2> all;
  for (const auto& v : seg.lookback) all.push_back(v.head<2>());
  for (const auto& v : seg.points) all.push_back(v.head<2>());
  for (const auto& v : seg.lookahead) all.push_back(v.head<2>());
  const std::size_t first = seg.lookback.size(), last = first + seg.points.size() - 1;
  const Vec2 origin = anchor ? anchor->point : seg.points.front().head<2>();
  if (anchor) all[first] = origin;

  const auto cum = detail::cumulative_chord(all);
  const double span = cum[last] - cum[first];
  if (!(span > 0)) throw EstimationError("segment has zero chord length");

  const double c = std::cos(-hdg), s = std::sin(-hdg);
  const std::size_t n = all.size();
  std::vector<double> p(n), u(n), v(n), w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 d = all[i] - origin;
    u[i] = c * d.x() - s * d.y();
    v[i] = s * d.x() + c * d.y();
    p[i] = (cum[i] - cum[first]) / span;
  }
  w[first] = cfg.endpoint_weight;
  w[last] = cfg.endpoint_weight;

  std::vector<double> distinct(p);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::array<double, 4> fu, fv;
  if (anchor && distinct.size() >= 4) {
    std::tie(fu, fv) = detail::tangent_constrained_fit(p, u, v, w, std::tan(wrap_angle(anchor->heading - hdg)));
  } else {
    fu = weighted_cubic_fit(p, u, w, 3, true);
    fv = weighted_cubic_fit(p, v, w, 3, true, cfg.fix_bv);
  }
  PolyFit out;
  out.curve = {0.0, fu[1], fu[2], fu[3], 0.0, fv[1], fv[2], fv[3], true};
  out.length = poly_length(out.curve);
  out.origin = origin;
  out.own_params.assign(p.begin() + static_cast<std::ptrdiff_t>(first), p.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return out;
}

/// Unweighted cubic of value over ds, constant for a single sample.
inline CubicRecord fit_profile(double s0, const std::vector<double>& ds, const std::vector<double>& values) {
  CubicRecord r;
  r.s = s0;
  if (ds.empty()) return r;
  const std::vector<double> w(ds.size(), 1.0);
  const auto f = weighted_cubic_fit(ds, values, w, 3, false);
  r.a = f[0];
  r.b = f[1];
  r.c = f[2];
  r.d = f[3];
  return r;
}

/// Elevation over a segment's own points; ds is the fitted parameter times the
/// geometry length.
inline CubicRecord fit_elevation(const Segment& seg, const PolyFit& fit, double s0) {
  std::vector<double> ds, z;
  for (std::size_t i = 0; i < seg.points.size(); ++i) {
    ds.push_back(std::clamp(fit.own_params[i], 0.0, 1.0) * fit.length);
    z.push_back(seg.points[i].z());
  }
  return fit_profile(s0, ds, z);
}

/// Roll (+ = right side lower) of a surface normal relative to a road heading.
inline double roll_angle(const Vec3& normal, double heading) {
  const Vec3 left(-std::sin(heading), std::cos(heading), 0.0);
  return std::atan2(-normal.dot(left), normal.z());
}

namespace detail {

/// Projects points onto a sampled reference line: (s, heading) of the nearest sample.
inline std::vector<std::pair<double, double>> project_onto(const ReferenceLine& ref, const std::vector<Vec3>& pts,
                                                           double step = 0.5) {
  const auto pos = sample_positions(ref.length(), step);
  std::vector<Vec2> xy;
  std::vector<double> hdg;
  for (double s : pos) {
    const Vec3 p = ref.pose(s);
    xy.emplace_back(p.x(), p.y());
    hdg.push_back(p.z());
  }
  const UniformGrid<2> grid(xy, 5.0);
  std::vector<std::pair<double, double>> out;
  for (const auto& q : pts) {
    const auto best = grid.nearest(q.head<2>());
    out.emplace_back(pos[*best], hdg[*best]);
  }
  return out;
}

}  // namespace detail

/// One cubic roll record per geometry, fitted over the plane samples that
/// project into it. Empty when there are no plane samples.
inline std::vector<CubicRecord> fit_superelevation(const OdrDocument& doc, const std::vector<PlaneSample>& planes) {
  std::vector<CubicRecord> out;
  if (planes.empty() || doc.plan_view.empty()) return out;
  const ReferenceLine ref(doc);
  std::vector<Vec3> pos;
  for (const auto& p : planes) pos.push_back(p.position);
  const auto proj = detail::project_onto(ref, pos);
  std::vector<double> all_rolls;
  std::vector<std::vector<double>> ds(doc.plan_view.size()), rolls(doc.plan_view.size());
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const auto [s, h] = proj[i];
    std::size_t g = 0;
    for (std::size_t k = 1; k < doc.plan_view.size(); ++k)
      if (doc.plan_view[k].s <= s) g = k;
    const double r = roll_angle(planes[i].normal, h);
    ds[g].push_back(s - doc.plan_view[g].s);
    rolls[g].push_back(r);
    all_rolls.push_back(r);
  }
  const double fallback = median(all_rolls);
  for (std::size_t g = 0; g < doc.plan_view.size(); ++g) {
    if (ds[g].empty()) {
      out.push_back({doc.plan_view[g].s, fallback, 0, 0, 0});
      continue;
    }
    // Few samples cannot support a cubic over a long geometry.
    const std::vector<double> w(ds[g].size(), 1.0);
    const int degree = ds[g].size() >= 8 ? 3 : (ds[g].size() >= 3 ? 1 : 0);
    const auto f = weighted_cubic_fit(ds[g], rolls[g], w, degree);
    out.push_back({doc.plan_view[g].s, f[0], f[1], f[2], f[3]});
  }
  return out;
}

/// Lane layout for `widths` (left to right) with the reference line `reference_from_left`
/// meters from the leftmost line. Lane 0 sits on line floor(n/2).
inline void assign_lanes(OdrDocument& doc, const std::vector<double>& widths, double reference_from_left) {
  const std::size_t n = widths.size();
  const std::size_t k0 = n / 2;
  double pk0 = 0;
  for (std::size_t k = 0; k < k0; ++k) pk0 += widths[k];
  doc.lane_offset = reference_from_left - pk0;
  doc.left_lanes.clear();
  doc.right_lanes.clear();
  for (std::size_t k = 0; k < k0; ++k) doc.left_lanes.push_back({static_cast<int>(k + 1), "driving", widths[k0 - 1 - k]});
  for (std::size_t k = k0; k < n; ++k) doc.right_lanes.push_back({-static_cast<int>(k - k0 + 1), "driving", widths[k]});
}

inline std::string georeference_placeholder() {
  return "+proj=tmerc +lat_0=0 +lon_0=0 +k=1 +x_0=0 +y_0=0 +ellps=WGS84 +units=m +no_defs";
}

struct ExportDiagnostics {
  std::size_t segments = 0;
  double max_anchor_shift = 0;  // distance between a segment's first point and the previous curve end
};

/// Full export: segmentation, per-segment heading and paramPoly3 fit,
/// elevation, superelevation, lanes.
inline OdrDocument export_road(const RoadModel& model, const ExportConfig& cfg, ExportDiagnostics* diag = nullptr) {
  cfg.validate();
  model.validate();
  const auto segs = split_by_dist(model.reference_polyline, cfg);
  OdrDocument doc;
  doc.georeference = georeference_placeholder();
  doc.offset = model.origin;
  double s = 0;
  std::optional<Anchor> prev_end;
  ExportDiagnostics d;
  d.segments = segs.size();
  for (const auto& seg : segs) {
    const double hdg = eval_rot(seg);
    const Anchor* anchor = cfg.chain_anchor && prev_end ? &*prev_end : nullptr;
    if (anchor) d.max_anchor_shift = std::max(d.max_anchor_shift, (seg.points.front().head<2>() - anchor->point).norm());
    const PolyFit fit = fit_param_poly3(seg, hdg, cfg, anchor);
    if (!(fit.length > 0)) throw ExportError("fitted geometry has zero length");
    Geometry g;
    g.s = s;
    g.x = fit.origin.x();
    g.y = fit.origin.y();
    g.hdg = hdg;
    g.length = fit.length;
    g.kind = GeometryKind::ParamPoly3;
    g.poly = fit.curve;
    doc.plan_view.push_back(g);
    doc.elevation.push_back(fit_elevation(seg, fit, s));
    const Vec3 end = GeometryEvaluator(g).at(g.length);
    prev_end = Anchor{end.head<2>(), end.z()};
    s += fit.length;
  }
  doc.superelevation = fit_superelevation(doc, model.plane_samples);
  double reference_from_left = 0;
  if (model.line_count >= 2) {
    for (double w : model.lane_widths) reference_from_left += w;
    reference_from_left *= 0.5;
  }
  assign_lanes(doc, model.lane_widths, reference_from_left);
  if (model.line_count < 2) doc.lane_offset = 0;
  doc.validate();
  if (diag) *diag = d;
  return doc;
}

}  // namespace odr
}  // namespace odrgen
