#pragma once

#include "odrgen/extraction.hpp"
#include "odrgen/lane_builder.hpp"

#include <map>
#include <set>

namespace odrgen {

enum class Side { Left, Right };

inline const char* to_string(Side s) { return s == Side::Left ? "left" : "right"; }

struct TopologyConfig {
  double nominal_lane_width = 3.5;
  double max_ray_factor = 2.0;         // rays reach max_ray_factor * nominal_lane_width
  double max_segment_length = 27.0;    // longer chords (occlusion bridges) are not used
  double default_lane_width = 3.5;     // single-line roads
  double min_lane_width = 2.5;
  double max_lane_width = 4.5;
  double contradiction_ratio = 0.25;
  int contradiction_min_support = 3;
  /// Literal "dist % 3.0 m" relation encoding instead of quantized lane steps.
  bool literal_modulo = false;

  void validate() const {
    if (!(nominal_lane_width > 0 && max_ray_factor > 0 && max_segment_length > 0 && default_lane_width > 0))
      throw ConfigError("topology: widths/lengths must be > 0");
    if (!(min_lane_width < max_lane_width)) throw ConfigError("topology: min_lane_width must be < max_lane_width");
    if (!(contradiction_ratio > 0 && contradiction_ratio <= 0.5))
      throw ConfigError("topology: contradiction_ratio must lie in (0, 0.5]");
    if (contradiction_min_support < 1) throw ConfigError("topology: contradiction_min_support must be >= 1");
  }
};

struct SegmentNormal {
  std::size_t segment = 0;  // index of the starting center
  Vec2 start, end, midpoint;
  Vec2 left, right;
  double length = 0.0;
};

struct RelativeEntry {
  std::uint64_t line_id = 0;
  Side side = Side::Left;
  double distance = 0.0;  // median perpendicular distance over supporting hits
  int lateral_step = 1;   // whole lanes between the two lines
  double residual = 0.0;  // distance - lateral_step * nominal width
  std::size_t support = 0;
  std::size_t opposing = 0;        // hits on the other side
  std::vector<double> distances;   // supporting hit distances (raw)
};

struct RelativeLookup {
  std::uint64_t source_id = 0;
  std::vector<RelativeEntry> entries;
};

/// Candidate lines resolved to the same lateral lane offset.
struct Superline {
  std::uint64_t id = 0;
  std::vector<std::uint64_t> member_line_ids;
  int lane_offset = 0;  // 0 = leftmost resolved line, increasing to the right
  std::vector<Vec3> merged_centers;
  std::vector<Vec3> merged_directions;
};

/// Undirected relation used by the global lookup: offset(b) - offset(a) = delta.
struct RelationEdge {
  std::uint64_t a = 0, b = 0;
  int delta = 0;
  std::size_t support = 0;
  std::size_t opposing = 0;
  double distance = 0.0;
  bool used = false;
};

struct GlobalLookupResult {
  std::vector<Superline> superlines;
  std::vector<RelationEdge> edges;
  std::vector<std::uint64_t> dropped_line_ids;
};

struct RoadModel {
  std::vector<Vec3> reference_polyline;
  int lane_count = 1;
  int line_count = 1;               // resolved marking lines
  std::vector<double> lane_widths;  // left to right
  double width_sigma = 0.0;
  std::vector<double> width_samples;
  Vec3 origin = Vec3::Zero();
  std::vector<PlaneSample> plane_samples;

  void validate(double min_width = 2.5, double max_width = 4.5) const {
    if (lane_count < 1) throw ExportError("road model: lane_count must be >= 1");
    if (static_cast<int>(lane_widths.size()) != lane_count)
      throw ExportError("road model: lane_widths size does not match lane_count");
    for (double w : lane_widths)
      if (!(w >= min_width && w <= max_width))
        throw ExportError("road model: lane width " + std::to_string(w) + " outside plausibility band");
    if (reference_polyline.size() < 2) throw ExportError("road model: reference polyline needs >= 2 points");
    for (const auto& p : reference_polyline)
      if (!p.allFinite()) throw ExportError("road model: non-finite reference point");
  }
};

namespace topology {

/// Left normal (-dy, dx) and right normal (dy, -dx) per non-degenerate segment, in XY.
inline std::vector<SegmentNormal> calc_norm_vec(const CandidateLine& line) {
  std::vector<SegmentNormal> out;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Vec2 a = line.centers[i].head<2>(), b = line.centers[i + 1].head<2>();
    const Vec2 d = b - a;
    const double len = d.norm();
    if (!(len > 1e-9)) continue;
    SegmentNormal s;
    s.segment = i;
    s.start = a;
    s.end = b;
    s.midpoint = 0.5 * (a + b);
    s.left = Vec2(-d.y(), d.x()) / len;
    s.right = Vec2(d.y(), -d.x()) / len;
    s.length = len;
    out.push_back(s);
  }
  return out;
}

namespace detail {

/// Ray origin + t*dir against segment [a, b]; returns t > 0 on hit.
inline std::optional<double> ray_segment(const Vec2& origin, const Vec2& dir, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double denom = dir.x() * e.y() - dir.y() * e.x();
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const Vec2 w = a - origin;
  const double t = (w.x() * e.y() - w.y() * e.x()) / denom;
  const double u = (w.x() * dir.y() - w.y() * dir.x()) / denom;
  if (t <= 1e-9 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

struct SegRef {
  std::size_t line;
  Vec2 a, b;
};

}  // namespace detail

/// For every segment midpoint, casts the left and right normals and records the
/// first other line each ray meets (within max_ray_factor lane widths). Hits are
/// aggregated per line pair by majority vote; distances by median.
inline std::vector<RelativeLookup> relative_lookup(const std::vector<CandidateLine>& lines, const TopologyConfig& cfg,
                                                   unsigned threads = 1) {
  const double max_ray = cfg.max_ray_factor * cfg.nominal_lane_width;
  std::vector<std::vector<SegmentNormal>> normals(lines.size());
  std::vector<detail::SegRef> segs;
  std::vector<Vec2> mids;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    normals[l] = calc_norm_vec(lines[l]);
    for (const auto& s : normals[l]) {
      if (s.length > cfg.max_segment_length) continue;
      segs.push_back({l, s.start, s.end});
      mids.push_back(s.midpoint);
    }
  }
  const double cell = std::max(10.0, cfg.max_segment_length);
  const Grid2 grid(mids, cell);
  const double reach = max_ray + 0.5 * cfg.max_segment_length;

  std::vector<RelativeLookup> out(lines.size());
  parallel_for(lines.size(), threads, [&](std::size_t l) {
    // (target line, signed step) -> distances
    std::map<std::size_t, std::map<int, std::vector<double>>> votes;
    for (const auto& s : normals[l]) {
      if (s.length > cfg.max_segment_length) continue;
      for (const Side side : {Side::Left, Side::Right}) {
        const Vec2 dir = side == Side::Left ? s.left : s.right;
        double best_t = max_ray;
        std::optional<std::size_t> best_line;
        grid.for_each_in_box(s.midpoint - Vec2::Constant(reach), s.midpoint + Vec2::Constant(reach),
                             [&](std::size_t k) {
                               const auto& g = segs[k];
                               if (g.line == l) return;
                               auto t = detail::ray_segment(s.midpoint, dir, g.a, g.b);
                               if (t && (*t < best_t || (*t == best_t && best_line && g.line < *best_line))) {
                                 best_t = *t;
                                 best_line = g.line;
                               }
                             });
        if (!best_line) continue;
        double dist = best_t;
        int step = 1;
        if (cfg.literal_modulo) {
          dist = std::fmod(best_t, 3.0);
        } else {
          step = std::max(1, static_cast<int>(std::lround(best_t / cfg.nominal_lane_width)));
        }
        votes[*best_line][side == Side::Right ? step : -step].push_back(dist);
      }
    }
    RelativeLookup lk;
    lk.source_id = lines[l].id;
    for (auto& [target, by_step] : votes) {
      std::size_t pos = 0, neg = 0;
      int mode = 0;
      std::size_t mode_count = 0;
      for (auto& [st, d] : by_step) {
        (st > 0 ? pos : neg) += d.size();
        if (d.size() > mode_count) {
          mode_count = d.size();
          mode = st;
        }
      }
      RelativeEntry e;
      e.line_id = lines[target].id;
      e.side = mode > 0 ? Side::Right : Side::Left;
      e.lateral_step = std::abs(mode);
      e.distances = by_step[mode];
      e.distance = median(e.distances);
      e.residual = e.distance - e.lateral_step * cfg.nominal_lane_width;
      e.support = mode_count;
      e.opposing = mode > 0 ? neg : pos;
      lk.entries.push_back(std::move(e));
    }
    out[l] = std::move(lk);
  });
  return out;
}

namespace detail {

class OffsetUnionFind {
 public:
  std::size_t add(std::uint64_t id) {
    auto [it, inserted] = index_.try_emplace(id, parent_.size());
    if (inserted) {
      parent_.push_back(parent_.size());
      offset_.push_back(0);
      ids_.push_back(id);
    }
    return it->second;
  }
  /// Root and offset(x) - offset(root).
  std::pair<std::size_t, int> find(std::size_t x) {
    if (parent_[x] == x) return {x, 0};
    auto [r, o] = find(parent_[x]);
    parent_[x] = r;
    offset_[x] += o;
    return {r, offset_[x]};
  }
  /// Records offset(b) - offset(a) = delta; false if it contradicts.
  bool relate(std::size_t a, std::size_t b, int delta) {
    auto [ra, oa] = find(a);
    auto [rb, ob] = find(b);
    if (ra == rb) return ob - oa == delta;
    parent_[rb] = ra;
    offset_[rb] = oa + delta - ob;
    return true;
  }
  std::size_t size() const { return parent_.size(); }
  std::uint64_t id(std::size_t i) const { return ids_[i]; }

 private:
  std::map<std::uint64_t, std::size_t> index_;
  std::vector<std::size_t> parent_;
  std::vector<int> offset_;
  std::vector<std::uint64_t> ids_;
};

}  // namespace detail

/// Resolves pairwise relations into superlines: weighted union-find over lateral
/// offsets, strongest relations first. Lines at the same offset in a component
/// are partial scans of one marking line.
inline GlobalLookupResult global_lookup(const std::vector<RelativeLookup>& lookups,
                                        const std::vector<CandidateLine>& lines, const TopologyConfig& cfg) {
  std::map<std::uint64_t, const CandidateLine*> by_id;
  for (const auto& l : lines) by_id[l.id] = &l;

  struct PairVotes {
    std::map<int, std::size_t> delta_votes;
    std::size_t pos = 0, neg = 0;
    std::vector<double> dists;
  };
  std::map<std::pair<std::uint64_t, std::uint64_t>, PairVotes> pairs;
  for (const auto& lk : lookups) {
    for (const auto& e : lk.entries) {
      const bool forward = lk.source_id < e.line_id;
      const auto key = forward ? std::make_pair(lk.source_id, e.line_id) : std::make_pair(e.line_id, lk.source_id);
      int delta = e.side == Side::Right ? e.lateral_step : -e.lateral_step;
      if (!forward) delta = -delta;
      auto& pv = pairs[key];
      pv.delta_votes[delta] += e.support;
      (delta > 0 ? pv.pos : pv.neg) += e.support;
      (delta > 0 ? pv.neg : pv.pos) += e.opposing;
      pv.dists.insert(pv.dists.end(), e.distances.begin(), e.distances.end());
    }
  }

  GlobalLookupResult res;
  for (auto& [key, pv] : pairs) {
    const std::size_t total = pv.pos + pv.neg;
    const std::size_t minority = std::min(pv.pos, pv.neg);
    if (minority >= static_cast<std::size_t>(cfg.contradiction_min_support) &&
        static_cast<double>(minority) >= cfg.contradiction_ratio * static_cast<double>(total))
      throw TopologyError("contradictory relation between lines " + std::to_string(key.first) + " and " +
                              std::to_string(key.second) + " (" + std::to_string(pv.pos) + " right vs " +
                              std::to_string(pv.neg) + " left)",
                          {key.first, key.second});
    const bool positive = pv.pos >= pv.neg;
    RelationEdge edge{key.first, key.second, 0, 0, minority, median(pv.dists), false};
    for (auto& [d, c] : pv.delta_votes)
      if ((d > 0) == positive && c > edge.support) {
        edge.delta = d;
        edge.support = c;
      }
    res.edges.push_back(edge);
  }
  std::stable_sort(res.edges.begin(), res.edges.end(),
                   [](const RelationEdge& x, const RelationEdge& y) { return x.support > y.support; });

  detail::OffsetUnionFind uf;
  for (auto& e : res.edges) {
    const auto a = uf.add(e.a), b = uf.add(e.b);
    if (uf.relate(a, b, e.delta)) {
      e.used = true;
    } else if (e.support >= static_cast<std::size_t>(cfg.contradiction_min_support)) {
      throw TopologyError("inconsistent lateral relations around lines " + std::to_string(e.a) + " and " +
                              std::to_string(e.b),
                          {e.a, e.b});
    }
  }

  auto centers_of = [&](std::uint64_t id) { return by_id.count(id) ? by_id[id]->size() : std::size_t{0}; };

  struct Component {
    std::map<int, std::vector<std::uint64_t>> by_offset;
    std::size_t weight = 0;
    int span() const { return by_offset.rbegin()->first - by_offset.begin()->first; }
  };
  std::map<std::size_t, Component> comps;
  for (std::size_t i = 0; i < uf.size(); ++i) {
    auto [r, o] = uf.find(i);
    comps[r].by_offset[o].push_back(uf.id(i));
    comps[r].weight += centers_of(uf.id(i));
  }

  // offset -> member ids after aligning accepted components on their leftmost line
  std::map<int, std::vector<std::uint64_t>> merged;
  std::set<std::uint64_t> kept;
  if (!comps.empty()) {
    const Component* main = nullptr;
    for (const auto& [r, c] : comps)
      if (!main || c.weight > main->weight) main = &c;
    for (const auto& [r, c] : comps) {
      if (&c != main && c.span() != main->span()) {
        for (const auto& [o, ids] : c.by_offset) res.dropped_line_ids.insert(res.dropped_line_ids.end(), ids.begin(), ids.end());
        continue;
      }
      const int base = c.by_offset.begin()->first;
      for (const auto& [o, ids] : c.by_offset) {
        auto& dst = merged[o - base];
        dst.insert(dst.end(), ids.begin(), ids.end());
        kept.insert(ids.begin(), ids.end());
      }
    }
  } else if (!lines.empty()) {
    const CandidateLine* best = &lines.front();
    for (const auto& l : lines)
      if (l.size() > best->size() || (l.size() == best->size() && l.id < best->id)) best = &l;
    merged[0].push_back(best->id);
    kept.insert(best->id);
  }
  for (const auto& l : lines)
    if (!kept.count(l.id) &&
        std::find(res.dropped_line_ids.begin(), res.dropped_line_ids.end(), l.id) == res.dropped_line_ids.end())
      res.dropped_line_ids.push_back(l.id);
  std::sort(res.dropped_line_ids.begin(), res.dropped_line_ids.end());

  std::uint64_t next_id = 1;
  for (auto& [offset, ids] : merged) {
    std::sort(ids.begin(), ids.end());
    Superline sl;
    sl.id = next_id++;
    sl.lane_offset = offset;
    sl.member_line_ids = ids;
    for (auto id : ids) {
      const auto* l = by_id.at(id);
      sl.merged_centers.insert(sl.merged_centers.end(), l->centers.begin(), l->centers.end());
      sl.merged_directions.insert(sl.merged_directions.end(), l->directions.begin(), l->directions.end());
    }
    const auto order = chain_order(sl.merged_centers);
    std::vector<Vec3> c, d;
    for (auto i : order) {
      c.push_back(sl.merged_centers[i]);
      d.push_back(sl.merged_directions[i]);
    }
    sl.merged_centers = std::move(c);
    sl.merged_directions = std::move(d);
    res.superlines.push_back(std::move(sl));
  }
  return res;
}

/// Lane count/widths from adjacent superlines and a centerline built by moving
/// every marking center across the road to its middle (Z kept).
inline RoadModel build_road_model(const std::vector<Superline>& superlines, const std::vector<RelativeLookup>& lookups,
                                  const TopologyConfig& cfg) {
  if (superlines.empty()) throw TopologyError("no superlines to build a road model from");
  std::vector<const Superline*> sorted;
  for (const auto& s : superlines) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->lane_offset < b->lane_offset; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k]->lane_offset != sorted.front()->lane_offset + static_cast<int>(k)) {
      std::string msg = "non-contiguous lane offsets: missing offset(s)";
      for (int o = sorted[k - 1]->lane_offset + 1; o < sorted[k]->lane_offset; ++o) msg += " " + std::to_string(o);
      std::vector<std::uint64_t> ids = sorted[k - 1]->member_line_ids;
      ids.insert(ids.end(), sorted[k]->member_line_ids.begin(), sorted[k]->member_line_ids.end());
      throw TopologyError(msg, ids);
    }
  }

  RoadModel model;
  const std::size_t nlines = sorted.size();
  model.line_count = static_cast<int>(nlines);
  std::map<std::uint64_t, std::size_t> rank;  // line id -> superline rank
  for (std::size_t k = 0; k < nlines; ++k)
    for (auto id : sorted[k]->member_line_ids) rank[id] = k;

  if (nlines == 1) {
    model.lane_count = 1;
    model.lane_widths = {cfg.default_lane_width};
  } else {
    std::vector<std::vector<double>> samples(nlines - 1);
    for (const auto& lk : lookups) {
      if (!rank.count(lk.source_id)) continue;
      for (const auto& e : lk.entries) {
        if (!rank.count(e.line_id) || e.lateral_step != 1) continue;
        const auto a = rank[lk.source_id], b = rank[e.line_id];
        if (std::max(a, b) - std::min(a, b) != 1) continue;
        auto& dst = samples[std::min(a, b)];
        dst.insert(dst.end(), e.distances.begin(), e.distances.end());
      }
    }
    model.lane_count = static_cast<int>(nlines - 1);
    for (auto& s : samples) {
      const double w = s.empty() ? cfg.nominal_lane_width : median(s);
      if (!(w >= cfg.min_lane_width && w <= cfg.max_lane_width))
        throw TopologyError("implausible lane width " + std::to_string(w) + " m");
      model.lane_widths.push_back(w);
      model.width_samples.insert(model.width_samples.end(), s.begin(), s.end());
    }
  }
  if (!model.width_samples.empty()) {
    double mean = 0;
    for (double w : model.width_samples) mean += w;
    mean /= static_cast<double>(model.width_samples.size());
    double var = 0;
    for (double w : model.width_samples) var += (w - mean) * (w - mean);
    model.width_sigma = std::sqrt(var / static_cast<double>(model.width_samples.size()));
  }

  // Lateral position of each line from the leftmost, positive to the right.
  std::vector<double> position(nlines, 0.0);
  for (std::size_t k = 1; k < nlines; ++k) position[k] = position[k - 1] + model.lane_widths[k - 1];
  const double center = nlines > 1 ? 0.5 * position.back() : 0.0;

  std::vector<Vec3> pts;
  for (std::size_t k = 0; k < nlines; ++k) {
    const auto& sl = *sorted[k];
    const double shift = center - position[k];
    for (std::size_t i = 0; i < sl.merged_centers.size(); ++i) {
      Vec2 d = sl.merged_directions[i].head<2>();
      if (!(d.norm() > 1e-9)) d = Vec2::UnitX();
      d.normalize();
      const Vec2 right(d.y(), -d.x());
      const Vec3& c = sl.merged_centers[i];
      const Vec2 xy = c.head<2>() + right * shift;
      pts.emplace_back(xy.x(), xy.y(), c.z());
    }
  }
  for (auto i : chain_order(pts)) model.reference_polyline.push_back(pts[i]);
  return model;
}

}  // namespace topology
}  // namespace odrgen
