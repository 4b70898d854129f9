#pragma once

#include "odrgen/odr.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <fstream>
#include <sstream>

namespace odrgen::odr {

namespace detail {

class XmlWriter {
 public:
  using Attrs = std::vector<std::pair<const char*, std::string>>;

  void open(const char* tag, const Attrs& attrs = {}) {
    line_start();
    out_ << '<' << tag;
    write_attrs(attrs);
    out_ << ">\n";
    stack_.push_back(tag);
  }
  void leaf(const char* tag, const Attrs& attrs = {}) {
    line_start();
    out_ << '<' << tag;
    write_attrs(attrs);
    out_ << "/>\n";
  }
  void text(const char* tag, const std::string& body, bool cdata) {
    line_start();
    out_ << '<' << tag << '>';
    if (cdata) out_ << "<![CDATA[" << body << "]]>"; else out_ << escape(body);
    out_ << "</" << tag << ">\n";
  }
  void comment(const std::string& body) {
    line_start();
    out_ << "<!-- " << body << " -->\n";
  }
  void close() {
    const std::string tag = stack_.back();
    stack_.pop_back();
    line_start();
    out_ << "</" << tag << ">\n";
  }
  std::string str() const { return out_.str(); }
  std::ostringstream& raw() { return out_; }

  static std::string escape(const std::string& s) {
    std::string r;
    for (char ch : s) {
      switch (ch) {
        case '&': r += "&amp;"; break;
        case '<': r += "&lt;"; break;
        case '>': r += "&gt;"; break;
        case '"': r += "&quot;"; break;
        default: r += ch;
      }
    }
    return r;
  }

 private:
  void line_start() { out_ << std::string(2 * stack_.size(), ' '); }
  void write_attrs(const Attrs& attrs) {
    for (const auto& [k, v] : attrs) out_ << ' ' << k << "=\"" << escape(v) << '"';
  }

  std::ostringstream out_;
  std::vector<std::string> stack_;
};

inline std::string num(double v) { return format_double(v); }

inline XmlWriter::Attrs cubic_attrs(const CubicRecord& r, const char* key = "s") {
  return {{key, num(r.s)}, {"a", num(r.a)}, {"b", num(r.b)}, {"c", num(r.c)}, {"d", num(r.d)}};
}

inline void write_lane(XmlWriter& w, const LaneSpec& lane) {
  w.open("lane", {{"id", std::to_string(lane.id)}, {"type", lane.type}, {"level", "false"}});
  w.leaf("link");
  w.leaf("width", cubic_attrs({0.0, lane.width, 0, 0, 0}, "sOffset"));
  w.close();
}

}  // namespace detail

/// Serializes to OpenDRIVE 1.6 XML. Fixed attribute order and 17-digit numbers
/// make the output byte-stable.
inline std::string to_xml_string(const OdrDocument& doc) {
  doc.validate();
  using detail::num;
  detail::XmlWriter w;
  w.raw() << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  w.open("OpenDRIVE");
  w.open("header", {{"revMajor", "1"}, {"revMinor", "6"}, {"name", doc.name}, {"version", "1.00"}});
  w.text("geoReference", doc.georeference, true);
  w.leaf("offset", {{"x", num(doc.offset.x())}, {"y", num(doc.offset.y())}, {"z", num(doc.offset.z())}, {"hdg", "0"}});
  w.close();
  w.comment("local origin at x=" + num(doc.offset.x()) + " y=" + num(doc.offset.y()) + " z=" + num(doc.offset.z()));
  w.open("road", {{"name", doc.name}, {"length", num(doc.length())}, {"id", doc.road_id}, {"junction", "-1"}});
  w.leaf("link");
  w.open("planView");
  for (const auto& g : doc.plan_view) {
    w.open("geometry", {{"s", num(g.s)}, {"x", num(g.x)}, {"y", num(g.y)}, {"hdg", num(g.hdg)}, {"length", num(g.length)}});
    switch (g.kind) {
      case GeometryKind::Line:
        w.leaf("line");
        break;
      case GeometryKind::Arc:
        w.leaf("arc", {{"curvature", num(g.curvature)}});
        break;
      case GeometryKind::ParamPoly3: {
        const auto& c = g.poly;
        w.leaf("paramPoly3", {{"aU", num(c.aU)},
                              {"bU", num(c.bU)},
                              {"cU", num(c.cU)},
                              {"dU", num(c.dU)},
                              {"aV", num(c.aV)},
                              {"bV", num(c.bV)},
                              {"cV", num(c.cV)},
                              {"dV", num(c.dV)},
                              {"pRange", c.normalized ? "normalized" : "arcLength"}});
        break;
      }
    }
    w.close();
  }
  w.close();
  w.open("elevationProfile");
  for (const auto& r : doc.elevation) w.leaf("elevation", detail::cubic_attrs(r));
  w.close();
  if (!doc.superelevation.empty()) {
    w.open("lateralProfile");
    for (const auto& r : doc.superelevation) w.leaf("superelevation", detail::cubic_attrs(r));
    w.close();
  }
  w.open("lanes");
  if (doc.lane_offset != 0.0) w.leaf("laneOffset", detail::cubic_attrs({0.0, doc.lane_offset, 0, 0, 0}));
  w.open("laneSection", {{"s", "0"}});
  if (!doc.left_lanes.empty()) {
    w.open("left");
    for (auto it = doc.left_lanes.rbegin(); it != doc.left_lanes.rend(); ++it) detail::write_lane(w, *it);
    w.close();
  }
  w.open("center");
  w.open("lane", {{"id", "0"}, {"type", "none"}, {"level", "false"}});
  w.leaf("link");
  w.close();
  w.close();
  if (!doc.right_lanes.empty()) {
    w.open("right");
    for (const auto& lane : doc.right_lanes) detail::write_lane(w, lane);
    w.close();
  }
  w.close();
  w.close();
  w.close();
  w.close();
  return w.str();
}

inline void write_opendrive(const OdrDocument& doc, const std::filesystem::path& path) {
  const std::string xml = to_xml_string(doc);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << xml;
  if (!f) throw IoError("write failed: " + path.string());
}

namespace detail {

namespace pt = boost::property_tree;

inline double attr(const pt::ptree& node, const char* key, const std::string& file, const char* ctx) {
  const auto v = node.get_optional<std::string>(std::string("<xmlattr>.") + key);
  if (!v) throw ParseError(file, 0, std::string(ctx) + ": missing attribute '" + key + "'");
  double out = 0;
  if (!ingest::detail::parse_double(*v, out) || !std::isfinite(out))
    throw ParseError(file, 0, std::string(ctx) + ": attribute '" + key + "' is not a number: " + *v);
  return out;
}

inline double attr_or(const pt::ptree& node, const char* key, double fallback, const std::string& file,
                      const char* ctx) {
  if (!node.get_optional<std::string>(std::string("<xmlattr>.") + key)) return fallback;
  return attr(node, key, file, ctx);
}

inline CubicRecord read_cubic(const pt::ptree& node, const std::string& file, const char* ctx,
                              const char* key = "s") {
  return {attr(node, key, file, ctx), attr(node, "a", file, ctx), attr(node, "b", file, ctx),
          attr(node, "c", file, ctx), attr(node, "d", file, ctx)};
}

inline std::vector<LaneSpec> read_lanes(const pt::ptree& side, const std::string& file) {
  std::vector<LaneSpec> lanes;
  for (const auto& [tag, lane] : side) {
    if (tag != "lane") continue;
    LaneSpec spec;
    spec.id = static_cast<int>(attr(lane, "id", file, "lane"));
    spec.type = lane.get<std::string>("<xmlattr>.type", "driving");
    const auto width = lane.get_child_optional("width");
    spec.width = width ? attr(*width, "a", file, "lane width") : 0.0;
    lanes.push_back(spec);
  }
  std::sort(lanes.begin(), lanes.end(), [](const LaneSpec& a, const LaneSpec& b) { return std::abs(a.id) < std::abs(b.id); });
  return lanes;
}

}  // namespace detail

/// Parses line, arc and paramPoly3 geometries plus profiles and the first lane
/// section. Spirals are rejected as unsupported.
inline OdrDocument parse_opendrive(std::istream& in, const std::string& file = "<memory>") {
  namespace pt = boost::property_tree;
  using detail::attr;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(file, e.line(), e.message());
  }
  const auto root = tree.get_child_optional("OpenDRIVE");
  if (!root) throw ParseError(file, 0, "missing <OpenDRIVE> root element");
  OdrDocument doc;
  if (const auto header = root->get_child_optional("header")) {
    doc.name = header->get<std::string>("<xmlattr>.name", "");
    doc.georeference = header->get<std::string>("geoReference", "");
    if (const auto off = header->get_child_optional("offset"))
      doc.offset = Vec3(detail::attr_or(*off, "x", 0, file, "offset"), detail::attr_or(*off, "y", 0, file, "offset"),
                        detail::attr_or(*off, "z", 0, file, "offset"));
  }
  if (root->count("road") == 0) throw ParseError(file, 0, "no <road> element");
  if (root->count("road") > 1) throw UnsupportedFeature("multiple roads are not supported");
  const auto& road = root->get_child("road");
  doc.road_id = road.get<std::string>("<xmlattr>.id", "1");

  const auto plan = road.get_child_optional("planView");
  if (!plan) throw ParseError(file, 0, "road has no <planView>");
  for (const auto& [tag, node] : *plan) {
    if (tag != "geometry") continue;
    Geometry g;
    g.s = attr(node, "s", file, "geometry");
    g.x = attr(node, "x", file, "geometry");
    g.y = attr(node, "y", file, "geometry");
    g.hdg = attr(node, "hdg", file, "geometry");
    g.length = attr(node, "length", file, "geometry");
    const std::string where = "geometry at s=" + format_double(g.s);
    bool found = false;
    for (const auto& [kind, child] : node) {
      if (kind == "<xmlattr>" || kind == "<xmlcomment>") continue;
      if (found) throw ParseError(file, 0, where + " has more than one curve element");
      found = true;
      if (kind == "line") {
        g.kind = GeometryKind::Line;
      } else if (kind == "arc") {
        g.kind = GeometryKind::Arc;
        g.curvature = attr(child, "curvature", file, "arc");
      } else if (kind == "paramPoly3") {
        g.kind = GeometryKind::ParamPoly3;
        auto& c = g.poly;
        c.aU = attr(child, "aU", file, "paramPoly3");
        c.bU = attr(child, "bU", file, "paramPoly3");
        c.cU = attr(child, "cU", file, "paramPoly3");
        c.dU = attr(child, "dU", file, "paramPoly3");
        c.aV = attr(child, "aV", file, "paramPoly3");
        c.bV = attr(child, "bV", file, "paramPoly3");
        c.cV = attr(child, "cV", file, "paramPoly3");
        c.dV = attr(child, "dV", file, "paramPoly3");
        const auto range = child.get<std::string>("<xmlattr>.pRange", "normalized");
        if (range != "normalized" && range != "arcLength")
          throw ParseError(file, 0, where + ": unknown pRange '" + range + "'");
        c.normalized = range == "normalized";
      } else if (kind == "spiral") {
        throw UnsupportedFeature("spiral " + where + " is not supported");
      } else {
        throw ParseError(file, 0, where + ": unknown geometry type '" + kind + "'");
      }
    }
    if (!found) throw ParseError(file, 0, where + " has no curve element");
    if (!(g.length > 0)) throw ParseError(file, 0, where + " has non-positive length");
    doc.plan_view.push_back(g);
  }
  if (doc.plan_view.empty()) throw ParseError(file, 0, "planView has no geometries");
  double expect = 0;
  for (const auto& g : doc.plan_view) {
    if (std::abs(g.s - expect) > 1e-6 * std::max(1.0, expect))
      throw ParseError(file, 0, "non-contiguous s at geometry s=" + format_double(g.s) + " (expected " +
                                    format_double(expect) + ")");
    expect = g.s + g.length;
  }

  if (const auto el = road.get_child_optional("elevationProfile"))
    for (const auto& [tag, node] : *el)
      if (tag == "elevation") doc.elevation.push_back(detail::read_cubic(node, file, "elevation"));
  if (const auto lat = road.get_child_optional("lateralProfile"))
    for (const auto& [tag, node] : *lat)
      if (tag == "superelevation") doc.superelevation.push_back(detail::read_cubic(node, file, "superelevation"));

  if (const auto lanes = road.get_child_optional("lanes")) {
    if (const auto off = lanes->get_child_optional("laneOffset")) doc.lane_offset = attr(*off, "a", file, "laneOffset");
    if (const auto sec = lanes->get_child_optional("laneSection")) {
      if (const auto l = sec->get_child_optional("left")) doc.left_lanes = detail::read_lanes(*l, file);
      if (const auto r = sec->get_child_optional("right")) doc.right_lanes = detail::read_lanes(*r, file);
    }
  }
  return doc;
}

inline OdrDocument read_opendrive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  return parse_opendrive(f, path.string());
}

}  // namespace odrgen::odr
