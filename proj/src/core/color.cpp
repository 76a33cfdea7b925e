#include "abr/color.hpp"

#include "abr/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace abr::color {

namespace {

// D65 reference white, Y normalized to 1.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

std::uint8_t to_byte(double unit) {
  const double v = std::round(unit * 255.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

LabColor srgbf_to_lab(RgbF rgb) {
  const double r = srgb_to_linear(rgb.r);
  const double g = srgb_to_linear(rgb.g);
  const double b = srgb_to_linear(rgb.b);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn);
  const double fy = lab_f(y / kYn);
  const double fz = lab_f(z / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabColor srgb_to_lab(Rgb8 rgb) {
  return srgbf_to_lab({rgb.r / 255.0, rgb.g / 255.0, rgb.b / 255.0});
}

RgbF lab_to_srgbf(LabColor lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double x = kXn * lab_f_inv(fx);
  const double y = kYn * lab_f_inv(fy);
  const double z = kZn * lab_f_inv(fz);
  const double r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const double g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
  const double b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  // Negative linear values have no sRGB encoding; clamp before the power curve.
  return {linear_to_srgb(std::max(r, 0.0)), linear_to_srgb(std::max(g, 0.0)),
          linear_to_srgb(std::max(b, 0.0))};
}

Rgb8 lab_to_srgb(LabColor lab) {
  const RgbF f = lab_to_srgbf(lab);
  return {to_byte(f.r), to_byte(f.g), to_byte(f.b)};
}

double delta_e76(LabColor x, LabColor y) {
  const double dl = x.L - y.L, da = x.a - y.a, db = x.b - y.b;
  return std::sqrt(dl * dl + da * da + db * db);
}

std::string to_hex(Rgb8 c) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s = "#000000";
  const std::uint8_t v[3] = {c.r, c.g, c.b};
  for (int i = 0; i < 3; ++i) {
    s[1 + 2 * i] = kDigits[v[i] >> 4];
    s[2 + 2 * i] = kDigits[v[i] & 15];
  }
  return s;
}

Rgb8 parse_hex(std::string_view text) {
  if (!text.empty() && text.front() == '#') text.remove_prefix(1);
  if (text.size() != 6) throw Error(ErrorCode::Parse, "expected 6 hex digits: " + std::string(text));
  std::uint8_t v[3];
  for (int i = 0; i < 3; ++i) {
    auto res = std::from_chars(text.data() + 2 * i, text.data() + 2 * i + 2, v[i], 16);
    if (res.ec != std::errc() || res.ptr != text.data() + 2 * i + 2)
      throw Error(ErrorCode::Parse, "invalid hex color: " + std::string(text));
  }
  return {v[0], v[1], v[2]};
}

// ---------------------------------------------------------------------------
// Median cut

namespace {

struct HistEntry {
  std::uint32_t key;  // 0xRRGGBB
  std::uint64_t count;
  LabColor lab;
};

double axis_value(const LabColor& c, int axis) { return axis == 0 ? c.L : axis == 1 ? c.a : c.b; }

struct Box {
  std::size_t begin = 0, end = 0;  // range into the histogram
  std::uint64_t population = 0;
  int longestAxis = 0;
  double extent = 0.0;
  bool duplicate = false;

  void refresh(const std::vector<HistEntry>& hist) {
    population = 0;
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    for (std::size_t i = begin; i < end; ++i) {
      population += hist[i].count;
      for (int a = 0; a < 3; ++a) {
        const double v = axis_value(hist[i].lab, a);
        lo[a] = std::min(lo[a], v);
        hi[a] = std::max(hi[a], v);
      }
    }
    extent = 0.0;
    longestAxis = 0;
    for (int a = 0; a < 3; ++a) {
      if (hi[a] - lo[a] > extent) {
        extent = hi[a] - lo[a];
        longestAxis = a;
      }
    }
  }

  bool splittable() const { return !duplicate && end - begin >= 2; }
  double priority() const { return static_cast<double>(population) * extent; }
};

}  // namespace

std::vector<Swatch> extract_palette(const Image& image, int count, int imageId) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "extract_palette: empty image");
  if (count <= 0) throw Error(ErrorCode::InvalidArgument, "extract_palette: count must be positive");

  const Image rgb = to_rgb(image);
  std::unordered_map<std::uint32_t, std::uint64_t> counts;
  const std::size_t pixels = static_cast<std::size_t>(rgb.width) * rgb.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    const std::uint8_t* p = rgb.data.data() + 3 * i;
    ++counts[(std::uint32_t(p[0]) << 16) | (std::uint32_t(p[1]) << 8) | p[2]];
  }
  std::vector<HistEntry> hist;
  hist.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    const Rgb8 c{std::uint8_t(key >> 16), std::uint8_t(key >> 8), std::uint8_t(key)};
    hist.push_back({key, n, srgb_to_lab(c)});
  }
  std::sort(hist.begin(), hist.end(), [](const HistEntry& x, const HistEntry& y) { return x.key < y.key; });

  std::vector<Box> boxes(1);
  boxes[0].begin = 0;
  boxes[0].end = hist.size();
  boxes[0].refresh(hist);

  while (static_cast<int>(boxes.size()) < count) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!boxes[i].splittable()) continue;
      if (best == boxes.size() || boxes[i].priority() > boxes[best].priority()) best = i;
    }
    if (best == boxes.size()) {
      // Nothing left to split: duplicate the most populous box.
      std::size_t top = 0;
      for (std::size_t i = 1; i < boxes.size(); ++i)
        if (boxes[i].population > boxes[top].population) top = i;
      Box copy = boxes[top];
      copy.duplicate = true;
      copy.population = boxes[top].population / 2;
      boxes[top].population -= copy.population;
      boxes[top].duplicate = true;
      boxes.push_back(copy);
      continue;
    }
    Box& box = boxes[best];
    const int axis = box.longestAxis;
    std::sort(hist.begin() + static_cast<std::ptrdiff_t>(box.begin),
              hist.begin() + static_cast<std::ptrdiff_t>(box.end),
              [axis](const HistEntry& x, const HistEntry& y) {
                const double vx = axis_value(x.lab, axis), vy = axis_value(y.lab, axis);
                return vx != vy ? vx < vy : x.key < y.key;
              });
    const std::uint64_t half = (box.population + 1) / 2;
    std::uint64_t acc = 0;
    std::size_t split = box.begin + 1;
    for (std::size_t i = box.begin; i < box.end; ++i) {
      acc += hist[i].count;
      if (acc >= half) {
        split = i + 1;
        break;
      }
    }
    split = std::clamp(split, box.begin + 1, box.end - 1);
    Box upper;
    upper.begin = split;
    upper.end = box.end;
    box.end = split;
    box.refresh(hist);
    upper.refresh(hist);
    boxes.push_back(upper);
  }

  std::vector<Swatch> swatches;
  std::vector<std::uint32_t> representative;
  for (const Box& box : boxes) {
    double w = 0.0, L = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = box.begin; i < box.end; ++i) {
      const double n = static_cast<double>(hist[i].count);
      w += n;
      L += n * hist[i].lab.L;
      a += n * hist[i].lab.a;
      b += n * hist[i].lab.b;
    }
    Swatch s;
    s.color = {L / w, a / w, b / w};
    s.population = box.population;
    swatches.push_back(s);
    std::size_t nearest = box.begin;
    for (std::size_t i = box.begin; i < box.end; ++i)
      if (delta_e76(hist[i].lab, s.color) < delta_e76(hist[nearest].lab, s.color)) nearest = i;
    representative.push_back(hist[nearest].key);
  }

  // Provenance: first pixel in raster order carrying each representative color.
  std::map<std::uint32_t, PixelRef> firstSeen;
  for (std::uint32_t key : representative) firstSeen.emplace(key, PixelRef{-1, 0, 0});
  std::size_t unresolved = firstSeen.size();
  for (int y = 0; y < rgb.height && unresolved > 0; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const std::uint8_t* p = rgb.at(x, y);
      const std::uint32_t key = (std::uint32_t(p[0]) << 16) | (std::uint32_t(p[1]) << 8) | p[2];
      auto it = firstSeen.find(key);
      if (it != firstSeen.end() && it->second.imageId < 0) {
        it->second = {imageId, x, y};
        --unresolved;
      }
    }
  }
  for (std::size_t i = 0; i < swatches.size(); ++i) swatches[i].sourcePixel = firstSeen.at(representative[i]);

  std::vector<std::size_t> order(swatches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return swatches[x].population > swatches[y].population;
  });
  std::vector<Swatch> sorted;
  sorted.reserve(order.size());
  for (std::size_t i : order) sorted.push_back(swatches[i]);
  return sorted;
}

// ---------------------------------------------------------------------------
// Colormaps

ColorMap::ColorMap(std::string name, std::vector<ControlPoint> points)
    : name_(std::move(name)), points_(std::move(points)) {
  if (points_.size() < 2) throw Error(ErrorCode::InvalidArgument, "colormap needs at least 2 control points");
  if (points_.front().position != 0.0 || points_.back().position != 1.0)
    throw Error(ErrorCode::InvalidArgument, "colormap positions must start at 0 and end at 1");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (!std::isfinite(p.position) || !std::isfinite(p.color.L) || !std::isfinite(p.color.a) ||
        !std::isfinite(p.color.b))
      throw Error(ErrorCode::InvalidArgument, "colormap control point " + std::to_string(i) + " is not finite");
    if (i > 0 && !(p.position > points_[i - 1].position))
      throw Error(ErrorCode::InvalidArgument,
                  "colormap positions must be strictly increasing (point " + std::to_string(i) + ")");
  }
}

ColorMap ColorMap::normalized(std::string name, std::vector<ControlPoint> points) {
  if (points.size() < 2) throw Error(ErrorCode::InvalidArgument, "colormap needs at least 2 control points");
  const double lo = points.front().position;
  const double hi = points.back().position;
  if (!(hi > lo)) throw Error(ErrorCode::InvalidArgument, "colormap positions must be strictly increasing");
  for (auto& p : points) p.position = (p.position - lo) / (hi - lo);
  points.front().position = 0.0;
  points.back().position = 1.0;
  return ColorMap(std::move(name), std::move(points));
}

LabColor sample_colormap(const ColorMap& map, double t) {
  const auto& pts = map.points();
  if (!(t > 0.0)) return pts.front().color;  // also catches NaN
  if (t >= 1.0) return pts.back().color;
  auto it = std::upper_bound(pts.begin(), pts.end(), t,
                             [](double v, const ControlPoint& p) { return v < p.position; });
  const ControlPoint& hi = *it;
  const ControlPoint& lo = *(it - 1);
  if (t == lo.position) return lo.color;
  const double w = (t - lo.position) / (hi.position - lo.position);
  return {lo.color.L + w * (hi.color.L - lo.color.L), lo.color.a + w * (hi.color.a - lo.color.a),
          lo.color.b + w * (hi.color.b - lo.color.b)};
}

namespace {

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(std::string_view s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [ent, ch] : kEntities) {
        if (s.substr(i, ent.size()) == ent) {
          out += ch;
          i += ent.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += s[i++];
  }
  return out;
}

// Attributes of the tag starting at `open` (pointing at '<').
std::map<std::string, std::string> parse_attributes(std::string_view xml, std::size_t open, std::size_t& close) {
  close = xml.find('>', open);
  if (close == std::string_view::npos)
    throw Error(ErrorCode::Parse, "colormap XML: unterminated tag at offset " + std::to_string(open));
  std::string_view tag = xml.substr(open + 1, close - open - 1);
  std::map<std::string, std::string> attrs;
  std::size_t i = tag.find_first_of(" \t\r\n");
  while (i != std::string_view::npos && i < tag.size()) {
    i = tag.find_first_not_of(" \t\r\n/", i);
    if (i == std::string_view::npos) break;
    const std::size_t eq = tag.find('=', i);
    if (eq == std::string_view::npos) break;
    std::string key(tag.substr(i, eq - i));
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    const std::size_t q = tag.find_first_of("\"'", eq);
    if (q == std::string_view::npos)
      throw Error(ErrorCode::Parse, "colormap XML: unquoted attribute at offset " + std::to_string(open + 1 + eq));
    const std::size_t qe = tag.find(tag[q], q + 1);
    if (qe == std::string_view::npos)
      throw Error(ErrorCode::Parse, "colormap XML: unterminated attribute at offset " + std::to_string(open + 1 + q));
    attrs[key] = xml_unescape(tag.substr(q + 1, qe - q - 1));
    i = qe + 1;
  }
  return attrs;
}

double parse_real(const std::map<std::string, std::string>& attrs, const char* key, std::size_t offset) {
  auto it = attrs.find(key);
  if (it == attrs.end())
    throw Error(ErrorCode::Parse, std::string("colormap XML: Point missing '") + key + "' at offset " +
                                      std::to_string(offset));
  double v = 0.0;
  const auto& s = it->second;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::Parse, std::string("colormap XML: bad number for '") + key + "' at offset " +
                                      std::to_string(offset));
  return v;
}

}  // namespace

std::string export_colormap_xml(const ColorMap& map) {
  std::string out = "<ColorMaps><ColorMap name=\"" + xml_escape(map.name()) + "\" space=\"Lab\">";
  for (const auto& p : map.points()) {
    const RgbF c = lab_to_srgbf(p.color);
    out += "<Point x=\"" + format_real(p.position) + "\" o=\"1\" r=\"" + format_real(std::clamp(c.r, 0.0, 1.0)) +
           "\" g=\"" + format_real(std::clamp(c.g, 0.0, 1.0)) + "\" b=\"" +
           format_real(std::clamp(c.b, 0.0, 1.0)) + "\" lab=\"" + format_real(p.color.L) + " " +
           format_real(p.color.a) + " " + format_real(p.color.b) + "\"/>";
  }
  out += "</ColorMap></ColorMaps>\n";
  return out;
}

ColorMap parse_colormap_xml(std::string_view xml) {
  const std::size_t mapOpen = xml.find("<ColorMap ");
  if (mapOpen == std::string_view::npos) throw Error(ErrorCode::Parse, "colormap XML: no <ColorMap> element");
  std::size_t close = 0;
  const auto mapAttrs = parse_attributes(xml, mapOpen, close);
  const std::size_t mapEnd = xml.find("</ColorMap>", close);
  if (mapEnd == std::string_view::npos) throw Error(ErrorCode::Parse, "colormap XML: missing </ColorMap>");
  std::vector<ControlPoint> points;
  std::size_t pos = close;
  while (true) {
    const std::size_t open = xml.find("<Point", pos);
    if (open == std::string_view::npos || open > mapEnd) break;
    const auto attrs = parse_attributes(xml, open, close);
    LabColor lab;
    if (auto it = attrs.find("lab"); it != attrs.end()) {
      // Exact Lab written by this exporter; plain ParaView files only carry RGB.
      double v[3];
      const char* p = it->second.data();
      const char* end = p + it->second.size();
      for (double& x : v) {
        while (p < end && *p == ' ') ++p;
        auto res = std::from_chars(p, end, x);
        if (res.ec != std::errc())
          throw Error(ErrorCode::Parse, "colormap XML: bad 'lab' value at offset " + std::to_string(open));
        p = res.ptr;
      }
      lab = {v[0], v[1], v[2]};
    } else {
      lab = srgbf_to_lab({parse_real(attrs, "r", open), parse_real(attrs, "g", open), parse_real(attrs, "b", open)});
    }
    points.push_back({parse_real(attrs, "x", open), lab});
    pos = close;
  }
  auto nameIt = mapAttrs.find("name");
  std::string name = nameIt == mapAttrs.end() ? std::string() : nameIt->second;
  try {
    if (points.size() >= 2 && points.front().position == 0.0 && points.back().position == 1.0)
      return ColorMap(std::move(name), std::move(points));
    return ColorMap::normalized(std::move(name), std::move(points));
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, std::string("colormap XML: ") + e.what());
  }
}

Image export_colormap_png_strip(const ColorMap& map) {
  Image img(kStripWidth, kStripHeight, 3);
  for (int c = 0; c < kStripWidth; ++c) {
    const Rgb8 rgb = lab_to_srgb(sample_colormap(map, static_cast<double>(c) / (kStripWidth - 1)));
    for (int y = 0; y < kStripHeight; ++y) {
      std::uint8_t* p = img.at(c, y);
      p[0] = rgb.r;
      p[1] = rgb.g;
      p[2] = rgb.b;
    }
  }
  return img;
}

}  // namespace abr::color
