#include "requests.hpp"

#include "abr/scene.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>

namespace abr::api {

namespace fs = std::filesystem;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) return out;
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.starts_with("data:")) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "malformed data URL");
    text.remove_prefix(comma + 1);
  }
  std::string clean;
  clean.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  if (clean.size() % 4 != 0) throw Error(ErrorCode::InvalidArgument, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  if (clean.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "invalid base64 payload");
  std::size_t pad = 0;
  if (clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

json parse_body(std::string_view text) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::Parse, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, "request body: offset " + std::to_string(e.byte) + ": invalid JSON");
  }
}

Vec3 vec3_field(const json& j, const char* key) {
  const auto v = get<std::vector<double>>(j, key);
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' must have 3 numbers");
  return {v[0], v[1], v[2]};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json lab_json(const color::LabColor& c) { return json::array({c.L, c.a, c.b}); }

json swatches_json(const std::vector<color::Swatch>& swatches) {
  json arr = json::array();
  for (const auto& s : swatches) {
    json j{{"hex", color::to_hex(color::lab_to_srgb(s.color))}, {"lab", lab_json(s.color)}, {"population", s.population}};
    if (s.sourcePixel) j["source"] = {{"image", s.sourcePixel->imageId}, {"x", s.sourcePixel->x}, {"y", s.sourcePixel->y}};
    arr.push_back(std::move(j));
  }
  return arr;
}

color::ColorMap colormap_from_json(const json& j) {
  if (j.contains("xml")) return color::parse_colormap_xml(get<std::string>(j, "xml"));
  const auto name = get_or<std::string>(j, "name", "colormap");
  if (!j.contains("points") || !j["points"].is_array())
    throw Error(ErrorCode::InvalidArgument, "colormap needs 'xml' or a 'points' array");
  std::vector<color::ControlPoint> pts;
  for (const auto& p : j["points"]) {
    color::ControlPoint cp;
    cp.position = get<double>(p, "position");
    if (p.contains("lab")) {
      const auto lab = get<std::vector<double>>(p, "lab");
      if (lab.size() != 3) throw Error(ErrorCode::InvalidArgument, "'lab' must have 3 numbers");
      cp.color = {lab[0], lab[1], lab[2]};
    } else if (p.contains("hex")) {
      cp.color = color::srgb_to_lab(color::parse_hex(get<std::string>(p, "hex")));
    } else if (p.contains("rgb")) {
      const auto rgb = get<std::vector<int>>(p, "rgb");
      if (rgb.size() != 3 || std::any_of(rgb.begin(), rgb.end(), [](int c) { return c < 0 || c > 255; }))
        throw Error(ErrorCode::InvalidArgument, "'rgb' must have 3 values in 0..255");
      cp.color = color::srgb_to_lab({static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                                     static_cast<std::uint8_t>(rgb[2])});
    } else {
      throw Error(ErrorCode::InvalidArgument, "control point needs 'lab', 'hex' or 'rgb'");
    }
    pts.push_back(cp);
  }
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
  if (get_or<bool>(j, "normalize", false)) return color::ColorMap::normalized(name, std::move(pts));
  return color::ColorMap(name, std::move(pts));
}

json colormap_json(const color::ColorMap& map) {
  json pts = json::array();
  for (const auto& p : map.points())
    pts.push_back({{"position", p.position}, {"lab", lab_json(p.color)}, {"hex", color::to_hex(color::lab_to_srgb(p.color))}});
  return json{{"name", map.name()}, {"points", pts}};
}

json color_sample_json(const color::LabColor& c) {
  const auto f = color::lab_to_srgbf(c);
  return json{{"lab", lab_json(c)}, {"hex", color::to_hex(color::lab_to_srgb(c))}, {"rgb", json::array({f.r, f.g, f.b})}};
}

line::SynthesisParams synthesis_params_from_json(const json& j) {
  line::SynthesisParams p;
  p.jumpProbability = get_or(j, "jumpProbability", p.jumpProbability);
  // JSON has no infinity; null or a missing key keeps every jump allowed.
  p.minQuality = get_or(j, "minQuality", p.minQuality);
  p.minJumpSize = get_or(j, "minJumpSize", p.minJumpSize);
  p.outputHeight = get_or(j, "outputHeight", p.outputHeight);
  p.seed = get_or<std::uint64_t>(j, "seed", p.seed);
  p.validate();
  return p;
}

namespace {

sampling::Interpolation interpolation_of(const json& req) {
  const auto mode = get_or<std::string>(req, "interpolation", "nearest");
  if (mode == "nearest") return sampling::Interpolation::Nearest;
  if (mode == "trilinear") return sampling::Interpolation::Trilinear;
  throw Error(ErrorCode::InvalidArgument, "unknown interpolation '" + mode + "'");
}

const std::vector<double>& pick_scalar(const scene::DataObject& obj, const json& req) {
  if (req.contains("variable")) {
    const auto name = get<std::string>(req, "variable");
    const auto it = obj.scalars.find(name);
    if (it == obj.scalars.end()) throw Error(ErrorCode::NotFound, "scalar variable '" + name + "' not found");
    return it->second;
  }
  if (obj.scalars.size() != 1)
    throw Error(ErrorCode::InvalidArgument, "density sampling needs 'variable' (data has " +
                                                std::to_string(obj.scalars.size()) + " scalars)");
  return obj.scalars.begin()->second;
}

scene::DataObject source_object(const json& req, const fs::path& baseDir) {
  if (req.contains("data")) {
    fs::path p = get<std::string>(req, "data");
    if (p.is_relative()) p = baseDir / p;
    fs::path vars;
    if (req.contains("variables")) {
      vars = get<std::string>(req, "variables");
      if (vars.is_relative()) vars = baseDir / vars;
    }
    return scene::load_data_object(p, get_or<std::string>(req, "format", ""), vars);
  }
  if (req.contains("volume")) return scene::parse_volume_json(req["volume"].dump());
  if (req.contains("points")) return scene::parse_point_csv(get<std::string>(req, "points"));
  if (req.contains("obj")) {
    scene::DataObject obj;
    obj.kind = scene::DataKind::Mesh;
    obj.mesh = mesh::parse_obj(get<std::string>(req, "obj"));
    if (req.contains("values")) obj.scalars["values"] = get<std::vector<double>>(req, "values");
    obj.finalize();
    return obj;
  }
  throw Error(ErrorCode::InvalidArgument, "sampling request needs one of 'box', 'data', 'volume', 'points', 'obj'");
}

}  // namespace

sampling::SampleSet run_sample_request(const json& req, const fs::path& baseDir) {
  const auto method = get_or<std::string>(req, "method", "random");
  const auto seed = get_or<std::uint64_t>(req, "seed", 0);
  const auto count = get_or<std::int64_t>(req, "count", 200);
  if (count < 0) throw Error(ErrorCode::InvalidArgument, "'count' must be >= 0");

  if (req.contains("box")) {
    const json& b = req["box"];
    mesh::Aabb box;
    box.expand(vec3_field(b, "min"));
    box.expand(vec3_field(b, "max"));
    if (method == "regular") return sampling::sample_regular(box, get<double>(req, "spacing"));
    if (method == "random") return sampling::sample_random(box, static_cast<std::size_t>(count), seed);
    throw Error(ErrorCode::InvalidArgument, "method '" + method + "' needs a field, not a box");
  }

  const scene::DataObject obj = source_object(req, baseDir);
  const sampling::Domain domain = obj.kind == scene::DataKind::Mesh ? sampling::Domain(obj.mesh) : sampling::Domain(obj.bounds);
  if (method == "regular") return sampling::sample_regular(domain, get<double>(req, "spacing"));
  if (method == "random") return sampling::sample_random(domain, static_cast<std::size_t>(count), seed);
  if (method != "density") throw Error(ErrorCode::InvalidArgument, "unknown sampling method '" + method + "'");

  sampling::DensityOptions opt;
  opt.chains = get_or(req, "chains", 1);
  if (obj.kind == scene::DataKind::Volume) {
    sampling::VoxelField f{obj.grid, interpolation_of(req)};
    f.grid.values = pick_scalar(obj, req);
    return sampling::sample_density_mh(f, static_cast<std::size_t>(count), seed, opt);
  }
  if (obj.kind == scene::DataKind::Mesh)
    return sampling::sample_density_mh(sampling::MeshField{obj.mesh, pick_scalar(obj, req)}, static_cast<std::size_t>(count),
                                       seed, opt);
  throw Error(ErrorCode::InvalidArgument, std::string("density sampling needs a mesh or volume, got ") + scene::to_string(obj.kind));
}

json sample_set_json(const sampling::SampleSet& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(vec3_json(p));
  const auto& r = s.record;
  return json{{"points", pts},
              {"record",
               {{"method", r.method},
                {"seed", r.seed},
                {"count", r.count},
                {"spacing", r.spacing},
                {"proposalSigma", r.proposalSigma},
                {"burnIn", r.burnIn},
                {"thinning", r.thinning},
                {"chains", r.chains}}}};
}

json record_json(const assets::AssetRecord& r) { return json::parse(assets::to_json(r)); }
json records_json(const std::vector<assets::AssetRecord>& rs) { return json::parse(assets::to_json(rs)); }

json error_json(const std::string& code, const std::string& message, const json& details) {
  return json{{"code", code}, {"message", message}, {"details", details}};
}

}  // namespace abr::api
