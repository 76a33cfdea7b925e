#include "abr/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

namespace abr::scene {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(DataKind kind) {
  switch (kind) {
    case DataKind::PointSet: return "points";
    case DataKind::LineSet: return "lines";
    case DataKind::Mesh: return "mesh";
    case DataKind::Volume: return "volume";
  }
  return "?";
}

const char* to_string(LayerType type) {
  switch (type) {
    case LayerType::Glyph: return "glyph";
    case LayerType::Line: return "line";
    case LayerType::Surface: return "surface";
    case LayerType::Volume: return "volume";
  }
  return "?";
}

LayerType parse_layer_type(std::string_view text) {
  if (text == "glyph") return LayerType::Glyph;
  if (text == "line") return LayerType::Line;
  if (text == "surface") return LayerType::Surface;
  if (text == "volume") return LayerType::Volume;
  throw Error(ErrorCode::Validation, "unknown layer type: " + std::string(text));
}

std::size_t DataObject::element_count() const {
  switch (kind) {
    case DataKind::PointSet: return points.size();
    case DataKind::LineSet: {
      std::size_t n = 0;
      for (const auto& l : lines) n += l.points.size();
      return n;
    }
    case DataKind::Mesh: return mesh.vertex_count();
    case DataKind::Volume: return grid.size();
  }
  return 0;
}

void DataObject::finalize() {
  const std::string label = id.empty() ? "data object" : id;
  bounds = {};
  switch (kind) {
    case DataKind::PointSet:
      for (const auto& p : points) bounds.expand(p);
      break;
    case DataKind::LineSet:
      for (const auto& l : lines) {
        if (l.points.size() < 2) throw Error(ErrorCode::Validation, label + ": polyline needs at least 2 points");
        if (!l.normals.empty() && l.normals.size() != l.points.size())
          throw Error(ErrorCode::Validation, label + ": polyline normal count does not match point count");
        if (!l.times.empty() && l.times.size() != l.points.size())
          throw Error(ErrorCode::Validation, label + ": polyline time count does not match point count");
        for (const auto& p : l.points) bounds.expand(p);
      }
      break;
    case DataKind::Mesh:
      mesh.validate();
      bounds = mesh.bounds();
      break;
    case DataKind::Volume:
      grid.validate();
      bounds = grid.bounds();
      break;
  }
  for (const auto& p : points)
    if (!p.allFinite()) throw Error(ErrorCode::Validation, label + ": non-finite coordinate");
  const std::size_t n = element_count();
  std::set<std::string> names;
  for (const auto& [name, values] : scalars) {
    names.insert(name);
    if (values.size() != n)
      throw Error(ErrorCode::Validation, label + ": scalar '" + name + "' has " + std::to_string(values.size()) +
                                             " values, expected " + std::to_string(n));
  }
  for (const auto& [name, values] : vectors) {
    if (!names.insert(name).second)
      throw Error(ErrorCode::Validation, label + ": variable name '" + name + "' used twice");
    if (values.size() != n)
      throw Error(ErrorCode::Validation, label + ": vector '" + name + "' has " + std::to_string(values.size()) +
                                             " values, expected " + std::to_string(n));
  }
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front()))) cell.remove_prefix(1);
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& cell, int line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": column '" + column + "': not a number: '" +
                                      cell + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
  std::size_t rows = 0;
};

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = cells;
      t.columns.resize(cells.size());
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineNo) + ": expected " +
                                        std::to_string(t.header.size()) + " columns, found " +
                                        std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) t.columns[c].push_back(parse_number(cells[c], lineNo, t.header[c]));
    ++t.rows;
  }
  if (t.header.empty()) throw Error(ErrorCode::Parse, "line 1: missing CSV header");
  return t;
}

/// Moves non-coordinate columns into variables; <name>_x/_y/_z triples become vectors.
void take_variables(CsvTable& t, const std::set<std::string>& skip, DataObject& obj) {
  std::set<std::string> used = skip;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const std::string& h = t.header[c];
    if (used.count(h) || h.size() < 3 || h.substr(h.size() - 2) != "_x") continue;
    const std::string base = h.substr(0, h.size() - 2);
    auto iy = std::find(t.header.begin(), t.header.end(), base + "_y");
    auto iz = std::find(t.header.begin(), t.header.end(), base + "_z");
    if (iy == t.header.end() || iz == t.header.end()) continue;
    const auto& xs = t.columns[c];
    const auto& ys = t.columns[static_cast<std::size_t>(iy - t.header.begin())];
    const auto& zs = t.columns[static_cast<std::size_t>(iz - t.header.begin())];
    std::vector<Vec3> v(t.rows);
    for (std::size_t r = 0; r < t.rows; ++r) v[r] = Vec3(xs[r], ys[r], zs[r]);
    obj.vectors[base] = std::move(v);
    used.insert({h, base + "_y", base + "_z"});
  }
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (used.count(t.header[c])) continue;
    if (t.header[c].empty()) throw Error(ErrorCode::Parse, "line 1: empty column name");
    if (obj.scalars.count(t.header[c])) throw Error(ErrorCode::Parse, "line 1: duplicate column '" + t.header[c] + "'");
    obj.scalars[t.header[c]] = t.columns[c];
  }
}

Vec3 vec3_of(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json json_of(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
std::vector<T> read_raw(const std::vector<std::uint8_t>& bytes, std::size_t count) {
  std::vector<T> out(std::min(count, bytes.size() / sizeof(T)));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace

DataObject parse_point_csv(std::string_view text) {
  CsvTable t = parse_csv(text);
  DataObject obj;
  obj.kind = DataKind::PointSet;
  auto col = [&](const char* name) -> const std::vector<double>& {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw Error(ErrorCode::Parse, std::string("line 1: missing column '") + name + "'");
    return t.columns[static_cast<std::size_t>(it - t.header.begin())];
  };
  const auto& xs = col("x");
  const auto& ys = col("y");
  const auto& zs = col("z");
  for (std::size_t r = 0; r < t.rows; ++r) obj.points.emplace_back(xs[r], ys[r], zs[r]);
  take_variables(t, {"x", "y", "z"}, obj);
  obj.finalize();
  return obj;
}

DataObject parse_polyline_json(std::string_view text) {
  DataObject obj;
  obj.kind = DataKind::LineSet;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("offset ") + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    for (const auto& l : doc.at("lines")) {
      Polyline pl;
      for (const auto& p : l.at("points")) pl.points.push_back(vec3_of(p));
      if (l.contains("normals"))
        for (const auto& n : l["normals"]) pl.normals.push_back(vec3_of(n));
      if (l.contains("times")) pl.times = l["times"].get<std::vector<double>>();
      if (l.contains("scalars"))
        for (const auto& [name, values] : l["scalars"].items()) {
          auto& dst = obj.scalars[name];
          for (const auto& v : values) dst.push_back(v.get<double>());
        }
      if (l.contains("vectors"))
        for (const auto& [name, values] : l["vectors"].items()) {
          auto& dst = obj.vectors[name];
          for (const auto& v : values) dst.push_back(vec3_of(v));
        }
      obj.lines.push_back(std::move(pl));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("polyline document: ") + e.what());
  }
  obj.finalize();
  return obj;
}

DataObject parse_volume_json(std::string_view text, const fs::path& dir) {
  DataObject obj;
  obj.kind = DataKind::Volume;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("offset ") + std::to_string(e.byte) + ": " + e.what());
  }
  std::string name;
  try {
    const auto dims = doc.at("dims");
    obj.grid.dims = {dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
    if (doc.contains("spacing")) obj.grid.spacing = vec3_of(doc["spacing"]);
    if (doc.contains("origin")) obj.grid.origin = vec3_of(doc["origin"]);
    name = doc.value("name", "value");
    for (int d : obj.grid.dims)
      if (d < 1) throw Error(ErrorCode::Validation, "volume dims must be >= 1");
    const std::size_t expected = obj.grid.size();
    if (doc.contains("values")) {
      obj.grid.values = doc["values"].get<std::vector<double>>();
    } else if (doc.contains("raw")) {
      const auto bytes = read_file(dir / doc["raw"].get<std::string>());
      const std::string type = doc.value("valueType", "float32");
      std::size_t width = 0;
      if (type == "float32") {
        for (float v : read_raw<float>(bytes, expected)) obj.grid.values.push_back(v);
        width = 4;
      } else if (type == "float64") {
        obj.grid.values = read_raw<double>(bytes, expected);
        width = 8;
      } else if (type == "uint8") {
        for (auto v : bytes) obj.grid.values.push_back(v);
        width = 1;
      } else if (type == "uint16") {
        for (auto v : read_raw<std::uint16_t>(bytes, expected)) obj.grid.values.push_back(v);
        width = 2;
      } else {
        throw Error(ErrorCode::Validation, "unsupported volume valueType: " + type);
      }
      if (bytes.size() != expected * width)
        throw Error(ErrorCode::Validation, "volume raw file holds " + std::to_string(bytes.size() / width) +
                                               " values, header declares " + std::to_string(expected));
    } else {
      throw Error(ErrorCode::Validation, "volume header needs \"values\" or \"raw\"");
    }
    if (obj.grid.values.size() != expected)
      throw Error(ErrorCode::Validation, "volume declares " + std::to_string(obj.grid.dims[0]) + "x" +
                                             std::to_string(obj.grid.dims[1]) + "x" + std::to_string(obj.grid.dims[2]) +
                                             " = " + std::to_string(expected) + " values but has " +
                                             std::to_string(obj.grid.values.size()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("volume header: ") + e.what());
  }
  obj.scalars[name] = obj.grid.values;
  obj.finalize();
  return obj;
}

DataObject load_data_object(const fs::path& path, std::string format, const fs::path& variables) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const std::string text = read_text_file(path);
  if (format.empty()) {
    if (ext == ".obj") format = "obj";
    else if (ext == ".csv") format = "csv";
    else if (ext == ".json") format = text.find("\"dims\"") != std::string::npos ? "volume" : "polyline";
    else throw Error(ErrorCode::InvalidArgument, "cannot infer data format of " + path.string());
  }
  DataObject obj;
  try {
    if (format == "obj") {
      obj.kind = DataKind::Mesh;
      obj.mesh = mesh::parse_obj(text);
      if (!variables.empty()) {
        CsvTable t = parse_csv(read_text_file(variables));
        take_variables(t, {}, obj);
      }
    } else if (format == "csv") {
      obj = parse_point_csv(text);
    } else if (format == "polyline") {
      obj = parse_polyline_json(text);
    } else if (format == "volume") {
      obj = parse_volume_json(text, path.parent_path());
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown data format: " + format);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Parse) throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    throw;
  }
  obj.id = path.stem().string();
  obj.source = {format, path.string(), variables.string()};
  obj.finalize();
  return obj;
}

double normalize(double value, const DataRange& range) {
  if (!(value > range.min)) return 0.0;
  if (!(value < range.max)) return 1.0;
  return (value - range.min) / (range.max - range.min);
}

DataRange range_of(const std::vector<double>& values) {
  DataRange r{0.0, 1.0};
  if (values.empty()) return r;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  r.min = *lo;
  r.max = *hi;
  if (!(r.max > r.min)) r.max = r.min + 1.0;
  return r;
}

void Camera::validate() const {
  const Vec3 f = lookAt - position;
  if (!(f.norm() > 1e-12)) throw Error(ErrorCode::Validation, "camera position equals look-at point");
  if (!(f.normalized().cross(up).norm() > 1e-9)) throw Error(ErrorCode::Validation, "camera up is parallel to view");
  if (!(fovY > 0.0 && fovY < 180.0)) throw Error(ErrorCode::Validation, "camera fov must be in (0, 180)");
  if (width < 1 || height < 1) throw Error(ErrorCode::Validation, "camera image size must be positive");
}

const DataObject* Scene::data(const std::string& id) const {
  for (const auto& d : dataObjects)
    if (d->id == id) return d.get();
  return nullptr;
}

const Asset* Scene::asset(const std::string& id) const {
  auto it = assets.find(id);
  return it == assets.end() ? nullptr : it->second.get();
}

std::vector<Diagnostic> validate_layer(const Scene& scene, const VisLayer& layer) {
  std::vector<Diagnostic> out;
  auto diag = [&](const std::string& msg) { out.push_back({layer.id, msg}); };
  using assets::AssetKind;

  const DataObject* data = scene.data(layer.dataObject);
  if (!data) diag("data object '" + layer.dataObject + "' not found");

  if (data) {
    const DataKind k = data->kind;
    const bool ok = layer.type == LayerType::Glyph || (layer.type == LayerType::Line && k == DataKind::LineSet) ||
                    (layer.type == LayerType::Surface && k == DataKind::Mesh) ||
                    (layer.type == LayerType::Volume && k == DataKind::Volume);
    if (!ok)
      diag(std::string(to_string(layer.type)) + " layer cannot bind a " + to_string(k) + " data object '" + data->id +
           "'");
  }

  auto checkBinding = [&](const std::optional<Binding>& b, const char* role, bool vector) {
    if (!b) return;
    if (b->range && !(b->range->min < b->range->max))
      diag(std::string("binding '") + role + "': data range min must be < max");
    if (!data) return;
    const bool isScalar = data->has_scalar(b->variable), isVector = data->has_vector(b->variable);
    if (!isScalar && !isVector)
      diag(std::string("binding '") + role + "': variable '" + b->variable + "' not found on '" + data->id + "'");
    else if (vector && !isVector)
      diag(std::string("binding '") + role + "': variable '" + b->variable + "' must be a vector");
    else if (!vector && !isScalar)
      diag(std::string("binding '") + role + "': variable '" + b->variable + "' must be a scalar");
  };
  checkBinding(layer.color, "color", false);
  checkBinding(layer.texture, "texture", false);
  checkBinding(layer.size, "size", false);
  checkBinding(layer.orientation, "orientation", true);
  checkBinding(layer.density, "density", false);

  auto checkAsset = [&](const std::string& id, const char* role, std::initializer_list<AssetKind> kinds) {
    if (id.empty()) return;
    const Asset* a = scene.asset(id);
    if (!a) {
      diag(std::string(role) + " asset '" + id + "' not found");
      return;
    }
    if (std::find(kinds.begin(), kinds.end(), a->ref.kind) == kinds.end())
      diag(std::string(role) + " asset '" + id + "' has kind " + assets::to_string(a->ref.kind));
  };
  checkAsset(layer.colormap, "colormap", {AssetKind::ColorMap});
  checkAsset(layer.textureSet, "textureSet", {AssetKind::TextureSet, AssetKind::Texture, AssetKind::LineTexture});
  checkAsset(layer.glyph, "glyph", {AssetKind::Glyph});
  checkAsset(layer.alphaMask, "alphaMask", {AssetKind::AlphaMask, AssetKind::Texture});
  checkAsset(layer.normalMap, "normalMap", {AssetKind::NormalMap});

  if (layer.color && layer.colormap.empty()) diag("binding 'color' requires a colormap");
  if (layer.texture && layer.textureSet.empty()) diag("binding 'texture' requires a textureSet");
  if (layer.type == LayerType::Glyph && layer.glyph.empty()) diag("glyph layer requires a glyph asset");
  if (layer.type == LayerType::Volume && layer.colormap.empty()) diag("volume layer requires a colormap");
  if (layer.type == LayerType::Volume && data && data->kind == DataKind::Volume && !layer.color &&
      data->scalars.empty())
    diag("volume layer has no scalar to render");

  static const std::set<std::string> kSampling{"data", "regular", "random", "density"};
  static const std::set<std::string> kOrientation{"vector", "axis", "random"};
  if (!kSampling.count(layer.samplingMethod)) diag("unknown samplingMethod '" + layer.samplingMethod + "'");
  if (!kOrientation.count(layer.orientationMode)) diag("unknown orientationMode '" + layer.orientationMode + "'");
  if (layer.lineStyle != "ribbon" && layer.lineStyle != "tube") diag("unknown lineStyle '" + layer.lineStyle + "'");
  if (layer.lineSampling != "arc-length" && layer.lineSampling != "integration-time")
    diag("unknown lineSampling '" + layer.lineSampling + "'");
  if (layer.type == LayerType::Glyph && layer.samplingMethod == "density") {
    if (!layer.density) diag("density sampling requires a 'density' binding");
    if (data && data->kind != DataKind::Volume && data->kind != DataKind::Mesh)
      diag("density sampling needs a mesh or volume data object");
  }
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) diag(std::string(name) + " must be > 0");
  };
  auto nonneg = [&](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) diag(std::string(name) + " must be >= 0");
  };
  positive(layer.glyphSizePercent, "glyphSizePercent");
  positive(layer.projectionBlendFactor, "projectionBlendFactor");
  positive(layer.textureScale, "textureScale");
  positive(layer.ribbonWidth, "ribbonWidth");
  positive(layer.tubeRadius, "tubeRadius");
  nonneg(layer.blendDistance, "blendDistance");
  nonneg(layer.samplingSpacing, "samplingSpacing");
  nonneg(layer.lineStep, "lineStep");
  nonneg(layer.opacityScale, "opacityScale");
  nonneg(layer.stepSize, "stepSize");
  if (layer.sampleCount < 0) diag("sampleCount must be >= 0");
  if (!std::isfinite(layer.rotationalOffset)) diag("rotationalOffset must be finite");
  return out;
}

std::vector<Diagnostic> validate_scene(const Scene& scene) {
  std::vector<Diagnostic> out;
  try {
    scene.camera.validate();
  } catch (const Error& e) {
    out.push_back({"", e.what()});
  }
  if (scene.layers.empty()) out.push_back({"", "no layers"});
  std::set<std::string> ids;
  for (const auto& layer : scene.layers) {
    if (!ids.insert(layer.id).second) out.push_back({layer.id, "duplicate layer id"});
    auto d = validate_layer(scene, layer);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

Scene add_layer(const Scene& scene, VisLayer layer) {
  auto diags = validate_layer(scene, layer);
  for (const auto& l : scene.layers)
    if (l.id == layer.id) diags.push_back({layer.id, "duplicate layer id"});
  if (!diags.empty()) {
    std::string msg = "layer '" + layer.id + "' rejected:";
    for (const auto& d : diags) msg += "\n  " + d.message;
    throw Error(ErrorCode::Validation, msg);
  }
  layer.bins = 0;
  if (const Asset* a = scene.asset(layer.textureSet)) {
    if (const auto* set = std::get_if<tex::TextureSet>(&a->value)) layer.bins = static_cast<int>(set->size());
    else layer.bins = 1;
  }
  Scene out = scene;
  out.layers.push_back(std::move(layer));
  return out;
}

namespace {

json binding_json(const Binding& b) {
  json j{{"variable", b.variable}};
  if (b.range) j["range"] = json::array({b.range->min, b.range->max});
  return j;
}

std::optional<Binding> parse_binding(const json& layer, const char* key) {
  if (!layer.contains(key) || layer[key].is_null()) return std::nullopt;
  const json& j = layer[key];
  Binding b;
  if (j.is_string()) {
    b.variable = j.get<std::string>();
    return b;
  }
  b.variable = j.at("variable").get<std::string>();
  if (j.contains("range")) b.range = DataRange{j["range"].at(0).get<double>(), j["range"].at(1).get<double>()};
  return b;
}

json rgb_json(color::Rgb8 c) { return json::array({c.r, c.g, c.b}); }
color::Rgb8 parse_rgb(const json& j) {
  if (j.is_string()) return color::parse_hex(j.get<std::string>());
  return {j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

json camera_json(const Camera& c) {
  return json{{"position", json_of(c.position)}, {"lookAt", json_of(c.lookAt)}, {"up", json_of(c.up)},
              {"fovY", c.fovY},                  {"width", c.width},            {"height", c.height}};
}

Camera camera_from(const json& j) {
  Camera c;
  if (j.contains("position")) c.position = vec3_of(j["position"]);
  if (j.contains("lookAt")) c.lookAt = vec3_of(j["lookAt"]);
  if (j.contains("up")) c.up = vec3_of(j["up"]);
  c.fovY = j.value("fovY", c.fovY);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  return c;
}

json layer_json(const VisLayer& l) {
  json j{{"id", l.id},
         {"type", to_string(l.type)},
         {"dataObject", l.dataObject},
         {"baseColor", rgb_json(l.baseColor)},
         {"glyphSizePercent", l.glyphSizePercent},
         {"orientationMode", l.orientationMode},
         {"samplingMethod", l.samplingMethod},
         {"samplingSpacing", l.samplingSpacing},
         {"sampleCount", l.sampleCount},
         {"blendDistance", l.blendDistance},
         {"projectionBlendFactor", l.projectionBlendFactor},
         {"textureScale", l.textureScale},
         {"lineStyle", l.lineStyle},
         {"ribbonWidth", l.ribbonWidth},
         {"tubeRadius", l.tubeRadius},
         {"rotationalOffset", l.rotationalOffset},
         {"lineSampling", l.lineSampling},
         {"lineStep", l.lineStep},
         {"opacityScale", l.opacityScale},
         {"stepSize", l.stepSize}};
  const std::pair<const char*, const std::optional<Binding>*> bindings[] = {
      {"color", &l.color}, {"texture", &l.texture}, {"size", &l.size}, {"orientation", &l.orientation},
      {"density", &l.density}};
  for (const auto& [key, b] : bindings)
    if (*b) j[key] = binding_json(**b);
  const std::pair<const char*, const std::string*> refs[] = {{"colormap", &l.colormap},
                                                             {"textureSet", &l.textureSet},
                                                             {"glyph", &l.glyph},
                                                             {"alphaMask", &l.alphaMask},
                                                             {"normalMap", &l.normalMap}};
  for (const auto& [key, v] : refs)
    if (!v->empty()) j[key] = *v;
  return j;
}

VisLayer layer_from(const json& j) {
  VisLayer l;
  l.id = j.at("id").get<std::string>();
  l.type = parse_layer_type(j.at("type").get<std::string>());
  l.dataObject = j.at("dataObject").get<std::string>();
  l.color = parse_binding(j, "color");
  l.texture = parse_binding(j, "texture");
  l.size = parse_binding(j, "size");
  l.orientation = parse_binding(j, "orientation");
  l.density = parse_binding(j, "density");
  l.colormap = j.value("colormap", "");
  l.textureSet = j.value("textureSet", "");
  l.glyph = j.value("glyph", "");
  l.alphaMask = j.value("alphaMask", "");
  l.normalMap = j.value("normalMap", "");
  if (j.contains("baseColor")) l.baseColor = parse_rgb(j["baseColor"]);
  l.glyphSizePercent = j.value("glyphSizePercent", l.glyphSizePercent);
  l.orientationMode = j.value("orientationMode", l.orientationMode);
  l.samplingMethod = j.value("samplingMethod", l.samplingMethod);
  l.samplingSpacing = j.value("samplingSpacing", l.samplingSpacing);
  l.sampleCount = j.value("sampleCount", l.sampleCount);
  l.blendDistance = j.value("blendDistance", l.blendDistance);
  l.projectionBlendFactor = j.value("projectionBlendFactor", l.projectionBlendFactor);
  l.textureScale = j.value("textureScale", l.textureScale);
  l.lineStyle = j.value("lineStyle", l.lineStyle);
  l.ribbonWidth = j.value("ribbonWidth", l.ribbonWidth);
  l.tubeRadius = j.value("tubeRadius", l.tubeRadius);
  l.rotationalOffset = j.value("rotationalOffset", l.rotationalOffset);
  l.lineSampling = j.value("lineSampling", l.lineSampling);
  l.lineStep = j.value("lineStep", l.lineStep);
  l.opacityScale = j.value("opacityScale", l.opacityScale);
  l.stepSize = j.value("stepSize", l.stepSize);
  return l;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

assets::LoadedAsset load_asset_file(const fs::path& path, assets::AssetKind kind) {
  switch (kind) {
    case assets::AssetKind::ColorMap: return color::parse_colormap_xml(read_text_file(path));
    case assets::AssetKind::TextureSet: return tex::load_texture_set(path);
    case assets::AssetKind::Glyph: return mesh::load_glyph_asset(path);
    default: return load_image(path);
  }
}

}  // namespace

Scene parse_scene(std::string_view text, const fs::path& baseDir, const fs::path& libraryRoot) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, "scene: offset " + std::to_string(e.byte) + ": " + e.what());
  }
  Scene s;
  s.baseDir = baseDir;
  try {
    s.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("camera")) s.camera = camera_from(doc["camera"]);
    if (doc.contains("background")) s.background = parse_rgb(doc["background"]);
    if (doc.contains("light")) {
      const auto& l = doc["light"];
      if (l.contains("direction")) s.light.direction = vec3_of(l["direction"]);
      s.light.ambient = l.value("ambient", s.light.ambient);
    }
    s.library = doc.value("library", "");
    std::unique_ptr<assets::Library> lib;
    const fs::path libRoot = !libraryRoot.empty() ? libraryRoot
                             : s.library.empty()  ? fs::path()
                                                  : resolve(baseDir, s.library);

    if (doc.contains("dataObjects")) {
      std::set<std::string> ids;
      for (const auto& d : doc["dataObjects"]) {
        const std::string id = d.at("id").get<std::string>();
        if (!ids.insert(id).second) throw Error(ErrorCode::Validation, "duplicate data object id '" + id + "'");
        const std::string path = d.at("path").get<std::string>();
        const std::string vars = d.value("variables", "");
        auto obj = load_data_object(resolve(baseDir, path), d.value("format", ""),
                                    vars.empty() ? fs::path() : resolve(baseDir, vars));
        obj.id = id;
        obj.source.path = path;
        obj.source.variables = vars;
        s.dataObjects.push_back(std::make_shared<const DataObject>(std::move(obj)));
      }
    }
    if (doc.contains("assets")) {
      for (const auto& a : doc["assets"]) {
        AssetRef ref;
        ref.id = a.at("id").get<std::string>();
        ref.kind = assets::parse_kind(a.at("kind").get<std::string>());
        ref.path = a.value("path", "");
        ref.libraryId = a.value("library", "");
        std::shared_ptr<const Asset> asset;
        if (!ref.libraryId.empty()) {
          if (libRoot.empty())
            throw Error(ErrorCode::Validation, "asset '" + ref.id + "' references the library but none is set");
          if (!lib) lib = std::make_unique<assets::Library>(libRoot);
          const auto rec = lib->record(ref.libraryId);
          if (rec.kind != ref.kind)
            throw Error(ErrorCode::Validation, "asset '" + ref.id + "' is declared " + assets::to_string(ref.kind) +
                                                   " but the library has " + assets::to_string(rec.kind));
          asset = std::make_shared<const Asset>(Asset{ref, lib->load(ref.libraryId)});
        } else {
          if (ref.path.empty()) throw Error(ErrorCode::Validation, "asset '" + ref.id + "' has no path");
          asset = std::make_shared<const Asset>(Asset{ref, load_asset_file(resolve(baseDir, ref.path), ref.kind)});
        }
        if (!s.assets.emplace(asset->ref.id, asset).second)
          throw Error(ErrorCode::Validation, "duplicate asset id '" + asset->ref.id + "'");
      }
    }
    if (doc.contains("layers"))
      for (const auto& l : doc["layers"]) {
        VisLayer layer = layer_from(l);
        if (const Asset* a = s.asset(layer.textureSet)) {
          const auto* set = std::get_if<tex::TextureSet>(&a->value);
          layer.bins = set ? static_cast<int>(set->size()) : 1;
        }
        s.layers.push_back(std::move(layer));
      }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("scene: ") + e.what());
  }
  return s;
}

Scene load_scene(const fs::path& path, const fs::path& libraryRoot) {
  return parse_scene(read_text_file(path), path.parent_path(), libraryRoot);
}

std::string serialize_scene(const Scene& s) {
  json doc;
  doc["seed"] = s.seed;
  doc["camera"] = camera_json(s.camera);
  doc["background"] = rgb_json(s.background);
  doc["light"] = json{{"direction", json_of(s.light.direction)}, {"ambient", s.light.ambient}};
  if (!s.library.empty()) doc["library"] = s.library;
  json data = json::array();
  for (const auto& d : s.dataObjects) {
    json j{{"id", d->id}, {"format", d->source.format}, {"path", d->source.path}};
    if (!d->source.variables.empty()) j["variables"] = d->source.variables;
    data.push_back(j);
  }
  doc["dataObjects"] = data;
  json assetArr = json::array();
  for (const auto& [id, a] : s.assets) {
    json j{{"id", id}, {"kind", assets::to_string(a->ref.kind)}};
    if (!a->ref.libraryId.empty()) j["library"] = a->ref.libraryId;
    else j["path"] = a->ref.path;
    assetArr.push_back(j);
  }
  doc["assets"] = assetArr;
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back(layer_json(l));
  doc["layers"] = layers;
  return doc.dump(2) + "\n";
}

Camera parse_camera(std::string_view text) {
  try {
    json j = json::parse(text);
    if (j.contains("camera")) j = j["camera"];
    const Camera c = camera_from(j);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("camera: ") + e.what());
  }
}

std::string serialize_camera(const Camera& camera) { return camera_json(camera).dump(2) + "\n"; }

std::string diagnostics_json(const std::vector<Diagnostic>& diagnostics) {
  json arr = json::array();
  for (const auto& d : diagnostics) arr.push_back({{"layer", d.layer}, {"message", d.message}});
  return arr.dump();
}

}  // namespace abr::scene
