#include "service.hpp"

#include "requests.hpp"

#include "abr/scene.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace abr::service {

namespace fs = std::filesystem;
using api::json;

namespace {

/// Error with a structured `details` member for the response body.
class DetailedError : public Error {
 public:
  DetailedError(ErrorCode code, const std::string& message, json details)
      : Error(code, message), details_(std::move(details)) {}
  const json& details() const { return details_; }

 private:
  json details_;
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Parse:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Validation:
      return 422;
    case ErrorCode::Integrity:
    case ErrorCode::Io:
      return 500;
  }
  return 500;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

using Handler = std::function<void(const httplib::Request&, const json&, httplib::Response&)>;

/// Parses the JSON body (POST only) and maps exceptions onto error responses.
httplib::Server::Handler wrap(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = req.method == "POST" ? api::parse_body(req.body) : json::object();
      fn(req, body, res);
    } catch (const DetailedError& e) {
      send_json(res, api::error_json(to_string(e.code()), e.what(), e.details()), http_status(e.code()));
    } catch (const Error& e) {
      send_json(res, api::error_json(to_string(e.code()), e.what()), http_status(e.code()));
    } catch (const std::exception& e) {
      send_json(res, api::error_json("internal_error", e.what()), 500);
    }
  };
}

std::string png_b64(const Image& img) { return api::base64_encode(encode_png(img)); }

Image image_field(const json& body, const char* key = "image") {
  return decode_image(api::base64_decode(api::get<std::string>(body, key)));
}

tex::TextureImage texture_field(const json& body) {
  tex::TextureImage img(image_field(body));
  if (body.contains("crop")) {
    const json& c = body["crop"];
    img = tex::crop(img, {api::get<int>(c, "x"), api::get<int>(c, "y"), api::get<int>(c, "width"),
                          api::get<int>(c, "height")});
  }
  return img;
}

json bounds_json(const mesh::Aabb& b) { return json{{"min", api::vec3_json(b.min)}, {"max", api::vec3_json(b.max)}}; }

/// Scratch directory removed on scope exit.
class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<std::uint64_t> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const auto tag = mix_seed(static_cast<std::uint64_t>(stamp), counter++);
    path_ = fs::temp_directory_path() / ("abr-upload-" + std::to_string(tag));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Upload file names are plain relative paths without parent references.
fs::path safe_relative(const std::string& name) {
  const fs::path p(name);
  if (name.empty() || p.is_absolute() || p.has_root_name())
    throw Error(ErrorCode::InvalidArgument, "invalid upload file name '" + name + "'");
  for (const auto& part : p)
    if (part == "..") throw Error(ErrorCode::InvalidArgument, "invalid upload file name '" + name + "'");
  return p;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_relative() ? base / path : path;
}

std::pair<int, int> size_field(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    const auto x = s.find('x');
    try {
      if (x != std::string::npos) return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidArgument, "size must look like WxH");
  }
  if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
  throw Error(ErrorCode::InvalidArgument, "size must be \"WxH\" or [w, h]");
}

Eigen::Quaterniond quat_field(const json& body, const char* key) {
  const auto q = api::get<std::vector<double>>(body, key);
  if (q.size() != 4) throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' must be [w, x, y, z]");
  Eigen::Quaterniond r(q[0], q[1], q[2], q[3]);
  if (!(r.norm() > 0.0)) throw Error(ErrorCode::InvalidArgument, "rotation quaternion must be non-zero");
  return r.normalized();
}

void send_render(httplib::Response& res, const render::RenderResult& r, const std::string& format) {
  json pixels = json::array();
  for (auto n : r.layerPixels) pixels.push_back(n);
  if (format == "json") {
    send_json(res, {{"image", png_b64(r.color)},
                    {"width", r.color.width},
                    {"height", r.color.height},
                    {"layerPixels", pixels},
                    {"triangles", r.triangles},
                    {"instances", r.instances}});
    return;
  }
  if (format != "png") throw Error(ErrorCode::InvalidArgument, "format must be 'png' or 'json'");
  const auto png = encode_png(r.color);
  res.status = 200;
  res.set_header("X-Abr-Layer-Pixels", pixels.dump());
  res.set_content(std::string(png.begin(), png.end()), "image/png");
}

const char* content_type(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".json") return "application/json";
  if (ext == ".xml") return "application/xml";
  return "text/plain";
}

}  // namespace

Config config_from_env() {
  Config c;
  if (const char* root = std::getenv("ABR_LIBRARY_ROOT"); root && *root) c.libraryRoot = root;
  if (const char* origin = std::getenv("ABR_CORS_ORIGIN"); origin && *origin) c.corsOrigin = origin;
  return c;
}

scene::DataObject helix_field(int count) {
  scene::DataObject obj;
  obj.id = "helix";
  obj.kind = scene::DataKind::PointSet;
  auto& dirs = obj.vectors["direction"];
  auto& param = obj.scalars["t"];
  const double turns = 3.0, radius = 1.0, height = 3.0;
  for (int i = 0; i < count; ++i) {
    const double t = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    const double a = 2.0 * std::numbers::pi * turns * t;
    obj.points.emplace_back(radius * std::cos(a), radius * std::sin(a), height * (t - 0.5));
    dirs.push_back(Vec3(-radius * std::sin(a) * 2.0 * std::numbers::pi * turns,
                        radius * std::cos(a) * 2.0 * std::numbers::pi * turns, height)
                       .normalized());
    param.push_back(t);
  }
  obj.finalize();
  return obj;
}

render::RenderResult render_glyph_preview(const mesh::TriMesh& glyph, int width, int height, int threads) {
  mesh::GlyphAsset asset;
  asset.name = "preview";
  asset.canonical = glyph;
  if (!asset.canonical.has_normals()) asset.canonical.normals = mesh::compute_vertex_normals(asset.canonical);
  mesh::LodLevel lod;
  lod.mesh = asset.canonical;
  lod.vertexCount = mesh::unique_position_count(lod.mesh);
  lod.target = static_cast<int>(lod.vertexCount);
  asset.lods.push_back(std::move(lod));

  scene::Scene s;
  s.dataObjects.push_back(std::make_shared<const scene::DataObject>(helix_field()));
  s.assets["glyph"] = std::make_shared<const scene::Asset>(
      scene::Asset{{"glyph", assets::AssetKind::Glyph, "", ""}, std::move(asset)});
  const color::ColorMap ramp("preview", {{0.0, color::srgb_to_lab({40, 70, 160})}, {1.0, color::srgb_to_lab({230, 120, 40})}});
  s.assets["ramp"] =
      std::make_shared<const scene::Asset>(scene::Asset{{"ramp", assets::AssetKind::ColorMap, "", ""}, ramp});

  scene::VisLayer layer;
  layer.id = "glyphs";
  layer.type = scene::LayerType::Glyph;
  layer.dataObject = "helix";
  layer.glyph = "glyph";
  layer.colormap = "ramp";
  layer.color = scene::Binding{"t", std::nullopt};
  layer.orientation = scene::Binding{"direction", std::nullopt};
  layer.glyphSizePercent = 8.0;
  s = scene::add_layer(s, layer);

  s.camera.position = {0.0, -6.5, 1.5};
  s.camera.lookAt = {0.0, 0.0, 0.0};
  s.camera.up = {0.0, 0.0, 1.0};
  s.camera.fovY = 40.0;
  s.camera.width = width;
  s.camera.height = height;
  s.camera.validate();
  render::RenderOptions opt;
  opt.threads = threads;
  return render::render_scene(s, s.camera, opt);
}

void install_routes(httplib::Server& server, const Config& config) {
  server.set_default_headers({{"Access-Control-Allow-Origin", config.corsOrigin},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Expose-Headers", "X-Abr-Layer-Pixels"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  std::shared_ptr<assets::Library> library;
  if (!config.libraryRoot.empty()) library = std::make_shared<assets::Library>(config.libraryRoot);
  auto lib = [library]() -> assets::Library& {
    if (!library) throw Error(ErrorCode::NotFound, "no asset library configured (set ABR_LIBRARY_ROOT)");
    return *library;
  };
  const fs::path baseDir = config.baseDir;

  server.Get("/health", wrap([](const auto&, const json&, httplib::Response& res) { send_json(res, {{"status", "ok"}}); }));

  server.Post("/palette", wrap([](const auto&, const json& body, httplib::Response& res) {
                const int count = api::get_or(body, "count", color::kDefaultPaletteSize);
                send_json(res, {{"swatches", api::swatches_json(color::extract_palette(image_field(body), count))}});
              }));

  server.Post("/colormap/sample", wrap([](const auto&, const json& body, httplib::Response& res) {
                const auto map = api::colormap_from_json(api::get<json>(body, "colormap"));
                json samples = json::array();
                const json& t = body.contains("t") ? body["t"] : json();
                if (t.is_number()) {
                  samples.push_back(api::color_sample_json(color::sample_colormap(map, t.get<double>())));
                } else if (t.is_array()) {
                  for (const auto& v : t) {
                    if (!v.is_number()) throw Error(ErrorCode::InvalidArgument, "'t' entries must be numbers");
                    samples.push_back(api::color_sample_json(color::sample_colormap(map, v.get<double>())));
                  }
                } else {
                  throw Error(ErrorCode::InvalidArgument, "'t' must be a number or an array of numbers");
                }
                send_json(res, {{"samples", samples}});
              }));

  server.Post("/colormap/export", wrap([](const auto&, const json& body, httplib::Response& res) {
                const auto map = api::colormap_from_json(api::get<json>(body, "colormap"));
                send_json(res, {{"xml", color::export_colormap_xml(map)},
                                {"png", png_b64(color::export_colormap_png_strip(map))},
                                {"colormap", api::colormap_json(map)}});
              }));

  server.Post("/texture/normalmap", wrap([](const auto&, const json& body, httplib::Response& res) {
                const double strength = api::get_or(body, "strength", tex::kDefaultNormalStrength);
                send_json(res, {{"image", png_b64(tex::make_normal_map(texture_field(body), strength).pixels)}});
              }));

  server.Post("/texture/tile", wrap([](const auto&, const json& body, httplib::Response& res) {
                const auto tile = tex::tile_preview(texture_field(body), api::get_or(body, "nx", 1), api::get_or(body, "ny", 1));
                send_json(res, {{"image", png_b64(tile.pixels)}});
              }));

  server.Post("/synthesize", wrap([](const auto&, const json& body, httplib::Response& res) {
                const auto params = api::synthesis_params_from_json(body.contains("params") ? body["params"] : json::object());
                const auto result = line::synthesize(texture_field(body), params);
                json out{{"image", png_b64(result.image.pixels)}, {"loopStart", result.loopStart}, {"rows", result.rows}};
                if (const int tiles = api::get_or(body, "previewTiles", 0); tiles > 0)
                  out["preview"] = png_b64(tex::tile_preview(result.image, 1, tiles).pixels);
                send_json(res, out);
              }));

  server.Post("/mesh/orient", wrap([](const auto&, const json& body, httplib::Response& res) {
                const auto r = mesh::orient_mesh(mesh::parse_obj(api::get<std::string>(body, "obj")),
                                                 api::vec3_field(body, "forward"), api::vec3_field(body, "up"));
                const auto& q = r.orientation.rotation;
                send_json(res, {{"obj", mesh::to_obj(r.mesh)},
                                {"rotation", {q.w(), q.x(), q.y(), q.z()}},
                                {"centroid", api::vec3_json(r.centroid)},
                                {"bounds", bounds_json(r.mesh.bounds())}});
              }));

  server.Post("/mesh/lod", wrap([lib](const auto&, const json& body, httplib::Response& res) {
                const auto targets = api::get_or<std::vector<int>>(body, "targets", mesh::kDefaultLodTargets);
                const int resolution = api::get_or(body, "resolution", mesh::kDefaultAtlasResolution);
                const auto name = api::get_or<std::string>(body, "name", "glyph");
                const auto asset =
                    mesh::build_lod_chain(mesh::parse_obj(api::get<std::string>(body, "obj")), targets, resolution, name);
                json lods = json::array();
                for (const auto& l : asset.lods)
                  lods.push_back({{"target", l.target},
                                  {"vertexCount", l.vertexCount},
                                  {"targetReached", l.targetReached},
                                  {"obj", mesh::to_obj(l.mesh)},
                                  {"normalMap", png_b64(l.normalMap.pixels)}});
                json out{{"name", asset.name}, {"lods", lods}};
                if (body.contains("register")) {
                  ScratchDir dir;
                  mesh::save_glyph_asset(asset, dir.path() / "glyph.json");
                  const auto meta = assets::metadata_from_json(body["register"].dump());
                  out["record"] = api::record_json(lib().register_asset(dir.path() / "glyph.json", assets::AssetKind::Glyph, meta));
                }
                send_json(res, out);
              }));

  server.Post("/sample", wrap([baseDir](const auto&, const json& body, httplib::Response& res) {
                send_json(res, api::sample_set_json(api::run_sample_request(body, baseDir)));
              }));

  server.Get("/assets", wrap([lib](const httplib::Request& req, const json&, httplib::Response& res) {
               json q = json::object();
               if (req.has_param("kind")) q["kind"] = req.get_param_value("kind");
               if (req.has_param("material")) q["materialType"] = req.get_param_value("material");
               if (req.has_param("text")) q["text"] = req.get_param_value("text");
               if (req.has_param("use")) {
                 json tags = json::array();
                 std::string use = req.get_param_value("use");
                 std::size_t start = 0;
                 while (start <= use.size()) {
                   const auto comma = std::min(use.find(',', start), use.size());
                   if (comma > start) tags.push_back(use.substr(start, comma - start));
                   start = comma + 1;
                 }
                 q["useTags"] = tags;
               }
               send_json(res, {{"records", api::records_json(lib().query(assets::query_from_json(q.dump())))}});
             }));

  server.Get(R"(/assets/([0-9A-Za-z_-]+))", wrap([lib](const httplib::Request& req, const json&, httplib::Response& res) {
               send_json(res, api::record_json(lib().record(req.matches[1])));
             }));

  server.Get(R"(/assets/([0-9A-Za-z_-]+)/payload)",
             wrap([lib](const httplib::Request& req, const json&, httplib::Response& res) {
               const auto path = lib().verified_path(req.matches[1]);
               const auto bytes = read_file(path);
               res.status = 200;
               res.set_content(std::string(bytes.begin(), bytes.end()), content_type(path));
             }));

  server.Post("/assets", wrap([lib](const auto&, const json& body, httplib::Response& res) {
                const auto kind = assets::parse_kind(api::get<std::string>(body, "kind"));
                const auto meta = assets::metadata_from_json(api::get<json>(body, "metadata").dump());
                const auto files = api::get<json>(body, "files");
                if (!files.is_object() || files.empty())
                  throw Error(ErrorCode::InvalidArgument, "'files' must map file names to base64 payloads");
                ScratchDir dir;
                for (auto it = files.begin(); it != files.end(); ++it) {
                  if (!it->is_string())
                    throw Error(ErrorCode::InvalidArgument, "file '" + it.key() + "' must be base64 text");
                  write_file_atomic(dir.path() / safe_relative(it.key()), api::base64_decode(it->get_ref<const std::string&>()));
                }
                const auto main = api::get_or<std::string>(body, "main", files.begin().key());
                send_json(res, api::record_json(lib().register_asset(dir.path() / safe_relative(main), kind, meta)), 201);
              }));

  server.Post("/render", wrap([baseDir, config](const auto&, const json& body, httplib::Response& res) {
                const auto format = api::get_or<std::string>(body, "format", "png");
                const int threads = api::get_or(body, "threads", 0);
                if (body.contains("glyphPreview")) {
                  const json& g = body["glyphPreview"];
                  auto glyph = mesh::parse_obj(api::get<std::string>(g, "obj"));
                  if (g.contains("rotation")) {
                    const auto q = quat_field(g, "rotation");
                    const Vec3 c = glyph.bounds().center();
                    for (auto& p : glyph.positions) p = q * (p - c);
                    glyph.normals.clear();
                  }
                  auto [w, h] = body.contains("size") ? size_field(body["size"]) : std::pair{256, 256};
                  send_render(res, render_glyph_preview(glyph, w, h, threads), format);
                  return;
                }
                const json& sceneField = body.contains("scene") ? body["scene"] : json();
                std::string sceneText;
                if (sceneField.is_object()) sceneText = sceneField.dump();
                else if (sceneField.is_string()) sceneText = sceneField.get<std::string>();
                else throw Error(ErrorCode::InvalidArgument, "'scene' must be a scene object or JSON text");
                const fs::path dir = resolve(baseDir, api::get_or<std::string>(body, "baseDir", "."));
                const auto scene = scene::parse_scene(sceneText, dir, config.libraryRoot);
                if (const auto diags = scene::validate_scene(scene); !diags.empty())
                  throw DetailedError(ErrorCode::Validation, "scene is not renderable",
                                      {{"diagnostics", json::parse(scene::diagnostics_json(diags))}});
                auto camera = body.contains("camera") ? scene::parse_camera(body["camera"].dump()) : scene.camera;
                if (body.contains("size")) {
                  std::tie(camera.width, camera.height) = size_field(body["size"]);
                  camera.validate();
                }
                render::RenderOptions opt;
                opt.threads = threads;
                if (body.contains("seed")) opt.seed = api::get<std::uint64_t>(body, "seed");
                send_render(res, render::render_scene(scene, camera, opt), format);
              }));

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_json(res, api::error_json("internal_error", "unhandled exception"), 500);
  });
}

Server::Server(Config config) : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  if (config_.threads > 0) {
    const auto n = static_cast<std::size_t>(config_.threads);
    server_->new_task_queue = [n] { return new httplib::ThreadPool(n); };
  }
  install_routes(*server_, config_);
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  if (thread_.joinable()) throw Error(ErrorCode::InvalidArgument, "server already running");
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Server::run(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  server_->listen_after_bind();
}

void Server::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace abr::service
