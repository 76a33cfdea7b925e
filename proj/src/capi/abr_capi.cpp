#include "abr/abr.h"

#include "abr/assetlib.hpp"
#include "abr/color.hpp"
#include "abr/linesynth.hpp"
#include "abr/mesh.hpp"
#include "abr/render.hpp"
#include "abr/sampling.hpp"
#include "abr/scene.hpp"
#include "abr/texture.hpp"

#include "service/requests.hpp"
#include "service/service.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>

using namespace abr;
namespace fs = std::filesystem;

// Handles carry a magic word so stale or foreign pointers fail with an error
// instead of being used as the wrong type.
template <typename T, std::uint32_t Magic>
struct Handle {
  static constexpr std::uint32_t kMagic = Magic;
  std::uint32_t magic = Magic;
  T value;

  explicit Handle(T v) : value(std::move(v)) {}
  ~Handle() { magic = 0; }
};

struct abr_image_t : Handle<Image, 0x41424931> {
  using Handle::Handle;
};
struct abr_colormap_t : Handle<color::ColorMap, 0x41424332> {
  using Handle::Handle;
};
struct abr_mesh_t : Handle<mesh::TriMesh, 0x41424D33> {
  using Handle::Handle;
};
struct abr_scene_t : Handle<scene::Scene, 0x41425334> {
  using Handle::Handle;
};
struct abr_library_t : Handle<std::unique_ptr<assets::Library>, 0x41424C35> {
  using Handle::Handle;
};
struct abr_server_t : Handle<std::unique_ptr<service::Server>, 0x41425636> {
  using Handle::Handle;
};
struct RenderData {
  render::RenderResult result;
  std::unique_ptr<abr_image_t> color;
};

struct abr_render_t : Handle<RenderData, 0x41425237> {
  using Handle::Handle;
};

namespace {

thread_local std::string g_lastError;

int fail(int status, const std::string& message) {
  g_lastError = message;
  return status;
}

int status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return ABR_INVALID_ARGUMENT;
    case ErrorCode::NotFound:
      return ABR_NOT_FOUND;
    case ErrorCode::Parse:
      return ABR_PARSE;
    case ErrorCode::Validation:
      return ABR_VALIDATION;
    case ErrorCode::Integrity:
      return ABR_INTEGRITY;
    case ErrorCode::Io:
      return ABR_IO;
  }
  return ABR_INTERNAL;
}

template <typename F>
int guard(F&& fn) {
  try {
    g_lastError.clear();
    fn();
    return ABR_OK;
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ABR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ABR_INTERNAL, e.what());
  } catch (...) {
    return fail(ABR_INTERNAL, "unknown exception");
  }
}

template <typename P>
P* need(P* p, const char* name) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string("argument '") + name + "' is null");
  return p;
}

template <typename H>
auto& get(H* h) {
  if (!h || h->magic != H::kMagic) throw Error(ErrorCode::InvalidArgument, "invalid or freed handle");
  return h->value;
}

template <typename H>
void release(H* h) {
  if (h && h->magic == H::kMagic) delete h;
}

template <typename H, typename T>
void put(H** out, T&& value) {
  *out = new H(std::forward<T>(value));
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

fs::path opt_path(const char* p) { return p ? fs::path(p) : fs::path(); }

abr_lab to_c(const color::LabColor& c) { return {c.L, c.a, c.b}; }
color::LabColor from_c(const abr_lab& c) { return {c.L, c.a, c.b}; }

Vec3 vec3(const double* v, const char* name) {
  need(v, name);
  return {v[0], v[1], v[2]};
}

}  // namespace

extern "C" {

const char* abr_version(void) { return "1.0.0"; }

const char* abr_last_error(void) { return g_lastError.c_str(); }

const char* abr_status_name(int status) {
  switch (status) {
    case ABR_OK:
      return "ok";
    case ABR_INVALID_ARGUMENT:
      return "invalid_argument";
    case ABR_NOT_FOUND:
      return "not_found";
    case ABR_PARSE:
      return "parse_error";
    case ABR_VALIDATION:
      return "validation_error";
    case ABR_INTEGRITY:
      return "integrity_error";
    case ABR_IO:
      return "io_error";
    case ABR_INTERNAL:
      return "internal_error";
    default:
      return "unknown";
  }
}

void abr_string_free(char* s) { std::free(s); }

void abr_buffer_free(abr_buffer* buf) {
  if (!buf) return;
  std::free(buf->data);
  buf->data = nullptr;
  buf->size = 0;
}

// ---------------------------------------------------------------------------
// Images

int abr_image_load(const char* path, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, load_image(need(path, "path")));
  });
}

int abr_image_decode(const uint8_t* bytes, size_t size, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, decode_image({need(bytes, "bytes"), size}));
  });
}

int abr_image_create(int width, int height, int channels, const uint8_t* pixels, abr_image* out) {
  return guard([&] {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (channels != 1 && channels != 3 && channels != 4)
      throw Error(ErrorCode::InvalidArgument, "channels must be 1, 3 or 4");
    Image img(width, height, channels);
    if (pixels) std::memcpy(img.data.data(), pixels, img.data.size());
    need(out, "out");
    put(out, std::move(img));
  });
}

int abr_image_save_png(abr_image img, const char* path) {
  return guard([&] { save_png(get(img), need(path, "path")); });
}

int abr_image_encode_png(abr_image img, abr_buffer* out) {
  return guard([&] {
    need(out, "out");
    const auto png = encode_png(get(img));
    out->data = static_cast<uint8_t*>(std::malloc(png.size()));
    if (!out->data) throw std::bad_alloc();
    std::memcpy(out->data, png.data(), png.size());
    out->size = png.size();
  });
}

int abr_image_info(abr_image img, int* width, int* height, int* channels) {
  return guard([&] {
    const auto& i = get(img);
    if (width) *width = i.width;
    if (height) *height = i.height;
    if (channels) *channels = i.channels;
  });
}

const uint8_t* abr_image_data(abr_image img) {
  if (!img || img->magic != abr_image_t::kMagic) return nullptr;
  return img->value.data.data();
}

void abr_image_free(abr_image img) { release(img); }

// ---------------------------------------------------------------------------
// Color

int abr_palette(abr_image img, int count, abr_swatch* swatches, int* n) {
  return guard([&] {
    need(n, "n");
    const auto pal = color::extract_palette(get(img), count <= 0 ? color::kDefaultPaletteSize : count);
    if (static_cast<std::size_t>(*n) < pal.size() || !swatches)
      throw Error(ErrorCode::InvalidArgument, "swatch array holds " + std::to_string(*n) + " entries, need " +
                                                  std::to_string(pal.size()));
    for (std::size_t i = 0; i < pal.size(); ++i) {
      const auto rgb = color::lab_to_srgb(pal[i].color);
      swatches[i] = {to_c(pal[i].color), {rgb.r, rgb.g, rgb.b}, pal[i].population,
                     pal[i].sourcePixel ? pal[i].sourcePixel->x : -1, pal[i].sourcePixel ? pal[i].sourcePixel->y : -1};
    }
    *n = static_cast<int>(pal.size());
  });
}

void abr_srgb_to_lab(const uint8_t rgb[3], abr_lab* out) {
  if (rgb && out) *out = to_c(color::srgb_to_lab({rgb[0], rgb[1], rgb[2]}));
}

void abr_lab_to_srgb(abr_lab lab, uint8_t rgb[3]) {
  if (!rgb) return;
  const auto c = color::lab_to_srgb(from_c(lab));
  rgb[0] = c.r;
  rgb[1] = c.g;
  rgb[2] = c.b;
}

int abr_colormap_create(const char* name, const double* positions, const abr_lab* colors, size_t n, int normalize,
                        abr_colormap* out) {
  return guard([&] {
    need(positions, "positions");
    need(colors, "colors");
    std::vector<color::ControlPoint> pts(n);
    for (size_t i = 0; i < n; ++i) pts[i] = {positions[i], from_c(colors[i])};
    const std::string nm = name ? name : "colormap";
    need(out, "out");
    put(out, normalize ? color::ColorMap::normalized(nm, std::move(pts)) : color::ColorMap(nm, std::move(pts)));
  });
}

int abr_colormap_load(const char* path, abr_colormap* out) {
  return guard([&] {
    need(out, "out");
    put(out, color::parse_colormap_xml(read_text_file(need(path, "path"))));
  });
}

int abr_colormap_parse(const char* xml, abr_colormap* out) {
  return guard([&] {
    need(out, "out");
    put(out, color::parse_colormap_xml(need(xml, "xml")));
  });
}

int abr_colormap_sample(abr_colormap map, double t, abr_lab* out) {
  return guard([&] { *need(out, "out") = to_c(color::sample_colormap(get(map), t)); });
}

int abr_colormap_export_xml(abr_colormap map, char** xml) {
  return guard([&] { *need(xml, "xml") = dup_string(color::export_colormap_xml(get(map))); });
}

int abr_colormap_strip(abr_colormap map, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, color::export_colormap_png_strip(get(map)));
  });
}

void abr_colormap_free(abr_colormap map) { release(map); }

// ---------------------------------------------------------------------------
// Textures

int abr_normal_map(abr_image img, double strength, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, tex::make_normal_map(tex::TextureImage(get(img)), strength).pixels);
  });
}

int abr_crop(abr_image img, int x, int y, int width, int height, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, tex::crop(tex::TextureImage(get(img)), {x, y, width, height}).pixels);
  });
}

int abr_tile(abr_image img, int nx, int ny, abr_image* out) {
  return guard([&] {
    need(out, "out");
    put(out, tex::tile_preview(tex::TextureImage(get(img)), nx, ny).pixels);
  });
}

// ---------------------------------------------------------------------------
// Synthesis

void abr_synth_params_default(abr_synth_params* out) {
  if (!out) return;
  const line::SynthesisParams p;
  *out = {p.jumpProbability, p.minQuality, p.minJumpSize, p.outputHeight, p.seed};
}

int abr_synthesize(abr_image src, const abr_synth_params* params, abr_image* out, int* loop_start) {
  return guard([&] {
    need(params, "params");
    line::SynthesisParams p;
    p.jumpProbability = params->jump_probability;
    p.minQuality = params->min_quality;
    p.minJumpSize = params->min_jump_size;
    p.outputHeight = params->output_height;
    p.seed = params->seed;
    auto r = line::synthesize(tex::TextureImage(get(src)), p);
    if (loop_start) *loop_start = r.loopStart;
    need(out, "out");
    put(out, std::move(r.image.pixels));
  });
}

// ---------------------------------------------------------------------------
// Meshes

int abr_mesh_load_obj(const char* path, abr_mesh* out) {
  return guard([&] {
    need(out, "out");
    put(out, mesh::load_obj(need(path, "path")));
  });
}

int abr_mesh_parse_obj(const char* text, abr_mesh* out) {
  return guard([&] {
    need(out, "out");
    put(out, mesh::parse_obj(need(text, "text")));
  });
}

int abr_mesh_save_obj(abr_mesh m, const char* path) {
  return guard([&] { mesh::save_obj(get(m), need(path, "path")); });
}

int abr_mesh_to_obj(abr_mesh m, char** text) {
  return guard([&] { *need(text, "text") = dup_string(mesh::to_obj(get(m))); });
}

int abr_mesh_info(abr_mesh m, size_t* vertices, size_t* triangles, double bounds[6]) {
  return guard([&] {
    const auto& mm = get(m);
    if (vertices) *vertices = mm.vertex_count();
    if (triangles) *triangles = mm.triangles.size();
    if (bounds) {
      const auto b = mm.bounds();
      for (int i = 0; i < 3; ++i) {
        bounds[i] = b.min[i];
        bounds[3 + i] = b.max[i];
      }
    }
  });
}

int abr_mesh_orient(abr_mesh m, const double forward[3], const double up[3], abr_mesh* out, double quat_wxyz[4]) {
  return guard([&] {
    need(out, "out");
    auto r = mesh::orient_mesh(get(m), vec3(forward, "forward"), vec3(up, "up"));
    if (quat_wxyz) {
      const auto& q = r.orientation.rotation;
      quat_wxyz[0] = q.w();
      quat_wxyz[1] = q.x();
      quat_wxyz[2] = q.y();
      quat_wxyz[3] = q.z();
    }
    put(out, std::move(r.mesh));
  });
}

int abr_mesh_decimate(abr_mesh m, int target_vertices, abr_mesh* out, int* target_reached) {
  return guard([&] {
    need(out, "out");
    auto r = mesh::decimate(get(m), target_vertices);
    if (target_reached) *target_reached = r.targetReached ? 1 : 0;
    put(out, std::move(r.mesh));
  });
}

int abr_mesh_bake(abr_mesh original, abr_mesh lod, int resolution, abr_image* normal_map, abr_mesh* lod_out) {
  return guard([&] {
    need(normal_map, "normal_map");
    const auto& orig = get(original);
    mesh::TriMesh target = get(lod);
    if (!target.has_uvs()) target = mesh::unwrap_uv(target, resolution).mesh;
    if (!target.has_normals()) target.normals = mesh::compute_vertex_normals(target);
    mesh::BakeOptions opt;
    opt.resolution = resolution;
    auto nm = mesh::bake_normal_map(orig, target, opt);
    put(normal_map, std::move(nm.pixels));
    if (lod_out) put(lod_out, std::move(target));
  });
}

int abr_mesh_build_lod(abr_mesh m, const int* targets, size_t n_targets, int resolution, const char* name,
                       const char* manifest_path, char** summary_json) {
  return guard([&] {
    need(targets, "targets");
    need(manifest_path, "manifest_path");
    const auto asset = mesh::build_lod_chain(get(m), std::vector<int>(targets, targets + n_targets), resolution,
                                             name ? name : "glyph");
    mesh::save_glyph_asset(asset, manifest_path);
    if (summary_json) {
      api::json lods = api::json::array();
      for (const auto& l : asset.lods)
        lods.push_back({{"target", l.target}, {"vertexCount", l.vertexCount}, {"targetReached", l.targetReached}});
      *summary_json = dup_string(api::json{{"name", asset.name}, {"manifest", manifest_path}, {"lods", lods}}.dump());
    }
  });
}

void abr_mesh_free(abr_mesh m) { release(m); }

// ---------------------------------------------------------------------------
// Sampling

int abr_sample_json(const char* request_json, char** response_json) {
  return guard([&] {
    const auto req = api::parse_body(need(request_json, "request_json"));
    *need(response_json, "response_json") = dup_string(api::sample_set_json(api::run_sample_request(req, ".")).dump());
  });
}

int abr_sample_to_file(const char* request_json, const char* path, size_t* count) {
  return guard([&] {
    const auto req = api::parse_body(need(request_json, "request_json"));
    const fs::path out = need(path, "path");
    const auto set = api::run_sample_request(req, ".");
    if (out.extension() == ".csv") sampling::save_csv(set, out);
    else write_file_atomic(out, sampling::to_binary(set));
    if (count) *count = set.points.size();
  });
}

// ---------------------------------------------------------------------------
// Scenes and rendering

int abr_scene_load(const char* path, const char* library_root, abr_scene* out) {
  return guard([&] {
    need(out, "out");
    put(out, scene::load_scene(need(path, "path"), opt_path(library_root)));
  });
}

int abr_scene_parse(const char* json, const char* base_dir, const char* library_root, abr_scene* out) {
  return guard([&] {
    need(out, "out");
    put(out, scene::parse_scene(need(json, "json"), base_dir ? fs::path(base_dir) : fs::path("."),
                                opt_path(library_root)));
  });
}

int abr_scene_validate(abr_scene s, char** diagnostics_json) {
  return guard([&] {
    *need(diagnostics_json, "diagnostics_json") = dup_string(scene::diagnostics_json(scene::validate_scene(get(s))));
  });
}

int abr_scene_serialize(abr_scene s, char** json) {
  return guard([&] { *need(json, "json") = dup_string(scene::serialize_scene(get(s))); });
}

void abr_scene_free(abr_scene s) { release(s); }

int abr_render_scene(abr_scene s, const char* camera_json, const abr_render_options* options, abr_render* out) {
  return guard([&] {
    need(out, "out");
    const auto& sc = get(s);
    if (const auto diags = scene::validate_scene(sc); !diags.empty()) {
      std::string msg = "scene is not renderable:";
      for (const auto& d : diags) msg += "\n  " + (d.layer.empty() ? std::string() : d.layer + ": ") + d.message;
      throw Error(ErrorCode::Validation, msg);
    }
    auto camera = camera_json ? scene::parse_camera(camera_json) : sc.camera;
    render::RenderOptions opt;
    if (options) {
      opt.threads = options->threads;
      if (options->has_seed) opt.seed = options->seed;
      if (options->width > 0 || options->height > 0) {
        camera.width = options->width;
        camera.height = options->height;
        camera.validate();
      }
    }
    RenderData data;
    data.result = render::render_scene(sc, camera, opt);
    data.color = std::make_unique<abr_image_t>(data.result.color);
    put(out, std::move(data));
  });
}

abr_image abr_render_color(abr_render r) {
  if (!r || r->magic != abr_render_t::kMagic) return nullptr;
  return r->value.color.get();
}

int abr_render_save_depth(abr_render r, const char* path) {
  return guard([&] {
    const auto& res = get(r).result;
    render::save_depth(res.depth, res.color.width, res.color.height, need(path, "path"));
  });
}

int abr_render_layer_pixels(abr_render r, size_t* counts, size_t* n) {
  return guard([&] {
    need(n, "n");
    const auto& px = get(r).result.layerPixels;
    if (*n < px.size() || !counts)
      throw Error(ErrorCode::InvalidArgument, "layer array holds " + std::to_string(*n) + " entries, need " +
                                                  std::to_string(px.size()));
    std::copy(px.begin(), px.end(), counts);
    *n = px.size();
  });
}

const uint16_t* abr_render_ids(abr_render r) {
  if (!r || r->magic != abr_render_t::kMagic) return nullptr;
  return r->value.result.ids.data();
}

void abr_render_free(abr_render r) { release(r); }

// ---------------------------------------------------------------------------
// Asset library

int abr_library_open(const char* root, abr_library* out) {
  return guard([&] {
    need(out, "out");
    put(out, std::make_unique<assets::Library>(need(root, "root")));
  });
}

int abr_library_register(abr_library lib, const char* path, const char* kind, const char* metadata_json,
                         char** record_json) {
  return guard([&] {
    const auto meta = assets::metadata_from_json(metadata_json ? metadata_json : "{}");
    const auto rec = get(lib)->register_asset(need(path, "path"), assets::parse_kind(need(kind, "kind")), meta);
    if (record_json) *record_json = dup_string(assets::to_json(rec));
  });
}

int abr_library_query(abr_library lib, const char* query_json, char** records_json) {
  return guard([&] {
    const auto q = assets::query_from_json(query_json ? query_json : "{}");
    *need(records_json, "records_json") = dup_string(assets::to_json(get(lib)->query(q)));
  });
}

int abr_library_rebuild(abr_library lib) {
  return guard([&] { get(lib)->rebuild_index(); });
}

void abr_library_free(abr_library lib) { release(lib); }

// ---------------------------------------------------------------------------
// Service

namespace {
service::Config server_config(const char* library_root, const char* base_dir) {
  auto cfg = service::config_from_env();
  if (library_root) cfg.libraryRoot = library_root;
  if (base_dir) cfg.baseDir = base_dir;
  return cfg;
}
}  // namespace

int abr_server_start(const char* host, int port, const char* library_root, const char* base_dir, abr_server* out) {
  return guard([&] {
    need(out, "out");
    auto server = std::make_unique<service::Server>(server_config(library_root, base_dir));
    server->start(host ? host : "127.0.0.1", port);
    put(out, std::move(server));
  });
}

int abr_server_port(abr_server server) {
  if (!server || server->magic != abr_server_t::kMagic) return -1;
  return server->value->port();
}

void abr_server_stop(abr_server server) { release(server); }

int abr_server_run(const char* host, int port, const char* library_root, const char* base_dir) {
  return guard([&] {
    service::Server server(server_config(library_root, base_dir));
    server.run(host ? host : "127.0.0.1", port);
  });
}

}  // extern "C"
