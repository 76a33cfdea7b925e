// Command-line front end over the C API.

#include "abr/abr.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Failure {
  int status;
  std::string message;
};

void check(int status) {
  if (status != ABR_OK) throw Failure{status, abr_last_error()};
}

void usage_error(const std::string& message) { throw Failure{ABR_INVALID_ARGUMENT, message}; }

template <typename H, void (*Free)(H)>
struct Owned {
  H h = nullptr;
  Owned() = default;
  Owned(const Owned&) = delete;
  Owned& operator=(const Owned&) = delete;
  ~Owned() {
    if (h) Free(h);
  }
  H* out() { return &h; }
  operator H() const { return h; }
};

using Image = Owned<abr_image, abr_image_free>;
using Colormap = Owned<abr_colormap, abr_colormap_free>;
using Mesh = Owned<abr_mesh, abr_mesh_free>;
using Scene = Owned<abr_scene, abr_scene_free>;
using Render = Owned<abr_render, abr_render_free>;
using Library = Owned<abr_library, abr_library_free>;

std::string take(char* s) {
  std::string out = s ? s : "";
  abr_string_free(s);
  return out;
}

/// Collected per-command output for the --json job report.
struct Job {
  json result = json::object();
  json outputs = json::array();
  std::vector<std::string> lines;  // plain-text output
};

std::string hex(const uint8_t rgb[3]) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

abr_lab parse_hex(std::string s) {
  if (!s.empty() && s[0] == '#') s.erase(0, 1);
  if (s.size() != 6 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    usage_error("invalid hex color '" + s + "'");
  const unsigned long v = std::stoul(s, nullptr, 16);
  const uint8_t rgb[3] = {static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  abr_lab lab;
  abr_srgb_to_lab(rgb, &lab);
  return lab;
}

std::string lab_hex(abr_lab lab) {
  uint8_t rgb[3];
  abr_lab_to_srgb(lab, rgb);
  return hex(rgb);
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> numbers(const std::string& s, std::size_t expected, const char* what) {
  std::vector<double> out;
  for (const auto& item : split(s)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      usage_error(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (expected && out.size() != expected)
    usage_error(std::string(what) + " needs " + std::to_string(expected) + " comma-separated numbers");
  return out;
}

std::string library_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ABR_LIBRARY_ROOT"); env && *env) return env;
  usage_error("no asset library: pass --library or set ABR_LIBRARY_ROOT");
  return {};
}

void load_image(const std::string& path, Image& img) { check(abr_image_load(path.c_str(), img.out())); }

void save_image(abr_image img, const std::string& path, Job& job) {
  check(abr_image_save_png(img, path.c_str()));
  job.outputs.push_back(path);
}

// ---------------------------------------------------------------------------

struct PaletteArgs {
  std::string image;
  int count = 6;
};

std::vector<abr_swatch> palette_of(const std::string& path, int count) {
  Image img;
  load_image(path, img);
  std::vector<abr_swatch> sw(static_cast<std::size_t>(std::max(count, 1)));
  int n = static_cast<int>(sw.size());
  check(abr_palette(img, count, sw.data(), &n));
  sw.resize(static_cast<std::size_t>(n));
  return sw;
}

void run_palette(const PaletteArgs& a, Job& job) {
  json swatches = json::array();
  for (const auto& s : palette_of(a.image, a.count)) {
    job.lines.push_back(hex(s.rgb));
    swatches.push_back({{"hex", hex(s.rgb)}, {"lab", {s.lab.L, s.lab.a, s.lab.b}}, {"population", s.population}});
  }
  job.result["swatches"] = swatches;
}

struct ColormapArgs {
  std::string image, colors, positions, in, name = "colormap", out, strip;
  int count = 6;
  std::vector<double> samples;
};

void run_colormap(const ColormapArgs& a, Job& job) {
  const int sources = !a.image.empty() + !a.colors.empty() + !a.in.empty();
  if (sources != 1) usage_error("colormap needs exactly one of --image, --colors, --in");
  Colormap map;
  if (!a.in.empty()) {
    check(abr_colormap_load(a.in.c_str(), map.out()));
  } else {
    std::vector<abr_lab> colors;
    if (!a.image.empty()) {
      auto sw = palette_of(a.image, a.count);
      std::stable_sort(sw.begin(), sw.end(), [](const auto& x, const auto& y) { return x.lab.L < y.lab.L; });
      for (const auto& s : sw) colors.push_back(s.lab);
    } else {
      for (const auto& h : split(a.colors)) colors.push_back(parse_hex(h));
    }
    if (colors.size() < 2) usage_error("a colormap needs at least 2 colors");
    std::vector<double> pos;
    if (!a.positions.empty()) {
      pos = numbers(a.positions, colors.size(), "--positions");
    } else {
      for (std::size_t i = 0; i < colors.size(); ++i) pos.push_back(static_cast<double>(i) / (colors.size() - 1));
    }
    check(abr_colormap_create(a.name.c_str(), pos.data(), colors.data(), colors.size(), 0, map.out()));
  }
  char* xml = nullptr;
  check(abr_colormap_export_xml(map, &xml));
  const std::string text = take(xml);
  if (!a.out.empty()) {
    std::FILE* f = std::fopen(a.out.c_str(), "wb");
    if (!f || std::fwrite(text.data(), 1, text.size(), f) != text.size()) {
      if (f) std::fclose(f);
      throw Failure{ABR_IO, "cannot write " + a.out};
    }
    std::fclose(f);
    job.outputs.push_back(a.out);
  }
  if (!a.strip.empty()) {
    Image strip;
    check(abr_colormap_strip(map, strip.out()));
    save_image(strip, a.strip, job);
  }
  json samples = json::array();
  for (double t : a.samples) {
    abr_lab lab;
    check(abr_colormap_sample(map, t, &lab));
    job.lines.push_back(std::to_string(t) + " " + lab_hex(lab));
    samples.push_back({{"t", t}, {"lab", {lab.L, lab.a, lab.b}}, {"hex", lab_hex(lab)}});
  }
  if (a.out.empty() && a.strip.empty() && a.samples.empty()) job.lines.push_back(text);
  job.result["samples"] = samples;
}

struct NormalmapArgs {
  std::string image, out, crop;
  double strength = 2.0;
};

void run_normalmap(const NormalmapArgs& a, Job& job) {
  Image src, cropped, nm;
  load_image(a.image, src);
  abr_image input = src;
  if (!a.crop.empty()) {
    const auto r = numbers(a.crop, 4, "--crop");
    check(abr_crop(src, static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2]), static_cast<int>(r[3]),
                   cropped.out()));
    input = cropped;
  }
  check(abr_normal_map(input, a.strength, nm.out()));
  save_image(nm, a.out, job);
}

struct SynthArgs {
  std::string image, out;
  abr_synth_params p{};
  int previewTiles = 0;
  std::string preview;
};

void run_synthesize(SynthArgs a, Job& job) {
  Image src, out;
  load_image(a.image, src);
  int loopStart = 0;
  check(abr_synthesize(src, &a.p, out.out(), &loopStart));
  save_image(out, a.out, job);
  if (!a.preview.empty()) {
    Image tiled;
    check(abr_tile(out, 1, std::max(a.previewTiles, 1), tiled.out()));
    save_image(tiled, a.preview, job);
  }
  job.result["loopStart"] = loopStart;
}

struct MeshArgs {
  std::string input, lod, out, uvOut, forward = "0,0,1", up = "0,1,0", targets = "5000,500,100", name;
  int target = 100;
  int resolution = 1024;
};

void mesh_info(abr_mesh m, json& into) {
  size_t v = 0, t = 0;
  double b[6];
  check(abr_mesh_info(m, &v, &t, b));
  into["vertices"] = v;
  into["triangles"] = t;
  into["bounds"] = {{"min", {b[0], b[1], b[2]}}, {"max", {b[3], b[4], b[5]}}};
}

void run_mesh_orient(const MeshArgs& a, Job& job) {
  Mesh m, out;
  check(abr_mesh_load_obj(a.input.c_str(), m.out()));
  const auto f = numbers(a.forward, 3, "--forward"), u = numbers(a.up, 3, "--up");
  double q[4];
  check(abr_mesh_orient(m, f.data(), u.data(), out.out(), q));
  check(abr_mesh_save_obj(out, a.out.c_str()));
  job.outputs.push_back(a.out);
  job.result["rotation"] = {q[0], q[1], q[2], q[3]};
  job.lines.push_back("rotation (w x y z): " + std::to_string(q[0]) + " " + std::to_string(q[1]) + " " +
                      std::to_string(q[2]) + " " + std::to_string(q[3]));
}

void run_mesh_decimate(const MeshArgs& a, Job& job) {
  Mesh m, out;
  check(abr_mesh_load_obj(a.input.c_str(), m.out()));
  int reached = 0;
  check(abr_mesh_decimate(m, a.target, out.out(), &reached));
  check(abr_mesh_save_obj(out, a.out.c_str()));
  job.outputs.push_back(a.out);
  mesh_info(out, job.result);
  job.result["targetReached"] = reached != 0;
  job.lines.push_back(std::to_string(job.result["vertices"].get<size_t>()) + " vertices" +
                      (reached ? "" : " (target not reached)"));
}

void run_mesh_bake(const MeshArgs& a, Job& job) {
  Mesh orig, lod, unwrapped;
  Image nm;
  check(abr_mesh_load_obj(a.input.c_str(), orig.out()));
  check(abr_mesh_load_obj(a.lod.c_str(), lod.out()));
  check(abr_mesh_bake(orig, lod, a.resolution, nm.out(), unwrapped.out()));
  save_image(nm, a.out, job);
  if (!a.uvOut.empty()) {
    check(abr_mesh_save_obj(unwrapped, a.uvOut.c_str()));
    job.outputs.push_back(a.uvOut);
  }
}

void run_mesh_lod(const MeshArgs& a, Job& job) {
  Mesh m;
  check(abr_mesh_load_obj(a.input.c_str(), m.out()));
  std::vector<int> targets;
  for (double t : numbers(a.targets, 0, "--targets")) targets.push_back(static_cast<int>(t));
  const std::string name = a.name.empty() ? fs::path(a.input).stem().string() : a.name;
  char* summary = nullptr;
  check(abr_mesh_build_lod(m, targets.data(), targets.size(), a.resolution, name.c_str(), a.out.c_str(), &summary));
  job.result = json::parse(take(summary));
  job.outputs.push_back(a.out);
  for (const auto& l : job.result["lods"])
    job.lines.push_back("target " + std::to_string(l["target"].get<int>()) + ": " +
                        std::to_string(l["vertexCount"].get<size_t>()) + " vertices");
}

struct SampleArgs {
  std::string data, method = "random", variable, format, variables, interpolation, out;
  double spacing = 0.0;
  long count = 200;
  uint64_t seed = 0;
  int chains = 1;
};

void run_sample(const SampleArgs& a, Job& job) {
  json req{{"data", fs::absolute(a.data).string()}, {"method", a.method}, {"count", a.count}, {"seed", a.seed},
           {"chains", a.chains}};
  if (a.spacing > 0) req["spacing"] = a.spacing;
  if (!a.variable.empty()) req["variable"] = a.variable;
  if (!a.format.empty()) req["format"] = a.format;
  if (!a.variables.empty()) req["variables"] = fs::absolute(a.variables).string();
  if (!a.interpolation.empty()) req["interpolation"] = a.interpolation;
  size_t n = 0;
  check(abr_sample_to_file(req.dump().c_str(), a.out.c_str(), &n));
  job.outputs.push_back(a.out);
  job.result["count"] = n;
  job.lines.push_back(std::to_string(n) + " samples");
}

struct AssetArgs {
  std::string path, kind, name, material, use, description, library, text;
};

void run_asset_register(const AssetArgs& a, Job& job) {
  Library lib;
  check(abr_library_open(library_root(a.library).c_str(), lib.out()));
  json meta{{"name", a.name.empty() ? fs::path(a.path).stem().string() : a.name},
            {"materialType", a.material},
            {"intendedUse", split(a.use)},
            {"description", a.description}};
  char* rec = nullptr;
  check(abr_library_register(lib, a.path.c_str(), a.kind.c_str(), meta.dump().c_str(), &rec));
  job.result = json::parse(take(rec));
  job.lines.push_back(job.result["id"].get<std::string>());
}

void run_asset_ls(const AssetArgs& a, Job& job) {
  Library lib;
  check(abr_library_open(library_root(a.library).c_str(), lib.out()));
  json q = json::object();
  if (!a.kind.empty()) q["kind"] = a.kind;
  if (!a.use.empty()) q["useTags"] = split(a.use);
  if (!a.material.empty()) q["materialType"] = a.material;
  if (!a.text.empty()) q["text"] = a.text;
  char* recs = nullptr;
  check(abr_library_query(lib, q.dump().c_str(), &recs));
  job.result["records"] = json::parse(take(recs));
  for (const auto& r : job.result["records"])
    job.lines.push_back(r["id"].get<std::string>() + "  " + r["kind"].get<std::string>() + "  " +
                        r["metadata"]["name"].get<std::string>());
}

struct RenderArgs {
  std::string scene, camera, out, size, depth, library;
  int threads = 0;
  uint64_t seed = 0;
  bool hasSeed = false;
};

void run_render(const RenderArgs& a, Job& job) {
  Scene s;
  const std::string lib = !a.library.empty() ? a.library : (std::getenv("ABR_LIBRARY_ROOT") ? std::getenv("ABR_LIBRARY_ROOT") : "");
  check(abr_scene_load(a.scene.c_str(), lib.empty() ? nullptr : lib.c_str(), s.out()));
  std::string camera;
  if (!a.camera.empty()) {
    std::FILE* f = std::fopen(a.camera.c_str(), "rb");
    if (!f) throw Failure{ABR_NOT_FOUND, "cannot open file: " + a.camera};
    char buf[4096];
    for (size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) camera.append(buf, n);
    std::fclose(f);
  }
  abr_render_options opt{a.threads, a.hasSeed ? 1 : 0, a.seed, 0, 0};
  if (!a.size.empty()) {
    const auto x = a.size.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument("size");
      opt.width = std::stoi(a.size.substr(0, x));
      opt.height = std::stoi(a.size.substr(x + 1));
    } catch (const std::exception&) {
      usage_error("--size must look like WxH");
    }
  }
  Render r;
  check(abr_render_scene(s, camera.empty() ? nullptr : camera.c_str(), &opt, r.out()));
  save_image(abr_render_color(r), a.out, job);
  if (!a.depth.empty()) {
    check(abr_render_save_depth(r, a.depth.c_str()));
    job.outputs.push_back(a.depth);
  }
  std::vector<size_t> px(64);
  size_t n = px.size();
  check(abr_render_layer_pixels(r, px.data(), &n));
  px.resize(n);
  job.result["layerPixels"] = px;
}

struct ServeArgs {
  std::string host = "127.0.0.1", library, baseDir = ".";
  int port = 8080;
};

void run_serve(const ServeArgs& a, Job&) {
  std::cerr << "serving on http://" << a.host << ":" << a.port << "\n";
  check(abr_server_run(a.host.c_str(), a.port, a.library.empty() ? nullptr : a.library.c_str(), a.baseDir.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Artifact-based rendering tools"};
  app.require_subcommand(1);
  bool asJson = false;
  app.add_flag("--json", asJson, "Print a machine-readable job report");
  app.set_version_flag("--version", abr_version());

  std::function<void(Job&)> action;

  PaletteArgs pal;
  auto* cPal = app.add_subcommand("palette", "Extract prominent colors from an image");
  cPal->add_option("image", pal.image, "Source image")->required()->check(CLI::ExistingFile);
  cPal->add_option("--count", pal.count, "Number of swatches")->check(CLI::PositiveNumber);
  cPal->callback([&] { action = [&](Job& j) { run_palette(pal, j); }; });

  ColormapArgs cm;
  auto* cCm = app.add_subcommand("colormap", "Build, convert or sample a Lab colormap");
  cCm->add_option("--image", cm.image, "Build from the image palette, ordered by lightness");
  cCm->add_option("--count", cm.count, "Palette size for --image");
  cCm->add_option("--colors", cm.colors, "Comma-separated hex colors");
  cCm->add_option("--positions", cm.positions, "Comma-separated positions for --colors");
  cCm->add_option("--in", cm.in, "Colormap XML to read");
  cCm->add_option("--name", cm.name, "Colormap name");
  cCm->add_option("--out", cm.out, "Write colormap XML");
  cCm->add_option("--strip", cm.strip, "Write the 1024x32 PNG strip");
  cCm->add_option("--sample", cm.samples, "Print the color at t");
  cCm->callback([&] { action = [&](Job& j) { run_colormap(cm, j); }; });

  NormalmapArgs nm;
  auto* cNm = app.add_subcommand("normalmap", "Normal map from image luminance");
  cNm->add_option("image", nm.image)->required()->check(CLI::ExistingFile);
  cNm->add_option("--out", nm.out)->required();
  cNm->add_option("--strength", nm.strength);
  cNm->add_option("--crop", nm.crop, "x,y,width,height");
  cNm->callback([&] { action = [&](Job& j) { run_normalmap(nm, j); }; });

  SynthArgs syn;
  abr_synth_params_default(&syn.p);
  auto* cSyn = app.add_subcommand("synthesize", "Seamless line texture synthesis");
  cSyn->add_option("image", syn.image)->required()->check(CLI::ExistingFile);
  cSyn->add_option("--out", syn.out)->required();
  cSyn->add_option("--height", syn.p.output_height, "Output rows");
  cSyn->add_option("--seed", syn.p.seed);
  cSyn->add_option("--jump-probability", syn.p.jump_probability);
  cSyn->add_option("--min-quality", syn.p.min_quality, "Largest row distance a jump may cover");
  cSyn->add_option("--min-jump-size", syn.p.min_jump_size);
  cSyn->add_option("--preview", syn.preview, "Also write the result tiled vertically");
  cSyn->add_option("--preview-tiles", syn.previewTiles)->default_val(3);
  cSyn->callback([&] { action = [&](Job& j) { run_synthesize(syn, j); }; });

  MeshArgs ma;
  auto* cMesh = app.add_subcommand("mesh", "Glyph mesh preparation");
  cMesh->require_subcommand(1);
  auto* cOrient = cMesh->add_subcommand("orient", "Rotate forward to +Z and up to +Y");
  cOrient->add_option("input", ma.input)->required()->check(CLI::ExistingFile);
  cOrient->add_option("--forward", ma.forward, "x,y,z");
  cOrient->add_option("--up", ma.up, "x,y,z");
  cOrient->add_option("--out", ma.out)->required();
  cOrient->callback([&] { action = [&](Job& j) { run_mesh_orient(ma, j); }; });
  auto* cDec = cMesh->add_subcommand("decimate", "Quadric edge-collapse decimation");
  cDec->add_option("input", ma.input)->required()->check(CLI::ExistingFile);
  cDec->add_option("--target", ma.target, "Target vertex count")->required();
  cDec->add_option("--out", ma.out)->required();
  cDec->callback([&] { action = [&](Job& j) { run_mesh_decimate(ma, j); }; });
  auto* cBake = cMesh->add_subcommand("bake", "Bake a normal map from the original onto a LOD");
  cBake->add_option("original", ma.input)->required()->check(CLI::ExistingFile);
  cBake->add_option("lod", ma.lod)->required()->check(CLI::ExistingFile);
  cBake->add_option("--out", ma.out)->required();
  cBake->add_option("--resolution", ma.resolution);
  cBake->add_option("--uv-out", ma.uvOut, "Write the unwrapped LOD");
  cBake->callback([&] { action = [&](Job& j) { run_mesh_bake(ma, j); }; });
  auto* cLod = cMesh->add_subcommand("lod", "Build a glyph asset with a LOD chain");
  cLod->add_option("input", ma.input)->required()->check(CLI::ExistingFile);
  cLod->add_option("--targets", ma.targets, "Comma-separated vertex targets");
  cLod->add_option("--resolution", ma.resolution, "Normal map resolution");
  cLod->add_option("--name", ma.name);
  cLod->add_option("--out", ma.out, "Manifest path")->required();
  cLod->callback([&] { action = [&](Job& j) { run_mesh_lod(ma, j); }; });

  SampleArgs sa;
  auto* cSample = app.add_subcommand("sample", "Regular, random or density sampling of a data object");
  cSample->add_option("data", sa.data)->required()->check(CLI::ExistingFile);
  cSample->add_option("--method", sa.method)->check(CLI::IsMember({"regular", "random", "density"}));
  cSample->add_option("--spacing", sa.spacing);
  cSample->add_option("--count", sa.count);
  cSample->add_option("--seed", sa.seed);
  cSample->add_option("--variable", sa.variable);
  cSample->add_option("--chains", sa.chains);
  cSample->add_option("--format", sa.format);
  cSample->add_option("--variables", sa.variables, "Per-vertex CSV for OBJ data");
  cSample->add_option("--interpolation", sa.interpolation)->check(CLI::IsMember({"nearest", "trilinear"}));
  cSample->add_option("--out", sa.out, ".csv or binary cache")->required();
  cSample->callback([&] { action = [&](Job& j) { run_sample(sa, j); }; });

  AssetArgs aa;
  auto* cAsset = app.add_subcommand("asset", "Asset library");
  cAsset->require_subcommand(1);
  auto* cReg = cAsset->add_subcommand("register", "Register a payload");
  cReg->add_option("path", aa.path)->required();
  cReg->add_option("--kind", aa.kind)->required();
  cReg->add_option("--name", aa.name);
  cReg->add_option("--material", aa.material);
  cReg->add_option("--use", aa.use, "Comma-separated use tags");
  cReg->add_option("--description", aa.description);
  cReg->add_option("--library", aa.library);
  cReg->callback([&] { action = [&](Job& j) { run_asset_register(aa, j); }; });
  auto* cLs = cAsset->add_subcommand("ls", "List assets");
  cLs->add_option("--kind", aa.kind);
  cLs->add_option("--use", aa.use);
  cLs->add_option("--material", aa.material);
  cLs->add_option("--text", aa.text);
  cLs->add_option("--library", aa.library);
  cLs->callback([&] { action = [&](Job& j) { run_asset_ls(aa, j); }; });

  RenderArgs ra;
  auto* cRender = app.add_subcommand("render", "Render a scene to PNG");
  cRender->add_option("--scene", ra.scene)->required();
  cRender->add_option("--camera", ra.camera);
  cRender->add_option("--out", ra.out)->default_val("render.png");
  auto* seedOpt = cRender->add_option("--seed", ra.seed);
  cRender->add_option("--size", ra.size, "WxH");
  cRender->add_option("--threads", ra.threads);
  cRender->add_option("--depth", ra.depth, "Write float32 depth RAW plus JSON header");
  cRender->add_option("--library", ra.library);
  cRender->callback([&] {
    ra.hasSeed = seedOpt->count() > 0;
    action = [&](Job& j) { run_render(ra, j); };
  });

  ServeArgs sv;
  auto* cServe = app.add_subcommand("serve", "Run the HTTP service");
  cServe->add_option("--port", sv.port);
  cServe->add_option("--host", sv.host);
  cServe->add_option("--library", sv.library);
  cServe->add_option("--base-dir", sv.baseDir);
  cServe->callback([&] { action = [&](Job& j) { run_serve(sv, j); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Job job;
  const auto start = std::chrono::steady_clock::now();
  int code = 0;
  json diagnostics = json::array();
  try {
    action(job);
  } catch (const Failure& f) {
    code = 1;
    diagnostics.push_back({{"code", abr_status_name(f.status)}, {"message", f.message}});
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  if (asJson) {
    json report{{"status", code == 0 ? "ok" : "error"},
                {"result", job.result},
                {"outputs", job.outputs},
                {"diagnostics", diagnostics},
                {"timingMs", ms}};
    std::cout << report.dump(2) << "\n";
  } else {
    for (const auto& line : job.lines) std::cout << line << "\n";
    for (const auto& d : diagnostics)
      std::cerr << "error: " << d["code"].get<std::string>() << ": " << d["message"].get<std::string>() << "\n";
  }
  return code;
}
