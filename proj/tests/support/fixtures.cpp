#include "fixtures.hpp"

#include "abr/linesynth.hpp"
#include "abr/texture.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

namespace abr::fixtures {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seafloor_depth(double x, double y) {
  return 38.0 + 12.0 * std::sin(x / 40.0) * std::cos(y / 35.0) +
         10.0 * std::exp(-((x - 140) * (x - 140) + (y - 60) * (y - 60)) / 800.0);
}

}  // namespace

mesh::TriMesh uv_sphere(int rings, int segments, double radius) {
  mesh::TriMesh m;
  m.positions.push_back({0, 0, radius});
  for (int r = 1; r <= rings; ++r) {
    const double theta = kPi * r / (rings + 1);
    for (int s = 0; s < segments; ++s) {
      const double phi = 2 * kPi * s / segments;
      m.positions.push_back(radius * Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                          std::cos(theta)));
    }
  }
  m.positions.push_back({0, 0, -radius});
  const auto ring = [&](int r, int s) { return static_cast<std::uint32_t>(1 + (r - 1) * segments + (s % segments)); };
  const auto south = static_cast<std::uint32_t>(m.positions.size() - 1);
  for (int s = 0; s < segments; ++s) m.triangles.push_back({0, ring(1, s), ring(1, s + 1)});
  for (int r = 1; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      m.triangles.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
  for (int s = 0; s < segments; ++s) m.triangles.push_back({ring(rings, s), south, ring(rings, s + 1)});
  return m;
}

mesh::TriMesh icosahedron(double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  mesh::TriMesh m;
  m.positions = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                 {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : m.positions) p = p.normalized() * radius;
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  return m;
}

mesh::TriMesh quad(double x0, double y0, double x1, double y1, double z) {
  mesh::TriMesh m;
  m.positions = {{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

mesh::TriMesh glyph_source() {
  // 50 x 100 + 2 = 5002 vertices, seed-like body along +Z.
  mesh::TriMesh m = uv_sphere(50, 100, 1.0);
  for (auto& p : m.positions) {
    const double phi = std::atan2(p.y(), p.x());
    const double theta = std::acos(std::clamp(p.z(), -1.0, 1.0));
    const double ridges = 1.0 + 0.08 * std::cos(8 * phi) * std::sin(theta);
    const double taper = 0.75 + 0.25 * std::cos(theta);  // blunt nose, thin tail
    p = Vec3(0.22 * ridges * taper * p.x(), 0.22 * ridges * taper * p.y(), 0.5 * p.z());
  }
  return m;
}

Image three_block_rgb(int width, int height) {
  Image img(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      std::uint8_t* p = img.at(x, y);
      const int block = std::min(2, 3 * x / width);
      p[0] = block == 0 ? 255 : 0;
      p[1] = block == 1 ? 255 : 0;
      p[2] = block == 2 ? 255 : 0;
    }
  return img;
}

Image stroke_source(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  Image img(width, height, 4);
  std::vector<double> phase(8), freq(8);
  for (int k = 0; k < 8; ++k) phase[k] = rng.uniform() * 2 * kPi, freq[k] = 1 + rng.below(4);
  for (int y = 0; y < height; ++y) {
    const double row = rng.uniform() * 0.15;
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      double v = 0.55 + row;
      for (int k = 0; k < 8; ++k) v += 0.05 * std::sin(2 * kPi * freq[k] * (u + y * 0.013 * k / height) + phase[k]);
      const double edge = std::min(1.0, std::min(u, 1.0 - u) * 6.0);
      std::uint8_t* p = img.at(x, y);
      p[0] = static_cast<std::uint8_t>(std::clamp(40 + 160 * v, 0.0, 255.0));
      p[1] = static_cast<std::uint8_t>(std::clamp(30 + 120 * v, 0.0, 255.0));
      p[2] = static_cast<std::uint8_t>(std::clamp(20 + 60 * v, 0.0, 255.0));
      p[3] = static_cast<std::uint8_t>(255 * edge);
    }
  }
  return img;
}

Image ink_dots(int size, int level, std::uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(level)));
  Image img(size, size, 4, 255);
  const int dots = 6 + 14 * level * level;
  const double radius = size * (0.03 + 0.015 * level);
  for (int d = 0; d < dots; ++d) {
    const double cx = rng.uniform() * size, cy = rng.uniform() * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        // Toroidal distance keeps the tile seamless.
        double dx = std::abs(x + 0.5 - cx), dy = std::abs(y + 0.5 - cy);
        dx = std::min(dx, size - dx);
        dy = std::min(dy, size - dy);
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r > radius) continue;
        const double ink = 0.35 + 0.5 * (r / radius);
        std::uint8_t* p = img.at(x, y);
        for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(std::min<double>(p[c], 255 * ink));
      }
  }
  return img;
}

Image artifact_photo(int width, int height) {
  // Painted swatches: deep blue, teal, sand, coral, off-white, dark brown.
  const std::uint8_t colors[6][3] = {{18, 40, 96}, {30, 128, 128}, {214, 190, 140},
                                     {232, 104, 80}, {244, 240, 228}, {70, 44, 30}};
  Image img(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
      const int band = std::min(5, static_cast<int>((u + 0.1 * std::sin(6 * v)) * 6.0 + 0.5) % 6);
      const double shade = 0.92 + 0.08 * std::sin(40 * u + 23 * v);
      std::uint8_t* p = img.at(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(std::clamp(colors[band][c] * shade, 0.0, 255.0));
    }
  return img;
}

sampling::VoxelGrid constant_grid() {
  sampling::VoxelGrid g;
  g.dims = {8, 8, 1};
  g.values.assign(64, 1.0);
  return g;
}

sampling::VoxelGrid split_grid() {
  sampling::VoxelGrid g = constant_grid();
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) g.values[static_cast<std::size_t>(j * 8 + i)] = i < 4 ? 2.0 : 1.0;
  return g;
}

void write_gulf_inputs(const fs::path& dir) {
  fs::create_directories(dir);
  save_png(artifact_photo(256, 256), dir / "photo.png");
  save_png(stroke_source(64, 128, 11), dir / "stroke.png");
  mesh::save_obj(glyph_source(), dir / "glyph.obj");

  // Seafloor heightfield with depth and temperature.
  {
    constexpr int n = 128;
    std::ostringstream obj, vars;
    vars << "depth,temperature\n";
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double x = 200.0 * i / (n - 1), y = 200.0 * j / (n - 1);
        const double depth = seafloor_depth(x, y);
        const double temp = 6.0 + 14.0 * (1.0 - (depth - 20.0) / 40.0) + 2.0 * std::sin(y / 25.0);
        obj << "v " << num(x) << ' ' << num(y) << ' ' << num(-depth) << '\n';
        vars << num(depth) << ',' << num(temp) << '\n';
      }
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i + 1 < n; ++i) {
        const int a = j * n + i + 1, b = a + 1, c = a + n, d = c + 1;
        obj << "f " << a << ' ' << b << ' ' << d << '\n' << "f " << a << ' ' << d << ' ' << c << '\n';
      }
    write_text_file(dir / "seafloor.obj", obj.str());
    write_text_file(dir / "seafloor_vars.csv", vars.str());
  }

  // Stations: 300 points with velocity, salinity, nitrate.
  {
    Rng rng(2024);
    std::ostringstream csv;
    csv << "x,y,z,velocity_x,velocity_y,velocity_z,salinity,nitrate\n";
    for (int k = 0; k < 300; ++k) {
      const double x = 10 + 180 * rng.uniform(), y = 10 + 180 * rng.uniform(), z = -4 - 16 * rng.uniform();
      const Vec3 v(-(y - 100) / 60.0, (x - 100) / 60.0, 0.1 * std::sin(x / 20.0));
      const double salinity = 33.0 + 0.012 * x + 0.3 * rng.uniform();
      const double nitrate = 2.0 + 0.4 * -z + 3.0 * std::exp(-((x - 60) * (x - 60) + (y - 140) * (y - 140)) / 1800.0);
      csv << num(x) << ',' << num(y) << ',' << num(z) << ',' << num(v.x()) << ',' << num(v.y()) << ',' << num(v.z())
          << ',' << num(salinity) << ',' << num(nitrate) << '\n';
    }
    write_text_file(dir / "stations.csv", csv.str());
  }

  // Currents: 20 swirl streamlines with speed.
  {
    json lines = json::array();
    for (int i = 0; i < 20; ++i) {
      const double r = 15.0 + 4.0 * i, z = -1.0 - 0.25 * i, theta0 = 0.37 * i;
      json pts = json::array(), times = json::array(), speed = json::array();
      double t = 0.0;
      for (int k = 0; k < 80; ++k) {
        const double th = theta0 + 1.5 * kPi * k / 79.0;
        const double s = 0.2 + 0.6 * std::exp(-(r - 50) * (r - 50) / 800.0) * (1.0 + 0.3 * std::sin(th));
        pts.push_back({100 + r * std::cos(th), 100 + r * std::sin(th), z});
        times.push_back(t);
        speed.push_back(s);
        t += r * 1.5 * kPi / 79.0 / s;
      }
      lines.push_back({{"points", pts}, {"times", times}, {"scalars", {{"speed", speed}}}});
    }
    write_text_file(dir / "currents.json", json{{"lines", lines}}.dump() + "\n");
  }

  // Chlorophyll bloom over a 32 x 32 x 16 grid.
  {
    json values = json::array();
    for (int k = 0; k < 16; ++k)
      for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 32; ++i) {
          const double x = (i + 0.5) * 6.25, y = (j + 0.5) * 6.25, z = -40 + (k + 0.5) * 2.5;
          const double d2 = ((x - 60) * (x - 60) + (y - 140) * (y - 140)) / (2 * 30.0 * 30.0) +
                            (z + 15) * (z + 15) / (2 * 8.0 * 8.0);
          values.push_back(std::round(5.0 * std::exp(-d2) * 1e4) / 1e4);
        }
    const json doc{{"dims", {32, 32, 16}}, {"origin", {0, 0, -40}}, {"spacing", {6.25, 6.25, 2.5}},
                   {"name", "chlorophyll"}, {"values", values}};
    write_text_file(dir / "chlorophyll.json", doc.dump() + "\n");
  }

  // Ordered ink-dot texture set (sparse to dense).
  {
    json entries = json::array();
    for (int level = 0; level < 3; ++level) {
      const std::string name = "ink_" + std::to_string(level) + ".png";
      save_png(ink_dots(64, level, 5), dir / name);
      entries.push_back({{"image", name}});
    }
    write_text_file(dir / "inkdots.json", json{{"name", "inkdots"}, {"entries", entries}}.dump(2) + "\n");
  }

  const json camera{{"position", {100, -130, 150}}, {"lookAt", {100, 95, -25}}, {"up", {0, 0, 1}},
                    {"fovY", 45}, {"width", 1024}, {"height", 1024}};
  write_text_file(dir / "camera.json", camera.dump(2) + "\n");

  const json scene{
      {"seed", 7},
      {"background", "#0b1f33"},
      {"light", {{"direction", {-0.3, 0.4, -0.85}}, {"ambient", 0.35}}},
      {"camera", camera},
      {"dataObjects",
       {{{"id", "seafloor"}, {"path", "seafloor.obj"}, {"variables", "seafloor_vars.csv"}},
        {{"id", "stations"}, {"path", "stations.csv"}},
        {{"id", "currents"}, {"path", "currents.json"}},
        {{"id", "chlorophyll"}, {"path", "chlorophyll.json"}}}},
      {"assets",
       {{{"id", "thermal"}, {"kind", "colormap"}, {"path", "colormap.xml"}},
        {{"id", "algae"}, {"kind", "colormap"}, {"path", "algae.xml"}},
        {{"id", "inkdots"}, {"kind", "textureSet"}, {"path", "inkdots.json"}},
        {{"id", "brush"}, {"kind", "lineTexture"}, {"path", "line.png"}},
        {{"id", "seed"}, {"kind", "glyph"}, {"path", "glyph/glyph.json"}}}},
      {"layers",
       {{{"id", "seafloor"}, {"type", "surface"}, {"dataObject", "seafloor"},
         {"color", {{"variable", "temperature"}}}, {"colormap", "thermal"},
         {"texture", {{"variable", "depth"}}}, {"textureSet", "inkdots"},
         {"blendDistance", 0.05}, {"textureScale", 0.05}, {"projectionBlendFactor", 4}},
        {{"id", "currents"}, {"type", "line"}, {"dataObject", "currents"},
         {"color", {{"variable", "speed"}}}, {"colormap", "thermal"}, {"size", {{"variable", "speed"}}},
         {"textureSet", "brush"}, {"lineStyle", "ribbon"}, {"ribbonWidth", 3.0}, {"textureScale", 0.03}},
        {{"id", "stations"}, {"type", "glyph"}, {"dataObject", "stations"}, {"glyph", "seed"},
         {"orientation", {{"variable", "velocity"}}}, {"color", {{"variable", "salinity"}}},
         {"colormap", "thermal"}, {"size", {{"variable", "nitrate"}}}, {"glyphSizePercent", 3.0}},
        {{"id", "bloom"}, {"type", "volume"}, {"dataObject", "chlorophyll"},
         {"color", {{"variable", "chlorophyll"}, {"range", {0.0, 5.0}}}}, {"colormap", "algae"},
         {"opacityScale", 0.12}}}}};
  write_text_file(dir / "scene.json", scene.dump(2) + "\n");
}

void build_gulf_assets(const fs::path& dir, const GulfAssetOptions& options) {
  // Lightness-ordered palette of the photo becomes the thermal map.
  auto swatches = color::extract_palette(load_image(dir / "photo.png"));
  std::sort(swatches.begin(), swatches.end(), [](const auto& a, const auto& b) { return a.color.L < b.color.L; });
  std::vector<color::ControlPoint> pts;
  for (std::size_t k = 0; k < swatches.size(); ++k)
    pts.push_back({static_cast<double>(k) / (swatches.size() - 1), swatches[k].color});
  write_text_file(dir / "colormap.xml", color::export_colormap_xml(color::ColorMap("thermal", pts)));

  const color::ColorMap algae("algae", {{0.0, color::srgb_to_lab(color::parse_hex("#f7fcb9"))},
                                        {0.5, color::srgb_to_lab(color::parse_hex("#78c679"))},
                                        {1.0, color::srgb_to_lab(color::parse_hex("#004529"))}});
  write_text_file(dir / "algae.xml", color::export_colormap_xml(algae));

  line::SynthesisParams params;
  params.outputHeight = options.lineHeight;
  params.seed = 7;
  const auto line = line::synthesize(tex::TextureImage(load_image(dir / "stroke.png")), params);
  save_png(line.image.pixels, dir / "line.png");

  const auto glyph = mesh::build_lod_chain(mesh::load_obj(dir / "glyph.obj"), options.lodTargets,
                                           options.bakeResolution, "seed");
  mesh::save_glyph_asset(glyph, dir / "glyph" / "glyph.json");
}

fs::path write_gulf_scene(const fs::path& dir, const GulfAssetOptions& options) {
  write_gulf_inputs(dir);
  build_gulf_assets(dir, options);
  return dir / "scene.json";
}

fs::path temp_dir(const std::string& name) {
  static std::mt19937_64 gen(std::random_device{}());
  const fs::path p = fs::temp_directory_path() / ("abr_" + name + "_" + std::to_string(gen() % 1000000000));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace abr::fixtures
