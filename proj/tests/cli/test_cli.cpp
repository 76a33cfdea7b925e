#include "abr/assetlib.hpp"
#include "abr/image.hpp"
#include "abr/sampling.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <sys/wait.h>

using namespace abr;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int exit = -1;
  std::string out;  // stdout and stderr
};

Run run(const std::string& args, const fs::path& cwd = {}) {
  std::string cmd;
  if (!cwd.empty()) cmd = "cd '" + cwd.string() + "' && ";
  cmd += std::string("'") + ABR_CLI_PATH + "' " + args + " 2>&1";
  Run r;
  std::FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  for (size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < s.size()) {
    const auto nl = s.find('\n', start);
    out.push_back(s.substr(start, nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string hash_of(const fs::path& p) { return assets::sha256_hex(read_file(p)); }

/// The scripted pipeline from raw inputs to a rendered frame.
std::map<std::string, std::string> pipeline(const fs::path& dir) {
  fixtures::write_gulf_inputs(dir);
  const std::vector<std::string> steps = {
      "palette photo.png",
      "colormap --image photo.png --name thermal --out colormap.xml --strip colormap.png",
      "colormap --colors '#f7fcb9,#78c679,#004529' --positions 0,0.5,1 --name algae --out algae.xml",
      "synthesize stroke.png --out line.png --height 512 --seed 7",
      "mesh lod glyph.obj --targets 2000,500,100 --resolution 256 --name seed --out glyph/glyph.json",
      "sample chlorophyll.json --method density --count 5000 --seed 3 --out samples.bin",
      "render --scene scene.json --out render.png --seed 1 --size 512x512 --depth depth.raw",
  };
  for (const auto& s : steps) {
    const auto r = run(s, dir);
    INFO(s, "\n", r.out);
    REQUIRE(r.exit == 0);
  }
  std::map<std::string, std::string> hashes;
  for (const char* f : {"colormap.xml", "colormap.png", "algae.xml", "line.png", "glyph/glyph.json", "glyph/lod0.obj",
                        "glyph/lod2_normal.png", "samples.bin", "render.png", "depth.raw"})
    hashes[f] = hash_of(dir / f);
  return hashes;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage and error reporting") {
    auto r = run("render --scene missing.json", fixtures::temp_dir("cli_missing"));
    CHECK(r.exit == 1);
    CHECK(r.out.find("not_found") != std::string::npos);
    CHECK(r.out.find("missing.json") != std::string::npos);

    r = run("--json render --scene missing.json", fixtures::temp_dir("cli_missing"));
    CHECK(r.exit == 1);
    const auto report = json::parse(r.out);
    CHECK(report["status"] == "error");
    REQUIRE(report["diagnostics"].size() == 1);
    CHECK(report["diagnostics"][0]["code"] == "not_found");

    CHECK(run("palette --bogus x.png").exit == 2);
    CHECK(run("").exit == 2);
    CHECK(run("frobnicate").exit == 2);
    CHECK(run("--help").exit == 0);
    CHECK(run("colormap --colors '#000000'").exit == 1);
    CHECK(run("asset ls --library ''").exit == 1);
  }

  TEST_CASE("palette prints six swatches") {
    const fs::path dir = fixtures::temp_dir("cli_palette");
    save_png(fixtures::artifact_photo(128, 96), dir / "photo.png");
    const auto r = run("palette photo.png", dir);
    REQUIRE(r.exit == 0);
    const auto ls = lines(r.out);
    REQUIRE(ls.size() == 6);
    for (const auto& l : ls) {
      CHECK(l.size() == 7);
      CHECK(l[0] == '#');
    }
    const auto js = json::parse(run("--json palette photo.png --count 4", dir).out);
    CHECK(js["status"] == "ok");
    CHECK(js["result"]["swatches"].size() == 4);
    CHECK(js["timingMs"].get<double>() >= 0.0);
  }

  TEST_CASE("synthesize is deterministic") {
    const fs::path dir = fixtures::temp_dir("cli_synth");
    save_png(fixtures::stroke_source(48, 128, 2), dir / "line.png");
    REQUIRE(run("synthesize line.png --height 2048 --seed 7 --out a.png", dir).exit == 0);
    REQUIRE(run("synthesize line.png --height 2048 --seed 7 --out b.png --preview p.png", dir).exit == 0);
    CHECK(read_file(dir / "a.png") == read_file(dir / "b.png"));
    CHECK(load_image(dir / "a.png").height == 2048);
    CHECK(load_image(dir / "p.png").height == 3 * 2048);
    REQUIRE(run("synthesize line.png --height 2048 --seed 8 --out c.png", dir).exit == 0);
    CHECK(read_file(dir / "a.png") != read_file(dir / "c.png"));
    CHECK(run("synthesize line.png --jump-probability 3 --out d.png", dir).exit == 1);
  }

  TEST_CASE("mesh, normal map and asset commands") {
    const fs::path dir = fixtures::temp_dir("cli_mesh");
    mesh::save_obj(fixtures::uv_sphere(16, 24, 1.0), dir / "ball.obj");
    REQUIRE(run("mesh orient ball.obj --forward 1,0,0 --up 0,0,1 --out o.obj", dir).exit == 0);
    REQUIRE(run("mesh decimate ball.obj --target 60 --out d.obj", dir).exit == 0);
    CHECK(mesh::load_obj(dir / "d.obj").vertex_count() <= 60);
    REQUIRE(run("mesh bake ball.obj d.obj --resolution 64 --out n.png --uv-out d_uv.obj", dir).exit == 0);
    CHECK(load_image(dir / "n.png").width == 64);
    CHECK(mesh::load_obj(dir / "d_uv.obj").has_uvs());
    CHECK(run("mesh orient ball.obj --forward 1,0 --out o.obj", dir).exit == 1);

    save_png(fixtures::ink_dots(32, 1, 4), dir / "dots.png");
    REQUIRE(run("normalmap dots.png --out dn.png --crop 0,0,16,16", dir).exit == 0);
    CHECK(load_image(dir / "dn.png").width == 16);

    const std::string lib = "--library '" + (dir / "lib").string() + "'";
    auto r = run("asset register dots.png --kind texture --name dots --material ink --use surface,magnitude " + lib, dir);
    REQUIRE(r.exit == 0);
    const std::string id = lines(r.out).at(0);
    CHECK(id.size() == 16);
    REQUIRE(run("asset register ball.obj --kind glyph --material clay --use point " + lib, dir).exit == 0);
    CHECK(run("asset register dots.png --kind glyph " + lib, dir).exit == 1);
    r = run("--json asset ls --kind texture " + lib, dir);
    const auto js = json::parse(r.out);
    REQUIRE(js["result"]["records"].size() == 1);
    CHECK(js["result"]["records"][0]["id"] == id);
    CHECK(lines(run("asset ls " + lib, dir).out).size() == 2);
    CHECK(lines(run("asset ls --use point " + lib, dir).out).size() == 1);
  }

  TEST_CASE("sample writes CSV and binary caches") {
    const fs::path dir = fixtures::temp_dir("cli_sample");
    fixtures::write_gulf_inputs(dir);
    REQUIRE(run("sample chlorophyll.json --method random --count 100 --seed 1 --out r.csv", dir).exit == 0);
    CHECK(lines(read_text_file(dir / "r.csv")).size() >= 101);
    REQUIRE(run("sample seafloor.obj --variables seafloor_vars.csv --method density --variable depth --count 500 --out s.bin",
                dir)
                .exit == 0);
    CHECK(sampling::from_binary(read_file(dir / "s.bin")).points.size() == 500);
    CHECK(run("sample chlorophyll.json --method density --variable nope --out x.csv", dir).exit == 1);
  }

  TEST_CASE("end-to-end pipeline is reproducible") {
    const auto first = pipeline(fixtures::temp_dir("cli_e2e_a"));
    const auto second = pipeline(fixtures::temp_dir("cli_e2e_b"));
    CHECK(first == second);

    // The CLI-made assets match the ones built directly through the library.
    const fs::path direct = fixtures::temp_dir("cli_e2e_direct");
    fixtures::write_gulf_scene(direct);
    for (const char* f : {"colormap.xml", "algae.xml", "line.png", "glyph/glyph.json", "glyph/lod0.obj", "glyph/lod2_normal.png"})
      CHECK_MESSAGE(hash_of(direct / f) == first.at(f), f);
  }
}
