#include "service/requests.hpp"
#include "service/service.hpp"

#include "abr/scene.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"

#include <httplib.h>

#include <thread>

using namespace abr;
using api::json;
namespace fs = std::filesystem;

namespace {

/// In-process server on an ephemeral port.
struct Running {
  service::Server server;
  httplib::Client client;

  explicit Running(service::Config cfg) : server(std::move(cfg)), client("127.0.0.1", server.start("127.0.0.1", 0)) {
    client.set_read_timeout(120, 0);
  }

  json post(const std::string& path, const json& body, int expected = 200) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    INFO(res->body);
    CHECK(res->status == expected);
    return json::parse(res->body);
  }
  json get(const std::string& path, int expected = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    INFO(res->body);
    CHECK(res->status == expected);
    return json::parse(res->body);
  }
};

service::Config config(const fs::path& library = {}, const fs::path& base = ".") {
  service::Config c;
  c.libraryRoot = library;
  c.baseDir = base;
  c.threads = 4;
  return c;
}

std::string b64(const Image& img) { return api::base64_encode(encode_png(img)); }

Image image_of(const json& field) { return decode_image(api::base64_decode(field.get<std::string>())); }

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("base64 and request helpers") {
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253};
    for (std::size_t n = 0; n <= bytes.size(); ++n) {
      const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(n));
      CHECK(api::base64_decode(api::base64_encode(part)) == part);
    }
    CHECK(api::base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
    CHECK(api::base64_decode("data:image/png;base64,TWE=") == std::vector<std::uint8_t>{'M', 'a'});
    CHECK_THROWS_AS(api::base64_decode("abc"), Error);
    CHECK_THROWS_AS(api::base64_decode("ab!d"), Error);
    CHECK_THROWS_AS(api::parse_body("[1]"), Error);
    CHECK_THROWS_AS(api::parse_body("{"), Error);

    const auto map = api::colormap_from_json(
        {{"name", "x"}, {"normalize", true}, {"points", {{{"position", 2}, {"hex", "#000000"}}, {{"position", 4}, {"rgb", {255, 255, 255}}}}}});
    CHECK(map.points()[1].position == 1.0);
    CHECK(map.points()[1].color == color::srgb_to_lab({255, 255, 255}));
    CHECK_THROWS_AS(api::colormap_from_json({{"points", {{{"position", 0}}}}}), Error);

    const auto p = api::synthesis_params_from_json({{"jumpProbability", 0.3}, {"seed", 5}, {"minQuality", nullptr}});
    CHECK(p.jumpProbability == 0.3);
    CHECK(p.seed == 5);
    CHECK(std::isinf(p.minQuality));
    CHECK_THROWS_AS(api::synthesis_params_from_json({{"jumpProbability", 2.0}}), Error);
    CHECK_THROWS_AS(api::synthesis_params_from_json({{"seed", "x"}}), Error);
  }

  TEST_CASE("pure endpoints match library calls") {
    Running s(config());
    const Image photo = fixtures::artifact_photo(96, 64);

    SUBCASE("palette") {
      const auto out = s.post("/palette", {{"image", b64(photo)}});
      CHECK(out["swatches"].size() == 6);
      CHECK(out["swatches"] == api::swatches_json(color::extract_palette(photo)));
      CHECK(s.post("/palette", {{"image", b64(photo)}, {"count", 3}})["swatches"].size() == 3);
    }
    SUBCASE("colormap sample and export") {
      const json cm{{"name", "bw"}, {"points", {{{"position", 0}, {"hex", "#000000"}}, {{"position", 1}, {"hex", "#ffffff"}}}}};
      const auto map = api::colormap_from_json(cm);
      const auto one = s.post("/colormap/sample", {{"colormap", cm}, {"t", 0.5}});
      CHECK(one["samples"][0] == api::color_sample_json(color::sample_colormap(map, 0.5)));
      CHECK(std::abs(one["samples"][0]["lab"][0].get<double>() - 50.0) < 0.5);
      const auto many = s.post("/colormap/sample", {{"colormap", cm}, {"t", {-1.0, 0.25, 2.0}}});
      CHECK(many["samples"].size() == 3);
      CHECK(many["samples"][0]["hex"] == "#000000");
      CHECK(many["samples"][2]["hex"] == "#ffffff");
      const auto ex = s.post("/colormap/export", {{"colormap", cm}});
      CHECK(ex["xml"] == color::export_colormap_xml(map));
      CHECK(image_of(ex["png"]) == color::export_colormap_png_strip(map));
      // Exported XML feeds back into the endpoints.
      CHECK(s.post("/colormap/sample", {{"colormap", {{"xml", ex["xml"]}}}, {"t", 0.5}})["samples"] == one["samples"]);
    }
    SUBCASE("texture") {
      const auto nm = s.post("/texture/normalmap", {{"image", b64(photo)}, {"strength", 3.0}});
      CHECK(image_of(nm["image"]) == tex::make_normal_map(tex::TextureImage(photo), 3.0).pixels);
      const auto tile = s.post("/texture/tile",
                               {{"image", b64(photo)}, {"crop", {{"x", 4}, {"y", 5}, {"width", 20}, {"height", 10}}}, {"nx", 3}, {"ny", 2}});
      CHECK(image_of(tile["image"]) ==
            tex::tile_preview(tex::crop(tex::TextureImage(photo), {4, 5, 20, 10}), 3, 2).pixels);
    }
    SUBCASE("synthesize") {
      const Image stroke = fixtures::stroke_source(24, 40, 3);
      const auto out = s.post("/synthesize", {{"image", b64(stroke)}, {"params", {{"outputHeight", 120}, {"seed", 4}}}, {"previewTiles", 3}});
      line::SynthesisParams p;
      p.outputHeight = 120;
      p.seed = 4;
      const auto direct = line::synthesize(tex::TextureImage(stroke), p);
      CHECK(image_of(out["image"]) == direct.image.pixels);
      CHECK(out["loopStart"] == direct.loopStart);
      CHECK(out["rows"] == direct.rows);
      CHECK(image_of(out["preview"]) == tex::tile_preview(direct.image, 1, 3).pixels);

      // No jumps: the output is the source tiled vertically from the loop start.
      const auto flat = s.post("/synthesize", {{"image", b64(stroke)}, {"params", {{"outputHeight", 100}, {"jumpProbability", 0.0}}}});
      const int first = flat["rows"][0].get<int>();
      for (int i = 0; i < 100; ++i) CHECK(flat["rows"][static_cast<std::size_t>(i)] == (first + i) % 40);
      const auto tiled = tex::tile_preview(tex::TextureImage(stroke), 1, 4);
      CHECK(image_of(flat["image"]) == tex::crop(tiled, {0, first, 24, 100}).pixels);
    }
    SUBCASE("mesh orient and lod") {
      const auto obj = mesh::to_obj(fixtures::uv_sphere(10, 16, 1.0));
      const auto o = s.post("/mesh/orient", {{"obj", obj}, {"forward", {1, 0, 0}}, {"up", {0, 0, 1}}});
      const auto direct = mesh::orient_mesh(mesh::parse_obj(obj), {1, 0, 0}, {0, 0, 1});
      CHECK(o["obj"] == mesh::to_obj(direct.mesh));
      const auto& q = direct.orientation.rotation;
      CHECK(o["rotation"] == json{q.w(), q.x(), q.y(), q.z()});

      const auto lod = s.post("/mesh/lod", {{"obj", obj}, {"targets", {60, 20}}, {"resolution", 32}, {"name", "s"}});
      const auto chain = mesh::build_lod_chain(mesh::parse_obj(obj), {60, 20}, 32, "s");
      REQUIRE(lod["lods"].size() == 2);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(lod["lods"][k]["obj"] == mesh::to_obj(chain.lods[k].mesh));
        CHECK(image_of(lod["lods"][k]["normalMap"]) == chain.lods[k].normalMap.pixels);
        CHECK(lod["lods"][k]["vertexCount"] == chain.lods[k].vertexCount);
      }
    }
    SUBCASE("sample") {
      const json req{{"method", "random"}, {"count", 50}, {"seed", 9}, {"box", {{"min", {0, 0, 0}}, {"max", {1, 2, 3}}}}};
      CHECK(s.post("/sample", req) == api::sample_set_json(api::run_sample_request(req, ".")));
      const auto grid = fixtures::split_grid();
      json vol{{"dims", grid.dims}, {"origin", api::vec3_json(grid.origin)}, {"spacing", api::vec3_json(grid.spacing)}};
      vol["values"] = grid.values;
      const json dens{{"method", "density"}, {"count", 300}, {"seed", 2}, {"volume", vol}};
      const auto out = s.post("/sample", dens);
      sampling::VoxelField field{grid, sampling::Interpolation::Nearest};
      const auto direct = sampling::sample_density_mh(field, 300, 2);
      REQUIRE(out["points"].size() == 300);
      CHECK(out == api::sample_set_json(direct));
    }
  }

  TEST_CASE("errors, CORS and statelessness") {
    Running s(config());
    auto err = s.post("/palette", {{"count", 3}}, 400);
    CHECK(err["code"] == "invalid_argument");
    CHECK(err["message"].get<std::string>().find("image") != std::string::npos);
    CHECK(err.contains("details"));
    auto res = s.client.Post("/palette", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["code"] == "parse_error");
    err = s.post("/colormap/sample", {{"colormap", {{"points", {{{"position", 0.2}, {"hex", "#000000"}}, {{"position", 1}, {"hex", "#ffffff"}}}}}}, {"t", 0.5}}, 400);
    CHECK(err["code"] == "invalid_argument");
    CHECK(s.get("/assets", 404)["code"] == "not_found");

    res = s.client.Options("/palette");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

    // A fresh server answers pure requests identically.
    const json req{{"image", b64(fixtures::three_block_rgb(30, 10))}};
    const auto first = s.post("/palette", req);
    Running again(config());
    CHECK(again.post("/palette", req) == first);
  }

  TEST_CASE("asset endpoints match the library") {
    const fs::path root = fixtures::temp_dir("svc_lib");
    const fs::path src = fixtures::temp_dir("svc_src");
    assets::Library lib(root);
    for (int k = 0; k < 5; ++k) {
      const fs::path p = src / ("t" + std::to_string(k) + ".png");
      save_png(fixtures::ink_dots(16, k % 3, static_cast<std::uint64_t>(k)), p);
      lib.register_asset(p, assets::AssetKind::Texture, {"dots " + std::to_string(k), "ink", {"surface"}, ""});
    }
    for (int k = 0; k < 3; ++k) {
      const fs::path p = src / ("g" + std::to_string(k) + ".obj");
      mesh::save_obj(fixtures::uv_sphere(4 + k, 8, 1.0), p);
      lib.register_asset(p, assets::AssetKind::Glyph, {"glyph " + std::to_string(k), "clay", {"point"}, ""});
    }

    Running s(config(root));
    assets::Query q;
    q.kind = assets::AssetKind::Glyph;
    const auto glyphs = s.get("/assets?kind=glyph");
    CHECK(glyphs["records"].size() == 3);
    CHECK(glyphs["records"] == api::records_json(lib.query(q)));
    CHECK(s.get("/assets")["records"] == api::records_json(lib.query()));
    q = {};
    q.useTags = {"surface"};
    q.materialType = "ink";
    CHECK(s.get("/assets?use=surface&material=ink")["records"] == api::records_json(lib.query(q)));
    q = {};
    q.text = "dots 3";
    CHECK(s.get("/assets?text=dots%203")["records"].size() == 1);
    CHECK(s.get("/assets?kind=photo", 400)["code"] == "invalid_argument");

    const auto id = glyphs["records"][0]["id"].get<std::string>();
    CHECK(s.get("/assets/" + id) == api::record_json(lib.record(id)));
    CHECK(s.get("/assets/0000000000000000", 404)["code"] == "not_found");
    auto payload = s.client.Get("/assets/" + id + "/payload");
    REQUIRE(payload);
    const auto bytes = read_file(lib.verified_path(id));
    CHECK(payload->body == std::string(bytes.begin(), bytes.end()));

    // Upload a colormap; a second upload of the same bytes is idempotent.
    const std::string xml = color::export_colormap_xml(
        color::ColorMap("bw", {{0.0, color::srgb_to_lab({0, 0, 0})}, {1.0, color::srgb_to_lab({255, 255, 255})}}));
    const json upload{{"kind", "colormap"},
                      {"metadata", {{"name", "bw"}, {"intendedUse", {"magnitude"}}}},
                      {"main", "bw.xml"},
                      {"files", {{"bw.xml", api::base64_encode(std::vector<std::uint8_t>(xml.begin(), xml.end()))}}}};
    const auto rec = s.post("/assets", upload, 201);
    CHECK(rec["kind"] == "colormap");
    CHECK(s.post("/assets", upload, 201)["id"] == rec["id"]);
    CHECK(std::get<color::ColorMap>(lib.load(rec["id"])).points().size() == 2);
    json bad = upload;
    bad["files"] = {{"../escape.xml", bad["files"]["bw.xml"]}};
    bad["main"] = "../escape.xml";
    CHECK(s.post("/assets", bad, 400)["code"] == "invalid_argument");
    bad = upload;
    bad["kind"] = "glyph";
    CHECK(s.post("/assets", bad, 422)["code"] == "validation_error");

    // LOD build registered straight into the library.
    const auto lod = s.post("/mesh/lod", {{"obj", mesh::to_obj(fixtures::uv_sphere(8, 12, 1.0))},
                                          {"targets", {40}},
                                          {"resolution", 32},
                                          {"name", "ball"},
                                          {"register", {{"name", "ball"}, {"intendedUse", {"point"}}}}});
    CHECK(lod["record"]["kind"] == "glyph");
    q = {};
    q.kind = assets::AssetKind::Glyph;
    CHECK(lib.query(q).size() == 4);
  }

  TEST_CASE("render endpoint matches the renderer") {
    const fs::path dir = fixtures::temp_dir("svc_render");
    fixtures::GulfAssetOptions opt;
    opt.bakeResolution = 32;
    opt.lodTargets = {300, 60};
    opt.lineHeight = 64;
    const fs::path scenePath = fixtures::write_gulf_scene(dir, opt);

    Running s(config({}, dir));
    const json body{{"scene", json::parse(read_text_file(scenePath))}, {"size", "160x120"}, {"seed", 3}};
    auto res = s.client.Post("/render", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");

    const auto sc = scene::load_scene(scenePath);
    auto cam = sc.camera;
    cam.width = 160;
    cam.height = 120;
    render::RenderOptions ro;
    ro.seed = 3;
    const auto direct = render::render_scene(sc, cam, ro);
    CHECK(res->body == [&] {
      const auto png = encode_png(direct.color);
      return std::string(png.begin(), png.end());
    }());
    json pixels = json::parse(res->get_header_value("X-Abr-Layer-Pixels"));
    CHECK(pixels.size() == 4);
    CHECK(pixels == json(direct.layerPixels));

    const auto asJson = s.post("/render", {{"scene", read_text_file(scenePath)}, {"size", {160, 120}}, {"seed", 3}, {"format", "json"}});
    CHECK(image_of(asJson["image"]) == direct.color);

    // Invalid scenes report diagnostics.
    json broken = json::parse(read_text_file(scenePath));
    broken["layers"][0]["color"]["variable"] = "nonesuch";
    const auto err = s.post("/render", {{"scene", broken}}, 422);
    CHECK(err["code"] == "validation_error");
    REQUIRE(err["details"]["diagnostics"].size() >= 1);
    CHECK(err["details"]["diagnostics"][0]["message"].get<std::string>().find("nonesuch") != std::string::npos);
    CHECK(s.post("/render", {{"scene", 5}}, 400)["code"] == "invalid_argument");
  }

  TEST_CASE("glyph preview") {
    const auto helix = service::helix_field();
    CHECK(helix.points.size() == 48);
    for (const auto& v : helix.vectors.at("direction")) CHECK(std::abs(v.norm() - 1.0) < 1e-12);

    Running s(config());
    const auto obj = mesh::to_obj(fixtures::glyph_source());
    const json base{{"glyphPreview", {{"obj", obj}, {"rotation", {1, 0, 0, 0}}}}, {"size", "96x96"}, {"format", "json"}};
    const auto a = s.post("/render", base);
    CHECK(a["layerPixels"][0].get<std::size_t>() > 100);
    CHECK(s.post("/render", base) == a);
    json turned = base;
    turned["glyphPreview"]["rotation"] = {std::cos(0.6), 0, std::sin(0.6), 0};
    CHECK(s.post("/render", turned)["image"] != a["image"]);
  }

  TEST_CASE("concurrent requests") {
    Running s(config());
    const json req{{"image", b64(fixtures::artifact_photo(64, 64))}};
    const auto expected = s.post("/palette", req);
    std::vector<std::thread> workers;
    std::atomic<int> matches{0};
    for (int k = 0; k < 6; ++k)
      workers.emplace_back([&] {
        httplib::Client c("127.0.0.1", s.server.port());
        auto r = c.Post("/palette", req.dump(), "application/json");
        if (r && r->status == 200 && json::parse(r->body) == expected) ++matches;
      });
    for (auto& w : workers) w.join();
    CHECK(matches == 6);
  }
}
