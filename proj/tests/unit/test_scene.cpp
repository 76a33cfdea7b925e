#include "abr/scene.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"

#include <cstring>
#include <set>

using namespace abr;
using namespace abr::scene;
namespace fs = std::filesystem;

namespace {

bool mentions(const std::vector<Diagnostic>& diags, const std::string& layer, const std::string& text) {
  for (const auto& d : diags)
    if (d.layer == layer && d.message.find(text) != std::string::npos) return true;
  return false;
}

std::shared_ptr<const DataObject> points_object() {
  auto obj = std::make_shared<DataObject>(parse_point_csv("x,y,z,temp,wind_x,wind_y,wind_z\n0,0,0,1,1,0,0\n1,0,0,2,0,1,0\n0,1,0,3,0,0,1\n"));
  obj->id = "pts";
  return obj;
}

std::shared_ptr<const DataObject> volume_object() {
  std::string values;
  for (int i = 0; i < 64; ++i) values += (i ? "," : "") + std::to_string(i % 7);
  auto obj = std::make_shared<DataObject>(parse_volume_json(R"({"dims": [4, 4, 4], "name": "rho", "values": [)" + values + "]}"));
  obj->id = "vol";
  return obj;
}

std::shared_ptr<const Asset> asset(const std::string& id, assets::AssetKind kind, assets::LoadedAsset value) {
  return std::make_shared<const Asset>(Asset{AssetRef{id, kind, id, ""}, std::move(value)});
}

Scene small_scene() {
  Scene s;
  s.dataObjects = {points_object(), volume_object()};
  auto quad = std::make_shared<DataObject>();
  quad->id = "quad";
  quad->kind = DataKind::Mesh;
  quad->mesh = fixtures::quad(0, 0, 1, 1, 0);
  quad->scalars["h"] = {0, 1, 2, 3};
  quad->finalize();
  s.dataObjects.push_back(quad);
  const color::ColorMap cm("bw", {{0.0, {0, 0, 0}}, {1.0, {100, 0, 0}}});
  s.assets["bw"] = asset("bw", assets::AssetKind::ColorMap, cm);
  std::vector<tex::TextureImage> dots;
  for (int k = 0; k < 3; ++k) dots.emplace_back(fixtures::ink_dots(16, k, 1));
  s.assets["dots"] = asset("dots", assets::AssetKind::TextureSet, tex::build_texture_set(dots));
  mesh::GlyphAsset g;
  g.lods.push_back({fixtures::icosahedron(1.0), {}, 12, 12, true});
  s.assets["ico"] = asset("ico", assets::AssetKind::Glyph, g);
  return s;
}

}  // namespace

TEST_SUITE("scene") {
  TEST_CASE("load data objects") {
    const auto dir = fixtures::temp_dir("scene_data");
    mesh::TriMesh cube;
    for (int i = 0; i < 8; ++i) cube.positions.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
    cube.triangles = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5}, {0, 4, 5}, {0, 5, 1},
                      {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
    mesh::save_obj(cube, dir / "cube.obj");
    const auto c = load_data_object(dir / "cube.obj");
    CHECK(c.kind == DataKind::Mesh);
    CHECK(c.mesh.vertex_count() == 8);
    CHECK(c.scalars.empty());
    CHECK(c.vectors.empty());
    CHECK(c.bounds.max == Vec3(1, 1, 1));

    std::string vars = "height\n";
    for (int i = 0; i < 8; ++i) vars += std::to_string(i) + "\n";
    write_text_file(dir / "cube.csv", vars);
    const auto cv = load_data_object(dir / "cube.obj", "obj", dir / "cube.csv");
    REQUIRE(cv.has_scalar("height"));
    CHECK(cv.scalars.at("height")[7] == 7.0);
    write_text_file(dir / "short.csv", "height\n1\n2\n");
    CHECK_THROWS_AS(load_data_object(dir / "cube.obj", "obj", dir / "short.csv"), Error);

    const auto p = parse_point_csv("x,y,z,temp\n0,0,0,10\n1,2,3,11\n4,5,6,12.5\n");
    CHECK(p.kind == DataKind::PointSet);
    CHECK(p.element_count() == 3);
    CHECK(p.scalars.at("temp") == std::vector<double>{10, 11, 12.5});
    CHECK(p.bounds.min == Vec3(0, 0, 0));
    CHECK(p.bounds.max == Vec3(4, 5, 6));
    CHECK(points_object()->has_vector("wind"));
    CHECK_FALSE(points_object()->has_scalar("wind_x"));
    try {
      parse_point_csv("x,y,z,temp\n0,0,0,1\n1,1,oops,2\n");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Parse);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_point_csv("x,y,temp\n0,0,1\n"), Error);

    const auto v = volume_object();
    CHECK(v->kind == DataKind::Volume);
    CHECK(v->grid.size() == 64);
    CHECK(v->has_scalar("rho"));
    std::string values;
    for (int i = 0; i < 63; ++i) values += (i ? "," : "") + std::to_string(i);
    try {
      parse_volume_json(R"({"dims": [4, 4, 4], "values": [)" + values + "]}");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Validation);
      CHECK(std::string(e.what()).find("63") != std::string::npos);
    }

    // RAW volume with a header.
    std::vector<std::uint8_t> raw(2 * 2 * 2 * 4);
    for (int i = 0; i < 8; ++i) {
      const float f = static_cast<float>(i) * 0.5f;
      std::memcpy(raw.data() + 4 * i, &f, 4);
    }
    write_file_atomic(dir / "v.raw", raw);
    write_text_file(dir / "v.json", R"({"dims": [2, 2, 2], "spacing": [1, 1, 2], "raw": "v.raw", "valueType": "float32", "name": "q"})");
    const auto rv = load_data_object(dir / "v.json");
    CHECK(rv.scalars.at("q")[5] == 2.5);
    CHECK(rv.bounds.max == Vec3(2, 2, 4));

    const auto l = parse_polyline_json(R"({"lines": [{"points": [[0,0,0],[1,0,0],[2,0,0]], "times": [0, 1, 3],
                                            "scalars": {"speed": [1, 2, 3]}}, {"points": [[0,1,0],[0,2,0]], "scalars": {"speed": [4, 5]}}]})");
    CHECK(l.kind == DataKind::LineSet);
    CHECK(l.lines.size() == 2);
    CHECK(l.element_count() == 5);
    CHECK(l.scalars.at("speed").back() == 5.0);
    CHECK(l.lines[0].times == std::vector<double>{0, 1, 3});
    CHECK_THROWS_AS(parse_polyline_json(R"({"lines": [{"points": [[0,0,0],[1,0,0]], "scalars": {"speed": [1]}}]})"), Error);
    CHECK_THROWS_AS(load_data_object(dir / "absent.csv"), Error);
  }

  TEST_CASE("normalize") {
    const DataRange r{2.0, 6.0};
    CHECK(normalize(2.0, r) == 0.0);
    CHECK(normalize(6.0, r) == 1.0);
    CHECK(normalize(9.0, r) == 1.0);
    CHECK(normalize(-9.0, r) == 0.0);
    CHECK(normalize(3.0, r) == 0.25);
    double prev = -1.0;
    for (double v = 0.0; v < 8.0; v += 0.01) {
      const double t = normalize(v, r);
      REQUIRE(t >= prev);
      prev = t;
    }
    CHECK(range_of({3, -1, 7}) == DataRange{-1, 7});
  }

  TEST_CASE("add_layer accepts and rejects bindings") {
    const Scene s = small_scene();
    VisLayer g;
    g.id = "arrows";
    g.type = LayerType::Glyph;
    g.dataObject = "pts";
    g.glyph = "ico";
    g.orientation = Binding{"wind", {}};
    const Scene s1 = add_layer(s, g);
    CHECK(s1.layers.size() == 1);
    CHECK(s.layers.empty());  // the input scene is not modified

    VisLayer line;
    line.id = "bad";
    line.type = LayerType::Line;
    line.dataObject = "vol";
    CHECK_THROWS_AS(add_layer(s, line), Error);
    CHECK(mentions(validate_layer(s, line), "bad", "cannot bind a"));

    VisLayer surf;
    surf.id = "floor";
    surf.type = LayerType::Surface;
    surf.dataObject = "quad";
    surf.texture = Binding{"h", {}};
    surf.textureSet = "dots";
    const Scene s2 = add_layer(s1, surf);
    CHECK(s2.layers.back().bins == 3);
    CHECK(validate_scene(s2).empty());

    // All problems at once.
    VisLayer broken = g;
    broken.id = "broken";
    broken.orientation = Binding{"temp", {}};
    broken.color = Binding{"nope", DataRange{1, 1}};
    broken.glyph = "bw";
    try {
      add_layer(s, broken);
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(e.code() == ErrorCode::Validation);
      CHECK(msg.find("must be a vector") != std::string::npos);
      CHECK(msg.find("'nope' not found") != std::string::npos);
      CHECK(msg.find("min must be < max") != std::string::npos);
      CHECK(msg.find("requires a colormap") != std::string::npos);
      CHECK(msg.find("has kind colormap") != std::string::npos);
    }
    CHECK_THROWS_AS(add_layer(s1, g), Error);  // duplicate id
  }

  TEST_CASE("validate_scene diagnostics") {
    Scene empty;
    const auto d0 = validate_scene(empty);
    CHECK(mentions(d0, "", "no layers"));

    Scene s = small_scene();
    VisLayer v;
    v.id = "fog";
    v.type = LayerType::Volume;
    v.dataObject = "vol";
    v.color = Binding{"rho", {}};
    s.layers.push_back(v);
    const auto d1 = validate_scene(s);
    CHECK(mentions(d1, "fog", "binding 'color' requires a colormap"));
    s.layers.back().colormap = "bw";
    CHECK(validate_scene(s).empty());
    s.camera.width = 0;
    CHECK_FALSE(validate_scene(s).empty());

    const std::string j = diagnostics_json(d1);
    CHECK(j.find("\"layer\"") != std::string::npos);
    CHECK(j.find("fog") != std::string::npos);
  }

  TEST_CASE("Gulf scene parses, validates and round-trips") {
    const auto dir = fixtures::temp_dir("scene_gulf");
    fixtures::GulfAssetOptions opt;
    opt.bakeResolution = 32;
    opt.lodTargets = {300, 60};
    opt.lineHeight = 64;
    const auto path = fixtures::write_gulf_scene(dir, opt);
    const Scene s = load_scene(path);
    CHECK(validate_scene(s).empty());
    CHECK(s.layers.size() == 4);
    CHECK(s.dataObjects.size() == 4);
    CHECK(s.seed == 7);
    CHECK(s.background == color::parse_hex("#0b1f33"));
    CHECK(s.camera.width == 1024);
    std::set<std::pair<std::string, std::string>> bound;
    for (const auto& l : s.layers)
      for (const auto* b : {&l.color, &l.texture, &l.size, &l.orientation, &l.density})
        if (*b) bound.emplace(l.dataObject, (*b)->variable);
    CHECK(bound.size() == 7);
    CHECK(s.layers[0].bins == 3);
    CHECK(s.data("stations")->element_count() == 300);
    CHECK(s.data("currents")->lines.size() == 20);

    const std::string text = serialize_scene(s);
    const Scene back = parse_scene(text, dir);
    CHECK(back.layers == s.layers);
    CHECK(back.camera == s.camera);
    CHECK(back.light == s.light);
    CHECK(back.background == s.background);
    CHECK(back.seed == s.seed);
    REQUIRE(back.dataObjects.size() == s.dataObjects.size());
    for (std::size_t i = 0; i < s.dataObjects.size(); ++i) {
      CHECK(back.dataObjects[i]->id == s.dataObjects[i]->id);
      CHECK(back.dataObjects[i]->source == s.dataObjects[i]->source);
      CHECK(back.dataObjects[i]->scalars == s.dataObjects[i]->scalars);
    }
    REQUIRE(back.assets.size() == s.assets.size());
    for (const auto& [id, a] : s.assets) CHECK(back.asset(id)->ref == a->ref);
    CHECK(serialize_scene(back) == text);
  }

  TEST_CASE("scene errors") {
    const auto dir = fixtures::temp_dir("scene_err");
    try {
      parse_scene("{\"layers\": [", dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Parse);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_scene(R"({"dataObjects": [{"id": "a", "path": "missing.csv"}]})", dir), Error);
    CHECK_THROWS_AS(parse_scene(R"({"assets": [{"id": "m", "kind": "colormap", "libraryId": "abc"}]})", dir), Error);
    CHECK_THROWS_AS(parse_layer_type("sprite"), Error);
    // A scene with no layers parses; validation reports it.
    const Scene s = parse_scene("{}", dir);
    CHECK(mentions(validate_scene(s), "", "no layers"));
  }

  TEST_CASE("camera JSON") {
    const Camera c = parse_camera(R"({"position": [1, 2, 3], "lookAt": [0, 0, 0], "up": [0, 0, 1], "fovY": 30, "width": 64, "height": 32})");
    CHECK(c.position == Vec3(1, 2, 3));
    CHECK(c.width == 64);
    CHECK(parse_camera(serialize_camera(c)) == c);
    CHECK_THROWS_AS(parse_camera(R"({"position": [0, 0, 0], "lookAt": [0, 0, 0]})"), Error);
    CHECK_THROWS_AS(parse_camera(R"({"fovY": 180})"), Error);
  }
}
