#include "abr/mesh.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <numbers>

using namespace abr;
using namespace abr::mesh;

namespace {

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

TriMesh cube() {
  TriMesh m;
  for (int i = 0; i < 8; ++i) m.positions.emplace_back(i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0);
  const std::array<std::array<std::uint32_t, 4>, 6> quads{{
      {0, 2, 6, 4}, {1, 5, 7, 3},  // -X, +X
      {0, 4, 5, 1}, {2, 3, 7, 6},  // -Y, +Y
      {0, 1, 3, 2}, {4, 6, 7, 5},  // -Z, +Z
  }};
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// Lumpy closed blob with 512 triangles.
TriMesh blob(std::uint64_t seed) {
  TriMesh m = fixtures::uv_sphere(16, 16, 1.0);
  Rng rng(seed);
  for (auto& p : m.positions) p *= 0.7 + 0.6 * rng.uniform();
  return m;
}

Vec3 bary_point(const TriMesh& m, std::size_t tri, const Vec3& b) {
  const auto& t = m.triangles[tri];
  return b.x() * m.positions[t[0]] + b.y() * m.positions[t[1]] + b.z() * m.positions[t[2]];
}

// Texel-center coverage of each island's UV triangles; returns the number of
// texels claimed by two different islands.
int island_overlap(const UvAtlas& atlas, int res) {
  std::vector<int> owner(static_cast<std::size_t>(res * res), -1);
  int conflicts = 0;
  const auto& m = atlas.mesh;
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const Vec2 a = m.uvs[m.triangles[t][0]] * res, b = m.uvs[m.triangles[t][1]] * res, c = m.uvs[m.triangles[t][2]] * res;
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        auto edge = [&](const Vec2& u, const Vec2& v) { return ((v - u).x() * (p - u).y() - (v - u).y() * (p - u).x()) / area; };
        if (edge(a, b) < 0 || edge(b, c) < 0 || edge(c, a) < 0) continue;
        int& o = owner[static_cast<std::size_t>(y * res + x)];
        if (o >= 0 && o != atlas.triangleIsland[t]) ++conflicts;
        o = atlas.triangleIsland[t];
      }
  }
  return conflicts;
}

// Mean angle between a sphere's radial normal and (a) the LOD face normal,
// (b) the baked normal, over all covered texels.
std::pair<double, double> sphere_bake_errors(const TriMesh& lod, const tex::NormalMap& nm) {
  double geo = 0.0, baked = 0.0;
  int n = 0;
  for_each_texel(lod, nm.pixels.width, [&](int x, int y, std::size_t tri, const Vec3& b) {
    const Vec3 truth = bary_point(lod, tri, b).normalized();
    const Vec3 w = tangent_frame(lod, tri, b).to_world(tex::decode_normal(nm.pixels.at(x, y)));
    geo += angle_deg(face_normal(lod, tri), truth);
    baked += angle_deg(w, truth);
    ++n;
  });
  REQUIRE(n > 0);
  return {geo / n, baked / n};
}

}  // namespace

TEST_SUITE("mesh") {
  TEST_CASE("OBJ parsing") {
    const auto m = parse_obj(
        "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1 4/4/1\n");
    CHECK(m.vertex_count() == 4);
    CHECK(m.triangles.size() == 2);
    CHECK(m.has_uvs());
    CHECK(m.has_normals());
    CHECK(m.uvs[2] == Vec2(1, 1));

    const auto neg = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
    CHECK(neg.triangles[0] == Triangle{0, 1, 2});
    CHECK_FALSE(neg.has_normals());

    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 3\n"), Error);
    CHECK_THROWS_AS(parse_obj("v 0 zero 0\n"), Error);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2\n"), Error);

    const auto s = fixtures::uv_sphere(6, 8, 2.0);
    const auto back = parse_obj(to_obj(s));
    CHECK(back.triangles == s.triangles);
    for (std::size_t i = 0; i < s.positions.size(); ++i) REQUIRE((back.positions[i] - s.positions[i]).norm() < 1e-12);
  }

  TEST_CASE("clean geometry welds and drops degenerates") {
    TriMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}, {5, 5, 5}};
    m.triangles = {{0, 1, 2}, {3, 4, 2}, {0, 1, 3}};
    const auto c = clean_geometry(m);
    CHECK(c.vertex_count() == 4);
    CHECK(c.triangles.size() == 2);
    CHECK(unique_position_count(m) == 5);
  }

  TEST_CASE("orientation examples") {
    const auto ico = fixtures::icosahedron(1.0);
    const auto same = orient_mesh(ico, {0, 0, 1}, {0, 1, 0});
    CHECK(same.orientation.rotation.angularDistance(Eigen::Quaterniond::Identity()) < 1e-12);
    for (std::size_t i = 0; i < ico.positions.size(); ++i)
      REQUIRE((same.mesh.positions[i] - (ico.positions[i] - same.centroid)).norm() < 1e-12);

    const auto side = orient_mesh(ico, {1, 0, 0}, {0, 1, 0});
    const Mat3 r = side.orientation.rotation.toRotationMatrix();
    CHECK((r * Vec3(1, 0, 0) - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK((r * Vec3(0, 1, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
    const Eigen::AngleAxisd aa(side.orientation.rotation);
    CHECK(std::abs(aa.angle() - std::numbers::pi / 2) < 1e-12);
    CHECK(std::abs(std::abs(aa.axis().y()) - 1.0) < 1e-12);

    const Vec3 f = Vec3(1, 1, 0).normalized(), up(0, 0, 1);
    const auto diag = orientation_from_axes(f, up);
    const Mat3 rd = diag.rotation.toRotationMatrix();
    CHECK((rd * f - Vec3(0, 0, 1)).norm() < 1e-6);
    const Vec3 upPerp = (up - f * f.dot(up)).normalized();
    CHECK((rd * upPerp - Vec3(0, 1, 0)).norm() < 1e-6);
    CHECK(std::abs(diag.rotation.norm() - 1.0) < 1e-6);

    // Non-perpendicular up is projected.
    const auto skew = orientation_from_axes({0, 0, 1}, {0.3, 1, 0.5});
    CHECK((skew.rotation.toRotationMatrix() * Vec3(0.3, 1, 0).normalized() - Vec3(0, 1, 0)).norm() < 1e-9);

    CHECK_THROWS_AS(orient_mesh(ico, {1, 0, 0}, {-2, 0, 0}), Error);
    CHECK_THROWS_AS(orient_mesh(ico, {0, 0, 0}, {0, 1, 0}), Error);
  }

  TEST_CASE("orientation is rigid") {
    const auto m = fixtures::glyph_source();
    const auto o = orient_mesh(m, Vec3(0.2, -0.7, 0.4).normalized(), Vec3(1, 0.1, 0).normalized());
    Rng rng(3);
    for (int k = 0; k < 2000; ++k) {
      const auto i = rng.below(m.vertex_count()), j = rng.below(m.vertex_count());
      REQUIRE(std::abs((m.positions[i] - m.positions[j]).norm() - (o.mesh.positions[i] - o.mesh.positions[j]).norm()) < 1e-6);
    }
    Vec3 c = Vec3::Zero();
    for (const auto& p : o.mesh.positions) c += p;
    CHECK((c / static_cast<double>(m.vertex_count())).norm() < 1e-9);
  }

  TEST_CASE("decimate trivial cases") {
    const auto ico = fixtures::icosahedron(1.0);
    const auto same = decimate(ico, 12);
    CHECK(same.mesh.positions == ico.positions);
    CHECK(same.mesh.triangles == ico.triangles);
    CHECK(same.targetReached);
    CHECK(decimate(ico, 500).mesh.triangles == ico.triangles);
    CHECK_THROWS_AS(decimate(ico, 3), Error);
  }

  TEST_CASE("decimate sphere three orders down") {
    const auto s = fixtures::uv_sphere(100, 200, 1.0);
    REQUIRE(s.vertex_count() == 20002);
    const auto d = decimate(s, 100);
    CHECK(d.targetReached);
    CHECK(d.mesh.vertex_count() <= 100);
    CHECK_NOTHROW(d.mesh.validate());
    for (const auto& t : d.mesh.triangles) REQUIRE(face_area(d.mesh, static_cast<std::size_t>(&t - d.mesh.triangles.data())) > 0.0);
    const double diag = s.bounds().diagonal();
    CHECK(oracle::hausdorff(s, d.mesh) < 0.02 * diag);
    const Aabb a = s.bounds(), b = d.mesh.bounds();
    CHECK((a.min - b.min).norm() < 0.01 * diag);
    CHECK((a.max - b.max).norm() < 0.01 * diag);
  }

  TEST_CASE("decimate keeps open borders and odd topology valid") {
    TriMesh grid;
    const int n = 20;
    for (int y = 0; y <= n; ++y)
      for (int x = 0; x <= n; ++x) grid.positions.emplace_back(x, y, 0.05 * std::sin(x * 0.7) * std::cos(y * 0.4));
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const auto i = static_cast<std::uint32_t>(y * (n + 1) + x);
        grid.triangles.push_back({i, i + 1, i + n + 2});
        grid.triangles.push_back({i, i + n + 2, i + n + 1});
      }
    const auto d = decimate(grid, 40);
    CHECK(d.mesh.vertex_count() <= 40);
    CHECK_NOTHROW(d.mesh.validate());
    const Aabb a = grid.bounds(), b = d.mesh.bounds();
    CHECK((a.min - b.min).head<2>().norm() < 0.01 * a.diagonal());
    CHECK((a.max - b.max).head<2>().norm() < 0.01 * a.diagonal());

    // Three triangles on one edge, plus a separate triangle.
    TriMesh odd;
    odd.positions = {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, -1, 0}, {0.5, 0, 1}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}};
    odd.triangles = {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}, {5, 6, 7}};
    const auto r = decimate(odd, 4);
    CHECK_NOTHROW(r.mesh.validate());
    CHECK(r.mesh.vertex_count() <= odd.vertex_count());
    CHECK(r.targetReached == (r.mesh.vertex_count() <= 4));
  }

  TEST_CASE("progressive decimation") {
    const auto s = fixtures::uv_sphere(30, 60, 1.0);
    const std::vector<int> targets{1000, 200, 50};
    const auto chain = decimate_progressive(s, targets);
    REQUIRE(chain.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(chain[i].mesh.vertex_count() <= static_cast<std::size_t>(targets[i]));
      CHECK(chain[i].target == targets[i]);
    }
    CHECK(chain[0].mesh.vertex_count() > chain[1].mesh.vertex_count());
    const std::vector<int> bad{100, 200};
    CHECK_THROWS_AS(decimate_progressive(s, bad), Error);
  }

  TEST_CASE("unwrap cube gives six charts") {
    const auto atlas = unwrap_uv(cube(), 256);
    CHECK(atlas.chart_count() == 6);
    CHECK(atlas.island_count() == 6);
    for (std::size_t t = 0; t < atlas.mesh.triangles.size(); ++t) {
      const Vec3 n = face_normal(atlas.mesh, t);
      const int axis = atlas.islandAxis[static_cast<std::size_t>(atlas.triangleIsland[t])];
      int expect = 0;
      n.cwiseAbs().maxCoeff(&expect);
      REQUIRE(axis == expect * 2 + (n[expect] < 0 ? 1 : 0));
      // Axis projection: the UV triangle is a right isosceles half of a square.
      const auto& tri = atlas.mesh.triangles[t];
      const Vec2 a = atlas.mesh.uvs[tri[0]], b = atlas.mesh.uvs[tri[1]], c = atlas.mesh.uvs[tri[2]];
      const double l1 = (b - a).norm(), l2 = (c - b).norm(), l3 = (a - c).norm();
      const double hyp = std::max({l1, l2, l3});
      REQUIRE(std::abs(hyp * hyp - (l1 * l1 + l2 * l2 + l3 * l3 - hyp * hyp)) < 1e-9);
    }
    CHECK(island_overlap(atlas, 256) == 0);
  }

  TEST_CASE("unwrap single triangle") {
    TriMesh t;
    t.positions = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}};
    t.triangles = {{0, 1, 2}};
    const auto atlas = unwrap_uv(t, 64);
    CHECK(atlas.chart_count() == 1);
    CHECK(atlas.island_count() == 1);
    REQUIRE(atlas.mesh.uvs.size() == 3);
    double umax = 0, vmax = 0;
    for (const auto& uv : atlas.mesh.uvs) {
      CHECK(uv.x() >= 0.0);
      CHECK(uv.y() >= 0.0);
      umax = std::max(umax, uv.x());
      vmax = std::max(vmax, uv.y());
    }
    CHECK(umax <= 1.0);
    CHECK(vmax <= 1.0);
    CHECK(std::max(umax, vmax) > 0.5);  // the lone island fills most of the square
  }

  TEST_CASE("unwrap random blob: UVs in range and islands disjoint") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto b = blob(seed);
      REQUIRE(b.triangles.size() == 512);
      const auto atlas = unwrap_uv(b, 512);
      CHECK(atlas.chart_count() <= 6);
      REQUIRE(atlas.mesh.uvs.size() == atlas.mesh.positions.size());
      for (const auto& uv : atlas.mesh.uvs) {
        REQUIRE(uv.x() >= 0.0);
        REQUIRE(uv.x() <= 1.0);
        REQUIRE(uv.y() >= 0.0);
        REQUIRE(uv.y() <= 1.0);
      }
      CHECK(island_overlap(atlas, 512) == 0);
      // Same geometry after splitting.
      for (std::size_t t = 0; t < b.triangles.size(); ++t)
        for (int k = 0; k < 3; ++k)
          REQUIRE((atlas.mesh.positions[atlas.mesh.triangles[t][static_cast<std::size_t>(k)]] -
                   b.positions[b.triangles[t][static_cast<std::size_t>(k)]]).norm() == 0.0);
    }
  }

  TEST_CASE("bake against itself is flat") {
    const auto atlas = unwrap_uv(fixtures::glyph_source(), 128);
    BakeOptions opt;
    opt.resolution = 128;
    const auto nm = bake_normal_map(atlas.mesh, atlas.mesh, opt);
    REQUIRE(nm.pixels.width == 128);
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        const auto* p = nm.pixels.at(x, y);
        REQUIRE(std::abs(p[0] - 128) <= 2);
        REQUIRE(std::abs(p[1] - 128) <= 2);
        REQUIRE(p[2] >= 253);
      }
  }

  TEST_CASE("sphere baked onto an icosahedron") {
    const auto sphere = fixtures::uv_sphere(80, 160, 1.0);
    const auto atlas = unwrap_uv(fixtures::icosahedron(1.0), 256);
    BakeOptions opt;
    opt.resolution = 256;
    const auto nm = bake_normal_map(sphere, atlas.mesh, opt);

    // Per texel: follow the interpolated LOD normal to the unit sphere and compare.
    double worst = 0.0;
    int covered = 0;
    std::vector<bool> inside(256 * 256, false);
    for_each_texel(atlas.mesh, 256, [&](int x, int y, std::size_t tri, const Vec3& b) {
      const auto frame = tangent_frame(atlas.mesh, tri, b);
      const Vec3 p = bary_point(atlas.mesh, tri, b), d = frame.normal;
      const double pd = p.dot(d), t = -pd + std::sqrt(pd * pd - p.squaredNorm() + 1.0);
      const Vec3 truth = p + t * d;
      worst = std::max(worst, angle_deg(frame.to_world(tex::decode_normal(nm.pixels.at(x, y))), truth));
      inside[static_cast<std::size_t>(y * 256 + x)] = true;
      ++covered;
    });
    CHECK(covered > 1000);
    CHECK(worst < 5.0);

    // Texels outside every chart are the flat encoding.
    int outside = 0;
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x) {
        if (inside[static_cast<std::size_t>(y * 256 + x)]) continue;
        const auto* p = nm.pixels.at(x, y);
        REQUIRE(std::array<int, 3>{p[0], p[1], p[2]} == std::array<int, 3>{128, 128, 255});
        ++outside;
      }
    CHECK(outside > 0);
  }

  TEST_CASE("baking helps on a decimated sphere") {
    const auto sphere = fixtures::uv_sphere(60, 120, 1.0);
    for (int target : {300, 60}) {
      const auto d = decimate(sphere, target);
      const auto atlas = unwrap_uv(d.mesh, 256);
      BakeOptions opt;
      opt.resolution = 256;
      const auto nm = bake_normal_map(sphere, atlas.mesh, opt);
      const auto [geo, baked] = sphere_bake_errors(atlas.mesh, nm);
      CHECK(baked <= geo);
      CHECK(baked < 2.0);
    }
  }

  TEST_CASE("LOD chain") {
    const auto ico = fixtures::icosahedron(1.0);
    const auto single = build_lod_chain(ico, {12}, 64, "ico");
    REQUIRE(single.lods.size() == 1);
    CHECK(single.lods[0].vertexCount == 12);
    CHECK(single.lods[0].mesh.triangles.size() == 20);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const auto* p = single.lods[0].normalMap.pixels.at(x, y);
        REQUIRE(std::abs(p[0] - 128) <= 2);
        REQUIRE(std::abs(p[1] - 128) <= 2);
      }

    const auto asset = build_lod_chain(fixtures::uv_sphere(40, 80, 1.0), {1000, 200, 50}, 64, "ball");
    REQUIRE(asset.lods.size() == 3);
    CHECK(asset.name == "ball");
    for (std::size_t i = 0; i < asset.lods.size(); ++i) {
      const auto& lod = asset.lods[i];
      CHECK(lod.vertexCount <= static_cast<std::size_t>(lod.target));
      CHECK(lod.vertexCount == unique_position_count(lod.mesh));
      if (i > 0) CHECK(lod.vertexCount < asset.lods[i - 1].vertexCount);
      REQUIRE(lod.mesh.uvs.size() == lod.mesh.positions.size());
      for (const auto& uv : lod.mesh.uvs) REQUIRE((uv.array() >= 0.0).all());
      for (const auto& uv : lod.mesh.uvs) REQUIRE((uv.array() <= 1.0).all());
      CHECK(lod.normalMap.pixels.width == 64);
    }
    CHECK_THROWS_AS(build_lod_chain(ico, {10, 10}), Error);
    CHECK_THROWS_AS(build_lod_chain(ico, {}), Error);
  }

  TEST_CASE("glyph asset round trip") {
    const auto asset = build_lod_chain(fixtures::uv_sphere(20, 40, 1.0), {300, 60}, 32, "dot");
    const auto dir = fixtures::temp_dir("glyph");
    save_glyph_asset(asset, dir / "dot" / "glyph.json");
    CHECK(std::filesystem::exists(dir / "dot" / "lod1_normal.png"));
    const auto back = load_glyph_asset(dir / "dot" / "glyph.json");
    CHECK(back.name == "dot");
    REQUIRE(back.lods.size() == 2);
    CHECK(back.lods[1].mesh.triangles == asset.lods[1].mesh.triangles);
    CHECK(back.lods[1].normalMap.pixels == asset.lods[1].normalMap.pixels);
    CHECK(back.lods[0].vertexCount == asset.lods[0].vertexCount);

    save_obj(fixtures::icosahedron(1.0), dir / "bare.obj");
    const auto bare = load_glyph_asset(dir / "bare.obj");
    REQUIRE(bare.lods.size() == 1);
    CHECK(bare.lods[0].mesh.vertex_count() == 12);
  }
}
