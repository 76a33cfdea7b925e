#include "abr/mesh.hpp"

#include "bvh.hpp"
#include "parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace abr::mesh {

TangentFrame tangent_frame(const TriMesh& mesh, std::size_t tri, const Vec3& bary) {
  const auto& t = mesh.triangles[tri];
  Vec3 n = mesh.has_normals()
               ? Vec3(bary[0] * mesh.normals[t[0]] + bary[1] * mesh.normals[t[1]] + bary[2] * mesh.normals[t[2]])
               : face_normal(mesh, tri);
  if (!(n.norm() > 1e-12)) n = face_normal(mesh, tri);
  n.normalize();
  Vec3 tangent = Vec3::UnitX(), bitangent = Vec3::UnitY();
  double handedness = 1.0;
  if (mesh.has_uvs()) {
    const Vec3 e1 = mesh.positions[t[1]] - mesh.positions[t[0]];
    const Vec3 e2 = mesh.positions[t[2]] - mesh.positions[t[0]];
    const Vec2 d1 = mesh.uvs[t[1]] - mesh.uvs[t[0]];
    const Vec2 d2 = mesh.uvs[t[2]] - mesh.uvs[t[0]];
    const double det = d1.x() * d2.y() - d2.x() * d1.y();
    if (std::abs(det) > 1e-20) {
      tangent = (e1 * d2.y() - e2 * d1.y()) / det;
      bitangent = (e2 * d1.x() - e1 * d2.x()) / det;
    }
  }
  Vec3 tn = tangent - n * n.dot(tangent);
  if (!(tn.norm() > 1e-12)) {
    // Tangent parallel to the normal: pick any perpendicular direction.
    tn = n.unitOrthogonal();
  }
  tn.normalize();
  handedness = n.cross(tn).dot(bitangent) < 0.0 ? -1.0 : 1.0;
  return {tn, handedness * n.cross(tn), n};
}

void for_each_texel(const TriMesh& mesh, int resolution,
                    const std::function<void(int, int, std::size_t, const Vec3&)>& fn) {
  if (!mesh.has_uvs()) throw Error(ErrorCode::InvalidArgument, "mesh has no UVs");
  const double res = resolution;
  for (std::size_t tri = 0; tri < mesh.triangles.size(); ++tri) {
    const auto& t = mesh.triangles[tri];
    // Texel space: x = u * res, y = (1 - v) * res.
    Vec2 p[3];
    for (int k = 0; k < 3; ++k) {
      const Vec2& uv = mesh.uvs[t[static_cast<std::size_t>(k)]];
      p[k] = {uv.x() * res, (1.0 - uv.y()) * res};
    }
    const double area = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[2] - p[0]).x() * (p[1] - p[0]).y();
    if (std::abs(area) < 1e-18) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}))));
    const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}))));
    const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 c(x + 0.5, y + 0.5);
        auto edge = [&](const Vec2& a, const Vec2& b) {
          return ((b - a).x() * (c - a).y() - (c - a).x() * (b - a).y()) / area;
        };
        const double w0 = edge(p[1], p[2]);
        const double w1 = edge(p[2], p[0]);
        const double w2 = edge(p[0], p[1]);
        constexpr double kEps = -1e-9;
        if (w0 < kEps || w1 < kEps || w2 < kEps) continue;
        fn(x, y, tri, Vec3(w0, w1, w2));
      }
    }
  }
}

tex::NormalMap bake_normal_map(const TriMesh& original, const TriMesh& lod, const BakeOptions& options) {
  original.validate();
  lod.validate();
  if (!lod.has_uvs()) throw Error(ErrorCode::InvalidArgument, "bake_normal_map: LOD mesh needs UVs");
  if (options.resolution < 1) throw Error(ErrorCode::InvalidArgument, "bake_normal_map: resolution must be >= 1");
  const int res = options.resolution;
  const std::vector<Vec3> origNormals = original.has_normals() ? original.normals : compute_vertex_normals(original);
  const detail::TriangleBvh bvh(original);

  double rayLength = options.rayFraction * original.bounds().diagonal();
  if (options.extendToDeviation) {
    double deviation = 0.0;
    for (const auto& p : lod.positions) deviation = std::max(deviation, bvh.closest_point(p).distance);
    for (std::size_t t = 0; t < lod.triangles.size(); ++t) {
      const auto& tri = lod.triangles[t];
      const Vec3 c = (lod.positions[tri[0]] + lod.positions[tri[1]] + lod.positions[tri[2]]) / 3.0;
      deviation = std::max(deviation, bvh.closest_point(c).distance);
    }
    rayLength = std::max(rayLength, 1.25 * deviation);
  }

  // Texel -> (triangle, barycentric); the last triangle covering a texel wins.
  struct Sample {
    std::int64_t tri = -1;
    Vec3 bary;
  };
  std::vector<Sample> samples(static_cast<std::size_t>(res) * res);
  for_each_texel(lod, res, [&](int x, int y, std::size_t tri, const Vec3& bary) {
    samples[static_cast<std::size_t>(y) * res + x] = {static_cast<std::int64_t>(tri), bary};
  });

  tex::NormalMap map{Image(res, res, 3)};
  const auto flat = tex::encode_normal(Vec3::UnitZ());
  abr::detail::parallel_for(res, options.threads, [&](int y) {
    for (int x = 0; x < res; ++x) {
      std::uint8_t* out = map.pixels.at(x, y);
      const Sample& s = samples[static_cast<std::size_t>(y) * res + x];
      std::array<std::uint8_t, 3> enc = flat;
      if (s.tri >= 0) {
        const auto& t = lod.triangles[static_cast<std::size_t>(s.tri)];
        const Vec3 p = s.bary[0] * lod.positions[t[0]] + s.bary[1] * lod.positions[t[1]] + s.bary[2] * lod.positions[t[2]];
        const TangentFrame frame = tangent_frame(lod, static_cast<std::size_t>(s.tri), s.bary);
        if (auto hit = bvh.nearest_hit(p, frame.normal, -rayLength, rayLength)) {
          const auto& o = original.triangles[hit->triangle];
          Vec3 n = hit->bary[0] * origNormals[o[0]] + hit->bary[1] * origNormals[o[1]] + hit->bary[2] * origNormals[o[2]];
          if (n.norm() > 1e-12) {
            n.normalize();
            Vec3 local = frame.to_tangent(n);
            // Tangent-space z is kept non-negative.
            local.z() = std::max(local.z(), 0.0);
            enc = tex::encode_normal(local.normalized());
          }
        }
      }
      std::copy(enc.begin(), enc.end(), out);
    }
  });
  return map;
}

GlyphAsset build_lod_chain(const TriMesh& mesh, const std::vector<int>& targets, int bakeResolution, std::string name) {
  mesh.validate();
  if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "build_lod_chain: at least one target required");
  GlyphAsset asset;
  asset.name = std::move(name);
  asset.canonical = mesh;
  if (!asset.canonical.has_normals()) asset.canonical.normals = compute_vertex_normals(asset.canonical);

  const auto levels = decimate_progressive(mesh, targets);
  BakeOptions bake;
  bake.resolution = bakeResolution;
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (const auto& level : levels) {
    const std::size_t count = unique_position_count(level.mesh);
    // A level that could not get smaller than its predecessor adds nothing.
    if (count >= previous) continue;
    previous = count;
    UvAtlas atlas = unwrap_uv(level.mesh, bakeResolution);
    LodLevel lod;
    lod.normalMap = bake_normal_map(asset.canonical, atlas.mesh, bake);
    lod.mesh = std::move(atlas.mesh);
    lod.target = level.target;
    lod.vertexCount = count;
    lod.targetReached = level.targetReached;
    asset.lods.push_back(std::move(lod));
  }
  return asset;
}

using json = nlohmann::json;

void save_glyph_asset(const GlyphAsset& asset, const std::filesystem::path& manifest) {
  const auto dir = manifest.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  save_obj(asset.canonical, dir / "canonical.obj");
  json lods = json::array();
  for (std::size_t k = 0; k < asset.lods.size(); ++k) {
    const auto& lod = asset.lods[k];
    const std::string meshName = "lod" + std::to_string(k) + ".obj";
    const std::string mapName = "lod" + std::to_string(k) + "_normal.png";
    save_obj(lod.mesh, dir / meshName);
    json entry{{"mesh", meshName},
               {"target", lod.target},
               {"vertexCount", lod.vertexCount},
               {"targetReached", lod.targetReached}};
    if (!lod.normalMap.pixels.empty()) {
      save_png(lod.normalMap.pixels, dir / mapName);
      entry["normalMap"] = mapName;
    }
    lods.push_back(entry);
  }
  const auto& q = asset.orientation.rotation;
  json doc{{"name", asset.name},
           {"kind", "glyph"},
           {"orientation", {q.w(), q.x(), q.y(), q.z()}},
           {"canonical", "canonical.obj"},
           {"lods", lods}};
  write_text_file(manifest, doc.dump(2) + "\n");
}

GlyphAsset load_glyph_asset(const std::filesystem::path& path) {
  GlyphAsset asset;
  if (path.extension() == ".obj") {
    asset.name = path.stem().string();
    asset.canonical = load_obj(path);
    if (!asset.canonical.has_normals()) asset.canonical.normals = compute_vertex_normals(asset.canonical);
    LodLevel lod;
    lod.mesh = asset.canonical;
    lod.vertexCount = unique_position_count(lod.mesh);
    lod.target = static_cast<int>(lod.vertexCount);
    asset.lods.push_back(std::move(lod));
    return asset;
  }
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  try {
    const auto dir = path.parent_path();
    asset.name = doc.value("name", "");
    if (doc.contains("orientation")) {
      const auto& q = doc["orientation"];
      asset.orientation.rotation = Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(),
                                                      q.at(2).get<double>(), q.at(3).get<double>());
    }
    asset.canonical = load_obj(dir / doc.at("canonical").get<std::string>());
    for (const auto& e : doc.at("lods")) {
      LodLevel lod;
      lod.mesh = load_obj(dir / e.at("mesh").get<std::string>());
      if (!lod.mesh.has_normals()) lod.mesh.normals = compute_vertex_normals(lod.mesh);
      if (e.contains("normalMap"))
        lod.normalMap.pixels = to_rgb(load_image(dir / e["normalMap"].get<std::string>()));
      lod.target = e.value("target", 0);
      lod.vertexCount = e.value("vertexCount", unique_position_count(lod.mesh));
      lod.targetReached = e.value("targetReached", true);
      asset.lods.push_back(std::move(lod));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  if (asset.lods.empty()) throw Error(ErrorCode::Parse, path.string() + ": glyph asset has no LODs");
  return asset;
}

}  // namespace abr::mesh
