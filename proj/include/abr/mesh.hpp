#pragma once

#include "abr/common.hpp"
#include "abr/texture.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abr::mesh {

using Triangle = std::array<std::uint32_t, 3>;

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool valid() const { return (max.array() >= min.array()).all(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double diagonal() const { return extent().norm(); }
  double largest_extent() const { return extent().maxCoeff(); }
};

/// Indexed triangle mesh. Normals and UVs are per vertex and either empty or
/// parallel to `positions`.
struct TriMesh {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Vec2> uvs;
  std::vector<Triangle> triangles;

  std::size_t vertex_count() const { return positions.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_uvs() const { return !uvs.empty(); }
  Aabb bounds() const;
  /// Throws Validation on out-of-range indices, attribute size mismatch or
  /// non-finite coordinates.
  void validate() const;
};

TriMesh parse_obj(std::string_view text);
TriMesh load_obj(const std::filesystem::path& path);
std::string to_obj(const TriMesh& mesh);
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

/// Area-weighted smooth vertex normals.
std::vector<Vec3> compute_vertex_normals(const TriMesh& mesh);
Vec3 face_normal(const TriMesh& mesh, std::size_t tri);
double face_area(const TriMesh& mesh, std::size_t tri);
/// Number of distinct vertex positions (UV seams split vertices without
/// adding geometry).
std::size_t unique_position_count(const TriMesh& mesh);
/// Welds identical positions, drops zero-area triangles and unreferenced
/// vertices. Attributes other than positions are discarded.
TriMesh clean_geometry(const TriMesh& mesh);

// ---------------------------------------------------------------------------
// Orientation

struct GlyphOrientation {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

/// Rotation taking `forward` to +Z and `up` (projected perpendicular to
/// forward) to +Y.
GlyphOrientation orientation_from_axes(const Vec3& forward, const Vec3& up);

struct OrientResult {
  TriMesh mesh;
  GlyphOrientation orientation;
  Vec3 centroid = Vec3::Zero();  // vertex mean, pre-rotation
};

OrientResult orient_mesh(const TriMesh& mesh, const Vec3& forward, const Vec3& up);

// ---------------------------------------------------------------------------
// Decimation

inline constexpr double kBoundaryPenalty = 10.0;

struct DecimateResult {
  TriMesh mesh;
  int target = 0;
  bool targetReached = true;
};

/// Quadric error metric edge collapse down to at most `targetVertices`.
DecimateResult decimate(const TriMesh& mesh, int targetVertices);
/// One collapse sequence, snapshotted at each (strictly decreasing) target.
std::vector<DecimateResult> decimate_progressive(const TriMesh& mesh, std::span<const int> targets);

// ---------------------------------------------------------------------------
// UV atlas

inline constexpr int kDefaultAtlasResolution = 1024;
inline constexpr int kGutterTexels = 3;

struct UvAtlas {
  TriMesh mesh;                     // vertices split at island borders; normals and UVs filled
  std::vector<int> triangleIsland;  // island per triangle
  std::vector<int> islandAxis;      // dominant axis chart (0..5 = +X,-X,+Y,-Y,+Z,-Z) per island
  int resolution = kDefaultAtlasResolution;

  int island_count() const { return static_cast<int>(islandAxis.size()); }
  int chart_count() const;
};

/// Charts by dominant normal axis, split into non-overlapping islands,
/// planar-projected and shelf-packed into [0,1]^2 with gutters.
UvAtlas unwrap_uv(const TriMesh& mesh, int resolution = kDefaultAtlasResolution);

// ---------------------------------------------------------------------------
// Normal baking

struct TangentFrame {
  Vec3 tangent, bitangent, normal;

  Vec3 to_world(const Vec3& t) const { return tangent * t.x() + bitangent * t.y() + normal * t.z(); }
  Vec3 to_tangent(const Vec3& w) const { return {w.dot(tangent), w.dot(bitangent), w.dot(normal)}; }
};

/// Per-triangle UV tangents Gram-Schmidt'ed against the interpolated vertex
/// normal at barycentric `bary`. The baker and the renderer share this.
TangentFrame tangent_frame(const TriMesh& mesh, std::size_t tri, const Vec3& bary);

/// Invokes fn(x, y, tri, bary) for every texel whose center lies inside a
/// UV triangle. Row 0 is v = 1.
void for_each_texel(const TriMesh& mesh, int resolution,
                    const std::function<void(int, int, std::size_t, const Vec3&)>& fn);

inline constexpr double kBakeRayFraction = 0.02;

struct BakeOptions {
  int resolution = kDefaultAtlasResolution;
  double rayFraction = kBakeRayFraction;
  /// Lengthens the ray to 1.25x the largest LOD-to-original distance when that
  /// exceeds rayFraction x diagonal.
  bool extendToDeviation = true;
  int threads = 0;  // 0 = hardware concurrency
};

tex::NormalMap bake_normal_map(const TriMesh& original, const TriMesh& lod, const BakeOptions& options = {});

// ---------------------------------------------------------------------------
// LOD chain

struct LodLevel {
  TriMesh mesh;  // with UVs and normals
  tex::NormalMap normalMap;
  int target = 0;
  std::size_t vertexCount = 0;  // geometric (unique position) count
  bool targetReached = true;
};

struct GlyphAsset {
  std::string name;
  TriMesh canonical;
  GlyphOrientation orientation;
  std::vector<LodLevel> lods;
};

inline const std::vector<int> kDefaultLodTargets = {5000, 500, 100};

GlyphAsset build_lod_chain(const TriMesh& mesh, const std::vector<int>& targets = kDefaultLodTargets,
                           int bakeResolution = kDefaultAtlasResolution, std::string name = {});

/// Directory layout: manifest JSON plus canonical.obj, lod<k>.obj, lod<k>_normal.png.
void save_glyph_asset(const GlyphAsset& asset, const std::filesystem::path& manifest);
/// Accepts a glyph manifest or a bare OBJ (single LOD, no normal map).
GlyphAsset load_glyph_asset(const std::filesystem::path& path);

}  // namespace abr::mesh
