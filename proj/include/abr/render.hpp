#pragma once

#include "abr/color.hpp"
#include "abr/image.hpp"
#include "abr/mesh.hpp"
#include "abr/sampling.hpp"
#include "abr/scene.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace abr::render {

using scene::Camera;

struct BinBlend {
  int bins = 1;
  double blendDistance = 0.0;  // normalized data units
};

struct BinWeights {
  int binA = 0;
  int binB = 0;
  double weightA = 1.0;  // weight of binA; binB gets 1 - weightA
};

/// Base bin = min(floor(t * N), N - 1). Within d/2 of an interior bin
/// boundary the weight ramps linearly into the neighbouring bin; d is capped
/// at one bin width.
BinWeights compute_bin_blend(double t, const BinBlend& bb);

/// w_i proportional to |n_i|^k, normalized to sum to 1.
Vec3 triplanar_weights(const Vec3& normal, double blendFactor);

enum class LineStyle { Ribbon, Tube };
enum class LineSampling { ArcLength, IntegrationTime };

inline constexpr int kTubeSides = 12;

struct ExtrudeOptions {
  LineStyle style = LineStyle::Ribbon;
  double width = 1.0;   // ribbon width
  double radius = 0.5;  // tube radius
  double rotationalOffset = 0.0;  // degrees, about the tangent
  LineSampling sampling = LineSampling::ArcLength;
  /// Arc length or integration-time step; 0 samples every input point.
  double step = 0.0;
  int sides = kTubeSides;
  /// Optional per-sample width multipliers, indexed like the input points.
  std::vector<double> widthScale;
};

struct ExtrudedLine {
  mesh::TriMesh mesh;          // UVs: u = arc length from the line origin, v in [0, 1]
  std::vector<double> param;   // per mesh vertex: fractional input point index
  std::vector<Vec3> samples;   // centerline sample positions
  std::vector<double> sampleU; // arc length at each sample
};

/// Missing normals are replaced by rotation-minimizing frames.
ExtrudedLine extrude_line(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                          const std::vector<double>& times, const ExtrudeOptions& options);

/// Rotation taking +Z to `direction` whose roll keeps +Y as close to `up` as possible.
Eigen::Quaterniond align_forward(const Vec3& direction, const Vec3& up = Vec3::UnitY());

enum class OrientationMode { Axis, Vector, Random };

struct GlyphInstance {
  Vec3 translation = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double scale = 1.0;
  double axialScale = 1.0;  // radius multiplier across the forward axis
  std::size_t sample = 0;
};

struct PlacementOptions {
  OrientationMode mode = OrientationMode::Vector;
  double sizePercent = 2.0;
  double dataExtent = 1.0;  // largest bounding-box extent of the data object
  std::uint64_t seed = 0;
  Vec3 worldUp = Vec3::UnitY();
  /// Normalized width values in [0, 1]; axial scale = 0.5 + t.
  std::vector<double> width;
};

std::vector<GlyphInstance> place_glyphs(const std::vector<Vec3>& samples, const std::vector<Vec3>& vectors,
                                        const PlacementOptions& options);

/// Projected bounding-sphere diameter thresholds for LOD selection.
inline constexpr double kLod0Pixels = 64.0;
inline constexpr double kLod1Pixels = 16.0;
int select_lod(double projectedDiameter, int lodCount);

inline constexpr float kVolumeIdOpacity = 0.5f;

struct RenderOptions {
  int threads = 0;  // 0: hardware concurrency
  std::optional<std::uint64_t> seed;  // overrides the scene seed
};

struct RenderResult {
  Image color;                      // RGBA
  std::vector<float> depth;         // eye-space depth, +inf for background
  /// 0 background, k + 1 for layer k: the nearest surface, replaced by a
  /// volume layer wherever that volume's accumulated opacity reaches kVolumeIdOpacity.
  std::vector<std::uint16_t> ids;
  /// Per layer: pixels where a surface layer is nearest, or where a volume
  /// layer's opacity exceeds 1/255.
  std::vector<std::size_t> layerPixels;
  std::size_t triangles = 0;
  std::size_t instances = 0;
};

RenderResult render_scene(const scene::Scene& scene, const Camera& camera, const RenderOptions& options = {});

struct VolumeParams {
  const sampling::VoxelGrid* grid = nullptr;
  const color::ColorMap* colormap = nullptr;
  scene::DataRange range;
  double opacityScale = 1.0;
  double stepSize = 0.1;
};

/// Front-to-back ray march composited over `color`; stops at accumulated
/// opacity 0.99 or the depth buffer. Returns the per-pixel accumulated opacity.
std::vector<float> raymarch_volume(const VolumeParams& params, const Camera& camera, const std::vector<float>& depth,
                                   Image& color, int threads = 0);

/// Float32 depth as RAW plus a JSON header next to it (<path>.json).
void save_depth(const std::vector<float>& depth, int width, int height, const std::filesystem::path& path);

}  // namespace abr::render
