#pragma once

#include "abr/assetlib.hpp"
#include "abr/color.hpp"
#include "abr/mesh.hpp"
#include "abr/sampling.hpp"
#include "abr/texture.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abr::scene {

enum class DataKind { PointSet, LineSet, Mesh, Volume };
const char* to_string(DataKind kind);

struct Polyline {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or parallel to points
  std::vector<double> times;  // integration time per point; empty means unknown
};

/// Where a data object came from, kept so scenes serialize back to paths.
struct DataSource {
  std::string format;  // "obj", "csv", "polyline", "volume"
  std::string path;
  std::string variables;  // optional per-vertex CSV for OBJ meshes
  bool operator==(const DataSource&) const = default;
};

/// Variables are per point (PointSet), per polyline point in concatenation
/// order (LineSet), per vertex (Mesh) or per voxel (Volume).
struct DataObject {
  std::string id;
  DataKind kind = DataKind::PointSet;
  std::vector<Vec3> points;
  std::vector<Polyline> lines;
  mesh::TriMesh mesh;
  sampling::VoxelGrid grid;
  std::map<std::string, std::vector<double>> scalars;
  std::map<std::string, std::vector<Vec3>> vectors;
  mesh::Aabb bounds;
  DataSource source;

  std::size_t element_count() const;
  bool has_scalar(const std::string& name) const { return scalars.count(name) > 0; }
  bool has_vector(const std::string& name) const { return vectors.count(name) > 0; }
  /// Recomputes bounds and checks variable lengths and finiteness.
  void finalize();
};

/// Formats: "obj" (optional per-vertex CSV variables), "csv" (x,y,z columns
/// plus variables), "polyline" (JSON), "volume" (JSON header with inline
/// values or a RAW file). Vector variables in CSV use <name>_x/_y/_z columns.
/// An empty format is inferred from the extension and JSON keys.
DataObject load_data_object(const std::filesystem::path& path, std::string format = {},
                            const std::filesystem::path& variables = {});
DataObject parse_point_csv(std::string_view text);
DataObject parse_polyline_json(std::string_view text);
/// `dir` resolves a "raw" path in the header.
DataObject parse_volume_json(std::string_view text, const std::filesystem::path& dir = {});

struct DataRange {
  double min = 0.0;
  double max = 1.0;
  bool operator==(const DataRange&) const = default;
};

/// (value - min) / (max - min), clamped to [0, 1].
double normalize(double value, const DataRange& range);
DataRange range_of(const std::vector<double>& values);

enum class LayerType { Glyph, Line, Surface, Volume };
const char* to_string(LayerType type);
LayerType parse_layer_type(std::string_view text);

struct Binding {
  std::string variable;
  std::optional<DataRange> range;  // defaults to the variable's min/max
  bool operator==(const Binding&) const = default;
};

struct VisLayer {
  std::string id;
  LayerType type = LayerType::Glyph;
  std::string dataObject;

  std::optional<Binding> color;        // scalar
  std::optional<Binding> texture;      // scalar, selects the texture-set bin
  std::optional<Binding> size;         // scalar; glyph axial radius or line width
  std::optional<Binding> orientation;  // vector
  std::optional<Binding> density;      // scalar, for density glyph sampling

  std::string colormap;
  std::string textureSet;
  std::string glyph;
  std::string alphaMask;
  std::string normalMap;

  color::Rgb8 baseColor{200, 200, 200};
  double glyphSizePercent = 2.0;      // % of the data object's largest extent
  std::string orientationMode = "vector";  // "vector", "axis", "random"
  std::string samplingMethod = "data";     // "data", "regular", "random", "density"
  double samplingSpacing = 0.0;            // regular; 0 means 5% of the largest extent
  int sampleCount = 200;                   // random / density
  double blendDistance = 0.0;
  double projectionBlendFactor = 4.0;
  double textureScale = 1.0;  // texture repeats per world unit (surfaces) or per unit arc length (lines)
  std::string lineStyle = "ribbon";  // "ribbon", "tube"
  double ribbonWidth = 1.0;
  double tubeRadius = 0.5;
  double rotationalOffset = 0.0;  // degrees
  std::string lineSampling = "arc-length";  // or "integration-time"
  double lineStep = 0.0;  // 0: one sample per input point
  double opacityScale = 1.0;
  double stepSize = 0.0;  // 0: half the smallest voxel spacing

  /// Texture-set bin count, filled in by add_layer.
  int bins = 0;

  bool operator==(const VisLayer&) const = default;
};

struct Camera {
  Vec3 position{0, 0, 5};
  Vec3 lookAt{0, 0, 0};
  Vec3 up{0, 1, 0};
  double fovY = 45.0;  // degrees
  int width = 512;
  int height = 512;

  void validate() const;
  bool operator==(const Camera&) const = default;
};

struct Light {
  Vec3 direction{-0.4, -0.6, -0.7};  // direction the light travels
  double ambient = 0.3;
  bool operator==(const Light&) const = default;
};

struct AssetRef {
  std::string id;
  assets::AssetKind kind = assets::AssetKind::ColorMap;
  std::string path;       // file path, or empty when libraryId is set
  std::string libraryId;  // asset library id
  bool operator==(const AssetRef&) const = default;
};

struct Asset {
  AssetRef ref;
  assets::LoadedAsset value;
};

struct Scene {
  std::vector<std::shared_ptr<const DataObject>> dataObjects;
  std::map<std::string, std::shared_ptr<const Asset>> assets;
  std::vector<VisLayer> layers;
  Camera camera;
  Light light;
  color::Rgb8 background{255, 255, 255};
  std::uint64_t seed = 0;
  std::filesystem::path baseDir;
  std::string library;  // library root as written in the file

  const DataObject* data(const std::string& id) const;
  const Asset* asset(const std::string& id) const;
};

struct Diagnostic {
  std::string layer;  // empty for scene-level diagnostics
  std::string message;
  bool operator==(const Diagnostic&) const = default;
};

std::vector<Diagnostic> validate_layer(const Scene& scene, const VisLayer& layer);
/// Empty iff the scene is renderable.
std::vector<Diagnostic> validate_scene(const Scene& scene);

/// Returns a new scene with the layer appended (bins recorded). Throws a
/// Validation error listing every binding problem at once.
Scene add_layer(const Scene& scene, VisLayer layer);

/// Parses a scene document; relative paths resolve against `baseDir`.
/// `libraryRoot` overrides the document's "library" entry when non-empty.
Scene parse_scene(std::string_view json, const std::filesystem::path& baseDir,
                  const std::filesystem::path& libraryRoot = {});
Scene load_scene(const std::filesystem::path& path, const std::filesystem::path& libraryRoot = {});
std::string serialize_scene(const Scene& scene);

/// Accepts a bare camera or an object with a "camera" member; validated.
Camera parse_camera(std::string_view json);
std::string serialize_camera(const Camera& camera);

std::string diagnostics_json(const std::vector<Diagnostic>& diagnostics);

}  // namespace abr::scene
