#pragma once

#include "abr/color.hpp"
#include "abr/image.hpp"
#include "abr/mesh.hpp"
#include "abr/sampling.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace abr::fixtures {

/// Latitude-longitude sphere: `rings` interior rings of `segments` vertices
/// plus two poles. 250 x 400 gives 100002 vertices.
mesh::TriMesh uv_sphere(int rings, int segments, double radius = 1.0);
mesh::TriMesh icosahedron(double radius = 1.0);
/// Two triangles covering [x0, x1] x [y0, y1] at height z, facing +Z.
mesh::TriMesh quad(double x0, double y0, double x1, double y1, double z);
/// Elongated bumpy ellipsoid (about 5k vertices), the fixture glyph source.
mesh::TriMesh glyph_source();

/// Three vertical blocks of pure red, green and blue.
Image three_block_rgb(int width, int height);
/// Rows of soft horizontal noise bands, a stand-in for a scanned brush stroke.
Image stroke_source(int width, int height, std::uint64_t seed);
/// Ink dots on paper; density grows with `level`.
Image ink_dots(int size, int level, std::uint64_t seed);
/// Smooth "photo" with a few dominant hues, used as palette input.
Image artifact_photo(int width, int height);

/// 8x8x1 voxel densities used by the sampling criteria.
sampling::VoxelGrid constant_grid();
sampling::VoxelGrid split_grid();  // left half weight 2, right half weight 1

/// Writes the raw multivariate ocean scene inputs into `dir`:
///   photo.png, stroke.png, glyph.obj, seafloor.obj + seafloor_vars.csv,
///   stations.csv, currents.json, chlorophyll.json, ink_{0,1,2}.png, inkdots.json,
///   scene.json, camera.json.
/// scene.json refers to derived assets (colormap.xml, line.png, glyph/glyph.json)
/// that the pipeline produces; build_gulf_assets makes them directly.
void write_gulf_inputs(const std::filesystem::path& dir);

struct GulfAssetOptions {
  int bakeResolution = 256;
  std::vector<int> lodTargets{2000, 500, 100};
  int lineHeight = 512;
};

/// Produces colormap.xml, line.png and glyph/ in `dir` from the raw inputs.
void build_gulf_assets(const std::filesystem::path& dir, const GulfAssetOptions& options = {});

/// Inputs plus assets; returns the scene path.
std::filesystem::path write_gulf_scene(const std::filesystem::path& dir, const GulfAssetOptions& options = {});

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace abr::fixtures
