#pragma once

#include "abr/mesh.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <span>
#include <variant>
#include <vector>

namespace abr::sampling {

enum class Interpolation { Nearest, Trilinear };

/// Cell-centered voxel grid: voxel (i, j, k) covers
/// [origin + (i, j, k) * spacing, origin + (i + 1, j + 1, k + 1) * spacing).
/// Values are stored x-fastest.
struct VoxelGrid {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::vector<double> values;

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  double at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i];
  }
  mesh::Aabb bounds() const;
  bool contains(const Vec3& p) const;
  /// Zero outside the grid.
  double sample(const Vec3& p, Interpolation mode) const;
  void validate() const;
};

struct VoxelField {
  VoxelGrid grid;
  Interpolation interpolation = Interpolation::Nearest;
};

/// Per-vertex scalars on a mesh, interpolated barycentrically.
struct MeshField {
  mesh::TriMesh mesh;
  std::vector<double> values;
};

using ScalarField = std::variant<VoxelField, MeshField>;
using Domain = std::variant<mesh::Aabb, mesh::TriMesh>;

struct GenerationRecord {
  std::string method;  // "regular", "random", "density"
  std::uint64_t seed = 0;
  std::size_t count = 0;
  double spacing = 0.0;
  double proposalSigma = 0.0;
  int burnIn = 0;
  int thinning = 0;
  int chains = 1;
};

struct SampleSet {
  std::vector<Vec3> points;
  GenerationRecord record;
};

inline constexpr double kProposalSigmaFraction = 0.05;
inline constexpr int kBurnIn = 1000;
inline constexpr int kThinning = 5;

SampleSet sample_regular(const Domain& domain, double spacing);
SampleSet sample_random(const Domain& domain, std::size_t count, std::uint64_t seed);

struct DensityOptions {
  int chains = 1;
};

/// Metropolis-Hastings with a Gaussian random-walk proposal (sigma = 5% of
/// the domain diagonal), 1000 burn-in steps, and every 5th chain state kept.
/// Surface fields run the chain on an area-preserving unit-square
/// parameterization of the mesh.
SampleSet sample_density_mh(const ScalarField& field, std::size_t count, std::uint64_t seed,
                            const DensityOptions& options = {});

double evaluate(const ScalarField& field, const Vec3& p);

std::string to_csv(const SampleSet& samples);
void save_csv(const SampleSet& samples, const std::filesystem::path& path);
/// Binary cache: "ABRS" magic, u32 version, u64 count, then count x 3 doubles (little endian).
std::vector<std::uint8_t> to_binary(const SampleSet& samples);
SampleSet from_binary(std::span<const std::uint8_t> bytes);

}  // namespace abr::sampling
