#include "abr/sampling.hpp"

#include "bvh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <tuple>

namespace abr::sampling {

mesh::Aabb VoxelGrid::bounds() const {
  mesh::Aabb box;
  box.expand(origin);
  box.expand(origin + Vec3(dims[0] * spacing.x(), dims[1] * spacing.y(), dims[2] * spacing.z()));
  return box;
}

bool VoxelGrid::contains(const Vec3& p) const {
  const auto box = bounds();
  return (p.array() >= box.min.array()).all() && (p.array() < box.max.array()).all();
}

void VoxelGrid::validate() const {
  for (int d : dims)
    if (d < 1) throw Error(ErrorCode::Validation, "voxel grid dimensions must be >= 1");
  if (!(spacing.array() > 0.0).all()) throw Error(ErrorCode::Validation, "voxel spacing must be positive");
  if (values.size() != size())
    throw Error(ErrorCode::Validation, "voxel grid declares " + std::to_string(size()) + " values but has " +
                                           std::to_string(values.size()));
}

double VoxelGrid::sample(const Vec3& p, Interpolation mode) const {
  if (!contains(p)) return 0.0;
  const Vec3 g = (p - origin).cwiseQuotient(spacing);
  if (mode == Interpolation::Nearest) {
    const int i = std::clamp(static_cast<int>(std::floor(g.x())), 0, dims[0] - 1);
    const int j = std::clamp(static_cast<int>(std::floor(g.y())), 0, dims[1] - 1);
    const int k = std::clamp(static_cast<int>(std::floor(g.z())), 0, dims[2] - 1);
    return at(i, j, k);
  }
  // Trilinear between voxel centers, clamped at the borders.
  int i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(g[a] - 0.5, 0.0, dims[a] - 1.0);
    i0[a] = static_cast<int>(std::floor(c));
    i1[a] = std::min(i0[a] + 1, dims[a] - 1);
    f[a] = c - i0[a];
  }
  double v = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const int i = corner & 1 ? i1[0] : i0[0];
    const int j = corner & 2 ? i1[1] : i0[1];
    const int k = corner & 4 ? i1[2] : i0[2];
    const double w = (corner & 1 ? f[0] : 1 - f[0]) * (corner & 2 ? f[1] : 1 - f[1]) * (corner & 4 ? f[2] : 1 - f[2]);
    v += w * at(i, j, k);
  }
  return v;
}

namespace {

/// Area-preserving map from the unit square onto a triangle mesh.
class SurfaceParam {
 public:
  explicit SurfaceParam(const mesh::TriMesh& m) : mesh_(m) {
    cdf_.reserve(m.triangles.size() + 1);
    cdf_.push_back(0.0);
    for (std::size_t t = 0; t < m.triangles.size(); ++t) cdf_.push_back(cdf_.back() + mesh::face_area(m, t));
    if (!(cdf_.back() > 0.0)) throw Error(ErrorCode::InvalidArgument, "surface domain has zero area");
  }

  /// (triangle, barycentric) for (u, v) in [0,1)^2.
  std::pair<std::size_t, Vec3> locate(double u, double v) const {
    const double a = u * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), a);
    std::size_t tri = static_cast<std::size_t>(std::distance(cdf_.begin(), it)) - 1;
    tri = std::min(tri, mesh_.triangles.size() - 1);
    while (tri + 1 < mesh_.triangles.size() && cdf_[tri + 1] - cdf_[tri] <= 0.0) ++tri;
    const double width = cdf_[tri + 1] - cdf_[tri];
    const double r = width > 0 ? std::clamp((a - cdf_[tri]) / width, 0.0, 1.0) : 0.0;
    const double s = std::sqrt(r);
    return {tri, Vec3(1.0 - s, s * (1.0 - v), s * v)};
  }

  Vec3 point(std::size_t tri, const Vec3& bary) const {
    const auto& t = mesh_.triangles[tri];
    return bary[0] * mesh_.positions[t[0]] + bary[1] * mesh_.positions[t[1]] + bary[2] * mesh_.positions[t[2]];
  }

 private:
  const mesh::TriMesh& mesh_;
  std::vector<double> cdf_;
};

std::vector<double> lattice_axis(double lo, double hi, double spacing) {
  const double extent = hi - lo;
  const long n = static_cast<long>(std::floor(extent / spacing + 1e-9)) + 1;
  const double offset = (extent - static_cast<double>(n - 1) * spacing) / 2.0;
  std::vector<double> out;
  for (long i = 0; i < n; ++i) out.push_back(lo + offset + static_cast<double>(i) * spacing);
  return out;
}

double mesh_field_value(const MeshField& f, std::size_t tri, const Vec3& bary) {
  const auto& t = f.mesh.triangles[tri];
  return std::max(0.0, bary[0] * f.values[t[0]] + bary[1] * f.values[t[1]] + bary[2] * f.values[t[2]]);
}

void validate_mesh_field(const MeshField& f) {
  f.mesh.validate();
  if (f.values.size() != f.mesh.vertex_count())
    throw Error(ErrorCode::Validation, "mesh field value count does not match vertex count");
  if (f.mesh.triangles.empty()) throw Error(ErrorCode::Validation, "mesh field has no triangles");
}

}  // namespace

double evaluate(const ScalarField& field, const Vec3& p) {
  if (const auto* vf = std::get_if<VoxelField>(&field)) return std::max(0.0, vf->grid.sample(p, vf->interpolation));
  const auto& mf = std::get<MeshField>(field);
  validate_mesh_field(mf);
  const mesh::detail::TriangleBvh bvh(mf.mesh);
  const auto cp = bvh.closest_point(p);
  const auto& t = mf.mesh.triangles[cp.triangle];
  const Vec3 a = mf.mesh.positions[t[0]], b = mf.mesh.positions[t[1]], c = mf.mesh.positions[t[2]];
  const Vec3 n = (b - a).cross(c - a);
  const double area2 = n.squaredNorm();
  Vec3 bary(1, 0, 0);
  if (area2 > 0) {
    bary[1] = (cp.point - a).cross(c - a).dot(n) / area2;
    bary[2] = (b - a).cross(cp.point - a).dot(n) / area2;
    bary[0] = 1 - bary[1] - bary[2];
  }
  return mesh_field_value(mf, cp.triangle, bary);
}

SampleSet sample_regular(const Domain& domain, double spacing) {
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw Error(ErrorCode::InvalidArgument, "sample_regular: spacing must be > 0");
  SampleSet out;
  out.record.method = "regular";
  out.record.spacing = spacing;
  if (const auto* box = std::get_if<mesh::Aabb>(&domain)) {
    if (!box->valid()) throw Error(ErrorCode::InvalidArgument, "sample_regular: invalid box");
    const auto xs = lattice_axis(box->min.x(), box->max.x(), spacing);
    const auto ys = lattice_axis(box->min.y(), box->max.y(), spacing);
    const auto zs = lattice_axis(box->min.z(), box->max.z(), spacing);
    for (double z : zs)
      for (double y : ys)
        for (double x : xs) out.points.emplace_back(x, y, z);
    out.record.count = out.points.size();
    return out;
  }
  const auto& m = std::get<mesh::TriMesh>(domain);
  m.validate();
  if (m.triangles.empty()) throw Error(ErrorCode::InvalidArgument, "sample_regular: mesh has no triangles");
  const mesh::Aabb box = m.bounds();
  std::array<std::vector<double>, 3> axes = {lattice_axis(box.min.x(), box.max.x(), spacing),
                                             lattice_axis(box.min.y(), box.max.y(), spacing),
                                             lattice_axis(box.min.z(), box.max.z(), spacing)};
  const double quantum = std::max(box.diagonal(), 1e-300) * 1e-9;
  std::set<std::tuple<long long, long long, long long>> seen;
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    const Vec3 a = m.positions[tri[0]], b = m.positions[tri[1]], c = m.positions[tri[2]];
    const Vec3 n = (b - a).cross(c - a);
    if (!(n.norm() > 0)) continue;
    int axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    const double lo_u = std::min({a[u], b[u], c[u]}), hi_u = std::max({a[u], b[u], c[u]});
    const double lo_v = std::min({a[v], b[v], c[v]}), hi_v = std::max({a[v], b[v], c[v]});
    const double den = (b[u] - a[u]) * (c[v] - a[v]) - (c[u] - a[u]) * (b[v] - a[v]);
    for (double pu : axes[static_cast<std::size_t>(u)]) {
      if (pu < lo_u - 1e-12 || pu > hi_u + 1e-12) continue;
      for (double pv : axes[static_cast<std::size_t>(v)]) {
        if (pv < lo_v - 1e-12 || pv > hi_v + 1e-12) continue;
        const double w1 = ((pu - a[u]) * (c[v] - a[v]) - (c[u] - a[u]) * (pv - a[v])) / den;
        const double w2 = ((b[u] - a[u]) * (pv - a[v]) - (pu - a[u]) * (b[v] - a[v])) / den;
        const double w0 = 1.0 - w1 - w2;
        constexpr double kTol = -1e-9;
        if (w0 < kTol || w1 < kTol || w2 < kTol) continue;
        Vec3 p = w0 * a + w1 * b + w2 * c;
        p[u] = pu;
        p[v] = pv;
        const auto key = std::make_tuple(std::llround(p.x() / quantum), std::llround(p.y() / quantum),
                                         std::llround(p.z() / quantum));
        if (seen.insert(key).second) out.points.push_back(p);
      }
    }
  }
  if (out.points.empty()) {
    // Spacing exceeds the surface: one sample at the surface point nearest the center.
    const mesh::detail::TriangleBvh bvh(m);
    out.points.push_back(bvh.closest_point(box.center()).point);
  }
  out.record.count = out.points.size();
  return out;
}

SampleSet sample_random(const Domain& domain, std::size_t count, std::uint64_t seed) {
  SampleSet out;
  out.record.method = "random";
  out.record.seed = seed;
  out.record.count = count;
  Rng rng(seed);
  out.points.reserve(count);
  if (const auto* box = std::get_if<mesh::Aabb>(&domain)) {
    if (!box->valid()) throw Error(ErrorCode::InvalidArgument, "sample_random: invalid box");
    const Vec3 e = box->extent();
    for (std::size_t i = 0; i < count; ++i) {
      const double x = rng.uniform(), y = rng.uniform(), z = rng.uniform();
      out.points.push_back(box->min + Vec3(x * e.x(), y * e.y(), z * e.z()));
    }
    return out;
  }
  const auto& m = std::get<mesh::TriMesh>(domain);
  m.validate();
  if (count == 0) return out;
  const SurfaceParam param(m);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform(), v = rng.uniform();
    const auto [tri, bary] = param.locate(u, v);
    out.points.push_back(param.point(tri, bary));
  }
  return out;
}

SampleSet sample_density_mh(const ScalarField& field, std::size_t count, std::uint64_t seed,
                            const DensityOptions& options) {
  const int chains = std::max(1, options.chains);
  SampleSet out;
  out.record.method = "density";
  out.record.seed = seed;
  out.record.count = count;
  out.record.burnIn = kBurnIn;
  out.record.thinning = kThinning;
  out.record.chains = chains;
  out.points.reserve(count);

  // Generic chain over a box-shaped state space with density `f`; `emit` maps
  // states to world positions.
  auto runChains = [&](const Vec3& lo, const Vec3& hi, auto&& f, auto&& emit, auto&& findStart) {
    const double sigma = kProposalSigmaFraction * (hi - lo).norm();
    out.record.proposalSigma = sigma;
    for (int c = 0; c < chains; ++c) {
      const std::size_t want = count / static_cast<std::size_t>(chains) +
                               (static_cast<std::size_t>(c) < count % static_cast<std::size_t>(chains) ? 1 : 0);
      Rng rng(chains == 1 ? seed : mix_seed(seed, static_cast<std::uint64_t>(c)));
      Vec3 x = findStart(rng);
      double fx = f(x);
      std::size_t kept = 0;
      for (long step = 0; kept < want; ++step) {
        const Vec3 y = x + sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
        const bool inside = (y.array() >= lo.array()).all() && (y.array() < hi.array()).all();
        const double fy = inside ? f(y) : 0.0;
        const double u = rng.uniform();
        if (fy >= fx || u * fx < fy) {
          x = y;
          fx = fy;
        }
        if (step >= kBurnIn && (step - kBurnIn) % kThinning == kThinning - 1) {
          out.points.push_back(emit(x));
          ++kept;
        }
      }
    }
  };

  if (const auto* vf = std::get_if<VoxelField>(&field)) {
    const VoxelGrid& g = vf->grid;
    g.validate();
    double mass = 0.0;
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      if (!std::isfinite(g.values[i])) throw Error(ErrorCode::Validation, "density field has non-finite values");
      mass += std::max(0.0, g.values[i]);
      if (g.values[i] > g.values[argmax]) argmax = i;
    }
    if (!(mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "density field has zero total mass");
    const auto box = g.bounds();
    const Vec3 e = box.extent();
    auto f = [&](const Vec3& p) { return std::max(0.0, g.sample(p, vf->interpolation)); };
    auto findStart = [&](Rng& rng) {
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const double x = rng.uniform(), y = rng.uniform(), z = rng.uniform();
        const Vec3 p = box.min + Vec3(x * e.x(), y * e.y(), z * e.z());
        if (f(p) > 0.0) return p;
      }
      const std::size_t i = argmax % static_cast<std::size_t>(g.dims[0]);
      const std::size_t j = (argmax / static_cast<std::size_t>(g.dims[0])) % static_cast<std::size_t>(g.dims[1]);
      const std::size_t k = argmax / (static_cast<std::size_t>(g.dims[0]) * static_cast<std::size_t>(g.dims[1]));
      return Vec3(g.origin + Vec3((i + 0.5) * g.spacing.x(), (j + 0.5) * g.spacing.y(), (k + 0.5) * g.spacing.z()));
    };
    runChains(box.min, box.max, f, [](const Vec3& p) { return p; }, findStart);
    return out;
  }

  const auto& mf = std::get<MeshField>(field);
  validate_mesh_field(mf);
  double mass = 0.0;
  for (double v : mf.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::Validation, "density field has non-finite values");
    mass += std::max(0.0, v);
  }
  if (!(mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "density field has zero total mass");
  const SurfaceParam param(mf.mesh);
  // The third state coordinate is unused and pinned to [0, 1) with zero proposal effect on f.
  auto f = [&](const Vec3& s) {
    const auto [tri, bary] = param.locate(s.x(), s.y());
    return mesh_field_value(mf, tri, bary);
  };
  auto findStart = [&](Rng& rng) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const Vec3 s(rng.uniform(), rng.uniform(), 0.5);
      if (f(s) > 0.0) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "density field: no positive-density start found");
  };
  // Run in 2D: z is held fixed by an infinitely wide slab.
  const double sigma2d = kProposalSigmaFraction * std::sqrt(2.0);
  out.record.proposalSigma = sigma2d;
  for (int c = 0; c < chains; ++c) {
    const std::size_t want = count / static_cast<std::size_t>(chains) +
                             (static_cast<std::size_t>(c) < count % static_cast<std::size_t>(chains) ? 1 : 0);
    Rng rng(chains == 1 ? seed : mix_seed(seed, static_cast<std::uint64_t>(c)));
    Vec3 s = findStart(rng);
    double fs = f(s);
    std::size_t kept = 0;
    for (long step = 0; kept < want; ++step) {
      const Vec3 y(s.x() + sigma2d * rng.normal(), s.y() + sigma2d * rng.normal(), s.z());
      const bool inside = y.x() >= 0.0 && y.x() < 1.0 && y.y() >= 0.0 && y.y() < 1.0;
      const double fy = inside ? f(y) : 0.0;
      const double u = rng.uniform();
      if (fy >= fs || u * fs < fy) {
        s = y;
        fs = fy;
      }
      if (step >= kBurnIn && (step - kBurnIn) % kThinning == kThinning - 1) {
        const auto [tri, bary] = param.locate(s.x(), s.y());
        out.points.push_back(param.point(tri, bary));
        ++kept;
      }
    }
  }
  return out;
}

std::string to_csv(const SampleSet& samples) {
  std::string out = "x,y,z\n";
  char buf[128];
  for (const auto& p : samples.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  return out;
}

void save_csv(const SampleSet& samples, const std::filesystem::path& path) { write_text_file(path, to_csv(samples)); }

std::vector<std::uint8_t> to_binary(const SampleSet& samples) {
  std::vector<std::uint8_t> out(4 + 4 + 8 + samples.points.size() * 24);
  std::memcpy(out.data(), "ABRS", 4);
  const std::uint32_t version = 1;
  const std::uint64_t n = samples.points.size();
  std::memcpy(out.data() + 4, &version, 4);
  std::memcpy(out.data() + 8, &n, 8);
  std::size_t off = 16;
  for (const auto& p : samples.points) {
    for (int a = 0; a < 3; ++a) {
      const double v = p[a];
      std::memcpy(out.data() + off, &v, 8);
      off += 8;
    }
  }
  return out;
}

SampleSet from_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "ABRS", 4) != 0)
    throw Error(ErrorCode::Parse, "sample cache: bad header");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data() + 8, 8);
  if (bytes.size() != 16 + n * 24) throw Error(ErrorCode::Parse, "sample cache: size mismatch");
  SampleSet out;
  out.points.resize(n);
  std::size_t off = 16;
  for (auto& p : out.points) {
    for (int a = 0; a < 3; ++a) {
      std::memcpy(&p[a], bytes.data() + off, 8);
      off += 8;
    }
  }
  out.record.count = n;
  return out;
}

}  // namespace abr::sampling
