#include "abr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace abr::mesh {

namespace {

int dominant_axis_chart(const Vec3& n) {
  int axis = 0;
  n.cwiseAbs().maxCoeff(&axis);
  return 2 * axis + (n[axis] < 0 ? 1 : 0);
}

/// Projection onto the chart plane, oriented so front faces stay counter-clockwise.
Vec2 project(const Vec3& p, int chart) {
  switch (chart) {
    case 0: return {-p.z(), p.y()};  // +X
    case 1: return {p.z(), p.y()};   // -X
    case 2: return {p.x(), -p.z()};  // +Y
    case 3: return {p.x(), p.z()};   // -Y
    case 4: return {p.x(), p.y()};   // +Z
    default: return {-p.x(), p.y()}; // -Z
  }
}

using Tri2 = std::array<Vec2, 3>;

/// True when the interiors overlap by more than `eps` (separating axis test).
bool triangles_overlap(const Tri2& a, const Tri2& b, double eps) {
  for (const Tri2* t : {&a, &b}) {
    for (int k = 0; k < 3; ++k) {
      const Vec2 e = (*t)[static_cast<std::size_t>((k + 1) % 3)] - (*t)[static_cast<std::size_t>(k)];
      const Vec2 axis(-e.y(), e.x());
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : a) {
        amin = std::min(amin, axis.dot(p));
        amax = std::max(amax, axis.dot(p));
      }
      for (const auto& p : b) {
        bmin = std::min(bmin, axis.dot(p));
        bmax = std::max(bmax, axis.dot(p));
      }
      const double scale = axis.norm();
      if (std::min(amax, bmax) - std::max(amin, bmin) <= eps * scale) return false;
    }
  }
  return true;
}

struct Island {
  int chart = 0;
  std::vector<std::size_t> triangles;
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  Vec2 offset = Vec2::Zero();  // packed position of `lo`
};

class CellGrid {
 public:
  explicit CellGrid(double cell) : cell_(cell) {}
  template <typename Fn>
  void visit(const Vec2& lo, const Vec2& hi, Fn&& fn) {
    const long x0 = key(lo.x()), x1 = key(hi.x()), y0 = key(lo.y()), y1 = key(hi.y());
    for (long x = x0; x <= x1; ++x)
      for (long y = y0; y <= y1; ++y) fn(cells_[(x << 32) ^ (y & 0xffffffffL)]);
  }

 private:
  long key(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  double cell_;
  std::unordered_map<long, std::vector<std::size_t>> cells_;
};

bool shelf_pack(std::vector<Island>& islands, const std::vector<std::size_t>& order, double scale, double gutter,
                double margin) {
  double x = margin, y = margin, shelf = 0.0;
  for (std::size_t idx : order) {
    Island& is = islands[idx];
    const double w = (is.hi.x() - is.lo.x()) * scale;
    const double h = (is.hi.y() - is.lo.y()) * scale;
    if (w > 1.0 - 2 * margin || h > 1.0 - 2 * margin) return false;
    if (x + w > 1.0 - margin) {
      x = margin;
      y += shelf + gutter;
      shelf = 0.0;
    }
    if (y + h > 1.0 - margin) return false;
    is.offset = {x, y};
    x += w + gutter;
    shelf = std::max(shelf, h);
  }
  return true;
}

}  // namespace

UvAtlas unwrap_uv(const TriMesh& input, int resolution) {
  input.validate();
  if (resolution < 16) throw Error(ErrorCode::InvalidArgument, "unwrap_uv: resolution must be >= 16");
  const TriMesh& mesh = input;
  const std::size_t nt = mesh.triangles.size();
  const std::vector<Vec3> normals = mesh.has_normals() ? mesh.normals : compute_vertex_normals(mesh);

  std::vector<int> chart(nt);
  for (std::size_t t = 0; t < nt; ++t) chart[t] = dominant_axis_chart(face_normal(mesh, t));

  // Edge adjacency through welded positions.
  std::map<std::tuple<double, double, double>, std::uint32_t> weld;
  std::vector<std::uint32_t> wid(mesh.positions.size());
  for (std::size_t i = 0; i < mesh.positions.size(); ++i) {
    const auto& p = mesh.positions[i];
    wid[i] = weld.emplace(std::make_tuple(p.x(), p.y(), p.z()), static_cast<std::uint32_t>(weld.size())).first->second;
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> edgeFaces;
  for (std::size_t t = 0; t < nt; ++t)
    for (int k = 0; k < 3; ++k) {
      auto a = wid[mesh.triangles[t][static_cast<std::size_t>(k)]];
      auto b = wid[mesh.triangles[t][static_cast<std::size_t>((k + 1) % 3)]];
      if (a > b) std::swap(a, b);
      edgeFaces[{a, b}].push_back(t);
    }
  std::vector<std::vector<std::size_t>> adjacency(nt);
  for (const auto& [edge, faces] : edgeFaces)
    for (auto f : faces)
      for (auto g : faces)
        if (f != g) adjacency[f].push_back(g);

  std::vector<Tri2> proj(nt);
  double edgeSum = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    for (int k = 0; k < 3; ++k)
      proj[t][static_cast<std::size_t>(k)] = project(mesh.positions[mesh.triangles[t][static_cast<std::size_t>(k)]], chart[t]);
    edgeSum += (proj[t][1] - proj[t][0]).norm();
  }
  const double cellSize = nt > 0 ? std::max(edgeSum / static_cast<double>(nt), 1e-12) : 1.0;

  // Grow islands breadth-first, refusing triangles that would overlap.
  std::vector<int> island(nt, -1);
  std::vector<Island> islands;
  for (std::size_t seed = 0; seed < nt; ++seed) {
    if (island[seed] >= 0) continue;
    const int id = static_cast<int>(islands.size());
    islands.push_back({});
    Island& is = islands.back();
    is.chart = chart[seed];
    CellGrid grid(cellSize);
    std::vector<std::size_t> queue{seed};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const std::size_t t = queue[qi];
      if (island[t] >= 0) continue;
      Vec2 lo = proj[t][0].cwiseMin(proj[t][1]).cwiseMin(proj[t][2]);
      Vec2 hi = proj[t][0].cwiseMax(proj[t][1]).cwiseMax(proj[t][2]);
      bool overlap = false;
      const double eps = 1e-9 * cellSize;
      grid.visit(lo, hi, [&](std::vector<std::size_t>& cell) {
        for (std::size_t other : cell)
          if (!overlap && triangles_overlap(proj[t], proj[other], eps)) overlap = true;
      });
      if (overlap) continue;
      island[t] = id;
      is.triangles.push_back(t);
      is.lo = is.lo.cwiseMin(lo);
      is.hi = is.hi.cwiseMax(hi);
      grid.visit(lo, hi, [&](std::vector<std::size_t>& cell) { cell.push_back(t); });
      for (auto n : adjacency[t])
        if (island[n] < 0 && chart[n] == is.chart) queue.push_back(n);
    }
  }

  // Uniform texel density; shrink until every island fits.
  std::vector<std::size_t> order(islands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (islands[a].hi.y() - islands[a].lo.y()) > (islands[b].hi.y() - islands[b].lo.y());
  });
  const double gutter = static_cast<double>(kGutterTexels) / resolution;
  const double margin = 2.0 / resolution;
  double boxArea = 0.0, maxSide = 0.0;
  for (const auto& is : islands) {
    const Vec2 e = is.hi - is.lo;
    boxArea += e.x() * e.y();
    maxSide = std::max({maxSide, e.x(), e.y()});
  }
  double scale = maxSide > 0 ? (1.0 - 2 * margin) / maxSide : 1.0;
  if (boxArea > 0) scale = std::min(scale, std::sqrt(1.0 / boxArea));
  int attempts = 0;
  while (!shelf_pack(islands, order, scale, gutter, margin)) {
    scale *= 0.97;
    if (++attempts > 2000) throw Error(ErrorCode::Validation, "unwrap_uv: charts do not fit the atlas");
  }

  UvAtlas atlas;
  atlas.resolution = resolution;
  atlas.triangleIsland = island;
  for (const auto& is : islands) atlas.islandAxis.push_back(is.chart);
  // Split vertices per (vertex, island).
  std::map<std::pair<std::uint32_t, int>, std::uint32_t> remap;
  TriMesh& out = atlas.mesh;
  for (std::size_t t = 0; t < nt; ++t) {
    const Island& is = islands[static_cast<std::size_t>(island[t])];
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      const auto v = mesh.triangles[t][static_cast<std::size_t>(k)];
      auto [it, inserted] = remap.emplace(std::make_pair(v, island[t]), static_cast<std::uint32_t>(out.positions.size()));
      if (inserted) {
        out.positions.push_back(mesh.positions[v]);
        out.normals.push_back(normals[v]);
        const Vec2 p = project(mesh.positions[v], is.chart);
        out.uvs.push_back(is.offset + (p - is.lo) * scale);
      }
      tri[static_cast<std::size_t>(k)] = it->second;
    }
    out.triangles.push_back(tri);
  }
  return atlas;
}

}  // namespace abr::mesh
