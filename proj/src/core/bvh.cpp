#include "bvh.hpp"

#include <algorithm>
#include <cmath>

namespace abr::mesh::detail {

namespace {

constexpr int kLeafSize = 4;

bool slab_interval(const Aabb& box, const Vec3& o, const Vec3& d, double& t0, double& t1) {
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (o[i] < box.min[i] || o[i] > box.max[i]) return false;
      continue;
    }
    const double inv = 1.0 / d[i];
    double a = (box.min[i] - o[i]) * inv;
    double b = (box.max[i] - o[i]) * inv;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  return true;
}

double box_distance_sq(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.min - p).cwiseMax(Vec3::Zero()).cwiseMax(p - box.max);
  return d.squaredNorm();
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(const TriMesh& mesh) : mesh_(mesh) {
  const std::size_t n = mesh.triangles.size();
  order_.resize(n);
  centroids_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    order_[i] = i;
    const auto& t = mesh.triangles[i];
    centroids_[i] = (mesh.positions[t[0]] + mesh.positions[t[1]] + mesh.positions[t[2]]) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 1);
  if (n > 0) build(0, static_cast<int>(n), 0);
}

int TriangleBvh::build(int first, int count, int depth) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Aabb box, cbox;
  for (int i = first; i < first + count; ++i) {
    const auto& t = mesh_.triangles[order_[static_cast<std::size_t>(i)]];
    for (auto v : t) box.expand(mesh_.positions[v]);
    cbox.expand(centroids_[order_[static_cast<std::size_t>(i)]]);
  }
  nodes_[static_cast<std::size_t>(index)].box = box;
  if (count <= kLeafSize || depth > 60) {
    nodes_[static_cast<std::size_t>(index)].first = first;
    nodes_[static_cast<std::size_t>(index)].count = count;
    return index;
  }
  int axis = 0;
  cbox.extent().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](std::size_t a, std::size_t b) {
                     const double ca = centroids_[a][axis], cb = centroids_[b][axis];
                     return ca != cb ? ca < cb : a < b;
                   });
  const int left = build(first, mid - first, depth + 1);
  const int right = build(mid, first + count - mid, depth + 1);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

std::optional<RayHit> TriangleBvh::nearest_hit(const Vec3& origin, const Vec3& dir, double tmin,
                                               double tmax) const {
  std::optional<RayHit> best;
  if (nodes_.empty()) return best;
  double bestAbs = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    double t0 = tmin, t1 = tmax;
    if (!slab_interval(node.box, origin, dir, t0, t1)) continue;
    const double nearAbs = (t0 <= 0.0 && t1 >= 0.0) ? 0.0 : std::min(std::abs(t0), std::abs(t1));
    if (nearAbs >= bestAbs) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const std::size_t tri = order_[static_cast<std::size_t>(i)];
        const auto& t = mesh_.triangles[tri];
        const Vec3& a = mesh_.positions[t[0]];
        const Vec3 e1 = mesh_.positions[t[1]] - a;
        const Vec3 e2 = mesh_.positions[t[2]] - a;
        const Vec3 pv = dir.cross(e2);
        const double det = e1.dot(pv);
        if (std::abs(det) < 1e-300) continue;
        const double inv = 1.0 / det;
        const Vec3 tv = origin - a;
        const double u = tv.dot(pv) * inv;
        if (u < -1e-9 || u > 1.0 + 1e-9) continue;
        const Vec3 qv = tv.cross(e1);
        const double v = dir.dot(qv) * inv;
        if (v < -1e-9 || u + v > 1.0 + 1e-9) continue;
        const double th = e2.dot(qv) * inv;
        if (th < tmin || th > tmax) continue;
        if (std::abs(th) < bestAbs) {
          bestAbs = std::abs(th);
          best = RayHit{th, tri, Vec3(1.0 - u - v, u, v)};
        }
      }
    } else if (top + 2 <= 128) {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

ClosestPoint TriangleBvh::closest_point(const Vec3& p) const {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  double bestSq = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    if (box_distance_sq(node.box, p) >= bestSq) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const std::size_t tri = order_[static_cast<std::size_t>(i)];
        const auto& t = mesh_.triangles[tri];
        const Vec3 q = closest_point_on_triangle(p, mesh_.positions[t[0]], mesh_.positions[t[1]],
                                                 mesh_.positions[t[2]]);
        const double d = (q - p).squaredNorm();
        if (d < bestSq) {
          bestSq = d;
          best.point = q;
          best.triangle = tri;
        }
      }
    } else if (top + 2 <= 128) {
      // Visit the nearer child first.
      const Node& l = nodes_[static_cast<std::size_t>(node.left)];
      const Node& r = nodes_[static_cast<std::size_t>(node.right)];
      if (box_distance_sq(l.box, p) < box_distance_sq(r.box, p)) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
  }
  best.distance = std::sqrt(bestSq);
  return best;
}

}  // namespace abr::mesh::detail
