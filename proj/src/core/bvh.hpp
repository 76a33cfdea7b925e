#pragma once

#include "abr/mesh.hpp"

#include <optional>
#include <vector>

namespace abr::mesh::detail {

struct RayHit {
  double t = 0.0;
  std::size_t triangle = 0;
  Vec3 bary = Vec3::Zero();  // weights of the triangle's three vertices
};

struct ClosestPoint {
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  std::size_t triangle = 0;
};

/// Bounding volume hierarchy over a mesh's triangles (median split).
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh);

  /// Hit along origin + t*dir with t in [tmin, tmax] minimizing |t|.
  std::optional<RayHit> nearest_hit(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;
  ClosestPoint closest_point(const Vec3& p) const;

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;
    int first = 0, count = 0;
  };
  int build(int first, int count, int depth);

  const TriMesh& mesh_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
  std::vector<Vec3> centroids_;
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace abr::mesh::detail
