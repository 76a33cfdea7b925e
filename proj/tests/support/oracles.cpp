#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace abr::oracle {

std::array<double, 3> srgb_to_lab(int r, int g, int b) {
  auto lin = [](int c) {
    const double v = c / 255.0;
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
  auto f = [](double t) {
    const double e = 216.0 / 24389.0, k = 24389.0 / 27.0;
    return t > e ? std::cbrt(t) : (k * t + 16.0) / 116.0;
  };
  const double fx = f(X / 0.95047), fy = f(Y / 1.0), fz = f(Z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

int find_loop(const std::vector<int>& buffer, const std::function<double(int, int)>& d, int h) {
  int best = 0;
  double bestD = std::numeric_limits<double>::infinity();
  for (int s = 0; s + h < static_cast<int>(buffer.size()); ++s) {
    const double v = d(buffer[static_cast<std::size_t>(s)], buffer[static_cast<std::size_t>(s + h)]);
    if (v < bestD) bestD = v, best = s;
  }
  return best;
}

std::vector<double> bin_weights(double t, int n, double d) {
  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  t = std::clamp(t, 0.0, 1.0);
  d = std::min(d, 1.0 / n);
  if (d <= 0.0) {
    w[static_cast<std::size_t>(std::min(n - 1, static_cast<int>(std::floor(t * n))))] = 1.0;
    return w;
  }
  const double lo = t - d / 2, hi = t + d / 2;
  for (int k = 0; k < n; ++k) {
    const double a = k == 0 ? -1e300 : static_cast<double>(k) / n;
    const double b = k == n - 1 ? 1e300 : static_cast<double>(k + 1) / n;
    w[static_cast<std::size_t>(k)] = std::max(0.0, std::min(hi, b) - std::max(lo, a)) / d;
  }
  return w;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point by region tests on the triangle's Voronoi regions.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

double one_sided_hausdorff(const mesh::TriMesh& from, const mesh::TriMesh& to) {
  double worst = 0.0;
  for (const auto& p : from.positions) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : to.triangles) {
      best = std::min(best, point_triangle_distance(p, to.positions[t[0]], to.positions[t[1]], to.positions[t[2]]));
      if (best <= worst) break;  // cannot raise the max any more
    }
    worst = std::max(worst, best);
  }
  return worst;
}

double hausdorff(const mesh::TriMesh& a, const mesh::TriMesh& b) {
  return std::max(one_sided_hausdorff(a, b), one_sided_hausdorff(b, a));
}

double tv_distance(const std::vector<double>& counts, const std::vector<double>& target) {
  double total = 0.0, mass = 0.0;
  for (double c : counts) total += c;
  for (double t : target) mass += t;
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) tv += std::abs(counts[i] / total - target[i] / mass);
  return 0.5 * tv;
}

double composite_alpha(double a, int n) { return 1.0 - std::pow(1.0 - a, n); }

}  // namespace abr::oracle
