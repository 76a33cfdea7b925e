#include "abr/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace abr::render {

BinWeights compute_bin_blend(double t, const BinBlend& bb) {
  if (bb.bins < 1) throw Error(ErrorCode::InvalidArgument, "bin blend needs at least one bin");
  if (!(bb.blendDistance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "blend distance must be >= 0");
  const int n = bb.bins;
  t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
  const int base = std::min(static_cast<int>(std::floor(t * n)), n - 1);
  BinWeights w{base, base, 1.0};
  const double d = std::min(bb.blendDistance, 1.0 / n);
  if (n == 1 || d <= 0.0) return w;
  const int boundary = std::clamp(static_cast<int>(std::lround(t * n)), 1, n - 1);
  const double delta = t - static_cast<double>(boundary) / n;
  if (std::abs(delta) >= d / 2.0) return w;
  const double upper = (delta + d / 2.0) / d;  // weight of bin `boundary`
  if (base == boundary) {
    w.binB = boundary - 1;
    w.weightA = upper;
  } else {
    w.binB = boundary;
    w.weightA = 1.0 - upper;
  }
  return w;
}

Vec3 triplanar_weights(const Vec3& normal, double blendFactor) {
  if (!(blendFactor > 0.0)) throw Error(ErrorCode::InvalidArgument, "tri-planar blend factor must be > 0");
  const Vec3 a = normal.cwiseAbs();
  const double m = a.maxCoeff();
  if (!(m > 0.0)) return Vec3::Constant(1.0 / 3.0);
  Vec3 w(std::pow(a.x() / m, blendFactor), std::pow(a.y() / m, blendFactor), std::pow(a.z() / m, blendFactor));
  return w / w.sum();
}

Eigen::Quaterniond align_forward(const Vec3& direction, const Vec3& up) {
  const double len = direction.norm();
  if (!(len > 1e-12) || !direction.allFinite()) return Eigen::Quaterniond::Identity();
  const Vec3 z = direction / len;
  Vec3 y = up - up.dot(z) * z;
  if (y.norm() < 1e-9) {
    // Direction parallel to up: keep +Y as close as possible to the next world axis.
    const Vec3 alt = std::abs(z.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    y = alt - alt.dot(z) * z;
  }
  y.normalize();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Eigen::Quaterniond q(r);
  q.normalize();
  return q;
}

int select_lod(double projectedDiameter, int lodCount) {
  if (lodCount <= 1) return 0;
  const int idx = projectedDiameter > kLod0Pixels ? 0 : projectedDiameter > kLod1Pixels ? 1 : 2;
  return std::min(idx, lodCount - 1);
}

std::vector<GlyphInstance> place_glyphs(const std::vector<Vec3>& samples, const std::vector<Vec3>& vectors,
                                        const PlacementOptions& options) {
  if (!(options.sizePercent > 0.0)) throw Error(ErrorCode::InvalidArgument, "glyph size percent must be > 0");
  std::vector<GlyphInstance> out(samples.size());
  const double scale = options.sizePercent / 100.0 * options.dataExtent;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    GlyphInstance& g = out[i];
    g.translation = samples[i];
    g.scale = scale;
    g.sample = i;
    switch (options.mode) {
      case OrientationMode::Axis: break;
      case OrientationMode::Vector:
        if (i < vectors.size()) g.rotation = align_forward(vectors[i], options.worldUp);
        break;
      case OrientationMode::Random: {
        // Uniform rotation (Shoemake) from a per-instance stream.
        Rng rng(mix_seed(options.seed, i));
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
        const double tau = 2 * std::numbers::pi;
        g.rotation = Eigen::Quaterniond(b * std::cos(tau * u3), a * std::sin(tau * u2), a * std::cos(tau * u2),
                                        b * std::sin(tau * u3));
        g.rotation.normalize();
        break;
      }
    }
    if (i < options.width.size()) g.axialScale = 0.5 + std::clamp(options.width[i], 0.0, 1.0);
  }
  return out;
}

namespace {

/// Fractional index where cumulative `key` (nondecreasing) reaches `value`.
double locate(const std::vector<double>& key, double value) {
  if (value <= key.front()) return 0.0;
  if (value >= key.back()) return static_cast<double>(key.size() - 1);
  const auto it = std::upper_bound(key.begin(), key.end(), value);
  const std::size_t hi = static_cast<std::size_t>(it - key.begin());
  const std::size_t lo = hi - 1;
  const double span = key[hi] - key[lo];
  return static_cast<double>(lo) + (span > 0 ? (value - key[lo]) / span : 0.0);
}

template <typename T>
T lerp_at(const std::vector<T>& values, double param) {
  const std::size_t i = std::min(static_cast<std::size_t>(param), values.size() - 1);
  const std::size_t j = std::min(i + 1, values.size() - 1);
  const double f = param - static_cast<double>(i);
  return values[i] * (1.0 - f) + values[j] * f;
}

Vec3 any_perpendicular(const Vec3& t) {
  const Vec3 a = t.cwiseAbs();
  Vec3 axis = Vec3::UnitX();
  if (a.y() <= a.x() && a.y() <= a.z()) axis = Vec3::UnitY();
  else if (a.z() <= a.x() && a.z() <= a.y()) axis = Vec3::UnitZ();
  return (axis - axis.dot(t) * t).normalized();
}

}  // namespace

ExtrudedLine extrude_line(const std::vector<Vec3>& inPoints, const std::vector<Vec3>& inNormals,
                          const std::vector<double>& inTimes, const ExtrudeOptions& opt) {
  if (inPoints.size() < 2) throw Error(ErrorCode::InvalidArgument, "extrude_line needs at least 2 points");
  if (opt.style == LineStyle::Ribbon && !(opt.width > 0.0))
    throw Error(ErrorCode::InvalidArgument, "ribbon width must be > 0");
  if (opt.style == LineStyle::Tube && !(opt.radius > 0.0))
    throw Error(ErrorCode::InvalidArgument, "tube radius must be > 0");
  if (opt.style == LineStyle::Tube && opt.sides < 3) throw Error(ErrorCode::InvalidArgument, "tube needs >= 3 sides");
  if (!inNormals.empty() && inNormals.size() != inPoints.size())
    throw Error(ErrorCode::InvalidArgument, "normal count does not match point count");
  if (!inTimes.empty() && inTimes.size() != inPoints.size())
    throw Error(ErrorCode::InvalidArgument, "time count does not match point count");

  // Drop repeated points so arc length is strictly increasing; keep the source index.
  std::vector<std::size_t> keep{0};
  for (std::size_t i = 1; i < inPoints.size(); ++i)
    if ((inPoints[i] - inPoints[keep.back()]).norm() > 1e-12) keep.push_back(i);
  if (keep.size() < 2) throw Error(ErrorCode::InvalidArgument, "polyline has zero length");
  std::vector<Vec3> pts;
  std::vector<double> index, arc{0.0}, time;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    pts.push_back(inPoints[keep[k]]);
    index.push_back(static_cast<double>(keep[k]));
    time.push_back(inTimes.empty() ? static_cast<double>(keep[k]) : inTimes[keep[k]]);
    if (k > 0) arc.push_back(arc.back() + (pts[k] - pts[k - 1]).norm());
  }
  for (std::size_t k = 1; k < time.size(); ++k)
    if (time[k] < time[k - 1]) throw Error(ErrorCode::InvalidArgument, "integration times must be nondecreasing");

  // Sample parameters as fractional positions into `pts`.
  std::vector<double> params;
  if (opt.step <= 0.0) {
    for (std::size_t k = 0; k < pts.size(); ++k) params.push_back(static_cast<double>(k));
  } else {
    const std::vector<double>& key = opt.sampling == LineSampling::ArcLength ? arc : time;
    const double end = key.back();
    for (long k = 0;; ++k) {
      const double s = key.front() + static_cast<double>(k) * opt.step;
      if (s >= end - 1e-9 * std::max(1.0, std::abs(end))) break;
      params.push_back(locate(key, s));
    }
    params.push_back(static_cast<double>(pts.size() - 1));
    // Equal key values (stalled integration) collapse onto one parameter.
    params.erase(std::unique(params.begin(), params.end()), params.end());
  }

  ExtrudedLine out;
  const std::size_t ns = params.size();
  std::vector<Vec3> tangents(ns), normals(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    out.samples.push_back(lerp_at(pts, params[s]));
    out.sampleU.push_back(lerp_at(arc, params[s]));
  }
  for (std::size_t s = 0; s < ns; ++s) {
    const Vec3 a = out.samples[s == 0 ? 0 : s - 1];
    const Vec3 b = out.samples[s + 1 < ns ? s + 1 : ns - 1];
    Vec3 t = b - a;
    if (t.norm() < 1e-15) {
      // Sample sits inside a segment: use that segment's direction.
      const std::size_t seg = std::min(static_cast<std::size_t>(params[s]), pts.size() - 2);
      t = pts[seg + 1] - pts[seg];
    }
    tangents[s] = t.normalized();
  }
  if (!inNormals.empty()) {
    std::vector<Vec3> nrm;
    for (std::size_t k : keep) nrm.push_back(inNormals[k]);
    for (std::size_t s = 0; s < ns; ++s) {
      Vec3 n = lerp_at(nrm, params[s]);
      n -= n.dot(tangents[s]) * tangents[s];
      normals[s] = n.norm() > 1e-9 ? n.normalized() : any_perpendicular(tangents[s]);
    }
  } else {
    // Rotation-minimizing frames by double reflection.
    normals[0] = any_perpendicular(tangents[0]);
    for (std::size_t s = 0; s + 1 < ns; ++s) {
      const Vec3 v1 = out.samples[s + 1] - out.samples[s];
      const double c1 = v1.dot(v1);
      if (c1 < 1e-30) {
        normals[s + 1] = normals[s];
        continue;
      }
      const Vec3 rL = normals[s] - (2.0 / c1) * v1.dot(normals[s]) * v1;
      const Vec3 tL = tangents[s] - (2.0 / c1) * v1.dot(tangents[s]) * v1;
      const Vec3 v2 = tangents[s + 1] - tL;
      const double c2 = v2.dot(v2);
      Vec3 r = c2 < 1e-30 ? rL : Vec3(rL - (2.0 / c2) * v2.dot(rL) * v2);
      r -= r.dot(tangents[s + 1]) * tangents[s + 1];
      normals[s + 1] = r.norm() > 1e-12 ? r.normalized() : any_perpendicular(tangents[s + 1]);
    }
  }
  if (opt.rotationalOffset != 0.0) {
    const double ang = opt.rotationalOffset * std::numbers::pi / 180.0;
    for (std::size_t s = 0; s < ns; ++s)
      normals[s] = Eigen::AngleAxisd(ang, tangents[s]) * normals[s];
  }

  auto widthAt = [&](std::size_t s) {
    if (opt.widthScale.empty()) return 1.0;
    const double src = lerp_at(index, params[s]);
    return lerp_at(opt.widthScale, src);
  };

  mesh::TriMesh& m = out.mesh;
  if (opt.style == LineStyle::Ribbon) {
    for (std::size_t s = 0; s < ns; ++s) {
      const Vec3 binormal = tangents[s].cross(normals[s]);
      const double half = 0.5 * opt.width * widthAt(s);
      const double src = lerp_at(index, params[s]);
      for (int side = 0; side < 2; ++side) {
        m.positions.push_back(out.samples[s] + (side == 0 ? -half : half) * binormal);
        m.normals.push_back(normals[s]);
        m.uvs.emplace_back(out.sampleU[s], static_cast<double>(side));
        out.param.push_back(src);
      }
      if (s > 0) {
        const auto a = static_cast<std::uint32_t>(2 * (s - 1));
        m.triangles.push_back({a, a + 1, a + 2});
        m.triangles.push_back({a + 1, a + 3, a + 2});
      }
    }
  } else {
    const int k = opt.sides;
    const auto ring = static_cast<std::uint32_t>(k + 1);
    for (std::size_t s = 0; s < ns; ++s) {
      const Vec3 binormal = tangents[s].cross(normals[s]);
      const double r = opt.radius * widthAt(s);
      const double src = lerp_at(index, params[s]);
      for (int j = 0; j <= k; ++j) {
        const double th = 2.0 * std::numbers::pi * (j == k ? 0 : j) / k;
        const Vec3 dir = std::cos(th) * normals[s] + std::sin(th) * binormal;
        m.positions.push_back(out.samples[s] + r * dir);
        m.normals.push_back(dir);
        m.uvs.emplace_back(out.sampleU[s], static_cast<double>(j) / k);
        out.param.push_back(src);
      }
      if (s > 0) {
        const auto base = static_cast<std::uint32_t>((s - 1) * ring);
        for (std::uint32_t j = 0; j < static_cast<std::uint32_t>(k); ++j) {
          const std::uint32_t a = base + j, b = base + j + 1, c = base + ring + j, d = base + ring + j + 1;
          m.triangles.push_back({a, b, c});
          m.triangles.push_back({b, d, c});
        }
      }
    }
  }
  return out;
}

}  // namespace abr::render
