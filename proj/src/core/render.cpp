#include "abr/render.hpp"

#include "bvh.hpp"
#include "parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace abr::render {

namespace {

using Vec3f = Eigen::Vector3f;
using Vec2f = Eigen::Vector2f;

constexpr int kTile = 32;
constexpr std::uint32_t kNoTri = std::numeric_limits<std::uint32_t>::max();

struct View {
  Vec3 pos, right, up, fwd;
  double fy = 1.0, aspect = 1.0, near = 1e-3;
  int width = 1, height = 1;

  explicit View(const Camera& c) {
    c.validate();
    pos = c.position;
    fwd = (c.lookAt - c.position).normalized();
    right = fwd.cross(c.up).normalized();
    up = right.cross(fwd);
    fy = 1.0 / std::tan(c.fovY * std::numbers::pi / 360.0);
    width = c.width;
    height = c.height;
    aspect = static_cast<double>(width) / height;
    near = std::max(1e-6, 1e-4 * (c.lookAt - c.position).norm());
  }

  /// (x_clip, y_clip, w) with w = eye depth.
  Vec3 clip(const Vec3& p) const {
    const Vec3 d = p - pos;
    return {d.dot(right) * fy / aspect, d.dot(up) * fy, d.dot(fwd)};
  }

  Vec2 screen(const Vec3& c) const {
    return {(c.x() / c.z() * 0.5 + 0.5) * width, (0.5 - c.y() / c.z() * 0.5) * height};
  }

  /// Direction through a pixel center, scaled so that its forward component is 1.
  Vec3 ray(int x, int y) const {
    const double nx = (x + 0.5) / width * 2.0 - 1.0;
    const double ny = 1.0 - (y + 0.5) / height * 2.0;
    return fwd + right * (nx * aspect / fy) + up * (ny / fy);
  }
};

/// Vertex before projection.
struct PVert {
  Vec3 world;
  Vec3 normal;
  Vec2 uv = Vec2::Zero();
  double tc = -1.0;  // normalized color value, < 0 when unbound
  double tt = 0.0;   // normalized texture value
};

PVert lerp(const PVert& a, const PVert& b, double f) {
  return {a.world + (b.world - a.world) * f, a.normal + (b.normal - a.normal) * f, a.uv + (b.uv - a.uv) * f,
          a.tc + (b.tc - a.tc) * f, a.tt + (b.tt - a.tt) * f};
}

struct Tri {
  std::array<Vec2, 3> s;
  std::array<double, 3> invw;
  std::array<Vec3f, 3> world, normal;
  std::array<Vec2f, 3> uv;
  std::array<float, 3> tc, tt;
  Vec3f tangent, bitangent;
  int material = 0;
};

struct Material {
  int layer = 0;
  Vec3 base{0.8, 0.8, 0.8};
  const color::ColorMap* colormap = nullptr;
  const tex::TextureSet* textures = nullptr;
  BinBlend blend;
  bool triplanar = false;
  double triK = 4.0;
  double texScale = 1.0;
  bool lineMapping = false;  // image rows run along u (arc length), columns across v
  const Image* alpha = nullptr;
  bool setAlpha = false;
  const Image* normalMap = nullptr;  // UV-mapped, clamped (baked glyph maps)
  bool setNormals = false;
};

double channel(const Image& img, int x, int y, int c) {
  return img.data[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] / 255.0;
}

int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

/// Bilinear sample in [0,1]; coordinates in image units, y down. Channels < 4 read as (c0, c1, c2, 1).
Vec4 sample_image(const Image& img, double fx, double fy, bool repeat) {
  fx -= 0.5;
  fy -= 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double ax = fx - x0f, ay = fy - y0f;
  int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f), x1 = x0 + 1, y1 = y0 + 1;
  if (repeat) {
    x0 = wrap(x0, img.width), x1 = wrap(x1, img.width), y0 = wrap(y0, img.height), y1 = wrap(y1, img.height);
  } else {
    x0 = std::clamp(x0, 0, img.width - 1), x1 = std::clamp(x1, 0, img.width - 1);
    y0 = std::clamp(y0, 0, img.height - 1), y1 = std::clamp(y1, 0, img.height - 1);
  }
  Vec4 out(0, 0, 0, 1);
  const int nc = std::min(img.channels, 4);
  for (int c = 0; c < nc; ++c) {
    const double top = channel(img, x0, y0, c) * (1 - ax) + channel(img, x1, y0, c) * ax;
    const double bot = channel(img, x0, y1, c) * (1 - ax) + channel(img, x1, y1, c) * ax;
    out[c] = top * (1 - ay) + bot * ay;
  }
  if (nc == 1) out.y() = out.z() = out.x();
  return out;
}

/// Texture lookup at repeat coordinates (s across, t along), t increasing upward in the image.
Vec4 sample_repeat(const Image& img, double s, double t) {
  return sample_image(img, s * img.width, (1.0 - t) * img.height, true);
}

double mask_value(const Image& img, double s, double t) {
  const Vec4 v = sample_repeat(img, s, t);
  return img.channels == 4 ? v.w() : v.x();
}

Vec3 decode(const Vec4& rgb) { return Vec3(rgb.x() * 2 - 1, rgb.y() * 2 - 1, rgb.z() * 2 - 1); }

class Rasterizer {
 public:
  explicit Rasterizer(const View& view) : view_(view) {}

  void add(const PVert& a, const PVert& b, const PVert& c, int material) {
    // Per-triangle UV tangents, shared by all clipped pieces.
    const Vec3 e1 = b.world - a.world, e2 = c.world - a.world;
    const Vec2 d1 = b.uv - a.uv, d2 = c.uv - a.uv;
    const double det = d1.x() * d2.y() - d2.x() * d1.y();
    Vec3 t = Vec3::Zero(), bt = Vec3::Zero();
    if (std::abs(det) > 1e-20) {
      t = (e1 * d2.y() - e2 * d1.y()) / det;
      bt = (e2 * d1.x() - e1 * d2.x()) / det;
    }
    const PVert in[3] = {a, b, c};
    const Vec3 cl[3] = {view_.clip(a.world), view_.clip(b.world), view_.clip(c.world)};
    const double nearW = view_.near;
    if (cl[0].z() >= nearW && cl[1].z() >= nearW && cl[2].z() >= nearW) {
      emit(in[0], in[1], in[2], cl[0], cl[1], cl[2], t, bt, material);
      return;
    }
    if (cl[0].z() < nearW && cl[1].z() < nearW && cl[2].z() < nearW) return;
    // Clip against the near plane.
    std::vector<PVert> poly;
    std::vector<Vec3> pc;
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      const bool inI = cl[i].z() >= nearW, inJ = cl[j].z() >= nearW;
      if (inI) {
        poly.push_back(in[i]);
        pc.push_back(cl[i]);
      }
      if (inI != inJ) {
        const double f = (nearW - cl[i].z()) / (cl[j].z() - cl[i].z());
        poly.push_back(lerp(in[i], in[j], f));
        pc.push_back(cl[i] + (cl[j] - cl[i]) * f);
      }
    }
    for (std::size_t k = 1; k + 1 < poly.size(); ++k)
      emit(poly[0], poly[k], poly[k + 1], pc[0], pc[k], pc[k + 1], t, bt, material);
  }

  std::vector<Tri>& triangles() { return tris_; }

 private:
  void emit(const PVert& a, const PVert& b, const PVert& c, const Vec3& ca, const Vec3& cb, const Vec3& cc,
            const Vec3& t, const Vec3& bt, int material) {
    Tri tri;
    const PVert* v[3] = {&a, &b, &c};
    const Vec3* cl[3] = {&ca, &cb, &cc};
    for (int k = 0; k < 3; ++k) {
      tri.s[k] = view_.screen(*cl[k]);
      tri.invw[k] = 1.0 / cl[k]->z();
      tri.world[k] = v[k]->world.cast<float>();
      tri.normal[k] = v[k]->normal.cast<float>();
      tri.uv[k] = v[k]->uv.cast<float>();
      tri.tc[k] = static_cast<float>(v[k]->tc);
      tri.tt[k] = static_cast<float>(v[k]->tt);
    }
    tri.tangent = t.cast<float>();
    tri.bitangent = bt.cast<float>();
    tri.material = material;
    tris_.push_back(tri);
  }

  const View& view_;
  std::vector<Tri> tris_;
};

struct VisBuffer {
  std::vector<std::uint32_t> tri;
  std::vector<double> invw, b1, b2;
};

double edge(const Vec2& a, const Vec2& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

Vec2 interp_uv(const Tri& t, double b0, double b1, double b2) {
  return (t.uv[0].cast<double>() * b0 + t.uv[1].cast<double>() * b1 + t.uv[2].cast<double>() * b2);
}

bool alpha_discard(const Material& m, const Tri& t, double b0, double b1, double b2) {
  if (!m.alpha && !(m.setAlpha && m.textures && !m.textures->alphaMasks.empty())) return false;
  const Vec2 uv = interp_uv(t, b0, b1, b2);
  const double s = m.lineMapping ? uv.y() : uv.x() * m.texScale;
  const double tt = m.lineMapping ? uv.x() * m.texScale : uv.y() * m.texScale;
  if (m.alpha && mask_value(*m.alpha, s, tt) < 0.5) return true;
  if (m.setAlpha && m.textures && !m.textures->alphaMasks.empty()) {
    const double tv = t.tt[0] * b0 + t.tt[1] * b1 + t.tt[2] * b2;
    const BinWeights w = compute_bin_blend(tv, m.blend);
    const double a = w.weightA * mask_value(m.textures->alphaMasks[static_cast<std::size_t>(w.binA)], s, tt) +
                     (1 - w.weightA) * mask_value(m.textures->alphaMasks[static_cast<std::size_t>(w.binB)], s, tt);
    if (a < 0.5) return true;
  }
  return false;
}

VisBuffer rasterize(std::vector<Tri>& tris, const std::vector<Material>& materials, int width, int height,
                    int threads) {
  VisBuffer vb;
  const std::size_t npx = static_cast<std::size_t>(width) * height;
  vb.tri.assign(npx, kNoTri);
  vb.invw.assign(npx, 0.0);
  vb.b1.assign(npx, 0.0);
  vb.b2.assign(npx, 0.0);
  const int tx = (width + kTile - 1) / kTile, ty = (height + kTile - 1) / kTile;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tx) * ty);
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const Tri& t = tris[i];
    const double minx = std::min({t.s[0].x(), t.s[1].x(), t.s[2].x()});
    const double maxx = std::max({t.s[0].x(), t.s[1].x(), t.s[2].x()});
    const double miny = std::min({t.s[0].y(), t.s[1].y(), t.s[2].y()});
    const double maxy = std::max({t.s[0].y(), t.s[1].y(), t.s[2].y()});
    if (maxx < 0 || maxy < 0 || minx > width || miny > height) continue;
    if (!std::isfinite(minx + maxx + miny + maxy)) continue;
    const int x0 = std::clamp(static_cast<int>(minx) / kTile, 0, tx - 1);
    const int x1 = std::clamp(static_cast<int>(maxx) / kTile, 0, tx - 1);
    const int y0 = std::clamp(static_cast<int>(miny) / kTile, 0, ty - 1);
    const int y1 = std::clamp(static_cast<int>(maxy) / kTile, 0, ty - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) bins[static_cast<std::size_t>(y) * tx + x].push_back(static_cast<std::uint32_t>(i));
  }
  detail::parallel_for(tx * ty, threads, [&](int tile) {
    const int tileX = tile % tx, tileY = tile / tx;
    const int px0 = tileX * kTile, py0 = tileY * kTile;
    const int px1 = std::min(px0 + kTile, width) - 1, py1 = std::min(py0 + kTile, height) - 1;
    for (std::uint32_t idx : bins[static_cast<std::size_t>(tile)]) {
      const Tri& t = tris[idx];
      const double area = edge(t.s[0], t.s[1], t.s[2].x(), t.s[2].y());
      if (!(std::abs(area) > 1e-12)) continue;
      const int x0 = std::max(px0, static_cast<int>(std::floor(std::min({t.s[0].x(), t.s[1].x(), t.s[2].x()}))));
      const int x1 = std::min(px1, static_cast<int>(std::ceil(std::max({t.s[0].x(), t.s[1].x(), t.s[2].x()}))));
      const int y0 = std::max(py0, static_cast<int>(std::floor(std::min({t.s[0].y(), t.s[1].y(), t.s[2].y()}))));
      const int y1 = std::min(py1, static_cast<int>(std::ceil(std::max({t.s[0].y(), t.s[1].y(), t.s[2].y()}))));
      const Material& m = materials[static_cast<std::size_t>(t.material)];
      for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5;
          const double w0 = edge(t.s[1], t.s[2], px, py) / area;
          const double w1 = edge(t.s[2], t.s[0], px, py) / area;
          const double w2 = edge(t.s[0], t.s[1], px, py) / area;
          if (w0 < 0 || w1 < 0 || w2 < 0) continue;
          const double invw = w0 * t.invw[0] + w1 * t.invw[1] + w2 * t.invw[2];
          const std::size_t p = static_cast<std::size_t>(y) * width + x;
          if (!(invw > vb.invw[p])) continue;
          const double b0 = w0 * t.invw[0] / invw, b1 = w1 * t.invw[1] / invw, b2 = w2 * t.invw[2] / invw;
          if (alpha_discard(m, t, b0, b1, b2)) continue;
          vb.tri[p] = idx;
          vb.invw[p] = invw;
          vb.b1[p] = b1;
          vb.b2[p] = b2;
        }
      }
    }
  });
  return vb;
}

Vec3 lab_rgb(const color::ColorMap& map, double t) {
  const color::RgbF c = color::lab_to_srgbf(color::sample_colormap(map, t));
  return Vec3(c.r, c.g, c.b).cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 texture_color(const Material& m, const Vec3& world, const Vec3& n, const Vec2& uv, double tt) {
  const BinWeights w = compute_bin_blend(tt, m.blend);
  auto one = [&](int bin) -> Vec3 {
    const Image& img = m.textures->entries[static_cast<std::size_t>(bin)].pixels;
    if (m.triplanar) {
      const Vec3 tw = triplanar_weights(n, m.triK);
      const Vec3 p = world * m.texScale;
      return (tw.x() * sample_repeat(img, p.y(), p.z()) + tw.y() * sample_repeat(img, p.x(), p.z()) +
              tw.z() * sample_repeat(img, p.x(), p.y()))
          .head<3>();
    }
    if (m.lineMapping) return sample_repeat(img, uv.y(), uv.x() * m.texScale).head<3>();
    return sample_repeat(img, uv.x() * m.texScale, uv.y() * m.texScale).head<3>();
  };
  Vec3 c = one(w.binA) * w.weightA;
  if (w.weightA < 1.0) c += one(w.binB) * (1.0 - w.weightA);
  return c;
}

/// Tangent-space perturbation with the baker's frame convention.
Vec3 apply_tangent_normal(const Vec3& n, const Vec3& tangent, const Vec3& bitangent, const Vec3& ts) {
  Vec3 t = tangent - n * n.dot(tangent);
  if (!(t.norm() > 1e-12)) return n;
  t.normalize();
  const double handed = n.cross(t).dot(bitangent) < 0.0 ? -1.0 : 1.0;
  const Vec3 b = handed * n.cross(t);
  const Vec3 out = t * ts.x() + b * ts.y() + n * ts.z();
  return out.norm() > 1e-12 ? out.normalized() : n;
}

Vec3 set_normal(const Material& m, const Vec3& world, const Vec3& n, const Vec2& uv, double tt, const Vec3& tangent,
                const Vec3& bitangent) {
  const auto& maps = m.textures->normalMaps;
  const BinWeights w = compute_bin_blend(tt, m.blend);
  auto one = [&](int bin) -> Vec3 {
    const Image& img = maps[static_cast<std::size_t>(bin)].pixels;
    if (m.triplanar) {
      const Vec3 tw = triplanar_weights(n, m.triK);
      const Vec3 p = world * m.texScale;
      Vec3 acc = Vec3::Zero();
      const Vec3 axes[3][2] = {{Vec3::UnitY(), Vec3::UnitZ()}, {Vec3::UnitX(), Vec3::UnitZ()},
                               {Vec3::UnitX(), Vec3::UnitY()}};
      const Vec2 coords[3] = {{p.y(), p.z()}, {p.x(), p.z()}, {p.x(), p.y()}};
      for (int a = 0; a < 3; ++a) {
        if (tw[a] <= 0.0) continue;
        const Vec3 ts = decode(sample_repeat(img, coords[a].x(), coords[a].y()));
        Vec3 axis = Vec3::Zero();
        axis[a] = n[a] < 0 ? -1.0 : 1.0;
        acc += tw[a] * (ts.x() * axes[a][0] + ts.y() * axes[a][1] + ts.z() * axis);
      }
      return acc;
    }
    const Vec4 s = m.lineMapping ? sample_repeat(img, uv.y(), uv.x() * m.texScale)
                                 : sample_repeat(img, uv.x() * m.texScale, uv.y() * m.texScale);
    const Vec3 ts = decode(s);
    if (m.lineMapping) return apply_tangent_normal(n, bitangent, tangent, ts);
    return apply_tangent_normal(n, tangent, bitangent, ts);
  };
  Vec3 r = one(w.binA) * w.weightA;
  if (w.weightA < 1.0) r += one(w.binB) * (1.0 - w.weightA);
  return r.norm() > 1e-12 ? r.normalized() : n;
}

std::array<std::uint8_t, 3> to_bytes(const Vec3& c) {
  std::array<std::uint8_t, 3> out{};
  for (int k = 0; k < 3; ++k)
    out[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0));
  return out;
}

// ---------------------------------------------------------------------------
// Variable lookup at arbitrary positions.

class FieldLookup {
 public:
  explicit FieldLookup(const scene::DataObject& d) : data_(d) {
    if (d.kind == scene::DataKind::Mesh) bvh_ = std::make_unique<mesh::detail::TriangleBvh>(d.mesh);
    if (d.kind == scene::DataKind::LineSet)
      for (const auto& l : d.lines) flat_.insert(flat_.end(), l.points.begin(), l.points.end());
  }

  /// (element index, weight) pairs summing to 1.
  std::vector<std::pair<std::size_t, double>> weights(const Vec3& p) const {
    switch (data_.kind) {
      case scene::DataKind::Volume: return volume_weights(p);
      case scene::DataKind::Mesh: {
        const auto cp = bvh_->closest_point(p);
        const auto& t = data_.mesh.triangles[cp.triangle];
        const Vec3 a = data_.mesh.positions[t[0]], b = data_.mesh.positions[t[1]], c = data_.mesh.positions[t[2]];
        const Vec3 n = (b - a).cross(c - a);
        const double n2 = n.squaredNorm();
        double w1 = 0, w2 = 0;
        if (n2 > 0) {
          w1 = (cp.point - a).cross(c - a).dot(n) / n2;
          w2 = (b - a).cross(cp.point - a).dot(n) / n2;
        }
        return {{t[0], 1 - w1 - w2}, {t[1], w1}, {t[2], w2}};
      }
      default: {
        const auto& pts = data_.kind == scene::DataKind::PointSet ? data_.points : flat_;
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const double d = (pts[i] - p).squaredNorm();
          if (d < bd) bd = d, best = i;
        }
        return {{best, 1.0}};
      }
    }
  }

  double scalar(const std::vector<double>& values, const Vec3& p) const {
    double v = 0;
    for (const auto& [i, w] : weights(p)) v += w * values[i];
    return v;
  }
  Vec3 vector(const std::vector<Vec3>& values, const Vec3& p) const {
    Vec3 v = Vec3::Zero();
    for (const auto& [i, w] : weights(p)) v += w * values[i];
    return v;
  }

 private:
  std::vector<std::pair<std::size_t, double>> volume_weights(const Vec3& p) const {
    const auto& g = data_.grid;
    const Vec3 q = (p - g.origin).cwiseQuotient(g.spacing);
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      const double c = std::clamp(q[a] - 0.5, 0.0, g.dims[a] - 1.0);
      i0[a] = static_cast<int>(std::floor(c));
      i1[a] = std::min(i0[a] + 1, g.dims[a] - 1);
      f[a] = c - i0[a];
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (int corner = 0; corner < 8; ++corner) {
      const int i = corner & 1 ? i1[0] : i0[0], j = corner & 2 ? i1[1] : i0[1], k = corner & 4 ? i1[2] : i0[2];
      const double w = (corner & 1 ? f[0] : 1 - f[0]) * (corner & 2 ? f[1] : 1 - f[1]) * (corner & 4 ? f[2] : 1 - f[2]);
      out.emplace_back((static_cast<std::size_t>(k) * g.dims[1] + j) * g.dims[0] + i, w);
    }
    return out;
  }

  const scene::DataObject& data_;
  std::unique_ptr<mesh::detail::TriangleBvh> bvh_;
  std::vector<Vec3> flat_;
};

scene::DataRange binding_range(const scene::Binding& b, const scene::DataObject& d) {
  if (b.range) return *b.range;
  return scene::range_of(d.scalars.at(b.variable));
}

Vec3 rgb_of(color::Rgb8 c) { return Vec3(c.r, c.g, c.b) / 255.0; }

const tex::TextureSet* texture_set(const scene::Scene& s, const std::string& id, std::vector<tex::TextureSet>& owned) {
  const scene::Asset* a = s.asset(id);
  if (!a) return nullptr;
  if (const auto* set = std::get_if<tex::TextureSet>(&a->value)) return set;
  if (const auto* img = std::get_if<Image>(&a->value)) {
    tex::TextureSet set;
    set.name = id;
    set.entries.push_back(tex::TextureImage(to_rgba(*img)));
    owned.push_back(std::move(set));
    return &owned.back();
  }
  return nullptr;
}

const Image* image_asset(const scene::Scene& s, const std::string& id) {
  const scene::Asset* a = s.asset(id);
  return a ? std::get_if<Image>(&a->value) : nullptr;
}

const color::ColorMap* colormap_asset(const scene::Scene& s, const std::string& id) {
  const scene::Asset* a = s.asset(id);
  return a ? std::get_if<color::ColorMap>(&a->value) : nullptr;
}

struct GlyphSamples {
  std::vector<Vec3> points;
  std::vector<std::size_t> dataIndex;  // element index when taken from the data, else npos
};

GlyphSamples glyph_samples(const scene::VisLayer& layer, const scene::DataObject& d, std::uint64_t seed) {
  GlyphSamples out;
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  const double extent = std::max(d.bounds.largest_extent(), 1e-12);
  if (layer.samplingMethod == "data") {
    switch (d.kind) {
      case scene::DataKind::PointSet: out.points = d.points; break;
      case scene::DataKind::LineSet:
        for (const auto& l : d.lines) out.points.insert(out.points.end(), l.points.begin(), l.points.end());
        break;
      case scene::DataKind::Mesh: out.points = d.mesh.positions; break;
      case scene::DataKind::Volume:
        for (int k = 0; k < d.grid.dims[2]; ++k)
          for (int j = 0; j < d.grid.dims[1]; ++j)
            for (int i = 0; i < d.grid.dims[0]; ++i)
              out.points.push_back(d.grid.origin + Vec3(i + 0.5, j + 0.5, k + 0.5).cwiseProduct(d.grid.spacing));
        break;
    }
    for (std::size_t i = 0; i < out.points.size(); ++i) out.dataIndex.push_back(i);
    return out;
  }
  sampling::Domain domain = d.bounds;
  if (d.kind == scene::DataKind::Mesh) domain = d.mesh;
  sampling::SampleSet set;
  if (layer.samplingMethod == "regular") {
    set = sampling::sample_regular(domain, layer.samplingSpacing > 0 ? layer.samplingSpacing : 0.05 * extent);
  } else if (layer.samplingMethod == "random") {
    set = sampling::sample_random(domain, static_cast<std::size_t>(layer.sampleCount), seed);
  } else {
    const auto& values = d.scalars.at(layer.density->variable);
    if (d.kind == scene::DataKind::Volume) {
      sampling::VoxelField f;
      f.grid = d.grid;
      f.grid.values = values;
      for (auto& v : f.grid.values) v = std::max(0.0, v);
      set = sampling::sample_density_mh(f, static_cast<std::size_t>(layer.sampleCount), seed);
    } else {
      sampling::MeshField f{d.mesh, values};
      for (auto& v : f.values) v = std::max(0.0, v);
      set = sampling::sample_density_mh(f, static_cast<std::size_t>(layer.sampleCount), seed);
    }
  }
  out.points = std::move(set.points);
  out.dataIndex.assign(out.points.size(), npos);
  return out;
}

}  // namespace

std::vector<float> raymarch_volume(const VolumeParams& params, const Camera& camera, const std::vector<float>& depth,
                                   Image& color, int threads) {
  if (!params.grid || !params.colormap) throw Error(ErrorCode::InvalidArgument, "raymarch_volume: grid and colormap required");
  if (!(params.stepSize > 0.0)) throw Error(ErrorCode::InvalidArgument, "raymarch_volume: step size must be > 0");
  const View view(camera);
  const auto& grid = *params.grid;
  grid.validate();
  if (color.width != view.width || color.height != view.height || color.channels < 3)
    throw Error(ErrorCode::InvalidArgument, "raymarch_volume: color buffer does not match the camera");
  const std::size_t npx = static_cast<std::size_t>(view.width) * view.height;
  if (!depth.empty() && depth.size() != npx)
    throw Error(ErrorCode::InvalidArgument, "raymarch_volume: depth buffer does not match the camera");

  constexpr int kLut = 4096;
  std::vector<Vec3> lut(kLut);
  for (int i = 0; i < kLut; ++i) lut[static_cast<std::size_t>(i)] = lab_rgb(*params.colormap, i / double(kLut - 1));

  const mesh::Aabb box = grid.bounds();
  std::vector<float> alphaOut(npx, 0.0f);
  detail::parallel_for(view.height, threads, [&](int y) {
    for (int x = 0; x < view.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * view.width + x;
      const Vec3 ray = view.ray(x, y);
      const double rayLen = ray.norm();
      const Vec3 dir = ray / rayLen;
      double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-300) {
          if (view.pos[a] < box.min[a] || view.pos[a] > box.max[a]) t1 = -1;
          continue;
        }
        double ta = (box.min[a] - view.pos[a]) / dir[a], tb = (box.max[a] - view.pos[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      if (!depth.empty() && std::isfinite(depth[p])) t1 = std::min(t1, static_cast<double>(depth[p]) * rayLen);
      if (!(t1 > t0)) continue;
      Vec3 acc = Vec3::Zero();
      double alpha = 0.0;
      for (long k = 0;; ++k) {
        const double t = t0 + (static_cast<double>(k) + 0.5) * params.stepSize;
        if (t >= t1) break;
        const double v = grid.sample(view.pos + dir * t, sampling::Interpolation::Trilinear);
        const double tn = scene::normalize(v, params.range);
        const double a = std::clamp(tn * params.opacityScale * params.stepSize, 0.0, 1.0);
        if (a <= 0.0) continue;
        const Vec3& c = lut[static_cast<std::size_t>(std::lround(tn * (kLut - 1)))];
        acc += (1.0 - alpha) * a * c;
        alpha += (1.0 - alpha) * a;
        if (alpha >= 0.99) break;
      }
      alphaOut[p] = static_cast<float>(alpha);
      if (alpha <= 0.0) continue;
      std::uint8_t* px = color.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = acc[c] + (1.0 - alpha) * px[c] / 255.0;
        px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  });
  return alphaOut;
}

RenderResult render_scene(const scene::Scene& sc, const Camera& camera, const RenderOptions& options) {
  {
    const auto diags = scene::validate_scene(sc);
    if (!diags.empty()) {
      std::string msg = "scene is not renderable:";
      for (const auto& d : diags) msg += "\n  " + (d.layer.empty() ? std::string() : "[" + d.layer + "] ") + d.message;
      throw Error(ErrorCode::Validation, msg);
    }
  }
  const View view(camera);
  const std::uint64_t seed = options.seed.value_or(sc.seed);
  const int threads = options.threads;
  Rasterizer raster(view);
  std::vector<Material> materials;
  std::vector<tex::TextureSet> ownedSets;
  ownedSets.reserve(sc.layers.size());
  std::vector<VolumeParams> volumes;
  std::vector<int> volumeLayers;
  std::vector<sampling::VoxelGrid> volumeGrids;
  volumeGrids.reserve(sc.layers.size());
  RenderResult result;

  for (std::size_t li = 0; li < sc.layers.size(); ++li) {
    const auto& layer = sc.layers[li];
    const scene::DataObject& d = *sc.data(layer.dataObject);
    const std::uint64_t layerSeed = mix_seed(seed, li);
    Material mat;
    mat.layer = static_cast<int>(li);
    mat.base = rgb_of(layer.baseColor);
    mat.colormap = layer.color ? colormap_asset(sc, layer.colormap) : nullptr;
    mat.textures = layer.textureSet.empty() ? nullptr : texture_set(sc, layer.textureSet, ownedSets);
    mat.blend = {mat.textures ? static_cast<int>(mat.textures->size()) : 1, layer.blendDistance};
    mat.triK = layer.projectionBlendFactor;
    mat.texScale = layer.textureScale;
    mat.alpha = layer.alphaMask.empty() ? nullptr : image_asset(sc, layer.alphaMask);
    mat.setAlpha = mat.textures && !mat.textures->alphaMasks.empty();
    mat.setNormals = mat.textures && !mat.textures->normalMaps.empty();
    const Image* layerNormal = layer.normalMap.empty() ? nullptr : image_asset(sc, layer.normalMap);

    auto norm = [&](const std::optional<scene::Binding>& b) {
      std::function<double(double)> f = [](double) { return 0.0; };
      if (b) {
        const auto range = binding_range(*b, d);
        f = [range](double v) { return scene::normalize(v, range); };
      }
      return f;
    };
    const auto normColor = norm(layer.color);
    const auto normTex = norm(layer.texture);
    const auto normSize = norm(layer.size);

    switch (layer.type) {
      case scene::LayerType::Surface: {
        mat.triplanar = true;
        mat.normalMap = nullptr;
        const int mi = static_cast<int>(materials.size());
        materials.push_back(mat);
        const auto& m = d.mesh;
        const std::vector<Vec3> normals = m.has_normals() ? m.normals : mesh::compute_vertex_normals(m);
        std::vector<PVert> verts(m.vertex_count());
        for (std::size_t v = 0; v < verts.size(); ++v) {
          verts[v].world = m.positions[v];
          verts[v].normal = normals[v];
          if (m.has_uvs()) verts[v].uv = m.uvs[v];
          verts[v].tc = layer.color ? normColor(d.scalars.at(layer.color->variable)[v]) : -1.0;
          verts[v].tt = layer.texture ? normTex(d.scalars.at(layer.texture->variable)[v]) : 0.0;
        }
        for (const auto& t : m.triangles) raster.add(verts[t[0]], verts[t[1]], verts[t[2]], mi);
        result.triangles += m.triangles.size();
        break;
      }
      case scene::LayerType::Line: {
        mat.lineMapping = true;
        mat.normalMap = layerNormal;
        const int mi = static_cast<int>(materials.size());
        materials.push_back(mat);
        ExtrudeOptions opt;
        opt.style = layer.lineStyle == "tube" ? LineStyle::Tube : LineStyle::Ribbon;
        opt.width = layer.ribbonWidth;
        opt.radius = layer.tubeRadius;
        opt.rotationalOffset = layer.rotationalOffset;
        opt.sampling = layer.lineSampling == "integration-time" ? LineSampling::IntegrationTime : LineSampling::ArcLength;
        opt.step = layer.lineStep;
        std::size_t offset = 0;
        for (const auto& line : d.lines) {
          const std::size_t n = line.points.size();
          auto slice = [&](const std::optional<scene::Binding>& b, const std::function<double(double)>& f) {
            std::vector<double> out;
            if (!b) return out;
            const auto& all = d.scalars.at(b->variable);
            for (std::size_t k = 0; k < n; ++k) out.push_back(f(all[offset + k]));
            return out;
          };
          const auto tcs = slice(layer.color, normColor);
          const auto tts = slice(layer.texture, normTex);
          const auto widths = slice(layer.size, normSize);
          opt.widthScale.clear();
          for (double w : widths) opt.widthScale.push_back(0.5 + w);
          const ExtrudedLine ex = extrude_line(line.points, line.normals, line.times, opt);
          auto at = [](const std::vector<double>& v, double param) {
            const std::size_t i = std::min(static_cast<std::size_t>(param), v.size() - 1);
            const std::size_t j = std::min(i + 1, v.size() - 1);
            const double f = param - static_cast<double>(i);
            return v[i] * (1 - f) + v[j] * f;
          };
          std::vector<PVert> verts(ex.mesh.vertex_count());
          for (std::size_t v = 0; v < verts.size(); ++v) {
            verts[v].world = ex.mesh.positions[v];
            verts[v].normal = ex.mesh.normals[v];
            verts[v].uv = ex.mesh.uvs[v];
            verts[v].tc = tcs.empty() ? -1.0 : at(tcs, ex.param[v]);
            verts[v].tt = tts.empty() ? 0.0 : at(tts, ex.param[v]);
          }
          for (const auto& t : ex.mesh.triangles) raster.add(verts[t[0]], verts[t[1]], verts[t[2]], mi);
          result.triangles += ex.mesh.triangles.size();
          offset += n;
        }
        break;
      }
      case scene::LayerType::Glyph: {
        const auto* glyph = std::get_if<mesh::GlyphAsset>(&sc.asset(layer.glyph)->value);
        const GlyphSamples samples = glyph_samples(layer, d, layerSeed);
        const FieldLookup lookup(d);
        auto scalarAt = [&](const std::string& var, std::size_t i) {
          const auto& values = d.scalars.at(var);
          return samples.dataIndex[i] < values.size() ? values[samples.dataIndex[i]]
                                                      : lookup.scalar(values, samples.points[i]);
        };
        std::vector<Vec3> vectors;
        if (layer.orientation) {
          const auto& values = d.vectors.at(layer.orientation->variable);
          for (std::size_t i = 0; i < samples.points.size(); ++i)
            vectors.push_back(samples.dataIndex[i] < values.size() ? values[samples.dataIndex[i]]
                                                                   : lookup.vector(values, samples.points[i]));
        }
        PlacementOptions po;
        po.mode = layer.orientationMode == "axis"     ? OrientationMode::Axis
                  : layer.orientationMode == "random" ? OrientationMode::Random
                                                      : OrientationMode::Vector;
        po.sizePercent = layer.glyphSizePercent;
        po.dataExtent = d.bounds.largest_extent();
        po.seed = layerSeed;
        if (layer.size)
          for (std::size_t i = 0; i < samples.points.size(); ++i)
            po.width.push_back(normSize(scalarAt(layer.size->variable, i)));
        const auto instances = place_glyphs(samples.points, vectors, po);

        // One material per LOD (each has its own baked map).
        const int firstMat = static_cast<int>(materials.size());
        double radius = 0.0;
        for (const auto& p : glyph->lods.front().mesh.positions) radius = std::max(radius, p.norm());
        std::vector<std::vector<Vec3>> lodNormals;
        for (const auto& lod : glyph->lods) {
          Material lm = mat;
          lm.textures = nullptr;
          lm.setAlpha = lm.setNormals = false;
          lm.normalMap = lod.normalMap.pixels.empty() ? nullptr : &lod.normalMap.pixels;
          materials.push_back(lm);
          lodNormals.push_back(lod.mesh.has_normals() ? lod.mesh.normals : mesh::compute_vertex_normals(lod.mesh));
        }
        for (const auto& inst : instances) {
          const double tc = layer.color ? normColor(scalarAt(layer.color->variable, inst.sample)) : -1.0;
          const double z = (inst.translation - view.pos).dot(view.fwd);
          const double r = radius * inst.scale * std::max(1.0, inst.axialScale);
          const double diameter =
              z <= view.near ? std::numeric_limits<double>::infinity() : 2.0 * r * view.fy / z * 0.5 * view.height;
          const int li2 = select_lod(diameter, static_cast<int>(glyph->lods.size()));
          const auto& lm = glyph->lods[static_cast<std::size_t>(li2)].mesh;
          const Mat3 rot = inst.rotation.toRotationMatrix();
          const Vec3 scale(inst.scale * inst.axialScale, inst.scale * inst.axialScale, inst.scale);
          const Vec3 invScale = scale.cwiseInverse();
          std::vector<PVert> verts(lm.vertex_count());
          for (std::size_t v = 0; v < verts.size(); ++v) {
            verts[v].world = inst.translation + rot * lm.positions[v].cwiseProduct(scale);
            verts[v].normal = (rot * lodNormals[static_cast<std::size_t>(li2)][v].cwiseProduct(invScale)).normalized();
            if (lm.has_uvs()) verts[v].uv = lm.uvs[v];
            verts[v].tc = tc;
          }
          for (const auto& t : lm.triangles) raster.add(verts[t[0]], verts[t[1]], verts[t[2]], firstMat + li2);
          result.triangles += lm.triangles.size();
        }
        result.instances += instances.size();
        break;
      }
      case scene::LayerType::Volume: {
        const std::string var = layer.color ? layer.color->variable : d.scalars.begin()->first;
        sampling::VoxelGrid g = d.grid;
        g.values = d.scalars.at(var);
        volumeGrids.push_back(std::move(g));
        VolumeParams vp;
        vp.grid = &volumeGrids.back();
        vp.colormap = colormap_asset(sc, layer.colormap);
        vp.range = layer.color ? binding_range(*layer.color, d) : scene::range_of(volumeGrids.back().values);
        vp.opacityScale = layer.opacityScale;
        vp.stepSize = layer.stepSize > 0 ? layer.stepSize : 0.5 * d.grid.spacing.minCoeff();
        volumes.push_back(vp);
        volumeLayers.push_back(static_cast<int>(li));
        break;
      }
    }
  }

  auto& tris = raster.triangles();
  const int W = view.width, H = view.height;
  const VisBuffer vb = rasterize(tris, materials, W, H, threads);

  const std::size_t npx = static_cast<std::size_t>(W) * H;
  result.color = Image(W, H, 4);
  result.depth.assign(npx, std::numeric_limits<float>::infinity());
  result.ids.assign(npx, 0);
  result.layerPixels.assign(sc.layers.size(), 0);
  Vec3 light = -sc.light.direction;
  light = light.norm() > 0 ? light.normalized() : Vec3::UnitZ();
  const double ambient = std::clamp(sc.light.ambient, 0.0, 1.0);
  const Vec3 bg = rgb_of(sc.background);

  detail::parallel_for(H, threads, [&](int y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      std::uint8_t* out = result.color.at(x, y);
      out[3] = 255;
      if (vb.tri[p] == kNoTri) {
        const auto b = to_bytes(bg);
        std::copy(b.begin(), b.end(), out);
        continue;
      }
      const Tri& t = tris[vb.tri[p]];
      const Material& m = materials[static_cast<std::size_t>(t.material)];
      const double b1 = vb.b1[p], b2 = vb.b2[p], b0 = 1.0 - b1 - b2;
      const Vec3 world = (t.world[0].cast<double>() * b0 + t.world[1].cast<double>() * b1 + t.world[2].cast<double>() * b2);
      Vec3 n = t.normal[0].cast<double>() * b0 + t.normal[1].cast<double>() * b1 + t.normal[2].cast<double>() * b2;
      if (!(n.norm() > 1e-12)) {
        n = (t.world[1] - t.world[0]).cross(t.world[2] - t.world[0]).cast<double>();
        if (!(n.norm() > 0)) n = -view.fwd;
      }
      n.normalize();
      const Vec3 geomN = n;
      if (n.dot(world - view.pos) > 0) n = -n;
      const Vec2 uv = interp_uv(t, b0, b1, b2);
      const double tc = t.tc[0] * b0 + t.tc[1] * b1 + t.tc[2] * b2;
      const double tt = t.tt[0] * b0 + t.tt[1] * b1 + t.tt[2] * b2;

      Vec3 c = m.colormap && tc >= 0.0 ? lab_rgb(*m.colormap, tc) : m.base;
      if (m.textures) c = c.cwiseProduct(texture_color(m, world, geomN, uv, tt));
      const Vec3 tangent = t.tangent.cast<double>(), bitangent = t.bitangent.cast<double>();
      if (m.normalMap) {
        const Image& nm = *m.normalMap;
        Vec4 s = m.lineMapping ? sample_repeat(nm, uv.y(), uv.x() * m.texScale)
                               : sample_image(nm, uv.x() * nm.width, (1.0 - uv.y()) * nm.height, false);
        n = m.lineMapping ? apply_tangent_normal(n, bitangent, tangent, decode(s))
                          : apply_tangent_normal(n, tangent, bitangent, decode(s));
      } else if (m.setNormals) {
        n = set_normal(m, world, n, uv, tt, tangent, bitangent);
      }
      const double lambert = std::max(0.0, n.dot(light));
      c *= ambient + (1.0 - ambient) * lambert;
      const auto b = to_bytes(c);
      std::copy(b.begin(), b.end(), out);
      result.depth[p] = static_cast<float>(1.0 / vb.invw[p]);
      result.ids[p] = static_cast<std::uint16_t>(m.layer + 1);
    }
  });
  for (std::size_t p = 0; p < npx; ++p)
    if (result.ids[p]) ++result.layerPixels[result.ids[p] - 1u];

  for (std::size_t v = 0; v < volumes.size(); ++v) {
    const auto alpha = raymarch_volume(volumes[v], camera, result.depth, result.color, threads);
    std::size_t count = 0;
    const auto id = static_cast<std::uint16_t>(volumeLayers[v] + 1);
    for (std::size_t p = 0; p < npx; ++p) {
      if (alpha[p] > 1.0f / 255.0f) ++count;
      if (alpha[p] >= kVolumeIdOpacity) result.ids[p] = id;
    }
    result.layerPixels[static_cast<std::size_t>(volumeLayers[v])] = count;
  }
  return result;
}

void save_depth(const std::vector<float>& depth, int width, int height, const std::filesystem::path& path) {
  if (depth.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorCode::InvalidArgument, "depth buffer size does not match dimensions");
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(depth.data());
  write_file_atomic(path, {bytes, depth.size() * sizeof(float)});
  const nlohmann::json header{{"width", width},
                              {"height", height},
                              {"valueType", "float32"},
                              {"endian", "little"},
                              {"quantity", "eye-space depth"},
                              {"background", "inf"},
                              {"raw", path.filename().string()}};
  write_text_file(path.string() + ".json", header.dump(2) + "\n");
}

}  // namespace abr::render
