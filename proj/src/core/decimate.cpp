#include "abr/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>

namespace abr::mesh {

namespace {

/// Symmetric 4x4 quadric stored as its upper triangle.
struct Quadric {
  double a00 = 0, a01 = 0, a02 = 0, a03 = 0, a11 = 0, a12 = 0, a13 = 0, a22 = 0, a23 = 0, a33 = 0;

  static Quadric plane(const Vec3& n, double d, double w) {
    Quadric q;
    q.a00 = w * n.x() * n.x();
    q.a01 = w * n.x() * n.y();
    q.a02 = w * n.x() * n.z();
    q.a03 = w * n.x() * d;
    q.a11 = w * n.y() * n.y();
    q.a12 = w * n.y() * n.z();
    q.a13 = w * n.y() * d;
    q.a22 = w * n.z() * n.z();
    q.a23 = w * n.z() * d;
    q.a33 = w * d * d;
    return q;
  }

  Quadric& operator+=(const Quadric& o) {
    a00 += o.a00; a01 += o.a01; a02 += o.a02; a03 += o.a03;
    a11 += o.a11; a12 += o.a12; a13 += o.a13;
    a22 += o.a22; a23 += o.a23; a33 += o.a33;
    return *this;
  }
  Quadric operator+(const Quadric& o) const {
    Quadric q = *this;
    q += o;
    return q;
  }

  double evaluate(const Vec3& p) const {
    const double x = p.x(), y = p.y(), z = p.z();
    return a00 * x * x + 2 * a01 * x * y + 2 * a02 * x * z + 2 * a03 * x + a11 * y * y + 2 * a12 * y * z +
           2 * a13 * y + a22 * z * z + 2 * a23 * z + a33;
  }

  bool minimizer(Vec3& out) const {
    Mat3 a;
    a << a00, a01, a02, a01, a11, a12, a02, a12, a22;
    const Vec3 b(-a03, -a13, -a23);
    const double det = a.determinant();
    const double scale = std::max({std::abs(a00), std::abs(a11), std::abs(a22), 1e-300});
    if (std::abs(det) < 1e-9 * scale * scale * scale) return false;
    out = a.ldlt().solve(b);
    return out.allFinite();
  }
};

struct Candidate {
  double cost;
  std::uint32_t u, v;
  std::uint32_t verU, verV;
  Vec3 target;
  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (u != o.u) return u > o.u;
    return v > o.v;
  }
};

class Decimator {
 public:
  explicit Decimator(const TriMesh& input) : mesh_(clean_geometry(input)) {
    const std::size_t nv = mesh_.positions.size();
    pos_ = mesh_.positions;
    faces_ = mesh_.triangles;
    faceAlive_.assign(faces_.size(), 1);
    vertexAlive_.assign(nv, 1);
    version_.assign(nv, 0);
    quadric_.assign(nv, Quadric{});
    vfaces_.assign(nv, {});
    for (std::size_t f = 0; f < faces_.size(); ++f)
      for (auto v : faces_[f]) vfaces_[v].push_back(static_cast<std::uint32_t>(f));
    alive_ = nv;
    build_quadrics();
    build_heap();
  }

  std::size_t alive() const { return alive_; }

  /// Collapses until at most `target` vertices remain or no safe edge is left.
  bool run_to(std::size_t target) {
    while (alive_ > target) {
      if (heap_.empty()) return false;
      const Candidate c = heap_.top();
      heap_.pop();
      if (!vertexAlive_[c.u] || !vertexAlive_[c.v] || version_[c.u] != c.verU || version_[c.v] != c.verV) continue;
      if (!collapse(c.u, c.v, c.target)) continue;
    }
    return true;
  }

  TriMesh snapshot() const {
    TriMesh out;
    std::vector<std::int64_t> remap(pos_.size(), -1);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!faceAlive_[f]) continue;
      Triangle t{};
      for (int k = 0; k < 3; ++k) {
        const auto v = faces_[f][static_cast<std::size_t>(k)];
        if (remap[v] < 0) {
          remap[v] = static_cast<std::int64_t>(out.positions.size());
          out.positions.push_back(pos_[v]);
        }
        t[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(remap[v]);
      }
      out.triangles.push_back(t);
    }
    out.normals = compute_vertex_normals(out);
    return out;
  }

 private:
  void build_quadrics() {
    // Face planes, area weighted.
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& t = faces_[f];
      const Vec3 n2 = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
      const double len = n2.norm();
      if (!(len > 0)) continue;
      const Vec3 n = n2 / len;
      const Quadric q = Quadric::plane(n, -n.dot(pos_[t[0]]), 0.5 * len);
      for (auto v : t) quadric_[v] += q;
    }
    // Boundary edges: perpendicular constraint planes, penalized.
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& t = faces_[f];
      for (int k = 0; k < 3; ++k) {
        const auto a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
        if (shared_face_count(a, b) != 1) continue;
        const Vec3 edge = pos_[b] - pos_[a];
        const Vec3 fn = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
        Vec3 n = edge.cross(fn);
        const double len = n.norm();
        if (!(len > 0)) continue;
        n /= len;
        const Quadric q = Quadric::plane(n, -n.dot(pos_[a]), kBoundaryPenalty * edge.squaredNorm());
        quadric_[a] += q;
        quadric_[b] += q;
      }
    }
  }

  int shared_face_count(std::uint32_t a, std::uint32_t b) const {
    int n = 0;
    for (auto f : vfaces_[a]) {
      const auto& t = faces_[f];
      if (faceAlive_[f] && (t[0] == b || t[1] == b || t[2] == b)) ++n;
    }
    return n;
  }

  void build_heap() {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    edges.reserve(faces_.size() * 3);
    for (const auto& t : faces_)
      for (int k = 0; k < 3; ++k) {
        auto a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
        if (a > b) std::swap(a, b);
        edges.emplace_back(a, b);
      }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    std::vector<Candidate> initial;
    initial.reserve(edges.size());
    for (const auto& [a, b] : edges) initial.push_back(evaluate(a, b));
    heap_ = decltype(heap_)(std::greater<Candidate>(), std::move(initial));
  }

  Candidate evaluate(std::uint32_t u, std::uint32_t v) const {
    const Quadric q = quadric_[u] + quadric_[v];
    const Vec3 mid = 0.5 * (pos_[u] + pos_[v]);
    Vec3 best = mid;
    double bestCost = q.evaluate(mid);
    Vec3 opt;
    const double edgeLen = (pos_[u] - pos_[v]).norm();
    if (q.minimizer(opt) && (opt - mid).norm() <= 2.0 * edgeLen) {
      const double c = q.evaluate(opt);
      if (c <= bestCost) {
        best = opt;
        bestCost = c;
      }
    }
    for (const Vec3* p : {&pos_[u], &pos_[v]}) {
      const double c = q.evaluate(*p);
      if (c < bestCost) {
        best = *p;
        bestCost = c;
      }
    }
    return {std::max(bestCost, 0.0), u, v, version_[u], version_[v], best};
  }

  void neighbors(std::uint32_t v, std::vector<std::uint32_t>& out) const {
    out.clear();
    for (auto f : vfaces_[v])
      for (auto w : faces_[f])
        if (w != v) out.push_back(w);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

  bool collapse(std::uint32_t u, std::uint32_t v, const Vec3& target) {
    // Faces on the edge and the link condition (keeps the surface manifold).
    sharedFaces_.clear();
    opposite_.clear();
    for (auto f : vfaces_[u]) {
      const auto& t = faces_[f];
      if (t[0] == v || t[1] == v || t[2] == v) {
        sharedFaces_.push_back(f);
        for (auto w : t)
          if (w != u && w != v) opposite_.push_back(w);
      }
    }
    if (sharedFaces_.empty() || sharedFaces_.size() > 2) return false;
    neighbors(u, nu_);
    neighbors(v, nv_);
    common_.clear();
    std::set_intersection(nu_.begin(), nu_.end(), nv_.begin(), nv_.end(), std::back_inserter(common_));
    std::sort(opposite_.begin(), opposite_.end());
    if (common_ != opposite_) return false;
    // Collapsing a tetrahedron-like closed component would leave a degenerate sheet.
    if (nu_.size() <= 3 && nv_.size() <= 3) return false;

    // Reject collapses that flip or degenerate any surviving face.
    for (std::uint32_t moving : {u, v}) {
      for (auto f : vfaces_[moving]) {
        if (std::find(sharedFaces_.begin(), sharedFaces_.end(), f) != sharedFaces_.end()) continue;
        const auto& t = faces_[f];
        Vec3 p[3], q[3];
        for (int k = 0; k < 3; ++k) {
          p[k] = pos_[t[static_cast<std::size_t>(k)]];
          q[k] = (t[static_cast<std::size_t>(k)] == u || t[static_cast<std::size_t>(k)] == v) ? target : p[k];
        }
        const Vec3 before = (p[1] - p[0]).cross(p[2] - p[0]);
        const Vec3 after = (q[1] - q[0]).cross(q[2] - q[0]);
        const double an = after.norm(), bn = before.norm();
        if (!(an > 1e-12 * std::max(bn, 1e-300))) return false;
        if (before.dot(after) < 0.2 * an * bn) return false;
      }
    }

    for (auto f : sharedFaces_) {
      faceAlive_[f] = 0;
      for (auto w : faces_[f]) {
        auto& list = vfaces_[w];
        list.erase(std::remove(list.begin(), list.end(), f), list.end());
      }
    }
    for (auto f : vfaces_[v]) {
      for (auto& w : faces_[f])
        if (w == v) w = u;
      vfaces_[u].push_back(f);
    }
    vfaces_[v].clear();
    vertexAlive_[v] = 0;
    pos_[u] = target;
    quadric_[u] += quadric_[v];
    ++version_[u];
    --alive_;

    neighbors(u, nu_);
    for (auto w : nu_) {
      const auto a = std::min(u, w), b = std::max(u, w);
      heap_.push(evaluate(a, b));
    }
    return true;
  }

  TriMesh mesh_;
  std::vector<Vec3> pos_;
  std::vector<Triangle> faces_;
  std::vector<std::uint8_t> faceAlive_, vertexAlive_;
  std::vector<std::uint32_t> version_;
  std::vector<Quadric> quadric_;
  std::vector<std::vector<std::uint32_t>> vfaces_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<Candidate>> heap_;
  std::size_t alive_ = 0;
  std::vector<std::uint32_t> sharedFaces_, opposite_, nu_, nv_, common_;
};

}  // namespace

std::vector<DecimateResult> decimate_progressive(const TriMesh& mesh, std::span<const int> targets) {
  mesh.validate();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 4) throw Error(ErrorCode::InvalidArgument, "decimation target must be >= 4");
    if (i > 0 && targets[i] >= targets[i - 1])
      throw Error(ErrorCode::InvalidArgument, "decimation targets must be strictly decreasing");
  }
  std::vector<DecimateResult> out;
  std::optional<Decimator> dec;
  for (int target : targets) {
    if (static_cast<std::size_t>(target) >= mesh.vertex_count()) {
      out.push_back({mesh, target, true});
      continue;
    }
    if (!dec) dec.emplace(mesh);
    const bool reached = dec->run_to(static_cast<std::size_t>(target));
    out.push_back({dec->snapshot(), target, reached});
  }
  return out;
}

DecimateResult decimate(const TriMesh& mesh, int targetVertices) {
  const int targets[] = {targetVertices};
  return decimate_progressive(mesh, targets).front();
}

}  // namespace abr::mesh
