#include "abr/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace abr::mesh {

Aabb TriMesh::bounds() const {
  Aabb box;
  for (const auto& p : positions) box.expand(p);
  return box;
}

void TriMesh::validate() const {
  if (!normals.empty() && normals.size() != positions.size())
    throw Error(ErrorCode::Validation, "mesh normal count does not match vertex count");
  if (!uvs.empty() && uvs.size() != positions.size())
    throw Error(ErrorCode::Validation, "mesh UV count does not match vertex count");
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (!positions[i].allFinite())
      throw Error(ErrorCode::Validation, "mesh vertex " + std::to_string(i) + " is not finite");
  for (std::size_t i = 0; i < triangles.size(); ++i)
    for (auto v : triangles[i])
      if (v >= positions.size())
        throw Error(ErrorCode::Validation, "mesh triangle " + std::to_string(i) + " references vertex " +
                                               std::to_string(v) + " out of range");
}

// ---------------------------------------------------------------------------
// OBJ

namespace {

std::string_view next_token(std::string_view& line) {
  const auto start = line.find_first_not_of(" \t\r");
  if (start == std::string_view::npos) {
    line = {};
    return {};
  }
  line.remove_prefix(start);
  const auto end = line.find_first_of(" \t\r");
  std::string_view tok = line.substr(0, end);
  line.remove_prefix(end == std::string_view::npos ? line.size() : end);
  return tok;
}

double parse_double(std::string_view tok, int lineNo) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": invalid number '" + std::string(tok) + "'");
  return v;
}

long resolve_index(std::string_view tok, std::size_t count, int lineNo) {
  long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v == 0)
    throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": invalid index '" + std::string(tok) + "'");
  const long idx = v > 0 ? v - 1 : static_cast<long>(count) + v;
  if (idx < 0 || idx >= static_cast<long>(count))
    throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": index " + std::to_string(v) + " out of range");
  return idx;
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

TriMesh parse_obj(std::string_view text) {
  std::vector<Vec3> v, vn;
  std::vector<Vec2> vt;
  using Corner = std::array<long, 3>;  // v, vt, vn (-1 = absent)
  std::vector<std::array<Corner, 3>> faces;
  bool usesAttributes = false;
  int lineNo = 0;
  while (!text.empty()) {
    ++lineNo;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string_view kw = next_token(line);
    if (kw == "v") {
      const double x = parse_double(next_token(line), lineNo);
      const double y = parse_double(next_token(line), lineNo);
      const double z = parse_double(next_token(line), lineNo);
      v.emplace_back(x, y, z);
    } else if (kw == "vn") {
      const double x = parse_double(next_token(line), lineNo);
      const double y = parse_double(next_token(line), lineNo);
      const double z = parse_double(next_token(line), lineNo);
      vn.emplace_back(x, y, z);
    } else if (kw == "vt") {
      const double s = parse_double(next_token(line), lineNo);
      const std::string_view t = next_token(line);
      vt.emplace_back(s, t.empty() ? 0.0 : parse_double(t, lineNo));
    } else if (kw == "f") {
      std::vector<Corner> poly;
      for (std::string_view tok = next_token(line); !tok.empty(); tok = next_token(line)) {
        Corner c{-1, -1, -1};
        std::size_t field = 0;
        while (true) {
          const auto slash = tok.find('/');
          const std::string_view part = tok.substr(0, slash);
          if (field > 2) throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": malformed face corner");
          if (!part.empty()) {
            const std::size_t count = field == 0 ? v.size() : field == 1 ? vt.size() : vn.size();
            c[field] = resolve_index(part, count, lineNo);
            if (field > 0) usesAttributes = true;
          } else if (field == 0) {
            throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": face corner without vertex index");
          }
          if (slash == std::string_view::npos) break;
          tok.remove_prefix(slash + 1);
          ++field;
        }
        poly.push_back(c);
      }
      if (poly.size() < 3)
        throw Error(ErrorCode::Parse, "OBJ line " + std::to_string(lineNo) + ": face needs at least 3 vertices");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
    }
  }

  TriMesh mesh;
  if (!usesAttributes) {
    mesh.positions = std::move(v);
    for (const auto& f : faces)
      mesh.triangles.push_back({static_cast<std::uint32_t>(f[0][0]), static_cast<std::uint32_t>(f[1][0]),
                                static_cast<std::uint32_t>(f[2][0])});
    return mesh;
  }
  // Split vertices per distinct (v, vt, vn) combination.
  bool allUv = true, allNormal = true;
  for (const auto& f : faces)
    for (const auto& c : f) {
      allUv = allUv && c[1] >= 0;
      allNormal = allNormal && c[2] >= 0;
    }
  std::map<Corner, std::uint32_t> remap;
  for (const auto& f : faces) {
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      Corner key = f[static_cast<std::size_t>(k)];
      if (!allUv) key[1] = -1;
      if (!allNormal) key[2] = -1;
      auto [it, inserted] = remap.emplace(key, static_cast<std::uint32_t>(mesh.positions.size()));
      if (inserted) {
        mesh.positions.push_back(v[static_cast<std::size_t>(key[0])]);
        if (allUv) mesh.uvs.push_back(vt[static_cast<std::size_t>(key[1])]);
        if (allNormal) mesh.normals.push_back(vn[static_cast<std::size_t>(key[2])]);
      }
      tri[static_cast<std::size_t>(k)] = it->second;
    }
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

TriMesh load_obj(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_obj(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string to_obj(const TriMesh& mesh) {
  std::string out;
  out.reserve(mesh.positions.size() * 60 + mesh.triangles.size() * 30);
  for (const auto& p : mesh.positions)
    out += "v " + format_real(p.x()) + " " + format_real(p.y()) + " " + format_real(p.z()) + "\n";
  for (const auto& t : mesh.uvs) out += "vt " + format_real(t.x()) + " " + format_real(t.y()) + "\n";
  for (const auto& n : mesh.normals)
    out += "vn " + format_real(n.x()) + " " + format_real(n.y()) + " " + format_real(n.z()) + "\n";
  const bool uv = mesh.has_uvs(), nrm = mesh.has_normals();
  for (const auto& t : mesh.triangles) {
    out += "f";
    for (auto idx : t) {
      const std::string i = std::to_string(idx + 1);
      out += " " + i;
      if (uv && nrm) out += "/" + i + "/" + i;
      else if (uv) out += "/" + i;
      else if (nrm) out += "//" + i;
    }
    out += "\n";
  }
  return out;
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) { write_text_file(path, to_obj(mesh)); }

// ---------------------------------------------------------------------------
// Geometry helpers

Vec3 face_normal(const TriMesh& mesh, std::size_t tri) {
  const auto& t = mesh.triangles[tri];
  const Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double face_area(const TriMesh& mesh, std::size_t tri) {
  const auto& t = mesh.triangles[tri];
  return 0.5 * (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]).norm();
}

std::vector<Vec3> compute_vertex_normals(const TriMesh& mesh) {
  // Accumulate over welded positions so normals stay continuous across UV seams.
  std::map<std::tuple<double, double, double>, std::size_t> weld;
  std::vector<std::size_t> group(mesh.positions.size());
  for (std::size_t i = 0; i < mesh.positions.size(); ++i) {
    const auto& p = mesh.positions[i];
    group[i] = weld.emplace(std::make_tuple(p.x(), p.y(), p.z()), weld.size()).first->second;
  }
  std::vector<Vec3> acc(weld.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
    for (auto v : t) acc[group[v]] += n;  // |n| = 2 x area
  }
  std::vector<Vec3> normals(mesh.positions.size());
  for (std::size_t i = 0; i < normals.size(); ++i) {
    const Vec3& a = acc[group[i]];
    const double len = a.norm();
    normals[i] = len > 0 ? Vec3(a / len) : Vec3::UnitZ();
  }
  return normals;
}

std::size_t unique_position_count(const TriMesh& mesh) {
  std::vector<std::tuple<double, double, double>> keys;
  keys.reserve(mesh.positions.size());
  for (const auto& p : mesh.positions) keys.emplace_back(p.x(), p.y(), p.z());
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

TriMesh clean_geometry(const TriMesh& mesh) {
  mesh.validate();
  std::map<std::tuple<double, double, double>, std::uint32_t> weld;
  std::vector<std::uint32_t> group(mesh.positions.size());
  std::vector<Vec3> welded;
  for (std::size_t i = 0; i < mesh.positions.size(); ++i) {
    const auto& p = mesh.positions[i];
    auto [it, inserted] = weld.emplace(std::make_tuple(p.x(), p.y(), p.z()), static_cast<std::uint32_t>(welded.size()));
    if (inserted) welded.push_back(p);
    group[i] = it->second;
  }
  TriMesh out;
  std::vector<std::int64_t> remap(welded.size(), -1);
  for (const auto& t : mesh.triangles) {
    const Triangle w{group[t[0]], group[t[1]], group[t[2]]};
    if (w[0] == w[1] || w[1] == w[2] || w[0] == w[2]) continue;
    const Vec3 n = (welded[w[1]] - welded[w[0]]).cross(welded[w[2]] - welded[w[0]]);
    if (!(n.norm() > 0.0)) continue;
    Triangle r{};
    for (int k = 0; k < 3; ++k) {
      auto& m = remap[w[static_cast<std::size_t>(k)]];
      if (m < 0) {
        m = static_cast<std::int64_t>(out.positions.size());
        out.positions.push_back(welded[w[static_cast<std::size_t>(k)]]);
      }
      r[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(m);
    }
    out.triangles.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orientation

GlyphOrientation orientation_from_axes(const Vec3& forward, const Vec3& up) {
  const double fl = forward.norm(), ul = up.norm();
  if (!(fl > 0) || !(ul > 0)) throw Error(ErrorCode::InvalidArgument, "orientation axes must be non-zero");
  const Vec3 f = forward / fl;
  const Vec3 u0 = up / ul;
  if (f.cross(u0).norm() < 1e-6)
    throw Error(ErrorCode::InvalidArgument, "forward and up directions are parallel");
  const Vec3 u = (u0 - f * f.dot(u0)).normalized();
  const Vec3 x = u.cross(f);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = u.transpose();
  r.row(2) = f.transpose();
  GlyphOrientation o;
  o.rotation = Eigen::Quaterniond(r).normalized();
  return o;
}

OrientResult orient_mesh(const TriMesh& mesh, const Vec3& forward, const Vec3& up) {
  mesh.validate();
  OrientResult result;
  result.orientation = orientation_from_axes(forward, up);
  const Mat3 r = result.orientation.rotation.toRotationMatrix();
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : mesh.positions) centroid += p;
  if (!mesh.positions.empty()) centroid /= static_cast<double>(mesh.positions.size());
  result.centroid = centroid;
  result.mesh = mesh;
  for (auto& p : result.mesh.positions) p = r * (p - centroid);
  for (auto& n : result.mesh.normals) n = r * n;
  return result;
}

int UvAtlas::chart_count() const {
  std::vector<int> axes = islandAxis;
  std::sort(axes.begin(), axes.end());
  return static_cast<int>(std::unique(axes.begin(), axes.end()) - axes.begin());
}

}  // namespace abr::mesh
