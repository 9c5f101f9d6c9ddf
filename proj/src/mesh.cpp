#include "evac3d/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "evac3d/errors.hpp"
#include "text_util.hpp"

namespace evac3d {

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& tri = faces[f];
    for (int c : tri) {
      if (c < 0 || c >= n) throw ValidationError("face " + std::to_string(f) + ": index out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw ValidationError("face " + std::to_string(f) + ": repeated vertex");
    }
  }
}

Vec3 TriMesh::face_normal(std::size_t f) const {
  const auto& t = faces[f];
  const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriMesh::area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

double TriMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& t : faces) {
    v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  return v / 6.0;
}

std::vector<std::vector<int>> TriMesh::adjacency() const {
  std::vector<std::vector<int>> adj(vertices.size());
  for (const auto& t : faces) {
    for (int k = 0; k < 3; ++k) {
      adj[t[k]].push_back(t[(k + 1) % 3]);
      adj[t[k]].push_back(t[(k + 2) % 3]);
    }
  }
  for (auto& nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return adj;
}

bool is_watertight(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edge_use[{a, b}];
    }
  }
  if (edge_use.empty()) return false;
  return std::all_of(edge_use.begin(), edge_use.end(), [](const auto& kv) { return kv.second == 2; });
}

int connected_components(const TriMesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& t : mesh.faces) {
    parent[find(t[1])] = find(t[0]);
    parent[find(t[2])] = find(t[0]);
  }
  std::vector<char> used(mesh.vertices.size(), 0);
  for (const auto& t : mesh.faces) used[t[0]] = 1;
  int count = 0;
  for (std::size_t v = 0; v < parent.size(); ++v) {
    if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++count;
  }
  return count;
}

TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area) {
  TriMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (!(mesh.face_area(f) > min_area)) continue;
    std::array<int, 3> tri;
    for (int k = 0; k < 3; ++k) {
      int& r = remap[mesh.faces[f][k]];
      if (r < 0) {
        r = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[mesh.faces[f][k]]);
      }
      tri[k] = r;
    }
    out.faces.push_back(tri);
  }
  return out;
}

TriMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
  if (subdivisions < 0) throw std::invalid_argument("icosphere: negative subdivision level");
  if (!(radius > 0.0)) throw std::invalid_argument("icosphere: radius must be positive");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, g, 0}, {1, g, 0},  {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                         {0, -1, -g}, {0, 1, -g}, {g, 0, -1},  {g, 0, 1},  {-g, 0, -1}, {-g, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find({key.first, key.second});
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint[{key.first, key.second}] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(v.size());
  for (const auto& p : v) mesh.vertices.push_back(center + radius * p);
  mesh.faces = std::move(f);
  if (mesh.signed_volume() < 0.0) {
    for (auto& t : mesh.faces) std::swap(t[1], t[2]);
  }
  return mesh;
}

double icosphere_chordal_error(const TriMesh& icosphere, double radius, const Vec3& center) {
  double min_plane = radius;
  for (std::size_t f = 0; f < icosphere.faces.size(); ++f) {
    const Vec3 n = icosphere.face_normal(f);
    min_plane = std::min(min_plane, std::abs(n.dot(icosphere.vertices[icosphere.faces[f][0]] - center)));
  }
  return radius - min_plane;
}

namespace {

bool has_extension(const std::filesystem::path& path, const char* ext) {
  auto e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

struct PlyProperty {
  std::string type;
  std::string name;
  std::string list_count_type;  // non-empty for list properties
};

double read_ply_scalar(std::istream& in, const std::string& type) {
  auto fail = [] { throw ParseError("truncated PLY body", 0); };
  if (type == "char" || type == "int8") { std::int8_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "uchar" || type == "uint8") { std::uint8_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "short" || type == "int16") { std::int16_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "ushort" || type == "uint16") { std::uint16_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "int" || type == "int32") { std::int32_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "uint" || type == "uint32") { std::uint32_t v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "float" || type == "float32") { float v; if (!detail::read_le(in, v)) fail(); return v; }
  if (type == "double" || type == "float64") { double v; if (!detail::read_le(in, v)) fail(); return v; }
  throw ParseError("unsupported PLY property type '" + type + "'", 0);
}

TriMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw ParseError("missing 'ply' magic", 1);
  ++lineno;
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
  };
  std::vector<Element> elements;
  bool binary_le = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
      if (!binary_le) throw ParseError("only binary_little_endian PLY is supported", lineno);
    } else if (key == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw ParseError("malformed element line", lineno);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw ParseError("property before element", lineno);
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") ls >> p.list_count_type >> p.type;
      ls >> p.name;
      if (!ls) throw ParseError("malformed property line", lineno);
      elements.back().props.push_back(p);
    } else if (key == "comment" || key == "obj_info" || key.empty()) {
      continue;
    } else {
      throw ParseError("unexpected PLY header keyword '" + key + "'", lineno);
    }
  }
  if (!binary_le) throw ParseError("PLY header lacks a format line", lineno);

  TriMesh mesh;
  for (const auto& el : elements) {
    for (std::size_t i = 0; i < el.count; ++i) {
      Vec3 p = Vec3::Zero();
      std::vector<int> poly;
      for (const auto& prop : el.props) {
        if (!prop.list_count_type.empty()) {
          const auto n = static_cast<std::size_t>(read_ply_scalar(in, prop.list_count_type));
          std::vector<int> items(n);
          for (auto& it : items) it = static_cast<int>(read_ply_scalar(in, prop.type));
          if (el.name == "face" && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            poly = std::move(items);
          }
        } else {
          const double v = read_ply_scalar(in, prop.type);
          if (el.name == "vertex") {
            if (prop.name == "x") p.x() = v;
            if (prop.name == "y") p.y() = v;
            if (prop.name == "z") p.z() = v;
          }
        }
      }
      if (el.name == "vertex") mesh.vertices.push_back(p);
      if (el.name == "face") {
        if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", 0);
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  mesh.validate();
  return mesh;
}

void write_ply(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write mesh file " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    detail::write_le(out, v.x());
    detail::write_le(out, v.y());
    detail::write_le(out, v.z());
  }
  for (const auto& f : mesh.faces) {
    detail::write_le(out, std::uint8_t{3});
    for (int i : f) detail::write_le(out, static_cast<std::int32_t>(i));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
  TriMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(detail::strip_comment(line), false);
    if (fields.empty()) continue;
    if (fields[0] == "v") {
      if (fields.size() < 4) throw ParseError("vertex needs 3 coordinates", lineno);
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        auto v = detail::parse_number<double>(fields[k + 1]);
        if (!v) throw ParseError("invalid vertex coordinate", lineno);
        p[k] = *v;
      }
      mesh.vertices.push_back(p);
    } else if (fields[0] == "f") {
      std::vector<int> poly;
      for (std::size_t k = 1; k < fields.size(); ++k) {
        auto token = fields[k].substr(0, fields[k].find('/'));
        auto idx = detail::parse_number<int>(token);
        if (!idx || *idx == 0) throw ParseError("invalid face index", lineno);
        // Negative indices are relative to the current vertex count.
        poly.push_back(*idx > 0 ? *idx - 1 : static_cast<int>(mesh.vertices.size()) + *idx);
      }
      if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", lineno);
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  mesh.validate();
  return mesh;
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh file " + path.string());
  using detail::format_double;
  for (const auto& v : mesh.vertices) {
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

TriMesh read_mesh(const std::filesystem::path& path) {
  if (has_extension(path, ".ply")) return read_ply(path);
  if (has_extension(path, ".obj")) return read_obj(path);
  throw std::invalid_argument("unsupported mesh extension: " + path.string());
}

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  if (has_extension(path, ".ply")) return write_ply(mesh, path);
  if (has_extension(path, ".obj")) return write_obj(mesh, path);
  throw std::invalid_argument("unsupported mesh extension: " + path.string());
}

}  // namespace evac3d
