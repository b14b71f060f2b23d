#include "elastowave/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace elastowave {

namespace {

using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

double tri_signed_area(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

double tet_signed_volume(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                         const Vector3d& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

std::array<int, 3> sorted_facet_key(const BoundaryFacet& f) {
  std::array<int, 3> k = f.nodes;
  // In 2d the third slot is the -1 filler and must stay last.
  std::sort(k.begin(), k[2] < 0 ? k.begin() + 2 : k.end());
  return k;
}

// All facets of a cell, as sorted node triples (third entry -1 in 2d).
std::vector<std::array<int, 3>> cell_facets(const std::array<int, 4>& cell, int dim) {
  std::vector<std::array<int, 3>> out;
  if (dim == 2) {
    for (int e = 0; e < 3; ++e) {
      std::array<int, 3> k{cell[e], cell[(e + 1) % 3], -1};
      std::sort(k.begin(), k.begin() + 2);
      out.push_back(k);
    }
  } else {
    static const int faces[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
    for (const auto& fc : faces) {
      std::array<int, 3> k{cell[fc[0]], cell[fc[1]], cell[fc[2]]};
      std::sort(k.begin(), k.end());
      out.push_back(k);
    }
  }
  return out;
}

}  // namespace

double Mesh::cell_measure(int c) const {
  const auto& cl = cells[c];
  if (dim == 2) {
    return std::abs(tri_signed_area(vertices.row(cl[0]), vertices.row(cl[1]),
                                    vertices.row(cl[2])));
  }
  return std::abs(tet_signed_volume(vertices.row(cl[0]), vertices.row(cl[1]),
                                    vertices.row(cl[2]), vertices.row(cl[3])));
}

double Mesh::cell_diameter(int c) const {
  const auto& cl = cells[c];
  const int n = nodes_per_cell();
  double d = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      d = std::max(d, (vertices.row(cl[i]) - vertices.row(cl[j])).norm());
  return d;
}

double Mesh::max_diameter() const {
  double h = 0.0;
  for (int c = 0; c < n_cells(); ++c) h = std::max(h, cell_diameter(c));
  return h;
}

Eigen::VectorXd Mesh::cell_centroid(int c) const {
  const auto& cl = cells[c];
  VectorXd x = VectorXd::Zero(dim);
  const int n = nodes_per_cell();
  for (int i = 0; i < n; ++i) x += vertices.row(cl[i]).transpose();
  return x / n;
}

double Mesh::facet_measure(int f) const {
  const auto& bf = boundary_facets[f];
  if (dim == 2) return (vertices.row(bf.nodes[0]) - vertices.row(bf.nodes[1])).norm();
  const Vector3d a = vertices.row(bf.nodes[0]);
  const Vector3d b = vertices.row(bf.nodes[1]);
  const Vector3d c = vertices.row(bf.nodes[2]);
  return 0.5 * (b - a).cross(c - a).norm();
}

Eigen::VectorXd Mesh::facet_centroid(int f) const {
  const auto& bf = boundary_facets[f];
  VectorXd x = VectorXd::Zero(dim);
  for (int i = 0; i < dim; ++i) x += vertices.row(bf.nodes[i]).transpose();
  return x / dim;
}

Eigen::VectorXd Mesh::facet_unit_normal(int f) const {
  const auto& bf = boundary_facets[f];
  VectorXd n(dim);
  if (dim == 2) {
    const Vector2d a = vertices.row(bf.nodes[0]);
    const Vector2d b = vertices.row(bf.nodes[1]);
    const Vector2d t = (b - a).normalized();
    n.resize(2);
    n << t.y(), -t.x();
  } else {
    const Vector3d a = vertices.row(bf.nodes[0]);
    const Vector3d b = vertices.row(bf.nodes[1]);
    const Vector3d c = vertices.row(bf.nodes[2]);
    n = ((b - a).cross(c - a)).normalized();
  }
  // Orient away from the vertex of the owning cell opposite to the facet.
  const auto& cl = cells[bf.cell];
  VectorXd opp = VectorXd::Zero(dim);
  for (int i = 0; i <= dim; ++i) {
    const int v = cl[i];
    bool on_facet = false;
    for (int j = 0; j < dim; ++j) on_facet = on_facet || (bf.nodes[j] == v);
    if (!on_facet) {
      opp = vertices.row(v).transpose();
      break;
    }
  }
  if (n.dot(opp - facet_centroid(f)) > 0) n = -n;
  return n;
}

bool Mesh::vertex_on_boundary(int v) const {
  for (const auto& bf : boundary_facets)
    for (int i = 0; i < dim; ++i)
      if (bf.nodes[i] == v) return true;
  return false;
}

std::vector<char> Mesh::boundary_vertex_mask() const {
  std::vector<char> m(n_vertices(), 0);
  for (const auto& bf : boundary_facets)
    for (int i = 0; i < dim; ++i) m[bf.nodes[i]] = 1;
  return m;
}

std::vector<char> Mesh::label_vertex_mask(BoundaryLabel label) const {
  std::vector<char> m(n_vertices(), 0);
  for (const auto& bf : boundary_facets)
    if (bf.label == label)
      for (int i = 0; i < dim; ++i) m[bf.nodes[i]] = 1;
  return m;
}

void Mesh::finalize() {
  if (dim != 2 && dim != 3) throw MeshError("mesh dimension must be 2 or 3");
  // Positive orientation.
  for (auto& cl : cells) {
    if (dim == 2) {
      if (tri_signed_area(vertices.row(cl[0]), vertices.row(cl[1]), vertices.row(cl[2])) < 0)
        std::swap(cl[1], cl[2]);
    } else {
      if (tet_signed_volume(vertices.row(cl[0]), vertices.row(cl[1]), vertices.row(cl[2]),
                            vertices.row(cl[3])) < 0)
        std::swap(cl[2], cl[3]);
    }
  }
  // Attach each boundary facet to its unique owning cell.
  std::map<std::array<int, 3>, std::vector<int>> owners;
  for (int c = 0; c < n_cells(); ++c)
    for (const auto& k : cell_facets(cells[c], dim)) owners[k].push_back(c);
  for (int f = 0; f < n_boundary_facets(); ++f) {
    auto it = owners.find(sorted_facet_key(boundary_facets[f]));
    if (it == owners.end() || it->second.size() != 1)
      throw MeshError("boundary facet " + std::to_string(f) +
                      " is not a facet of exactly one cell");
    boundary_facets[f].cell = it->second.front();
  }
  validate();
}

void Mesh::validate() const {
  for (int v = 0; v < n_vertices(); ++v)
    if (!vertices.row(v).allFinite())
      throw MeshError("vertex " + std::to_string(v) + " has non-finite coordinates");
  for (int c = 0; c < n_cells(); ++c) {
    for (int i = 0; i < nodes_per_cell(); ++i)
      if (cells[c][i] < 0 || cells[c][i] >= n_vertices())
        throw MeshError("cell " + std::to_string(c) + " has out-of-range vertex index");
    if (cell_measure(c) <= 0)
      throw MeshError("cell " + std::to_string(c) + " is degenerate");
  }
  // Every cell facet is shared by exactly two cells or is a boundary facet.
  std::map<std::array<int, 3>, int> count;
  for (int c = 0; c < n_cells(); ++c)
    for (const auto& k : cell_facets(cells[c], dim)) count[k]++;
  std::map<std::array<int, 3>, int> bcount;
  for (const auto& bf : boundary_facets) {
    if (facet_measure(static_cast<int>(&bf - boundary_facets.data())) <= 0)
      throw MeshError("degenerate boundary facet");
    bcount[sorted_facet_key(bf)]++;
  }
  for (const auto& [k, n] : count) {
    if (n == 2) continue;
    if (n == 1) {
      auto it = bcount.find(k);
      if (it == bcount.end() || it->second != 1)
        throw MeshError("interior facet with a single cell is not listed as boundary");
      continue;
    }
    throw MeshError("facet shared by more than two cells");
  }
  for (const auto& [k, n] : bcount)
    if (n != 1 || count.find(k) == count.end() || count.at(k) != 1)
      throw MeshError("boundary facet list inconsistent with cell facets");
}

namespace {

Mesh build_annulus(double r_in, double r_out, double target_h) {
  const double pi = std::numbers::pi;
  const double step = target_h / std::numbers::sqrt2;
  const int n_r = std::max(2, static_cast<int>(std::ceil((r_out - r_in) / step)));
  const int n_t = std::max(8, static_cast<int>(std::ceil(2.0 * pi * r_out / step)));

  Mesh m;
  m.dim = 2;
  m.vertices.resize((n_r + 1) * n_t, 2);
  for (int k = 0; k <= n_r; ++k) {
    const double r = r_in + (r_out - r_in) * k / n_r;
    for (int j = 0; j < n_t; ++j) {
      const double th = 2.0 * pi * j / n_t;
      m.vertices.row(k * n_t + j) << r * std::cos(th), r * std::sin(th);
    }
  }
  auto vid = [&](int k, int j) { return k * n_t + ((j % n_t) + n_t) % n_t; };
  for (int k = 0; k < n_r; ++k) {
    for (int j = 0; j < n_t; ++j) {
      const int a = vid(k, j), b = vid(k, j + 1), c = vid(k + 1, j + 1), d = vid(k + 1, j);
      m.cells.push_back({a, b, c, -1});
      m.cells.push_back({a, c, d, -1});
    }
  }
  for (int j = 0; j < n_t; ++j) {
    m.boundary_facets.push_back({{vid(0, j), vid(0, j + 1), -1}, -1, BoundaryLabel::Unset});
    m.boundary_facets.push_back(
        {{vid(n_r, j), vid(n_r, j + 1), -1}, -1, BoundaryLabel::Unset});
  }
  m.finalize();
  return m;
}

struct SurfaceMesh {
  std::vector<Vector3d> verts;  // on the unit sphere
  std::vector<std::array<int, 3>> tris;
};

SurfaceMesh icosphere(int subdivisions) {
  SurfaceMesh s;
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double raw[12][3] = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                             {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                             {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (const auto& p : raw) s.verts.push_back(Vector3d(p[0], p[1], p[2]).normalized());
  const int f[20][3] = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                        {1, 5, 9},   {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                        {3, 9, 4},   {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                        {4, 9, 5},   {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (const auto& t : f) s.tris.push_back({t[0], t[1], t[2]});

  for (int lvl = 0; lvl < subdivisions; ++lvl) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(s.verts.size());
      s.verts.push_back(((s.verts[a] + s.verts[b]) * 0.5).normalized());
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& t : s.tris) {
      const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    s.tris = std::move(next);
  }
  // Outward orientation (normal along centroid direction).
  for (auto& t : s.tris) {
    const Vector3d a = s.verts[t[0]], b = s.verts[t[1]], c = s.verts[t[2]];
    if ((b - a).cross(c - a).dot(a + b + c) < 0) std::swap(t[1], t[2]);
  }
  return s;
}

Mesh build_shell(double r_in, double r_out, double target_h) {
  const double step = target_h / std::numbers::sqrt2;
  const double ico_edge = 4.0 / std::sqrt(10.0 + 2.0 * std::sqrt(5.0));
  const int subdiv = std::max(
      1, static_cast<int>(std::ceil(std::log2(ico_edge * r_out / step))));
  const int n_r = std::max(2, static_cast<int>(std::ceil((r_out - r_in) / step)));

  const SurfaceMesh s = icosphere(subdiv);
  const int ns = static_cast<int>(s.verts.size());

  Mesh m;
  m.dim = 3;
  m.vertices.resize(ns * (n_r + 1), 3);
  for (int k = 0; k <= n_r; ++k) {
    const double r = r_in + (r_out - r_in) * k / n_r;
    for (int i = 0; i < ns; ++i) m.vertices.row(k * ns + i) = (r * s.verts[i]).transpose();
  }

  // Split each radial prism into three tetrahedra with quad diagonals chosen
  // through the smallest global vertex index, so lateral faces conform.
  for (int k = 0; k < n_r; ++k) {
    for (const auto& t : s.tris) {
      std::array<int, 3> bot{t[0] + k * ns, t[1] + k * ns, t[2] + k * ns};
      std::array<int, 3> top{t[0] + (k + 1) * ns, t[1] + (k + 1) * ns, t[2] + (k + 1) * ns};
      int r0 = 0;
      if (bot[1] < bot[r0]) r0 = 1;
      if (bot[2] < bot[r0]) r0 = 2;
      const int p0 = bot[r0], p1 = bot[(r0 + 1) % 3], p2 = bot[(r0 + 2) % 3];
      const int p3 = top[r0], p4 = top[(r0 + 1) % 3], p5 = top[(r0 + 2) % 3];
      if (p1 < p2) {
        m.cells.push_back({p0, p1, p2, p5});
        m.cells.push_back({p0, p1, p5, p4});
        m.cells.push_back({p0, p4, p5, p3});
      } else {
        m.cells.push_back({p0, p1, p2, p4});
        m.cells.push_back({p0, p4, p2, p5});
        m.cells.push_back({p0, p4, p5, p3});
      }
    }
  }
  for (const auto& t : s.tris) {
    m.boundary_facets.push_back({{t[0], t[1], t[2]}, -1, BoundaryLabel::Unset});
    m.boundary_facets.push_back(
        {{t[0] + n_r * ns, t[1] + n_r * ns, t[2] + n_r * ns}, -1, BoundaryLabel::Unset});
  }
  m.finalize();
  return m;
}

}  // namespace

Mesh build_mesh(MeshKind kind, double r_in, double r_out, double target_h) {
  if (!(r_in > 0) || !(r_out > r_in))
    throw ParameterError("mesh radii must satisfy 0 < r_in < r_out");
  if (!(target_h > 0) || target_h >= (r_out - r_in) / 2)
    throw ParameterError("target_h must lie in (0, (r_out - r_in)/2)");
  Mesh m = (kind == MeshKind::Annulus) ? build_annulus(r_in, r_out, target_h)
                                       : build_shell(r_in, r_out, target_h);
  return m;
}

void classify_boundary(Mesh& mesh, const Eigen::VectorXd& x0, double delta) {
  if (x0.size() != mesh.dim) throw ParameterError("x0 dimension mismatch");
  if (!(delta > 0)) throw ParameterError("delta must be positive");
  int n0 = 0, n1 = 0;
  for (int f = 0; f < mesh.n_boundary_facets(); ++f) {
    const double s = mesh.facet_unit_normal(f).dot(mesh.facet_centroid(f) - x0);
    if (s >= delta) {
      mesh.boundary_facets[f].label = BoundaryLabel::Gamma0;
      ++n0;
    } else if (s <= 0) {
      mesh.boundary_facets[f].label = BoundaryLabel::Gamma1;
      ++n1;
    } else {
      std::ostringstream os;
      os << "boundary facet " << f << " has (x - x0).nu = " << s
         << " strictly between 0 and delta = " << delta
         << "; the boundary-partition condition fails";
      throw GeometryError(os.str());
    }
  }
  if (n0 == 0) throw GeometryError("clamped boundary part is empty");
  if (n1 == 0) throw GeometryError("acoustic boundary part is empty");
  mesh.classified = true;
  mesh.x0 = x0;
  mesh.delta = delta;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open mesh file for writing: " + path);
  out << mesh.dim << ' ' << mesh.n_vertices() << ' ' << mesh.n_cells() << ' '
      << mesh.n_boundary_facets() << '\n';
  char buf[64];
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    for (int d = 0; d < mesh.dim; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", mesh.vertices(v, d));
      out << (d ? " " : "") << buf;
    }
    out << '\n';
  }
  for (const auto& cl : mesh.cells) {
    for (int i = 0; i <= mesh.dim; ++i) out << (i ? " " : "") << cl[i];
    out << '\n';
  }
  for (const auto& bf : mesh.boundary_facets) {
    for (int i = 0; i < mesh.dim; ++i) out << bf.nodes[i] << ' ';
    out << static_cast<int>(bf.label) << '\n';
  }
  if (!out) throw ParameterError("write failed: " + path);
}

namespace {

std::string next_data_line(std::istream& in, int& lineno) {
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) return line;
  }
  throw MeshError("mesh file truncated at line " + std::to_string(lineno + 1));
}

}  // namespace

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open mesh file: " + path);
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw MeshError(path + ":" + std::to_string(lineno) + ": " + what);
  };

  Mesh m;
  int nv = 0, nc = 0, nf = 0;
  {
    std::istringstream hs(next_data_line(in, lineno));
    if (!(hs >> m.dim >> nv >> nc >> nf)) fail("bad header");
    if (m.dim != 2 && m.dim != 3) fail("dimension must be 2 or 3");
    if (nv <= 0 || nc <= 0 || nf <= 0) fail("non-positive entity count");
  }
  m.vertices.resize(nv, m.dim);
  for (int v = 0; v < nv; ++v) {
    std::istringstream vs(next_data_line(in, lineno));
    for (int d = 0; d < m.dim; ++d)
      if (!(vs >> m.vertices(v, d))) fail("bad vertex coordinates");
  }
  for (int c = 0; c < nc; ++c) {
    std::istringstream cs(next_data_line(in, lineno));
    std::array<int, 4> cl{-1, -1, -1, -1};
    for (int i = 0; i <= m.dim; ++i)
      if (!(cs >> cl[i])) fail("bad cell line");
    m.cells.push_back(cl);
  }
  for (int f = 0; f < nf; ++f) {
    std::istringstream fs(next_data_line(in, lineno));
    BoundaryFacet bf;
    for (int i = 0; i < m.dim; ++i)
      if (!(fs >> bf.nodes[i])) fail("bad facet line");
    int label = -1;
    if (!(fs >> label)) fail("missing facet label");
    if (label < -1 || label > 1) fail("facet label must be -1, 0 or 1");
    bf.label = static_cast<BoundaryLabel>(label);
    m.boundary_facets.push_back(bf);
  }
  try {
    m.finalize();
  } catch (const MeshError& e) {
    throw MeshError(path + ": " + e.what());
  }
  m.classified = std::all_of(m.boundary_facets.begin(), m.boundary_facets.end(),
                             [](const BoundaryFacet& b) {
                               return b.label != BoundaryLabel::Unset;
                             });
  return m;
}

}  // namespace elastowave
