#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "elastowave/errors.hpp"

namespace elastowave {

enum class BoundaryLabel : int { Unset = -1, Gamma0 = 0, Gamma1 = 1 };

struct BoundaryFacet {
  std::array<int, 3> nodes{-1, -1, -1};  // nodes[2] == -1 in 2d
  int cell = -1;                         // owning cell
  BoundaryLabel label = BoundaryLabel::Unset;

  int n_nodes(int dim) const { return dim; }  // segment in 2d, triangle in 3d
};

// Simplicial mesh (triangles in 2d, tetrahedra in 3d) with an explicit list
// of boundary facets. Cells are stored with positive orientation.
class Mesh {
 public:
  int dim = 0;
  Eigen::MatrixXd vertices;               // n_vertices x dim
  std::vector<std::array<int, 4>> cells;  // cells[c][3] == -1 in 2d
  std::vector<BoundaryFacet> boundary_facets;

  // Set by classify_boundary.
  bool classified = false;
  Eigen::VectorXd x0;
  double delta = 0.0;

  int n_vertices() const { return static_cast<int>(vertices.rows()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
  int n_boundary_facets() const { return static_cast<int>(boundary_facets.size()); }
  int nodes_per_cell() const { return dim + 1; }

  Eigen::VectorXd vertex(int v) const { return vertices.row(v).transpose(); }

  double cell_measure(int c) const;   // area / volume, positive
  double cell_diameter(int c) const;  // max vertex pair distance
  double max_diameter() const;
  Eigen::VectorXd cell_centroid(int c) const;

  double facet_measure(int f) const;
  Eigen::VectorXd facet_centroid(int f) const;
  // Unit normal pointing out of the owning cell (= out of the domain).
  Eigen::VectorXd facet_unit_normal(int f) const;

  bool vertex_on_boundary(int v) const;
  std::vector<char> boundary_vertex_mask() const;
  std::vector<char> label_vertex_mask(BoundaryLabel label) const;

  // Fix cell orientation, recompute facet owners, check facet/cell
  // consistency and facet-sharing counts. Throws MeshError on defects.
  void finalize();
  void validate() const;
};

enum class MeshKind { Annulus, SphericalShell };

// Structured mesh of an annulus (2d) or spherical shell (3d), centered at the
// origin. target_h bounds the cell diameter from above. Requires
// 0 < r_in < r_out and target_h < (r_out - r_in)/2.
Mesh build_mesh(MeshKind kind, double r_in, double r_out, double target_h);

// Label every boundary facet from the sign of (centroid - x0) . nu:
// >= delta -> Gamma0, <= 0 -> Gamma1. A facet strictly between 0 and delta,
// or an empty Gamma0/Gamma1, is a geometric-condition violation.
void classify_boundary(Mesh& mesh, const Eigen::VectorXd& x0, double delta);

// Plain-text format, 17 significant digits (bit-exact round trip):
//   dim n_vertices n_cells n_bfacets
//   <vertex coordinates>            (n_vertices lines)
//   <cell vertex indices>           (n_cells lines)
//   <facet vertex indices> <label>  (n_bfacets lines)
void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(const std::string& path);

}  // namespace elastowave
