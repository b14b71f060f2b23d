#pragma once

#include <Eigen/Dense>
#include <vector>

#include "elastowave/mesh.hpp"

namespace elastowave {

// Orthonormal frame (t1[, t2], nu) and shape operator at every boundary node.
// nu is the outward unit normal averaged over adjacent boundary facets
// (measure-weighted); the shape operator approximates the tangential
// derivative of nu expressed in the node's tangent basis. In 2d it is the
// 1x1 matrix [kappa] with kappa = t . dnu/ds (outer circle of radius r:
// +1/r, inner boundary of an annulus: -1/r).
class BoundaryFrames {
 public:
  int dim = 0;
  std::vector<int> nodes;            // mesh vertex ids carrying a frame
  std::vector<int> frame_of_vertex;  // vertex id -> local frame index or -1
  Eigen::MatrixXd nu;                // n x dim
  Eigen::MatrixXd t1;                // n x dim
  Eigen::MatrixXd t2;                // n x dim (3d), empty in 2d
  std::vector<Eigen::MatrixXd> shape;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int local(int vertex) const { return frame_of_vertex[vertex]; }
  bool has_frame(int vertex) const { return frame_of_vertex[vertex] >= 0; }

  double kappa(int local_node) const { return shape[local_node](0, 0); }

  // Columns are the tangent vector(s) followed by nu.
  Eigen::MatrixXd basis(int local_node) const;
};

BoundaryFrames compute_boundary_frames(const Mesh& mesh);

}  // namespace elastowave
