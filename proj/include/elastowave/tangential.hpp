#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "elastowave/boundary_frame.hpp"
#include "elastowave/mesh.hpp"

namespace elastowave {

using SparseMat = Eigen::SparseMatrix<double>;

// lambda_star = 2 lambda mu / (lambda + 2 mu), the flat-projected Lame
// coefficient of the boundary membrane operator.
double lambda_star(double lambda, double mu);

// Field on the acoustic boundary part, stored in nodal frame components:
// dim-1 tangential components and one normal component per node.
struct BoundaryField {
  Eigen::MatrixXd z_T;   // n_nodes x (dim-1)
  Eigen::VectorXd z_nu;  // n_nodes
};

// Restriction of the mesh/frames to the acoustic part: local node numbering,
// facet cache with tangential geometry. In 2d every facet is re-oriented so
// that its stored direction agrees with the frame tangents, which makes the
// arc-length derivative of frame components well defined.
class BoundarySpace {
 public:
  struct Facet {
    std::array<int, 3> lnodes{-1, -1, -1};  // local node ids
    int mesh_facet = -1;
    double measure = 0.0;
    // 2d: tau = unit tangent along the stored direction, kappa = averaged
    // nodal curvature. 3d: tan_basis columns span the facet plane,
    // grads.col(i) is the in-plane gradient of the i-th nodal basis
    // function, shape_avg the averaged nodal shape operator in that basis.
    Eigen::VectorXd tau;
    double kappa = 0.0;
    Eigen::MatrixXd tan_basis;  // dim x (dim-1)
    Eigen::MatrixXd grads;      // dim x dim nodal basis gradients (in-plane)
    Eigen::MatrixXd shape_avg;  // (dim-1) x (dim-1)
  };

  BoundarySpace(const Mesh& mesh, const BoundaryFrames& frames);

  const Mesh& mesh() const { return *mesh_; }
  const BoundaryFrames& frames() const { return *frames_; }
  int dim() const { return mesh_->dim; }
  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_dofs() const { return n_nodes() * dim(); }
  int n_facets() const { return static_cast<int>(facets.size()); }

  int dof(int lnode, int comp) const { return lnode * dim() + comp; }
  int normal_comp() const { return dim() - 1; }

  // Frame vectors of a local node (tangents then normal, ambient columns).
  Eigen::VectorXd node_tangent(int lnode, int k) const;
  Eigen::VectorXd node_normal(int lnode) const;
  Eigen::VectorXd node_position(int lnode) const;
  double node_kappa(int lnode) const;  // 2d

  double total_measure() const;

  std::vector<int> nodes;            // mesh vertex ids
  std::vector<int> local_of_vertex;  // vertex -> local or -1
  std::vector<Facet> facets;

 private:
  const Mesh* mesh_;
  const BoundaryFrames* frames_;
};

// Frame decomposition of ambient nodal vectors (n_nodes x dim) given on the
// acoustic part, and its exact inverse.
BoundaryField decompose_trace(const BoundarySpace& space, const Eigen::MatrixXd& ambient);
Eigen::MatrixXd reconstruct_trace(const BoundarySpace& space, const BoundaryField& field);

// Interleaved dof vector (node-major, tangential components then normal).
Eigen::VectorXd pack_field(const BoundarySpace& space, const BoundaryField& field);
BoundaryField unpack_field(const BoundarySpace& space, const Eigen::VectorXd& dofs);

// Per-facet membrane strain/stress of a boundary field. In 2d both are
// scalars (strain = d_s z_T + kappa z_nu, stress = (2 mu + lambda_star) *
// strain); in 3d they are 2x2 matrices in the facet basis. energy is the
// integral of stress : strain.
struct TangentialStrainStress {
  std::vector<Eigen::MatrixXd> strain;
  std::vector<Eigen::MatrixXd> stress;
  double energy = 0.0;
};
TangentialStrainStress tangential_strain_stress(const BoundarySpace& space,
                                                const BoundaryField& field, double lambda,
                                                double mu);

struct CoefficientFloors {
  double f0 = 0.0;
  double g0 = 0.0;
  double h0 = 0.0;
  bool enforce = true;  // require positive floors and coefficients >= floors
};

// M_f, D_g, H_h are scalar boundary mass matrices (applied per frame
// component); K_LB is the Laplace-Beltrami stiffness acting on the normal
// component; K_elastic is the membrane stiffness on the full field, at the
// interleaved dof layout.
struct BoundaryOperators {
  SparseMat M_f, D_g, H_h;  // n x n
  SparseMat K_LB;           // n x n
  SparseMat K_elastic;      // (n dim) x (n dim)
};

BoundaryOperators assemble_boundary_operators(const BoundarySpace& space,
                                              const Eigen::VectorXd& f,
                                              const Eigen::VectorXd& g,
                                              const Eigen::VectorXd& h, double lambda,
                                              double mu, const CoefficientFloors& floors);

// Exact facet matrix of \int c phi_a phi_b with a P1 nodal weight c (indexed
// by boundary-space node).
Eigen::MatrixXd facet_weighted_mass(const BoundarySpace& space,
                                    const BoundarySpace::Facet& facet,
                                    const Eigen::VectorXd& c);

// Spread a scalar boundary matrix over all frame components / embed a scalar
// matrix acting on the normal component, at the interleaved layout.
SparseMat expand_componentwise(const BoundarySpace& space, const SparseMat& scalar_mat);
SparseMat embed_normal(const BoundarySpace& space, const SparseMat& scalar_mat);

// Closed-surface integration-by-parts consistency of the discrete tangential
// calculus: | integral of (div_T v_T) u_T + (pi d_T u_T) v_T | (ambient
// vector norm), using the tangential parts of both fields. Exactly zero in
// the continuum; decays with the mesh size for smooth fields.
double stokes_residual(const BoundarySpace& space, const BoundaryField& v_T,
                       const BoundaryField& u_T);

// Coordinate-format (row col value) matrix export.
void write_matrix_coo(const SparseMat& m, const std::string& path);

}  // namespace elastowave
