#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "elastowave/mesh.hpp"
#include "elastowave/region_fields.hpp"
#include "elastowave/tangential.hpp"

namespace elastowave {

struct MaterialParams {
  double alpha = 1.0;   // shear modulus
  double lambda = 1.0;  // first Lame parameter

  void validate() const;
};

// Discrete operators for the coupled bulk/boundary system.  Bulk fields are
// P1 vector fields with the clamped part of the boundary eliminated; boundary
// fields live in the interleaved frame layout of BoundarySpace.
struct SystemMatrices {
  int dim = 0;
  int n_free = 0;
  // (vertex * dim + comp) -> free dof index, or -1 on the clamped part.
  std::vector<int> free_index;
  // free dof -> vertex * dim + comp
  std::vector<int> free_to_full;

  SparseMat M_O;       // bulk mass
  SparseMat K_O;       // bulk elastic stiffness
  SparseMat D_a;       // bulk damping (localized collar weight)
  SparseMat T_gamma1;  // acoustic-boundary trace mass on bulk dofs

  BoundaryOperators scalar_ops;  // per-component boundary operators
  SparseMat S_f, S_g, S_h;       // componentwise expansions of M_f, D_g, H_h
  SparseMat K_el;                // membrane stiffness (vector level)
  SparseMat K_nu;                // Laplace-Beltrami stiffness on the normal trace
  SparseMat Z;                   // S_h + K_el + K_nu
  SparseMat B;                   // coupling: boundary dofs x free bulk dofs

  int n_bdofs() const { return static_cast<int>(Z.rows()); }
  int state_size() const { return 2 * n_free + 2 * n_bdofs(); }
};

// Constant gradients of the P1 basis on one cell, one column per cell vertex.
Eigen::MatrixXd cell_gradients(const Mesh& mesh, int c);

SystemMatrices assemble_system(const Mesh& mesh, const BoundarySpace& space,
                               const RegionFields& fields, const MaterialParams& material,
                               const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& h, const CoefficientFloors& floors);

// Restriction/prolongation between full vertex-interleaved bulk vectors and
// the free dof numbering.
Eigen::VectorXd restrict_free(const SystemMatrices& sys, const Eigen::VectorXd& full);
Eigen::VectorXd prolong_full(const SystemMatrices& sys, const Eigen::VectorXd& free);

// Gram matrix of the energy inner product over states (u, v, z, w):
// blockdiag(K_O, M_O, Z, S_f).  Twice the physical energy is the induced
// squared norm.
SparseMat hilbert_gram(const SystemMatrices& sys);

// Writes the dof numbering (free bulk dofs and acoustic boundary dofs) as
// JSON so matrix dumps can be interpreted offline.
void write_index_map(const SystemMatrices& sys, const BoundarySpace& space,
                     const std::string& path);

}  // namespace elastowave
