#include "elastowave/assembly.hpp"

#include <fstream>

#include "elastowave/errors.hpp"

namespace elastowave {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

void MaterialParams::validate() const {
  if (!(alpha > 0)) throw ParameterError("shear modulus must be positive");
  if (lambda < 0) throw ParameterError("first Lame parameter must be nonnegative");
}

MatrixXd cell_gradients(const Mesh& mesh, int c) {
  const int d = mesh.dim;
  const auto& cl = mesh.cells[c];
  MatrixXd J(d, d);
  for (int k = 0; k < d; ++k) J.col(k) = mesh.vertex(cl[k + 1]) - mesh.vertex(cl[0]);
  const MatrixXd Jinv_t = J.inverse().transpose();
  MatrixXd g(d, d + 1);
  for (int k = 0; k < d; ++k) g.col(k + 1) = Jinv_t.col(k);
  g.col(0) = -g.rightCols(d).rowwise().sum();
  return g;
}

namespace {

struct ColMajorBuilder {
  std::vector<Triplet> t;
  void add(int r, int c, double v) {
    if (r >= 0 && c >= 0) t.emplace_back(r, c, v);
  }
  SparseMat build(int rows, int cols) {
    SparseMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
  }
};

}  // namespace

SystemMatrices assemble_system(const Mesh& mesh, const BoundarySpace& space,
                               const RegionFields& fields, const MaterialParams& material,
                               const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& h, const CoefficientFloors& floors) {
  material.validate();
  if (static_cast<int>(fields.a_cell.size()) != mesh.n_cells())
    throw ParameterError("damping field does not match the mesh");
  const int d = mesh.dim;
  const int nv = mesh.n_vertices();

  SystemMatrices sys;
  sys.dim = d;
  sys.free_index.assign(static_cast<size_t>(nv) * d, -1);
  const auto clamped = mesh.label_vertex_mask(BoundaryLabel::Gamma0);
  for (int i = 0; i < nv; ++i) {
    if (clamped[i]) continue;
    for (int c = 0; c < d; ++c) {
      sys.free_index[static_cast<size_t>(i) * d + c] = sys.n_free++;
      sys.free_to_full.push_back(i * d + c);
    }
  }
  if (sys.n_free == 0) throw GeometryError("no unconstrained bulk dofs");

  const double alpha = material.alpha, lambda = material.lambda;
  ColMajorBuilder bm, bk, bd, bt;
  const int npc = mesh.nodes_per_cell();
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& cl = mesh.cells[c];
    const double vol = mesh.cell_measure(c);
    const MatrixXd grad = cell_gradients(mesh, c);
    const double mdiag = (d == 2) ? vol / 6.0 : vol / 10.0;
    const double moff = (d == 2) ? vol / 12.0 : vol / 20.0;
    const double ac = fields.a_cell[c];
    for (int a = 0; a < npc; ++a) {
      for (int b = 0; b < npc; ++b) {
        const double mab = (a == b) ? mdiag : moff;
        for (int i = 0; i < d; ++i) {
          const int ra = sys.free_index[static_cast<size_t>(cl[a]) * d + i];
          const int rb = sys.free_index[static_cast<size_t>(cl[b]) * d + i];
          bm.add(ra, rb, mab);
          if (ac != 0.0) bd.add(ra, rb, ac * mab);
        }
        const double gg = grad.col(a).dot(grad.col(b));
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) {
            const int ra = sys.free_index[static_cast<size_t>(cl[a]) * d + i];
            const int rb = sys.free_index[static_cast<size_t>(cl[b]) * d + j];
            double v = lambda * grad(i, a) * grad(j, b) + alpha * grad(j, a) * grad(i, b);
            if (i == j) v += alpha * gg;
            bk.add(ra, rb, vol * v);
          }
      }
    }
  }

  // Trace mass of the acoustic part, expanded componentwise on bulk dofs.
  {
    for (const auto& fc : space.facets) {
      const double l = fc.measure;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          const double mab =
              (d == 2) ? (a == b ? l / 3.0 : l / 6.0) : (a == b ? l / 6.0 : l / 12.0);
          const int va = space.nodes[fc.lnodes[a]], vb = space.nodes[fc.lnodes[b]];
          for (int i = 0; i < d; ++i)
            bt.add(sys.free_index[static_cast<size_t>(va) * d + i],
                   sys.free_index[static_cast<size_t>(vb) * d + i], mab);
        }
    }
  }

  sys.M_O = bm.build(sys.n_free, sys.n_free);
  sys.K_O = bk.build(sys.n_free, sys.n_free);
  sys.D_a = bd.build(sys.n_free, sys.n_free);
  sys.T_gamma1 = bt.build(sys.n_free, sys.n_free);

  sys.scalar_ops = assemble_boundary_operators(space, f, g, h, lambda, alpha, floors);
  sys.S_f = expand_componentwise(space, sys.scalar_ops.M_f);
  sys.S_g = expand_componentwise(space, sys.scalar_ops.D_g);
  sys.S_h = expand_componentwise(space, sys.scalar_ops.H_h);
  sys.K_el = sys.scalar_ops.K_elastic;
  sys.K_nu = embed_normal(space, sys.scalar_ops.K_LB);
  sys.Z = sys.S_h + sys.K_el + sys.K_nu;

  // Coupling pairs the bulk velocity trace with boundary test functions:
  // B(dof(i,k), (j,c)) = (scalar facet mass)_{ij} * frame_k(i)[c].
  {
    ColMajorBuilder bb;
    // Unweighted scalar facet mass: reuse the weighted assembler with f = 1.
    const VectorXd ones = VectorXd::Ones(space.n_nodes());
    const SparseMat ms =
        assemble_boundary_operators(space, ones, VectorXd::Zero(space.n_nodes()),
                                    VectorXd::Zero(space.n_nodes()), lambda, alpha,
                                    CoefficientFloors{1.0, 1.0, 1.0, false})
            .M_f;
    for (int k = 0; k < ms.outerSize(); ++k)
      for (SparseMat::InnerIterator it(ms, k); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int j = static_cast<int>(it.col());
        const int vj = space.nodes[j];
        for (int comp = 0; comp < d; ++comp) {
          VectorXd frame = (comp == space.normal_comp())
                               ? space.node_normal(i)
                               : space.node_tangent(i, comp);
          for (int c = 0; c < d; ++c)
            bb.add(space.dof(i, comp), sys.free_index[static_cast<size_t>(vj) * d + c],
                   it.value() * frame[c]);
        }
      }
    sys.B = bb.build(space.n_dofs(), sys.n_free);
  }
  return sys;
}

Eigen::VectorXd restrict_free(const SystemMatrices& sys, const Eigen::VectorXd& full) {
  if (full.size() != static_cast<int>(sys.free_index.size()))
    throw ParameterError("restrict: wrong full-vector size");
  VectorXd x(sys.n_free);
  for (int k = 0; k < sys.n_free; ++k) x[k] = full[sys.free_to_full[k]];
  return x;
}

Eigen::VectorXd prolong_full(const SystemMatrices& sys, const Eigen::VectorXd& free) {
  if (free.size() != sys.n_free) throw ParameterError("prolong: wrong free-vector size");
  VectorXd x = VectorXd::Zero(static_cast<int>(sys.free_index.size()));
  for (int k = 0; k < sys.n_free; ++k) x[sys.free_to_full[k]] = free[k];
  return x;
}

SparseMat hilbert_gram(const SystemMatrices& sys) {
  const int nf = sys.n_free, nb = sys.n_bdofs();
  std::vector<Triplet> t;
  auto put = [&t](const SparseMat& m, int r0, int c0) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMat::InnerIterator it(m, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()) + r0, static_cast<int>(it.col()) + c0,
                       it.value());
  };
  put(sys.K_O, 0, 0);
  put(sys.M_O, nf, nf);
  put(sys.Z, 2 * nf, 2 * nf);
  put(sys.S_f, 2 * nf + nb, 2 * nf + nb);
  SparseMat g(sys.state_size(), sys.state_size());
  g.setFromTriplets(t.begin(), t.end());
  g.makeCompressed();
  return g;
}

void write_index_map(const SystemMatrices& sys, const BoundarySpace& space,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open index map for writing: " + path);
  out << "{\n  \"dim\": " << sys.dim << ",\n  \"n_free\": " << sys.n_free
      << ",\n  \"n_boundary_dofs\": " << sys.n_bdofs() << ",\n  \"free_to_vertex_comp\": [";
  for (size_t k = 0; k < sys.free_to_full.size(); ++k) {
    if (k) out << ", ";
    out << "[" << sys.free_to_full[k] / sys.dim << ", " << sys.free_to_full[k] % sys.dim
        << "]";
  }
  out << "],\n  \"boundary_nodes\": [";
  for (size_t k = 0; k < space.nodes.size(); ++k) {
    if (k) out << ", ";
    out << space.nodes[k];
  }
  out << "],\n  \"boundary_dof_layout\": \"node-major, tangential components then normal\"\n}\n";
}

}  // namespace elastowave
