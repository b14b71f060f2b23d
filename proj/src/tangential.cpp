#include "elastowave/tangential.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace elastowave {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

double lambda_star(double lambda, double mu) {
  if (!(mu > 0) || lambda < 0) throw ParameterError("need mu > 0 and lambda >= 0");
  return 2.0 * lambda * mu / (lambda + 2.0 * mu);
}

BoundarySpace::BoundarySpace(const Mesh& mesh, const BoundaryFrames& frames)
    : mesh_(&mesh), frames_(&frames) {
  if (!mesh.classified) throw ParameterError("boundary space needs a classified mesh");
  local_of_vertex.assign(mesh.n_vertices(), -1);
  for (const auto& bf : mesh.boundary_facets) {
    if (bf.label != BoundaryLabel::Gamma1) continue;
    for (int i = 0; i < mesh.dim; ++i) {
      const int v = bf.nodes[i];
      if (local_of_vertex[v] < 0) {
        local_of_vertex[v] = static_cast<int>(nodes.size());
        nodes.push_back(v);
      }
    }
  }
  if (nodes.empty()) throw GeometryError("acoustic boundary part is empty");

  for (int f = 0; f < mesh.n_boundary_facets(); ++f) {
    const auto& bf = mesh.boundary_facets[f];
    if (bf.label != BoundaryLabel::Gamma1) continue;
    Facet fc;
    fc.mesh_facet = f;
    fc.measure = mesh.facet_measure(f);
    for (int i = 0; i < mesh.dim; ++i) fc.lnodes[i] = local_of_vertex[bf.nodes[i]];

    if (mesh.dim == 2) {
      int a = fc.lnodes[0], b = fc.lnodes[1];
      const Vector2d ta = frames.t1.row(frames.local(nodes[a]));
      const Vector2d tb = frames.t1.row(frames.local(nodes[b]));
      Vector2d chord = Vector2d(mesh.vertex(nodes[b]) - mesh.vertex(nodes[a]));
      if (chord.dot(ta + tb) < 0) {
        std::swap(a, b);
        chord = -chord;
        fc.lnodes = {a, b, -1};
      }
      fc.tau = chord.normalized();
      fc.kappa = 0.5 * (frames.kappa(frames.local(nodes[a])) +
                        frames.kappa(frames.local(nodes[b])));
    } else {
      const Vector3d p0 = mesh.vertex(nodes[fc.lnodes[0]]);
      const Vector3d p1 = mesh.vertex(nodes[fc.lnodes[1]]);
      const Vector3d p2 = mesh.vertex(nodes[fc.lnodes[2]]);
      const Vector3d u1 = (p1 - p0).normalized();
      Vector3d w = (p2 - p0) - (p2 - p0).dot(u1) * u1;
      if (w.norm() < 1e-14) throw MeshError("degenerate acoustic boundary facet");
      const Vector3d u2 = w.normalized();
      fc.tan_basis.resize(3, 2);
      fc.tan_basis.col(0) = u1;
      fc.tan_basis.col(1) = u2;

      const Vector2d q1((p1 - p0).dot(u1), 0.0);
      const Vector2d q2((p2 - p0).dot(u1), (p2 - p0).dot(u2));
      Matrix2d G;
      G.col(0) = q1;
      G.col(1) = q2;
      const Matrix2d Ginv_t = G.inverse().transpose();
      const Vector2d g1 = Ginv_t.col(0), g2 = Ginv_t.col(1);
      fc.grads.resize(3, 3);
      fc.grads.col(1) = fc.tan_basis * g1;
      fc.grads.col(2) = fc.tan_basis * g2;
      fc.grads.col(0) = -fc.grads.col(1) - fc.grads.col(2);

      fc.shape_avg = MatrixXd::Zero(2, 2);
      for (int i = 0; i < 3; ++i) {
        const int g = frames.local(nodes[fc.lnodes[i]]);
        MatrixXd bt(3, 2);
        bt.col(0) = frames.t1.row(g).transpose();
        bt.col(1) = frames.t2.row(g).transpose();
        const MatrixXd amb = bt * frames.shape[g] * bt.transpose();
        fc.shape_avg += fc.tan_basis.transpose() * amb * fc.tan_basis;
      }
      fc.shape_avg /= 3.0;
      fc.shape_avg = 0.5 * (fc.shape_avg + fc.shape_avg.transpose()).eval();
    }
    facets.push_back(std::move(fc));
  }
}

Eigen::VectorXd BoundarySpace::node_tangent(int lnode, int k) const {
  const int g = frames_->local(nodes[lnode]);
  return (k == 0 ? frames_->t1.row(g) : frames_->t2.row(g)).transpose();
}

Eigen::VectorXd BoundarySpace::node_normal(int lnode) const {
  return frames_->nu.row(frames_->local(nodes[lnode])).transpose();
}

Eigen::VectorXd BoundarySpace::node_position(int lnode) const {
  return mesh_->vertex(nodes[lnode]);
}

double BoundarySpace::node_kappa(int lnode) const {
  return frames_->kappa(frames_->local(nodes[lnode]));
}

double BoundarySpace::total_measure() const {
  double s = 0.0;
  for (const auto& f : facets) s += f.measure;
  return s;
}

BoundaryField decompose_trace(const BoundarySpace& space, const Eigen::MatrixXd& ambient) {
  if (ambient.rows() != space.n_nodes() || ambient.cols() != space.dim())
    throw ParameterError("trace decomposition: wrong field shape");
  BoundaryField f;
  f.z_T.resize(space.n_nodes(), space.dim() - 1);
  f.z_nu.resize(space.n_nodes());
  for (int i = 0; i < space.n_nodes(); ++i) {
    for (int k = 0; k < space.dim() - 1; ++k)
      f.z_T(i, k) = ambient.row(i).dot(space.node_tangent(i, k));
    f.z_nu[i] = ambient.row(i).dot(space.node_normal(i));
  }
  return f;
}

Eigen::MatrixXd reconstruct_trace(const BoundarySpace& space, const BoundaryField& field) {
  MatrixXd amb = MatrixXd::Zero(space.n_nodes(), space.dim());
  for (int i = 0; i < space.n_nodes(); ++i) {
    for (int k = 0; k < space.dim() - 1; ++k)
      amb.row(i) += field.z_T(i, k) * space.node_tangent(i, k).transpose();
    amb.row(i) += field.z_nu[i] * space.node_normal(i).transpose();
  }
  return amb;
}

Eigen::VectorXd pack_field(const BoundarySpace& space, const BoundaryField& field) {
  VectorXd x(space.n_dofs());
  for (int i = 0; i < space.n_nodes(); ++i) {
    for (int k = 0; k < space.dim() - 1; ++k) x[space.dof(i, k)] = field.z_T(i, k);
    x[space.dof(i, space.normal_comp())] = field.z_nu[i];
  }
  return x;
}

BoundaryField unpack_field(const BoundarySpace& space, const Eigen::VectorXd& dofs) {
  if (dofs.size() != space.n_dofs()) throw ParameterError("unpack: wrong dof count");
  BoundaryField f;
  f.z_T.resize(space.n_nodes(), space.dim() - 1);
  f.z_nu.resize(space.n_nodes());
  for (int i = 0; i < space.n_nodes(); ++i) {
    for (int k = 0; k < space.dim() - 1; ++k) f.z_T(i, k) = dofs[space.dof(i, k)];
    f.z_nu[i] = dofs[space.dof(i, space.normal_comp())];
  }
  return f;
}

namespace {

// Per-facet linear maps from local dofs to the membrane strain; the returned
// matrices are (dim-1)x(dim-1) in the facet basis (scalars in 2d).
std::vector<MatrixXd> facet_strain_maps(const BoundarySpace& space,
                                        const BoundarySpace::Facet& fc) {
  const int d = space.dim();
  std::vector<MatrixXd> maps(static_cast<size_t>(d) * d);
  if (d == 2) {
    const double l = fc.measure;
    // dofs: (a, tangential), (a, normal), (b, tangential), (b, normal)
    maps[0] = MatrixXd::Constant(1, 1, -1.0 / l);
    maps[1] = MatrixXd::Constant(1, 1, fc.kappa / 2.0);
    maps[2] = MatrixXd::Constant(1, 1, 1.0 / l);
    maps[3] = MatrixXd::Constant(1, 1, fc.kappa / 2.0);
    return maps;
  }
  for (int a = 0; a < 3; ++a) {
    const Vector3d g = fc.grads.col(a);
    for (int k = 0; k < 2; ++k) {
      const Vector3d t = space.node_tangent(fc.lnodes[a], k);
      const Vector2d tp = fc.tan_basis.transpose() * t;
      const Vector2d gp = fc.tan_basis.transpose() * g;
      const Matrix2d m = tp * gp.transpose();
      maps[a * 3 + k] = 0.5 * (m + m.transpose());
    }
    maps[a * 3 + 2] = fc.shape_avg / 3.0;
  }
  return maps;
}

double contract(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.array()).sum(); }

}  // namespace

TangentialStrainStress tangential_strain_stress(const BoundarySpace& space,
                                                const BoundaryField& field, double lambda,
                                                double mu) {
  const double ls = lambda_star(lambda, mu);
  const int d = space.dim();
  TangentialStrainStress out;
  out.strain.reserve(space.n_facets());
  out.stress.reserve(space.n_facets());
  const VectorXd dofs = pack_field(space, field);
  for (const auto& fc : space.facets) {
    const auto maps = facet_strain_maps(space, fc);
    MatrixXd E = MatrixXd::Zero(d - 1, d - 1);
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < d; ++k)
        E += dofs[space.dof(fc.lnodes[a], k)] * maps[a * d + k];
    const MatrixXd S = 2.0 * mu * E + ls * E.trace() * MatrixXd::Identity(d - 1, d - 1);
    out.energy += fc.measure * contract(S, E);
    out.strain.push_back(E);
    out.stress.push_back(S);
  }
  return out;
}

namespace {

void check_floors(const char* name, const VectorXd& c, double floor, bool enforce) {
  if (enforce && !(floor > 0))
    throw ParameterError(std::string(name) + ": coefficient floor must be positive");
  for (int i = 0; i < c.size(); ++i) {
    if (c[i] < 0) throw ParameterError(std::string(name) + ": negative coefficient");
    if (enforce && c[i] < floor)
      throw AssumptionError(std::string(name) + ": coefficient " + std::to_string(c[i]) +
                            " below its floor " + std::to_string(floor));
  }
}

}  // namespace

Eigen::MatrixXd facet_weighted_mass(const BoundarySpace& space,
                                    const BoundarySpace::Facet& fc, const VectorXd& c) {
  const int d = space.dim();
  if (d == 2) {
    const double l = fc.measure;
    const double ca = c[fc.lnodes[0]], cb = c[fc.lnodes[1]];
    Matrix2d m;
    m << l * (3 * ca + cb) / 12.0, l * (ca + cb) / 12.0, l * (ca + cb) / 12.0,
        l * (ca + 3 * cb) / 12.0;
    return m;
  }
  const double A = fc.measure;
  MatrixXd m(3, 3);
  // \int phi_a^2 phi_k: A/10 if k == a else A/30; \int phi_a phi_b phi_k:
  // A/30 if k in {a, b} else A/60.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double w = (a == b) ? (k == a ? A / 10.0 : A / 30.0)
                                  : ((k == a || k == b) ? A / 30.0 : A / 60.0);
        s += w * c[fc.lnodes[k]];
      }
      m(a, b) = s;
    }
  }
  return m;
}

BoundaryOperators assemble_boundary_operators(const BoundarySpace& space,
                                              const Eigen::VectorXd& f,
                                              const Eigen::VectorXd& g,
                                              const Eigen::VectorXd& h, double lambda,
                                              double mu, const CoefficientFloors& floors) {
  const int n = space.n_nodes();
  if (f.size() != n || g.size() != n || h.size() != n)
    throw ParameterError("boundary coefficient fields must be nodal on the acoustic part");
  for (int i = 0; i < n; ++i)
    if (!(f[i] > 0)) throw ParameterError("boundary inertia coefficient must be positive");
  check_floors("f", f, floors.f0, floors.enforce);
  check_floors("g", g, floors.g0, floors.enforce);
  check_floors("h", h, floors.h0, floors.enforce);
  const double ls = lambda_star(lambda, mu);
  const int d = space.dim();

  std::vector<Triplet> tf, tg, th, tlb, tel;
  for (const auto& fc : space.facets) {
    const MatrixXd mf = facet_weighted_mass(space, fc, f);
    const MatrixXd mg = facet_weighted_mass(space, fc, g);
    const MatrixXd mh = facet_weighted_mass(space, fc, h);
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        tf.emplace_back(fc.lnodes[a], fc.lnodes[b], mf(a, b));
        tg.emplace_back(fc.lnodes[a], fc.lnodes[b], mg(a, b));
        th.emplace_back(fc.lnodes[a], fc.lnodes[b], mh(a, b));
      }
    }
    // Laplace-Beltrami stiffness on the normal component.
    if (d == 2) {
      const double w = 1.0 / fc.measure;
      const int a = fc.lnodes[0], b = fc.lnodes[1];
      tlb.emplace_back(a, a, w);
      tlb.emplace_back(b, b, w);
      tlb.emplace_back(a, b, -w);
      tlb.emplace_back(b, a, -w);
    } else {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          tlb.emplace_back(fc.lnodes[a], fc.lnodes[b],
                           fc.measure * fc.grads.col(a).dot(fc.grads.col(b)));
    }
    const auto maps = facet_strain_maps(space, fc);
    for (int a = 0; a < d; ++a)
      for (int i = 0; i < d; ++i)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            const MatrixXd& Ea = maps[a * d + i];
            const MatrixXd& Eb = maps[b * d + j];
            const double v =
                fc.measure * (2.0 * mu * contract(Ea, Eb) + ls * Ea.trace() * Eb.trace());
            tel.emplace_back(space.dof(fc.lnodes[a], i), space.dof(fc.lnodes[b], j), v);
          }
  }

  BoundaryOperators ops;
  auto build = [](int rows, int cols, const std::vector<Triplet>& t) {
    SparseMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
  };
  ops.M_f = build(n, n, tf);
  ops.D_g = build(n, n, tg);
  ops.H_h = build(n, n, th);
  ops.K_LB = build(n, n, tlb);
  ops.K_elastic = build(space.n_dofs(), space.n_dofs(), tel);
  return ops;
}

SparseMat expand_componentwise(const BoundarySpace& space, const SparseMat& scalar_mat) {
  const int d = space.dim();
  std::vector<Triplet> t;
  for (int k = 0; k < scalar_mat.outerSize(); ++k)
    for (SparseMat::InnerIterator it(scalar_mat, k); it; ++it)
      for (int c = 0; c < d; ++c)
        t.emplace_back(space.dof(static_cast<int>(it.row()), c),
                       space.dof(static_cast<int>(it.col()), c), it.value());
  SparseMat m(space.n_dofs(), space.n_dofs());
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

SparseMat embed_normal(const BoundarySpace& space, const SparseMat& scalar_mat) {
  const int nc = space.normal_comp();
  std::vector<Triplet> t;
  for (int k = 0; k < scalar_mat.outerSize(); ++k)
    for (SparseMat::InnerIterator it(scalar_mat, k); it; ++it)
      t.emplace_back(space.dof(static_cast<int>(it.row()), nc),
                     space.dof(static_cast<int>(it.col()), nc), it.value());
  SparseMat m(space.n_dofs(), space.n_dofs());
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

double stokes_residual(const BoundarySpace& space, const BoundaryField& v_T,
                       const BoundaryField& u_T) {
  const int d = space.dim();
  // Ambient tangential parts.
  MatrixXd V = MatrixXd::Zero(space.n_nodes(), d), U = MatrixXd::Zero(space.n_nodes(), d);
  for (int i = 0; i < space.n_nodes(); ++i)
    for (int k = 0; k < d - 1; ++k) {
      V.row(i) += v_T.z_T(i, k) * space.node_tangent(i, k).transpose();
      U.row(i) += u_T.z_T(i, k) * space.node_tangent(i, k).transpose();
    }

  VectorXd total = VectorXd::Zero(d);
  for (const auto& fc : space.facets) {
    MatrixXd gradV = MatrixXd::Zero(d, d), gradU = MatrixXd::Zero(d, d);
    VectorXd vbar = VectorXd::Zero(d), ubar = VectorXd::Zero(d), normal(d);
    if (d == 2) {
      const int a = fc.lnodes[0], b = fc.lnodes[1];
      gradV = (V.row(b) - V.row(a)).transpose() * fc.tau.transpose() / fc.measure;
      gradU = (U.row(b) - U.row(a)).transpose() * fc.tau.transpose() / fc.measure;
      vbar = 0.5 * (V.row(a) + V.row(b)).transpose();
      ubar = 0.5 * (U.row(a) + U.row(b)).transpose();
      normal << fc.tau[1], -fc.tau[0];
    } else {
      for (int a = 0; a < 3; ++a) {
        gradV += V.row(fc.lnodes[a]).transpose() * fc.grads.col(a).transpose();
        gradU += U.row(fc.lnodes[a]).transpose() * fc.grads.col(a).transpose();
        vbar += V.row(fc.lnodes[a]).transpose() / 3.0;
        ubar += U.row(fc.lnodes[a]).transpose() / 3.0;
      }
      normal = Vector3d(fc.tan_basis.col(0)).cross(Vector3d(fc.tan_basis.col(1)));
    }
    const MatrixXd pi = MatrixXd::Identity(d, d) - normal * normal.transpose();
    const double div_v = (pi * gradV).trace();
    total += fc.measure * (div_v * ubar + gradU * (pi * vbar));
  }
  return total.norm();
}

void write_matrix_coo(const SparseMat& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open matrix file for writing: " + path);
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  char buf[64];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%.17g", it.value());
      out << it.row() << ' ' << it.col() << ' ' << buf << '\n';
    }
}

}  // namespace elastowave
