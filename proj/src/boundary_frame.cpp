#include "elastowave/boundary_frame.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace elastowave {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

Eigen::MatrixXd BoundaryFrames::basis(int local_node) const {
  MatrixXd b(dim, dim);
  b.col(0) = t1.row(local_node).transpose();
  if (dim == 3) b.col(1) = t2.row(local_node).transpose();
  b.col(dim - 1) = nu.row(local_node).transpose();
  return b;
}

BoundaryFrames compute_boundary_frames(const Mesh& mesh) {
  BoundaryFrames fr;
  fr.dim = mesh.dim;
  fr.frame_of_vertex.assign(mesh.n_vertices(), -1);

  const auto mask = mesh.boundary_vertex_mask();
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (mask[v]) {
      fr.frame_of_vertex[v] = static_cast<int>(fr.nodes.size());
      fr.nodes.push_back(v);
    }
  }
  const int n = fr.n_nodes();
  fr.nu = MatrixXd::Zero(n, mesh.dim);
  fr.t1 = MatrixXd::Zero(n, mesh.dim);
  if (mesh.dim == 3) fr.t2 = MatrixXd::Zero(n, mesh.dim);

  // Measure-weighted average of adjacent facet normals.
  for (int f = 0; f < mesh.n_boundary_facets(); ++f) {
    const VectorXd nrm = mesh.facet_unit_normal(f) * mesh.facet_measure(f);
    for (int i = 0; i < mesh.dim; ++i)
      fr.nu.row(fr.local(mesh.boundary_facets[f].nodes[i])) += nrm.transpose();
  }
  for (int i = 0; i < n; ++i) {
    const double len = fr.nu.row(i).norm();
    if (len < 1e-14)
      throw MeshError("averaged boundary normal vanishes at vertex " +
                      std::to_string(fr.nodes[i]));
    fr.nu.row(i) /= len;
  }

  if (mesh.dim == 2) {
    for (int i = 0; i < n; ++i)
      fr.t1.row(i) << -fr.nu(i, 1), fr.nu(i, 0);

    // kappa from a centered difference of nu along the boundary loop.
    std::map<int, std::set<int>> nbrs;
    for (const auto& bf : mesh.boundary_facets) {
      nbrs[bf.nodes[0]].insert(bf.nodes[1]);
      nbrs[bf.nodes[1]].insert(bf.nodes[0]);
    }
    fr.shape.assign(n, MatrixXd::Zero(1, 1));
    for (int i = 0; i < n; ++i) {
      const int v = fr.nodes[i];
      const auto& nb = nbrs[v];
      if (nb.size() != 2)
        throw MeshError("boundary vertex " + std::to_string(v) +
                        " does not lie on a closed curve");
      int p = *nb.begin(), q = *std::next(nb.begin());
      const Vector2d t = fr.t1.row(i);
      if ((mesh.vertex(q) - mesh.vertex(p)).dot(t) < 0) std::swap(p, q);
      const Vector2d dnu =
          fr.nu.row(fr.local(q)) - fr.nu.row(fr.local(p));
      const double ds = (mesh.vertex(q) - mesh.vertex(v)).norm() +
                        (mesh.vertex(v) - mesh.vertex(p)).norm();
      fr.shape[i](0, 0) = dnu.dot(t) / ds;
    }
    return fr;
  }

  // 3d: arbitrary-but-deterministic tangent pair, shape operator by a
  // least-squares fit of S * (projected edge) = (projected normal change)
  // over the boundary edges at the node.
  for (int i = 0; i < n; ++i) {
    const Vector3d nu_i = fr.nu.row(i);
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(nu_i[a]) < std::abs(nu_i[axis])) axis = a;
    Vector3d e = Vector3d::Zero();
    e[axis] = 1.0;
    const Vector3d t1 = (e - nu_i.dot(e) * nu_i).normalized();
    fr.t1.row(i) = t1.transpose();
    fr.t2.row(i) = nu_i.cross(t1).transpose();
  }

  std::map<int, std::set<int>> nbrs;
  for (const auto& bf : mesh.boundary_facets) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) nbrs[bf.nodes[a]].insert(bf.nodes[b]);
  }
  fr.shape.assign(n, MatrixXd::Zero(2, 2));
  for (int i = 0; i < n; ++i) {
    const int v = fr.nodes[i];
    const Vector3d t1 = fr.t1.row(i), t2 = fr.t2.row(i);
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Vector3d atb = Vector3d::Zero();
    for (int w : nbrs[v]) {
      const Vector3d dx = mesh.vertex(w) - mesh.vertex(v);
      const Vector3d dn = (fr.nu.row(fr.local(w)) - fr.nu.row(i)).transpose();
      const Vector2d x(dx.dot(t1), dx.dot(t2));
      const Vector2d y(dn.dot(t1), dn.dot(t2));
      // Unknowns (s11, s12, s22); two residual rows per neighbor.
      Eigen::Matrix<double, 2, 3> rows;
      rows << x[0], x[1], 0.0, 0.0, x[0], x[1];
      ata += rows.transpose() * rows;
      atb += rows.transpose() * y;
    }
    if (std::abs(ata.determinant()) < 1e-20)
      throw MeshError("shape-operator fit is singular at vertex " + std::to_string(v));
    const Vector3d s = ata.ldlt().solve(atb);
    fr.shape[i] << s[0], s[1], s[1], s[2];
  }
  return fr;
}

}  // namespace elastowave
