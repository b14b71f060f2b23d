#include "elastowave/region_fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace elastowave {

using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

Vector2d closest_on_segment(const Vector2d& a, const Vector2d& b, const Vector2d& p) {
  const Vector2d ab = b - a;
  const double t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), 0.0, 1.0);
  return a + t * ab;
}

// Ericson-style closest point on a triangle.
Vector3d closest_on_triangle(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                             const Vector3d& p) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double distance_to_facets(const Mesh& mesh, const std::vector<int>& facets,
                          const Eigen::VectorXd& x, Eigen::VectorXd* closest_point,
                          int* facet) {
  double best = std::numeric_limits<double>::infinity();
  VectorXd bp;
  int bf = -1;
  for (int f : facets) {
    const auto& nodes = mesh.boundary_facets[f].nodes;
    VectorXd q;
    if (mesh.dim == 2) {
      const Vector2d c = closest_on_segment(mesh.vertices.row(nodes[0]),
                                            mesh.vertices.row(nodes[1]), Vector2d(x));
      q = c;
    } else {
      const Vector3d c =
          closest_on_triangle(mesh.vertices.row(nodes[0]), mesh.vertices.row(nodes[1]),
                              mesh.vertices.row(nodes[2]), Vector3d(x));
      q = c;
    }
    const double d = (q - x).norm();
    if (d < best) {
      best = d;
      bp = q;
      bf = f;
    }
  }
  if (closest_point) *closest_point = bp;
  if (facet) *facet = bf;
  return best;
}

RegionFields build_region_fields(const Mesh& mesh, const BoundaryFrames& frames,
                                 double eps, double a0, DampingProfile profile) {
  if (!mesh.classified || mesh.x0.size() != mesh.dim)
    throw ParameterError("region fields need a mesh classified with an observation point");
  if (!(eps > 0)) throw ParameterError("collar width eps must be positive");
  if (a0 < 0) throw ParameterError("a0 must be non-negative");

  std::vector<int> g0_facets, all_facets;
  for (int f = 0; f < mesh.n_boundary_facets(); ++f) {
    all_facets.push_back(f);
    if (mesh.boundary_facets[f].label == BoundaryLabel::Gamma0) g0_facets.push_back(f);
  }

  RegionFields r;
  r.eps = eps;
  r.a0 = a0;
  r.profile = profile;
  r.x0 = mesh.x0;
  r.delta = mesh.delta;

  const int nv = mesh.n_vertices();
  r.dist_gamma0.resize(nv);
  for (int v = 0; v < nv; ++v)
    r.dist_gamma0[v] = distance_to_facets(mesh, g0_facets, mesh.vertex(v));

  // The collar (and the ramp's wider support) must stay clear of the
  // acoustic boundary part.
  r.gamma_gap = std::numeric_limits<double>::infinity();
  const auto g1_mask = mesh.label_vertex_mask(BoundaryLabel::Gamma1);
  for (int v = 0; v < nv; ++v)
    if (g1_mask[v]) r.gamma_gap = std::min(r.gamma_gap, r.dist_gamma0[v]);
  const double support = (profile == DampingProfile::Ramp) ? 1.5 * eps : eps;
  if (support >= r.gamma_gap)
    throw GeometryError("damping collar of width eps = " + std::to_string(eps) +
                        " reaches the acoustic boundary (gap " +
                        std::to_string(r.gamma_gap) + ")");

  const int nc = mesh.n_cells();
  r.omega.assign(nc, 0);
  r.omega_eps.assign(nc, 0);
  r.omega_eps2.assign(nc, 0);
  r.a_cell.resize(nc);
  for (int c = 0; c < nc; ++c) {
    double dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= mesh.dim; ++i)
      dmin = std::min(dmin, r.dist_gamma0[mesh.cells[c][i]]);
    r.omega[c] = dmin <= eps;
    r.omega_eps[c] = dmin <= 0.75 * eps;
    r.omega_eps2[c] = dmin <= 0.5 * eps;
    if (profile == DampingProfile::Constant) {
      r.a_cell[c] = r.omega[c] ? a0 : 0.0;
    } else {
      const double s = std::clamp((1.5 * eps - dmin) / (0.5 * eps), 0.0, 1.0);
      r.a_cell[c] = a0 * s * s * (3.0 - 2.0 * s);
    }
  }

  r.xi.resize(nv);
  for (int v = 0; v < nv; ++v) {
    const double s =
        std::clamp((0.75 * eps - r.dist_gamma0[v]) / (0.25 * eps), 0.0, 1.0);
    r.xi[v] = s * s;
  }

  r.k_field = Eigen::MatrixXd::Zero(nv, mesh.dim);
  for (int v = 0; v < nv; ++v) {
    if (frames.has_frame(v)) {
      r.k_field.row(v) = frames.nu.row(frames.local(v));
      continue;
    }
    VectorXd p;
    const double d = distance_to_facets(mesh, all_facets, mesh.vertex(v), &p);
    if (d >= eps) continue;
    const double w = (1.0 - d / eps) * (1.0 - d / eps);
    r.k_field.row(v) = w * (p - mesh.vertex(v)).normalized().transpose();
  }

  r.R = 0.0;
  for (int v = 0; v < nv; ++v)
    r.R = std::max(r.R, (mesh.vertex(v) - r.x0).norm());
  return r;
}

}  // namespace elastowave
