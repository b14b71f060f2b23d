#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <numbers>

#include "doctest.h"
#include "elastowave/assembly.hpp"
#include "elastowave/boundary_frame.hpp"
#include "elastowave/mesh.hpp"
#include "elastowave/region_fields.hpp"

using namespace elastowave;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

Mesh annulus(double h, double delta = 0.5) {
  Mesh m = build_mesh(MeshKind::Annulus, 1.0, 2.0, h);
  classify_boundary(m, Eigen::Vector2d::Zero(), delta);
  return m;
}

double total_area(const Mesh& m) {
  double a = 0;
  for (int c = 0; c < m.n_cells(); ++c) a += m.cell_measure(c);
  return a;
}

double boundary_length(const Mesh& m, BoundaryLabel want) {
  double l = 0;
  for (int f = 0; f < m.n_boundary_facets(); ++f)
    if (m.boundary_facets[f].label == want) l += m.facet_measure(f);
  return l;
}

double curvature_error(const Mesh& m, BoundaryLabel part, double expected) {
  const BoundaryFrames fr = compute_boundary_frames(m);
  const auto mask = m.label_vertex_mask(part);
  double worst = 0;
  for (int v = 0; v < m.n_vertices(); ++v)
    if (mask[v]) worst = std::max(worst, std::abs(fr.kappa(fr.local(v)) - expected));
  return worst;
}

}  // namespace

TEST_CASE("annulus mesh measures") {
  const Mesh coarse = annulus(0.4);
  CHECK(boundary_length(coarse, BoundaryLabel::Gamma0) +
            boundary_length(coarse, BoundaryLabel::Gamma1) ==
        doctest::Approx(2 * kPi * 3).epsilon(0.05));

  const Mesh m = annulus(0.25);
  CHECK(total_area(m) == doctest::Approx(3 * kPi).epsilon(0.02));
  CHECK(m.max_diameter() <= 0.25 + 1e-12);
  for (int c = 0; c < m.n_cells(); ++c) CHECK(m.cell_measure(c) > 0);
}

TEST_CASE("invalid mesh parameters") {
  CHECK_THROWS_AS(build_mesh(MeshKind::Annulus, 2.0, 1.0, 0.1), ParameterError);
  CHECK_THROWS_AS(build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.6), ParameterError);
  CHECK_THROWS_AS(build_mesh(MeshKind::Annulus, -1.0, 2.0, 0.1), ParameterError);
}

TEST_CASE("boundary classification by radial margin") {
  const Mesh m = annulus(0.25, 1.0);
  int n0 = 0, n1 = 0;
  for (int f = 0; f < m.n_boundary_facets(); ++f) {
    const double s = (m.facet_centroid(f) - m.x0).dot(m.facet_unit_normal(f));
    if (m.boundary_facets[f].label == BoundaryLabel::Gamma0) {
      ++n0;
      CHECK(s >= 1.0);
      CHECK(m.facet_centroid(f).norm() > 1.5);
    } else {
      ++n1;
      CHECK(s <= 0.0);
      CHECK(m.facet_centroid(f).norm() < 1.5);
    }
  }
  CHECK(n0 > 0);
  CHECK(n1 > 0);

  Mesh gap = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.25);
  CHECK_THROWS_AS(classify_boundary(gap, Eigen::Vector2d::Zero(), 3.0), GeometryError);
}

TEST_CASE("empty acoustic part is a geometric violation") {
  // Square with all outward margins >= delta: no facet can be labeled
  // acoustic, which the system requires.
  Mesh m;
  m.dim = 2;
  m.vertices.resize(4, 2);
  m.vertices << 0, 0, 1, 0, 1, 1, 0, 1;
  m.cells = {{0, 1, 2, -1}, {0, 2, 3, -1}};
  m.boundary_facets.resize(4);
  m.boundary_facets[0].nodes = {0, 1, -1};
  m.boundary_facets[1].nodes = {1, 2, -1};
  m.boundary_facets[2].nodes = {2, 3, -1};
  m.boundary_facets[3].nodes = {3, 0, -1};
  m.finalize();
  Eigen::Vector2d center(0.5, 0.5);
  CHECK_THROWS_AS(classify_boundary(m, center, 0.1), GeometryError);
}

TEST_CASE("facet normals point outward") {
  const Mesh m = annulus(0.3);
  for (int f = 0; f < m.n_boundary_facets(); ++f) {
    const VectorXd nu = m.facet_unit_normal(f);
    CHECK(nu.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const VectorXd d = m.facet_centroid(f) - m.cell_centroid(m.boundary_facets[f].cell);
    CHECK(nu.dot(d) > 0);
  }
}

TEST_CASE("mesh text round trip is bit exact") {
  const Mesh m = annulus(0.3);
  const std::string path = "geom_roundtrip.txt";
  write_mesh(m, path);
  const Mesh r = read_mesh(path);
  std::remove(path.c_str());
  REQUIRE(r.n_vertices() == m.n_vertices());
  REQUIRE(r.n_cells() == m.n_cells());
  REQUIRE(r.n_boundary_facets() == m.n_boundary_facets());
  for (int v = 0; v < m.n_vertices(); ++v)
    for (int c = 0; c < 2; ++c) CHECK(r.vertices(v, c) == m.vertices(v, c));
  for (int c = 0; c < m.n_cells(); ++c) CHECK(r.cells[c] == m.cells[c]);
  for (int f = 0; f < m.n_boundary_facets(); ++f) {
    CHECK(r.boundary_facets[f].nodes == m.boundary_facets[f].nodes);
    CHECK(r.boundary_facets[f].label == m.boundary_facets[f].label);
  }
}

TEST_CASE("node frames on circles") {
  const Mesh m = annulus(0.2);
  const BoundaryFrames fr = compute_boundary_frames(m);
  for (int l = 0; l < fr.n_nodes(); ++l) {
    const VectorXd nu = fr.nu.row(l).transpose();
    const VectorXd t = fr.t1.row(l).transpose();
    CHECK(nu.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(nu.dot(t)) < 1e-12);
    const VectorXd p = m.vertex(fr.nodes[l]);
    const double r = p.norm();
    const double sign = r > 1.5 ? 1.0 : -1.0;  // outward on the outer circle
    CHECK((nu - sign * p / r).norm() < 1e-10);
  }
}

TEST_CASE("circle curvature converges at first order") {
  const double ec_in = curvature_error(annulus(0.2), BoundaryLabel::Gamma1, -1.0);
  const double ef_in = curvature_error(annulus(0.1), BoundaryLabel::Gamma1, -1.0);
  const double ec_out = curvature_error(annulus(0.2), BoundaryLabel::Gamma0, 0.5);
  const double ef_out = curvature_error(annulus(0.1), BoundaryLabel::Gamma0, 0.5);
  CHECK(std::log2(ec_in / ef_in) >= 1.0);
  CHECK(std::log2(ec_out / ef_out) >= 1.0);
  CHECK(ef_in < 0.05);
  CHECK(ef_out < 0.02);
}

TEST_CASE("collar masks and damping fields") {
  const Mesh m = annulus(0.2);
  const BoundaryFrames fr = compute_boundary_frames(m);
  const RegionFields r = build_region_fields(m, fr, 0.3, 2.0);

  const auto g1 = m.label_vertex_mask(BoundaryLabel::Gamma1);
  for (int c = 0; c < m.n_cells(); ++c) {
    CHECK((!r.omega_eps2[c] || r.omega_eps[c]));
    CHECK((!r.omega_eps[c] || r.omega[c]));
    if (r.omega[c]) {
      CHECK(r.a_cell[c] == 2.0);
      for (int i = 0; i < 3; ++i) CHECK(!g1[m.cells[c][i]]);
    } else {
      CHECK(r.a_cell[c] == 0.0);
    }
  }
  // Cells touching the clamped part carry the full mask stack.
  for (int f = 0; f < m.n_boundary_facets(); ++f)
    if (m.boundary_facets[f].label == BoundaryLabel::Gamma0)
      CHECK(static_cast<bool>(r.omega_eps2[m.boundary_facets[f].cell]));

  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(r.xi[v] >= 0.0);
    CHECK(r.xi[v] <= 1.0);
    if (r.dist_gamma0[v] <= 0.15 * (1 - 1e-10)) CHECK(r.xi[v] == 1.0);
    if (r.dist_gamma0[v] >= 0.225 * (1 + 1e-10)) CHECK(r.xi[v] == 0.0);
    if (m.vertex(v).norm() < 2.0 - 0.3) {
      // Node deeper than eps from every boundary facet: multiplier off.
      if (m.vertex(v).norm() > 1.0 + 0.3) CHECK(r.k_field.row(v).norm() == 0.0);
    }
  }
  for (int l = 0; l < fr.n_nodes(); ++l)
    CHECK((r.k_field.row(fr.nodes[l]) - fr.nu.row(l)).norm() < 1e-12);

  CHECK(r.R == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(r.gamma_gap > 0.9);
}

TEST_CASE("cutoff gradient ratio is collar bounded") {
  const Mesh m = annulus(0.15);
  const BoundaryFrames fr = compute_boundary_frames(m);
  const double eps = 0.4;
  const RegionFields r = build_region_fields(m, fr, eps, 1.0);
  for (int c = 0; c < m.n_cells(); ++c) {
    double ximax = 0, ximin = 2;
    for (int i = 0; i < 3; ++i) {
      ximax = std::max(ximax, r.xi[m.cells[c][i]]);
      ximin = std::min(ximin, r.xi[m.cells[c][i]]);
    }
    if (ximin <= 0) continue;
    const Eigen::MatrixXd grad = cell_gradients(m, c);
    Eigen::VectorXd loc(3);
    for (int i = 0; i < 3; ++i) loc[i] = r.xi[m.cells[c][i]];
    const double ratio = (grad * loc).squaredNorm() / ximax;
    CHECK(ratio <= 256.0 / (eps * eps));
  }
}

TEST_CASE("ramp profile keeps its floor and support") {
  const Mesh m = annulus(0.2);
  const BoundaryFrames fr = compute_boundary_frames(m);
  const RegionFields r = build_region_fields(m, fr, 0.3, 1.5, DampingProfile::Ramp);
  for (int c = 0; c < m.n_cells(); ++c) {
    CHECK(r.a_cell[c] >= 0.0);
    if (r.omega[c]) CHECK(r.a_cell[c] >= 1.5 * (1 - 1e-12));
  }
  // Wider ramp support must still clear the acoustic part.
  CHECK_THROWS_AS(build_region_fields(m, fr, 0.7, 1.0, DampingProfile::Ramp),
                  GeometryError);
}

TEST_CASE("spherical shell smoke") {
  Mesh m = build_mesh(MeshKind::SphericalShell, 1.0, 2.0, 0.45);
  classify_boundary(m, Eigen::Vector3d::Zero(), 0.5);
  m.validate();
  double vol = 0;
  for (int c = 0; c < m.n_cells(); ++c) vol += m.cell_measure(c);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * kPi * 7.0).epsilon(0.10));
  const double area = boundary_length(m, BoundaryLabel::Gamma0) +
                      boundary_length(m, BoundaryLabel::Gamma1);
  CHECK(area == doctest::Approx(4 * kPi * 5.0).epsilon(0.10));

  const BoundaryFrames fr = compute_boundary_frames(m);
  for (int l = 0; l < fr.n_nodes(); ++l) {
    const VectorXd p = m.vertex(fr.nodes[l]);
    const double sign = p.norm() > 1.5 ? 1.0 : -1.0;
    CHECK((fr.nu.row(l).transpose() - sign * p / p.norm()).norm() < 0.05);
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fr.shape[l]).eigenvalues();
    const double want = sign / p.norm();
    CHECK(std::abs(ev[0] - want) < 0.35 * std::abs(want));
    CHECK(std::abs(ev[1] - want) < 0.35 * std::abs(want));
  }
}
