#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "elastowave/assembly.hpp"
#include "json.hpp"

using namespace elastowave;
using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

struct Fixture {
  Mesh mesh;
  BoundaryFrames frames;
  RegionFields region;
  std::unique_ptr<BoundarySpace> space;
  MaterialParams material;
  SystemMatrices sys;

  explicit Fixture(double h, double a0 = 2.0) {
    mesh = build_mesh(MeshKind::Annulus, 1.0, 2.0, h);
    classify_boundary(mesh, Vector2d::Zero(), 0.25);
    frames = compute_boundary_frames(mesh);
    region = build_region_fields(mesh, frames, 0.3, a0, DampingProfile::Constant);
    space = std::make_unique<BoundarySpace>(mesh, frames);
    const VectorXd ones = VectorXd::Ones(space->n_nodes());
    sys = assemble_system(mesh, *space, region, material, ones, ones, ones,
                          CoefficientFloors{1.0, 1.0, 1.0, true});
  }
};

// Straightforward dense evaluation of the bulk quadratic forms from nodal
// values, independent of the sparse assembly path.
double direct_elastic_energy(const Mesh& mesh, const MaterialParams& mat,
                             const VectorXd& full) {
  double total = 0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const MatrixXd grad = cell_gradients(mesh, c);
    Matrix2d ju = Matrix2d::Zero();
    for (int a = 0; a < 3; ++a) {
      const int v = mesh.cells[c][a];
      const Vector2d uv(full[2 * v], full[2 * v + 1]);
      ju += uv * grad.col(a).transpose();
    }
    const Matrix2d eps = 0.5 * (ju + ju.transpose());
    const Matrix2d sig =
        2 * mat.alpha * eps + mat.lambda * eps.trace() * Matrix2d::Identity();
    total += mesh.cell_measure(c) * (sig.array() * eps.array()).sum();
  }
  return total;
}

double direct_weighted_mass(const Mesh& mesh, const VectorXd& cell_weight,
                            const VectorXd& full) {
  double total = 0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double A = mesh.cell_measure(c) * cell_weight[c];
    for (int comp = 0; comp < 2; ++comp) {
      double diag = 0, all = 0;
      for (int a = 0; a < 3; ++a) {
        const double va = full[2 * mesh.cells[c][a] + comp];
        diag += va * va;
        all += va;
      }
      total += A / 12.0 * (diag + all * all);  // A/6 diagonal, A/12 off-diagonal
    }
  }
  return total;
}

VectorXd random_free(const SystemMatrices& sys, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  VectorXd x(sys.n_free);
  for (int i = 0; i < x.size(); ++i) x[i] = dist(rng);
  return x;
}

}  // namespace

TEST_CASE("free dof numbering excludes the clamped circle") {
  const Fixture fx(0.25);
  const Mesh& mesh = fx.mesh;
  const auto clamped = mesh.label_vertex_mask(BoundaryLabel::Gamma0);
  int n_clamped = 0;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (clamped[v]) {
      ++n_clamped;
      CHECK(fx.sys.free_index[2 * v] == -1);
      CHECK(fx.sys.free_index[2 * v + 1] == -1);
    }
  }
  CHECK(fx.sys.n_free == 2 * (mesh.n_vertices() - n_clamped));
  for (int k = 0; k < fx.sys.n_free; ++k)
    CHECK(fx.sys.free_index[fx.sys.free_to_full[k]] == k);
  CHECK(fx.sys.state_size() == 2 * fx.sys.n_free + 2 * fx.sys.n_bdofs());
}

TEST_CASE("cell gradients differentiate affine fields exactly") {
  const Fixture fx(0.25);
  const Vector2d coef(0.3, -1.2);
  for (int c = 0; c < fx.mesh.n_cells(); ++c) {
    const MatrixXd grad = cell_gradients(fx.mesh, c);
    CHECK(grad.rowwise().sum().norm() < 1e-12);
    Vector2d recovered = Vector2d::Zero();
    for (int a = 0; a < 3; ++a) {
      const Vector2d p = fx.mesh.vertex(fx.mesh.cells[c][a]);
      recovered += (coef.dot(p) + 0.7) * Vector2d(grad.col(a));
    }
    CHECK((recovered - coef).norm() < 1e-10);
  }
}

TEST_CASE("direct energy evaluator is calibrated on closed forms") {
  const Fixture fx(0.25);
  const Mesh& mesh = fx.mesh;
  double area = 0;
  for (int c = 0; c < mesh.n_cells(); ++c) area += mesh.cell_measure(c);

  VectorXd identity_map(2 * mesh.n_vertices());
  VectorXd rotation(2 * mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vector2d p = mesh.vertex(v);
    identity_map[2 * v] = p[0];
    identity_map[2 * v + 1] = p[1];
    rotation[2 * v] = -p[1] + 0.25;
    rotation[2 * v + 1] = p[0] - 1.5;
  }
  // u = x: strain is the identity, stress contraction 4*alpha + 4*lambda.
  const double want = (4 * fx.material.alpha + 4 * fx.material.lambda) * area;
  CHECK(direct_elastic_energy(mesh, fx.material, identity_map) ==
        doctest::Approx(want).epsilon(1e-12));
  CHECK(direct_elastic_energy(mesh, fx.material, rotation) <= 1e-12 * want);
}

TEST_CASE("bulk forms match direct quadrature on random fields") {
  const Fixture fx(0.25);
  const VectorXd x = random_free(fx.sys, 101);
  const VectorXd full = prolong_full(fx.sys, x);

  const double k_direct = direct_elastic_energy(fx.mesh, fx.material, full);
  CHECK(x.dot(fx.sys.K_O * x) == doctest::Approx(k_direct).epsilon(1e-10));

  const VectorXd unit = VectorXd::Ones(fx.mesh.n_cells());
  const double m_direct = direct_weighted_mass(fx.mesh, unit, full);
  CHECK(x.dot(fx.sys.M_O * x) == doctest::Approx(m_direct).epsilon(1e-10));

  const double a_direct = direct_weighted_mass(fx.mesh, fx.region.a_cell, full);
  CHECK(x.dot(fx.sys.D_a * x) == doctest::Approx(a_direct).epsilon(1e-10));
  CHECK(a_direct > 0);
}

TEST_CASE("collar damping vanishes for zero amplitude") {
  const Fixture fx(0.25, 0.0);
  CHECK(fx.sys.D_a.norm() == 0.0);
  CHECK(fx.sys.K_O.norm() > 0.0);
}

TEST_CASE("trace mass integrates constants on the acoustic circle") {
  const Fixture fx(0.25);
  VectorXd e0 = VectorXd::Zero(2 * fx.mesh.n_vertices());
  for (int v = 0; v < fx.mesh.n_vertices(); ++v) e0[2 * v] = 1.0;
  const VectorXd x = restrict_free(fx.sys, e0);
  CHECK(x.dot(fx.sys.T_gamma1 * x) ==
        doctest::Approx(fx.space->total_measure()).epsilon(1e-12));
}

TEST_CASE("boundary blocks expand the scalar operators") {
  const Fixture fx(0.25);
  const BoundarySpace& sp = *fx.space;
  CHECK((fx.sys.S_f - expand_componentwise(sp, fx.sys.scalar_ops.M_f)).norm() == 0.0);
  CHECK((fx.sys.S_g - expand_componentwise(sp, fx.sys.scalar_ops.D_g)).norm() == 0.0);
  CHECK((fx.sys.S_h - expand_componentwise(sp, fx.sys.scalar_ops.H_h)).norm() == 0.0);
  CHECK((fx.sys.K_nu - embed_normal(sp, fx.sys.scalar_ops.K_LB)).norm() == 0.0);
  CHECK((fx.sys.K_el - fx.sys.scalar_ops.K_elastic).norm() == 0.0);
  const SparseMat sum = fx.sys.S_h + fx.sys.K_el + fx.sys.K_nu;
  CHECK((fx.sys.Z - sum).norm() == 0.0);
}

TEST_CASE("coupling pairs boundary and bulk traces on facets") {
  const Fixture fx(0.25);
  const BoundarySpace& sp = *fx.space;
  const VectorXd v = random_free(fx.sys, 55);
  std::mt19937 rng(56);
  std::normal_distribution<double> dist;
  VectorXd w(fx.sys.n_bdofs());
  for (int i = 0; i < w.size(); ++i) w[i] = dist(rng);

  const MatrixXd w_amb = reconstruct_trace(sp, unpack_field(sp, w));
  const VectorXd v_full = prolong_full(fx.sys, v);
  double direct = 0;
  for (const auto& fc : sp.facets) {
    const double l = fc.measure;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double m = (a == b) ? l / 3.0 : l / 6.0;
        const int vb = sp.nodes[fc.lnodes[b]];
        const Vector2d bulk(v_full[2 * vb], v_full[2 * vb + 1]);
        direct += m * w_amb.row(fc.lnodes[a]).dot(bulk);
      }
    }
  }
  const double scale = w.norm() * v.norm();
  CHECK(std::abs(w.dot(fx.sys.B * v) - direct) <= 1e-12 * scale);
}

TEST_CASE("state gram matrix is the energy block diagonal") {
  const Fixture fx(0.25);
  const SparseMat G = hilbert_gram(fx.sys);
  REQUIRE(G.rows() == fx.sys.state_size());
  std::mt19937 rng(77);
  std::normal_distribution<double> dist;
  VectorXd x(G.rows());
  for (int i = 0; i < x.size(); ++i) x[i] = dist(rng);
  const int nf = fx.sys.n_free, nb = fx.sys.n_bdofs();
  const VectorXd u = x.segment(0, nf), v = x.segment(nf, nf);
  const VectorXd z = x.segment(2 * nf, nb), w = x.segment(2 * nf + nb, nb);
  const double split = u.dot(fx.sys.K_O * u) + v.dot(fx.sys.M_O * v) +
                       z.dot(fx.sys.Z * z) + w.dot(fx.sys.S_f * w);
  CHECK(x.dot(G * x) == doctest::Approx(split).epsilon(1e-12));
}

TEST_CASE("restriction and prolongation round trip") {
  const Fixture fx(0.3);
  const VectorXd x = random_free(fx.sys, 5);
  const VectorXd full = prolong_full(fx.sys, x);
  CHECK((restrict_free(fx.sys, full) - x).norm() == 0.0);
  for (int k = 0; k < 2 * fx.mesh.n_vertices(); ++k)
    if (fx.sys.free_index[k] < 0) CHECK(full[k] == 0.0);
  CHECK_THROWS_AS(restrict_free(fx.sys, VectorXd::Zero(3)), ParameterError);
  CHECK_THROWS_AS(prolong_full(fx.sys, VectorXd::Zero(fx.sys.n_free + 1)),
                  ParameterError);
}

TEST_CASE("material parameter validation") {
  MaterialParams m;
  m.alpha = 0.0;
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m.alpha = 1.0;
  m.lambda = -0.1;
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m.lambda = 0.0;
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("index map export is valid JSON") {
  const Fixture fx(0.3);
  const std::string path = "index_map_test.json";
  write_index_map(fx.sys, *fx.space, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  in.close();
  const auto j = nlohmann::json::parse(ss.str());
  CHECK(j["dim"] == 2);
  CHECK(j["n_free"] == fx.sys.n_free);
  CHECK(j["n_boundary_dofs"] == fx.sys.n_bdofs());
  CHECK(j["free_to_vertex_comp"].size() == static_cast<size_t>(fx.sys.n_free));
  CHECK(j["boundary_nodes"].size() == static_cast<size_t>(fx.space->n_nodes()));
  std::remove(path.c_str());
}
