#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "elastowave/analysis.hpp"

using namespace elastowave;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

struct Fixture {
  Mesh mesh;
  BoundaryFrames frames;
  RegionFields region;
  std::unique_ptr<BoundarySpace> space;
  MaterialParams material;
  VectorXd f, g, h;
  SystemMatrices sys;
  std::unique_ptr<SemigroupOperator> op;

  explicit Fixture(double hsize, double a0) {
    mesh = build_mesh(MeshKind::Annulus, 1.0, 2.0, hsize);
    classify_boundary(mesh, Vector2d::Zero(), 0.25);
    frames = compute_boundary_frames(mesh);
    region = build_region_fields(mesh, frames, 0.3, a0, DampingProfile::Constant);
    space = std::make_unique<BoundarySpace>(mesh, frames);
    f = VectorXd::Ones(space->n_nodes());
    g = f;
    h = f;
    sys = assemble_system(mesh, *space, region, material, f, g, h,
                          CoefficientFloors{1.0, 1.0, 1.0, true});
    op = std::make_unique<SemigroupOperator>(sys);
  }

  AnalysisSetup setup() const {
    AnalysisSetup s;
    s.mesh = &mesh;
    s.frames = &frames;
    s.space = space.get();
    s.sys = &sys;
    s.region = &region;
    s.material = material;
    s.f = f;
    s.g = g;
    s.h = h;
    return s;
  }

  State bump_state(double amplitude) const {
    State s = zero_state(sys);
    VectorXd full = VectorXd::Zero(2 * mesh.n_vertices());
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      const Vector2d p = mesh.vertex(v);
      const double r = p.norm();
      const double t = (r - 1.0) / 1.0;
      const double s = std::sin(std::numbers::pi * t);
      const double bump = amplitude * s * s;
      full[2 * v] = bump * p[0] / r;
      full[2 * v + 1] = bump * p[1] / r;
    }
    s.u = restrict_free(sys, full);
    return s;
  }
};

EvolutionResult short_run(const Fixture& fx, double dt, int steps, int stride) {
  IntegrateOptions opt;
  opt.dt = dt;
  opt.n_steps = steps;
  opt.store_stride = stride;
  return integrate(*fx.op, fx.bump_state(5.0), opt);
}

}  // namespace

TEST_CASE("decay fit recovers an exact exponential") {
  std::vector<double> t, e;
  for (int i = 0; i <= 200; ++i) {
    t.push_back(0.05 * i);
    e.push_back(3.0 * std::exp(-0.5 * t.back()));
  }
  const DecayFit fit = fit_decay(t, e);
  REQUIRE(fit.accepted);
  CHECK(fit.K2 == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.K1 == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(fit.correlation >= 0.99);
  CHECK(fit.window_points == 201);
  for (size_t i = 0; i < t.size(); ++i)
    CHECK(e[i] <= fit.K1 * std::exp(-t[i] / fit.K2) * (1 + 1e-12));
}

TEST_CASE("decay fit tolerates modulation and stays an envelope") {
  std::vector<double> t, e;
  for (int i = 0; i <= 400; ++i) {
    t.push_back(0.05 * i);
    e.push_back(5.0 * std::exp(-0.8 * t.back()) *
                (1.0 + 0.02 * std::sin(3.0 * t.back())));
  }
  const DecayFit fit = fit_decay(t, e);
  REQUIRE(fit.accepted);
  CHECK(fit.K2 == doctest::Approx(1.0 / 0.8).epsilon(0.02));
  for (size_t i = static_cast<size_t>(fit.window_start / 0.05); i < t.size(); ++i)
    CHECK(e[i] <= fit.K1 * std::exp(-t[i] / fit.K2) * (1 + 1e-12));
}

TEST_CASE("decay fit rejects unusable traces") {
  std::vector<double> t, e;
  for (int i = 0; i < 50; ++i) {
    t.push_back(0.1 * i);
    e.push_back(2.0);
  }
  CHECK(!fit_decay(t, e).accepted);
  CHECK(fit_decay(t, e).reason == "non-decaying trace");

  std::vector<double> t2(t.begin(), t.begin() + 5), e2(e.begin(), e.begin() + 5);
  CHECK(fit_decay(t2, e2).reason == "too few samples");

  std::vector<double> e3 = e;
  e3[0] = 0.0;
  CHECK(fit_decay(t, e3).reason == "nonpositive initial energy");

  // A nonpositive sample early on is skipped and the clean suffix is fitted.
  std::vector<double> e4;
  for (int i = 0; i < 50; ++i) e4.push_back(std::exp(-0.1 * i));
  e4[10] = -1.0;
  CHECK(fit_decay(t, e4).accepted);
  // Too close to the end it starves the window instead.
  std::vector<double> e5 = e4;
  e5[10] = std::exp(-1.0);
  e5[45] = 0.0;
  CHECK(fit_decay(t, e5).reason == "nonpositive energy samples");
}

TEST_CASE("poincare constant matches a dense generalized eigensolve") {
  const Fixture fx(0.3, 1.0);
  const PoincareResult pr = poincare_constant(fx.sys);
  CHECK(pr.residual <= 1e-6);

  const MatrixXd t = MatrixXd(fx.sys.T_gamma1);
  const MatrixXd k = MatrixXd(fx.sys.K_O);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(t, k);
  REQUIRE(ges.info() == Eigen::Success);
  const double theta = ges.eigenvalues().maxCoeff();
  CHECK(pr.c_p_sq == doctest::Approx(theta).epsilon(1e-8));
  CHECK(pr.c_p == doctest::Approx(std::sqrt(theta)).epsilon(1e-8));

  // Optimality: the constant dominates the trace/energy ratio everywhere.
  std::mt19937 rng(2024);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd x(fx.sys.n_free);
    for (int i = 0; i < x.size(); ++i) x[i] = dist(rng);
    const double trace = x.dot(t.selfadjointView<Eigen::Lower>() * x);
    const double energy = x.dot(k.selfadjointView<Eigen::Lower>() * x);
    CHECK(trace <= pr.c_p_sq * energy * (1 + 1e-12));
  }
}

TEST_CASE("energy trace file layout") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 50, 0);
  const std::string path = "trace_test.csv";
  write_energy_trace(traj, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,E_total,E_omega,E_gamma,diss_a_cum,diss_g_cum,identity_residual");
  std::string line;
  int rows = 0;
  const double e0 = traj.energy.front();
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double t, et, eo, eg, da, dg, res;
    REQUIRE((ss >> t >> et >> eo >> eg >> da >> dg >> res));
    CHECK(et == eo + eg);  // written as the exact sum
    CHECK(std::abs(res) <= 1e-10 * e0);
    ++rows;
  }
  in.close();
  std::remove(path.c_str());
  CHECK(rows == 51);
}

TEST_CASE("pairwise decay residuals vanish for the midpoint scheme") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 200, 0);
  const double e0 = traj.energy.front();
  CHECK(max_decay_identity_residual(traj) <= 1e-10 * e0);
  CHECK(std::abs(decay_identity_residual(traj, 0.05, 1.5)) <= 1e-10 * e0);
  CHECK_THROWS_AS(decay_identity_residual(traj, 0.0512341, 1.5), ParameterError);
}

TEST_CASE("identity audits require a fully stored trajectory") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult strided = short_run(fx, 0.01, 40, 2);
  const AnalysisSetup s = fx.setup();
  CHECK_THROWS_AS(audit_uniform_virial(s, strided), ParameterError);
  CHECK_THROWS_AS(audit_radial_flux(s, strided), ParameterError);
  CHECK_THROWS_AS(audit_combined_identity(s, strided), ParameterError);
}

TEST_CASE("audits of the rest state are identically zero") {
  const Fixture fx(0.3, 1.0);
  IntegrateOptions opt;
  opt.dt = 0.01;
  opt.n_steps = 10;
  opt.store_stride = 1;
  const EvolutionResult traj = integrate(*fx.op, zero_state(fx.sys), opt);
  const AnalysisSetup s = fx.setup();
  for (const IdentityReport& rep :
       {audit_radial_flux(s, traj), audit_uniform_virial(s, traj),
        audit_cutoff_virial(s, traj), audit_normal_flux(s, traj),
        audit_combined_identity(s, traj)}) {
    CHECK(rep.scale == 0.0);
    CHECK(rep.residual == 0.0);
    for (const auto& term : rep.terms) CHECK(term.second == 0.0);
  }
}

TEST_CASE("uniform virial identity is spatially exact") {
  // With psi = 1 every multiplier term is representable in the discrete
  // spaces, so the defect is pure time quadrature and shrinks like dt^2.
  const Fixture fx(0.25, 1.0);
  const AnalysisSetup s = fx.setup();

  IntegrateOptions opt;
  opt.dt = 0.002;
  opt.n_steps = 500;
  opt.store_stride = 1;
  const EvolutionResult traj = integrate(*fx.op, fx.bump_state(5.0), opt);
  const IdentityReport rep = audit_uniform_virial(s, traj);
  REQUIRE(rep.scale > 0);
  CHECK(std::abs(rep.residual) <= 1e-3 * rep.scale);

  IntegrateOptions half = opt;
  half.dt = 0.001;
  half.n_steps = 1000;
  const EvolutionResult traj2 = integrate(*fx.op, fx.bump_state(5.0), half);
  const IdentityReport rep2 = audit_uniform_virial(s, traj2);
  CHECK(std::abs(rep2.residual) <= 0.3 * std::abs(rep.residual));
}

TEST_CASE("identity report bookkeeping") {
  const Fixture fx(0.3, 1.0);
  const AnalysisSetup s = fx.setup();
  const EvolutionResult traj = short_run(fx, 0.01, 100, 1);
  for (const IdentityReport& rep :
       {audit_radial_flux(s, traj), audit_cutoff_virial(s, traj),
        audit_normal_flux(s, traj), audit_combined_identity(s, traj)}) {
    double sum = 0, scale = std::abs(rep.lhs);
    for (const auto& term : rep.terms) {
      sum += term.second;
      scale = std::max(scale, std::abs(term.second));
    }
    CHECK(rep.residual == sum - rep.lhs);
    CHECK(rep.scale == scale);
    CHECK(rep.h == doctest::Approx(fx.mesh.max_diameter()).epsilon(1e-12));
    CHECK(std::abs(rep.residual) < rep.scale);  // loose sanity on coherence
  }
  const IdentityReport comb = audit_combined_identity(s, traj);
  CHECK(comb.lhs > 0);
  CHECK(comb.terms.size() == 26);
}

TEST_CASE("synthetic convergence rates") {
  IdentityReport coarse, fine;
  coarse.h = 0.2;
  coarse.residual = 0.08;
  coarse.scale = 1;
  fine.h = 0.1;
  fine.residual = 0.02;
  fine.scale = 1;
  CHECK(identity_convergence_rate(coarse, fine) == doctest::Approx(2.0).epsilon(1e-12));
  fine.residual = 0.0;
  coarse.residual = 0.0;
  CHECK(std::isinf(identity_convergence_rate(coarse, fine)));
  fine.h = 0.2;
  fine.residual = 0.02;
  CHECK_THROWS_AS(identity_convergence_rate(coarse, fine), ParameterError);
}

TEST_CASE("multiplier bound ratio is finite and positive") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 100, 1);
  const RatioSeries rs = multiplier_bound_ratio(fx.setup(), traj);
  REQUIRE(!rs.value.empty());
  CHECK(rs.t.size() == rs.value.size());
  for (double v : rs.value) {
    CHECK(v >= 0);
    CHECK(std::isfinite(v));
  }
  CHECK(rs.max_value > 0);
}

TEST_CASE("planar tangential norms coincide") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 60, 1);
  const NormEquivalenceReport rep = tangential_norm_equivalence(fx.setup(), traj);
  CHECK(rep.samples > 0);
  CHECK(std::abs(rep.min_ratio - 1.0) <= 1e-10);
  CHECK(std::abs(rep.max_ratio - 1.0) <= 1e-10);
}

TEST_CASE("boundary energy split is exact") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 60, 1);
  const BoundaryEnergyReport rep = boundary_energy_report(fx.setup(), traj);
  REQUIRE(rep.t.size() == traj.state_times.size());
  for (size_t i = 0; i < rep.t.size(); ++i) {
    const double sum = rep.inertia[i] + rep.restoring[i] + rep.membrane[i] +
                       rep.bending[i];
    const size_t gi = static_cast<size_t>(std::llround(rep.t[i] / 0.01));
    const double eg = traj.energy_boundary[gi];
    CHECK(std::abs(sum - 2 * eg) <= 1e-10 * std::max(1.0, 2 * eg));
  }
}

TEST_CASE("boundary regularity tradeoff bookkeeping") {
  const Fixture fx(0.3, 1.0);
  const EvolutionResult traj = short_run(fx, 0.01, 60, 1);
  const TradeoffReport rep = boundary_regularity_tradeoff(fx.setup(), traj, 0.5);
  CHECK(rep.tau == 0.5);
  CHECK(rep.e0 > 0);
  CHECK(rep.boundary_integral >= 0);
  CHECK(rep.energy_integral > 0);
  CHECK(rep.c_hat >= 0);
  CHECK_THROWS_AS(boundary_regularity_tradeoff(fx.setup(), traj, 0.0), ParameterError);
}
