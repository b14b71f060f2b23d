#include "elastowave/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "elastowave/errors.hpp"

namespace elastowave {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void put17(std::ofstream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void write_energy_trace(const EvolutionResult& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open energy trace for writing: " + path);
  out << "t,E_total,E_omega,E_gamma,diss_a_cum,diss_g_cum,identity_residual\n";
  const double e0 = traj.energy_bulk.empty()
                        ? 0.0
                        : traj.energy_bulk.front() + traj.energy_boundary.front();
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const double et = traj.energy_bulk[i] + traj.energy_boundary[i];
    put17(out, traj.times[i]);
    out << ',';
    put17(out, et);
    out << ',';
    put17(out, traj.energy_bulk[i]);
    out << ',';
    put17(out, traj.energy_boundary[i]);
    out << ',';
    put17(out, traj.diss_a_cum[i]);
    out << ',';
    put17(out, traj.diss_g_cum[i]);
    out << ',';
    put17(out, et + traj.diss_a_cum[i] + traj.diss_g_cum[i] - e0);
    out << '\n';
  }
}

namespace {

size_t grid_index(const EvolutionResult& traj, double s) {
  for (size_t i = 0; i < traj.times.size(); ++i)
    if (std::abs(traj.times[i] - s) <= 1e-9 * std::max(1.0, std::abs(s))) return i;
  throw ParameterError("time " + std::to_string(s) + " is not on the trajectory grid");
}

}  // namespace

double decay_identity_residual(const EvolutionResult& traj, double s1, double s2) {
  const size_t i = grid_index(traj, s1), j = grid_index(traj, s2);
  if (i >= j) throw ParameterError("decay identity needs s1 < s2 on the grid");
  return (traj.energy[j] - traj.energy[i]) + (traj.diss_a_cum[j] - traj.diss_a_cum[i]) +
         (traj.diss_g_cum[j] - traj.diss_g_cum[i]);
}

double max_decay_identity_residual(const EvolutionResult& traj) {
  // The pair residual telescopes: max over pairs = spread of the running sum.
  double lo = 0, hi = 0;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const double r = traj.energy[i] + traj.diss_a_cum[i] + traj.diss_g_cum[i];
    lo = (i == 0) ? r : std::min(lo, r);
    hi = (i == 0) ? r : std::max(hi, r);
  }
  return hi - lo;
}

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& energy) {
  DecayFit fit;
  const int n = static_cast<int>(t.size());
  if (n != static_cast<int>(energy.size())) throw ParameterError("fit_decay: size mismatch");
  const int min_points = 10;
  if (n < min_points) {
    fit.reason = "too few samples";
    return fit;
  }
  if (!(energy.front() > 0)) {
    fit.reason = "nonpositive initial energy";
    return fit;
  }
  if (energy.back() >= energy.front() * (1.0 - 1e-12)) {
    fit.reason = "non-decaying trace";
    return fit;
  }
  int first_valid = 0;
  for (int i = 0; i < n; ++i)
    if (!(energy[i] > 0)) first_valid = i + 1;
  if (n - first_valid < min_points) {
    fit.reason = "nonpositive energy samples";
    return fit;
  }

  std::vector<double> y(n, 0.0);
  for (int i = first_valid; i < n; ++i) y[i] = std::log(energy[i]);

  // Longest suffix with log-linear correlation >= 0.99 and negative slope.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int best = -1;
  double best_slope = 0, best_intercept = 0, best_corr = 0;
  for (int i = n - 1; i >= first_valid; --i) {
    sx += t[i];
    sy += y[i];
    sxx += t[i] * t[i];
    syy += y[i] * y[i];
    sxy += t[i] * y[i];
    const int m = n - i;
    if (m < min_points) continue;
    const double vx = m * sxx - sx * sx, vy = m * syy - sy * sy;
    const double cov = m * sxy - sx * sy;
    if (vx <= 0 || vy <= 1e-24 * m * m) continue;  // flat or degenerate
    const double corr = std::abs(cov) / std::sqrt(vx * vy);
    const double slope = cov / vx;
    if (corr >= 0.99 && slope < 0) {
      best = i;
      best_slope = slope;
      best_intercept = (sy - slope * sx) / m;
      best_corr = corr;
    }
  }
  if (best < 0) {
    fit.reason = "no log-linear window (correlation below 0.99)";
    return fit;
  }
  double max_res = 0;
  for (int i = best; i < n; ++i)
    max_res = std::max(max_res, y[i] - (best_intercept + best_slope * t[i]));
  fit.accepted = true;
  fit.slope = best_slope;
  fit.intercept = best_intercept;
  fit.correlation = best_corr;
  fit.K2 = -1.0 / best_slope;
  fit.K1 = std::max(1.0, std::exp(best_intercept + max_res));
  fit.window_start = t[best];
  fit.window_end = t[n - 1];
  fit.window_points = n - best;
  return fit;
}

PoincareResult poincare_constant(const SystemMatrices& sys, double tol, int max_iterations) {
  Eigen::SimplicialLLT<SparseMat> kfac(sys.K_O);
  if (kfac.info() != Eigen::Success)
    throw SolverError("elastic stiffness is not positive definite");
  std::mt19937 rng(4242);
  std::normal_distribution<double> dist(0.0, 1.0);
  VectorXd x(sys.n_free);
  for (int i = 0; i < sys.n_free; ++i) x[i] = dist(rng);
  x = kfac.solve(sys.T_gamma1 * x);  // project into the active range
  double xn = std::sqrt(x.dot(sys.K_O * x));
  if (!(xn > 0)) throw SolverError("trace mass pencil has trivial range");
  x /= xn;

  PoincareResult out;
  double theta = x.dot(sys.T_gamma1 * x);
  for (int it = 1; it <= max_iterations; ++it) {
    VectorXd tx = sys.T_gamma1 * x;
    x = kfac.solve(tx);
    xn = std::sqrt(x.dot(sys.K_O * x));
    if (!(xn > 0)) throw SolverError("power iteration collapsed");
    x /= xn;
    const double next = x.dot(sys.T_gamma1 * x);
    out.iterations = it;
    if (std::abs(next - theta) <= tol * std::abs(next)) {
      theta = next;
      break;
    }
    theta = next;
  }
  const VectorXd tx = sys.T_gamma1 * x;
  const VectorXd kx = sys.K_O * x;
  out.residual = (tx - theta * kx).norm() / std::max(tx.norm(), 1e-300);
  if (out.iterations >= max_iterations && out.residual > 1e-6)
    throw SolverError("trace-constant iteration did not converge");
  out.c_p_sq = theta;
  out.c_p = std::sqrt(std::max(0.0, theta));
  return out;
}

namespace {

struct CellData {
  double vol;
  MatrixXd grad;  // d x (d+1)
  MatrixXd mass;  // unweighted P1 mass
};

std::vector<CellData> build_cell_data(const Mesh& mesh) {
  const int d = mesh.dim, npc = mesh.nodes_per_cell();
  std::vector<CellData> cells(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellData& cd = cells[c];
    cd.vol = mesh.cell_measure(c);
    cd.grad = cell_gradients(mesh, c);
    const double md = (d == 2) ? cd.vol / 6.0 : cd.vol / 10.0;
    const double mo = (d == 2) ? cd.vol / 12.0 : cd.vol / 20.0;
    cd.mass = MatrixXd::Constant(npc, npc, mo);
    cd.mass.diagonal().setConstant(md);
  }
  return cells;
}

// Exact \int c phi_a phi_b on a cell with P1 nodal weight values c.
MatrixXd cell_weighted_mass(int d, double vol, const VectorXd& c) {
  const int npc = d + 1;
  const double w3 = (d == 2) ? vol / 10.0 : vol / 20.0;
  const double w21 = (d == 2) ? vol / 30.0 : vol / 60.0;
  const double w111 = (d == 2) ? vol / 60.0 : vol / 120.0;
  MatrixXd m(npc, npc);
  for (int a = 0; a < npc; ++a)
    for (int b = 0; b < npc; ++b) {
      double s = 0;
      for (int k = 0; k < npc; ++k) {
        const double w =
            (a == b) ? (k == a ? w3 : w21) : ((k == a || k == b) ? w21 : w111);
        s += w * c[k];
      }
      m(a, b) = s;
    }
  return m;
}

// Exact \int c phi_a phi_b on a boundary facet with local P1 weight values.
MatrixXd p1_facet_mass(int d, double measure, const VectorXd& c) {
  if (d == 2) {
    MatrixXd m(2, 2);
    m << measure * (3 * c[0] + c[1]) / 12.0, measure * (c[0] + c[1]) / 12.0,
        measure * (c[0] + c[1]) / 12.0, measure * (c[0] + 3 * c[1]) / 12.0;
    return m;
  }
  MatrixXd m(3, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double s = 0;
      for (int k = 0; k < 3; ++k) {
        const double w = (a == b) ? (k == a ? measure / 10.0 : measure / 30.0)
                                  : ((k == a || k == b) ? measure / 30.0 : measure / 60.0);
        s += w * c[k];
      }
      m(a, b) = s;
    }
  return m;
}

void require_full_storage(const EvolutionResult& traj) {
  if (traj.states.size() != traj.times.size())
    throw ParameterError("identity audits require a fully stored trajectory (store_stride = 1)");
}

void check_setup(const AnalysisSetup& s, bool need_region) {
  if (!s.mesh || !s.frames || !s.space || !s.sys)
    throw ParameterError("analysis setup is incomplete");
  if (need_region && !s.region)
    throw ParameterError("this audit needs the damping-region fields");
}

std::vector<double> trapezoid_weights(const std::vector<double>& t) {
  const size_t n = t.size();
  std::vector<double> w(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    const double half = 0.5 * (t[i + 1] - t[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  return w;
}

struct BulkCellSample {
  MatrixXd un, vn;  // nodal values, d x (d+1)
  MatrixXd ju;      // Jacobian, ju(i,k) = d_k u_i
  MatrixXd sigma;
  double sig_e;  // sigma : eps
};

BulkCellSample bulk_cell_sample(const Mesh& mesh, const CellData& cd,
                                const MaterialParams& mat, const VectorXd& u_full,
                                const VectorXd& v_full, int c) {
  const int d = mesh.dim, npc = mesh.nodes_per_cell();
  BulkCellSample s;
  s.un.resize(d, npc);
  s.vn.resize(d, npc);
  for (int a = 0; a < npc; ++a) {
    const int v = mesh.cells[c][a];
    s.un.col(a) = u_full.segment(static_cast<Eigen::Index>(v) * d, d);
    s.vn.col(a) = v_full.segment(static_cast<Eigen::Index>(v) * d, d);
  }
  s.ju = s.un * cd.grad.transpose();  // sum_a u_a grad_a^T
  const MatrixXd eps = 0.5 * (s.ju + s.ju.transpose());
  s.sigma = 2.0 * mat.alpha * eps + mat.lambda * eps.trace() * MatrixXd::Identity(d, d);
  s.sig_e = (s.sigma.array() * eps.array()).sum();
  return s;
}

struct Gamma0Facet {
  std::array<int, 3> nodes;
  int cell;
  double measure;
  VectorXd normal;
};

std::vector<Gamma0Facet> gamma0_facets(const Mesh& mesh) {
  std::vector<Gamma0Facet> out;
  for (int f = 0; f < mesh.n_boundary_facets(); ++f) {
    const auto& bf = mesh.boundary_facets[f];
    if (bf.label != BoundaryLabel::Gamma0) continue;
    out.push_back({bf.nodes, bf.cell, mesh.facet_measure(f), mesh.facet_unit_normal(f)});
  }
  return out;
}

double state_energy(const SystemMatrices& sys, const State& s) {
  return 0.5 * (s.u.dot(sys.K_O * s.u) + s.v.dot(sys.M_O * s.v) + s.z.dot(sys.Z * s.z) +
                s.w.dot(sys.S_f * s.w));
}

void finalize_report(IdentityReport& rep) {
  double sum = 0, scale = std::abs(rep.lhs);
  for (const auto& [name, value] : rep.terms) {
    sum += value;
    scale = std::max(scale, std::abs(value));
  }
  rep.residual = sum - rep.lhs;
  rep.scale = scale;
}

}  // namespace

IdentityReport audit_flux_identity(const AnalysisSetup& setup, const EvolutionResult& traj,
                                   const Eigen::MatrixXd& q_nodal, const std::string& name) {
  check_setup(setup, false);
  require_full_storage(traj);
  const Mesh& mesh = *setup.mesh;
  const BoundarySpace& space = *setup.space;
  const SystemMatrices& sys = *setup.sys;
  const int d = mesh.dim, npc = mesh.nodes_per_cell();
  if (q_nodal.rows() != mesh.n_vertices() || q_nodal.cols() != d)
    throw ParameterError("flux audit: field must be nodal on the mesh");

  const auto cells = build_cell_data(mesh);
  const auto g0 = gamma0_facets(mesh);
  const auto tw = trapezoid_weights(traj.state_times);
  const bool damped = setup.region != nullptr;

  double time_boundary_first = 0, time_boundary_last = 0;
  double divergence = 0, gradient_stress = 0, collar_damping = 0;
  double acoustic_contrast = 0, acoustic_velocity = 0, clamped_flux = 0;

  // Per-cell divergence and Jacobian of q are time independent.
  std::vector<MatrixXd> jq(mesh.n_cells());
  std::vector<double> divq(mesh.n_cells());
  std::vector<MatrixXd> qn(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    qn[c].resize(d, npc);
    for (int a = 0; a < npc; ++a) qn[c].col(a) = q_nodal.row(mesh.cells[c][a]).transpose();
    jq[c] = qn[c] * cells[c].grad.transpose();
    divq[c] = jq[c].trace();
  }

  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    const VectorXd u_full = prolong_full(sys, st.u);
    const VectorXd v_full = prolong_full(sys, st.v);
    const double wk = tw[k];

    double x_bracket = 0, t_div = 0, t_grad = 0, t_damp = 0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellData& cd = cells[c];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, c);
      const MatrixXd mn = bs.ju * qn[c];  // multiplier q.grad(u) at cell nodes
      double vm = 0, kin = 0;
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) {
          vm += cd.mass(a, b) * bs.vn.col(a).dot(mn.col(b));
          kin += cd.mass(a, b) * bs.vn.col(a).dot(bs.vn.col(b));
        }
      x_bracket += 2.0 * vm;
      t_div += divq[c] * (bs.sig_e * cd.vol - kin);
      t_grad += -2.0 * cd.vol * (bs.sigma.array() * (bs.ju * jq[c]).array()).sum();
      if (damped) {
        const double ac = setup.region->a_cell[c];
        if (ac != 0.0) t_damp += -2.0 * ac * vm;
      }
    }
    if (k == 0) time_boundary_first = x_bracket;
    if (k + 1 == traj.states.size()) time_boundary_last = x_bracket;
    divergence += wk * t_div;
    gradient_stress += wk * t_grad;
    collar_damping += wk * t_damp;

    // Acoustic boundary terms.
    const BoundaryField wf = unpack_field(space, st.w);
    const MatrixXd w_amb = reconstruct_trace(space, wf);
    double t_contrast = 0, t_vel = 0;
    for (const auto& fc : space.facets) {
      const VectorXd nu = mesh.facet_unit_normal(fc.mesh_facet);
      const int owner = mesh.boundary_facets[fc.mesh_facet].cell;
      const CellData& cd = cells[owner];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, owner);
      VectorXd qnu(d), ones = VectorXd::Ones(d);
      MatrixXd vloc(d, d), mloc(d, d);
      for (int a = 0; a < d; ++a) {
        const int vtx = space.nodes[fc.lnodes[a]];
        const VectorXd qv = q_nodal.row(vtx).transpose();
        qnu[a] = qv.dot(nu);
        vloc.col(a) = v_full.segment(static_cast<Eigen::Index>(vtx) * d, d);
        mloc.col(a) = bs.ju * qv;
      }
      const MatrixXd mq = p1_facet_mass(d, fc.measure, qnu);
      const MatrixXd m1 = p1_facet_mass(d, fc.measure, ones);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          t_contrast += mq(a, b) * vloc.col(a).dot(vloc.col(b));
          t_vel += 2.0 * m1(a, b) * w_amb.row(fc.lnodes[a]).dot(mloc.col(b));
        }
      t_contrast -= bs.sig_e * fc.measure * qnu.mean();
    }
    acoustic_contrast += wk * t_contrast;
    acoustic_velocity += wk * t_vel;

    double t_g0 = 0;
    for (const auto& gf : g0) {
      const CellData& cd = cells[gf.cell];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, gf.cell);
      double qbar = 0;
      for (int a = 0; a < d; ++a)
        qbar += q_nodal.row(gf.nodes[a]).dot(gf.normal) / d;
      t_g0 += bs.sig_e * gf.measure * qbar;
    }
    clamped_flux += wk * t_g0;
  }

  IdentityReport rep;
  rep.name = name;
  rep.h = mesh.max_diameter();
  rep.terms = {{"time_boundary", -(time_boundary_last - time_boundary_first)},
               {"divergence_contrast", divergence},
               {"gradient_stress", gradient_stress},
               {"collar_damping", collar_damping},
               {"acoustic_flux_contrast", acoustic_contrast},
               {"acoustic_trace_velocity", acoustic_velocity},
               {"clamped_flux", clamped_flux}};
  finalize_report(rep);
  return rep;
}

IdentityReport audit_virial_identity(const AnalysisSetup& setup,
                                     const EvolutionResult& traj,
                                     const Eigen::VectorXd& psi_nodal,
                                     const std::string& name) {
  check_setup(setup, false);
  require_full_storage(traj);
  const Mesh& mesh = *setup.mesh;
  const BoundarySpace& space = *setup.space;
  const SystemMatrices& sys = *setup.sys;
  const int d = mesh.dim, npc = mesh.nodes_per_cell();
  if (psi_nodal.size() != mesh.n_vertices())
    throw ParameterError("virial audit: weight must be nodal on the mesh");

  const auto cells = build_cell_data(mesh);
  const auto tw = trapezoid_weights(traj.state_times);
  const bool damped = setup.region != nullptr;

  std::vector<MatrixXd> wmass(mesh.n_cells());
  std::vector<VectorXd> gpsi(mesh.n_cells());
  std::vector<double> psibar(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    VectorXd pl(npc);
    for (int a = 0; a < npc; ++a) pl[a] = psi_nodal[mesh.cells[c][a]];
    wmass[c] = cell_weighted_mass(d, cells[c].vol, pl);
    gpsi[c] = cells[c].grad * pl;
    psibar[c] = pl.mean();
  }

  double bracket_first = 0, bracket_last = 0;
  double kinetic = 0, strain = 0, gradient_stress = 0, trace_velocity = 0, damping = 0;

  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    const VectorXd u_full = prolong_full(sys, st.u);
    const VectorXd v_full = prolong_full(sys, st.v);
    const double wk = tw[k];

    double x_bracket = 0, t_kin = 0, t_strain = 0, t_grad = 0, t_damp = 0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellData& cd = cells[c];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, c);
      double vu = 0, vv = 0;
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) {
          vu += wmass[c](a, b) * bs.vn.col(a).dot(bs.un.col(b));
          vv += wmass[c](a, b) * bs.vn.col(a).dot(bs.vn.col(b));
        }
      x_bracket += 2.0 * vu;
      t_kin += -2.0 * vv;
      t_strain += 2.0 * bs.sig_e * cd.vol * psibar[c];
      const VectorXd ubar = bs.un.rowwise().mean();
      t_grad += 2.0 * cd.vol * ubar.dot(bs.sigma * gpsi[c]);
      if (damped) {
        const double ac = setup.region->a_cell[c];
        if (ac != 0.0) t_damp += 2.0 * ac * vu;
      }
    }
    if (k == 0) bracket_first = x_bracket;
    if (k + 1 == traj.states.size()) bracket_last = x_bracket;
    kinetic += wk * t_kin;
    strain += wk * t_strain;
    gradient_stress += wk * t_grad;
    damping += wk * t_damp;

    const BoundaryField wf = unpack_field(space, st.w);
    const MatrixXd w_amb = reconstruct_trace(space, wf);
    double t_vel = 0;
    for (const auto& fc : space.facets) {
      VectorXd pl(d);
      MatrixXd uloc(d, d);
      for (int a = 0; a < d; ++a) {
        const int vtx = space.nodes[fc.lnodes[a]];
        pl[a] = psi_nodal[vtx];
        uloc.col(a) = u_full.segment(static_cast<Eigen::Index>(vtx) * d, d);
      }
      const MatrixXd mp = p1_facet_mass(d, fc.measure, pl);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          t_vel += -2.0 * mp(a, b) * w_amb.row(fc.lnodes[a]).dot(uloc.col(b));
    }
    trace_velocity += wk * t_vel;
  }

  IdentityReport rep;
  rep.name = name;
  rep.h = mesh.max_diameter();
  rep.terms = {{"time_boundary", bracket_last - bracket_first},
               {"kinetic", kinetic},
               {"strain", strain},
               {"gradient_stress", gradient_stress},
               {"acoustic_trace_velocity", trace_velocity},
               {"collar_damping", damping}};
  finalize_report(rep);
  return rep;
}

IdentityReport audit_radial_flux(const AnalysisSetup& setup, const EvolutionResult& traj) {
  check_setup(setup, false);
  if (!setup.mesh->classified) throw ParameterError("mesh has no star center");
  MatrixXd q(setup.mesh->n_vertices(), setup.mesh->dim);
  for (int i = 0; i < setup.mesh->n_vertices(); ++i)
    q.row(i) = (setup.mesh->vertex(i) - setup.mesh->x0).transpose();
  return audit_flux_identity(setup, traj, q, "radial_flux");
}

IdentityReport audit_uniform_virial(const AnalysisSetup& setup,
                                    const EvolutionResult& traj) {
  check_setup(setup, false);
  return audit_virial_identity(setup, traj, VectorXd::Ones(setup.mesh->n_vertices()),
                               "uniform_virial");
}

IdentityReport audit_cutoff_virial(const AnalysisSetup& setup, const EvolutionResult& traj) {
  check_setup(setup, true);
  return audit_virial_identity(setup, traj, setup.region->xi, "collar_cutoff_virial");
}

IdentityReport audit_normal_flux(const AnalysisSetup& setup, const EvolutionResult& traj) {
  check_setup(setup, true);
  return audit_flux_identity(setup, traj, setup.region->k_field, "normal_extension_flux");
}

IdentityReport audit_combined_identity(const AnalysisSetup& setup,
                                       const EvolutionResult& traj) {
  check_setup(setup, false);
  require_full_storage(traj);
  const Mesh& mesh = *setup.mesh;
  if (mesh.dim != 2)
    throw ParameterError("the combined energy balance audit is planar only");
  if (!mesh.classified) throw ParameterError("mesh has no star center");
  const BoundarySpace& space = *setup.space;
  const SystemMatrices& sys = *setup.sys;
  const int d = 2, npc = 3;
  const int nb = space.n_nodes();
  if (setup.f.size() != nb || setup.g.size() != nb || setup.h.size() != nb)
    throw ParameterError("combined audit needs nodal boundary coefficients");
  const double beta =
      2.0 * setup.material.alpha + lambda_star(setup.material.lambda, setup.material.alpha);

  const auto cells = build_cell_data(mesh);
  const auto g0 = gamma0_facets(mesh);
  const auto tw = trapezoid_weights(traj.state_times);
  const bool damped = setup.region != nullptr;

  // Bulk multiplier q = x - x0 (P1-exact) and its nodal values per cell.
  std::vector<MatrixXd> qn(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    qn[c].resize(d, npc);
    for (int a = 0; a < npc; ++a)
      qn[c].col(a) = mesh.vertex(mesh.cells[c][a]) - mesh.x0;
  }

  // Time-independent boundary node data.
  VectorXd qs(nb), kap(nb);
  for (int i = 0; i < nb; ++i) {
    qs[i] = (space.node_position(i) - mesh.x0).dot(space.node_tangent(i, 0));
    kap[i] = space.node_kappa(i);
  }

  double bulk_bracket_first = 0, bulk_bracket_last = 0;
  double bulk_damping = 0, acoustic_contrast = 0, acoustic_velocity = 0, clamped = 0;
  double t1_first = 0, t1_last = 0, n1_first = 0, n1_last = 0;
  double t2 = 0, t3 = 0, t4 = 0, t5 = 0, t6 = 0, t7 = 0;
  double n2 = 0, n3 = 0, n4 = 0, n5 = 0, n6 = 0, n7 = 0, n8 = 0, n9 = 0, n10 = 0;
  double add_inertia = 0, add_restoring = 0, add_membrane = 0, add_bending = 0;
  double lhs = 0;

  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    const VectorXd u_full = prolong_full(sys, st.u);
    const VectorXd v_full = prolong_full(sys, st.v);
    const double wk = tw[k];

    // Bulk sweep with multiplier q.grad(u) + u/2.
    double x_bracket = 0, t_damp = 0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellData& cd = cells[c];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, c);
      const MatrixXd mn = bs.ju * qn[c] + 0.5 * bs.un;
      double vm = 0;
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) vm += cd.mass(a, b) * bs.vn.col(a).dot(mn.col(b));
      x_bracket += 2.0 * vm;
      if (damped) {
        const double ac = setup.region->a_cell[c];
        if (ac != 0.0) t_damp += -2.0 * ac * vm;
      }
    }
    if (k == 0) bulk_bracket_first = x_bracket;
    if (k + 1 == traj.states.size()) bulk_bracket_last = x_bracket;
    bulk_damping += wk * t_damp;

    // Acoustic facet sweep (bulk-trace terms plus tangential groups).
    const BoundaryField zf = unpack_field(space, st.z);
    const BoundaryField wf = unpack_field(space, st.w);
    const MatrixXd w_amb = reconstruct_trace(space, wf);
    VectorXd ut(nb), un(nb);
    for (int i = 0; i < nb; ++i) {
      const VectorXd vi =
          v_full.segment(static_cast<Eigen::Index>(space.nodes[i]) * d, d);
      ut[i] = vi.dot(space.node_tangent(i, 0));
      un[i] = vi.dot(space.node_normal(i));
    }

    double t_contrast = 0, t_vel = 0;
    double x_t1 = 0, s_t2 = 0, s_t3 = 0, s_t4 = 0, s_t5 = 0, s_t6 = 0, s_t7 = 0;
    double x_n1 = 0, s_n2 = 0, s_n3 = 0, s_n4 = 0, s_n5 = 0, s_n6 = 0, s_n7 = 0,
           s_n8 = 0, s_n9 = 0, s_n10 = 0;
    for (const auto& fc : space.facets) {
      const int a = fc.lnodes[0], b = fc.lnodes[1];
      const double l = fc.measure, kbar = fc.kappa;
      const VectorXd nu = mesh.facet_unit_normal(fc.mesh_facet);
      const int owner = mesh.boundary_facets[fc.mesh_facet].cell;
      const CellData& cd = cells[owner];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, owner);

      VectorXd qnu(2), ones = VectorXd::Ones(2);
      MatrixXd vloc(2, 2), mloc(2, 2);
      const int lo[2] = {a, b};
      for (int j = 0; j < 2; ++j) {
        const int vtx = space.nodes[lo[j]];
        const VectorXd qv = mesh.vertex(vtx) - mesh.x0;
        const VectorXd uv = u_full.segment(static_cast<Eigen::Index>(vtx) * 2, 2);
        qnu[j] = qv.dot(nu);
        vloc.col(j) = v_full.segment(static_cast<Eigen::Index>(vtx) * 2, 2);
        mloc.col(j) = bs.ju * qv + 0.5 * uv;
      }
      const MatrixXd mq = p1_facet_mass(2, l, qnu);
      const MatrixXd m1 = p1_facet_mass(2, l, ones);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          t_contrast += mq(i, j) * vloc.col(i).dot(vloc.col(j));
          t_vel += 2.0 * m1(i, j) * w_amb.row(lo[i]).dot(mloc.col(j));
        }
      t_contrast -= bs.sig_e * l * qnu.mean();

      // Facet-constant tangential quantities.
      const double zTa = zf.z_T(a, 0), zTb = zf.z_T(b, 0);
      const double zna = zf.z_nu[a], znb = zf.z_nu[b];
      const double wTa = wf.z_T(a, 0), wTb = wf.z_T(b, 0);
      const double wna = wf.z_nu[a], wnb = wf.z_nu[b];
      const double e = (zTb - zTa) / l + kbar * 0.5 * (zna + znb);
      const double sig = beta * e;
      const double dzn = (znb - zna) / l;
      const double dqs = qs[b] - qs[a];
      const double dfqs = setup.f[b] * qs[b] - setup.f[a] * qs[a];
      const double dhqs = setup.h[b] * qs[b] - setup.h[a] * qs[a];
      const double dkzq = kap[b] * zTb * qs[b] - kap[a] * zTa * qs[a];
      auto mean2 = [](double pa, double pb) { return 0.5 * (pa + pb); };

      x_t1 += l * e * mean2(setup.f[a] * wTa * qs[a], setup.f[b] * wTb * qs[b]);
      s_t2 += -dfqs * mean2(wTa * wTa, wTb * wTb);
      s_t3 += 2.0 * l *
              mean2(setup.f[a] * kap[a] * wTa * wna * qs[a],
                    setup.f[b] * kap[b] * wTb * wnb * qs[b]);
      s_t4 += -2.0 * l * e * mean2(setup.g[a] * wTa * qs[a], setup.g[b] * wTb * qs[b]);
      s_t5 += -2.0 * l * e * mean2(setup.h[a] * zTa * qs[a], setup.h[b] * zTb * qs[b]);
      s_t6 += -2.0 * l * e * mean2(ut[a] * qs[a], ut[b] * qs[b]);
      s_t7 += -dqs * sig * e;

      x_n1 += l * (dzn * mean2(setup.f[a] * wna * qs[a], setup.f[b] * wnb * qs[b]) -
                   mean2(setup.f[a] * wna * kap[a] * zTa * qs[a],
                         setup.f[b] * wnb * kap[b] * zTb * qs[b]));
      s_n2 += -dfqs * mean2(wna * wna, wnb * wnb);
      s_n3 += -2.0 * l *
              mean2(setup.f[a] * kap[a] * wna * wTa * qs[a],
                    setup.f[b] * kap[b] * wnb * wTb * qs[b]);
      s_n4 += -2.0 * kbar * sig *
              ((znb - zna) * mean2(qs[a], qs[b]) -
               l * mean2(kap[a] * zTa * qs[a], kap[b] * zTb * qs[b]));
      s_n5 += -dqs * dzn * dzn;
      s_n6 += 2.0 * dkzq * dzn;
      s_n7 += -2.0 * l *
              (dzn * mean2(setup.g[a] * wna * qs[a], setup.g[b] * wnb * qs[b]) -
               mean2(setup.g[a] * wna * kap[a] * zTa * qs[a],
                     setup.g[b] * wnb * kap[b] * zTb * qs[b]));
      s_n8 += dhqs * mean2(zna * zna, znb * znb);
      s_n9 += 2.0 * l *
              mean2(setup.h[a] * kap[a] * zna * zTa * qs[a],
                    setup.h[b] * kap[b] * znb * zTb * qs[b]);
      s_n10 += -2.0 * l * (dzn * mean2(un[a] * qs[a], un[b] * qs[b]) -
                           mean2(un[a] * kap[a] * zTa * qs[a], un[b] * kap[b] * zTb * qs[b]));
    }
    acoustic_contrast += wk * t_contrast;
    acoustic_velocity += wk * t_vel;
    t2 += wk * s_t2;
    t3 += wk * s_t3;
    t4 += wk * s_t4;
    t5 += wk * s_t5;
    t6 += wk * s_t6;
    t7 += wk * s_t7;
    n2 += wk * s_n2;
    n3 += wk * s_n3;
    n4 += wk * s_n4;
    n5 += wk * s_n5;
    n6 += wk * s_n6;
    n7 += wk * s_n7;
    n8 += wk * s_n8;
    n9 += wk * s_n9;
    n10 += wk * s_n10;
    if (k == 0) {
      t1_first = x_t1;
      n1_first = x_n1;
    }
    if (k + 1 == traj.states.size()) {
      t1_last = x_t1;
      n1_last = x_n1;
    }

    double t_g0 = 0;
    for (const auto& gf : g0) {
      const CellData& cd = cells[gf.cell];
      const BulkCellSample bs =
          bulk_cell_sample(mesh, cd, setup.material, u_full, v_full, gf.cell);
      double qbar = 0;
      for (int a2 = 0; a2 < d; ++a2)
        qbar += (mesh.vertex(gf.nodes[a2]) - mesh.x0).dot(gf.normal) / d;
      t_g0 += bs.sig_e * gf.measure * qbar;
    }
    clamped += wk * t_g0;

    add_inertia += wk * st.w.dot(sys.S_f * st.w);
    add_restoring += wk * st.z.dot(sys.S_h * st.z);
    add_membrane += wk * st.z.dot(sys.K_el * st.z);
    add_bending += wk * st.z.dot(sys.K_nu * st.z);
    lhs += wk * 2.0 * state_energy(sys, st);
  }

  IdentityReport rep;
  rep.name = "energy_multiplier_balance";
  rep.h = mesh.max_diameter();
  rep.lhs = lhs;
  rep.terms = {{"bulk_time_boundary", -(bulk_bracket_last - bulk_bracket_first)},
               {"bulk_collar_damping", bulk_damping},
               {"acoustic_flux_contrast", acoustic_contrast},
               {"acoustic_trace_velocity", acoustic_velocity},
               {"clamped_flux", clamped},
               {"membrane_time_boundary", -2.0 * (t1_last - t1_first)},
               {"membrane_transport", t2},
               {"membrane_curvature_exchange", t3},
               {"membrane_friction", t4},
               {"membrane_restoring", t5},
               {"membrane_bulk_trace", t6},
               {"membrane_strain_transport", t7},
               {"normal_time_boundary", -2.0 * (n1_last - n1_first)},
               {"normal_transport", n2},
               {"normal_curvature_exchange", n3},
               {"normal_membrane_coupling", n4},
               {"bending_transport", n5},
               {"bending_curvature_coupling", n6},
               {"normal_friction", n7},
               {"normal_restoring", n8},
               {"restoring_curvature_coupling", n9},
               {"normal_bulk_trace", n10},
               {"boundary_inertia_energy", add_inertia},
               {"boundary_restoring_energy", add_restoring},
               {"boundary_membrane_energy", add_membrane},
               {"boundary_bending_energy", add_bending}};
  finalize_report(rep);
  return rep;
}

double identity_convergence_rate(const IdentityReport& coarse, const IdentityReport& fine) {
  if (!(coarse.h > fine.h) || !(fine.h > 0))
    throw ParameterError("convergence rate needs h_coarse > h_fine > 0");
  const double rc = std::abs(coarse.residual), rf = std::abs(fine.residual);
  if (rc == 0 && rf == 0) return std::numeric_limits<double>::infinity();
  const double floor_c = 1e-300;
  return std::log(std::max(rc, floor_c) / std::max(rf, floor_c)) /
         std::log(coarse.h / fine.h);
}

RatioSeries multiplier_bound_ratio(const AnalysisSetup& setup, const EvolutionResult& traj) {
  check_setup(setup, false);
  if (traj.states.empty()) throw ParameterError("no stored states");
  if (!setup.mesh->classified) throw ParameterError("mesh has no star center");
  const Mesh& mesh = *setup.mesh;
  const SystemMatrices& sys = *setup.sys;
  const int d = mesh.dim, npc = mesh.nodes_per_cell();
  const auto cells = build_cell_data(mesh);

  std::vector<MatrixXd> qn(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    qn[c].resize(d, npc);
    for (int a = 0; a < npc; ++a)
      qn[c].col(a) = mesh.vertex(mesh.cells[c][a]) - mesh.x0;
  }

  RatioSeries out;
  const size_t stride = std::max<size_t>(1, traj.states.size() / 50);
  for (size_t k = 0; k < traj.states.size(); k += stride) {
    const State& st = traj.states[k];
    const double e = state_energy(sys, st);
    if (!(e > 1e-300)) continue;
    const VectorXd u_full = prolong_full(sys, st.u);
    double num = 0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellData& cd = cells[c];
      MatrixXd un(d, npc);
      for (int a = 0; a < npc; ++a)
        un.col(a) = u_full.segment(static_cast<Eigen::Index>(mesh.cells[c][a]) * d, d);
      const MatrixXd ju = un * cd.grad.transpose();
      const MatrixXd mn = ju * qn[c] + un;  // (x-x0).grad(u) + u at the nodes
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b)
          num += cd.mass(a, b) * mn.col(a).dot(mn.col(b));
    }
    out.t.push_back(traj.state_times[k]);
    out.value.push_back(2.0 * num / e);
    out.max_value = std::max(out.max_value, out.value.back());
  }
  return out;
}

NormEquivalenceReport tangential_norm_equivalence(const AnalysisSetup& setup,
                                                  const EvolutionResult& traj) {
  check_setup(setup, false);
  const BoundarySpace& space = *setup.space;
  const int n = space.n_nodes(), dm1 = space.dim() - 1;
  const VectorXd ones = VectorXd::Ones(n), zeros = VectorXd::Zero(n);
  const BoundaryOperators plain = assemble_boundary_operators(
      space, ones, zeros, zeros, 0.0, 0.5, CoefficientFloors{1, 1, 1, false});

  NormEquivalenceReport rep;
  bool first = true;
  for (const State& st : traj.states) {
    BoundaryField z = unpack_field(space, st.z);
    z.z_nu.setZero();
    const TangentialStrainStress ss =
        tangential_strain_stress(space, z, 0.0, 0.5);  // stress = strain
    double l2 = 0, h1 = 0;
    for (int k = 0; k < dm1; ++k) {
      const VectorXd comp = z.z_T.col(k);
      const double m = comp.dot(plain.M_f * comp);
      l2 += m;
      h1 += m + comp.dot(plain.K_LB * comp);
    }
    if (!(h1 > 1e-300)) continue;
    const double ratio = (l2 + ss.energy) / h1;
    if (first) {
      rep.min_ratio = rep.max_ratio = ratio;
      first = false;
    } else {
      rep.min_ratio = std::min(rep.min_ratio, ratio);
      rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    ++rep.samples;
  }
  return rep;
}

BoundaryEnergyReport boundary_energy_report(const AnalysisSetup& setup,
                                            const EvolutionResult& traj) {
  check_setup(setup, false);
  const SystemMatrices& sys = *setup.sys;
  BoundaryEnergyReport rep;
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    rep.t.push_back(traj.state_times[k]);
    rep.inertia.push_back(st.w.dot(sys.S_f * st.w));
    rep.restoring.push_back(st.z.dot(sys.S_h * st.z));
    rep.membrane.push_back(st.z.dot(sys.K_el * st.z));
    rep.bending.push_back(st.z.dot(sys.K_nu * st.z));
  }
  return rep;
}

TradeoffReport boundary_regularity_tradeoff(const AnalysisSetup& setup,
                                            const EvolutionResult& traj, double tau) {
  check_setup(setup, false);
  if (!(tau > 0)) throw ParameterError("tradeoff parameter must be positive");
  require_full_storage(traj);
  const BoundarySpace& space = *setup.space;
  const SystemMatrices& sys = *setup.sys;
  const int n = space.n_nodes();
  const VectorXd ones = VectorXd::Ones(n), zeros = VectorXd::Zero(n);
  const SparseMat s1 = expand_componentwise(
      space, assemble_boundary_operators(space, ones, zeros, zeros, 0.0, 0.5,
                                         CoefficientFloors{1, 1, 1, false})
                 .M_f);

  const auto tw = trapezoid_weights(traj.state_times);
  TradeoffReport rep;
  rep.tau = tau;
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    rep.boundary_integral +=
        tw[k] * (st.z.dot(sys.K_el * st.z) + st.z.dot(s1 * st.z) +
                 st.z.dot(sys.K_nu * st.z));
    rep.energy_integral += tw[k] * state_energy(sys, st);
  }
  rep.e0 = traj.energy.empty() ? 0.0 : traj.energy.front();
  if (rep.e0 > 0)
    rep.c_hat =
        std::max(0.0, tau * (rep.boundary_integral - tau * rep.energy_integral) / rep.e0);
  return rep;
}

}  // namespace elastowave
