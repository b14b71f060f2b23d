#pragma once

#include <string>
#include <utility>
#include <vector>

#include "elastowave/evolution.hpp"
#include "elastowave/region_fields.hpp"

namespace elastowave {

// Everything the post-processing passes need about one configured system.
struct AnalysisSetup {
  const Mesh* mesh = nullptr;
  const BoundaryFrames* frames = nullptr;
  const BoundarySpace* space = nullptr;
  const SystemMatrices* sys = nullptr;
  const RegionFields* region = nullptr;
  MaterialParams material;
  Eigen::VectorXd f, g, h;  // nodal boundary coefficients on the acoustic part
};

// CSV with columns exactly:
// t,E_total,E_omega,E_gamma,diss_a_cum,diss_g_cum,identity_residual
void write_energy_trace(const EvolutionResult& traj, const std::string& path);

// E(s2) - E(s1) plus the dissipation accumulated between the two on-grid
// times; zero up to solver tolerance for the midpoint scheme.
double decay_identity_residual(const EvolutionResult& traj, double s1, double s2);
// Max of the above over all grid pairs.
double max_decay_identity_residual(const EvolutionResult& traj);

struct DecayFit {
  bool accepted = false;
  std::string reason;      // set when not accepted
  double K1 = 0, K2 = 0;   // E(t) <= K1 exp(-t/K2) on the fit window
  double correlation = 0;  // |corr| of (t, log E) on the window
  double slope = 0, intercept = 0;
  double window_start = 0, window_end = 0;
  int window_points = 0;
};

// Longest suffix window whose log-energy is linear with correlation >= 0.99;
// K2 = -1/slope, K1 = exp(intercept + max window residual) clamped to >= 1 so
// the envelope covers the window pointwise.
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& energy);

struct PoincareResult {
  double c_p = 0, c_p_sq = 0;
  int iterations = 0;
  double residual = 0;  // ||T x - theta K x|| / ||T x|| at the returned pair
};

// Largest theta of the pencil (acoustic trace mass) x = theta K_O x by power
// iteration on K_O^{-1} T; c_p_sq = theta gives the optimal constant in
// int_{Gamma1} |u|^2 <= c_p_sq * (elastic energy form).
PoincareResult poincare_constant(const SystemMatrices& sys, double tol = 1e-13,
                                 int max_iterations = 20000);

struct IdentityReport {
  std::string name;
  std::vector<std::pair<std::string, double>> terms;
  double lhs = 0;       // terms should sum to lhs (zero for pure identities)
  double residual = 0;  // sum(terms) - lhs
  double scale = 0;     // max magnitude among lhs and terms
  double h = 0;         // mesh size the trajectory was computed on
};

// Flux-multiplier identity: pairing the bulk equation with 2 q.grad(u) for a
// Lipschitz vector field q (given nodally, P1-interpolated).
IdentityReport audit_flux_identity(const AnalysisSetup& setup, const EvolutionResult& traj,
                                   const Eigen::MatrixXd& q_nodal, const std::string& name);
// Virial identity: pairing the bulk equation with 2 psi u for a scalar field
// psi (given nodally, P1-interpolated).
IdentityReport audit_virial_identity(const AnalysisSetup& setup,
                                     const EvolutionResult& traj,
                                     const Eigen::VectorXd& psi_nodal,
                                     const std::string& name);

IdentityReport audit_radial_flux(const AnalysisSetup& setup, const EvolutionResult& traj);
IdentityReport audit_uniform_virial(const AnalysisSetup& setup, const EvolutionResult& traj);
IdentityReport audit_cutoff_virial(const AnalysisSetup& setup, const EvolutionResult& traj);
IdentityReport audit_normal_flux(const AnalysisSetup& setup, const EvolutionResult& traj);

// Full planar energy balance: 2 int_0^T E dt equals the bulk flux/virial
// boundary terms plus the two tangential-multiplier groups of the acoustic
// boundary system plus the boundary energy add-ins.  d = 2 only.
IdentityReport audit_combined_identity(const AnalysisSetup& setup,
                                       const EvolutionResult& traj);

// Empirical order from two refinements: log(r_c/r_f) / log(h_c/h_f).
double identity_convergence_rate(const IdentityReport& coarse, const IdentityReport& fine);

struct RatioSeries {
  std::vector<double> t, value;
  double max_value = 0;
};

// 2 int ((x-x0).grad(u) + u)^2 dx / E(t) on sampled stored states; the max is
// the empirical constant of the corresponding a-priori bound.
RatioSeries multiplier_bound_ratio(const AnalysisSetup& setup, const EvolutionResult& traj);

struct NormEquivalenceReport {
  double min_ratio = 1, max_ratio = 1;
  int samples = 0;
};

// Ratio of (L2 + membrane-strain energy of the tangential part) to the
// componentwise H1 norm, sampled along the trajectory; the two coincide in
// d = 2.
NormEquivalenceReport tangential_norm_equivalence(const AnalysisSetup& setup,
                                                  const EvolutionResult& traj);

struct BoundaryEnergyReport {
  std::vector<double> t, inertia, restoring, membrane, bending;  // sum = 2 E_gamma
};

BoundaryEnergyReport boundary_energy_report(const AnalysisSetup& setup,
                                            const EvolutionResult& traj);

struct TradeoffReport {
  double tau = 0;
  double boundary_integral = 0;  // int_0^T (membrane + L2 + bending) dt
  double e0 = 0;
  double energy_integral = 0;  // int_0^T E dt
  double c_hat = 0;            // fitted: tau*(boundary_integral - tau*energy_integral)/e0
};

TradeoffReport boundary_regularity_tradeoff(const AnalysisSetup& setup,
                                            const EvolutionResult& traj, double tau);

}  // namespace elastowave
