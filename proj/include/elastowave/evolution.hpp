#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "elastowave/assembly.hpp"

namespace elastowave {

// Full state of the first-order system: bulk displacement/velocity on free
// dofs, boundary displacement/velocity in the frame layout.
struct State {
  Eigen::VectorXd u, v, z, w;
};

State zero_state(const SystemMatrices& sys);
Eigen::VectorXd pack_state(const State& s);
State unpack_state(const SystemMatrices& sys, const Eigen::VectorXd& x);

void write_state(const State& s, const BoundarySpace& space, const std::string& path);
State read_state(const SystemMatrices& sys, const BoundarySpace& space,
                 const std::string& path);

// The first-order evolution is U' = -A U.  This wraps the action of A, the
// energy inner product, and a factorization of (I + A).
class SemigroupOperator {
 public:
  explicit SemigroupOperator(const SystemMatrices& sys);

  const SystemMatrices& sys() const { return *sys_; }

  State apply(const State& s) const;  // A s
  double inner(const State& a, const State& b) const;
  double h_norm_sq(const State& s) const { return inner(s, s); }
  double energy(const State& s) const { return 0.5 * h_norm_sq(s); }
  double energy_bulk(const State& s) const;
  double energy_boundary(const State& s) const;

  State solve_resolvent(const State& k) const;  // (I + A) U = k

 private:
  const SystemMatrices* sys_;
  Eigen::SimplicialLLT<SparseMat> mass_bulk_, mass_bnd_;
  std::unique_ptr<Eigen::SparseLU<SparseMat>> resolvent_;
};

struct IntegrateOptions {
  double dt = 0.01;  // may be negative to run the scheme backwards
  int n_steps = 0;
  int store_stride = 0;  // > 0: keep every k-th state (plus the final one)
};

struct EvolutionResult {
  std::vector<double> times;
  std::vector<double> energy;
  std::vector<double> energy_bulk;
  std::vector<double> energy_boundary;
  // Cumulative dissipation integrals; the scheme satisfies
  // E(t_n) + diss_a_cum[n] + diss_g_cum[n] = E(0) exactly.
  std::vector<double> diss_a_cum, diss_g_cum;

  std::vector<State> states;
  std::vector<double> state_times;
};

// Implicit midpoint (Cayley) time stepping; unconditionally stable and
// exactly energy-consistent with the midpoint dissipation increments.
EvolutionResult integrate(const SemigroupOperator& op, const State& initial,
                          const IntegrateOptions& opt);

struct SpectralOptions {
  int subspace = 400;
  double tol = 1e-8;
  unsigned seed = 12345;
};

struct SpectralResult {
  double abscissa = 0.0;               // max real part over verified generator eigenvalues
  std::complex<double> dominant{0, 0};  // eigenvalue attaining the abscissa
  int n_converged = 0;
  int subspace = 0;
};

// Krylov probe of the generator spectrum through (I + A)^{-1}; only Ritz
// values whose Arnoldi residual estimate clears the tolerance are used.
SpectralResult spectral_abscissa(const SemigroupOperator& op,
                                 const SpectralOptions& opt = {});

// Dense matrix of A in packed (u, v, z, w) coordinates; for small systems.
Eigen::MatrixXd dense_operator_matrix(const SemigroupOperator& op);

}  // namespace elastowave
