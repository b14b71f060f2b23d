#include "elastowave/evolution.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "elastowave/errors.hpp"

namespace elastowave {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

State zero_state(const SystemMatrices& sys) {
  State s;
  s.u = VectorXd::Zero(sys.n_free);
  s.v = VectorXd::Zero(sys.n_free);
  s.z = VectorXd::Zero(sys.n_bdofs());
  s.w = VectorXd::Zero(sys.n_bdofs());
  return s;
}

Eigen::VectorXd pack_state(const State& s) {
  VectorXd x(s.u.size() + s.v.size() + s.z.size() + s.w.size());
  x << s.u, s.v, s.z, s.w;
  return x;
}

State unpack_state(const SystemMatrices& sys, const Eigen::VectorXd& x) {
  const int nf = sys.n_free, nb = sys.n_bdofs();
  if (x.size() != 2 * nf + 2 * nb) throw ParameterError("unpack_state: wrong size");
  State s;
  s.u = x.segment(0, nf);
  s.v = x.segment(nf, nf);
  s.z = x.segment(2 * nf, nb);
  s.w = x.segment(2 * nf + nb, nb);
  return s;
}

namespace {

void write_block(std::ofstream& out, const char* name, const VectorXd& x) {
  out << name << ' ' << x.size() << '\n';
  char buf[64];
  for (int i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", x[i]);
    out << buf << '\n';
  }
}

VectorXd read_block(std::ifstream& in, const std::string& path, const char* name,
                    int expected) {
  std::string tag;
  long n = -1;
  if (!(in >> tag >> n) || tag != name || n != expected)
    throw ParameterError(path + ": expected block '" + name + "' with " +
                         std::to_string(expected) + " entries");
  VectorXd x(expected);
  for (int i = 0; i < expected; ++i) {
    if (!(in >> x[i]) || !std::isfinite(x[i]))
      throw ParameterError(path + ": bad value in block '" + std::string(name) + "'");
  }
  return x;
}

}  // namespace

void write_state(const State& s, const BoundarySpace& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open state file for writing: " + path);
  const int n = space.n_nodes(), d = space.dim();
  if (s.z.size() != n * d || s.w.size() != n * d)
    throw ParameterError("state does not match the boundary space");
  const BoundaryField z = unpack_field(space, s.z), w = unpack_field(space, s.w);
  write_block(out, "u", s.u);
  write_block(out, "v", s.v);
  VectorXd zt(n * (d - 1)), wt(n * (d - 1));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d - 1; ++k) {
      zt[i * (d - 1) + k] = z.z_T(i, k);
      wt[i * (d - 1) + k] = w.z_T(i, k);
    }
  write_block(out, "z_T", zt);
  write_block(out, "z_nu", z.z_nu);
  write_block(out, "w_T", wt);
  write_block(out, "w_nu", w.z_nu);
}

State read_state(const SystemMatrices& sys, const BoundarySpace& space,
                 const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open state file: " + path);
  const int n = space.n_nodes(), d = space.dim();
  State s;
  s.u = read_block(in, path, "u", sys.n_free);
  s.v = read_block(in, path, "v", sys.n_free);
  const VectorXd zt = read_block(in, path, "z_T", n * (d - 1));
  const VectorXd znu = read_block(in, path, "z_nu", n);
  const VectorXd wt = read_block(in, path, "w_T", n * (d - 1));
  const VectorXd wnu = read_block(in, path, "w_nu", n);
  BoundaryField z, w;
  z.z_T.resize(n, d - 1);
  w.z_T.resize(n, d - 1);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d - 1; ++k) {
      z.z_T(i, k) = zt[i * (d - 1) + k];
      w.z_T(i, k) = wt[i * (d - 1) + k];
    }
  z.z_nu = znu;
  w.z_nu = wnu;
  s.z = pack_field(space, z);
  s.w = pack_field(space, w);
  return s;
}

SemigroupOperator::SemigroupOperator(const SystemMatrices& sys) : sys_(&sys) {
  mass_bulk_.compute(sys.M_O);
  if (mass_bulk_.info() != Eigen::Success)
    throw SolverError("bulk mass factorization failed");
  mass_bnd_.compute(sys.S_f);
  if (mass_bnd_.info() != Eigen::Success)
    throw SolverError("boundary mass factorization failed");

  // (I + A) in packed midlevel form after eliminating u = v + k_u, z = w + k_z:
  // [[M_O + K_O + D_a, -B^T], [B, S_f + S_g + Z]].
  const int nf = sys.n_free, nb = sys.n_bdofs();
  std::vector<Triplet> t;
  auto put = [&t](const SparseMat& m, int r0, int c0, double scale) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMat::InnerIterator it(m, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()) + r0, static_cast<int>(it.col()) + c0,
                       scale * it.value());
  };
  const SparseMat diag_bulk = sys.M_O + sys.K_O + sys.D_a;
  const SparseMat diag_bnd = sys.S_f + sys.S_g + sys.Z;
  put(diag_bulk, 0, 0, 1.0);
  put(diag_bnd, nf, nf, 1.0);
  const SparseMat Bt = SparseMat(sys.B.transpose());
  put(Bt, 0, nf, -1.0);
  put(sys.B, nf, 0, 1.0);
  SparseMat lhs(nf + nb, nf + nb);
  lhs.setFromTriplets(t.begin(), t.end());
  lhs.makeCompressed();
  resolvent_ = std::make_unique<Eigen::SparseLU<SparseMat>>();
  resolvent_->compute(lhs);
  if (resolvent_->info() != Eigen::Success)
    throw SolverError("resolvent factorization failed");
}

State SemigroupOperator::apply(const State& s) const {
  const auto& sys = *sys_;
  State a;
  a.u = -s.v;
  a.v = mass_bulk_.solve(sys.K_O * s.u + sys.D_a * s.v - sys.B.transpose() * s.w);
  a.z = -s.w;
  a.w = mass_bnd_.solve(sys.Z * s.z + sys.S_g * s.w + sys.B * s.v);
  return a;
}

double SemigroupOperator::inner(const State& a, const State& b) const {
  const auto& sys = *sys_;
  return a.u.dot(sys.K_O * b.u) + a.v.dot(sys.M_O * b.v) + a.z.dot(sys.Z * b.z) +
         a.w.dot(sys.S_f * b.w);
}

double SemigroupOperator::energy_bulk(const State& s) const {
  return 0.5 * (s.u.dot(sys_->K_O * s.u) + s.v.dot(sys_->M_O * s.v));
}

double SemigroupOperator::energy_boundary(const State& s) const {
  return 0.5 * (s.z.dot(sys_->Z * s.z) + s.w.dot(sys_->S_f * s.w));
}

State SemigroupOperator::solve_resolvent(const State& k) const {
  const auto& sys = *sys_;
  const int nf = sys.n_free, nb = sys.n_bdofs();
  VectorXd rhs(nf + nb);
  rhs.head(nf) = sys.M_O * k.v - sys.K_O * k.u;
  rhs.tail(nb) = sys.S_f * k.w - sys.Z * k.z;
  const VectorXd sol = resolvent_->solve(rhs);
  if (resolvent_->info() != Eigen::Success) throw SolverError("resolvent solve failed");
  State out;
  out.v = sol.head(nf);
  out.w = sol.tail(nb);
  out.u = out.v + k.u;
  out.z = out.w + k.z;
  return out;
}

EvolutionResult integrate(const SemigroupOperator& op, const State& initial,
                          const IntegrateOptions& opt) {
  const auto& sys = op.sys();
  if (opt.n_steps < 0) throw ParameterError("negative step count");
  if (opt.dt == 0.0 && opt.n_steps > 0) throw ParameterError("time step must be nonzero");
  const double dt = opt.dt;
  const int nf = sys.n_free, nb = sys.n_bdofs();

  // Midpoint system: unknowns (v_m, w_m).
  std::vector<Triplet> t;
  auto put = [&t](const SparseMat& m, int r0, int c0, double scale) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMat::InnerIterator it(m, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()) + r0, static_cast<int>(it.col()) + c0,
                       scale * it.value());
  };
  put(sys.M_O, 0, 0, 2.0);
  put(sys.K_O, 0, 0, dt * dt / 2.0);
  put(sys.D_a, 0, 0, dt);
  const SparseMat Bt = SparseMat(sys.B.transpose());
  put(Bt, 0, nf, -dt);
  put(sys.B, nf, 0, dt);
  put(sys.S_f, nf, nf, 2.0);
  put(sys.Z, nf, nf, dt * dt / 2.0);
  put(sys.S_g, nf, nf, dt);
  SparseMat step(nf + nb, nf + nb);
  step.setFromTriplets(t.begin(), t.end());
  step.makeCompressed();
  Eigen::SparseLU<SparseMat> lu;
  if (opt.n_steps > 0) {
    lu.compute(step);
    if (lu.info() != Eigen::Success) throw SolverError("time step factorization failed");
  }

  EvolutionResult res;
  State s = initial;
  double diss_a = 0.0, diss_g = 0.0;
  auto record = [&](int n) {
    res.times.push_back(n * dt);
    res.energy.push_back(op.energy(s));
    res.energy_bulk.push_back(op.energy_bulk(s));
    res.energy_boundary.push_back(op.energy_boundary(s));
    res.diss_a_cum.push_back(diss_a);
    res.diss_g_cum.push_back(diss_g);
  };
  auto store = [&](int n) {
    if (opt.store_stride > 0 && (n % opt.store_stride == 0 || n == opt.n_steps)) {
      res.states.push_back(s);
      res.state_times.push_back(n * dt);
    }
  };
  record(0);
  store(0);

  VectorXd rhs(nf + nb);
  for (int n = 0; n < opt.n_steps; ++n) {
    rhs.head(nf) = 2.0 * (sys.M_O * s.v) - dt * (sys.K_O * s.u);
    rhs.tail(nb) = 2.0 * (sys.S_f * s.w) - dt * (sys.Z * s.z);
    const VectorXd mid = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("time step solve failed");
    const VectorXd vm = mid.head(nf), wm = mid.tail(nb);
    s.u += dt * vm;
    s.v = 2.0 * vm - s.v;
    s.z += dt * wm;
    s.w = 2.0 * wm - s.w;
    diss_a += dt * vm.dot(sys.D_a * vm);
    diss_g += dt * wm.dot(sys.S_g * wm);
    record(n + 1);
    if (n + 1 < opt.n_steps) store(n + 1);
  }
  if (opt.n_steps > 0) store(opt.n_steps);
  return res;
}

Eigen::MatrixXd dense_operator_matrix(const SemigroupOperator& op) {
  const auto& sys = op.sys();
  const int n = sys.state_size();
  MatrixXd m(n, n);
  for (int j = 0; j < n; ++j) {
    VectorXd e = VectorXd::Zero(n);
    e[j] = 1.0;
    m.col(j) = pack_state(op.apply(unpack_state(sys, e)));
  }
  return m;
}

SpectralResult spectral_abscissa(const SemigroupOperator& op, const SpectralOptions& opt) {
  const auto& sys = op.sys();
  const int n = sys.state_size();
  if (n <= 0) throw ParameterError("empty system");
  const int m = std::min(opt.subspace, n);
  if (m < 2) throw ParameterError("subspace too small");

  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  VectorXd q(n);
  for (int i = 0; i < n; ++i) q[i] = dist(rng);
  q.normalize();

  MatrixXd V(n, m + 1);
  MatrixXd H = MatrixXd::Zero(m + 1, m);
  V.col(0) = q;
  int steps = 0;
  bool exhausted = false;
  for (int j = 0; j < m; ++j) {
    VectorXd wv = pack_state(op.solve_resolvent(unpack_state(sys, V.col(j))));
    for (int i = 0; i <= j; ++i) {  // modified Gram-Schmidt, one re-pass
      H(i, j) = V.col(i).dot(wv);
      wv -= H(i, j) * V.col(i);
    }
    for (int i = 0; i <= j; ++i) {
      const double c = V.col(i).dot(wv);
      H(i, j) += c;
      wv -= c * V.col(i);
    }
    H(j + 1, j) = wv.norm();
    steps = j + 1;
    if (H(j + 1, j) < 1e-12) {
      exhausted = true;
      break;
    }
    V.col(j + 1) = wv / H(j + 1, j);
  }

  const MatrixXd Hm = H.topLeftCorner(steps, steps);
  const double beta = H(steps, steps - 1);
  Eigen::EigenSolver<MatrixXd> es(Hm);
  if (es.info() != Eigen::Success) throw SolverError("Ritz eigenproblem failed");

  SpectralResult out;
  out.subspace = steps;
  bool found = false;
  for (int k = 0; k < steps; ++k) {
    const std::complex<double> theta = es.eigenvalues()[k];
    if (std::abs(theta) < 1e-12) continue;
    const double resid = exhausted ? 0.0 : beta * std::abs(es.eigenvectors()(steps - 1, k));
    if (resid > opt.tol * std::abs(theta)) continue;
    ++out.n_converged;
    const std::complex<double> mu = 1.0 - 1.0 / theta;  // generator eigenvalue
    if (!found || mu.real() > out.abscissa) {
      out.abscissa = mu.real();
      out.dominant = mu;
      found = true;
    }
  }
  if (!found) throw SolverError("no converged spectral estimates; enlarge the subspace");
  return out;
}

}  // namespace elastowave
