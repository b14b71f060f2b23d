#include "elastowave/scenario.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace elastowave {

using Eigen::VectorXd;
using json = nlohmann::ordered_json;

int ScenarioConfig::effective_store_stride() const {
  if (time.store_stride > 0) return time.store_stride;
  return analysis.audit_identities ? 1 : 0;
}

void ScenarioConfig::validate() const {
  if (!(geometry.r_in > 0)) throw ParameterError("r_in must be positive");
  if (!(geometry.r_out > geometry.r_in)) throw ParameterError("r_out must exceed r_in");
  if (!(geometry.h > 0)) throw ParameterError("mesh size h must be positive");
  if (!(geometry.delta > 0)) throw ParameterError("delta must be positive");
  if (geometry.x0.size() != 0 && geometry.x0.size() != dim())
    throw ParameterError("x0 must have one coordinate per dimension");
  material.validate();
  if (!(damping.a0 > 0)) throw AssumptionError("damping floor a0 must be positive");
  if (!(damping.eps > 0)) throw ParameterError("collar width eps must be positive");
  if (!(boundary.f > 0)) throw AssumptionError("boundary coefficient f must be positive");
  if (!(boundary.g > 0)) throw AssumptionError("boundary coefficient g must be positive");
  if (!(boundary.h > 0)) throw AssumptionError("boundary coefficient h must be positive");
  if (!(time.dt > 0)) throw ParameterError("dt must be positive");
  if (!(time.T > 0)) throw ParameterError("T must be positive");
  if (time.store_stride < 0) throw ParameterError("store_stride must be >= 0");
  if (!(analysis.tau > 0)) throw ParameterError("tradeoff weight tau must be positive");
  if (!(initial.amplitude > 0)) throw ParameterError("initial amplitude must be positive");
  if (output_dir.empty()) throw ParameterError("output_dir must be non-empty");
}

namespace {

[[noreturn]] void bad_key(const std::string& where, const std::string& key) {
  throw ParameterError("unknown config key \"" + key + "\" in " + where);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParameterError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) bad_key(where, item.key());
  }
}

double jnum(const json& obj, const char* key, double dflt) {
  if (!obj.contains(key)) return dflt;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParameterError(std::string("config key \"") + key + "\" must be a number");
  return v.get<double>();
}

int jint(const json& obj, const char* key, int dflt) {
  if (!obj.contains(key)) return dflt;
  const auto& v = obj.at(key);
  if (!v.is_number_integer())
    throw ParameterError(std::string("config key \"") + key + "\" must be an integer");
  return v.get<int>();
}

bool jbool(const json& obj, const char* key, bool dflt) {
  if (!obj.contains(key)) return dflt;
  const auto& v = obj.at(key);
  if (!v.is_boolean())
    throw ParameterError(std::string("config key \"") + key + "\" must be a boolean");
  return v.get<bool>();
}

std::string jstr(const json& obj, const char* key, const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  const auto& v = obj.at(key);
  if (!v.is_string())
    throw ParameterError(std::string("config key \"") + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace

ScenarioConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"geometry", "material", "damping", "boundary", "time", "analysis",
              "initial", "output_dir"});

  ScenarioConfig cfg;
  if (root.contains("geometry")) {
    const json& g = root.at("geometry");
    check_keys(g, "geometry", {"kind", "r_in", "r_out", "h", "x0", "delta"});
    const std::string kind = jstr(g, "kind", "annulus");
    if (kind == "annulus")
      cfg.geometry.kind = MeshKind::Annulus;
    else if (kind == "spherical_shell")
      cfg.geometry.kind = MeshKind::SphericalShell;
    else
      throw ParameterError("geometry.kind must be \"annulus\" or \"spherical_shell\"");
    cfg.geometry.r_in = jnum(g, "r_in", cfg.geometry.r_in);
    cfg.geometry.r_out = jnum(g, "r_out", cfg.geometry.r_out);
    cfg.geometry.h = jnum(g, "h", cfg.geometry.h);
    cfg.geometry.delta = jnum(g, "delta", cfg.geometry.delta);
    if (g.contains("x0")) {
      const auto& x = g.at("x0");
      if (!x.is_array()) throw ParameterError("geometry.x0 must be an array");
      cfg.geometry.x0.resize(static_cast<Eigen::Index>(x.size()));
      for (size_t i = 0; i < x.size(); ++i) {
        if (!x[i].is_number()) throw ParameterError("geometry.x0 entries must be numbers");
        cfg.geometry.x0[static_cast<Eigen::Index>(i)] = x[i].get<double>();
      }
    }
  }
  if (root.contains("material")) {
    const json& m = root.at("material");
    check_keys(m, "material", {"lambda", "alpha"});
    cfg.material.lambda = jnum(m, "lambda", cfg.material.lambda);
    cfg.material.alpha = jnum(m, "alpha", cfg.material.alpha);
  }
  if (root.contains("damping")) {
    const json& d = root.at("damping");
    check_keys(d, "damping", {"a0", "eps", "profile"});
    cfg.damping.a0 = jnum(d, "a0", cfg.damping.a0);
    cfg.damping.eps = jnum(d, "eps", cfg.damping.eps);
    const std::string profile = jstr(d, "profile", "constant");
    if (profile == "constant")
      cfg.damping.profile = DampingProfile::Constant;
    else if (profile == "ramp")
      cfg.damping.profile = DampingProfile::Ramp;
    else
      throw ParameterError("damping.profile must be \"constant\" or \"ramp\"");
  }
  if (root.contains("boundary")) {
    const json& b = root.at("boundary");
    check_keys(b, "boundary", {"f", "g", "h"});
    cfg.boundary.f = jnum(b, "f", cfg.boundary.f);
    cfg.boundary.g = jnum(b, "g", cfg.boundary.g);
    cfg.boundary.h = jnum(b, "h", cfg.boundary.h);
  }
  if (root.contains("time")) {
    const json& t = root.at("time");
    check_keys(t, "time", {"dt", "T", "store_stride"});
    cfg.time.dt = jnum(t, "dt", cfg.time.dt);
    cfg.time.T = jnum(t, "T", cfg.time.T);
    cfg.time.store_stride = jint(t, "store_stride", cfg.time.store_stride);
  }
  if (root.contains("analysis")) {
    const json& a = root.at("analysis");
    check_keys(a, "analysis", {"audit_identities", "spectrum", "poincare", "tau"});
    cfg.analysis.audit_identities = jbool(a, "audit_identities", cfg.analysis.audit_identities);
    cfg.analysis.spectrum = jbool(a, "spectrum", cfg.analysis.spectrum);
    cfg.analysis.poincare = jbool(a, "poincare", cfg.analysis.poincare);
    cfg.analysis.tau = jnum(a, "tau", cfg.analysis.tau);
  }
  if (root.contains("initial")) {
    const json& i = root.at("initial");
    check_keys(i, "initial", {"amplitude"});
    cfg.initial.amplitude = jnum(i, "amplitude", cfg.initial.amplitude);
  }
  cfg.output_dir = jstr(root, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

AnalysisSetup ScenarioSystem::setup() const {
  AnalysisSetup s;
  s.mesh = &mesh;
  s.frames = &frames;
  s.space = space.get();
  s.sys = &sys;
  s.region = &region;
  s.material = cfg.material;
  s.f = f;
  s.g = g;
  s.h = h;
  return s;
}

State radial_bump_state(const ScenarioSystem& ss, double amplitude) {
  const Mesh& mesh = ss.mesh;
  const double r_in = ss.cfg.geometry.r_in, r_out = ss.cfg.geometry.r_out;
  VectorXd full = VectorXd::Zero(static_cast<Eigen::Index>(mesh.n_vertices()) * mesh.dim);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const VectorXd p = mesh.vertex(v) - mesh.x0;
    const double r = p.norm();
    const double s = std::sin(std::numbers::pi * (r - r_in) / (r_out - r_in));
    full.segment(static_cast<Eigen::Index>(v) * mesh.dim, mesh.dim) =
        (amplitude * s * s / r) * p;
  }
  State st = zero_state(ss.sys);
  st.u = restrict_free(ss.sys, full);
  return st;
}

std::unique_ptr<ScenarioSystem> build_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  auto ss = std::make_unique<ScenarioSystem>();
  ss->cfg = cfg;
  ss->mesh = build_mesh(cfg.geometry.kind, cfg.geometry.r_in, cfg.geometry.r_out,
                        cfg.geometry.h);
  const VectorXd x0 = cfg.geometry.x0.size() ? cfg.geometry.x0
                                             : VectorXd::Zero(ss->mesh.dim);
  classify_boundary(ss->mesh, x0, cfg.geometry.delta);
  ss->frames = compute_boundary_frames(ss->mesh);
  ss->region = build_region_fields(ss->mesh, ss->frames, cfg.damping.eps, cfg.damping.a0,
                                   cfg.damping.profile);
  ss->space = std::make_unique<BoundarySpace>(ss->mesh, ss->frames);
  const int n = ss->space->n_nodes();
  ss->f = VectorXd::Constant(n, cfg.boundary.f);
  ss->g = VectorXd::Constant(n, cfg.boundary.g);
  ss->h = VectorXd::Constant(n, cfg.boundary.h);
  const CoefficientFloors floors{cfg.boundary.f, cfg.boundary.g, cfg.boundary.h, true};
  ss->sys = assemble_system(ss->mesh, *ss->space, ss->region, cfg.material, ss->f, ss->g,
                            ss->h, floors);
  ss->initial = radial_bump_state(*ss, cfg.initial.amplitude);
  return ss;
}

namespace {

void apply_run_options(const RunOptions& opt) {
  int n = 0;
  if (opt.deterministic) {
    n = 1;
  } else if (const char* env = std::getenv("ELASTOWAVE_THREADS")) {
    n = std::atoi(env);
  }
  if (n > 0) Eigen::setNbThreads(n);
}

std::string opath(const ScenarioConfig& cfg, const std::string& name) {
  return cfg.output_dir + "/" + name;
}

void ensure_output_dir(const ScenarioConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw ParameterError("cannot create output directory " + cfg.output_dir);
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write " + path);
  out << j.dump(2) << '\n';
}

IntegrateOptions integrate_options(const ScenarioConfig& cfg) {
  IntegrateOptions iopt;
  iopt.dt = cfg.time.dt;
  iopt.n_steps = static_cast<int>(std::llround(cfg.time.T / cfg.time.dt));
  if (iopt.n_steps < 1) throw ParameterError("time horizon shorter than one step");
  iopt.store_stride = cfg.effective_store_stride();
  return iopt;
}

json config_json(const ScenarioConfig& cfg) {
  return json{
      {"geometry",
       {{"kind", cfg.geometry.kind == MeshKind::Annulus ? "annulus" : "spherical_shell"},
        {"r_in", cfg.geometry.r_in},
        {"r_out", cfg.geometry.r_out},
        {"h", cfg.geometry.h},
        {"delta", cfg.geometry.delta}}},
      {"material", {{"lambda", cfg.material.lambda}, {"alpha", cfg.material.alpha}}},
      {"damping",
       {{"a0", cfg.damping.a0},
        {"eps", cfg.damping.eps},
        {"profile",
         cfg.damping.profile == DampingProfile::Constant ? "constant" : "ramp"}}},
      {"boundary", {{"f", cfg.boundary.f}, {"g", cfg.boundary.g}, {"h", cfg.boundary.h}}},
      {"time",
       {{"dt", cfg.time.dt},
        {"T", cfg.time.T},
        {"store_stride", cfg.effective_store_stride()}}},
      {"initial", {{"amplitude", cfg.initial.amplitude}}},
  };
}

json mesh_json(const ScenarioSystem& ss) {
  int ng0 = 0, ng1 = 0;
  for (const auto& bf : ss.mesh.boundary_facets)
    (bf.label == BoundaryLabel::Gamma0 ? ng0 : ng1) += 1;
  return json{{"h_max", ss.mesh.max_diameter()},
              {"n_vertices", ss.mesh.n_vertices()},
              {"n_cells", ss.mesh.n_cells()},
              {"n_gamma0_facets", ng0},
              {"n_gamma1_facets", ng1},
              {"n_free_dofs", ss.sys.n_free},
              {"n_boundary_nodes", ss.space->n_nodes()}};
}

json assumptions_json(const ScenarioSystem& ss) {
  const Mesh& mesh = ss.mesh;
  double g0_min = std::numeric_limits<double>::infinity();
  double g1_max = -std::numeric_limits<double>::infinity();
  for (int fct = 0; fct < mesh.n_boundary_facets(); ++fct) {
    const double s =
        (mesh.facet_centroid(fct) - mesh.x0).dot(mesh.facet_unit_normal(fct));
    if (mesh.boundary_facets[fct].label == BoundaryLabel::Gamma0)
      g0_min = std::min(g0_min, s);
    else
      g1_max = std::max(g1_max, s);
  }
  const double support = ss.cfg.damping.profile == DampingProfile::Ramp
                             ? 1.5 * ss.cfg.damping.eps
                             : ss.cfg.damping.eps;
  return json{
      {"damping_floor_a0", ss.cfg.damping.a0},
      {"collar_eps", ss.cfg.damping.eps},
      {"collar_support", support},
      {"gamma_gap", ss.region.gamma_gap},
      {"collar_clear_of_acoustic_boundary", support < ss.region.gamma_gap},
      {"boundary_floors", {{"f0", ss.cfg.boundary.f}, {"g0", ss.cfg.boundary.g},
                           {"h0", ss.cfg.boundary.h}}},
      {"delta", ss.cfg.geometry.delta},
      {"clamped_margin_min", g0_min},
      {"acoustic_margin_max", g1_max},
      {"partition_ok", g0_min >= ss.cfg.geometry.delta && g1_max <= 0},
      {"observation_radius", ss.region.R},
  };
}

json fit_json(const DecayFit& fit) {
  json j{{"accepted", fit.accepted}};
  if (!fit.accepted) {
    j["reason"] = fit.reason;
    return j;
  }
  j["K1"] = fit.K1;
  j["K2"] = fit.K2;
  j["rate"] = 1.0 / fit.K2;
  j["correlation"] = fit.correlation;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["window_start"] = fit.window_start;
  j["window_end"] = fit.window_end;
  j["window_points"] = fit.window_points;
  return j;
}

json report_json(const IdentityReport& rep) {
  json terms = json::object();
  for (const auto& [name, value] : rep.terms) terms[name] = value;
  return json{{"name", rep.name},   {"h", rep.h},         {"lhs", rep.lhs},
              {"terms", terms},     {"residual", rep.residual},
              {"scale", rep.scale}, {"relative_residual",
                                     rep.scale > 0 ? rep.residual / rep.scale : 0.0}};
}

struct AuditOutcome {
  std::vector<IdentityReport> reports;
  double decay_residual = 0;
  double decay_tolerance = 0;
  RatioSeries ratio;
  NormEquivalenceReport equivalence;
  double boundary_split_error = 0;
  double k_field_mismatch = 0;
  TradeoffReport tradeoff;
  std::vector<std::string> failures;
};

void check_region_invariants(const ScenarioSystem& ss, AuditOutcome& out) {
  const RegionFields& r = ss.region;
  const Mesh& mesh = ss.mesh;
  const double eps = r.eps;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const double xi = r.xi[v], d = r.dist_gamma0[v];
    if (xi < 0 || xi > 1) {
      out.failures.push_back("cutoff leaves [0,1] at a node");
      break;
    }
    if (d <= 0.5 * eps * (1 - 1e-10) && xi != 1.0) {
      out.failures.push_back("cutoff below 1 on the inner plateau");
      break;
    }
    if (d >= 0.75 * eps * (1 + 1e-10) && xi != 0.0) {
      out.failures.push_back("cutoff supported outside the collar");
      break;
    }
  }
  for (int c = 0; c < mesh.n_cells(); ++c) {
    if ((r.omega_eps2[c] && !r.omega_eps[c]) || (r.omega_eps[c] && !r.omega[c])) {
      out.failures.push_back("collar masks are not nested");
      break;
    }
    if (r.omega[c] && r.a_cell[c] < r.a0 * (1 - 1e-12)) {
      out.failures.push_back("damping below its floor on the collar");
      break;
    }
    if (r.a_cell[c] < 0) {
      out.failures.push_back("negative damping coefficient");
      break;
    }
  }
  const auto bmask = mesh.boundary_vertex_mask();
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!bmask[v]) continue;
    if (!ss.frames.has_frame(v)) continue;
    const double diff =
        (r.k_field.row(v) - ss.frames.nu.row(ss.frames.local(v))).norm();
    out.k_field_mismatch = std::max(out.k_field_mismatch, diff);
  }
  if (out.k_field_mismatch > 1e-12)
    out.failures.push_back("multiplier field differs from the normal on the boundary");
}

AuditOutcome run_audit_battery(const ScenarioSystem& ss, const EvolutionResult& traj) {
  AuditOutcome out;
  const AnalysisSetup setup = ss.setup();

  out.reports.push_back(audit_radial_flux(setup, traj));
  out.reports.push_back(audit_uniform_virial(setup, traj));
  out.reports.push_back(audit_cutoff_virial(setup, traj));
  out.reports.push_back(audit_normal_flux(setup, traj));
  if (ss.mesh.dim == 2) out.reports.push_back(audit_combined_identity(setup, traj));

  for (const auto& rep : out.reports) {
    double sum = 0;
    for (const auto& [name, value] : rep.terms) sum += value;
    if (sum - rep.lhs != rep.residual)
      out.failures.push_back(rep.name + ": residual bookkeeping broken");
  }

  const double e0 = traj.energy.empty() ? 0.0 : traj.energy.front();
  out.decay_residual = max_decay_identity_residual(traj);
  out.decay_tolerance = 1e-8 * std::max(1.0, e0);
  if (out.decay_residual > out.decay_tolerance)
    out.failures.push_back("energy-dissipation identity residual above tolerance");

  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& st = traj.states[k];
    const double split = st.w.dot(ss.sys.S_f * st.w) + st.z.dot(ss.sys.S_h * st.z) +
                         st.z.dot(ss.sys.K_el * st.z) + st.z.dot(ss.sys.K_nu * st.z);
    const double twice_gamma = 2.0 * traj.energy_boundary[k];
    out.boundary_split_error = std::max(
        out.boundary_split_error, std::abs(split - twice_gamma));
  }
  if (out.boundary_split_error > 1e-10 * std::max(1.0, e0))
    out.failures.push_back("boundary energy split disagrees with the boundary energy");

  out.ratio = multiplier_bound_ratio(setup, traj);
  out.equivalence = tangential_norm_equivalence(setup, traj);
  if (ss.mesh.dim == 2 && out.equivalence.samples > 0 &&
      (std::abs(out.equivalence.min_ratio - 1.0) > 1e-10 ||
       std::abs(out.equivalence.max_ratio - 1.0) > 1e-10))
    out.failures.push_back("planar tangential norm equivalence is not an identity");

  out.tradeoff = boundary_regularity_tradeoff(setup, traj, ss.cfg.analysis.tau);
  check_region_invariants(ss, out);
  return out;
}

json audit_json(const AuditOutcome& out) {
  json reports = json::array();
  for (const auto& rep : out.reports) reports.push_back(report_json(rep));
  json j{
      {"identities", reports},
      {"decay_identity", {{"max_residual", out.decay_residual},
                          {"tolerance", out.decay_tolerance}}},
      {"multiplier_bound", {{"max", out.ratio.max_value},
                            {"samples", static_cast<int>(out.ratio.t.size())}}},
      {"norm_equivalence", {{"min_ratio", out.equivalence.min_ratio},
                            {"max_ratio", out.equivalence.max_ratio},
                            {"samples", out.equivalence.samples}}},
      {"boundary_split_max_error", out.boundary_split_error},
      {"k_field_boundary_mismatch", out.k_field_mismatch},
      {"tradeoff", {{"tau", out.tradeoff.tau},
                    {"boundary_integral", out.tradeoff.boundary_integral},
                    {"e0", out.tradeoff.e0},
                    {"energy_integral", out.tradeoff.energy_integral},
                    {"c_hat", out.tradeoff.c_hat}}},
      {"pass", out.failures.empty()},
      {"failures", out.failures},
  };
  return j;
}

[[noreturn]] void throw_audit(const AuditOutcome& out) {
  std::string msg = "audit failure:";
  for (const auto& f : out.failures) msg += " " + f + ";";
  throw AuditError(msg);
}

}  // namespace

void run_simulate(const ScenarioConfig& cfg, const RunOptions& opt) {
  apply_run_options(opt);
  auto ss = build_scenario(cfg);
  ensure_output_dir(cfg);
  write_mesh(ss->mesh, opath(cfg, "mesh.txt"));
  write_index_map(ss->sys, *ss->space, opath(cfg, "index_map.json"));

  const SemigroupOperator op(ss->sys);
  const EvolutionResult traj = integrate(op, ss->initial, integrate_options(cfg));
  write_energy_trace(traj, opath(cfg, "energy.csv"));

  json summary;
  summary["config"] = config_json(cfg);
  summary["mesh"] = mesh_json(*ss);
  summary["energy"] = {{"initial", traj.energy.front()},
                       {"final", traj.energy.back()},
                       {"dissipated_bulk", traj.diss_a_cum.back()},
                       {"dissipated_boundary", traj.diss_g_cum.back()},
                       {"decay_identity_max_residual", max_decay_identity_residual(traj)}};
  summary["decay_fit"] = fit_json(fit_decay(traj.times, traj.energy));

  if (cfg.analysis.spectrum) {
    const SpectralResult sp = spectral_abscissa(op);
    summary["spectrum"] = {{"abscissa", sp.abscissa},
                           {"dominant", {sp.dominant.real(), sp.dominant.imag()}},
                           {"n_converged", sp.n_converged},
                           {"subspace", sp.subspace}};
  } else {
    summary["spectrum"] = nullptr;
  }
  if (cfg.analysis.poincare) {
    const PoincareResult pc = poincare_constant(ss->sys);
    summary["poincare"] = {{"c_p", pc.c_p},
                           {"c_p_sq", pc.c_p_sq},
                           {"iterations", pc.iterations},
                           {"residual", pc.residual}};
  } else {
    summary["poincare"] = nullptr;
  }

  bool audit_ok = true;
  if (cfg.analysis.audit_identities) {
    const AuditOutcome out = run_audit_battery(*ss, traj);
    write_json_file(audit_json(out), opath(cfg, "audit.json"));
    double max_rel = 0;
    for (const auto& rep : out.reports)
      max_rel = std::max(max_rel,
                         rep.scale > 0 ? std::abs(rep.residual) / rep.scale : 0.0);
    summary["audit"] = {{"max_identity_residual", max_rel},
                        {"pass", out.failures.empty()}};
    audit_ok = out.failures.empty();
    summary["assumptions"] = assumptions_json(*ss);
    write_json_file(summary, opath(cfg, "summary.json"));
    if (!audit_ok) throw_audit(out);
    return;
  }
  summary["audit"] = nullptr;
  summary["assumptions"] = assumptions_json(*ss);
  write_json_file(summary, opath(cfg, "summary.json"));
}

void run_resolvent_check(const ScenarioConfig& cfg, const RunOptions& opt) {
  apply_run_options(opt);
  auto ss = build_scenario(cfg);
  ensure_output_dir(cfg);
  const SemigroupOperator op(ss->sys);

  std::mt19937 rng(20250814u);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto random_state = [&]() {
    State s = zero_state(ss->sys);
    for (auto* blk : {&s.u, &s.v, &s.z, &s.w})
      for (Eigen::Index i = 0; i < blk->size(); ++i) (*blk)[i] = dist(rng);
    return s;
  };

  const int n_samples = 20;
  double max_residual = 0, max_reconstruction = 0;
  double min_coercivity = std::numeric_limits<double>::infinity();
  json samples = json::array();
  for (int i = 0; i < n_samples; ++i) {
    const State k = random_state();
    const State u = op.solve_resolvent(k);
    const State au = op.apply(u);
    State res;
    res.u = u.u + au.u - k.u;
    res.v = u.v + au.v - k.v;
    res.z = u.z + au.z - k.z;
    res.w = u.w + au.w - k.w;
    const double rel =
        std::sqrt(op.h_norm_sq(res)) / std::sqrt(op.h_norm_sq(k));
    const double rec = std::max((u.u - (u.v + k.u)).lpNorm<Eigen::Infinity>(),
                                (u.z - (u.w + k.z)).lpNorm<Eigen::Infinity>());
    const double phi = u.v.dot(ss->sys.M_O * u.v) + u.v.dot(ss->sys.K_O * u.v) +
                       u.v.dot(ss->sys.D_a * u.v) + u.w.dot(ss->sys.S_f * u.w) +
                       u.w.dot(ss->sys.S_g * u.w) + u.w.dot(ss->sys.Z * u.w);
    const double den = u.v.dot(ss->sys.K_O * u.v) + u.w.dot(ss->sys.Z * u.w);
    const double coer = den > 0 ? phi / den : std::numeric_limits<double>::infinity();
    max_residual = std::max(max_residual, rel);
    max_reconstruction = std::max(max_reconstruction, rec);
    min_coercivity = std::min(min_coercivity, coer);
    samples.push_back({{"residual", rel}, {"reconstruction", rec}, {"coercivity", coer}});
  }

  const double coercivity_floor = std::min(1.0, 1.0 / cfg.boundary.h) - 1e-8;
  const bool pass = max_residual <= 1e-10 && max_reconstruction == 0.0 &&
                    min_coercivity >= coercivity_floor;
  json j{{"n_samples", n_samples},
         {"max_residual", max_residual},
         {"residual_tolerance", 1e-10},
         {"max_reconstruction_error", max_reconstruction},
         {"min_coercivity_ratio", min_coercivity},
         {"coercivity_floor", coercivity_floor},
         {"pass", pass},
         {"samples", samples}};
  write_json_file(j, opath(cfg, "resolvent_report.json"));
  if (!pass) throw AuditError("resolvent solvability check failed");
}

void run_spectrum(const ScenarioConfig& cfg, const RunOptions& opt) {
  apply_run_options(opt);
  auto ss = build_scenario(cfg);
  ensure_output_dir(cfg);
  const SemigroupOperator op(ss->sys);
  const SpectralResult sp = spectral_abscissa(op);
  json j{{"abscissa", sp.abscissa},
         {"dominant", {sp.dominant.real(), sp.dominant.imag()}},
         {"n_converged", sp.n_converged},
         {"subspace", sp.subspace},
         {"state_size", ss->sys.state_size()}};
  write_json_file(j, opath(cfg, "spectrum.json"));
}

void run_audit(const ScenarioConfig& cfg, const RunOptions& opt) {
  apply_run_options(opt);
  ScenarioConfig acfg = cfg;
  acfg.analysis.audit_identities = true;
  if (acfg.time.store_stride > 1)
    throw ParameterError("identity audits need store_stride = 1");
  acfg.time.store_stride = 1;
  auto ss = build_scenario(acfg);
  ensure_output_dir(acfg);
  const SemigroupOperator op(ss->sys);
  const EvolutionResult traj = integrate(op, ss->initial, integrate_options(acfg));
  write_energy_trace(traj, opath(acfg, "energy.csv"));
  const AuditOutcome out = run_audit_battery(*ss, traj);
  write_json_file(audit_json(out), opath(acfg, "audit.json"));
  if (!out.failures.empty()) throw_audit(out);
}

void run_converge(const ScenarioConfig& cfg, int levels, const RunOptions& opt) {
  apply_run_options(opt);
  if (levels < 2) throw ParameterError("convergence study needs at least 2 levels");
  ensure_output_dir(cfg);

  struct LevelRow {
    double h = 0;
    int n_vertices = 0;
    double c_p = 0;
    double rate = std::numeric_limits<double>::quiet_NaN();
    std::vector<IdentityReport> reports;
  };
  std::vector<LevelRow> rows;
  for (int level = 0; level < levels; ++level) {
    ScenarioConfig lcfg = cfg;
    lcfg.geometry.h = cfg.geometry.h / static_cast<double>(1 << level);
    lcfg.analysis.audit_identities = true;
    lcfg.time.store_stride = 1;
    auto ss = build_scenario(lcfg);
    const SemigroupOperator op(ss->sys);
    const EvolutionResult traj = integrate(op, ss->initial, integrate_options(lcfg));
    AuditOutcome out = run_audit_battery(*ss, traj);
    if (!out.failures.empty()) throw_audit(out);
    LevelRow row;
    row.h = ss->mesh.max_diameter();
    row.n_vertices = ss->mesh.n_vertices();
    row.c_p = poincare_constant(ss->sys).c_p;
    const DecayFit fit = fit_decay(traj.times, traj.energy);
    if (fit.accepted) row.rate = 1.0 / fit.K2;
    row.reports = std::move(out.reports);
    rows.push_back(std::move(row));
  }

  std::ofstream csv(opath(cfg, "converge.csv"));
  if (!csv) throw ParameterError("cannot write convergence table");
  csv << "level,h,n_vertices,c_p,decay_rate";
  for (const auto& rep : rows[0].reports) csv << ",res_" << rep.name;
  csv << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    csv << ',' << buf;
  };
  for (size_t l = 0; l < rows.size(); ++l) {
    csv << l;
    put(rows[l].h);
    csv << ',' << rows[l].n_vertices;
    put(rows[l].c_p);
    put(rows[l].rate);
    for (const auto& rep : rows[l].reports) put(rep.residual);
    csv << '\n';
  }
  csv.close();

  json orders = json::object();
  for (size_t q = 0; q < rows[0].reports.size(); ++q) {
    json seq = json::array();
    for (size_t l = 0; l + 1 < rows.size(); ++l)
      seq.push_back(identity_convergence_rate(rows[l].reports[q], rows[l + 1].reports[q]));
    orders[rows[0].reports[q].name] = seq;
  }
  bool cp_monotone = true;
  json cps = json::array(), rates = json::array(), hs = json::array();
  for (size_t l = 0; l < rows.size(); ++l) {
    cps.push_back(rows[l].c_p);
    rates.push_back(rows[l].rate);
    hs.push_back(rows[l].h);
    if (l > 0 && rows[l].c_p < rows[l - 1].c_p - 1e-10) cp_monotone = false;
  }
  write_json_file(json{{"levels", levels},
                       {"h", hs},
                       {"c_p", cps},
                       {"c_p_monotone_increasing", cp_monotone},
                       {"decay_rates", rates},
                       {"residual_orders", orders}},
                  opath(cfg, "converge.json"));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const GeometryError*>(&e)) return 3;
  if (dynamic_cast<const SolverError*>(&e)) return 4;
  if (dynamic_cast<const AuditError*>(&e)) return 5;
  if (dynamic_cast<const Error*>(&e)) return 2;
  return 4;
}

}  // namespace elastowave
