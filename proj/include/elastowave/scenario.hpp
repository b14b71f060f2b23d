#pragma once

#include <memory>
#include <string>

#include "elastowave/analysis.hpp"

namespace elastowave {

struct GeometryConfig {
  MeshKind kind = MeshKind::Annulus;
  double r_in = 1.0;
  double r_out = 2.0;
  double h = 0.25;
  Eigen::VectorXd x0;  // empty -> origin
  double delta = 0.25;
};

struct DampingConfig {
  double a0 = 1.0;
  double eps = 0.3;
  DampingProfile profile = DampingProfile::Constant;
};

// Constant acoustic-boundary coefficients; the constants double as their own
// positive floors.
struct BoundaryCoeffConfig {
  double f = 1.0;
  double g = 1.0;
  double h = 1.0;
};

struct TimeConfig {
  double dt = 0.01;
  double T = 10.0;
  int store_stride = 0;  // 0 -> 1 when audits are on, else trace only
};

struct AnalysisToggles {
  bool audit_identities = false;
  bool spectrum = false;
  bool poincare = false;
  double tau = 1.0;  // weight for the boundary-regularity tradeoff report
};

struct InitialConfig {
  double amplitude = 10.0;  // radial bump height
};

struct ScenarioConfig {
  GeometryConfig geometry;
  MaterialParams material;
  DampingConfig damping;
  BoundaryCoeffConfig boundary;
  TimeConfig time;
  AnalysisToggles analysis;
  InitialConfig initial;
  std::string output_dir = "out";

  int dim() const { return geometry.kind == MeshKind::Annulus ? 2 : 3; }
  int effective_store_stride() const;
  void validate() const;  // parameter/assumption errors only
};

// Strict JSON loader: unknown keys, wrong types, or invalid values are
// parameter errors.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig config_from_json_text(const std::string& text);

struct RunOptions {
  bool deterministic = false;
};

// One fully built level: mesh, frames, acoustic space, damping fields,
// system matrices, nodal coefficients, initial state. Heap-only so internal
// pointers stay valid.
struct ScenarioSystem {
  ScenarioConfig cfg;
  Mesh mesh;
  BoundaryFrames frames;
  RegionFields region;
  std::unique_ptr<BoundarySpace> space;
  Eigen::VectorXd f, g, h;
  SystemMatrices sys;
  State initial;

  AnalysisSetup setup() const;
  ScenarioSystem() = default;
  ScenarioSystem(const ScenarioSystem&) = delete;
  ScenarioSystem& operator=(const ScenarioSystem&) = delete;
};

std::unique_ptr<ScenarioSystem> build_scenario(const ScenarioConfig& cfg);

// Smooth compatible start: radial sine-squared bump, zero velocities and
// boundary data.
State radial_bump_state(const ScenarioSystem& ss, double amplitude);

// Subcommand drivers. Artifacts land in cfg.output_dir; failures throw the
// typed errors mapped by exit_code_for.
void run_simulate(const ScenarioConfig& cfg, const RunOptions& opt);
void run_resolvent_check(const ScenarioConfig& cfg, const RunOptions& opt);
void run_spectrum(const ScenarioConfig& cfg, const RunOptions& opt);
void run_audit(const ScenarioConfig& cfg, const RunOptions& opt);
void run_converge(const ScenarioConfig& cfg, int levels, const RunOptions& opt);

// 2 invalid input, 3 geometric violation, 4 solver failure, 5 audit failure.
int exit_code_for(const std::exception& e);

}  // namespace elastowave
