#pragma once

#include <Eigen/Dense>
#include <vector>

#include "elastowave/boundary_frame.hpp"
#include "elastowave/mesh.hpp"

namespace elastowave {

enum class DampingProfile { Constant, Ramp };

// Damping collar near the clamped boundary part, cutoff and multiplier
// fields. Cell masks use the minimum vertex distance to the clamped part, so
// every cell touching it belongs to all three nested collars.
struct RegionFields {
  double eps = 0.0;
  double a0 = 0.0;
  DampingProfile profile = DampingProfile::Constant;
  Eigen::VectorXd x0;
  double delta = 0.0;

  std::vector<char> omega;       // dist <= eps        (per cell)
  std::vector<char> omega_eps;   // dist <= 3 eps / 4  (per cell)
  std::vector<char> omega_eps2;  // dist <= eps / 2    (per cell)

  Eigen::VectorXd a_cell;        // damping coefficient per cell
  Eigen::VectorXd xi;            // cutoff, per vertex: ramp^2, 1 inside
                                 // omega_eps2, 0 outside omega_eps
  Eigen::MatrixXd k_field;       // per vertex, equals nu on the boundary,
                                 // 0 at depth >= eps
  Eigen::VectorXd dist_gamma0;   // per vertex
  double R = 0.0;                // max |x - x0| over vertices
  double gamma_gap = 0.0;        // distance between the two boundary parts
};

RegionFields build_region_fields(const Mesh& mesh, const BoundaryFrames& frames,
                                 double eps, double a0,
                                 DampingProfile profile = DampingProfile::Constant);

// Distance from a point to the closest listed boundary facet; closest_point
// receives the foot point, facet the minimizing facet index.
double distance_to_facets(const Mesh& mesh, const std::vector<int>& facets,
                          const Eigen::VectorXd& x, Eigen::VectorXd* closest_point = nullptr,
                          int* facet = nullptr);

}  // namespace elastowave
