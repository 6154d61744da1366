#pragma once

#include <vector>

#include "topogen/fea.hpp"
#include "topogen/grid.hpp"
#include "topogen/problem.hpp"

namespace topogen {

// Classic optimality-criteria SIMP. Defaults follow the well-worn 88-line
// lineage: penal 3, filter radius 1.5, move limit 0.2.
struct SimpConfig {
  double penal = 3.0;
  double filter_radius = 1.5;
  double move_limit = 0.2;
  int max_iters = 60;
  double vf_target = 0.4;
  double bisection_tol = 1e-4;

  void validate() const;
};

struct OptimizationTrace {
  std::vector<double> compliances;
  std::vector<double> max_changes;
  DensityField final_density;
};

// Adjoint sensitivity of compliance: -p * x^(p-1) * (E0 - Emin) * ue' k0 ue.
// U must be the equilibrium displacement for `density`.
std::vector<double> compliance_sensitivity(const DensityField& density, const DisplacementField& u,
                                           const SimpConfig& config, const Material& material);

// Density-weighted neighborhood smoothing with weights max(0, radius - dist).
// The max(1e-3, x) guard keeps void elements from blowing up the quotient.
std::vector<double> filter_sensitivities(const std::vector<double>& raw, const DensityField& density,
                                         double radius);

// One optimality-criteria step: x * sqrt(-sens/lambda), clamped to the move
// window and [0,1], with lambda bisected until mean density hits vf_target.
DensityField oc_update(const DensityField& density, const std::vector<double>& sensitivity,
                       const SimpConfig& config);

// Full loop: assemble, solve, sensitivity, filter, oc_update. Stops early
// once the max per-element change drops below 0.01.
OptimizationTrace run_simp(const ProblemSpec& problem, const SimpConfig& config,
                           const DensityField& init, const Material& material = Material{});

// Exactly n_iters optimizer steps from an existing topology, no early stop.
// n_iters = 0 returns the input unchanged.
OptimizationTrace refine(const DensityField& topology, const ProblemSpec& problem, int n_iters,
                         const Material& material = Material{});

}  // namespace topogen
