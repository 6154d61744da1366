#include "topogen/simp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "topogen/errors.hpp"

namespace topogen {
namespace {

// Early-stop threshold on the max per-element density change.
constexpr double kChangeTol = 0.01;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Largest/smallest densities reachable in one step under the move limit.
struct MoveWindow {
  double lo, hi;
};

MoveWindow window(double x, double move) {
  return {std::max(x - move, 0.0), std::min(x + move, 1.0)};
}

// The OC candidate for a given multiplier, before knowing the right lambda.
double oc_candidate(double x, double sens, double lambda, const MoveWindow& w) {
  if (lambda <= 0.0) {
    return w.hi;
  }
  const double pull = std::max(0.0, -sens);
  return std::clamp(x * std::sqrt(pull / lambda), w.lo, w.hi);
}

OptimizationTrace run_loop(const ProblemSpec& problem, const SimpConfig& config,
                           const DensityField& init, const Material& material, bool early_stop) {
  problem.validate();
  config.validate();
  material.validate();
  init.validate();
  if (init.grid.nelx != problem.grid.nelx || init.grid.nely != problem.grid.nely) {
    throw InvalidInputError("initial density grid does not match the problem grid");
  }

  OptimizationTrace trace;
  DensityField x = init;
  DisplacementField u_prev;

  for (int it = 0; it < config.max_iters; ++it) {
    const SparseMatrix k = assemble_stiffness(x, config.penal, material);
    const DisplacementField u = solve_displacement(k, problem.loads, problem.bcs, SolveOptions{},
                                                   u_prev.u.empty() ? nullptr : &u_prev);
    u_prev = u;

    const double c = compliance(u, problem.loads);
    const std::vector<double> raw = compliance_sensitivity(x, u, config, material);
    const std::vector<double> filtered = filter_sensitivities(raw, x, config.filter_radius);
    const DensityField x_new = oc_update(x, filtered, config);

    double change = 0.0;
    for (int e = 0; e < x.grid.n_elements(); ++e) {
      change = std::max(change, std::abs(x_new.values[e] - x.values[e]));
    }

    trace.compliances.push_back(c);
    trace.max_changes.push_back(change);
    x = x_new;

    if (early_stop && change < kChangeTol) {
      break;
    }
  }

  trace.final_density = std::move(x);
  return trace;
}

}  // namespace

void SimpConfig::validate() const {
  if (!(penal >= 1.0)) {
    throw InvalidInputError("penal must be >= 1, got " + std::to_string(penal));
  }
  if (!(filter_radius >= 1.0)) {
    throw InvalidInputError("filter_radius must be >= 1, got " + std::to_string(filter_radius));
  }
  if (!(move_limit > 0.0 && move_limit <= 1.0)) {
    throw InvalidInputError("move_limit must lie in (0, 1], got " + std::to_string(move_limit));
  }
  if (max_iters < 0) {
    throw InvalidInputError("max_iters must be non-negative");
  }
  if (!(vf_target > 0.0 && vf_target < 1.0)) {
    throw InvalidInputError("vf_target must lie in (0, 1), got " + std::to_string(vf_target));
  }
  if (!(bisection_tol > 0.0)) {
    throw InvalidInputError("bisection_tol must be positive");
  }
}

std::vector<double> compliance_sensitivity(const DensityField& density, const DisplacementField& u,
                                           const SimpConfig& config, const Material& material) {
  const Grid& g = density.grid;
  if (static_cast<int>(u.u.size()) != g.n_dofs()) {
    throw InvalidInputError("displacement length does not match the density grid");
  }

  const std::array<double, 64> k0 = element_stiffness(material.poisson);
  const double delta_e = material.young_solid - material.young_void;

  std::vector<double> sens(g.n_elements());
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const int e = g.element_id(ex, ey);
      const std::array<int, 8> dofs = element_dofs(g, ex, ey);

      double quad = 0.0;
      for (int a = 0; a < 8; ++a) {
        double row = 0.0;
        for (int b = 0; b < 8; ++b) {
          row += k0[a * 8 + b] * u.u[dofs[b]];
        }
        quad += u.u[dofs[a]] * row;
      }

      const double x = density.values[e];
      sens[e] = -config.penal * std::pow(x, config.penal - 1.0) * delta_e * quad;
    }
  }
  return sens;
}

std::vector<double> filter_sensitivities(const std::vector<double>& raw, const DensityField& density,
                                         double radius) {
  const Grid& g = density.grid;
  if (static_cast<int>(raw.size()) != g.n_elements()) {
    throw InvalidInputError("sensitivity length does not match the density grid");
  }
  if (radius < 1.0) {
    return raw;
  }

  const int reach = static_cast<int>(std::ceil(radius)) - 1;
  std::vector<double> out(raw.size());

  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      double acc = 0.0;
      double wsum = 0.0;
      for (int fx = std::max(0, ex - reach); fx <= std::min(g.nelx - 1, ex + reach); ++fx) {
        for (int fy = std::max(0, ey - reach); fy <= std::min(g.nely - 1, ey + reach); ++fy) {
          const double dist = std::hypot(ex - fx, ey - fy);
          const double w = radius - dist;
          if (w <= 0.0) {
            continue;
          }
          const int f = g.element_id(fx, fy);
          acc += w * density.values[f] * raw[f];
          wsum += w;
        }
      }
      const int e = g.element_id(ex, ey);
      out[e] = acc / (std::max(1e-3, density.values[e]) * wsum);
    }
  }
  return out;
}

DensityField oc_update(const DensityField& density, const std::vector<double>& sensitivity,
                       const SimpConfig& config) {
  config.validate();
  density.validate();
  const int n = density.grid.n_elements();
  if (static_cast<int>(sensitivity.size()) != n) {
    throw InvalidInputError("sensitivity length does not match the density grid");
  }

  std::vector<MoveWindow> windows(n);
  for (int e = 0; e < n; ++e) {
    windows[e] = window(density.values[e], config.move_limit);
  }

  const auto mean_at = [&](double lambda) {
    double sum = 0.0;
    for (int e = 0; e < n; ++e) {
      sum += oc_candidate(density.values[e], sensitivity[e], lambda, windows[e]);
    }
    return sum / n;
  };

  // mean_at is non-increasing in lambda; bracket the volume target, then bisect.
  double lo = 0.0;
  if (mean_at(lo) < config.vf_target - config.bisection_tol) {
    throw InfeasibleVolumeError("volume target unreachable: move limit caps mean density below target");
  }
  double hi = 1.0;
  int doublings = 0;
  while (mean_at(hi) > config.vf_target && doublings++ < 200) {
    hi *= 2.0;
  }

  for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_at(mid) > config.vf_target ? lo : hi) = mid;
  }

  const double lambda = 0.5 * (lo + hi);
  DensityField out;
  out.grid = density.grid;
  out.values.resize(n);
  double sum = 0.0;
  for (int e = 0; e < n; ++e) {
    out.values[e] = clamp01(oc_candidate(density.values[e], sensitivity[e], lambda, windows[e]));
    sum += out.values[e];
  }
  if (std::abs(sum / n - config.vf_target) > config.bisection_tol) {
    throw InfeasibleVolumeError("lambda bisection did not meet the volume target within tolerance");
  }
  return out;
}

OptimizationTrace run_simp(const ProblemSpec& problem, const SimpConfig& config,
                           const DensityField& init, const Material& material) {
  return run_loop(problem, config, init, material, /*early_stop=*/true);
}

OptimizationTrace refine(const DensityField& topology, const ProblemSpec& problem, int n_iters,
                         const Material& material) {
  if (n_iters < 0 || n_iters > 50) {
    throw InvalidInputError("refinement iteration count must lie in [0, 50], got " +
                            std::to_string(n_iters));
  }
  if (n_iters == 0) {
    problem.validate();
    topology.validate();
    OptimizationTrace trace;
    trace.final_density = topology;
    return trace;
  }

  SimpConfig config;
  config.vf_target = problem.vf_target;
  config.max_iters = n_iters;
  return run_loop(problem, config, topology, material, /*early_stop=*/false);
}

}  // namespace topogen
