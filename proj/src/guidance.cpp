#include "topogen/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <utility>

#include "topogen/errors.hpp"
#include "topogen/metrics.hpp"
#include "topogen/simp.hpp"
#include "topogen/tensor_io.hpp"

namespace topogen {

namespace {

void check_grid(const DensityField& x0_hat, const ProblemSpec& problem) {
  x0_hat.validate();
  if (!(x0_hat.grid == problem.grid)) {
    throw InvalidInputError("guidance estimate grid does not match the problem grid");
  }
}

double floating_mass(const DensityField& x, const ProblemSpec& problem) {
  const ComponentAnalysis comps = analyze_components(x, problem.loads, problem.bcs);
  double total = 0.0;
  for (int e = 0; e < x.grid.n_elements(); ++e) {
    const int c = comps.labels[e];
    if (c >= 0 && !comps.touches_load[c] && !comps.touches_support[c]) {
      total += x.values[e];
    }
  }
  return total;
}

void check_finite(const std::vector<double>& field, const char* which) {
  for (double v : field) {
    if (!std::isfinite(v)) {
      throw ValidationError(std::string("guidance field ") + which + " has a non-finite entry");
    }
  }
}

}  // namespace

DensityField denoised_estimate(const Grid& grid, const std::vector<double>& z,
                               const std::vector<double>& eps_hat, double alpha_bar) {
  grid.validate();
  const int n = grid.n_elements();
  if (static_cast<int>(z.size()) != n || eps_hat.size() != z.size()) {
    throw InvalidInputError("denoised estimate inputs do not match the grid");
  }
  if (!(alpha_bar > 0.0) || alpha_bar > 1.0) {
    throw InvalidInputError("denoised estimate needs alpha_bar in (0, 1]");
  }
  DensityField x0;
  x0.grid = grid;
  x0.values.resize(z.size());
  const double root_bar = std::sqrt(alpha_bar);
  const double root_rem = std::sqrt(1.0 - alpha_bar);
  for (std::size_t i = 0; i < z.size(); ++i) {
    x0.values[i] = std::clamp((z[i] - root_rem * eps_hat[i]) / root_bar, 0.0, 1.0);
  }
  return x0;
}

GuidanceField fm_guidance(const DensityField& x0_hat, const ProblemSpec& problem) {
  check_grid(x0_hat, problem);
  const Grid& g = x0_hat.grid;
  const int n = g.n_elements();

  GuidanceField out;
  out.field.assign(n, 0.0);

  const ComponentAnalysis base = analyze_components(x0_hat, problem.loads, problem.bcs);
  for (int e = 0; e < n; ++e) {
    const int c = base.labels[e];
    if (c >= 0 && !base.touches_load[c] && !base.touches_support[c]) {
      out.diagnostic += x0_hat.values[e];
    }
  }
  if (!base.any_floating()) return out;

  // Probing away from the islands cannot move the score; restrict the
  // differences to the floating elements and their one-ring.
  std::vector<char> probe(n, 0);
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const int c = base.labels[g.element_id(ex, ey)];
      if (c < 0 || base.touches_load[c] || base.touches_support[c]) continue;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const int px = ex + dx;
          const int py = ey + dy;
          if (px < 0 || px >= g.nelx || py < 0 || py >= g.nely) continue;
          probe[g.element_id(px, py)] = 1;
        }
      }
    }
  }

  const double h = 0.05;
  std::vector<double> raw(n, 0.0);
  DensityField work = x0_hat;
  for (int e = 0; e < n; ++e) {
    if (!probe[e]) continue;
    const double center = x0_hat.values[e];
    const double hi = std::min(1.0, center + h);
    const double lo = std::max(0.0, center - h);
    work.values[e] = hi;
    const double up = floating_mass(work, problem);
    work.values[e] = lo;
    const double down = floating_mass(work, problem);
    work.values[e] = center;
    raw[e] = -(up - down) / (hi - lo);
  }

  // 3x3 box smoothing with zero padding, then clamp the peak to unit
  // magnitude. Threshold crossings make single probes arbitrarily steep.
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      double acc = 0.0;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const int px = ex + dx;
          const int py = ey + dy;
          if (px < 0 || px >= g.nelx || py < 0 || py >= g.nely) continue;
          acc += raw[g.element_id(px, py)];
        }
      }
      out.field[g.element_id(ex, ey)] = acc / 9.0;
    }
  }
  double peak = 0.0;
  for (double v : out.field) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    for (double& v : out.field) v /= peak;
  }
  return out;
}

GuidanceField compliance_guidance(const DensityField& x0_hat, const ProblemSpec& problem,
                                  const SolveOptions& solve) {
  check_grid(x0_hat, problem);
  const int n = x0_hat.grid.n_elements();

  GuidanceField out;
  out.field.assign(n, 0.0);

  DensityField binary = x0_hat;
  for (double& v : binary.values) v = v >= 0.5 ? 1.0 : 0.0;

  const SimpConfig config;
  const Material material;
  DisplacementField u;
  try {
    const SparseMatrix k = assemble_stiffness(binary, config.penal, material);
    u = solve_displacement(k, problem.loads, problem.bcs, solve, nullptr);
  } catch (const Error& e) {
    std::cerr << "warning: compliance guidance skipped, " << e.what() << "\n";
    return out;
  }
  out.diagnostic = compliance(u, problem.loads);

  // The element quadratic form can round to -1e-15 where the displacement is
  // essentially zero; the sign contract clamps that noise away.
  const std::vector<double> s = compliance_sensitivity(x0_hat, u, config, material);
  double peak = 0.0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  const double denom = std::max(kComplianceNormFloor, peak);
  for (int e = 0; e < n; ++e) out.field[e] = std::max(0.0, -s[e]) / denom;
  return out;
}

GuidanceKind guidance_kind_from_string(const std::string& name) {
  if (name == "none") return GuidanceKind::none;
  if (name == "fm_oracle") return GuidanceKind::fm_oracle;
  if (name == "compliance_oracle") return GuidanceKind::compliance_oracle;
  if (name == "external") return GuidanceKind::external;
  throw InvalidConfigError("unknown guidance kind: " + name);
}

std::string to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::none: return "none";
    case GuidanceKind::fm_oracle: return "fm_oracle";
    case GuidanceKind::compliance_oracle: return "compliance_oracle";
    case GuidanceKind::external: return "external";
  }
  throw InvalidConfigError("unknown guidance kind");
}

void GuidanceConfig::validate() const {
  if (compliance == GuidanceKind::fm_oracle) {
    throw InvalidConfigError("the compliance slot does not accept fm_oracle");
  }
  if (floating == GuidanceKind::compliance_oracle) {
    throw InvalidConfigError("the floating slot does not accept compliance_oracle");
  }
  if (!std::isfinite(scale_c) || !std::isfinite(scale_fm)) {
    throw InvalidConfigError("guidance scales must be finite");
  }
  if ((compliance == GuidanceKind::external || floating == GuidanceKind::external) &&
      external_path.empty()) {
    throw InvalidConfigError("external guidance needs a checkpoint path");
  }
}

GuidanceEngine::GuidanceEngine(ProblemSpec problem, const Denoiser& denoiser, int t_train,
                               GuidanceConfig config)
    : problem_(std::move(problem)),
      denoiser_(&denoiser),
      schedule_(make_schedule(t_train)),
      config_(std::move(config)) {
  problem_.validate();
  config_.validate();

  const bool need_c = config_.compliance == GuidanceKind::external;
  const bool need_fm = config_.floating == GuidanceKind::external;
  if (!need_c && !need_fm) return;

  const TensorArchive archive = TensorArchive::load(config_.external_path);
  const auto take = [&](const char* name) {
    if (!archive.contains(name)) {
      throw ValidationError("external guidance checkpoint is missing " + std::string(name));
    }
    const auto& dims = archive.dims(name);
    if (dims.size() != 2 || dims[0] != static_cast<std::uint64_t>(problem_.grid.nelx) ||
        dims[1] != static_cast<std::uint64_t>(problem_.grid.nely)) {
      throw ValidationError(std::string(name) + " dims do not match the problem grid");
    }
    const std::vector<double>& values = archive.f64(name);
    for (double v : values) {
      if (!std::isfinite(v) || std::abs(v) > 1.0) {
        throw ValidationError(std::string(name) + " entries must be finite and within [-1, 1]");
      }
    }
    return values;
  };
  if (need_c) external_c_ = take("g_c");
  if (need_fm) external_fm_ = take("g_fm");
}

GuidanceTerms GuidanceEngine::operator()(const std::vector<double>& z, int t_label,
                                         const ConditioningStack& conditioning) const {
  GuidanceTerms terms;
  terms.scale_c = config_.scale_c;
  terms.scale_fm = config_.scale_fm;
  if (config_.scale_c == 0.0 && config_.scale_fm == 0.0) return terms;

  if (static_cast<int>(z.size()) != problem_.grid.n_elements()) {
    throw InvalidInputError("guidance latent does not match the problem grid");
  }
  const bool c_active = config_.scale_c != 0.0 && config_.compliance != GuidanceKind::none;
  const bool fm_active = config_.scale_fm != 0.0 && config_.floating != GuidanceKind::none;
  const bool needs_estimate =
      (c_active && config_.compliance != GuidanceKind::external) ||
      (fm_active && config_.floating != GuidanceKind::external);

  DensityField x0;
  if (needs_estimate) {
    const std::vector<double> eps = denoiser_->predict(z, t_label, conditioning);
    x0 = denoised_estimate(problem_.grid, z, eps, schedule_.alpha_bar(t_label));
  }
  if (c_active) {
    terms.g_c = config_.compliance == GuidanceKind::external
                    ? external_c_
                    : compliance_guidance(x0, problem_).field;
    check_finite(terms.g_c, "g_c");
  }
  if (fm_active) {
    terms.g_fm = config_.floating == GuidanceKind::external ? external_fm_
                                                            : fm_guidance(x0, problem_).field;
    check_finite(terms.g_fm, "g_fm");
  }
  return terms;
}

}  // namespace topogen
