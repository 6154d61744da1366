#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "topogen/diffusion.hpp"
#include "topogen/fea.hpp"
#include "topogen/grid.hpp"
#include "topogen/kernels.hpp"
#include "topogen/problem.hpp"

namespace topogen {

// One provider output: a per-element direction field plus a provider-specific
// scalar (floating mass for the floating-material oracle, thresholded
// compliance for the compliance oracle).
struct GuidanceField {
  std::vector<double> field;
  double diagnostic = 0.0;
};

// x0 = (z - sqrt(1 - alpha_bar) eps_hat) / sqrt(alpha_bar), clamped to [0, 1].
DensityField denoised_estimate(const Grid& grid, const std::vector<double>& z,
                               const std::vector<double>& eps_hat, double alpha_bar);

// Descent direction on the floating-material score, the summed density of
// components anchored to neither a load nor a support. Central differences
// are probed only on the floating elements and their one-ring, then box
// smoothed. Negative over islands, exactly zero when nothing floats, peak
// magnitude at most 1.
GuidanceField fm_guidance(const DensityField& x0_hat, const ProblemSpec& problem);

// Peak scale below which the compliance field shrinks proportionally instead
// of being amplified to unit magnitude. A converged optimum sits around 2 on
// a 16x16 cantilever while rough intermediates reach the hundreds, so 50
// keeps the former near zero without muting genuinely bad designs.
inline constexpr double kComplianceNormFloor = 50.0;

// Negated compliance sensitivity, displacements from the thresholded
// material, densities from the continuous estimate, divided by
// max(kComplianceNormFloor, peak magnitude). Entries are >= 0 since the
// sensitivity is nonpositive. FEA failure on a degenerate estimate yields a
// zero field and a warning on stderr.
GuidanceField compliance_guidance(const DensityField& x0_hat, const ProblemSpec& problem,
                                  const SolveOptions& solve = {});

enum class GuidanceKind { none, fm_oracle, compliance_oracle, external };

GuidanceKind guidance_kind_from_string(const std::string& name);
std::string to_string(GuidanceKind kind);

struct GuidanceConfig {
  GuidanceKind compliance = GuidanceKind::none;
  GuidanceKind floating = GuidanceKind::none;
  double scale_c = 0.0;
  double scale_fm = 0.0;
  std::filesystem::path external_path;

  // Each slot only accepts its own oracle; external kinds need a path.
  void validate() const;
};

// Binds the providers to a problem and a denoiser as the sampler's guidance
// callback. With both scales zero the callback returns empty terms without
// touching the denoiser, so guided and unguided sampling match bit for bit.
// External fields are fixed per run, read once from a tensor archive holding
// "g_c" or "g_fm" with dims [nelx, nely] and entries in [-1, 1].
class GuidanceEngine {
 public:
  GuidanceEngine(ProblemSpec problem, const Denoiser& denoiser, int t_train,
                 GuidanceConfig config);

  GuidanceTerms operator()(const std::vector<double>& z, int t_label,
                           const ConditioningStack& conditioning) const;

  const GuidanceConfig& config() const { return config_; }

 private:
  ProblemSpec problem_;
  const Denoiser* denoiser_;
  NoiseSchedule schedule_;
  GuidanceConfig config_;
  std::vector<double> external_c_;
  std::vector<double> external_fm_;
};

}  // namespace topogen
