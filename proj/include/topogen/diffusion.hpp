#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "topogen/grid.hpp"
#include "topogen/kernels.hpp"

namespace topogen {

// Reverse-step variance choice: the Gaussian-posterior value (default) or
// the forward beta itself.
enum class SigmaKind { posterior, beta };

// Forward-process schedule. Arrays are 0-based over t = 1..T; alpha_bar(0)
// is 1 by convention, which makes the first posterior variance exactly 0.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> posterior_variances;
  // Train-time timestep labels handed to the denoiser; {1..T} for a full
  // schedule, the retained subsequence after respacing.
  std::vector<int> timesteps;

  int T() const { return static_cast<int>(betas.size()); }
  double alpha_bar(int t) const;
  double sigma2(int t, SigmaKind kind) const;
  void validate() const;
};

// Linear betas spanning 1e-4..2e-2 at T = 1000; for other lengths both
// endpoints scale by 1000/T (clamped below 1) so the terminal latent stays
// nearly pure noise at any T.
NoiseSchedule make_schedule(int T);

// Evenly strided subsequence of length `steps` with betas recomputed so the
// retained alpha_bar values are hit exactly. stride 1 returns `full`
// unchanged, bit for bit.
NoiseSchedule respace(const NoiseSchedule& full, int steps);

// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps; t = 0 returns x0.
std::vector<double> q_sample(const std::vector<double>& x0, int t, const std::vector<double>& eps,
                             const NoiseSchedule& schedule);

// Mean of q(z_{t-1} | z_t, x0).
std::vector<double> posterior_mean(const std::vector<double>& z_t, const std::vector<double>& x0,
                                   int t, const NoiseSchedule& schedule);

// Loss weight beta^2 / (2 sigma^2 alpha (1 - alpha_bar)), as pure arithmetic
// and as a schedule lookup.
double w_t_value(double beta, double alpha, double alpha_bar, double sigma2);
double loss_weight(const NoiseSchedule& schedule, int t, SigmaKind sigma);

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  // Noise prediction for latent z at train-time timestep label t.
  virtual std::vector<double> predict(const std::vector<double>& z, int t,
                                      const ConditioningStack& conditioning) const = 0;
};

enum class LossWeighting { uniform, w_t };

// (w_t or 1) times the summed squared error of the noise prediction.
double loss_eps(const Denoiser& denoiser, const std::vector<double>& x0, int t,
                const std::vector<double>& eps, const ConditioningStack& conditioning,
                const NoiseSchedule& schedule, LossWeighting weighting,
                SigmaKind sigma = SigmaKind::posterior);

// Additive mean shifts with their scales. Empty fields are treated as zero.
struct GuidanceTerms {
  std::vector<double> g_c;
  std::vector<double> g_fm;
  double scale_c = 0.0;
  double scale_fm = 0.0;
};

// Called once per reverse step with (z_t, t label, conditioning).
using GuidanceFn =
    std::function<GuidanceTerms(const std::vector<double>&, int, const ConditioningStack&)>;

// One reverse step: mean from the noise prediction, optional guidance shift,
// then sigma_t * noise. The caller supplies zero noise at t = 1.
std::vector<double> p_sample_step(const Denoiser& denoiser, const std::vector<double>& z_t, int t,
                                  const ConditioningStack& conditioning,
                                  const GuidanceTerms& guidance, const std::vector<double>& noise,
                                  const NoiseSchedule& schedule,
                                  SigmaKind sigma = SigmaKind::posterior);

struct SampleOptions {
  int steps = 100;
  int t_train = 1000;
  std::uint64_t seed = 0;
  SigmaKind sigma = SigmaKind::posterior;
  GuidanceFn guidance;
};

// Full reverse chain from pure noise on the conditioning grid; the result is
// clamped to [0,1].
DensityField sample(const Denoiser& denoiser, const ConditioningStack& conditioning,
                    const SampleOptions& options);

}  // namespace topogen
