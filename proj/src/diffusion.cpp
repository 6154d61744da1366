#include "topogen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "topogen/errors.hpp"

namespace topogen {
namespace {

constexpr double kBetaStart1000 = 1e-4;
constexpr double kBetaEnd1000 = 2e-2;
constexpr double kBetaCap = 0.999;

void check_t(const NoiseSchedule& s, int t, int lowest) {
  if (t < lowest || t > s.T()) {
    throw InvalidInputError("timestep " + std::to_string(t) + " outside [" +
                            std::to_string(lowest) + ", " + std::to_string(s.T()) + "]");
  }
}

void fill_posteriors(NoiseSchedule& s) {
  const int n = s.T();
  s.posterior_variances.resize(n);
  for (int t = 1; t <= n; ++t) {
    s.posterior_variances[t - 1] =
        s.betas[t - 1] * (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bars[t - 1]);
  }
}

}  // namespace

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check_t(*this, t, 1);
  return alpha_bars[t - 1];
}

double NoiseSchedule::sigma2(int t, SigmaKind kind) const {
  check_t(*this, t, 1);
  return kind == SigmaKind::posterior ? posterior_variances[t - 1] : betas[t - 1];
}

void NoiseSchedule::validate() const {
  const size_t n = betas.size();
  if (n == 0) {
    throw InvalidInputError("schedule is empty");
  }
  if (alphas.size() != n || alpha_bars.size() != n || posterior_variances.size() != n ||
      timesteps.size() != n) {
    throw InvalidInputError("schedule arrays disagree in length");
  }
  double prev_bar = 1.0;
  int prev_label = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) {
      throw InvalidInputError("beta outside (0,1) at index " + std::to_string(i));
    }
    if (!(alpha_bars[i] > 0.0 && alpha_bars[i] < prev_bar)) {
      throw InvalidInputError("alpha_bar not strictly decreasing at index " + std::to_string(i));
    }
    if (timesteps[i] <= prev_label) {
      throw InvalidInputError("timestep labels not strictly increasing");
    }
    prev_bar = alpha_bars[i];
    prev_label = timesteps[i];
  }
  if (!(alpha_bars.back() < 0.01)) {
    throw InvalidInputError("terminal alpha_bar is not close to pure noise");
  }
}

NoiseSchedule make_schedule(int T) {
  if (T < 2) {
    throw InvalidInputError("schedule length must be at least 2, got " + std::to_string(T));
  }
  const double scale = 1000.0 / T;
  const double beta_start = scale * kBetaStart1000;
  const double beta_end = scale * kBetaEnd1000;

  NoiseSchedule s;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  s.timesteps.resize(T);
  double bar = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = static_cast<double>(t - 1) / (T - 1);
    s.betas[t - 1] = std::min(kBetaCap, beta_start + frac * (beta_end - beta_start));
    s.alphas[t - 1] = 1.0 - s.betas[t - 1];
    bar *= s.alphas[t - 1];
    s.alpha_bars[t - 1] = bar;
    s.timesteps[t - 1] = t;
  }
  fill_posteriors(s);
  s.validate();
  return s;
}

NoiseSchedule respace(const NoiseSchedule& full, int steps) {
  full.validate();
  if (steps < 1 || steps > full.T()) {
    throw InvalidInputError("respaced length must lie in [1, T]");
  }
  if (steps == full.T()) {
    return full;
  }

  NoiseSchedule s;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  s.timesteps.resize(steps);

  // Retained indices are an even stride ending exactly at T; the recomputed
  // beta makes the retained alpha_bar values exact by construction.
  double prev_bar = 1.0;
  for (int i = 1; i <= steps; ++i) {
    const int tau = static_cast<int>(std::lround(static_cast<double>(i) * full.T() / steps));
    const double bar = full.alpha_bar(tau);
    s.betas[i - 1] = 1.0 - bar / prev_bar;
    s.alphas[i - 1] = bar / prev_bar;
    s.alpha_bars[i - 1] = bar;
    s.timesteps[i - 1] = full.timesteps[tau - 1];
    prev_bar = bar;
  }
  fill_posteriors(s);
  s.validate();
  return s;
}

std::vector<double> q_sample(const std::vector<double>& x0, int t, const std::vector<double>& eps,
                             const NoiseSchedule& schedule) {
  check_t(schedule, t, 0);
  if (t == 0) {
    return x0;
  }
  if (eps.size() != x0.size()) {
    throw InvalidInputError("noise shape does not match the input");
  }
  const double bar = schedule.alpha_bar(t);
  const double a = std::sqrt(bar);
  const double b = std::sqrt(1.0 - bar);
  std::vector<double> z(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) z[i] = a * x0[i] + b * eps[i];
  return z;
}

std::vector<double> posterior_mean(const std::vector<double>& z_t, const std::vector<double>& x0,
                                   int t, const NoiseSchedule& schedule) {
  check_t(schedule, t, 1);
  if (z_t.size() != x0.size()) {
    throw InvalidInputError("latent and clean shapes disagree");
  }
  if (t == 1) {
    // Coefficients reduce exactly to (1, 0) with alpha_bar(0) = 1.
    return x0;
  }
  const double bar_t = schedule.alpha_bar(t);
  const double bar_prev = schedule.alpha_bar(t - 1);
  const double beta = schedule.betas[t - 1];
  const double alpha = schedule.alphas[t - 1];
  const double c0 = std::sqrt(bar_prev) * beta / (1.0 - bar_t);
  const double cz = std::sqrt(alpha) * (1.0 - bar_prev) / (1.0 - bar_t);
  std::vector<double> mu(z_t.size());
  for (size_t i = 0; i < mu.size(); ++i) mu[i] = c0 * x0[i] + cz * z_t[i];
  return mu;
}

double w_t_value(double beta, double alpha, double alpha_bar, double sigma2) {
  return beta * beta / (2.0 * sigma2 * alpha * (1.0 - alpha_bar));
}

double loss_weight(const NoiseSchedule& schedule, int t, SigmaKind sigma) {
  check_t(schedule, t, 1);
  return w_t_value(schedule.betas[t - 1], schedule.alphas[t - 1], schedule.alpha_bars[t - 1],
                   schedule.sigma2(t, sigma));
}

double loss_eps(const Denoiser& denoiser, const std::vector<double>& x0, int t,
                const std::vector<double>& eps, const ConditioningStack& conditioning,
                const NoiseSchedule& schedule, LossWeighting weighting, SigmaKind sigma) {
  check_t(schedule, t, 1);
  const std::vector<double> z = q_sample(x0, t, eps, schedule);
  const std::vector<double> predicted = denoiser.predict(z, schedule.timesteps[t - 1], conditioning);
  if (predicted.size() != eps.size()) {
    throw InvalidInputError("denoiser output shape does not match the noise");
  }
  double sq = 0.0;
  for (size_t i = 0; i < eps.size(); ++i) {
    const double d = predicted[i] - eps[i];
    sq += d * d;
  }
  return weighting == LossWeighting::uniform ? sq : loss_weight(schedule, t, sigma) * sq;
}

std::vector<double> p_sample_step(const Denoiser& denoiser, const std::vector<double>& z_t, int t,
                                  const ConditioningStack& conditioning,
                                  const GuidanceTerms& guidance, const std::vector<double>& noise,
                                  const NoiseSchedule& schedule, SigmaKind sigma) {
  check_t(schedule, t, 1);
  if (noise.size() != z_t.size()) {
    throw InvalidInputError("noise shape does not match the latent");
  }
  const std::vector<double> eps_hat =
      denoiser.predict(z_t, schedule.timesteps[t - 1], conditioning);
  if (eps_hat.size() != z_t.size()) {
    throw InvalidInputError("denoiser output shape does not match the latent");
  }

  const double beta = schedule.betas[t - 1];
  const double bar = schedule.alpha_bars[t - 1];
  const double eps_coef = beta / std::sqrt(1.0 - bar);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alphas[t - 1]);

  std::vector<double> out(z_t.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (z_t[i] - eps_coef * eps_hat[i]);
  }

  // Each term is skipped entirely at scale 0 so disabled guidance leaves the
  // arithmetic, and therefore the bits, untouched.
  if (guidance.scale_c != 0.0) {
    if (guidance.g_c.size() != out.size()) {
      throw InvalidInputError("compliance guidance shape does not match the latent");
    }
    for (size_t i = 0; i < out.size(); ++i) out[i] += guidance.scale_c * guidance.g_c[i];
  }
  if (guidance.scale_fm != 0.0) {
    if (guidance.g_fm.size() != out.size()) {
      throw InvalidInputError("floating-material guidance shape does not match the latent");
    }
    for (size_t i = 0; i < out.size(); ++i) out[i] += guidance.scale_fm * guidance.g_fm[i];
  }

  const double sd = std::sqrt(schedule.sigma2(t, sigma));
  for (size_t i = 0; i < out.size(); ++i) out[i] += sd * noise[i];
  return out;
}

DensityField sample(const Denoiser& denoiser, const ConditioningStack& conditioning,
                    const SampleOptions& options) {
  conditioning.validate();
  if (options.steps < 1 || options.steps > options.t_train) {
    throw InvalidInputError("sampling steps must lie in [1, T_train]");
  }
  const NoiseSchedule schedule = respace(make_schedule(options.t_train), options.steps);
  const size_t n = static_cast<size_t>(conditioning.grid.n_elements());

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> z(n);
  for (double& v : z) v = normal(rng);

  std::vector<double> noise(n, 0.0);
  for (int t = schedule.T(); t >= 1; --t) {
    if (t > 1) {
      for (double& v : noise) v = normal(rng);
    } else {
      std::fill(noise.begin(), noise.end(), 0.0);
    }
    GuidanceTerms terms;
    if (options.guidance) {
      terms = options.guidance(z, schedule.timesteps[t - 1], conditioning);
    }
    z = p_sample_step(denoiser, z, t, conditioning, terms, noise, schedule, options.sigma);
  }

  DensityField out;
  out.grid = conditioning.grid;
  out.values.resize(n);
  for (size_t i = 0; i < n; ++i) out.values[i] = std::clamp(z[i], 0.0, 1.0);
  return out;
}

}  // namespace topogen
