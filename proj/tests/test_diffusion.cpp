#include "topogen/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include <doctest.h>

#include "topogen/denoiser.hpp"
#include "topogen/errors.hpp"
#include "topogen/kernels.hpp"
#include "topogen/problem.hpp"
#include "topogen/simp.hpp"
#include "topogen/tensor_io.hpp"

using namespace topogen;

namespace {

// Independent long-double route to the linear schedule: both endpoints scale
// by 1000/T and each beta caps below 1.
long double reference_beta(int t, int T) {
  const long double scale = 1000.0L / T;
  const long double frac = static_cast<long double>(t - 1) / (T - 1);
  const long double beta = scale * (1e-4L + frac * (2e-2L - 1e-4L));
  return beta < 0.999L ? beta : 0.999L;
}

long double reference_alpha_bar(int t, int T) {
  long double bar = 1.0L;
  for (int s = 1; s <= t; ++s) bar *= 1.0L - reference_beta(s, T);
  return bar;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

ConditioningStack empty_stack(int nelx, int nely) {
  ConditioningStack s;
  s.grid = Grid{nelx, nely};
  return s;
}

// Denoiser stub returning a fixed field regardless of input.
class FixedDenoiser : public Denoiser {
 public:
  explicit FixedDenoiser(std::vector<double> out) : out_(std::move(out)) {}
  std::vector<double> predict(const std::vector<double>&, int,
                              const ConditioningStack&) const override {
    return out_;
  }

 private:
  std::vector<double> out_;
};

// Records every timestep label it is asked about.
class LabelRecorder : public Denoiser {
 public:
  explicit LabelRecorder(std::vector<int>& sink) : sink_(sink) {}
  std::vector<double> predict(const std::vector<double>& z, int t,
                              const ConditioningStack&) const override {
    sink_.push_back(t);
    return std::vector<double>(z.size(), 0.0);
  }

 private:
  std::vector<int>& sink_;
};

// Exact minimum-MSE noise prediction for a scalar Gaussian data
// distribution x0 ~ N(m, s^2). With z = sqrt(abar) x0 + sqrt(1-abar) eps,
// conjugacy gives E[x0|z] = (m(1-abar) + sqrt(abar) s^2 z) / (abar s^2 +
// 1-abar), and the matching noise estimate is (z - sqrt(abar) E[x0|z]) /
// sqrt(1-abar). Timestep labels index the full training schedule.
class GaussianOracleDenoiser : public Denoiser {
 public:
  GaussianOracleDenoiser(double mean, double sd, int t_train)
      : mean_(mean), var_(sd * sd), full_(make_schedule(t_train)) {}

  std::vector<double> predict(const std::vector<double>& z, int t,
                              const ConditioningStack&) const override {
    const double bar = full_.alpha_bar(t);
    std::vector<double> eps(z.size());
    for (size_t i = 0; i < z.size(); ++i) {
      const double x0_hat =
          (mean_ * (1.0 - bar) + std::sqrt(bar) * var_ * z[i]) / (bar * var_ + 1.0 - bar);
      eps[i] = (z[i] - std::sqrt(bar) * x0_hat) / std::sqrt(1.0 - bar);
    }
    return eps;
  }

 private:
  double mean_;
  double var_;
  NoiseSchedule full_;
};

std::vector<double> random_field(size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}

// Sixteen cantilever-style problems differing in load height, each solved a
// short way toward its optimum to serve as a training topology.
std::vector<TrainSample> make_overfit_dataset() {
  std::vector<TrainSample> dataset;
  const Grid g{16, 16};
  for (int i = 0; i < 16; ++i) {
    ProblemSpec p;
    p.grid = g;
    p.vf_target = 0.4;
    for (int iy = 0; iy <= g.nely; ++iy) p.bcs.fix_node(g, 0, iy, true, true);
    p.loads.entries.push_back({g.node_id(g.nelx, 1 + i), 0.0, -1.0});

    SimpConfig config;
    config.vf_target = p.vf_target;
    config.max_iters = 25;
    const OptimizationTrace trace =
        run_simp(p, config, DensityField::uniform(g, p.vf_target));

    TrainSample s;
    s.topology = trace.final_density;
    s.conditioning = build_stack(p, ModelVariant::topodiff_ff, std::nullopt, KernelParams{});
    dataset.push_back(std::move(s));
  }
  return dataset;
}

}  // namespace

TEST_CASE("linear schedule endpoints scale with length and stay capped") {
  const NoiseSchedule s1000 = make_schedule(1000);
  CHECK(s1000.betas.front() == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s1000.betas.back() == doctest::Approx(2e-2).epsilon(1e-15));

  const NoiseSchedule s500 = make_schedule(500);
  CHECK(s500.betas.front() == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(s500.betas.back() == doctest::Approx(4e-2).epsilon(1e-15));

  const NoiseSchedule s10 = make_schedule(10);
  CHECK(s10.betas.back() == 0.999);
  for (double b : s10.betas) CHECK(b < 1.0);

  for (int T : {2, 10, 500, 1000}) {
    const NoiseSchedule s = make_schedule(T);
    CHECK(s.T() == T);
    CHECK_NOTHROW(s.validate());
    for (int t = 1; t <= T; ++t) {
      CHECK(s.timesteps[t - 1] == t);
      CHECK(s.alphas[t - 1] == 1.0 - s.betas[t - 1]);
    }
  }
}

TEST_CASE("terminal alpha_bar collapses to noise at standard length") {
  const NoiseSchedule s = make_schedule(1000);
  CHECK(s.alpha_bars.back() < 5e-5);

  const double oracle = static_cast<double>(reference_alpha_bar(1000, 1000));
  CHECK(s.alpha_bars.back() == doctest::Approx(oracle).epsilon(1e-12));

  const NoiseSchedule s100 = make_schedule(100);
  const double oracle100 = static_cast<double>(reference_alpha_bar(100, 100));
  CHECK(s100.alpha_bars.back() == doctest::Approx(oracle100).epsilon(1e-12));
}

TEST_CASE("alpha_bar decreases strictly for any length") {
  for (int T : {2, 3, 10, 137, 1000}) {
    const NoiseSchedule s = make_schedule(T);
    double prev = 1.0;
    for (double bar : s.alpha_bars) {
      CHECK(bar > 0.0);
      CHECK(bar < prev);
      prev = bar;
    }
  }
}

TEST_CASE("first posterior variance is exactly zero") {
  for (int T : {2, 10, 1000}) {
    const NoiseSchedule s = make_schedule(T);
    CHECK(s.posterior_variances.front() == 0.0);
    for (int t = 2; t <= T; ++t) CHECK(s.posterior_variances[t - 1] > 0.0);
  }
}

TEST_CASE("variance recursion holds along the chain") {
  for (int T : {10, 100, 1000}) {
    const NoiseSchedule s = make_schedule(T);
    for (int t = 1; t <= T; ++t) {
      const double lhs = 1.0 - s.alpha_bars[t - 1];
      const double rhs = s.alphas[t - 1] * (1.0 - s.alpha_bar(t - 1)) + s.betas[t - 1];
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("schedule rejects degenerate lengths") {
  CHECK_THROWS_AS(make_schedule(1), InvalidInputError);
  CHECK_THROWS_AS(make_schedule(0), InvalidInputError);
  CHECK_THROWS_AS(make_schedule(-5), InvalidInputError);
}

TEST_CASE("forward noising at step zero returns the input unchanged") {
  const NoiseSchedule s = make_schedule(100);
  const std::vector<double> x0 = random_field(24, 0.0, 1.0, 21);
  CHECK(bits_equal(q_sample(x0, 0, {}, s), x0));

  const std::vector<double> zero(x0.size(), 0.0);
  const std::vector<double> z = q_sample(x0, 40, zero, s);
  const double a = std::sqrt(s.alpha_bars[39]);
  for (size_t i = 0; i < x0.size(); ++i) CHECK(z[i] == a * x0[i]);

  CHECK_THROWS_AS(q_sample(x0, 5, std::vector<double>(3, 0.0), s), InvalidInputError);
  CHECK_THROWS_AS(q_sample(x0, 101, zero, s), InvalidInputError);
  CHECK_THROWS_AS(q_sample(x0, -1, zero, s), InvalidInputError);
}

TEST_CASE("forward marginal matches its analytic moments") {
  const NoiseSchedule s = make_schedule(1000);
  const int t = 300;
  const double bar = s.alpha_bars[t - 1];
  const std::vector<double> x0 = {0.2, 0.9};

  const int n_draws = 10000;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> sum(x0.size(), 0.0), sum_sq(x0.size(), 0.0);
  std::vector<double> eps(x0.size());
  for (int d = 0; d < n_draws; ++d) {
    for (double& e : eps) e = normal(rng);
    const std::vector<double> z = q_sample(x0, t, eps, s);
    for (size_t i = 0; i < z.size(); ++i) {
      sum[i] += z[i];
      sum_sq[i] += z[i] * z[i];
    }
  }

  for (size_t i = 0; i < x0.size(); ++i) {
    const double mean = sum[i] / n_draws;
    const double var = sum_sq[i] / n_draws - mean * mean;
    const double se_mean = std::sqrt((1.0 - bar) / n_draws);
    const double se_var = (1.0 - bar) * std::sqrt(2.0 / (n_draws - 1));
    CHECK(std::abs(mean - std::sqrt(bar) * x0[i]) <= 4.0 * se_mean);
    CHECK(std::abs(var - (1.0 - bar)) <= 4.0 * se_var);
  }
}

TEST_CASE("posterior collapses to the clean image at the first step") {
  const NoiseSchedule s = make_schedule(50);
  const std::vector<double> x0 = random_field(12, 0.0, 1.0, 3);
  const std::vector<double> z = random_field(12, -2.0, 2.0, 4);
  CHECK(bits_equal(posterior_mean(z, x0, 1, s), x0));
}

TEST_CASE("posterior mean matches an independent evaluation") {
  const int T = 100;
  const int t = 10;
  const NoiseSchedule s = make_schedule(T);
  const std::vector<double> x0 = random_field(32, -2.0, 2.0, 7);
  const std::vector<double> z = random_field(32, -2.0, 2.0, 8);
  const std::vector<double> mu = posterior_mean(z, x0, t, s);

  const long double beta = reference_beta(t, T);
  const long double bar_prev = reference_alpha_bar(t - 1, T);
  const long double bar = reference_alpha_bar(t, T);
  const long double c0 = sqrtl(bar_prev) * beta / (1.0L - bar);
  const long double cz = sqrtl(1.0L - beta) * (1.0L - bar_prev) / (1.0L - bar);
  for (size_t i = 0; i < mu.size(); ++i) {
    const double oracle = static_cast<double>(c0 * x0[i] + cz * z[i]);
    CHECK(mu[i] == doctest::Approx(oracle).epsilon(1e-12));
  }

  CHECK_THROWS_AS(posterior_mean(z, std::vector<double>(5, 0.0), t, s), InvalidInputError);
  CHECK_THROWS_AS(posterior_mean(z, x0, 0, s), InvalidInputError);
}

TEST_CASE("posterior coefficients approach identity as betas vanish") {
  // With x0 = z = v the mean is v times the coefficient sum, which tends to
  // 1 as beta does to 0; halving betas should shrink the gap.
  const double v = 0.7;
  const std::vector<double> field(4, v);
  auto gap = [&](int T) {
    const NoiseSchedule s = make_schedule(T);
    return std::abs(posterior_mean(field, field, 2, s)[0] - v);
  };
  CHECK(gap(10000) < 1e-4);
  CHECK(gap(10000) < gap(100));
  CHECK(gap(100) < 1e-2);
}

TEST_CASE("loss weight reproduces the printed arithmetic") {
  CHECK(w_t_value(0.01, 0.99, 0.5, 0.01) ==
        doctest::Approx(0.0001 / (2.0 * 0.01 * 0.99 * 0.5)).epsilon(1e-12));
  CHECK(w_t_value(0.01, 0.99, 0.5, 0.01) == doctest::Approx(0.0101010101).epsilon(1e-8));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ub(1e-4, 0.999);
  std::uniform_real_distribution<double> ubar(1e-5, 0.99);
  std::uniform_real_distribution<double> us(1e-5, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double beta = ub(rng);
    const double alpha = 1.0 - beta;
    const double bar = ubar(rng);
    const double sigma2 = us(rng);
    const long double oracle =
        static_cast<long double>(beta) * beta / 2.0L / sigma2 / alpha / (1.0L - bar);
    CHECK(w_t_value(beta, alpha, bar, sigma2) ==
          doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));
  }

  const NoiseSchedule s = make_schedule(100);
  CHECK(loss_weight(s, 7, SigmaKind::beta) ==
        w_t_value(s.betas[6], s.alphas[6], s.alpha_bars[6], s.betas[6]));
  CHECK(loss_weight(s, 7, SigmaKind::posterior) ==
        w_t_value(s.betas[6], s.alphas[6], s.alpha_bars[6], s.posterior_variances[6]));
}

TEST_CASE("a perfect noise prediction has zero loss") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(4, 3);
  const std::vector<double> x0 = random_field(12, 0.0, 1.0, 13);
  const std::vector<double> eps = random_field(12, -1.5, 1.5, 14);
  const FixedDenoiser perfect(eps);
  CHECK(loss_eps(perfect, x0, 9, eps, stack, s, LossWeighting::uniform) == 0.0);
  CHECK(loss_eps(perfect, x0, 9, eps, stack, s, LossWeighting::w_t) == 0.0);
}

TEST_CASE("loss grows quadratically with prediction error") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(4, 3);
  const std::vector<double> x0 = random_field(12, 0.0, 1.0, 15);
  const std::vector<double> eps = random_field(12, -1.5, 1.5, 16);

  std::vector<double> off1 = eps, off2 = eps;
  for (size_t i = 0; i < eps.size(); ++i) {
    off1[i] += 0.1;
    off2[i] += 0.2;
  }
  const double l1 = loss_eps(FixedDenoiser(off1), x0, 9, eps, stack, s, LossWeighting::uniform);
  const double l2 = loss_eps(FixedDenoiser(off2), x0, 9, eps, stack, s, LossWeighting::uniform);
  CHECK(l1 == doctest::Approx(12 * 0.1 * 0.1).epsilon(1e-12));
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));

  const double lw = loss_eps(FixedDenoiser(off1), x0, 9, eps, stack, s, LossWeighting::w_t,
                             SigmaKind::beta);
  CHECK(lw == doctest::Approx(loss_weight(s, 9, SigmaKind::beta) * l1).epsilon(1e-12));

  const FixedDenoiser short_out(std::vector<double>(5, 0.0));
  CHECK_THROWS_AS(loss_eps(short_out, x0, 9, eps, stack, s, LossWeighting::uniform),
                  InvalidInputError);
}

TEST_CASE("reverse step with the true noise recovers the posterior mean") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(6, 4);
  const std::vector<double> x0 = random_field(24, 0.0, 1.0, 31);
  const std::vector<double> eps = random_field(24, -2.0, 2.0, 32);
  const std::vector<double> zero(24, 0.0);

  for (int t : {2, 10, 60, 100}) {
    const std::vector<double> z = q_sample(x0, t, eps, s);
    const std::vector<double> stepped =
        p_sample_step(FixedDenoiser(eps), z, t, stack, GuidanceTerms{}, zero, s);
    const std::vector<double> mu = posterior_mean(z, x0, t, s);
    for (size_t i = 0; i < mu.size(); ++i) CHECK(stepped[i] == doctest::Approx(mu[i]).epsilon(1e-10));
  }
}

TEST_CASE("zero-scale guidance leaves the step untouched bit for bit") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(5, 5);
  const std::vector<double> z = random_field(25, -1.5, 1.5, 41);
  const std::vector<double> eps_hat = random_field(25, -1.0, 1.0, 42);
  const std::vector<double> noise = random_field(25, -1.0, 1.0, 43);
  const FixedDenoiser den(eps_hat);

  GuidanceTerms loaded;
  loaded.g_c = random_field(25, -1.0, 1.0, 44);
  loaded.g_fm = random_field(25, -1.0, 1.0, 45);
  loaded.scale_c = 0.0;
  loaded.scale_fm = 0.0;

  const std::vector<double> plain = p_sample_step(den, z, 17, stack, GuidanceTerms{}, noise, s);
  const std::vector<double> zeroed = p_sample_step(den, z, 17, stack, loaded, noise, s);
  CHECK(bits_equal(plain, zeroed));
}

TEST_CASE("guidance shifts the mean additively") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(5, 5);
  const std::vector<double> z = random_field(25, -1.5, 1.5, 51);
  const std::vector<double> noise = random_field(25, -1.0, 1.0, 52);
  const FixedDenoiser den(random_field(25, -1.0, 1.0, 53));

  GuidanceTerms g;
  g.g_c = random_field(25, -1.0, 1.0, 54);
  g.g_fm = random_field(25, -1.0, 1.0, 55);
  g.scale_c = 2.0;
  g.scale_fm = -0.5;

  const std::vector<double> plain = p_sample_step(den, z, 17, stack, GuidanceTerms{}, noise, s);
  const std::vector<double> guided = p_sample_step(den, z, 17, stack, g, noise, s);
  for (size_t i = 0; i < plain.size(); ++i) {
    const double shift = g.scale_c * g.g_c[i] + g.scale_fm * g.g_fm[i];
    CHECK(guided[i] - plain[i] == doctest::Approx(shift).epsilon(1e-12));
  }

  GuidanceTerms bad = g;
  bad.g_c.resize(7);
  CHECK_THROWS_AS(p_sample_step(den, z, 17, stack, bad, noise, s), InvalidInputError);
}

TEST_CASE("beta variance widens the step relative to the posterior") {
  const NoiseSchedule s = make_schedule(100);
  const ConditioningStack stack = empty_stack(5, 5);
  const std::vector<double> z = random_field(25, -1.5, 1.5, 61);
  const std::vector<double> noise = random_field(25, -1.0, 1.0, 62);
  const FixedDenoiser den(random_field(25, -1.0, 1.0, 63));

  const int t = 17;
  const std::vector<double> post =
      p_sample_step(den, z, t, stack, GuidanceTerms{}, noise, s, SigmaKind::posterior);
  const std::vector<double> wide =
      p_sample_step(den, z, t, stack, GuidanceTerms{}, noise, s, SigmaKind::beta);
  const double sd_gap = std::sqrt(s.betas[t - 1]) - std::sqrt(s.posterior_variances[t - 1]);
  CHECK(sd_gap > 0.0);
  for (size_t i = 0; i < post.size(); ++i) {
    CHECK(wide[i] - post[i] == doctest::Approx(sd_gap * noise[i]).epsilon(1e-12));
  }
}

TEST_CASE("respacing keeps the retained alpha_bars exactly") {
  const NoiseSchedule full = make_schedule(1000);
  const NoiseSchedule r = respace(full, 100);
  CHECK(r.T() == 100);
  CHECK_NOTHROW(r.validate());
  CHECK(r.posterior_variances.front() == 0.0);

  for (int i = 1; i <= 100; ++i) {
    CHECK(r.timesteps[i - 1] == 10 * i);
    CHECK(r.alpha_bars[i - 1] == full.alpha_bars[10 * i - 1]);
  }
  for (int i = 1; i <= 100; ++i) {
    const double rebuilt = r.alphas[i - 1] * r.alpha_bar(i - 1);
    CHECK(rebuilt == doctest::Approx(r.alpha_bars[i - 1]).epsilon(1e-15));
  }

  // A non-dividing stride still lands exactly on T.
  const NoiseSchedule r7 = respace(full, 7);
  const std::vector<int> expected = {143, 286, 429, 571, 714, 857, 1000};
  for (int i = 0; i < 7; ++i) CHECK(r7.timesteps[i] == expected[i]);
  CHECK_NOTHROW(r7.validate());
}

TEST_CASE("stride-one respacing is the identity") {
  const NoiseSchedule full = make_schedule(50);
  const NoiseSchedule same = respace(full, 50);
  CHECK(bits_equal(same.betas, full.betas));
  CHECK(bits_equal(same.alphas, full.alphas));
  CHECK(bits_equal(same.alpha_bars, full.alpha_bars));
  CHECK(bits_equal(same.posterior_variances, full.posterior_variances));
  CHECK(same.timesteps == full.timesteps);
}

TEST_CASE("respacing rejects bad lengths") {
  const NoiseSchedule full = make_schedule(50);
  CHECK_THROWS_AS(respace(full, 0), InvalidInputError);
  CHECK_THROWS_AS(respace(full, -1), InvalidInputError);
  CHECK_THROWS_AS(respace(full, 51), InvalidInputError);
  CHECK_NOTHROW(respace(full, 1).validate());
}

TEST_CASE("sampling is deterministic and honors the conditioning grid") {
  const ConditioningStack stack = empty_stack(6, 5);
  const ConvDenoiser den(0, 4, 99);

  SampleOptions opts;
  opts.steps = 10;
  opts.t_train = 50;
  opts.seed = 42;

  const DensityField a = sample(den, stack, opts);
  const DensityField b = sample(den, stack, opts);
  CHECK(a.grid == stack.grid);
  CHECK(bits_equal(a.values, b.values));
  CHECK_NOTHROW(a.validate());

  opts.seed = 43;
  const DensityField c = sample(den, stack, opts);
  CHECK_FALSE(bits_equal(a.values, c.values));

  opts.steps = 51;
  CHECK_THROWS_AS(sample(den, stack, opts), InvalidInputError);
}

TEST_CASE("full-length sampling matches a hand-rolled chain") {
  const ConditioningStack stack = empty_stack(4, 4);
  const ConvDenoiser den(0, 4, 123);
  const int T = 40;

  SampleOptions opts;
  opts.steps = T;
  opts.t_train = T;
  opts.seed = 9;
  const DensityField out = sample(den, stack, opts);

  const NoiseSchedule s = make_schedule(T);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(16);
  for (double& v : z) v = normal(rng);
  std::vector<double> noise(16, 0.0);
  for (int t = T; t >= 1; --t) {
    if (t > 1) {
      for (double& v : noise) v = normal(rng);
    } else {
      std::fill(noise.begin(), noise.end(), 0.0);
    }
    z = p_sample_step(den, z, t, stack, GuidanceTerms{}, noise, s);
  }
  for (double& v : z) v = std::clamp(v, 0.0, 1.0);
  CHECK(bits_equal(out.values, z));
}

TEST_CASE("labels handed to the denoiser are train-time steps") {
  std::vector<int> seen;
  const LabelRecorder recorder(seen);
  const ConditioningStack stack = empty_stack(2, 2);

  SampleOptions opts;
  opts.steps = 10;
  opts.t_train = 1000;
  opts.seed = 1;
  sample(recorder, stack, opts);

  REQUIRE(seen.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(seen[i] == 1000 - 100 * i);
}

TEST_CASE("the sampler reproduces a known scalar gaussian target") {
  const double target_mean = 0.5;
  const double target_sd = 0.15;
  const GaussianOracleDenoiser oracle(target_mean, target_sd, 1000);
  const ConditioningStack stack = empty_stack(1, 1);

  for (int steps : {10, 100}) {
    const int n_chains = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n_chains; ++i) {
      SampleOptions opts;
      opts.steps = steps;
      opts.t_train = 1000;
      opts.seed = static_cast<std::uint64_t>(steps) * 100000 + i;
      const double v = sample(oracle, stack, opts).values[0];
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / n_chains;
    const double sd = std::sqrt(sum_sq / n_chains - mean * mean);
    CHECK(std::abs(mean - target_mean) <= 4.0 * target_sd / std::sqrt(n_chains));
    CHECK(sd > 0.05);
    CHECK(sd < 0.25);
  }
}

TEST_CASE("denoiser construction is sized and seeded deterministically") {
  const ConvDenoiser a(2, 4, 7);
  CHECK(a.cond_channels() == 2);
  CHECK(a.width() == 4);
  // conv1 4x3x9 + 4, time 4x8, conv2 4x4x9 + 4, conv3 36 + 1.
  CHECK(a.parameter_count() == 329);

  const ConvDenoiser b(2, 4, 7);
  CHECK(bits_equal(a.parameters(), b.parameters()));
  const ConvDenoiser c(2, 4, 8);
  CHECK_FALSE(bits_equal(a.parameters(), c.parameters()));

  CHECK_THROWS_AS(ConvDenoiser(-1, 4, 0), InvalidInputError);
  CHECK_THROWS_AS(ConvDenoiser(2, 0, 0), InvalidInputError);
}

TEST_CASE("denoiser validates input shapes") {
  const ConvDenoiser den(2, 4, 7);
  ConditioningStack stack = empty_stack(4, 4);
  stack.channels.push_back({"a", std::vector<double>(16, 0.3)});
  stack.channels.push_back({"b", std::vector<double>(16, 0.6)});

  const std::vector<double> z(16, 0.1);
  CHECK_NOTHROW(den.predict(z, 5, stack));
  CHECK(den.predict(z, 5, stack).size() == 16);
  CHECK(bits_equal(den.predict(z, 5, stack), den.predict(z, 5, stack)));

  CHECK_THROWS_AS(den.predict(std::vector<double>(9, 0.1), 5, stack), InvalidInputError);
  stack.channels.pop_back();
  CHECK_THROWS_AS(den.predict(z, 5, stack), InvalidInputError);

  stack.channels.push_back({"b", std::vector<double>(16, 0.6)});
  std::vector<double> grad(329, 0.0);
  std::vector<double> bad_grad(10, 0.0);
  const std::vector<double> eps(16, 0.0);
  CHECK_THROWS_AS(den.loss_gradient(z, 5, stack, eps, 1.0, bad_grad), InvalidInputError);
  CHECK_THROWS_AS(den.loss_gradient(z, 5, stack, std::vector<double>(4, 0.0), 1.0, grad),
                  InvalidInputError);
}

TEST_CASE("analytic gradients match finite differences") {
  ConditioningStack stack = empty_stack(4, 4);
  stack.channels.push_back({"a", random_field(16, 0.0, 1.0, 301)});
  stack.channels.push_back({"b", random_field(16, -0.5, 0.5, 302)});

  const double h = 1e-5;
  std::vector<double> scratch(329);
  for (int draw = 0; draw < 3; ++draw) {
    ConvDenoiser den(2, 4, 400 + draw);
    const std::vector<double> z = random_field(16, -1.5, 1.5, 310 + draw);
    const std::vector<double> eps = random_field(16, -1.5, 1.5, 320 + draw);
    const int t = draw == 0 ? 1 : (draw == 1 ? 7 : 500);

    std::vector<double> grad(den.parameter_count(), 0.0);
    den.loss_gradient(z, t, stack, eps, 0.7, grad);

    for (int i = 0; i < den.parameter_count(); ++i) {
      const double saved = den.parameters()[i];
      den.parameters()[i] = saved + h;
      std::fill(scratch.begin(), scratch.end(), 0.0);
      const double up = den.loss_gradient(z, t, stack, eps, 0.7, scratch);
      den.parameters()[i] = saved - h;
      std::fill(scratch.begin(), scratch.end(), 0.0);
      const double down = den.loss_gradient(z, t, stack, eps, 0.7, scratch);
      den.parameters()[i] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max(1e-6, std::abs(fd) + std::abs(grad[i]));
      CHECK(std::abs(grad[i] - fd) / denom <= 1e-4);
    }
  }
}

TEST_CASE("gradient buffer accumulates across calls") {
  ConditioningStack stack = empty_stack(3, 3);
  stack.channels.push_back({"a", random_field(9, 0.0, 1.0, 501)});
  const ConvDenoiser den(1, 4, 502);
  const std::vector<double> z = random_field(9, -1.0, 1.0, 503);
  const std::vector<double> eps = random_field(9, -1.0, 1.0, 504);

  std::vector<double> once(den.parameter_count(), 0.0);
  den.loss_gradient(z, 3, stack, eps, 1.0, once);
  std::vector<double> twice(den.parameter_count(), 0.0);
  den.loss_gradient(z, 3, stack, eps, 1.0, twice);
  den.loss_gradient(z, 3, stack, eps, 1.0, twice);
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
  }

  std::vector<double> zero_w(den.parameter_count(), 0.0);
  CHECK(den.loss_gradient(z, 3, stack, eps, 0.0, zero_w) == 0.0);
  for (double g : zero_w) CHECK(g == 0.0);
}

TEST_CASE("checkpoints round trip through the tensor archive") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "topogen_ckpt_roundtrip.tgta";

  const ConvDenoiser den(2, 4, 90);
  den.save_checkpoint(path, 777);
  const auto [loaded, t_train] = ConvDenoiser::load_checkpoint(path);
  CHECK(t_train == 777);
  CHECK(loaded.cond_channels() == 2);
  CHECK(loaded.width() == 4);
  CHECK(bits_equal(loaded.parameters(), den.parameters()));

  ConditioningStack stack = empty_stack(3, 3);
  stack.channels.push_back({"a", random_field(9, 0.0, 1.0, 91)});
  stack.channels.push_back({"b", random_field(9, 0.0, 1.0, 92)});
  const std::vector<double> z = random_field(9, -1.0, 1.0, 93);
  CHECK(bits_equal(den.predict(z, 4, stack), loaded.predict(z, 4, stack)));
  std::filesystem::remove(path);

  const auto bad = dir / "topogen_ckpt_bad.tgta";
  {
    TensorArchive a;
    a.add_f64("params", {3}, {1.0, 2.0, 3.0});
    a.add_text("meta.json", "{not json");
    a.save(bad);
    CHECK_THROWS_AS(ConvDenoiser::load_checkpoint(bad), ParseError);
  }
  {
    TensorArchive a;
    a.add_f64("params", {3}, {1.0, 2.0, 3.0});
    a.add_text("meta.json",
               R"({"arch":"dense","width":4,"cond_channels":2,"time_dim":8,"t_train":10,"schedule":"linear"})");
    a.save(bad);
    CHECK_THROWS_AS(ConvDenoiser::load_checkpoint(bad), ValidationError);
  }
  {
    TensorArchive a;
    a.add_f64("params", {3}, {1.0, 2.0, 3.0});
    a.add_text("meta.json",
               R"({"arch":"conv3x3","width":4,"cond_channels":2,"time_dim":8,"t_train":10,"schedule":"linear"})");
    a.save(bad);
    CHECK_THROWS_AS(ConvDenoiser::load_checkpoint(bad), ValidationError);
  }
  {
    TensorArchive a;
    a.add_text("meta.json",
               R"({"arch":"conv3x3","width":4,"cond_channels":2,"time_dim":8,"t_train":10,"schedule":"linear"})");
    a.save(bad);
    CHECK_THROWS_AS(ConvDenoiser::load_checkpoint(bad), InvalidInputError);
  }
  std::filesystem::remove(bad);
}

TEST_CASE("training is deterministic and zero learning rate is a no-op") {
  const Grid g{8, 8};
  const ProblemSpec p = ProblemSpec::cantilever(8, 8, 0.4);
  TrainSample s;
  s.topology = DensityField::uniform(g, 0.4);
  s.conditioning = build_stack(p, ModelVariant::topodiff_ff, std::nullopt, KernelParams{});
  const std::vector<TrainSample> dataset = {s};
  const NoiseSchedule schedule = make_schedule(50);

  TrainConfig config;
  config.steps = 25;
  config.seed = 4;

  ConvDenoiser a(6, 4, 1);
  ConvDenoiser b(6, 4, 1);
  const TrainResult ra = train(a, dataset, schedule, config);
  const TrainResult rb = train(b, dataset, schedule, config);
  CHECK(ra.loss_curve.size() == 25);
  CHECK(bits_equal(ra.loss_curve, rb.loss_curve));
  CHECK(bits_equal(a.parameters(), b.parameters()));

  ConvDenoiser frozen(6, 4, 1);
  const std::vector<double> before = frozen.parameters();
  config.learning_rate = 0.0;
  train(frozen, dataset, schedule, config);
  CHECK(bits_equal(frozen.parameters(), before));
}

TEST_CASE("training rejects bad inputs and reports divergence") {
  const NoiseSchedule schedule = make_schedule(50);
  ConvDenoiser den(6, 4, 1);
  CHECK_THROWS_AS(train(den, {}, schedule, TrainConfig{}), InvalidInputError);

  const ProblemSpec p = ProblemSpec::cantilever(8, 8, 0.4);
  TrainSample s;
  s.topology = DensityField::uniform(Grid{8, 8}, 0.4);
  s.conditioning = build_stack(p, ModelVariant::topodiff_ff, std::nullopt, KernelParams{});

  TrainConfig bad_steps;
  bad_steps.steps = 0;
  CHECK_THROWS_AS(train(den, {s}, schedule, bad_steps), InvalidInputError);

  TrainSample mismatched = s;
  mismatched.topology = DensityField::uniform(Grid{4, 4}, 0.4);
  CHECK_THROWS_AS(train(den, {mismatched}, schedule, TrainConfig{}), InvalidInputError);

  TrainConfig explode;
  explode.steps = 50;
  explode.learning_rate = 1e150;
  try {
    train(den, {s}, schedule, explode);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.step() >= 0);
    CHECK(e.step() < 50);
  }
}

TEST_CASE("training overfits a small synthetic set") {
  const std::vector<TrainSample> dataset = make_overfit_dataset();
  REQUIRE(dataset.size() == 16);

  ConvDenoiser den(6, 8, 5);
  const NoiseSchedule schedule = make_schedule(200);
  TrainConfig config;
  config.steps = 2000;
  config.learning_rate = 1e-3;
  config.seed = 1;

  const TrainResult result = train(den, dataset, schedule, config);
  REQUIRE(result.loss_curve.size() == 2000);

  // Single-sample losses scatter with the drawn timestep, so the untrained
  // level is averaged over the first 25 steps, before descent sets in.
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 25; ++i) head += result.loss_curve[i];
  for (int i = 0; i < 100; ++i) tail += result.loss_curve[2000 - 100 + i];
  head /= 25.0;
  tail /= 100.0;
  CHECK(tail < 0.2 * head);
}
