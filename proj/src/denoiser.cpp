#include "topogen/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include <json.hpp>

#include "topogen/errors.hpp"
#include "topogen/tensor_io.hpp"

namespace topogen {
namespace {

constexpr int kTimeDim = 8;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

void time_embedding(int t, double* out) {
  for (int j = 0; j < kTimeDim / 2; ++j) {
    const double freq = std::exp(-std::log(10000.0) * j / (kTimeDim / 2));
    out[2 * j] = std::sin(t * freq);
    out[2 * j + 1] = std::cos(t * freq);
  }
}

// 3x3 same-padding convolution; channels are flat [c][ex*nely+ey] planes.
void conv_forward(const double* in, int cin, const double* w, const double* b, double* out,
                  int cout, int nelx, int nely) {
  const int n = nelx * nely;
  for (int co = 0; co < cout; ++co) {
    for (int ex = 0; ex < nelx; ++ex) {
      for (int ey = 0; ey < nely; ++ey) {
        double acc = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          const double* wk = w + (static_cast<size_t>(co) * cin + ci) * 9;
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = ex + dx;
            if (x < 0 || x >= nelx) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              const int y = ey + dy;
              if (y < 0 || y >= nely) continue;
              acc += wk[(dx + 1) * 3 + (dy + 1)] * in[ci * n + x * nely + y];
            }
          }
        }
        out[co * n + ex * nely + ey] = acc;
      }
    }
  }
}

void conv_backward(const double* in, int cin, const double* w, int cout, const double* gout,
                   double* gw, double* gb, double* gin, int nelx, int nely) {
  const int n = nelx * nely;
  for (int co = 0; co < cout; ++co) {
    for (int ex = 0; ex < nelx; ++ex) {
      for (int ey = 0; ey < nely; ++ey) {
        const double go = gout[co * n + ex * nely + ey];
        gb[co] += go;
        for (int ci = 0; ci < cin; ++ci) {
          const size_t base = (static_cast<size_t>(co) * cin + ci) * 9;
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = ex + dx;
            if (x < 0 || x >= nelx) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              const int y = ey + dy;
              if (y < 0 || y >= nely) continue;
              const size_t k = base + (dx + 1) * 3 + (dy + 1);
              gw[k] += go * in[ci * n + x * nely + y];
              if (gin) gin[ci * n + x * nely + y] += w[k] * go;
            }
          }
        }
      }
    }
  }
}

}  // namespace

struct ConvDenoiser::Cache {
  int nelx = 0;
  int nely = 0;
  std::vector<double> input, pre1, act1, pre2, act2, out;
  double temb[kTimeDim] = {};
};

ConvDenoiser::ConvDenoiser(int cond_channels, int width, std::uint64_t init_seed)
    : cond_channels_(cond_channels), width_(width) {
  if (cond_channels < 0 || width < 1) {
    throw InvalidInputError("denoiser needs non-negative channels and positive width");
  }
  const int cin = 1 + cond_channels_;
  const size_t count = static_cast<size_t>(width_) * cin * 9 + width_ +        // conv1 + bias
                       static_cast<size_t>(width_) * kTimeDim +                // time projection
                       static_cast<size_t>(width_) * width_ * 9 + width_ +     // conv2 + bias
                       static_cast<size_t>(width_) * 9 + 1;                    // conv3 + bias
  params_.assign(count, 0.0);

  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  size_t p = 0;
  const double s1 = 1.0 / std::sqrt(9.0 * cin);
  for (int i = 0; i < width_ * cin * 9; ++i) params_[p++] = s1 * normal(rng);
  p += width_;
  for (int i = 0; i < width_ * kTimeDim; ++i) params_[p++] = 0.1 * normal(rng);
  const double s2 = 1.0 / std::sqrt(9.0 * width_);
  for (int i = 0; i < width_ * width_ * 9; ++i) params_[p++] = s2 * normal(rng);
  p += width_;
  for (int i = 0; i < width_ * 9; ++i) params_[p++] = s2 * normal(rng);
}

void ConvDenoiser::forward(const std::vector<double>& z, int t,
                           const ConditioningStack& conditioning, Cache& cache) const {
  conditioning.validate();
  if (static_cast<int>(conditioning.channels.size()) != cond_channels_) {
    throw InvalidInputError("conditioning stack has " +
                            std::to_string(conditioning.channels.size()) + " channels, expected " +
                            std::to_string(cond_channels_));
  }
  const int n = conditioning.grid.n_elements();
  if (static_cast<int>(z.size()) != n) {
    throw InvalidInputError("latent shape does not match the conditioning grid");
  }

  cache.nelx = conditioning.grid.nelx;
  cache.nely = conditioning.grid.nely;
  const int cin = 1 + cond_channels_;

  cache.input.resize(static_cast<size_t>(cin) * n);
  std::memcpy(cache.input.data(), z.data(), sizeof(double) * n);
  for (int c = 0; c < cond_channels_; ++c) {
    std::memcpy(cache.input.data() + static_cast<size_t>(c + 1) * n,
                conditioning.channels[c].values.data(), sizeof(double) * n);
  }
  time_embedding(t, cache.temb);

  const double* w1 = params_.data();
  const double* b1 = w1 + static_cast<size_t>(width_) * cin * 9;
  const double* tw = b1 + width_;
  const double* w2 = tw + static_cast<size_t>(width_) * kTimeDim;
  const double* b2 = w2 + static_cast<size_t>(width_) * width_ * 9;
  const double* w3 = b2 + width_;
  const double* b3 = w3 + static_cast<size_t>(width_) * 9;

  cache.pre1.resize(static_cast<size_t>(width_) * n);
  conv_forward(cache.input.data(), cin, w1, b1, cache.pre1.data(), width_, cache.nelx, cache.nely);
  for (int co = 0; co < width_; ++co) {
    double bias = 0.0;
    for (int d = 0; d < kTimeDim; ++d) bias += tw[co * kTimeDim + d] * cache.temb[d];
    for (int e = 0; e < n; ++e) cache.pre1[static_cast<size_t>(co) * n + e] += bias;
  }

  cache.act1.resize(cache.pre1.size());
  for (size_t i = 0; i < cache.pre1.size(); ++i) cache.act1[i] = silu(cache.pre1[i]);

  cache.pre2.resize(static_cast<size_t>(width_) * n);
  conv_forward(cache.act1.data(), width_, w2, b2, cache.pre2.data(), width_, cache.nelx,
               cache.nely);
  cache.act2.resize(cache.pre2.size());
  for (size_t i = 0; i < cache.pre2.size(); ++i) cache.act2[i] = silu(cache.pre2[i]);

  cache.out.resize(n);
  conv_forward(cache.act2.data(), width_, w3, b3, cache.out.data(), 1, cache.nelx, cache.nely);
}

std::vector<double> ConvDenoiser::predict(const std::vector<double>& z, int t,
                                          const ConditioningStack& conditioning) const {
  Cache cache;
  forward(z, t, conditioning, cache);
  return std::move(cache.out);
}

double ConvDenoiser::loss_gradient(const std::vector<double>& z, int t,
                                   const ConditioningStack& conditioning,
                                   const std::vector<double>& target_eps, double weight,
                                   std::vector<double>& grad) const {
  if (grad.size() != params_.size()) {
    throw InvalidInputError("gradient buffer does not match the parameter count");
  }
  Cache cache;
  forward(z, t, conditioning, cache);
  const int n = cache.nelx * cache.nely;
  if (target_eps.size() != cache.out.size()) {
    throw InvalidInputError("target noise shape does not match the latent");
  }

  double loss = 0.0;
  std::vector<double> dout(n);
  for (int e = 0; e < n; ++e) {
    const double diff = cache.out[e] - target_eps[e];
    loss += diff * diff;
    dout[e] = 2.0 * weight * diff;
  }
  loss *= weight;

  const int cin = 1 + cond_channels_;
  const size_t o_w1 = 0;
  const size_t o_b1 = o_w1 + static_cast<size_t>(width_) * cin * 9;
  const size_t o_tw = o_b1 + width_;
  const size_t o_w2 = o_tw + static_cast<size_t>(width_) * kTimeDim;
  const size_t o_b2 = o_w2 + static_cast<size_t>(width_) * width_ * 9;
  const size_t o_w3 = o_b2 + width_;
  const size_t o_b3 = o_w3 + static_cast<size_t>(width_) * 9;

  std::vector<double> gact2(static_cast<size_t>(width_) * n, 0.0);
  conv_backward(cache.act2.data(), width_, params_.data() + o_w3, 1, dout.data(),
                grad.data() + o_w3, grad.data() + o_b3, gact2.data(), cache.nelx, cache.nely);

  for (size_t i = 0; i < gact2.size(); ++i) gact2[i] *= silu_grad(cache.pre2[i]);

  std::vector<double> gact1(static_cast<size_t>(width_) * n, 0.0);
  conv_backward(cache.act1.data(), width_, params_.data() + o_w2, width_, gact2.data(),
                grad.data() + o_w2, grad.data() + o_b2, gact1.data(), cache.nelx, cache.nely);

  for (size_t i = 0; i < gact1.size(); ++i) gact1[i] *= silu_grad(cache.pre1[i]);

  // conv1 needs no input gradient; the time projection shares conv1's
  // per-channel bias gradient.
  conv_backward(cache.input.data(), cin, params_.data() + o_w1, width_, gact1.data(),
                grad.data() + o_w1, grad.data() + o_b1, nullptr, cache.nelx, cache.nely);
  for (int co = 0; co < width_; ++co) {
    double channel_sum = 0.0;
    for (int e = 0; e < n; ++e) channel_sum += gact1[static_cast<size_t>(co) * n + e];
    for (int d = 0; d < kTimeDim; ++d) {
      grad[o_tw + static_cast<size_t>(co) * kTimeDim + d] += channel_sum * cache.temb[d];
    }
  }
  return loss;
}

void ConvDenoiser::save_checkpoint(const std::filesystem::path& path, int t_train) const {
  nlohmann::json meta;
  meta["arch"] = "conv3x3";
  meta["width"] = width_;
  meta["cond_channels"] = cond_channels_;
  meta["time_dim"] = kTimeDim;
  meta["t_train"] = t_train;
  meta["schedule"] = "linear";

  TensorArchive archive;
  archive.add_f64("params", {params_.size()}, params_);
  archive.add_text("meta.json", meta.dump());
  archive.save(path);
}

std::pair<ConvDenoiser, int> ConvDenoiser::load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.text("meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.filename().string() + ": bad checkpoint metadata: " + e.what());
  }
  try {
    if (meta.at("arch").get<std::string>() != "conv3x3" ||
        meta.at("time_dim").get<int>() != kTimeDim) {
      throw ValidationError(path.filename().string() + ": incompatible checkpoint architecture");
    }
    ConvDenoiser model(meta.at("cond_channels").get<int>(), meta.at("width").get<int>(), 0);
    const std::vector<double>& params = archive.f64("params");
    if (params.size() != model.params_.size()) {
      throw ValidationError(path.filename().string() + ": checkpoint parameter count mismatch");
    }
    model.params_ = params;
    return {std::move(model), meta.at("t_train").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.filename().string() + ": bad checkpoint metadata: " + e.what());
  }
}

TrainResult train(ConvDenoiser& model, const std::vector<TrainSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config) {
  schedule.validate();
  if (dataset.empty()) {
    throw InvalidInputError("training dataset is empty");
  }
  if (config.steps < 1) {
    throw InvalidInputError("training step count must be positive");
  }
  for (const TrainSample& s : dataset) {
    s.topology.validate();
    s.conditioning.validate();
    if (s.topology.grid.nelx != s.conditioning.grid.nelx ||
        s.topology.grid.nely != s.conditioning.grid.nely) {
      throw InvalidInputError("sample topology and conditioning grids disagree");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
  std::uniform_int_distribution<int> pick_t(1, schedule.T());
  std::normal_distribution<double> normal(0.0, 1.0);

  const size_t p = model.parameters().size();
  std::vector<double> grad(p), m(p, 0.0), v(p, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  TrainResult result;
  result.loss_curve.reserve(config.steps);
  std::vector<double> eps;

  for (int step = 0; step < config.steps; ++step) {
    const TrainSample& s = dataset[pick(rng)];
    const int t = pick_t(rng);
    eps.resize(s.topology.values.size());
    for (double& e : eps) e = normal(rng);

    const std::vector<double> z = q_sample(s.topology.values, t, eps, schedule);

    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss =
        model.loss_gradient(z, schedule.timesteps[t - 1], s.conditioning, eps, 1.0, grad);
    if (!std::isfinite(loss)) {
      throw TrainingError("training loss left the finite range", step);
    }
    result.loss_curve.push_back(loss);

    std::vector<double>& params = model.parameters();
    const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, step + 1);
    for (size_t i = 0; i < p; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
    }
  }
  return result;
}

}  // namespace topogen
