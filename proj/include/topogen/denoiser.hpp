#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "topogen/diffusion.hpp"
#include "topogen/grid.hpp"
#include "topogen/kernels.hpp"

namespace topogen {

// Small convolutional noise predictor: three 3x3 same-padding layers with
// SiLU between them, conditioning concatenated as input channels, and a
// sinusoidal timestep embedding mapped to a per-channel bias on the first
// layer. Forward and reverse passes are written out by hand; parameters
// live in one flat vector so checkpoints and gradient checks stay simple.
class ConvDenoiser : public Denoiser {
 public:
  ConvDenoiser(int cond_channels, int width, std::uint64_t init_seed);

  std::vector<double> predict(const std::vector<double>& z, int t,
                              const ConditioningStack& conditioning) const override;

  // Weighted squared-error loss against the target noise, with parameter
  // gradients accumulated into `grad` (sized parameter_count()).
  double loss_gradient(const std::vector<double>& z, int t,
                       const ConditioningStack& conditioning,
                       const std::vector<double>& target_eps, double weight,
                       std::vector<double>& grad) const;

  int cond_channels() const { return cond_channels_; }
  int width() const { return width_; }
  int parameter_count() const { return static_cast<int>(params_.size()); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Checkpoints carry the parameters plus a JSON descriptor of the
  // architecture and the training schedule.
  void save_checkpoint(const std::filesystem::path& path, int t_train) const;
  static std::pair<ConvDenoiser, int> load_checkpoint(const std::filesystem::path& path);

 private:
  struct Cache;
  void forward(const std::vector<double>& z, int t, const ConditioningStack& conditioning,
               Cache& cache) const;

  int cond_channels_;
  int width_;
  std::vector<double> params_;
};

struct TrainSample {
  DensityField topology;
  ConditioningStack conditioning;
};

struct TrainConfig {
  int steps = 2000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;
};

// Single-sample stochastic training with Adam. Deterministic for a fixed
// seed; throws TrainingError with the step index if the loss leaves the
// finite range.
TrainResult train(ConvDenoiser& model, const std::vector<TrainSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config);

}  // namespace topogen
