#pragma once

#include <optional>
#include <string>
#include <vector>

#include "topogen/fea.hpp"
#include "topogen/grid.hpp"
#include "topogen/problem.hpp"

namespace topogen {

// Kernel shape used to relax point loads and supports into smooth fields.
// green_exp is the default; the inverse-distance family exists for ablations.
enum class KernelVariant { green_exp, inv_r, inv_r2, inv_r4, inv_r_beta };

KernelVariant kernel_variant_from_string(const std::string& name);
std::string to_string(KernelVariant variant);

struct KernelParams {
  double alpha = 10.0;
  double beta = 2.0;
  KernelVariant variant = KernelVariant::green_exp;

  void validate() const;
};

// Half an element edge; distances are floored here so the kernel stays
// finite at its own source point.
inline constexpr double kDistanceFloor = 0.5;

// A position in element units: nodes sit at integers, centroids at halves.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

Point node_point(const Grid& g, int node);

// Unit-magnitude load kernel value at distance r: decays from 1 at the
// source to 0 far away.
double kernel_value(double r, const KernelParams& params);

// Support kernel value at distance r: the complement, near 0 at the
// support and tending to 1 far away.
double bc_kernel_value(double r, const KernelParams& params);

// Euclidean distance from every element centroid to the point.
std::vector<double> distance_grid(const Grid& g, const Point& point);

// Load kernel field for a single point load of magnitude p_bar.
std::vector<double> load_kernel(const Grid& g, const Point& point, double p_bar,
                                const KernelParams& params);

// Support kernel field aggregated over several constrained points by
// elementwise minimum: the nearest constraint dominates.
std::vector<double> bc_kernel(const Grid& g, const std::vector<Point>& bc_points,
                              const KernelParams& params);

// Sum of per-load kernels weighted by load magnitude, rescaled to peak 1.
std::vector<double> superpose_loads(const Grid& g, const Loads& loads,
                                    const KernelParams& params);

enum class ModelVariant { topodiff, topodiff_guided, topodiff_ff, topodiff_ff_simp };

ModelVariant model_variant_from_string(const std::string& name);
std::string to_string(ModelVariant variant);

// Field-conditioned variants need a physical-field pair in their stack; the
// kernel-conditioned ones need none.
bool variant_requires_fields(ModelVariant variant);

struct NamedChannel {
  std::string name;
  std::vector<double> values;
};

struct ConditioningStack {
  Grid grid;
  std::vector<NamedChannel> channels;

  const std::vector<double>& channel(const std::string& name) const;
  bool has_channel(const std::string& name) const;
  void validate() const;
};

// Assembles the model input channels for a problem. Field-conditioned
// variants take precomputed stress/energy fields; kernel-conditioned ones
// compute their two kernel channels from the problem directly.
ConditioningStack build_stack(const ProblemSpec& problem, ModelVariant variant,
                              const std::optional<FieldPair>& fields, const KernelParams& params);

}  // namespace topogen
