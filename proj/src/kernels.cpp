#include "topogen/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topogen/errors.hpp"

namespace topogen {
namespace {

double inverse_power(double r, double k) {
  // Clipped so the value never exceeds the source magnitude.
  return std::min(1.0, 1.0 / std::pow(r, k));
}

// Elements sharing the given node; up to four, fewer on edges and corners.
template <typename Fn>
void for_adjacent_elements(const Grid& g, int node, Fn&& fn) {
  const int ix = node / (g.nely + 1);
  const int iy = node % (g.nely + 1);
  for (int ex = ix - 1; ex <= ix; ++ex) {
    for (int ey = iy - 1; ey <= iy; ++ey) {
      if (ex >= 0 && ex < g.nelx && ey >= 0 && ey < g.nely) {
        fn(g.element_id(ex, ey));
      }
    }
  }
}

void normalize_peak(std::vector<double>& values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : values) v /= peak;
  }
}

}  // namespace

KernelVariant kernel_variant_from_string(const std::string& name) {
  if (name == "green_exp") return KernelVariant::green_exp;
  if (name == "inv_r") return KernelVariant::inv_r;
  if (name == "inv_r2") return KernelVariant::inv_r2;
  if (name == "inv_r4") return KernelVariant::inv_r4;
  if (name == "inv_r_beta") return KernelVariant::inv_r_beta;
  throw InvalidInputError("unknown kernel variant: " + name);
}

std::string to_string(KernelVariant variant) {
  switch (variant) {
    case KernelVariant::green_exp: return "green_exp";
    case KernelVariant::inv_r: return "inv_r";
    case KernelVariant::inv_r2: return "inv_r2";
    case KernelVariant::inv_r4: return "inv_r4";
    case KernelVariant::inv_r_beta: return "inv_r_beta";
  }
  throw InvalidInputError("unknown kernel variant value");
}

void KernelParams::validate() const {
  if (!(alpha > 0.0)) {
    throw InvalidInputError("kernel alpha must be positive, got " + std::to_string(alpha));
  }
  if (!(beta > 0.0)) {
    throw InvalidInputError("kernel beta must be positive, got " + std::to_string(beta));
  }
}

Point node_point(const Grid& g, int node) {
  return Point{static_cast<double>(node / (g.nely + 1)), static_cast<double>(node % (g.nely + 1))};
}

double kernel_value(double r, const KernelParams& params) {
  const double rc = std::max(r, kDistanceFloor);
  switch (params.variant) {
    case KernelVariant::green_exp:
      return 1.0 - std::exp(-params.alpha / std::pow(rc, params.beta));
    case KernelVariant::inv_r: return inverse_power(rc, 1.0);
    case KernelVariant::inv_r2: return inverse_power(rc, 2.0);
    case KernelVariant::inv_r4: return inverse_power(rc, 4.0);
    case KernelVariant::inv_r_beta: return inverse_power(rc, params.beta);
  }
  throw InvalidInputError("unknown kernel variant value");
}

double bc_kernel_value(double r, const KernelParams& params) {
  return 1.0 - kernel_value(r, params);
}

std::vector<double> distance_grid(const Grid& g, const Point& point) {
  g.validate();
  if (point.x < 0.0 || point.x > g.nelx || point.y < 0.0 || point.y > g.nely) {
    throw InvalidInputError("point lies outside the grid");
  }
  std::vector<double> r(g.n_elements());
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const double dx = (ex + 0.5) - point.x;
      const double dy = (ey + 0.5) - point.y;
      // sqrt of the exact sum keeps half-integer geometry bit-reproducible.
      r[g.element_id(ex, ey)] = std::sqrt(dx * dx + dy * dy);
    }
  }
  return r;
}

std::vector<double> load_kernel(const Grid& g, const Point& point, double p_bar,
                                const KernelParams& params) {
  params.validate();
  if (!std::isfinite(p_bar)) {
    throw InvalidInputError("load magnitude must be finite");
  }
  std::vector<double> field = distance_grid(g, point);
  for (double& v : field) v = p_bar * kernel_value(v, params);
  return field;
}

std::vector<double> bc_kernel(const Grid& g, const std::vector<Point>& bc_points,
                              const KernelParams& params) {
  params.validate();
  g.validate();
  if (bc_points.empty()) {
    throw InvalidInputError("bc_kernel needs at least one constrained point");
  }
  for (const Point& p : bc_points) {
    if (p.x < 0.0 || p.x > g.nelx || p.y < 0.0 || p.y > g.nely) {
      throw InvalidInputError("point lies outside the grid");
    }
  }
  // The complement kernel grows with distance, so the minimum over points is
  // the kernel of the nearest one. Tracking squared distances keeps
  // transcendentals out of the point loop; sqrt commutes with min exactly.
  std::vector<double> nearest2(static_cast<size_t>(g.n_elements()),
                               std::numeric_limits<double>::infinity());
  for (const Point& p : bc_points) {
    for (int ex = 0; ex < g.nelx; ++ex) {
      for (int ey = 0; ey < g.nely; ++ey) {
        const double dx = (ex + 0.5) - p.x;
        const double dy = (ey + 0.5) - p.y;
        double& slot = nearest2[static_cast<size_t>(g.element_id(ex, ey))];
        slot = std::min(slot, dx * dx + dy * dy);
      }
    }
  }
  std::vector<double> field(static_cast<size_t>(g.n_elements()));
  for (size_t e = 0; e < field.size(); ++e) {
    field[e] = bc_kernel_value(std::sqrt(nearest2[e]), params);
  }
  return field;
}

std::vector<double> superpose_loads(const Grid& g, const Loads& loads,
                                    const KernelParams& params) {
  params.validate();
  loads.validate(g);
  std::vector<double> field(g.n_elements(), 0.0);
  for (const PointLoad& load : loads.entries) {
    const double p_bar = std::hypot(load.fx, load.fy);
    const std::vector<double> one = load_kernel(g, node_point(g, load.node), p_bar, params);
    for (int e = 0; e < g.n_elements(); ++e) field[e] += one[e];
  }
  normalize_peak(field);
  return field;
}

ModelVariant model_variant_from_string(const std::string& name) {
  if (name == "topodiff") return ModelVariant::topodiff;
  if (name == "topodiff-guided") return ModelVariant::topodiff_guided;
  if (name == "topodiff-ff") return ModelVariant::topodiff_ff;
  if (name == "topodiff-ff-simp") return ModelVariant::topodiff_ff_simp;
  throw InvalidInputError("unknown model variant: " + name);
}

std::string to_string(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::topodiff: return "topodiff";
    case ModelVariant::topodiff_guided: return "topodiff-guided";
    case ModelVariant::topodiff_ff: return "topodiff-ff";
    case ModelVariant::topodiff_ff_simp: return "topodiff-ff-simp";
  }
  throw InvalidInputError("unknown model variant value");
}

bool variant_requires_fields(ModelVariant variant) {
  return variant == ModelVariant::topodiff || variant == ModelVariant::topodiff_guided;
}

const std::vector<double>& ConditioningStack::channel(const std::string& name) const {
  for (const NamedChannel& c : channels) {
    if (c.name == name) return c.values;
  }
  throw InvalidInputError("conditioning stack has no channel named " + name);
}

bool ConditioningStack::has_channel(const std::string& name) const {
  for (const NamedChannel& c : channels) {
    if (c.name == name) return true;
  }
  return false;
}

void ConditioningStack::validate() const {
  grid.validate();
  for (const NamedChannel& c : channels) {
    if (static_cast<int>(c.values.size()) != grid.n_elements()) {
      throw InvalidInputError("channel " + c.name + " does not match the stack grid");
    }
  }
}

ConditioningStack build_stack(const ProblemSpec& problem, ModelVariant variant,
                              const std::optional<FieldPair>& fields, const KernelParams& params) {
  problem.validate();
  params.validate();
  const Grid& g = problem.grid;
  const int n = g.n_elements();

  ConditioningStack stack;
  stack.grid = g;
  stack.channels.push_back({"vf", std::vector<double>(n, problem.vf_target)});

  // Raw directional load channels: magnitudes painted on the elements that
  // share the loaded node, sign preserved.
  std::vector<double> load_x(n, 0.0), load_y(n, 0.0);
  for (const PointLoad& load : problem.loads.entries) {
    for_adjacent_elements(g, load.node, [&](int e) {
      load_x[e] += load.fx;
      load_y[e] += load.fy;
    });
  }
  stack.channels.push_back({"load_x", std::move(load_x)});
  stack.channels.push_back({"load_y", std::move(load_y)});

  std::vector<double> bc_mask(n, 0.0);
  std::vector<Point> bc_points;
  int last_node = -1;
  for (int dof : problem.bcs.fixed_dofs) {
    const int node = dof / 2;
    if (node == last_node) continue;
    last_node = node;
    bc_points.push_back(node_point(g, node));
    for_adjacent_elements(g, node, [&](int e) { bc_mask[e] = 1.0; });
  }
  stack.channels.push_back({"bc_mask", std::move(bc_mask)});

  if (variant_requires_fields(variant)) {
    if (!fields) {
      throw InvalidConfigError("variant " + to_string(variant) +
                               " needs stress and energy field channels");
    }
    if (static_cast<int>(fields->von_mises.size()) != n ||
        static_cast<int>(fields->strain_energy.size()) != n) {
      throw InvalidInputError("field channels do not match the problem grid");
    }
    std::vector<double> vm = fields->von_mises;
    std::vector<double> energy = fields->strain_energy;
    normalize_peak(vm);
    normalize_peak(energy);
    stack.channels.push_back({"field_vm", std::move(vm)});
    stack.channels.push_back({"field_energy", std::move(energy)});
  } else {
    stack.channels.push_back({"kernel_load", superpose_loads(g, problem.loads, params)});
    stack.channels.push_back({"kernel_bc", bc_kernel(g, bc_points, params)});
  }

  stack.validate();
  return stack;
}

}  // namespace topogen
