#pragma once

#include <vector>

#include "topogen/errors.hpp"

namespace topogen {

// Regular grid of unit square elements.
//
// Elements are indexed (ex, ey) with ex in [0, nelx), ey in [0, nely); nodes
// are indexed (ix, iy) with ix in [0, nelx], iy in [0, nely]. Flat ids run
// y-fastest: element = ex * nely + ey, node = ix * (nely + 1) + iy. Every
// node carries two degrees of freedom, 2 * node (x) and 2 * node + 1 (y).
// Node (ix, iy) sits at coordinate (ix, iy); element centroids sit at
// (ex + 0.5, ey + 0.5).
struct Grid {
  int nelx = 0;
  int nely = 0;

  bool operator==(const Grid&) const = default;

  int n_elements() const { return nelx * nely; }
  int n_nodes() const { return (nelx + 1) * (nely + 1); }
  int n_dofs() const { return 2 * n_nodes(); }

  int element_id(int ex, int ey) const { return ex * nely + ey; }
  int node_id(int ix, int iy) const { return ix * (nely + 1) + iy; }

  void validate() const {
    if (nelx < 1 || nely < 1)
      throw InvalidInputError("grid needs at least one element per axis");
  }
};

// Per-element material densities, the design variable. Values live in [0, 1].
struct DensityField {
  Grid grid;
  std::vector<double> values;

  static DensityField uniform(const Grid& g, double value) {
    DensityField d;
    d.grid = g;
    d.values.assign(static_cast<size_t>(g.n_elements()), value);
    return d;
  }

  double& at(int ex, int ey) { return values[static_cast<size_t>(grid.element_id(ex, ey))]; }
  double at(int ex, int ey) const { return values[static_cast<size_t>(grid.element_id(ex, ey))]; }

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }

  void validate() const {
    grid.validate();
    if (values.size() != static_cast<size_t>(grid.n_elements()))
      throw InvalidInputError("density field size does not match grid");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0))
        throw InvalidInputError("density outside [0, 1]");
  }
};

}  // namespace topogen
