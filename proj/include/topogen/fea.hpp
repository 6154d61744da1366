#pragma once

#include <array>
#include <set>
#include <vector>

#include "topogen/grid.hpp"
#include "topogen/sparse.hpp"

namespace topogen {

// Isotropic plane stress material. The void modulus keeps empty elements
// slightly stiff so the global matrix stays positive definite.
struct Material {
  double young_solid = 1.0;
  double young_void = 1e-9;
  double poisson = 0.3;

  // E(x) = E_void + x^p (E_solid - E_void)
  double modulus(double density, double penal) const;

  void validate() const;
};

struct PointLoad {
  int node = 0;
  double fx = 0.0;
  double fy = 0.0;
};

struct Loads {
  std::vector<PointLoad> entries;

  // Dense global force vector of size n_dofs.
  std::vector<double> to_vector(int n_dofs) const;
  void validate(const Grid& g) const;
};

struct BoundaryConditions {
  std::set<int> fixed_dofs;

  void fix_node(const Grid& g, int ix, int iy, bool x, bool y);
  void validate(const Grid& g) const;
};

struct DisplacementField {
  std::vector<double> u;
};

// Per-element scalar fields evaluated at element centroids.
struct FieldPair {
  std::vector<double> von_mises;
  std::vector<double> strain_energy;
};

// 8x8 stiffness of a unit square bilinear quadrilateral in plane stress with
// unit Young's modulus. Local dof order is (x, y) per corner, corners in the
// order (ex, ey), (ex+1, ey), (ex+1, ey+1), (ex, ey+1).
std::array<double, 64> element_stiffness(double poisson);

// Global dof ids of element (ex, ey) in local stiffness order.
std::array<int, 8> element_dofs(const Grid& g, int ex, int ey);

SparseMatrix assemble_stiffness(const DensityField& density, double penal,
                                const Material& material);

struct SolveOptions {
  double rel_tol = 1e-8;
  int max_iter_factor = 10;
};

// Solves K u = f for the free dofs; fixed dofs are held at zero. warm_start,
// when given, seeds the iterative solver with a previous solution.
DisplacementField solve_displacement(const SparseMatrix& k, const Loads& loads,
                                     const BoundaryConditions& bcs,
                                     const SolveOptions& opts = {},
                                     const DisplacementField* warm_start = nullptr);

// Work done by the applied loads, f^T u.
double compliance(const DisplacementField& u, const Loads& loads);

// Von Mises stress and strain energy density at element centroids. Element
// stiffness scales linearly with density here; penalization is a concern of
// the optimizer, not of field evaluation.
FieldPair stress_energy_fields(const DisplacementField& u, const DensityField& density,
                               const Material& material);

}  // namespace topogen
