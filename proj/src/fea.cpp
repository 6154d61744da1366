#include "topogen/fea.hpp"

#include <cmath>

#include "topogen/errors.hpp"

namespace topogen {

double Material::modulus(double density, double penal) const {
  return young_void + std::pow(density, penal) * (young_solid - young_void);
}

void Material::validate() const {
  if (!(young_solid > 0.0) || !(young_void > 0.0) || young_void >= young_solid)
    throw InvalidInputError("need 0 < young_void < young_solid");
  if (!(poisson >= 0.0 && poisson < 0.5))
    throw InvalidInputError("poisson ratio outside [0, 0.5)");
}

std::vector<double> Loads::to_vector(int n_dofs) const {
  std::vector<double> f(static_cast<size_t>(n_dofs), 0.0);
  for (const PointLoad& l : entries) {
    if (l.node < 0 || 2 * l.node + 1 >= n_dofs)
      throw InvalidInputError("load node out of range");
    f[static_cast<size_t>(2 * l.node)] += l.fx;
    f[static_cast<size_t>(2 * l.node) + 1] += l.fy;
  }
  return f;
}

void Loads::validate(const Grid& g) const {
  bool any = false;
  for (const PointLoad& l : entries) {
    if (l.node < 0 || l.node >= g.n_nodes())
      throw InvalidInputError("load node out of range");
    if (l.fx != 0.0 || l.fy != 0.0) any = true;
  }
  if (!any) throw InvalidInputError("loads carry no nonzero force");
}

void BoundaryConditions::fix_node(const Grid& g, int ix, int iy, bool x, bool y) {
  const int n = g.node_id(ix, iy);
  if (x) fixed_dofs.insert(2 * n);
  if (y) fixed_dofs.insert(2 * n + 1);
}

void BoundaryConditions::validate(const Grid& g) const {
  if (fixed_dofs.empty()) throw InvalidInputError("no fixed dofs");
  for (int d : fixed_dofs)
    if (d < 0 || d >= g.n_dofs()) throw InvalidInputError("fixed dof out of range");
}

std::array<double, 64> element_stiffness(double poisson) {
  const double nu = poisson;
  const double k[8] = {
      0.5 - nu / 6.0,    0.125 + nu / 8.0,  -0.25 - nu / 12.0, -0.125 + 3.0 * nu / 8.0,
      -0.25 + nu / 12.0, -0.125 - nu / 8.0, nu / 6.0,          0.125 - 3.0 * nu / 8.0};
  // Index pattern of the closed-form matrix; rows permute the same 8 values.
  static const int idx[8][8] = {
      {0, 1, 2, 3, 4, 5, 6, 7}, {1, 0, 7, 6, 5, 4, 3, 2}, {2, 7, 0, 5, 6, 3, 4, 1},
      {3, 6, 5, 0, 7, 2, 1, 4}, {4, 5, 6, 7, 0, 1, 2, 3}, {5, 4, 3, 2, 1, 0, 7, 6},
      {6, 3, 4, 1, 2, 7, 0, 5}, {7, 2, 1, 4, 3, 6, 5, 0}};
  const double scale = 1.0 / (1.0 - nu * nu);
  std::array<double, 64> ke{};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) ke[static_cast<size_t>(8 * i + j)] = scale * k[idx[i][j]];
  return ke;
}

std::array<int, 8> element_dofs(const Grid& g, int ex, int ey) {
  const int n1 = g.node_id(ex, ey);
  const int n2 = g.node_id(ex + 1, ey);
  const int n3 = g.node_id(ex + 1, ey + 1);
  const int n4 = g.node_id(ex, ey + 1);
  return {2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1};
}

SparseMatrix assemble_stiffness(const DensityField& density, double penal,
                                const Material& material) {
  density.validate();
  material.validate();
  if (!(penal >= 1.0)) throw InvalidInputError("penalization exponent below 1");

  const Grid& g = density.grid;
  const std::array<double, 64> ke = element_stiffness(material.poisson);

  SparseBuilder builder(g.n_dofs());
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const double e = material.modulus(density.at(ex, ey), penal);
      const std::array<int, 8> dofs = element_dofs(g, ex, ey);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          builder.add(dofs[static_cast<size_t>(i)], dofs[static_cast<size_t>(j)],
                      e * ke[static_cast<size_t>(8 * i + j)]);
    }
  }
  return builder.compress();
}

DisplacementField solve_displacement(const SparseMatrix& k, const Loads& loads,
                                     const BoundaryConditions& bcs,
                                     const SolveOptions& opts,
                                     const DisplacementField* warm_start) {
  const int n = k.n;
  for (int d : bcs.fixed_dofs)
    if (d < 0 || d >= n) throw InvalidInputError("fixed dof out of range");
  // Three constraints are the bare minimum to pin down rigid body motion.
  if (bcs.fixed_dofs.size() < 3)
    throw IllPosedError("fewer than three fixed dofs leaves rigid body motion");

  std::vector<int> to_free(static_cast<size_t>(n), -1);
  std::vector<int> free_dofs;
  free_dofs.reserve(static_cast<size_t>(n) - bcs.fixed_dofs.size());
  for (int d = 0; d < n; ++d) {
    if (!bcs.fixed_dofs.contains(d)) {
      to_free[static_cast<size_t>(d)] = static_cast<int>(free_dofs.size());
      free_dofs.push_back(d);
    }
  }

  const int nf = static_cast<int>(free_dofs.size());
  SparseMatrix red;
  red.n = nf;
  red.row_ptr.assign(static_cast<size_t>(nf) + 1, 0);
  for (int fi = 0; fi < nf; ++fi) {
    const int d = free_dofs[static_cast<size_t>(fi)];
    for (int p = k.row_ptr[d]; p < k.row_ptr[d + 1]; ++p) {
      const int cj = to_free[static_cast<size_t>(k.col[p])];
      if (cj >= 0) {
        red.col.push_back(cj);
        red.val.push_back(k.val[p]);
      }
    }
    red.row_ptr[static_cast<size_t>(fi) + 1] = static_cast<int>(red.col.size());
  }

  const std::vector<double> f = loads.to_vector(n);
  std::vector<double> fr(static_cast<size_t>(nf));
  for (int fi = 0; fi < nf; ++fi) fr[static_cast<size_t>(fi)] = f[static_cast<size_t>(free_dofs[static_cast<size_t>(fi)])];

  std::vector<double> xr(static_cast<size_t>(nf), 0.0);
  if (warm_start && warm_start->u.size() == static_cast<size_t>(n))
    for (int fi = 0; fi < nf; ++fi)
      xr[static_cast<size_t>(fi)] = warm_start->u[static_cast<size_t>(free_dofs[static_cast<size_t>(fi)])];

  PcgOptions popts;
  popts.rel_tol = opts.rel_tol;
  popts.max_iter_factor = opts.max_iter_factor;
  const PcgResult res = pcg_solve(red, fr, xr, popts);
  if (!res.converged)
    throw SolverError("displacement solve did not converge", res.rel_residual);

  DisplacementField out;
  out.u.assign(static_cast<size_t>(n), 0.0);
  for (int fi = 0; fi < nf; ++fi)
    out.u[static_cast<size_t>(free_dofs[static_cast<size_t>(fi)])] = xr[static_cast<size_t>(fi)];
  return out;
}

double compliance(const DisplacementField& u, const Loads& loads) {
  double c = 0.0;
  for (const PointLoad& l : loads.entries) {
    const size_t dx = static_cast<size_t>(2 * l.node);
    if (dx + 1 >= u.u.size()) throw InvalidInputError("load node out of range");
    c += l.fx * u.u[dx] + l.fy * u.u[dx + 1];
  }
  return c;
}

FieldPair stress_energy_fields(const DisplacementField& u, const DensityField& density,
                               const Material& material) {
  density.validate();
  const Grid& g = density.grid;
  if (u.u.size() != static_cast<size_t>(g.n_dofs()))
    throw InvalidInputError("displacement size does not match grid");

  const double nu = material.poisson;
  FieldPair out;
  out.von_mises.resize(static_cast<size_t>(g.n_elements()));
  out.strain_energy.resize(static_cast<size_t>(g.n_elements()));

  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const std::array<int, 8> d = element_dofs(g, ex, ey);
      double ue[8];
      for (int i = 0; i < 8; ++i) ue[i] = u.u[static_cast<size_t>(d[static_cast<size_t>(i)])];

      // Centroid strains of the bilinear quad (shape gradients are +-1/2).
      const double exx = 0.5 * (-ue[0] + ue[2] + ue[4] - ue[6]);
      const double eyy = 0.5 * (-ue[1] - ue[3] + ue[5] + ue[7]);
      const double gxy = 0.5 * (-ue[0] - ue[2] + ue[4] + ue[6]) +
                         0.5 * (-ue[1] + ue[3] + ue[5] - ue[7]);

      const double e = material.modulus(density.at(ex, ey), 1.0);
      const double c = e / (1.0 - nu * nu);
      const double sxx = c * (exx + nu * eyy);
      const double syy = c * (nu * exx + eyy);
      const double sxy = c * 0.5 * (1.0 - nu) * gxy;

      const size_t id = static_cast<size_t>(g.element_id(ex, ey));
      out.von_mises[id] = std::sqrt(sxx * sxx - sxx * syy + syy * syy + 3.0 * sxy * sxy);
      out.strain_energy[id] = 0.5 * (sxx * exx + syy * eyy + sxy * gxy);
    }
  }
  return out;
}

}  // namespace topogen
