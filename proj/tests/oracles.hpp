#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library code paths they check: element matrices come from numerical
// quadrature instead of the closed form, and systems are solved densely.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "topogen/fea.hpp"
#include "topogen/grid.hpp"

namespace oracle {

using topogen::BoundaryConditions;
using topogen::DensityField;
using topogen::Grid;
using topogen::Loads;
using topogen::Material;

struct Bmat {
  // 3x8 strain-displacement matrix rows: exx, eyy, gxy.
  double b[3][8];
};

// Strain-displacement matrix of the unit square bilinear quad at reference
// point (xi, eta) in [-1,1]^2. Corner order (0,0), (1,0), (1,1), (0,1) with
// (x, y) dofs per corner.
inline Bmat b_matrix(double xi, double eta) {
  static const double cx[4] = {-1.0, 1.0, 1.0, -1.0};
  static const double cy[4] = {-1.0, -1.0, 1.0, 1.0};
  Bmat m{};
  for (int i = 0; i < 4; ++i) {
    const double dn_dxi = 0.25 * cx[i] * (1.0 + cy[i] * eta);
    const double dn_deta = 0.25 * cy[i] * (1.0 + cx[i] * xi);
    const double dn_dx = 2.0 * dn_dxi;   // unit element: x = (xi + 1)/2
    const double dn_dy = 2.0 * dn_deta;
    m.b[0][2 * i] = dn_dx;
    m.b[1][2 * i + 1] = dn_dy;
    m.b[2][2 * i] = dn_dy;
    m.b[2][2 * i + 1] = dn_dx;
  }
  return m;
}

inline std::array<std::array<double, 3>, 3> elasticity_matrix(double e, double nu) {
  const double c = e / (1.0 - nu * nu);
  return {{{c, c * nu, 0.0}, {c * nu, c, 0.0}, {0.0, 0.0, c * (1.0 - nu) / 2.0}}};
}

// Element stiffness by 2x2 Gauss quadrature of B^T D B over the unit square.
inline std::array<double, 64> element_stiffness_quadrature(double e, double nu) {
  const auto d = elasticity_matrix(e, nu);
  const double gp = 1.0 / std::sqrt(3.0);
  const double det_j = 0.25;
  std::array<double, 64> ke{};
  for (double xi : {-gp, gp}) {
    for (double eta : {-gp, gp}) {
      const Bmat bm = b_matrix(xi, eta);
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          double s = 0.0;
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) s += bm.b[r][i] * d[r][c] * bm.b[c][j];
          ke[static_cast<size_t>(8 * i + j)] += s * det_j;
        }
      }
    }
  }
  return ke;
}

// Dense global stiffness via the quadrature element matrix.
inline std::vector<std::vector<double>> dense_stiffness(const DensityField& density,
                                                        double penal,
                                                        const Material& mat) {
  const Grid& g = density.grid;
  const int n = g.n_dofs();
  std::vector<std::vector<double>> k(static_cast<size_t>(n),
                                     std::vector<double>(static_cast<size_t>(n), 0.0));
  const std::array<double, 64> ke = element_stiffness_quadrature(1.0, mat.poisson);
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      const double e = mat.young_void +
                       std::pow(density.at(ex, ey), penal) * (mat.young_solid - mat.young_void);
      const std::array<int, 8> dofs = topogen::element_dofs(g, ex, ey);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          k[static_cast<size_t>(dofs[static_cast<size_t>(i)])]
           [static_cast<size_t>(dofs[static_cast<size_t>(j)])] +=
              e * ke[static_cast<size_t>(8 * i + j)];
    }
  }
  return k;
}

// Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[static_cast<size_t>(r)][static_cast<size_t>(col)]) >
          std::fabs(a[static_cast<size_t>(piv)][static_cast<size_t>(col)]))
        piv = r;
    std::swap(a[static_cast<size_t>(col)], a[static_cast<size_t>(piv)]);
    std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
    const double d = a[static_cast<size_t>(col)][static_cast<size_t>(col)];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[static_cast<size_t>(r)][static_cast<size_t>(col)] / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c)
        a[static_cast<size_t>(r)][static_cast<size_t>(c)] -=
            f * a[static_cast<size_t>(col)][static_cast<size_t>(c)];
      b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[static_cast<size_t>(r)];
    for (int c = r + 1; c < n; ++c)
      s -= a[static_cast<size_t>(r)][static_cast<size_t>(c)] * x[static_cast<size_t>(c)];
    x[static_cast<size_t>(r)] = s / a[static_cast<size_t>(r)][static_cast<size_t>(r)];
  }
  return x;
}

// Full displacement vector from the dense route; fixed dofs are zero.
inline std::vector<double> dense_displacement(const DensityField& density, double penal,
                                              const Material& mat, const Loads& loads,
                                              const BoundaryConditions& bcs) {
  const Grid& g = density.grid;
  const int n = g.n_dofs();
  const auto k = dense_stiffness(density, penal, mat);
  const std::vector<double> f = loads.to_vector(n);

  std::vector<int> free;
  for (int d = 0; d < n; ++d)
    if (!bcs.fixed_dofs.contains(d)) free.push_back(d);

  const int nf = static_cast<int>(free.size());
  std::vector<std::vector<double>> kr(static_cast<size_t>(nf),
                                      std::vector<double>(static_cast<size_t>(nf)));
  std::vector<double> fr(static_cast<size_t>(nf));
  for (int i = 0; i < nf; ++i) {
    fr[static_cast<size_t>(i)] = f[static_cast<size_t>(free[static_cast<size_t>(i)])];
    for (int j = 0; j < nf; ++j)
      kr[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          k[static_cast<size_t>(free[static_cast<size_t>(i)])]
           [static_cast<size_t>(free[static_cast<size_t>(j)])];
  }
  const std::vector<double> xr = dense_solve(kr, fr);
  std::vector<double> u(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < nf; ++i)
    u[static_cast<size_t>(free[static_cast<size_t>(i)])] = xr[static_cast<size_t>(i)];
  return u;
}

// Random well-posed problem on a small grid: left edge fully fixed, one to
// three random nonzero point loads on free nodes.
struct RandomCase {
  DensityField density;
  Loads loads;
  BoundaryConditions bcs;
};

inline RandomCase random_case(std::mt19937_64& rng, int nelx, int nely,
                              double density_min = 0.1) {
  Grid g{nelx, nely};
  std::uniform_real_distribution<double> dens(density_min, 1.0);
  std::uniform_real_distribution<double> force(-1.0, 1.0);
  std::uniform_int_distribution<int> nx(1, nelx);
  std::uniform_int_distribution<int> ny(0, nely);
  std::uniform_int_distribution<int> nloads(1, 3);

  RandomCase c;
  c.density.grid = g;
  c.density.values.resize(static_cast<size_t>(g.n_elements()));
  for (double& v : c.density.values) v = dens(rng);

  for (int iy = 0; iy <= nely; ++iy) c.bcs.fix_node(g, 0, iy, true, true);

  const int nl = nloads(rng);
  for (int i = 0; i < nl; ++i) {
    topogen::PointLoad l;
    l.node = g.node_id(nx(rng), ny(rng));
    l.fx = force(rng);
    l.fy = force(rng);
    if (l.fx == 0.0 && l.fy == 0.0) l.fy = -1.0;
    c.loads.entries.push_back(l);
  }
  return c;
}

// Compliance along the dense route, for finite-difference probes.
inline double dense_compliance(const DensityField& density, double penal, const Material& mat,
                               const Loads& loads, const BoundaryConditions& bcs) {
  const std::vector<double> u = dense_displacement(density, penal, mat, loads, bcs);
  double c = 0.0;
  for (const auto& l : loads.entries) {
    c += l.fx * u[static_cast<size_t>(2 * l.node)] + l.fy * u[static_cast<size_t>(2 * l.node + 1)];
  }
  return c;
}

// Central finite difference of compliance w.r.t. one element's density.
inline double fd_sensitivity(const DensityField& density, int element, double h, double penal,
                             const Material& mat, const Loads& loads,
                             const BoundaryConditions& bcs) {
  DensityField up = density;
  DensityField dn = density;
  up.values[static_cast<size_t>(element)] += h;
  dn.values[static_cast<size_t>(element)] -= h;
  const double cu = dense_compliance(up, penal, mat, loads, bcs);
  const double cd = dense_compliance(dn, penal, mat, loads, bcs);
  return (cu - cd) / (2.0 * h);
}

// Density-weighted smoothing by direct summation over every element pair.
inline std::vector<double> filter_direct(const std::vector<double>& raw,
                                         const DensityField& density, double radius) {
  const Grid& g = density.grid;
  std::vector<double> out(raw.size(), 0.0);
  for (int ex = 0; ex < g.nelx; ++ex) {
    for (int ey = 0; ey < g.nely; ++ey) {
      double acc = 0.0;
      double wsum = 0.0;
      for (int fx = 0; fx < g.nelx; ++fx) {
        for (int fy = 0; fy < g.nely; ++fy) {
          const double w =
              radius - std::sqrt(double((ex - fx) * (ex - fx) + (ey - fy) * (ey - fy)));
          if (w <= 0.0) continue;
          const size_t f = static_cast<size_t>(g.element_id(fx, fy));
          acc += w * density.values[f] * raw[f];
          wsum += w;
        }
      }
      const size_t e = static_cast<size_t>(g.element_id(ex, ey));
      out[e] = acc / (std::max(1e-3, density.values[e]) * wsum);
    }
  }
  return out;
}

// Brute-force multiplier search for the two-element optimality-criteria toy.
// Returns the updated pair for the given move limit and volume target.
inline std::array<double, 2> two_element_oc(std::array<double, 2> x, std::array<double, 2> s,
                                            double move, double vf) {
  const auto at = [&](long double lambda) {
    std::array<long double, 2> out{};
    for (int i = 0; i < 2; ++i) {
      const long double cand = x[static_cast<size_t>(i)] *
                               std::sqrt(static_cast<long double>(-s[static_cast<size_t>(i)]) / lambda);
      const long double lo = std::max<long double>(x[static_cast<size_t>(i)] - move, 0.0L);
      const long double hi = std::min<long double>(x[static_cast<size_t>(i)] + move, 1.0L);
      out[static_cast<size_t>(i)] = std::clamp(cand, lo, hi);
    }
    return out;
  };
  long double lo = 1e-12L, hi = 1e12L;
  for (int it = 0; it < 500; ++it) {
    const long double mid = 0.5L * (lo + hi);
    const auto v = at(mid);
    ((v[0] + v[1]) / 2.0L > vf ? lo : hi) = mid;
  }
  const auto v = at(0.5L * (lo + hi));
  return {static_cast<double>(v[0]), static_cast<double>(v[1])};
}

inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace oracle
