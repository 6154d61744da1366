#include "topogen/sparse.hpp"

#include <algorithm>
#include <cmath>

#include "topogen/errors.hpp"

namespace topogen {

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      if (col[k] == i) d[i] = val[k];
  return d;
}

SparseMatrix SparseBuilder::compress() const {
  std::vector<Entry> sorted = entries_;
  // Stable sort keeps per-cell accumulation in insertion order, so (i, j) and
  // (j, i) sum identical values in the same order and K stays exactly
  // symmetric.
  std::stable_sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });

  SparseMatrix m;
  m.n = n_;
  m.row_ptr.assign(static_cast<size_t>(n_) + 1, 0);
  for (size_t k = 0; k < sorted.size();) {
    size_t k2 = k;
    double s = 0.0;
    while (k2 < sorted.size() && sorted[k2].i == sorted[k].i && sorted[k2].j == sorted[k].j)
      s += sorted[k2++].v;
    m.col.push_back(sorted[k].j);
    m.val.push_back(s);
    ++m.row_ptr[sorted[k].i + 1];
    k = k2;
  }
  for (int i = 0; i < n_; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

PcgResult pcg_solve(const SparseMatrix& a, std::span<const double> b,
                    std::span<double> x, const PcgOptions& opts) {
  const int n = a.n;
  const int max_iter = opts.max_iter_factor * n;

  double bnorm = 0.0;
  for (int i = 0; i < n; ++i) bnorm += b[i] * b[i];
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return {0, 0.0, true};
  }

  std::vector<double> diag = a.diagonal();
  for (int i = 0; i < n; ++i) {
    if (!(diag[i] > 0.0))
      throw IllPosedError("system matrix has a non-positive diagonal entry");
  }

  std::vector<double> r(static_cast<size_t>(n)), z(static_cast<size_t>(n)),
      p(static_cast<size_t>(n)), ap(static_cast<size_t>(n));

  a.multiply(x, ap);
  for (int i = 0; i < n; ++i) r[i] = b[i] - ap[i];

  double rnorm = 0.0;
  for (int i = 0; i < n; ++i) rnorm += r[i] * r[i];
  rnorm = std::sqrt(rnorm);
  if (rnorm / bnorm <= opts.rel_tol) return {0, rnorm / bnorm, true};

  for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rho = 0.0;
  for (int i = 0; i < n; ++i) rho += r[i] * z[i];

  int it = 0;
  for (; it < max_iter; ++it) {
    a.multiply(p, ap);
    double pap = 0.0;
    for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (!(pap > 0.0))
      throw IllPosedError("matrix is not positive definite (likely missing constraints)");

    const double alpha = rho / pap;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }

    rnorm = 0.0;
    for (int i = 0; i < n; ++i) rnorm += r[i] * r[i];
    rnorm = std::sqrt(rnorm);
    if (rnorm / bnorm <= opts.rel_tol) return {it + 1, rnorm / bnorm, true};

    for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    double rho_next = 0.0;
    for (int i = 0; i < n; ++i) rho_next += r[i] * z[i];
    const double beta = rho_next / rho;
    rho = rho_next;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return {it, rnorm / bnorm, false};
}

}  // namespace topogen
