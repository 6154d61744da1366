#pragma once

#include <span>
#include <vector>

namespace topogen {

// Square sparse matrix in compressed sparse row form. Column indices are
// sorted within each row and unique.
struct SparseMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> diagonal() const;
};

// Accumulates (i, j, v) triplets, merging duplicates on compress().
class SparseBuilder {
public:
  explicit SparseBuilder(int n) : n_(n) {}
  void add(int i, int j, double v) { entries_.push_back({i, j, v}); }
  SparseMatrix compress() const;

private:
  struct Entry {
    int i, j;
    double v;
  };
  int n_;
  std::vector<Entry> entries_;
};

struct PcgOptions {
  double rel_tol = 1e-8;
  // Iteration cap expressed as a multiple of the system size.
  int max_iter_factor = 10;
};

struct PcgResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Conjugate gradients with diagonal (Jacobi) preconditioning for symmetric
// positive definite systems. x holds the initial guess on entry and the
// solution on exit. Throws IllPosedError when the matrix is detected to be
// singular or indefinite.
PcgResult pcg_solve(const SparseMatrix& a, std::span<const double> b,
                    std::span<double> x, const PcgOptions& opts = {});

}  // namespace topogen
