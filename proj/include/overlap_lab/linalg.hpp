#pragma once

#include <cstddef>
#include <vector>

namespace overlap_lab {

/// Dense square matrix, row-major.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  explicit DenseMatrix(int n, double fill = 0.0)
      : n_(n), data_(static_cast<std::size_t>(n) * n, fill) {}
  DenseMatrix(int n, std::vector<double> data);

  int n() const noexcept { return n_; }
  double& operator()(int i, int j) noexcept { return data_[index(i, j)]; }
  double operator()(int i, int j) const noexcept { return data_[index(i, j)]; }
  const std::vector<double>& data() const noexcept { return data_; }

  double max_abs() const noexcept;
  double trace() const noexcept;

 private:
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * n_ + j;
  }

  int n_ = 0;
  std::vector<double> data_;
};

struct EigenResult {
  std::vector<double> eigenvalues;  // ascending
  int iterations = 0;               // sweeps performed
  double off_diag_residual = 0.0;   // Frobenius norm of the remaining off-diagonal part
};

struct EigenOptions {
  double tol = 1e-12;    // relative to the Frobenius norm of the input
  int max_sweeps = 100;
};

inline constexpr int kMaxDenseEigenSize = 512;

/// Cyclic Jacobi eigenvalues of a real symmetric matrix.
///
/// Iterates full sweeps of plane rotations until the off-diagonal Frobenius
/// norm drops to tol * ||A||_F. Throws not_symmetric when |a_ij - a_ji|
/// exceeds 1e-12 * max(1, max|A|) and no_convergence when the sweep budget
/// runs out.
EigenResult symmetric_eigenvalues(const DenseMatrix& a, EigenOptions opts = {});

/// Same as above but also returns eigenvectors as the columns of `vectors`.
EigenResult symmetric_eigensystem(const DenseMatrix& a, DenseMatrix& vectors,
                                  EigenOptions opts = {});

}  // namespace overlap_lab
