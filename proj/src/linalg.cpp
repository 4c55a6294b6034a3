#include "overlap_lab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "overlap_lab/errors.hpp"

namespace overlap_lab {

DenseMatrix::DenseMatrix(int n, std::vector<double> data)
    : n_(n), data_(std::move(data)) {
  if (n < 0 || data_.size() != static_cast<std::size_t>(n) * n) {
    throw Error(Errc::invalid_argument, "dense matrix data is not n*n");
  }
}

double DenseMatrix::max_abs() const noexcept {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

double DenseMatrix::trace() const noexcept {
  double t = 0.0;
  for (int i = 0; i < n_; ++i) t += (*this)(i, i);
  return t;
}

namespace {

double off_diagonal_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (int i = 0; i < a.n(); ++i) {
    for (int j = i + 1; j < a.n(); ++j) s += 2.0 * a(i, j) * a(i, j);
  }
  return std::sqrt(s);
}

double frobenius(const DenseMatrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return std::sqrt(s);
}

EigenResult jacobi(DenseMatrix a, DenseMatrix* vectors, EigenOptions opts) {
  const int n = a.n();
  if (n > kMaxDenseEigenSize) {
    throw Error(Errc::invalid_argument,
                "dense eigensolver limited to n <= " + std::to_string(kMaxDenseEigenSize));
  }
  const double sym_tol = 1e-12 * std::max(1.0, a.max_abs());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > sym_tol) {
        throw Error(Errc::not_symmetric, "matrix is not symmetric");
      }
      const double mean = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = mean;
      a(j, i) = mean;
    }
  }
  if (vectors) {
    *vectors = DenseMatrix(n);
    for (int i = 0; i < n; ++i) (*vectors)(i, i) = 1.0;
  }

  const double threshold = opts.tol * std::max(frobenius(a), 1e-300);
  EigenResult result;
  double off = off_diagonal_norm(a);
  while (off > threshold) {
    if (result.iterations >= opts.max_sweeps) {
      throw Error(Errc::no_convergence,
                  "Jacobi did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the 2x2 symmetric Schur decomposition.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int r = 0; r < n; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - s * arq;
          a(r, q) = s * arp + c * arq;
        }
        for (int r = 0; r < n; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - s * aqr;
          a(q, r) = s * apr + c * aqr;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        if (vectors) {
          DenseMatrix& v = *vectors;
          for (int r = 0; r < n; ++r) {
            const double vrp = v(r, p);
            const double vrq = v(r, q);
            v(r, p) = c * vrp - s * vrq;
            v(r, q) = s * vrp + c * vrq;
          }
        }
      }
    }
    ++result.iterations;
    off = off_diagonal_norm(a);
  }
  result.off_diag_residual = off;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return a(x, x) < a(y, y); });
  result.eigenvalues.reserve(n);
  for (int i : order) result.eigenvalues.push_back(a(i, i));
  if (vectors) {
    DenseMatrix sorted(n);
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) sorted(r, c) = (*vectors)(r, order[c]);
    }
    *vectors = std::move(sorted);
  }
  return result;
}

}  // namespace

EigenResult symmetric_eigenvalues(const DenseMatrix& a, EigenOptions opts) {
  return jacobi(a, nullptr, opts);
}

EigenResult symmetric_eigensystem(const DenseMatrix& a, DenseMatrix& vectors,
                                  EigenOptions opts) {
  return jacobi(a, &vectors, opts);
}

}  // namespace overlap_lab
