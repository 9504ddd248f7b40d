#pragma once

#include <Eigen/Dense>

#include "pgpr/errors.hpp"

namespace pgpr::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kDefaultJitter = 1e-6;

// Dense symmetric matrix.  The constructor symmetrizes, so accumulated
// floating-point asymmetry from callers cannot leak into factorizations.
class SymMatrix {
 public:
  explicit SymMatrix(MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) {
      throw DimMismatch("SymMatrix requires a square matrix");
    }
    a_ = 0.5 * (a_ + a_.transpose()).eval();
  }

  Eigen::Index dim() const { return a_.rows(); }
  const MatrixXd& mat() const { return a_; }

 private:
  MatrixXd a_;
};

// Lower-triangular factor with strictly positive diagonal.
class LowerTriangular {
 public:
  explicit LowerTriangular(MatrixXd l) : l_(std::move(l)) {
    if (l_.rows() != l_.cols()) {
      throw DimMismatch("LowerTriangular requires a square matrix");
    }
    for (Eigen::Index j = 0; j < l_.cols(); ++j) {
      if (!(l_(j, j) > 0.0)) {
        throw FactorizationFailed("nonpositive diagonal in triangular factor");
      }
      for (Eigen::Index i = 0; i < j; ++i) l_(i, j) = 0.0;
    }
  }

  Eigen::Index dim() const { return l_.rows(); }
  const MatrixXd& mat() const { return l_; }
  double log_det() const { return l_.diagonal().array().log().sum(); }

 private:
  MatrixXd l_;
};

struct CholResult {
  LowerTriangular factor;
  double applied_jitter;
};

// Cholesky of a + j*I where j is the smallest value in
// {0, base, 10*base, ..., 1e5*base} that yields a successful factorization
// with finite positive pivots.  Throws FactorizationFailed when the ladder
// is exhausted.
CholResult cholesky_jitter(const SymMatrix& a, double base_jitter = kDefaultJitter);

// Solves l * x = b (transposed=false) or l^T * x = b (transposed=true).
MatrixXd tri_solve(const LowerTriangular& l, const MatrixXd& b,
                   bool transposed = false);

// KL(N(m_q, s_q) || N(m_p, s_p)) for positive-definite covariances.
double kl_mvn(const VectorXd& m_q, const SymMatrix& s_q, const VectorXd& m_p,
              const SymMatrix& s_p);

// KL(N(m, L L^T) || N(0, I)) with L lower triangular, diagonal > 0.
double kl_whitened_full(const VectorXd& m, const MatrixXd& chol_factor);

// KL(N(m, diag(exp(2*log_scale))) || N(0, I)).
double kl_whitened_diag(const VectorXd& m, const VectorXd& log_scale);

// Degenerate (point-mass) case: 0.5 * ||m||^2.
double kl_whitened_delta(const VectorXd& m);

// Reverse-mode pullback through l = chol(a): given the adjoint of l (lower
// triangular), returns the symmetric adjoint of a.
MatrixXd cholesky_pullback(const MatrixXd& l, const MatrixXd& l_bar);

}  // namespace pgpr::linalg
