#include "pgpr/linalg.hpp"

#include <cmath>

namespace pgpr::linalg {
namespace {

bool try_llt(const MatrixXd& a, MatrixXd* l_out) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  MatrixXd l = llt.matrixL();
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    const double d = l(j, j);
    if (!std::isfinite(d) || d <= 0.0) return false;
  }
  *l_out = std::move(l);
  return true;
}

}  // namespace

CholResult cholesky_jitter(const SymMatrix& a, double base_jitter) {
  if (base_jitter < 0.0) {
    throw std::invalid_argument("base_jitter must be nonnegative");
  }
  MatrixXd l;
  if (try_llt(a.mat(), &l)) {
    return CholResult{LowerTriangular(std::move(l)), 0.0};
  }
  if (base_jitter > 0.0) {
    double j = base_jitter;
    for (int attempt = 0; attempt < 6; ++attempt, j *= 10.0) {
      MatrixXd aj = a.mat();
      aj.diagonal().array() += j;
      if (try_llt(aj, &l)) {
        return CholResult{LowerTriangular(std::move(l)), j};
      }
    }
  }
  throw FactorizationFailed("Cholesky failed for all jitter levels (base " +
                            std::to_string(base_jitter) + ", dim " +
                            std::to_string(a.dim()) + ")");
}

MatrixXd tri_solve(const LowerTriangular& l, const MatrixXd& b, bool transposed) {
  if (l.dim() != b.rows()) {
    throw DimMismatch("tri_solve: factor dim " + std::to_string(l.dim()) +
                      " vs rhs rows " + std::to_string(b.rows()));
  }
  if (transposed) {
    return l.mat().transpose().triangularView<Eigen::Upper>().solve(b);
  }
  return l.mat().triangularView<Eigen::Lower>().solve(b);
}

double kl_mvn(const VectorXd& m_q, const SymMatrix& s_q, const VectorXd& m_p,
              const SymMatrix& s_p) {
  const Eigen::Index k = m_q.size();
  if (m_p.size() != k || s_q.dim() != k || s_p.dim() != k) {
    throw DimMismatch("kl_mvn: dimension mismatch");
  }
  const LowerTriangular lp = cholesky_jitter(s_p).factor;
  const LowerTriangular lq = cholesky_jitter(s_q).factor;
  const MatrixXd w = tri_solve(lp, lq.mat());          // Lp^{-1} Lq
  const VectorXd d = tri_solve(lp, m_q - m_p);         // Lp^{-1} (m_q - m_p)
  const double trace = w.squaredNorm();
  const double quad = d.squaredNorm();
  return 0.5 * (trace + quad - static_cast<double>(k)) + lp.log_det() -
         lq.log_det();
}

double kl_whitened_full(const VectorXd& m, const MatrixXd& chol_factor) {
  if (m.size() != chol_factor.rows()) {
    throw DimMismatch("kl_whitened_full: mean/factor dimension mismatch");
  }
  double log_det = 0.0;
  for (Eigen::Index j = 0; j < chol_factor.cols(); ++j) {
    log_det += std::log(chol_factor(j, j));
  }
  const double trace = chol_factor.squaredNorm();
  return 0.5 * (trace + m.squaredNorm() - static_cast<double>(m.size())) -
         log_det;
}

double kl_whitened_diag(const VectorXd& m, const VectorXd& log_scale) {
  if (m.size() != log_scale.size()) {
    throw DimMismatch("kl_whitened_diag: mean/scale dimension mismatch");
  }
  const auto w = log_scale.array();
  return 0.5 * ((2.0 * w).exp() - 2.0 * w - 1.0).sum() + 0.5 * m.squaredNorm();
}

double kl_whitened_delta(const VectorXd& m) { return 0.5 * m.squaredNorm(); }

MatrixXd cholesky_pullback(const MatrixXd& l, const MatrixXd& l_bar) {
  if (l.rows() != l.cols() || l_bar.rows() != l.rows() ||
      l_bar.cols() != l.cols()) {
    throw DimMismatch("cholesky_pullback: dimension mismatch");
  }
  MatrixXd phi = (l.transpose() * l_bar).eval();
  phi = phi.triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  // b = l^{-T} phi l^{-1}
  const auto ut = l.transpose().triangularView<Eigen::Upper>();
  MatrixXd tmp = ut.solve(phi);
  MatrixXd b = ut.solve(tmp.transpose()).transpose();
  return 0.5 * (b + b.transpose());
}

}  // namespace pgpr::linalg
