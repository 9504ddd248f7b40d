#pragma once

// Shared fixtures and independent oracles for the test suite.  Everything
// here recomputes results through plain dense Eigen algebra (explicit
// inverses, literal formulas) so the library's whitened/factored code paths
// are checked against a second, independent implementation.  Keep this file
// free of doctest so the acceptance binary can include it too.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>

#include "pgpr/grad.hpp"
#include "pgpr/model.hpp"
#include "pgpr/objectives.hpp"
#include "pgpr/rng.hpp"

namespace support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double sq(double v) { return v * v; }

inline double log_norm(double y, double mu, double var) {
  return -0.5 * std::log(2.0 * M_PI * var) - sq(y - mu) / (2.0 * var);
}

// Uniform points with a guaranteed pairwise separation, so kernel matrices
// stay comfortably full-rank and the zero-jitter rung always succeeds.
inline MatrixXd separated_points(int n, int d, std::uint64_t seed,
                                 double min_dist = 0.05, double lo = -2.0,
                                 double hi = 2.0) {
  pgpr::Rng rng(seed);
  MatrixXd x(n, d);
  int placed = 0;
  int attempts = 0;
  while (placed < n) {
    VectorXd cand(d);
    for (int j = 0; j < d; ++j) cand(j) = rng.uniform(lo, hi);
    bool ok = true;
    for (int i = 0; i < placed && ok; ++i) {
      if ((x.row(i).transpose() - cand).norm() < min_dist) ok = false;
    }
    if (ok) {
      x.row(placed++) = cand.transpose();
    } else if (++attempts > 100000) {
      min_dist *= 0.5;
      attempts = 0;
    }
  }
  return x;
}

// Random but tamer-than-grad-fixture state whose inducing points are well
// separated; suitable for bound and transcription checks where the
// zero-jitter Cholesky must succeed.
inline pgpr::model::ModelState tame_state(pgpr::objectives::Method method,
                                          int m, int dim, std::uint64_t seed) {
  using pgpr::objectives::Method;
  pgpr::model::ModelState s =
      pgpr::grad::random_state(method, m, dim, seed);
  s.z_mu = separated_points(m, dim, pgpr::derive_seed(seed, 11), 0.2);
  if (s.decoupled) {
    s.z_sigma = separated_points(m, dim, pgpr::derive_seed(seed, 12), 0.2);
  } else {
    s.z_sigma = s.z_mu;
  }
  pgpr::Rng rng(pgpr::derive_seed(seed, 13));
  for (int j = 0; j < dim; ++j) s.kernel.log_lengthscales(j) = rng.uniform(-0.2, 0.4);
  s.kernel.log_outputscale = rng.uniform(-0.3, 0.3);
  s.log_sigma_obs = rng.uniform(-0.6, 0.2);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Unwhitened transcription oracle.
//
// Maps the whitened parameters back to (m, S) through a dense Cholesky of
// K_MM and evaluates the per-method objective with explicit inverses:
//   mu_i   = k_i K^-1 m
//   kt_i   = k(x_i,x_i) - k_i K^-1 k_i^T
//   quad_i = k_i K^-1 S K^-1 k_i^T
// No whitened shortcut and no library solve is used anywhere.
// ---------------------------------------------------------------------------

struct Transcribed {
  double total = 0.0;
  double data = 0.0;
  double trace = 0.0;
  double reg = 0.0;
};

inline double dense_logdet(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  return 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

inline Transcribed transcribe_objective(const pgpr::model::ModelState& s,
                                        const MatrixXd& x, const VectorXd& y,
                                        const pgpr::objectives::ObjectiveSpec&
                                            spec) {
  using pgpr::kernels::kernel_matrix;
  using pgpr::model::CovKind;
  using pgpr::objectives::Method;

  const long n = x.rows();
  const int m_mu = s.m_mu();
  const int m_sg = s.m_sigma();
  const double sobs = s.sigma_obs_sq();

  const MatrixXd kmm_mu = kernel_matrix(s.kernel, s.z_mu, s.z_mu);
  const MatrixXd kxm_mu = kernel_matrix(s.kernel, x, s.z_mu);
  const MatrixXd kinv_mu = kmm_mu.inverse();
  const MatrixXd lam_mu =
      MatrixXd(Eigen::LLT<MatrixXd>(kmm_mu).matrixL());
  const VectorXd m_un = lam_mu * s.m_prime;

  const MatrixXd kmm_sg =
      s.decoupled ? kernel_matrix(s.kernel, s.z_sigma, s.z_sigma) : kmm_mu;
  const MatrixXd kxm_sg =
      s.decoupled ? kernel_matrix(s.kernel, x, s.z_sigma) : kxm_mu;
  const MatrixXd kinv_sg = s.decoupled ? kmm_sg.inverse() : kinv_mu;
  const MatrixXd lam_sg =
      s.decoupled ? MatrixXd(Eigen::LLT<MatrixXd>(kmm_sg).matrixL()) : lam_mu;

  MatrixXd s_un = MatrixXd::Zero(m_sg, m_sg);
  if (s.cov.kind == CovKind::Full) {
    const MatrixXd lf = lam_sg * s.cov.chol_factor;
    s_un = lf * lf.transpose();
  } else if (s.cov.kind == CovKind::Diagonal) {
    const VectorXd d = (2.0 * s.cov.log_scale).array().exp();
    s_un = lam_sg * d.asDiagonal() * lam_sg.transpose();
  }

  const double kxx = s.kernel.outputscale();
  Transcribed out;
  const double gamma = spec.gamma;
  const double eps = gamma - 1.0;
  for (long i = 0; i < n; ++i) {
    const VectorXd ki_mu = kxm_mu.row(i).transpose();
    const VectorXd ki_sg = kxm_sg.row(i).transpose();
    const double mu = ki_mu.dot(kinv_mu * m_un);
    double kt = kxx - ki_sg.dot(kinv_sg * ki_sg);
    if (kt < 0.0) kt = 0.0;
    const VectorXd w = kinv_sg * ki_sg;
    const double quad = w.dot(s_un * w);
    switch (spec.method) {
      case Method::SVGP:
        out.data += log_norm(y(i), mu, sobs);
        out.trace += -(kt + quad) / (2.0 * sobs);
        break;
      case Method::MAP:
        out.data += log_norm(y(i), mu, sobs);
        out.trace += -kt / (2.0 * sobs);
        break;
      case Method::GammaRobust: {
        const double vf = kt + quad;
        const double log_c = eps * eps / (2.0 * gamma) *
                                 std::log(2.0 * M_PI * sobs) +
                             eps / (2.0 * gamma) * std::log(gamma);
        const double log_e = -0.5 * eps * std::log(2.0 * M_PI * sobs) +
                             0.5 * std::log(2.0 * M_PI * sobs / eps) +
                             log_norm(y(i), mu, sobs / eps + vf);
        out.data += gamma / eps * std::exp(log_c + log_e);
        break;
      }
      case Method::VFITC: {
        const double v = kt + sobs;
        out.data += log_norm(y(i), mu, v);
        out.trace += -quad / (2.0 * v);
        break;
      }
      default:  // the four PPGPR variants share one data term
        out.data += log_norm(y(i), mu, sobs + kt + quad);
        break;
    }
  }

  switch (spec.method) {
    case Method::MAP:
    case Method::PPGPR_Delta:
      out.reg = 0.5 * m_un.dot(kinv_mu * m_un);
      break;
    case Method::PPGPR_MFD: {
      const double mean_part = 0.5 * m_un.dot(kinv_mu * m_un);
      const double var_part =
          0.5 * ((kinv_sg * s_un).trace() - m_sg + dense_logdet(kmm_sg) -
                 dense_logdet(s_un));
      out.reg = mean_part + var_part;
      break;
    }
    default:
      out.reg = 0.5 * ((kinv_sg * s_un).trace() + m_un.dot(kinv_mu * m_un) -
                       m_mu + dense_logdet(kmm_mu) - dense_logdet(s_un));
      break;
  }
  out.total = spec.minibatch_scale * (out.data + out.trace) -
              spec.beta_reg * out.reg;
  return out;
}

// Literal dense evaluation of the sparse-model marginal: N(y | 0,
// K_XM K_MM^-1 K_MX + diag(kdiag - diag(Q)) + sobs I).
inline double fitc_brute(const pgpr::model::ModelState& s, const MatrixXd& x,
                         const VectorXd& y) {
  using pgpr::kernels::kernel_matrix;
  const long n = x.rows();
  const MatrixXd kmm = kernel_matrix(s.kernel, s.z_mu, s.z_mu);
  const MatrixXd kxm = kernel_matrix(s.kernel, x, s.z_mu);
  const MatrixXd q = kxm * kmm.inverse() * kxm.transpose();
  MatrixXd cov = q;
  const double kxx = s.kernel.outputscale();
  for (long i = 0; i < n; ++i) {
    cov(i, i) += (kxx - q(i, i)) + s.sigma_obs_sq();
  }
  Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd alpha = llt.solve(y);
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) +
                 dense_logdet(cov) + y.dot(alpha));
}

inline double exact_gp_brute(const pgpr::kernels::KernelParams& kernel,
                             double sigma_obs, const MatrixXd& x,
                             const VectorXd& y) {
  const MatrixXd k = pgpr::kernels::kernel_matrix(kernel, x, x) +
                     sigma_obs * sigma_obs *
                         MatrixXd::Identity(x.rows(), x.rows());
  const VectorXd alpha = k.inverse() * y;
  return -0.5 * (static_cast<double>(x.rows()) * std::log(2.0 * M_PI) +
                 dense_logdet(k) + y.dot(alpha));
}

// ---------------------------------------------------------------------------
// CRPS by numerical integration of its definition
//   crps = int (F(t) - 1{t >= y})^2 dt
// split at the kink, each side by composite Simpson.
// ---------------------------------------------------------------------------

inline double normal_cdf_ref(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int intervals) {
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) {
    acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

inline double crps_quadrature(double y, double mu, double sigma) {
  const double lo = mu - 14.0 * sigma;
  const double hi = mu + 14.0 * sigma;
  auto fcdf = [&](double t) { return normal_cdf_ref((t - mu) / sigma); };
  auto left = [&](double t) { return sq(fcdf(t)); };
  auto right = [&](double t) { return sq(1.0 - fcdf(t)); };
  const double split = std::min(std::max(y, lo), hi);
  const int n = 20000;
  double total = 0.0;
  if (split > lo) total += simpson(left, lo, split, n);
  if (hi > split) total += simpson(right, split, hi, n);
  // Outside the window the integrand is an indicator, integrable by hand.
  if (y < lo) total += lo - y;
  if (y > hi) total += y - hi;
  return total;
}

// Sine regression data on [-1, 1] with homoscedastic noise.
inline void sine_data(int n, std::uint64_t seed, double noise, MatrixXd* x,
                      VectorXd* y) {
  pgpr::Rng rng(seed);
  x->resize(n, 1);
  y->resize(n);
  for (int i = 0; i < n; ++i) {
    const double xi = rng.uniform(-1.0, 1.0);
    (*x)(i, 0) = xi;
    (*y)(i) = std::sin(2.0 * M_PI * xi) + noise * rng.normal();
  }
}

}  // namespace support
