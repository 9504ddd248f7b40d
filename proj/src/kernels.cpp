#include "pgpr/kernels.hpp"

#include <cmath>

namespace pgpr::kernels {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

double kappa(KernelFamily f, double r) {
  switch (f) {
    case KernelFamily::Matern12:
      return std::exp(-r);
    case KernelFamily::Matern32:
      return (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    case KernelFamily::Matern52:
      return (1.0 + kSqrt5 * r + (5.0 / 3.0) * r * r) * std::exp(-kSqrt5 * r);
    case KernelFamily::RBF:
      return std::exp(-0.5 * r * r);
    case KernelFamily::Periodic:
      break;
  }
  return 0.0;
}

// kappa'(r) / r, finite at r = 0 for the differentiable families.  Matern12
// has a cusp at r = 0; the subgradient used there is zero, which only
// matters on the diagonal of symmetric matrices where the position
// derivative vanishes anyway.
double kappa_slope_over_r(KernelFamily f, double r) {
  switch (f) {
    case KernelFamily::Matern12:
      return r > 0.0 ? -std::exp(-r) / r : 0.0;
    case KernelFamily::Matern32:
      return -3.0 * std::exp(-kSqrt3 * r);
    case KernelFamily::Matern52:
      return -(5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
    case KernelFamily::RBF:
      return -std::exp(-0.5 * r * r);
    case KernelFamily::Periodic:
      break;
  }
  return 0.0;
}

// Value and derivative pieces for one pair.  gx is the gradient with
// respect to the first argument; the second-argument gradient is its
// negation.  dll is the gradient with respect to the log-lengthscales and
// dlp with respect to the log-period.
double pair_grad(const KernelParams& p, const VectorXd& ell, double os,
                 const double* x, const double* z, double* gx, double* dll,
                 double* dlp) {
  const int d = p.dim();
  *dlp = 0.0;
  if (p.family == KernelFamily::Periodic) {
    const double period = p.period();
    double u = 0.0;
    for (int k = 0; k < d; ++k) {
      const double theta = M_PI * (x[k] - z[k]) / period;
      const double s = std::sin(theta);
      u += 2.0 * s * s / (ell[k] * ell[k]);
    }
    const double kv = os * std::exp(-u);
    double dlp_acc = 0.0;
    for (int k = 0; k < d; ++k) {
      const double theta = M_PI * (x[k] - z[k]) / period;
      const double inv_ell2 = 1.0 / (ell[k] * ell[k]);
      const double sin2t = std::sin(2.0 * theta);
      gx[k] = -kv * (2.0 * M_PI / period) * inv_ell2 * sin2t;
      const double s = std::sin(theta);
      dll[k] = kv * 4.0 * s * s * inv_ell2;
      dlp_acc += 2.0 * theta * inv_ell2 * sin2t;
    }
    *dlp = kv * dlp_acc;
    return kv;
  }
  double r2 = 0.0;
  for (int k = 0; k < d; ++k) {
    const double u = (x[k] - z[k]) / ell[k];
    gx[k] = u;  // stash the scaled difference
    r2 += u * u;
  }
  const double r = std::sqrt(r2);
  const double kv = os * kappa(p.family, r);
  const double h = os * kappa_slope_over_r(p.family, r);
  for (int k = 0; k < d; ++k) {
    const double u = gx[k];
    gx[k] = h * u / ell[k];
    dll[k] = -h * u * u;
  }
  return kv;
}

void check_inputs(const KernelParams& p, const MatrixXd& x, const MatrixXd& z) {
  p.validate();
  if (x.cols() != p.dim() || z.cols() != p.dim()) {
    throw DimMismatch("kernel inputs have " + std::to_string(x.cols()) + "/" +
                      std::to_string(z.cols()) + " columns, kernel expects " +
                      std::to_string(p.dim()));
  }
}

}  // namespace

std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Matern12: return "matern12";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::RBF: return "rbf";
    case KernelFamily::Periodic: return "periodic";
  }
  return "unknown";
}

KernelFamily family_from_name(const std::string& name) {
  if (name == "matern12") return KernelFamily::Matern12;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  if (name == "rbf") return KernelFamily::RBF;
  if (name == "periodic") return KernelFamily::Periodic;
  throw ConfigError("unknown kernel family: " + name);
}

void KernelParams::validate() const {
  if (log_lengthscales.size() < 1) {
    throw DimMismatch("kernel needs at least one lengthscale");
  }
  for (Eigen::Index i = 0; i < log_lengthscales.size(); ++i) {
    if (!std::isfinite(log_lengthscales[i])) {
      throw std::invalid_argument("non-finite log lengthscale");
    }
  }
  if (!std::isfinite(log_outputscale) || !std::isfinite(log_period)) {
    throw std::invalid_argument("non-finite kernel scale parameter");
  }
  if (!std::isfinite(outputscale()) || !std::isfinite(period())) {
    throw std::invalid_argument("kernel scale parameter overflows");
  }
}

MatrixXd kernel_matrix(const KernelParams& p, const MatrixXd& x,
                       const MatrixXd& z, Exec exec) {
  check_inputs(p, x, z);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = z.rows();
  MatrixXd k(n, m);
  if (n == 0 || m == 0) return k;
  const double os = p.outputscale();
  if (p.family == KernelFamily::Periodic) {
    const VectorXd ell = p.lengthscales();
    const double period = p.period();
    const MatrixXd xt = x.transpose();
    const MatrixXd zt = z.transpose();
    const int d = p.dim();
    par::parallel_for(n, [&](long i) {
      const double* xi = xt.col(i).data();
      for (Eigen::Index j = 0; j < m; ++j) {
        const double* zj = zt.col(j).data();
        double u = 0.0;
        for (int t = 0; t < d; ++t) {
          const double s = std::sin(M_PI * (xi[t] - zj[t]) / period);
          u += 2.0 * s * s / (ell[t] * ell[t]);
        }
        k(i, j) = os * std::exp(-u);
      }
    }, exec);
    return k;
  }
  // Expanded-square distances on lengthscale-normalized inputs, clamped at
  // zero before the square root.
  const Eigen::ArrayXd inv_ell = (-p.log_lengthscales.array()).exp();
  const MatrixXd xs = x.array().rowwise() * inv_ell.transpose();
  const MatrixXd zs = z.array().rowwise() * inv_ell.transpose();
  const VectorXd xsq = xs.rowwise().squaredNorm();
  const VectorXd zsq = zs.rowwise().squaredNorm();
  const MatrixXd g = xs * zs.transpose();
  const KernelFamily fam = p.family;
  par::parallel_for(n, [&](long i) {
    const double xi = xsq[i];
    for (Eigen::Index j = 0; j < m; ++j) {
      const double r2 = xi + zsq[j] - 2.0 * g(i, j);
      const double r = std::sqrt(r2 > 0.0 ? r2 : 0.0);
      k(i, j) = os * kappa(fam, r);
    }
  }, exec);
  return k;
}

VectorXd kernel_diag(const KernelParams& p, const MatrixXd& x) {
  check_inputs(p, x, x);
  return VectorXd::Constant(x.rows(), p.outputscale());
}

void kernel_matrix_vjp(const KernelParams& p, const MatrixXd& x,
                       const MatrixXd& z, const MatrixXd& k_bar, MatrixXd* dz,
                       KernelHyperGrad* dtheta, Exec exec) {
  check_inputs(p, x, z);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = z.rows();
  if (k_bar.rows() != n || k_bar.cols() != m) {
    throw DimMismatch("kernel_matrix_vjp: adjoint shape mismatch");
  }
  if (dz != nullptr && (dz->rows() != m || dz->cols() != p.dim())) {
    throw DimMismatch("kernel_matrix_vjp: dz shape mismatch");
  }
  if (n == 0 || m == 0) return;
  const int d = p.dim();
  const VectorXd ell = p.lengthscales();
  const double os = p.outputscale();
  const MatrixXd xt = x.transpose();
  const MatrixXd zt = z.transpose();
  // Hyperparameter partials are reduced deterministically over columns;
  // each column also owns one row of dz, so a single pass covers both.
  const int width = d + 2;
  std::vector<double> hyper(static_cast<std::size_t>(width));
  par::chunked_sum_vec(m, width, hyper.data(), [&](long j, double* acc) {
    const double* zj = zt.col(j).data();
    std::vector<double> gx(static_cast<std::size_t>(d));
    std::vector<double> dll(static_cast<std::size_t>(d));
    std::vector<double> dz_row(static_cast<std::size_t>(d), 0.0);
    double dlp = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = k_bar(i, j);
      if (w == 0.0) continue;
      const double kv =
          pair_grad(p, ell, os, xt.col(i).data(), zj, gx.data(), dll.data(), &dlp);
      for (int t = 0; t < d; ++t) {
        dz_row[t] -= w * gx[t];
        acc[t] += w * dll[t];
      }
      acc[d] += w * kv;
      acc[d + 1] += w * dlp;
    }
    if (dz != nullptr) {
      for (int t = 0; t < d; ++t) (*dz)(j, t) += dz_row[t];
    }
  }, exec);
  if (dtheta != nullptr) {
    for (int t = 0; t < d; ++t) dtheta->d_log_lengthscales[t] += hyper[t];
    dtheta->d_log_outputscale += hyper[d];
    if (p.family == KernelFamily::Periodic) dtheta->d_log_period += hyper[d + 1];
  }
}

void kernel_matrix_vjp_sym(const KernelParams& p, const MatrixXd& z,
                           const MatrixXd& k_bar, MatrixXd* dz,
                           KernelHyperGrad* dtheta, Exec exec) {
  check_inputs(p, z, z);
  const Eigen::Index m = z.rows();
  if (k_bar.rows() != m || k_bar.cols() != m) {
    throw DimMismatch("kernel_matrix_vjp_sym: adjoint shape mismatch");
  }
  if (dz != nullptr && (dz->rows() != m || dz->cols() != p.dim())) {
    throw DimMismatch("kernel_matrix_vjp_sym: dz shape mismatch");
  }
  if (m == 0) return;
  const int d = p.dim();
  const VectorXd ell = p.lengthscales();
  const double os = p.outputscale();
  const MatrixXd zt = z.transpose();
  const int width = d + 2;
  std::vector<double> hyper(static_cast<std::size_t>(width));
  par::chunked_sum_vec(m, width, hyper.data(), [&](long pnt, double* acc) {
    const double* zp = zt.col(pnt).data();
    std::vector<double> gx(static_cast<std::size_t>(d));
    std::vector<double> dll(static_cast<std::size_t>(d));
    std::vector<double> dz_row(static_cast<std::size_t>(d), 0.0);
    double dlp = 0.0;
    for (Eigen::Index q = 0; q < m; ++q) {
      const double wh = k_bar(pnt, q);            // hyper weight, each entry once
      const double wp = k_bar(pnt, q) + k_bar(q, pnt);  // position weight
      if (wh == 0.0 && wp == 0.0) continue;
      const double kv =
          pair_grad(p, ell, os, zp, zt.col(q).data(), gx.data(), dll.data(), &dlp);
      for (int t = 0; t < d; ++t) {
        dz_row[t] += wp * gx[t];
        acc[t] += wh * dll[t];
      }
      acc[d] += wh * kv;
      acc[d + 1] += wh * dlp;
    }
    if (dz != nullptr) {
      for (int t = 0; t < d; ++t) (*dz)(pnt, t) += dz_row[t];
    }
  }, exec);
  if (dtheta != nullptr) {
    for (int t = 0; t < d; ++t) dtheta->d_log_lengthscales[t] += hyper[t];
    dtheta->d_log_outputscale += hyper[d];
    if (p.family == KernelFamily::Periodic) dtheta->d_log_period += hyper[d + 1];
  }
}

}  // namespace pgpr::kernels
