#pragma once

#include <Eigen/Dense>
#include <string>

#include "pgpr/errors.hpp"
#include "pgpr/parallel.hpp"

namespace pgpr::kernels {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using par::Exec;

enum class KernelFamily { Matern12, Matern32, Matern52, RBF, Periodic };

std::string family_name(KernelFamily f);
KernelFamily family_from_name(const std::string& name);

// Stationary kernel with ARD lengthscales.  All scale parameters live on
// the log axis, so any finite parameter vector is valid.
struct KernelParams {
  KernelFamily family = KernelFamily::Matern52;
  VectorXd log_lengthscales;   // one per input dimension
  double log_outputscale = 0.0;  // log of the variance scale
  double log_period = 0.0;       // Periodic only

  static KernelParams defaults(KernelFamily f, int dim) {
    KernelParams p;
    p.family = f;
    p.log_lengthscales = VectorXd::Zero(dim);
    return p;
  }

  int dim() const { return static_cast<int>(log_lengthscales.size()); }
  double outputscale() const { return std::exp(log_outputscale); }
  double period() const { return std::exp(log_period); }
  VectorXd lengthscales() const {
    return log_lengthscales.array().exp().matrix();
  }
  void validate() const;
};

// Cross-covariance matrix k(x_i, z_j), n x m.
MatrixXd kernel_matrix(const KernelParams& p, const MatrixXd& x,
                       const MatrixXd& z, Exec exec = Exec::Parallel);

// Diagonal k(x_i, x_i); equals the outputscale for every stationary family.
VectorXd kernel_diag(const KernelParams& p, const MatrixXd& x);

struct KernelHyperGrad {
  VectorXd d_log_lengthscales;
  double d_log_outputscale = 0.0;
  double d_log_period = 0.0;

  static KernelHyperGrad zero(int dim) {
    KernelHyperGrad g;
    g.d_log_lengthscales = VectorXd::Zero(dim);
    return g;
  }
};

// Accumulates, for k = kernel_matrix(p, x, z) and adjoint k_bar (n x m),
// the gradients with respect to the second-argument positions z (into dz,
// m x d, may be null) and the hyperparameters (into dtheta, may be null).
void kernel_matrix_vjp(const KernelParams& p, const MatrixXd& x,
                       const MatrixXd& z, const MatrixXd& k_bar, MatrixXd* dz,
                       KernelHyperGrad* dtheta, Exec exec = Exec::Parallel);

// Same for the symmetric case k = kernel_matrix(p, z, z); dz receives the
// position gradient through both arguments.
void kernel_matrix_vjp_sym(const KernelParams& p, const MatrixXd& z,
                           const MatrixXd& k_bar, MatrixXd* dz,
                           KernelHyperGrad* dtheta, Exec exec = Exec::Parallel);

}  // namespace pgpr::kernels
