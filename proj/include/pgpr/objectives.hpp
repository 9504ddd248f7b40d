#pragma once

#include <Eigen/Dense>

#include "pgpr/model.hpp"
#include "pgpr/objective_spec.hpp"

namespace pgpr::objectives {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using model::ModelState;
using model::PredictiveMoments;

// Value of a training objective, with its pieces.  total =
// minibatch_scale * (data_term + trace_term) - beta_reg * regularizer.
// Objectives whose expectation absorbs the conditional variance report a
// zero trace_term.
struct ObjectiveValue {
  double total = 0.0;
  double data_term = 0.0;
  double trace_term = 0.0;
  double regularizer = 0.0;
};

// One observation's contribution given the whitened per-point quantities:
// mu (predictive mean), kt (clamped conditional variance residual), quad
// (variational variance through the basis), s (observation variance).
// Partials are of data + trace with respect to each input.
struct PointTerm {
  double data = 0.0;
  double trace = 0.0;
  double d_mu = 0.0;
  double d_kt = 0.0;
  double d_quad = 0.0;
  double d_s = 0.0;
};

PointTerm point_term(Method method, double y, double mu, double kt,
                     double quad, double s, double gamma);

// The five training objectives.  Each validates that the state's covariance
// parameterization matches the method.
ObjectiveValue svgp_elbo(const ModelState& s, const MatrixXd& x,
                         const VectorXd& y, const ObjectiveSpec& spec);
ObjectiveValue map_objective(const ModelState& s, const MatrixXd& x,
                             const VectorXd& y, const ObjectiveSpec& spec);
ObjectiveValue gamma_robust_objective(const ModelState& s, const MatrixXd& x,
                                      const VectorXd& y,
                                      const ObjectiveSpec& spec);
ObjectiveValue vfitc_elbo(const ModelState& s, const MatrixXd& x,
                          const VectorXd& y, const ObjectiveSpec& spec);
ObjectiveValue ppgpr_objective(const ModelState& s, const MatrixXd& x,
                               const VectorXd& y, const ObjectiveSpec& spec);

// Dispatch on spec.method.
ObjectiveValue evaluate_objective(const ModelState& s, const MatrixXd& x,
                                  const VectorXd& y, const ObjectiveSpec& spec);

// Regularizer for the method at this state (whitened coordinates).
double regularizer_value(const ModelState& s, Method method);

// Checks the covariance kind / decoupled flag against the method.
void check_state_for_method(const ModelState& s, Method method);

inline constexpr int kDenseLimit = 4096;

// Exact log marginal likelihood of the FITC joint (dense path, n capped).
double fitc_log_marginal(const ModelState& s, const MatrixXd& x,
                         const VectorXd& y, int n_max = kDenseLimit);

// Exact GP log marginal likelihood with observation noise sigma_obs.
double exact_gp_log_marginal(const kernels::KernelParams& kernel,
                             double sigma_obs, const MatrixXd& x,
                             const VectorXd& y, int n_max = kDenseLimit);

// Exact GP posterior moments at x_test given training data.
PredictiveMoments exact_gp_predict(const kernels::KernelParams& kernel,
                                   double sigma_obs, const MatrixXd& x_train,
                                   const VectorXd& y_train,
                                   const MatrixXd& x_test,
                                   int n_max = kDenseLimit);

// log N(y | mu, var).
double log_normal_pdf(double y, double mu, double var);

}  // namespace pgpr::objectives
