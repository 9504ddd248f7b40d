#pragma once

#include <string>
#include <vector>

#include "pgpr/objectives.hpp"

namespace pgpr::grad {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using model::ModelState;
using objectives::ObjectiveSpec;
using objectives::ObjectiveValue;

struct Segment {
  std::string name;
  int offset = 0;
  int size = 0;
};

// Flat parameter vector with named segments.  Segment order is fixed by the
// state's shape: m_prime, cov, z_mu, [z_sigma], log_lengthscales,
// log_outputscale, [log_period], log_sigma_obs.
struct ParamVector {
  VectorXd values;
  std::vector<Segment> segments;

  int size() const { return static_cast<int>(values.size()); }
  const Segment* find(const std::string& name) const {
    for (const Segment& s : segments) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

// Unconstrained coordinates for every parameter: the full covariance factor
// packs its diagonal through log, everything else is copied as-is.
ParamVector pack(const ModelState& s);

// Inverse of pack.  Shapes and the covariance kind come from *s; only the
// numeric values change.  For coupled states z_sigma tracks z_mu.
void unpack(const ParamVector& p, ModelState* s);

struct GradResult {
  ObjectiveValue value;
  ParamVector gradient;
};

// Objective value together with its exact gradient in packed coordinates.
// The jitter chosen by the forward factorization is treated as a constant.
GradResult objective_and_gradient(const ModelState& s, const MatrixXd& x,
                                  const VectorXd& y, const ObjectiveSpec& spec,
                                  par::Exec exec = par::Exec::Parallel,
                                  double base_jitter = linalg::kDefaultJitter);

struct FdSegmentReport {
  std::string name;
  double max_rel_err = 0.0;
};

struct FdReport {
  double max_rel_err = 0.0;
  std::vector<FdSegmentReport> segments;
  bool pass(double tol) const { return max_rel_err < tol; }
};

// Central finite differences against the analytic gradient, elementwise.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
FdReport finite_diff_check(const ModelState& s, const MatrixXd& x,
                           const VectorXd& y, const ObjectiveSpec& spec,
                           double step = 1e-5);

// Dense GP baseline trained by marginal-likelihood ascent.
struct ExactGpModel {
  kernels::KernelParams kernel;
  double log_sigma_obs = 0.0;

  double sigma_obs() const { return std::exp(log_sigma_obs); }
};

ParamVector pack_exact(const ExactGpModel& m);
void unpack_exact(const ParamVector& p, ExactGpModel* m);

// Log marginal likelihood and its gradient for the dense GP.
GradResult exact_gp_objective_and_gradient(const ExactGpModel& m,
                                           const MatrixXd& x,
                                           const VectorXd& y);

FdReport finite_diff_check_exact(const ExactGpModel& m, const MatrixXd& x,
                                 const VectorXd& y, double step = 1e-5);

// Diagnostic fixture for gradient checking: a fully random (but valid)
// state with the covariance kind and decoupling the method requires.
ModelState random_state(objectives::Method method, int num_inducing, int dim,
                        std::uint64_t seed,
                        kernels::KernelFamily family =
                            kernels::KernelFamily::Matern52);

}  // namespace pgpr::grad
