#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "pgpr/kernels.hpp"
#include "pgpr/linalg.hpp"
#include "pgpr/objective_spec.hpp"

namespace pgpr::model {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using objectives::ObjectiveSpec;

inline constexpr const char* kStateVersion = "pgpr-state-v1";

enum class CovKind { Full, Diagonal, Delta };

std::string cov_kind_name(CovKind k);
CovKind cov_kind_from_name(const std::string& name);

// Whitened variational covariance.  Full keeps a lower-triangular factor
// with positive diagonal, Diagonal keeps per-coordinate log scales, Delta is
// a point mass (no parameters).
struct CovParam {
  CovKind kind = CovKind::Full;
  MatrixXd chol_factor;  // Full
  VectorXd log_scale;    // Diagonal

  static CovParam full_identity(int m) {
    CovParam c;
    c.kind = CovKind::Full;
    c.chol_factor = MatrixXd::Identity(m, m);
    return c;
  }
  static CovParam diagonal_zero(int m) {
    CovParam c;
    c.kind = CovKind::Diagonal;
    c.log_scale = VectorXd::Zero(m);
    return c;
  }
  static CovParam delta() {
    CovParam c;
    c.kind = CovKind::Delta;
    return c;
  }
  int dim() const {
    switch (kind) {
      case CovKind::Full: return static_cast<int>(chol_factor.rows());
      case CovKind::Diagonal: return static_cast<int>(log_scale.size());
      case CovKind::Delta: return 0;
    }
    return 0;
  }
};

// Full parameter state of a sparse GP regressor, everything in whitened
// coordinates.  z_sigma aliases z_mu unless `decoupled` is set; only the
// decoupled variant trains them separately.
struct ModelState {
  MatrixXd z_mu;      // inducing inputs for the mean branch, M_mu x d
  MatrixXd z_sigma;   // inducing inputs for the variance branch, M_sigma x d
  bool decoupled = false;
  VectorXd m_prime;   // whitened variational mean, length M_mu
  CovParam cov;       // whitened variational covariance over z_sigma
  double log_sigma_obs = 0.0;
  kernels::KernelParams kernel;

  double sigma_obs() const { return std::exp(log_sigma_obs); }
  double sigma_obs_sq() const { return std::exp(2.0 * log_sigma_obs); }
  int input_dim() const { return static_cast<int>(z_mu.cols()); }
  int m_mu() const { return static_cast<int>(z_mu.rows()); }
  int m_sigma() const { return static_cast<int>(z_sigma.rows()); }

  // Structural checks: shapes conform, parameters finite, cov matches.
  void validate() const;
};

enum class InducingSet { Mean, Var };

// Whitened representation of a block of inputs against one inducing set:
// rows of `a` are a_i = L^{-1} k(Z, x_i), `ktilde` is the clamped residual
// k(x_i, x_i) - ||a_i||^2, and `ktilde_raw` the unclamped value (its sign
// drives the clamp subgradient in the backward pass).
struct WhitenedBasis {
  MatrixXd a;          // n x M
  VectorXd ktilde;     // n, clamped at zero
  VectorXd ktilde_raw; // n
  linalg::LowerTriangular l;  // jittered Cholesky factor of K_MM
  double applied_jitter = 0.0;
};

WhitenedBasis whitened_features(const ModelState& s, const MatrixXd& x,
                                InducingSet which,
                                double base_jitter = linalg::kDefaultJitter,
                                par::Exec exec = par::Exec::Parallel);

struct PredictiveMoments {
  VectorXd mu_f;         // latent predictive mean
  VectorXd var_f;        // latent predictive variance (nonnegative)
  double sigma_obs_sq;   // observation variance to add for y-space
};

// Latent predictive mean/variance at x under the state's variational
// posterior.  The y-space predictive is N(mu_f, var_f + sigma_obs_sq).
PredictiveMoments predictive_moments(const ModelState& s, const MatrixXd& x,
                                     double base_jitter = linalg::kDefaultJitter,
                                     par::Exec exec = par::Exec::Parallel);

// Whitened KL / prior-energy regularizer for the state's covariance kind,
// dispatching to the linalg primitives.
double kl_whitened(const VectorXd& m_prime, const CovParam& cov);

// Fresh state for a method: inducing points from k-means on x, identity
// whitened covariance, zero mean, unit scales.
ModelState init_state(const MatrixXd& x, const VectorXd& y, int num_inducing,
                      const ObjectiveSpec& spec, kernels::KernelFamily family,
                      std::uint64_t seed);

// Checkpoint serialization (versioned JSON).
std::string to_json(const ModelState& s);
ModelState state_from_json(const std::string& text);
void save_state(const ModelState& s, const std::string& path);
ModelState load_state(const std::string& path);

}  // namespace pgpr::model
