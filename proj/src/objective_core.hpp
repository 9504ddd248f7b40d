#pragma once

#include <memory>
#include <vector>

#include "pgpr/objectives.hpp"

// Shared forward pass for objective evaluation and its reverse sweep.
namespace pgpr::objectives::detail {

struct EvalCore {
  model::WhitenedBasis basis_mu;
  // Separate variance-branch basis; null when both branches share basis_mu.
  std::unique_ptr<model::WhitenedBasis> basis_sigma;
  Eigen::VectorXd mu;      // predictive means
  Eigen::VectorXd quad;    // a_i^T S' a_i per point (zero for delta)
  Eigen::MatrixXd v_full;  // A_sigma * chol_factor, Full covariance only
  std::vector<PointTerm> terms;
  ObjectiveValue value;

  const model::WhitenedBasis& var_basis() const {
    return basis_sigma ? *basis_sigma : basis_mu;
  }
};

EvalCore eval_core(const model::ModelState& s, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& y, const ObjectiveSpec& spec,
                   par::Exec exec, double base_jitter);

}  // namespace pgpr::objectives::detail
