#include "pgpr/objectives.hpp"

#include <cmath>

#include "src/objective_core.hpp"

namespace pgpr::objectives {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::SVGP: return "svgp";
    case Method::MAP: return "map";
    case Method::GammaRobust: return "gamma_robust";
    case Method::VFITC: return "vfitc";
    case Method::PPGPR_Delta: return "ppgpr_delta";
    case Method::PPGPR_MF: return "ppgpr_mf";
    case Method::PPGPR_Chol: return "ppgpr_chol";
    case Method::PPGPR_MFD: return "ppgpr_mfd";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "svgp") return Method::SVGP;
  if (name == "map") return Method::MAP;
  if (name == "gamma_robust") return Method::GammaRobust;
  if (name == "vfitc") return Method::VFITC;
  if (name == "ppgpr_delta") return Method::PPGPR_Delta;
  if (name == "ppgpr_mf") return Method::PPGPR_MF;
  if (name == "ppgpr_chol") return Method::PPGPR_Chol;
  if (name == "ppgpr_mfd") return Method::PPGPR_MFD;
  throw ConfigError("unknown method: " + name);
}

CovRequirement cov_requirement(Method m) {
  switch (m) {
    case Method::SVGP:
    case Method::GammaRobust:
    case Method::VFITC:
      return CovRequirement::AnyDense;
    case Method::MAP:
    case Method::PPGPR_Delta:
      return CovRequirement::DeltaOnly;
    case Method::PPGPR_MF:
    case Method::PPGPR_MFD:
      return CovRequirement::DiagonalOnly;
    case Method::PPGPR_Chol:
      return CovRequirement::FullOnly;
  }
  return CovRequirement::AnyDense;
}

bool is_decoupled(Method m) { return m == Method::PPGPR_MFD; }

double log_normal_pdf(double y, double mu, double var) {
  if (!(var > 0.0)) {
    throw std::invalid_argument("log_normal_pdf needs positive variance");
  }
  const double e = y - mu;
  return -0.5 * (kLog2Pi + std::log(var) + e * e / var);
}

void check_state_for_method(const ModelState& s, Method method) {
  s.validate();
  const CovRequirement req = cov_requirement(method);
  const model::CovKind kind = s.cov.kind;
  bool ok = false;
  switch (req) {
    case CovRequirement::AnyDense:
      ok = kind == model::CovKind::Full || kind == model::CovKind::Diagonal;
      break;
    case CovRequirement::DiagonalOnly:
      ok = kind == model::CovKind::Diagonal;
      break;
    case CovRequirement::FullOnly:
      ok = kind == model::CovKind::Full;
      break;
    case CovRequirement::DeltaOnly:
      ok = kind == model::CovKind::Delta;
      break;
  }
  if (!ok) {
    throw ConfigError("method " + method_name(method) +
                      " does not train a " + model::cov_kind_name(kind) +
                      " covariance");
  }
  if (s.decoupled != is_decoupled(method)) {
    throw ConfigError("decoupled state flag does not match method " +
                      method_name(method));
  }
}

PointTerm point_term(Method method, double y, double mu, double kt,
                     double quad, double s, double gamma) {
  PointTerm t;
  const double e = y - mu;
  switch (method) {
    case Method::SVGP:
    case Method::MAP: {
      t.data = -0.5 * (kLog2Pi + std::log(s)) - e * e / (2.0 * s);
      const double cvar = method == Method::SVGP ? kt + quad : kt;
      t.trace = -cvar / (2.0 * s);
      t.d_mu = e / s;
      t.d_kt = -0.5 / s;
      t.d_quad = method == Method::SVGP ? -0.5 / s : 0.0;
      t.d_s = -0.5 / s + e * e / (2.0 * s * s) + cvar / (2.0 * s * s);
      break;
    }
    case Method::VFITC: {
      const double v = kt + s;
      t.data = -0.5 * (kLog2Pi + std::log(v)) - e * e / (2.0 * v);
      t.trace = -quad / (2.0 * v);
      t.d_mu = e / v;
      const double dv = -0.5 / v + e * e / (2.0 * v * v) + quad / (2.0 * v * v);
      t.d_kt = dv;
      t.d_s = dv;
      t.d_quad = -0.5 / v;
      break;
    }
    case Method::PPGPR_Delta:
    case Method::PPGPR_MF:
    case Method::PPGPR_Chol:
    case Method::PPGPR_MFD: {
      const double v = s + kt + quad;
      t.data = -0.5 * (kLog2Pi + std::log(v)) - e * e / (2.0 * v);
      t.trace = 0.0;
      t.d_mu = e / v;
      const double dv = -0.5 / v + e * e / (2.0 * v * v);
      t.d_kt = dv;
      t.d_quad = dv;
      t.d_s = dv;
      break;
    }
    case Method::GammaRobust: {
      const double eps = gamma - 1.0;
      const double log_two_pi_s = kLog2Pi + std::log(s);
      const double log_c = eps * eps / (2.0 * gamma) * log_two_pi_s +
                           eps / (2.0 * gamma) * std::log(gamma);
      const double vtot = s / eps + kt + quad;
      const double log_e_hat = -0.5 * eps * log_two_pi_s +
                               0.5 * (log_two_pi_s - std::log(eps)) +
                               log_normal_pdf(y, mu, vtot);
      const double score = gamma / eps * std::exp(log_c + log_e_hat);
      t.data = score;
      t.trace = 0.0;
      const double d_log_v = -0.5 / vtot + e * e / (2.0 * vtot * vtot);
      t.d_mu = score * e / vtot;
      t.d_kt = score * d_log_v;
      t.d_quad = score * d_log_v;
      t.d_s = score * (eps * eps / (2.0 * gamma * s) - 0.5 * eps / s +
                       0.5 / s + d_log_v / eps);
      break;
    }
  }
  return t;
}

double regularizer_value(const ModelState& s, Method method) {
  switch (method) {
    case Method::SVGP:
    case Method::GammaRobust:
    case Method::VFITC:
    case Method::PPGPR_MF:
    case Method::PPGPR_Chol:
      return model::kl_whitened(s.m_prime, s.cov);
    case Method::MAP:
    case Method::PPGPR_Delta:
      return linalg::kl_whitened_delta(s.m_prime);
    case Method::PPGPR_MFD:
      return linalg::kl_whitened_delta(s.m_prime) +
             linalg::kl_whitened_diag(VectorXd::Zero(s.cov.log_scale.size()),
                                      s.cov.log_scale);
  }
  return 0.0;
}

namespace detail {

EvalCore eval_core(const ModelState& s, const MatrixXd& x, const VectorXd& y,
                   const ObjectiveSpec& spec, par::Exec exec,
                   double base_jitter) {
  spec.validate();
  check_state_for_method(s, spec.method);
  const Eigen::Index n = x.rows();
  if (n != y.size()) {
    throw LengthMismatch("objective inputs: x rows and y length differ");
  }
  if (n < 1) {
    throw LengthMismatch("objective inputs are empty");
  }
  EvalCore core{model::whitened_features(s, x, model::InducingSet::Mean,
                                         base_jitter, exec),
                nullptr,
                VectorXd(),
                VectorXd::Zero(n),
                MatrixXd(),
                {},
                {}};
  if (s.decoupled) {
    core.basis_sigma = std::make_unique<model::WhitenedBasis>(
        model::whitened_features(s, x, model::InducingSet::Var, base_jitter,
                                 exec));
  }
  core.mu = core.basis_mu.a * s.m_prime;
  const model::WhitenedBasis& vb = core.var_basis();
  switch (s.cov.kind) {
    case model::CovKind::Full:
      core.v_full = vb.a * s.cov.chol_factor;
      core.quad = core.v_full.rowwise().squaredNorm();
      break;
    case model::CovKind::Diagonal: {
      const VectorXd scale = (2.0 * s.cov.log_scale.array()).exp().matrix();
      core.quad = vb.a.array().square().matrix() * scale;
      break;
    }
    case model::CovKind::Delta:
      break;
  }
  const double sv = s.sigma_obs_sq();
  core.terms.resize(static_cast<std::size_t>(n));
  par::parallel_for(n, [&](long i) {
    core.terms[static_cast<std::size_t>(i)] =
        point_term(spec.method, y[i], core.mu[i], vb.ktilde[i], core.quad[i],
                   sv, spec.gamma);
  }, exec);
  double sums[2];
  par::chunked_sum_vec(n, 2, sums, [&](long i, double* acc) {
    acc[0] += core.terms[static_cast<std::size_t>(i)].data;
    acc[1] += core.terms[static_cast<std::size_t>(i)].trace;
  }, exec);
  core.value.data_term = sums[0];
  core.value.trace_term = sums[1];
  core.value.regularizer = regularizer_value(s, spec.method);
  core.value.total =
      spec.minibatch_scale * (core.value.data_term + core.value.trace_term) -
      spec.beta_reg * core.value.regularizer;
  return core;
}

}  // namespace detail

namespace {

ObjectiveValue eval_checked(const ModelState& s, const MatrixXd& x,
                            const VectorXd& y, const ObjectiveSpec& spec) {
  return detail::eval_core(s, x, y, spec, par::Exec::Parallel,
                           linalg::kDefaultJitter)
      .value;
}

void require_method(const ObjectiveSpec& spec, std::initializer_list<Method> ms,
                    const char* fn) {
  for (Method m : ms) {
    if (spec.method == m) return;
  }
  throw ConfigError(std::string(fn) + " called with method " +
                    method_name(spec.method));
}

}  // namespace

ObjectiveValue svgp_elbo(const ModelState& s, const MatrixXd& x,
                         const VectorXd& y, const ObjectiveSpec& spec) {
  require_method(spec, {Method::SVGP}, "svgp_elbo");
  return eval_checked(s, x, y, spec);
}

ObjectiveValue map_objective(const ModelState& s, const MatrixXd& x,
                             const VectorXd& y, const ObjectiveSpec& spec) {
  require_method(spec, {Method::MAP}, "map_objective");
  return eval_checked(s, x, y, spec);
}

ObjectiveValue gamma_robust_objective(const ModelState& s, const MatrixXd& x,
                                      const VectorXd& y,
                                      const ObjectiveSpec& spec) {
  require_method(spec, {Method::GammaRobust}, "gamma_robust_objective");
  return eval_checked(s, x, y, spec);
}

ObjectiveValue vfitc_elbo(const ModelState& s, const MatrixXd& x,
                          const VectorXd& y, const ObjectiveSpec& spec) {
  require_method(spec, {Method::VFITC}, "vfitc_elbo");
  return eval_checked(s, x, y, spec);
}

ObjectiveValue ppgpr_objective(const ModelState& s, const MatrixXd& x,
                               const VectorXd& y, const ObjectiveSpec& spec) {
  require_method(spec,
                 {Method::PPGPR_Delta, Method::PPGPR_MF, Method::PPGPR_Chol,
                  Method::PPGPR_MFD},
                 "ppgpr_objective");
  return eval_checked(s, x, y, spec);
}

ObjectiveValue evaluate_objective(const ModelState& s, const MatrixXd& x,
                                  const VectorXd& y, const ObjectiveSpec& spec) {
  return eval_checked(s, x, y, spec);
}

namespace {

double dense_log_pdf(const MatrixXd& cov, const VectorXd& y) {
  const linalg::CholResult chol =
      linalg::cholesky_jitter(linalg::SymMatrix(cov), 0.0);
  const VectorXd w = linalg::tri_solve(chol.factor, y);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + w.squaredNorm()) -
         chol.factor.log_det();
}

}  // namespace

double fitc_log_marginal(const ModelState& s, const MatrixXd& x,
                         const VectorXd& y, int n_max) {
  s.validate();
  if (x.rows() != y.size()) {
    throw LengthMismatch("fitc_log_marginal: x rows and y length differ");
  }
  if (x.rows() > n_max) {
    throw SizeLimitExceeded("fitc_log_marginal: n exceeds dense limit");
  }
  const model::WhitenedBasis basis =
      model::whitened_features(s, x, model::InducingSet::Mean);
  MatrixXd cov = basis.a * basis.a.transpose();
  cov.diagonal() += basis.ktilde;
  cov.diagonal().array() += s.sigma_obs_sq();
  return dense_log_pdf(cov, y);
}

double exact_gp_log_marginal(const kernels::KernelParams& kernel,
                             double sigma_obs, const MatrixXd& x,
                             const VectorXd& y, int n_max) {
  if (!(sigma_obs > 0.0)) {
    throw std::invalid_argument("exact_gp_log_marginal needs sigma_obs > 0");
  }
  if (x.rows() != y.size()) {
    throw LengthMismatch("exact_gp_log_marginal: x rows and y length differ");
  }
  if (x.rows() > n_max) {
    throw SizeLimitExceeded("exact_gp_log_marginal: n exceeds dense limit");
  }
  MatrixXd cov = kernels::kernel_matrix(kernel, x, x);
  cov.diagonal().array() += sigma_obs * sigma_obs;
  return dense_log_pdf(cov, y);
}

PredictiveMoments exact_gp_predict(const kernels::KernelParams& kernel,
                                   double sigma_obs, const MatrixXd& x_train,
                                   const VectorXd& y_train,
                                   const MatrixXd& x_test, int n_max) {
  if (!(sigma_obs > 0.0)) {
    throw std::invalid_argument("exact_gp_predict needs sigma_obs > 0");
  }
  if (x_train.rows() != y_train.size()) {
    throw LengthMismatch("exact_gp_predict: x rows and y length differ");
  }
  if (x_train.rows() > n_max) {
    throw SizeLimitExceeded("exact_gp_predict: n exceeds dense limit");
  }
  MatrixXd cov = kernels::kernel_matrix(kernel, x_train, x_train);
  cov.diagonal().array() += sigma_obs * sigma_obs;
  const linalg::CholResult chol =
      linalg::cholesky_jitter(linalg::SymMatrix(cov), 0.0);
  const MatrixXd k_xt = kernels::kernel_matrix(kernel, x_train, x_test);
  const MatrixXd v = linalg::tri_solve(chol.factor, k_xt);  // n x t
  const VectorXd alpha = linalg::tri_solve(
      chol.factor, linalg::tri_solve(chol.factor, y_train), true);
  PredictiveMoments out;
  out.mu_f = k_xt.transpose() * alpha;
  out.var_f = (kernels::kernel_diag(kernel, x_test) -
               v.colwise().squaredNorm().transpose())
                  .cwiseMax(0.0);
  out.sigma_obs_sq = sigma_obs * sigma_obs;
  return out;
}

}  // namespace pgpr::objectives
