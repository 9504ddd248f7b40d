#include "pgpr/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pgpr/rng.hpp"
#include "pgpr/trainer.hpp"

namespace pgpr::model {

using nlohmann::json;

std::string cov_kind_name(CovKind k) {
  switch (k) {
    case CovKind::Full: return "full";
    case CovKind::Diagonal: return "diagonal";
    case CovKind::Delta: return "delta";
  }
  return "unknown";
}

CovKind cov_kind_from_name(const std::string& name) {
  if (name == "full") return CovKind::Full;
  if (name == "diagonal") return CovKind::Diagonal;
  if (name == "delta") return CovKind::Delta;
  throw ConfigError("unknown covariance kind: " + name);
}

void ModelState::validate() const {
  const int d = input_dim();
  if (z_mu.rows() < 1 || d < 1) {
    throw DimMismatch("state needs at least one inducing point");
  }
  if (z_sigma.cols() != d) {
    throw DimMismatch("z_sigma dimension differs from z_mu");
  }
  if (!decoupled && (z_sigma.rows() != z_mu.rows() || z_sigma != z_mu)) {
    throw DimMismatch("z_sigma must alias z_mu unless the state is decoupled");
  }
  if (m_prime.size() != z_mu.rows()) {
    throw DimMismatch("m_prime length differs from z_mu rows");
  }
  switch (cov.kind) {
    case CovKind::Full:
      if (cov.chol_factor.rows() != z_sigma.rows() ||
          cov.chol_factor.cols() != z_sigma.rows()) {
        throw DimMismatch("chol_factor shape differs from z_sigma");
      }
      for (Eigen::Index j = 0; j < cov.chol_factor.cols(); ++j) {
        if (!(cov.chol_factor(j, j) > 0.0)) {
          throw std::invalid_argument("chol_factor needs a positive diagonal");
        }
      }
      break;
    case CovKind::Diagonal:
      if (cov.log_scale.size() != z_sigma.rows()) {
        throw DimMismatch("log_scale length differs from z_sigma rows");
      }
      break;
    case CovKind::Delta:
      break;
  }
  if (!std::isfinite(log_sigma_obs)) {
    throw std::invalid_argument("non-finite log_sigma_obs");
  }
  if (kernel.dim() != d) {
    throw DimMismatch("kernel dimension differs from inducing inputs");
  }
  kernel.validate();
}

WhitenedBasis whitened_features(const ModelState& s, const MatrixXd& x,
                                InducingSet which, double base_jitter,
                                par::Exec exec) {
  const MatrixXd& z = which == InducingSet::Mean ? s.z_mu : s.z_sigma;
  if (x.cols() != z.cols()) {
    throw DimMismatch("whitened_features: input dimension mismatch");
  }
  const MatrixXd k_mm = kernels::kernel_matrix(s.kernel, z, z, exec);
  linalg::CholResult chol =
      linalg::cholesky_jitter(linalg::SymMatrix(k_mm), base_jitter);
  const MatrixXd k_xm = kernels::kernel_matrix(s.kernel, x, z, exec);
  MatrixXd a_t = linalg::tri_solve(chol.factor, k_xm.transpose());  // M x n
  const VectorXd kdiag = kernels::kernel_diag(s.kernel, x);
  VectorXd ktilde_raw = kdiag - a_t.colwise().squaredNorm().transpose();
  VectorXd ktilde = ktilde_raw.cwiseMax(0.0);
  return WhitenedBasis{a_t.transpose(), std::move(ktilde),
                       std::move(ktilde_raw), std::move(chol.factor),
                       chol.applied_jitter};
}

namespace {

VectorXd variance_from_basis(const WhitenedBasis& basis, const CovParam& cov) {
  switch (cov.kind) {
    case CovKind::Full: {
      const MatrixXd v = basis.a * cov.chol_factor;
      return basis.ktilde + v.rowwise().squaredNorm();
    }
    case CovKind::Diagonal: {
      const VectorXd scale = (2.0 * cov.log_scale.array()).exp().matrix();
      return basis.ktilde + basis.a.array().square().matrix() * scale;
    }
    case CovKind::Delta:
      return basis.ktilde;
  }
  return basis.ktilde;
}

}  // namespace

PredictiveMoments predictive_moments(const ModelState& s, const MatrixXd& x,
                                     double base_jitter, par::Exec exec) {
  s.validate();
  const WhitenedBasis basis_mu =
      whitened_features(s, x, InducingSet::Mean, base_jitter, exec);
  PredictiveMoments out;
  out.mu_f = basis_mu.a * s.m_prime;
  out.sigma_obs_sq = s.sigma_obs_sq();
  if (s.decoupled) {
    const WhitenedBasis basis_sigma =
        whitened_features(s, x, InducingSet::Var, base_jitter, exec);
    out.var_f = variance_from_basis(basis_sigma, s.cov);
  } else {
    out.var_f = variance_from_basis(basis_mu, s.cov);
  }
  out.var_f = out.var_f.cwiseMax(0.0);
  return out;
}

double kl_whitened(const VectorXd& m_prime, const CovParam& cov) {
  switch (cov.kind) {
    case CovKind::Full:
      return linalg::kl_whitened_full(m_prime, cov.chol_factor);
    case CovKind::Diagonal:
      return linalg::kl_whitened_diag(m_prime, cov.log_scale);
    case CovKind::Delta:
      return linalg::kl_whitened_delta(m_prime);
  }
  return 0.0;
}

ModelState init_state(const MatrixXd& x, const VectorXd& y, int num_inducing,
                      const ObjectiveSpec& spec, kernels::KernelFamily family,
                      std::uint64_t seed) {
  spec.validate();
  if (x.rows() != y.size()) {
    throw DimMismatch("init_state: x rows and y length differ");
  }
  if (num_inducing < 1 || num_inducing > x.rows()) {
    throw ConfigError("num_inducing must lie in [1, n]");
  }
  ModelState s;
  s.z_mu = trainer::kmeans(x, num_inducing, derive_seed(seed, 0));
  s.z_sigma = s.z_mu;
  s.decoupled = objectives::is_decoupled(spec.method);
  s.m_prime = VectorXd::Zero(num_inducing);
  switch (objectives::cov_requirement(spec.method)) {
    case objectives::CovRequirement::AnyDense:
    case objectives::CovRequirement::FullOnly:
      s.cov = CovParam::full_identity(num_inducing);
      break;
    case objectives::CovRequirement::DiagonalOnly:
      s.cov = CovParam::diagonal_zero(num_inducing);
      break;
    case objectives::CovRequirement::DeltaOnly:
      s.cov = CovParam::delta();
      break;
  }
  s.log_sigma_obs = 0.0;
  s.kernel = kernels::KernelParams::defaults(family, static_cast<int>(x.cols()));
  s.validate();
  return s;
}

namespace {

json mat_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

MatrixXd mat_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return MatrixXd(0, 0);
  const auto cols = j.at(0).size();
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = j.at(i);
    if (row.size() != cols) throw ConfigError("ragged matrix in checkpoint");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          row.at(c).get<double>();
    }
  }
  return m;
}

VectorXd vec_from_json(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  }
  return v;
}

}  // namespace

std::string to_json(const ModelState& s) {
  json j;
  j["version"] = kStateVersion;
  j["decoupled"] = s.decoupled;
  j["z_mu"] = mat_to_json(s.z_mu);
  j["z_sigma"] = mat_to_json(s.z_sigma);
  j["m_prime"] = vec_to_json(s.m_prime);
  json cov;
  cov["kind"] = cov_kind_name(s.cov.kind);
  if (s.cov.kind == CovKind::Full) cov["chol_factor"] = mat_to_json(s.cov.chol_factor);
  if (s.cov.kind == CovKind::Diagonal) cov["log_scale"] = vec_to_json(s.cov.log_scale);
  j["cov"] = std::move(cov);
  j["log_sigma_obs"] = s.log_sigma_obs;
  json kern;
  kern["family"] = kernels::family_name(s.kernel.family);
  kern["log_lengthscales"] = vec_to_json(s.kernel.log_lengthscales);
  kern["log_outputscale"] = s.kernel.log_outputscale;
  kern["log_period"] = s.kernel.log_period;
  j["kernel"] = std::move(kern);
  return j.dump(2);
}

ModelState state_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid checkpoint JSON: ") + e.what());
  }
  try {
    const std::string version = j.at("version").get<std::string>();
    if (version != kStateVersion) {
      throw VersionMismatch("checkpoint version '" + version +
                            "' does not match '" + kStateVersion + "'");
    }
    ModelState s;
    s.decoupled = j.at("decoupled").get<bool>();
    s.z_mu = mat_from_json(j.at("z_mu"));
    s.z_sigma = mat_from_json(j.at("z_sigma"));
    if (!s.decoupled) s.z_sigma = s.z_mu;
    s.m_prime = vec_from_json(j.at("m_prime"));
    const json& cov = j.at("cov");
    s.cov.kind = cov_kind_from_name(cov.at("kind").get<std::string>());
    if (s.cov.kind == CovKind::Full) {
      s.cov.chol_factor = mat_from_json(cov.at("chol_factor"));
    }
    if (s.cov.kind == CovKind::Diagonal) {
      s.cov.log_scale = vec_from_json(cov.at("log_scale"));
    }
    s.log_sigma_obs = j.at("log_sigma_obs").get<double>();
    const json& kern = j.at("kernel");
    s.kernel.family = kernels::family_from_name(kern.at("family").get<std::string>());
    s.kernel.log_lengthscales = vec_from_json(kern.at("log_lengthscales"));
    s.kernel.log_outputscale = kern.at("log_outputscale").get<double>();
    s.kernel.log_period = kern.at("log_period").get<double>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_state(const ModelState& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << to_json(s) << '\n';
}

ModelState load_state(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return state_from_json(ss.str());
}

}  // namespace pgpr::model
