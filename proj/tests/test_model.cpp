#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pgpr/model.hpp"
#include "pgpr/objectives.hpp"
#include "pgpr/rng.hpp"
#include "support.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace pgpr::model;
using pgpr::objectives::Method;
using pgpr::objectives::ObjectiveSpec;

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) < (tol))

namespace {

// One inducing point at the origin, exponential kernel with unit scales, the
// query placed so that k(x, 0) = 1/2 exactly: x = ln 2.  Whitening is the
// identity here because k(0,0) = 1.
ModelState scalar_state(CovKind kind) {
  ModelState s;
  s.z_mu = MatrixXd::Zero(1, 1);
  s.z_sigma = s.z_mu;
  s.m_prime = VectorXd::Constant(1, 2.0);
  s.kernel = pgpr::kernels::KernelParams::defaults(
      pgpr::kernels::KernelFamily::Matern12, 1);
  s.log_sigma_obs = 0.0;
  switch (kind) {
    case CovKind::Full:
      s.cov = CovParam::full_identity(1);
      s.cov.chol_factor(0, 0) = 0.5;  // S' = 0.25
      break;
    case CovKind::Diagonal:
      s.cov = CovParam::diagonal_zero(1);
      s.cov.log_scale(0) = std::log(0.5);
      break;
    case CovKind::Delta:
      s.cov = CovParam::delta();
      break;
  }
  return s;
}

MatrixXd scalar_query() {
  MatrixXd x(1, 1);
  x(0, 0) = std::log(2.0);
  return x;
}

}  // namespace

TEST_CASE("whitened_features: scalar algebra and vanishing residual on Z") {
  ModelState s = scalar_state(CovKind::Full);
  auto basis = whitened_features(s, scalar_query(), InducingSet::Mean);
  // a = k(x,0)/sqrt(k(0,0)) = 1/2, ktilde = 1 - 1/4.
  CHECK_NEAR(basis.a(0, 0), 0.5, 1e-14);
  CHECK_NEAR(basis.ktilde(0), 0.75, 1e-14);
  CHECK(basis.applied_jitter == 0.0);

  auto on_z = whitened_features(s, s.z_mu, InducingSet::Mean);
  CHECK(std::abs(on_z.ktilde(0)) < 1e-8);
  CHECK(on_z.ktilde(0) >= 0.0);
}

TEST_CASE("whitened_features: residual approaches the prior variance far out") {
  pgpr::model::ModelState s = support::tame_state(Method::SVGP, 6, 1, 3);
  MatrixXd far(1, 1);
  far(0, 0) = 40.0;
  auto basis = whitened_features(s, far, InducingSet::Mean);
  CHECK_NEAR(basis.ktilde(0), s.kernel.outputscale(), 1e-6);
}

TEST_CASE("predictive_moments: hand scalar case") {
  ModelState s = scalar_state(CovKind::Full);
  auto pm = predictive_moments(s, scalar_query());
  // mu = a m' = 1; var = ktilde + a^2 S' = 0.75 + 0.0625.
  CHECK_NEAR(pm.mu_f(0), 1.0, 1e-12);
  CHECK_NEAR(pm.var_f(0), 0.8125, 1e-12);
  CHECK(pm.sigma_obs_sq == 1.0);
}

TEST_CASE("predictive_moments: zero mean parameter means zero predictive mean") {
  ModelState s = support::tame_state(Method::SVGP, 8, 2, 5);
  s.m_prime.setZero();
  MatrixXd x = support::separated_points(12, 2, 99);
  auto pm = predictive_moments(s, x);
  CHECK(pm.mu_f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predictive_moments: delta covariance on Z has zero variance") {
  ModelState s = support::tame_state(Method::MAP, 5, 2, 7);
  auto pm = predictive_moments(s, s.z_mu);
  CHECK(pm.var_f.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(pm.var_f.minCoeff() >= 0.0);
}

TEST_CASE("predictive_moments: far-field limits") {
  ModelState s = support::tame_state(Method::PPGPR_Chol, 6, 1, 11);
  MatrixXd x(2, 1);
  x << 30.0, -30.0;
  auto pm = predictive_moments(s, x);
  for (int i = 0; i < 2; ++i) {
    CHECK_NEAR(pm.mu_f(i), 0.0, 1e-6);
    CHECK_NEAR(pm.var_f(i), s.kernel.outputscale(), 1e-6);
  }
}

TEST_CASE("predictive_moments: variance nonnegative for every covariance kind") {
  for (auto method : {Method::SVGP, Method::PPGPR_MF, Method::MAP,
                      Method::PPGPR_MFD}) {
    ModelState s = support::tame_state(method, 7, 2, 13);
    MatrixXd x = support::separated_points(40, 2, 500, 0.01);
    auto pm = predictive_moments(s, x);
    CHECK(pm.var_f.minCoeff() >= 0.0);
  }
}

TEST_CASE("full covariance with tiny factor matches delta moments") {
  ModelState full = support::tame_state(Method::SVGP, 6, 2, 17);
  ModelState delta = full;
  delta.cov = CovParam::delta();
  full.cov.chol_factor = 1e-8 * MatrixXd::Identity(6, 6);
  MatrixXd x = support::separated_points(15, 2, 600);
  auto pm_full = predictive_moments(full, x);
  auto pm_delta = predictive_moments(delta, x);
  CHECK((pm_full.mu_f - pm_delta.mu_f).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pm_full.var_f - pm_delta.var_f).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("decoupled state with equal inducing sets matches the coupled one") {
  ModelState mf = support::tame_state(Method::PPGPR_MF, 6, 2, 19);
  ModelState mfd = mf;
  mfd.decoupled = true;
  mfd.z_sigma = mf.z_mu;
  MatrixXd x = support::separated_points(20, 2, 700);
  auto a = predictive_moments(mf, x);
  auto b = predictive_moments(mfd, x);
  CHECK((a.mu_f - b.mu_f).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.var_f - b.var_f).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kl_whitened dispatcher covers the three kinds") {
  VectorXd m(2);
  m << 3.0, 4.0;
  CovParam delta = CovParam::delta();
  CHECK(kl_whitened(m, delta) == doctest::Approx(12.5));

  CovParam full = CovParam::full_identity(2);
  CHECK_NEAR(kl_whitened(VectorXd::Zero(2), full), 0.0, 1e-14);

  CovParam diag = CovParam::diagonal_zero(2);
  CHECK_NEAR(kl_whitened(VectorXd::Zero(2), diag), 0.0, 1e-14);
}

TEST_CASE("init_state: shapes, defaults, and zero regularizer at start") {
  MatrixXd x;
  VectorXd y;
  support::sine_data(60, 23, 0.1, &x, &y);
  ObjectiveSpec spec;
  spec.method = Method::SVGP;
  ModelState s = init_state(x, y, 10, spec, pgpr::kernels::KernelFamily::Matern52, 7);
  s.validate();
  CHECK(s.m_mu() == 10);
  CHECK(s.cov.kind == CovKind::Full);
  CHECK(s.m_prime.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.log_sigma_obs == 0.0);
  CHECK(s.kernel.log_lengthscales.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.kernel.log_outputscale == 0.0);
  CHECK(kl_whitened(s.m_prime, s.cov) == 0.0);
  CHECK_FALSE(s.decoupled);

  // Determinism of the k-means placement.
  ModelState s2 = init_state(x, y, 10, spec, pgpr::kernels::KernelFamily::Matern52, 7);
  CHECK((s.z_mu - s2.z_mu).cwiseAbs().maxCoeff() == 0.0);

  // Covariance kind tracks the method.
  spec.method = Method::PPGPR_MF;
  CHECK(init_state(x, y, 4, spec, s.kernel.family, 1).cov.kind ==
        CovKind::Diagonal);
  spec.method = Method::MAP;
  CHECK(init_state(x, y, 4, spec, s.kernel.family, 1).cov.kind ==
        CovKind::Delta);
  spec.method = Method::PPGPR_MFD;
  ModelState mfd = init_state(x, y, 4, spec, s.kernel.family, 1);
  CHECK(mfd.decoupled);
  CHECK(mfd.cov.kind == CovKind::Diagonal);

  // M = n degenerates to the data itself.
  spec.method = Method::SVGP;
  MatrixXd xs = support::separated_points(12, 1, 41, 0.1);
  ModelState all = init_state(xs, VectorXd::Zero(12), 12, spec,
                              s.kernel.family, 3);
  std::vector<double> zs(12), ds(12);
  for (int i = 0; i < 12; ++i) {
    zs[static_cast<std::size_t>(i)] = all.z_mu(i, 0);
    ds[static_cast<std::size_t>(i)] = xs(i, 0);
  }
  std::sort(zs.begin(), zs.end());
  std::sort(ds.begin(), ds.end());
  for (int i = 0; i < 12; ++i) {
    CHECK_NEAR(zs[static_cast<std::size_t>(i)], ds[static_cast<std::size_t>(i)],
               1e-12);
  }
}

TEST_CASE("validate flags inconsistent states") {
  ModelState s = support::tame_state(Method::SVGP, 4, 2, 29);
  ModelState bad = s;
  bad.m_prime = VectorXd::Zero(3);
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.cov.chol_factor(1, 1) = -0.2;
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.log_sigma_obs = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.z_sigma = support::separated_points(4, 2, 1234);
  CHECK_THROWS(bad.validate());  // coupled state must share inducing sets
}

TEST_CASE("JSON round-trip is bit-exact") {
  for (auto method : {Method::SVGP, Method::PPGPR_MF, Method::MAP,
                      Method::PPGPR_MFD}) {
    ModelState s = support::tame_state(method, 5, 3, 31);
    s.kernel.family = pgpr::kernels::KernelFamily::Periodic;
    s.kernel.log_period = 0.137;
    ModelState r = state_from_json(to_json(s));
    CHECK((r.z_mu - s.z_mu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.z_sigma - s.z_sigma).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.m_prime - s.m_prime).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.decoupled == s.decoupled);
    CHECK(r.cov.kind == s.cov.kind);
    if (s.cov.kind == CovKind::Full) {
      CHECK((r.cov.chol_factor - s.cov.chol_factor).cwiseAbs().maxCoeff() ==
            0.0);
    } else if (s.cov.kind == CovKind::Diagonal) {
      CHECK((r.cov.log_scale - s.cov.log_scale).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(r.log_sigma_obs == s.log_sigma_obs);
    CHECK(r.kernel.family == s.kernel.family);
    CHECK((r.kernel.log_lengthscales - s.kernel.log_lengthscales)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(r.kernel.log_outputscale == s.kernel.log_outputscale);
    CHECK(r.kernel.log_period == s.kernel.log_period);
  }
}

TEST_CASE("checkpoint files save and load") {
  ModelState s = support::tame_state(Method::SVGP, 4, 2, 37);
  const std::string path = "/tmp/pgpr_test_state.json";
  save_state(s, path);
  ModelState r = load_state(path);
  CHECK((r.z_mu - s.z_mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.log_sigma_obs == s.log_sigma_obs);
  std::remove(path.c_str());
}

TEST_CASE("unknown checkpoint version is rejected") {
  ModelState s = support::tame_state(Method::SVGP, 3, 1, 41);
  std::string text = to_json(s);
  const std::string needle = "pgpr-state-v1";
  text.replace(text.find(needle), needle.size(), "pgpr-state-v0");
  CHECK_THROWS_AS(state_from_json(text), pgpr::VersionMismatch);
}
