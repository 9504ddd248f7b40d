#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pgpr/metrics.hpp"
#include "pgpr/rng.hpp"
#include "support.hpp"

using Eigen::VectorXd;
using namespace pgpr::metrics;
using pgpr::model::PredictiveMoments;

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) < (tol))

namespace {

PredictiveMoments moments(const VectorXd& mu, const VectorXd& var_f,
                          double sigma_obs_sq) {
  PredictiveMoments pm;
  pm.mu_f = mu;
  pm.var_f = var_f;
  pm.sigma_obs_sq = sigma_obs_sq;
  return pm;
}

}  // namespace

TEST_CASE("normal cdf and pdf match the reference implementations") {
  for (double z : {-3.0, -1.0, 0.0, 0.5, 2.5}) {
    CHECK_NEAR(normal_cdf(z), support::normal_cdf_ref(z), 1e-15);
  }
  CHECK_NEAR(normal_cdf(1.0), 0.84134474606854293, 1e-15);
  CHECK_NEAR(normal_pdf(0.0), 1.0 / std::sqrt(2.0 * M_PI), 1e-16);
}

TEST_CASE("nll: standard normal at the mode costs half log two pi") {
  const VectorXd y = VectorXd::Zero(4);
  const auto pm = moments(VectorXd::Zero(4), VectorXd::Constant(4, 0.25), 0.75);
  CHECK_NEAR(nll(pm, y), 0.91893853320467267, 1e-15);
  // Unstandardizing adds log target_std per point.
  CHECK_NEAR(nll(pm, y, 2.0), 0.91893853320467267 + std::log(2.0), 1e-15);
}

TEST_CASE("nll: agrees with a central-difference quadrature of the cdf") {
  // Density as derivative of the Gaussian CDF: an oracle that shares no code
  // with log_normal_pdf.
  const double y = 1.3, mu = 0.4, var = 0.7;
  const double sigma = std::sqrt(var);
  const double h = 1e-5;
  const double dens = (support::normal_cdf_ref((y + h - mu) / sigma) -
                       support::normal_cdf_ref((y - h - mu) / sigma)) /
                      (2.0 * h);
  const auto pm =
      moments(VectorXd::Constant(1, mu), VectorXd::Constant(1, var - 0.1), 0.1);
  CHECK_NEAR(nll(pm, VectorXd::Constant(1, y)), -std::log(dens), 1e-8);
}

TEST_CASE("nll: grows without bound as the variance shrinks on a residual") {
  const VectorXd y = VectorXd::Constant(1, 2.0);
  const VectorXd mu = VectorXd::Zero(1);
  double var = 1.0;
  double prev = nll(moments(mu, VectorXd::Constant(1, var), 0.0), y);
  for (int i = 0; i < 20; ++i) {
    var *= 0.5;
    const double cur = nll(moments(mu, VectorXd::Constant(1, var), 0.0), y);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("rmse: hand values and the standardized-baseline property") {
  VectorXd y(2), mu(2);
  y << 3.0, 4.0;
  mu << 0.0, 0.0;
  CHECK_NEAR(rmse(mu, y), 3.5355339059327378, 1e-15);
  CHECK_NEAR(rmse(y, y), 0.0, 1e-16);
  CHECK_NEAR(rmse(mu, y, 2.0), 2.0 * 3.5355339059327378, 1e-14);

  // A zero predictor on standardized targets scores about 1.
  pgpr::Rng rng(11);
  VectorXd t(20000);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.normal();
  t.array() -= t.mean();
  t /= std::sqrt(t.squaredNorm() / static_cast<double>(t.size()));
  CHECK_NEAR(rmse(VectorXd::Zero(t.size()), t), 1.0, 1e-12);

  CHECK_THROWS_AS(rmse(mu, VectorXd::Zero(3)), pgpr::LengthMismatch);
}

TEST_CASE("crps: frozen value at the mode and quadrature cross-check") {
  CHECK_NEAR(crps_gaussian(0.0, 0.0, 1.0), 0.23369497725510913, 1e-15);
  pgpr::Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const double mu = rng.uniform(-3.0, 3.0);
    const double sigma = rng.uniform(0.1, 2.5);
    const double y = mu + sigma * rng.uniform(-3.0, 3.0);
    const double closed = crps_gaussian(y, mu, sigma * sigma);
    const double quad = support::crps_quadrature(y, mu, sigma);
    CHECK_NEAR(closed, quad, 1e-6);
    CHECK(closed >= 0.0);
  }
}

TEST_CASE("crps: deterministic limit and scale equivariance") {
  CHECK_NEAR(crps_gaussian(1.7, 0.5, 1e-16), 1.2, 1e-6);
  const double base = crps_gaussian(1.1, 0.2, 0.49);
  const double scaled = crps_gaussian(3.0 * 1.1, 3.0 * 0.2, 9.0 * 0.49);
  CHECK_NEAR(scaled, 3.0 * base, 1e-12);
  CHECK_THROWS_AS(crps_gaussian(0.0, 0.0, 0.0), pgpr::NonpositiveVariance);
}

TEST_CASE("mean_crps averages the per-point closed form") {
  VectorXd y(2), mu(2), vf(2);
  y << 0.0, 1.0;
  mu << 0.0, 0.0;
  vf << 0.5, 0.3;
  const auto pm = moments(mu, vf, 0.5);
  const double expected =
      0.5 * (crps_gaussian(0.0, 0.0, 1.0) + crps_gaussian(1.0, 0.0, 0.8));
  CHECK_NEAR(mean_crps(pm, y), expected, 1e-15);
  CHECK_NEAR(mean_crps(pm, y, 4.0), 4.0 * expected, 1e-14);
}

TEST_CASE("noise fraction: pure noise, even split, mixed case, invariance") {
  CHECK_NEAR(noise_fraction(moments(VectorXd::Zero(3), VectorXd::Zero(3), 0.7)),
             1.0, 1e-15);
  CHECK_NEAR(noise_fraction(
                 moments(VectorXd::Zero(3), VectorXd::Constant(3, 0.7), 0.7)),
             0.5, 1e-15);
  // Fractions 0.2 and 0.6 average to 0.4: var_f = s(1/f - 1).
  VectorXd vf(2);
  vf << 1.0 * (1.0 / 0.2 - 1.0), 1.0 * (1.0 / 0.6 - 1.0);
  CHECK_NEAR(noise_fraction(moments(VectorXd::Zero(2), vf, 1.0)), 0.4, 1e-15);
  // Rescaling all variances together changes nothing.
  CHECK_NEAR(noise_fraction(moments(VectorXd::Zero(2), 3.7 * vf, 3.7)), 0.4,
             1e-15);
}

TEST_CASE("zscores standardize by the total predictive deviation") {
  VectorXd y(2), mu(2), vf(2);
  y << 2.0, -1.0;
  mu << 1.0, 0.0;
  vf << 0.75, 3.0;
  const VectorXd z = zscores(moments(mu, vf, 0.25), y);
  CHECK_NEAR(z[0], 1.0, 1e-15);        // (2-1)/sqrt(1)
  CHECK_NEAR(z[1], -1.0 / std::sqrt(3.25), 1e-15);
}

TEST_CASE("ks statistic: hand cases") {
  CHECK_NEAR(ks_statistic(VectorXd::Zero(1)), 0.5, 1e-15);
  VectorXd two(2);
  two << -1.0, 1.0;
  CHECK_NEAR(ks_statistic(two), 0.34134474606854293, 1e-15);
}

TEST_CASE("ks self-consistency: model-drawn residuals look standard normal") {
  const int n = 10000;
  pgpr::Rng rng(31);
  VectorXd mu(n), vf(n), y(n);
  for (int i = 0; i < n; ++i) {
    mu[i] = rng.uniform(-2.0, 2.0);
    vf[i] = rng.uniform(0.05, 1.5);
    y[i] = mu[i] + std::sqrt(vf[i] + 0.36) * rng.normal();
  }
  const VectorXd z = zscores(moments(mu, vf, 0.36), y);
  const double ks = ks_statistic(z);
  INFO("ks ", ks);
  CHECK(ks < 0.05);
}

TEST_CASE("zscore ecdf: step shape, symmetry, and grid bookkeeping") {
  const EcdfReport r0 = zscore_ecdf(VectorXd::Zero(5));
  REQUIRE(r0.grid.size() == 161);
  for (Eigen::Index g = 0; g < r0.grid.size(); ++g) {
    CHECK(r0.ecdf[g] == (r0.grid[g] >= 0.0 ? 1.0 : 0.0));
  }
  CHECK_NEAR(r0.ks, 0.5, 1e-15);
  CHECK_NEAR(r0.normal_cdf[80], 0.5, 1e-15);  // grid midpoint is z = 0

  VectorXd sym(4);
  sym << -1.5, -0.3, 0.3, 1.5;
  const EcdfReport rs = zscore_ecdf(sym);
  CHECK_NEAR(rs.ecdf[80], 0.5, 1e-15);

  CHECK_THROWS_AS(zscore_ecdf(sym, 1), pgpr::ConfigError);
  CHECK_THROWS_AS(zscore_ecdf(sym, 10, 2.0, -2.0), pgpr::ConfigError);
}

TEST_CASE("evaluate: decomposition identity and field consistency") {
  pgpr::Rng rng(41);
  const int n = 500;
  VectorXd mu(n), vf(n), y(n);
  for (int i = 0; i < n; ++i) {
    mu[i] = rng.normal();
    vf[i] = rng.uniform(0.1, 2.0);
    y[i] = mu[i] + 1.3 * rng.normal();
  }
  const auto pm = moments(mu, vf, 0.8);
  const EvalReport r = evaluate(pm, y, 2.5, false);
  // nll = 0.5 log(2 pi) + mean log sigma_tot + 0.5 mean z^2, all in the same
  // units.
  CHECK_NEAR(r.nll,
             0.5 * std::log(2.0 * M_PI) + r.mean_log_sigma_tot +
                 0.5 * r.mean_sq_zscore,
             1e-10);
  CHECK(r.n == n);
  CHECK_FALSE(r.standardized);
  CHECK_NEAR(r.rmse, rmse(mu, y, 2.5), 1e-15);
  CHECK_NEAR(r.crps, mean_crps(pm, y, 2.5), 1e-15);
  CHECK_NEAR(r.ks, ks_statistic(zscores(pm, y)), 1e-15);

  // Standardized mode ignores target_std entirely.
  const EvalReport rs = evaluate(pm, y, 2.5, true);
  CHECK_NEAR(rs.nll, nll(pm, y, 1.0), 1e-15);
  CHECK_NEAR(rs.rmse, rmse(mu, y, 1.0), 1e-15);
}

TEST_CASE("report json round-trips its fields") {
  EvalReport r;
  r.n = 7;
  r.standardized = false;
  r.nll = 1.25;
  r.rmse = 0.5;
  r.crps = 0.25;
  r.noise_fraction = 0.625;
  r.ks = 0.03125;
  r.mean_log_sigma_tot = -0.125;
  r.mean_sq_zscore = 1.0625;
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["n"] == 7);
  CHECK(j["standardized"] == false);
  CHECK(j["nll"] == 1.25);
  CHECK(j["rmse"] == 0.5);
  CHECK(j["crps"] == 0.25);
  CHECK(j["noise_fraction"] == 0.625);
  CHECK(j["ks"] == 0.03125);
  CHECK(j["mean_log_sigma_tot"] == -0.125);
  CHECK(j["mean_sq_zscore"] == 1.0625);

  const std::string path = "/tmp/pgpr_test_report.json";
  write_report_json(r, path);
  std::ifstream f(path);
  nlohmann::json back;
  f >> back;
  CHECK(back == j);
  std::remove(path.c_str());
}

TEST_CASE("ecdf csv has header and one row per grid point") {
  VectorXd z(3);
  z << -0.5, 0.0, 0.5;
  const EcdfReport r = zscore_ecdf(z, 5, -1.0, 1.0);
  const std::string path = "/tmp/pgpr_test_ecdf.csv";
  write_ecdf_csv(r, path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "z,ecdf,normal_cdf");
  int rows = 0;
  while (std::getline(f, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 5);
  std::remove(path.c_str());
}
