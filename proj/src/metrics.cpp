#include "pgpr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pgpr/objectives.hpp"
#include "pgpr/parallel.hpp"

namespace pgpr::metrics {
namespace {

constexpr double kInvSqrtPi = 0.5641895835477563;

void check_sizes(const PredictiveMoments& pm, const VectorXd& y) {
  if (pm.mu_f.size() != y.size() || pm.var_f.size() != y.size()) {
    throw LengthMismatch("metrics: moments and targets differ in length");
  }
  if (y.size() < 1) throw LengthMismatch("metrics: empty evaluation set");
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

double nll(const PredictiveMoments& pm, const VectorXd& y, double target_std) {
  check_sizes(pm, y);
  const double total = par::chunked_sum(y.size(), [&](long i) {
    return -objectives::log_normal_pdf(y[i], pm.mu_f[i],
                                       pm.var_f[i] + pm.sigma_obs_sq);
  });
  return total / static_cast<double>(y.size()) + std::log(target_std);
}

double rmse(const VectorXd& mu, const VectorXd& y, double target_std) {
  if (mu.size() != y.size() || y.size() < 1) {
    throw LengthMismatch("rmse: size mismatch");
  }
  return target_std *
         std::sqrt((mu - y).squaredNorm() / static_cast<double>(y.size()));
}

double crps_gaussian(double y, double mu, double var) {
  if (!(var > 0.0)) {
    throw NonpositiveVariance("crps_gaussian needs positive variance");
  }
  const double sigma = std::sqrt(var);
  const double z = (y - mu) / sigma;
  return sigma *
         (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - kInvSqrtPi);
}

double mean_crps(const PredictiveMoments& pm, const VectorXd& y,
                 double target_std) {
  check_sizes(pm, y);
  const double total = par::chunked_sum(y.size(), [&](long i) {
    return crps_gaussian(y[i], pm.mu_f[i], pm.var_f[i] + pm.sigma_obs_sq);
  });
  return target_std * total / static_cast<double>(y.size());
}

double noise_fraction(const PredictiveMoments& pm) {
  if (pm.var_f.size() < 1) throw LengthMismatch("noise_fraction: empty input");
  const double total = par::chunked_sum(pm.var_f.size(), [&](long i) {
    return pm.sigma_obs_sq / (pm.sigma_obs_sq + pm.var_f[i]);
  });
  return total / static_cast<double>(pm.var_f.size());
}

VectorXd zscores(const PredictiveMoments& pm, const VectorXd& y) {
  check_sizes(pm, y);
  return ((y - pm.mu_f).array() /
          (pm.var_f.array() + pm.sigma_obs_sq).sqrt())
      .matrix();
}

double ks_statistic(const VectorXd& z) {
  if (z.size() < 1) throw LengthMismatch("ks_statistic: empty sample");
  std::vector<double> s(z.data(), z.data() + z.size());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double cdf = normal_cdf(s[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, cdf - lo, hi - cdf});
  }
  return d;
}

EcdfReport zscore_ecdf(const VectorXd& z, int grid_points, double lo,
                       double hi) {
  if (grid_points < 2) throw ConfigError("zscore_ecdf needs >= 2 grid points");
  if (!(hi > lo)) throw ConfigError("zscore_ecdf needs hi > lo");
  std::vector<double> s(z.data(), z.data() + z.size());
  std::sort(s.begin(), s.end());
  EcdfReport r;
  r.grid = VectorXd(grid_points);
  r.ecdf = VectorXd(grid_points);
  r.normal_cdf = VectorXd(grid_points);
  const double n = static_cast<double>(s.size());
  for (int g = 0; g < grid_points; ++g) {
    const double t =
        lo + (hi - lo) * static_cast<double>(g) / (grid_points - 1);
    r.grid[g] = t;
    const auto it = std::upper_bound(s.begin(), s.end(), t);
    r.ecdf[g] = static_cast<double>(it - s.begin()) / n;
    r.normal_cdf[g] = normal_cdf(t);
  }
  r.ks = ks_statistic(z);
  return r;
}

EvalReport evaluate(const PredictiveMoments& pm, const VectorXd& y,
                    double target_std, bool standardized) {
  check_sizes(pm, y);
  if (!(target_std > 0.0)) {
    throw std::invalid_argument("target_std must be positive");
  }
  const double factor = standardized ? 1.0 : target_std;
  EvalReport r;
  r.n = static_cast<long>(y.size());
  r.standardized = standardized;
  r.nll = nll(pm, y, factor);
  r.rmse = rmse(pm.mu_f, y, factor);
  r.crps = mean_crps(pm, y, factor);
  r.noise_fraction = noise_fraction(pm);
  const VectorXd z = zscores(pm, y);
  r.ks = ks_statistic(z);
  r.mean_sq_zscore = z.squaredNorm() / static_cast<double>(z.size());
  r.mean_log_sigma_tot =
      par::chunked_sum(y.size(), [&](long i) {
        return 0.5 * std::log(pm.var_f[i] + pm.sigma_obs_sq);
      }) / static_cast<double>(y.size()) +
      std::log(factor);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["standardized"] = r.standardized;
  j["nll"] = r.nll;
  j["rmse"] = r.rmse;
  j["crps"] = r.crps;
  j["noise_fraction"] = r.noise_fraction;
  j["ks"] = r.ks;
  j["mean_log_sigma_tot"] = r.mean_log_sigma_tot;
  j["mean_sq_zscore"] = r.mean_sq_zscore;
  return j.dump(2);
}

void write_report_json(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << report_to_json(r) << '\n';
}

void write_ecdf_csv(const EcdfReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "z,ecdf,normal_cdf\n";
  f.precision(17);
  for (Eigen::Index i = 0; i < r.grid.size(); ++i) {
    f << r.grid[i] << ',' << r.ecdf[i] << ',' << r.normal_cdf[i] << '\n';
  }
}

}  // namespace pgpr::metrics
