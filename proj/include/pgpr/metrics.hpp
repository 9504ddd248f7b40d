#pragma once

#include <Eigen/Dense>
#include <string>

#include "pgpr/model.hpp"

namespace pgpr::metrics {

using Eigen::VectorXd;
using model::PredictiveMoments;

// Mean negative log predictive density of y under N(mu_f, var_f + s).
// target_std rescales from standardized to original target units.
double nll(const PredictiveMoments& pm, const VectorXd& y,
           double target_std = 1.0);

double rmse(const VectorXd& mu, const VectorXd& y, double target_std = 1.0);

// Closed-form CRPS of a Gaussian forecast.
double crps_gaussian(double y, double mu, double var);

double mean_crps(const PredictiveMoments& pm, const VectorXd& y,
                 double target_std = 1.0);

// Average share of predictive variance attributed to observation noise.
double noise_fraction(const PredictiveMoments& pm);

// Standardized residuals (y - mu) / sqrt(var_f + s).
VectorXd zscores(const PredictiveMoments& pm, const VectorXd& y);

// Exact one-sample Kolmogorov-Smirnov distance to the standard normal.
double ks_statistic(const VectorXd& z);

struct EcdfReport {
  VectorXd grid;
  VectorXd ecdf;
  VectorXd normal_cdf;
  double ks = 0.0;
};

EcdfReport zscore_ecdf(const VectorXd& z, int grid_points = 161,
                       double lo = -4.0, double hi = 4.0);

struct EvalReport {
  long n = 0;
  bool standardized = true;
  double nll = 0.0;
  double rmse = 0.0;
  double crps = 0.0;
  double noise_fraction = 0.0;
  double ks = 0.0;
  // Calibration decomposition: nll = 0.5 log(2 pi) + mean_log_sigma_tot
  // + 0.5 * mean_sq_zscore.
  double mean_log_sigma_tot = 0.0;
  double mean_sq_zscore = 0.0;
};

// Builds the full report.  Moments and y are in standardized units; pass
// standardized = false to rescale the unit-bearing metrics by target_std.
EvalReport evaluate(const PredictiveMoments& pm, const VectorXd& y,
                    double target_std, bool standardized);

std::string report_to_json(const EvalReport& r);
void write_report_json(const EvalReport& r, const std::string& path);
void write_ecdf_csv(const EcdfReport& r, const std::string& path);

double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace pgpr::metrics
