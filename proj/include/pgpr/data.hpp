#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pgpr/kernels.hpp"

namespace pgpr::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  MatrixXd x;
  VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  // Standardization stats; identity until standardize_and_split fills them.
  VectorXd feature_mean;
  VectorXd feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;

  Eigen::Index size() const { return y.size(); }
};

// Numeric CSV with a header row.  Rejects non-numeric, NaN or infinite
// cells with a row/column-indexed ParseError; a missing target column or an
// empty table raise their own errors.
Dataset load_csv(const std::string& path, const std::string& target_column);

void save_csv(const Dataset& ds, const std::string& path);

struct SplitSpec {
  // Fractions; the default is the 15:3:2 train:test:validation split.
  double train = 0.75;
  double test = 0.15;
  double val = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
  static SplitSpec from_weights(double train_w, double test_w, double val_w,
                                std::uint64_t seed);
};

struct Splits {
  Dataset train;
  Dataset test;
  Dataset val;
};

// Shuffles, assigns split sizes by largest remainder, and standardizes every
// split with statistics computed on the training split only.  Constant
// feature columns are dropped (with a warning on stderr).
Splits standardize_and_split(const Dataset& raw, const SplitSpec& spec);

// Undo target standardization for a single value.
inline double unstandardize_target(const Dataset& ds, double y_std) {
  return ds.target_mean + ds.target_std * y_std;
}

// 1-D benchmark generator: x ~ U[-1, 1], y = sin(2 pi x) + sigma(x) * eps
// with sigma(x) = 0.05 + 0.5 |x|.
Dataset gen_heteroscedastic(int n, std::uint64_t seed);

// Draw from a GP prior on an equispaced grid over [0, 1], plus optional
// iid observation noise.
Dataset gen_prior_draw(const kernels::KernelParams& kernel, int n,
                       std::uint64_t seed, double noise_std = 0.0);

}  // namespace pgpr::data
