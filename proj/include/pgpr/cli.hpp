#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgpr/data.hpp"
#include "pgpr/metrics.hpp"
#include "pgpr/trainer.hpp"

namespace pgpr::cli {

struct DatasetConfig {
  std::string csv;           // CSV path; empty when a generator is used
  std::string target = "y";
  std::string generator;     // "heteroscedastic" or "prior_draw"
  int n = 2000;
  double noise_std = 0.0;                // prior_draw only
  kernels::KernelParams gen_kernel;      // prior_draw only
  bool has_gen_kernel = false;

  void validate() const;
};

struct GridCell {
  objectives::Method method = objectives::Method::SVGP;
  double beta_reg = 1.0;
  double gamma = 1.05;  // meaningful for gamma_robust only

  std::string label() const;
  objectives::ObjectiveSpec spec() const;
};

struct RunConfig {
  DatasetConfig dataset;
  data::SplitSpec split;
  std::vector<objectives::Method> methods;
  // Per-method beta grid overrides; otherwise the method defaults apply.
  std::map<std::string, std::vector<double>> beta_override;
  std::vector<double> gamma_grid;  // gamma_robust; default {1.01,1.03,1.05,1.07}
  trainer::TrainConfig train;
  std::uint64_t seed = 0;
  std::string select_by = "nll";  // "nll" or "rmse" on the validation split
  int compare_splits = 5;
  bool standardized_metrics = false;

  void validate() const;
};

RunConfig config_from_json_text(const std::string& text);
RunConfig load_config(const std::string& path);

// Default regularizer-strength grid for a method.
std::vector<double> default_beta_grid(objectives::Method m);

// Expands methods x beta (x gamma) into the training grid.
std::vector<GridCell> grid_for(const RunConfig& cfg);

data::Dataset load_or_generate(const DatasetConfig& ds, std::uint64_t seed);

struct CellResult {
  GridCell cell;
  double val_nll = 0.0;
  double val_rmse = 0.0;
  double final_objective = 0.0;
  std::string dir;  // artifact directory, relative to the run directory
};

struct TrainRunResult {
  std::vector<CellResult> cells;
  int selected = -1;
  std::string manifest_path;
};

// Trains every grid cell, writes per-cell artifacts plus a manifest, and
// evaluates the selected model on the test split.
TrainRunResult cmd_train(const RunConfig& cfg, const std::string& out_dir);

// Evaluates a checkpoint on one split of the configured dataset.
metrics::EvalReport cmd_eval(const std::string& checkpoint_path,
                             const RunConfig& cfg,
                             const std::string& split_name,
                             const std::string& out_dir);

struct CompareSummary {
  // method -> metric -> {mean, standard error}
  std::map<std::string, std::map<std::string, std::pair<double, double>>> stats;
  // method -> metric -> average rank (1 = best)
  std::map<std::string, std::map<std::string, double>> ranks;
};

CompareSummary cmd_compare(const RunConfig& cfg, const std::string& out_dir);

void cmd_gen_data(const DatasetConfig& ds, std::uint64_t seed,
                  const std::string& out_csv);

struct GradCheckResult {
  std::string method;
  grad::FdReport report;
};

std::vector<GradCheckResult> cmd_grad_check(
    const std::vector<objectives::Method>& methods, int n, int num_inducing,
    int dim, std::uint64_t seed, double step);

}  // namespace pgpr::cli
