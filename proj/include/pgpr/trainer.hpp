#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgpr/grad.hpp"
#include "pgpr/objectives.hpp"

namespace pgpr::trainer {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using model::ModelState;
using objectives::ObjectiveSpec;

struct TrainConfig {
  int num_inducing = 32;
  int epochs = 100;
  int batch_size = 256;
  double lr = 0.01;
  // Epochs at which the learning rate is multiplied by lr_decay_factor.
  // Empty means the default schedule: 50% and 75% of the epoch budget.
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  kernels::KernelFamily kernel_family = kernels::KernelFamily::Matern52;
  double base_jitter = linalg::kDefaultJitter;
  // Checkpoint every k epochs into checkpoint_dir (0 disables).
  int checkpoint_every = 0;
  std::string checkpoint_dir;

  void validate() const;
  std::vector<int> resolved_decay_epochs() const;
};

struct AdamState {
  VectorXd m;
  VectorXd v;
  long step = 0;

  static AdamState zero(int n) {
    return AdamState{VectorXd::Zero(n), VectorXd::Zero(n), 0};
  }
};

// One bias-corrected Adam ascent step (maximizes the objective).
void adam_step(AdamState* adam, VectorXd* params, const VectorXd& gradient,
               double lr, double beta1, double beta2, double eps);

// Lloyd's algorithm with k-means++ seeding; empty clusters are reseeded to
// the point farthest from its assigned center.
MatrixXd kmeans(const MatrixXd& x, int k, std::uint64_t seed, int iters = 25);

struct EpochRecord {
  int epoch = 0;
  double objective = 0.0;   // full-data objective after the epoch
  double step_ms = 0.0;     // mean optimizer step wall time in the epoch
  double lr = 0.0;          // learning rate in effect during the epoch
};

struct TrainResult {
  ModelState state;
  std::vector<EpochRecord> history;
  std::vector<double> step_times_ms;  // every optimizer step, in order
};

// Full training loop: k-means initialization, epoch shuffling, minibatch
// Adam ascent with the stepped learning-rate schedule.  Aborts with
// TrainingDiverged if a non-finite objective or gradient appears.
TrainResult train(const MatrixXd& x, const VectorXd& y,
                  const ObjectiveSpec& spec, const TrainConfig& cfg);

// Same loop starting from a caller-provided state.
TrainResult train_from(const ModelState& init, const MatrixXd& x,
                       const VectorXd& y, const ObjectiveSpec& spec,
                       const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path);

struct ExactGpTrainResult {
  grad::ExactGpModel state;
  std::vector<EpochRecord> history;  // one record per gradient step
};

// Full-batch Adam ascent on the exact GP log marginal likelihood, starting
// from the given model (use KernelParams::defaults for a fresh fit).
ExactGpTrainResult train_exact_gp(const MatrixXd& x, const VectorXd& y,
                                  const grad::ExactGpModel& init, int steps,
                                  double lr);

}  // namespace pgpr::trainer
