#include "pgpr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "pgpr/rng.hpp"

namespace pgpr::trainer {

void TrainConfig::validate() const {
  if (num_inducing < 1) throw ConfigError("num_inducing must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr >= 0.0)) throw ConfigError("lr must be nonnegative");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
    throw ConfigError("lr_decay_factor must lie in (0, 1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("invalid adam hyperparameters");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw ConfigError("checkpoint_every set without checkpoint_dir");
  }
}

std::vector<int> TrainConfig::resolved_decay_epochs() const {
  if (!lr_decay_epochs.empty()) {
    std::vector<int> e = lr_decay_epochs;
    std::sort(e.begin(), e.end());
    return e;
  }
  return {epochs / 2, (3 * epochs) / 4};
}

void adam_step(AdamState* adam, VectorXd* params, const VectorXd& gradient,
               double lr, double beta1, double beta2, double eps) {
  if (adam->m.size() != params->size() || gradient.size() != params->size()) {
    throw DimMismatch("adam_step: size mismatch");
  }
  adam->step += 1;
  adam->m = beta1 * adam->m + (1.0 - beta1) * gradient;
  adam->v = beta2 * adam->v +
            (1.0 - beta2) * gradient.array().square().matrix();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam->step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam->step));
  const Eigen::ArrayXd mhat = adam->m.array() / c1;
  const Eigen::ArrayXd vhat = adam->v.array() / c2;
  // Ascent: objectives here are maximized.
  params->array() += lr * mhat / (vhat.sqrt() + eps);
}

MatrixXd kmeans(const MatrixXd& x, int k, std::uint64_t seed, int iters) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (k < 1 || k > n) throw ConfigError("kmeans: k must lie in [1, n]");
  Rng rng(seed);
  MatrixXd centers(k, d);
  // k-means++ seeding.
  VectorXd dist2 = VectorXd::Constant(n, std::numeric_limits<double>::max());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.integer(n)));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (x.row(i) - centers.row(c - 1)).squaredNorm();
      if (d2 < dist2[i]) dist2[i] = d2;
      total += dist2[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.integer(n));
    }
    centers.row(c) = x.row(pick);
  }
  // Lloyd iterations.
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iters; ++it) {
    par::parallel_for(n, [&](long i) {
      double best = std::numeric_limits<double>::max();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d2 = (x.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          arg = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = arg;
    });
    MatrixXd sums = MatrixXd::Zero(k, d);
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = assign[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      counts[static_cast<std::size_t>(c)] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Reseed an empty cluster at the point farthest from its center.
        double worst = -1.0;
        Eigen::Index pick = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d2 =
              (x.row(i) - centers.row(assign[static_cast<std::size_t>(i)]))
                  .squaredNorm();
          if (d2 > worst) {
            worst = d2;
            pick = i;
          }
        }
        centers.row(c) = x.row(pick);
      }
    }
  }
  return centers;
}

TrainResult train_from(const ModelState& init, const MatrixXd& x,
                       const VectorXd& y, const ObjectiveSpec& spec,
                       const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (x.rows() != y.size()) {
    throw LengthMismatch("train: x rows and y length differ");
  }
  const Eigen::Index n = x.rows();
  if (n < 1) throw EmptyDataset("train: empty training set");
  if (cfg.batch_size > n) {
    throw ConfigError("batch_size exceeds the dataset size");
  }

  TrainResult out{init, {}, {}};
  grad::ParamVector params = grad::pack(out.state);
  AdamState adam = AdamState::zero(params.size());
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const std::vector<int> decay = cfg.resolved_decay_epochs();
  const int batches = static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);

  MatrixXd xb;
  VectorXd yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (int m : decay) {
      if (m <= epoch) lr *= cfg.lr_decay_factor;
    }
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_ms = 0.0;
    for (int b = 0; b < batches; ++b) {
      const Eigen::Index lo = static_cast<Eigen::Index>(b) * cfg.batch_size;
      const Eigen::Index hi = std::min<Eigen::Index>(lo + cfg.batch_size, n);
      const Eigen::Index bs = hi - lo;
      xb.resize(bs, x.cols());
      yb.resize(bs);
      for (Eigen::Index i = 0; i < bs; ++i) {
        xb.row(i) = x.row(order[static_cast<std::size_t>(lo + i)]);
        yb[i] = y[order[static_cast<std::size_t>(lo + i)]];
      }
      ObjectiveSpec batch_spec = spec;
      batch_spec.minibatch_scale =
          static_cast<double>(n) / static_cast<double>(bs);
      const auto t0 = std::chrono::steady_clock::now();
      grad::GradResult res = grad::objective_and_gradient(
          out.state, xb, yb, batch_spec, par::Exec::Parallel, cfg.base_jitter);
      if (!std::isfinite(res.value.total) ||
          !res.gradient.values.allFinite()) {
        throw TrainingDiverged(
            "non-finite objective or gradient at epoch " +
            std::to_string(epoch) + ", batch " + std::to_string(b) +
            " (objective " + std::to_string(res.value.total) + ")");
      }
      adam_step(&adam, &params.values, res.gradient.values, lr, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_eps);
      grad::unpack(params, &out.state);
      const auto t1 = std::chrono::steady_clock::now();
      const double ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
      out.step_times_ms.push_back(ms);
      epoch_ms += ms;
    }
    ObjectiveSpec full_spec = spec;
    full_spec.minibatch_scale = 1.0;
    const double full = objectives::evaluate_objective(out.state, x, y,
                                                       full_spec).total;
    out.history.push_back(EpochRecord{
        epoch, full, batches > 0 ? epoch_ms / batches : 0.0, lr});
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      model::save_state(out.state, cfg.checkpoint_dir + "/epoch_" +
                                       std::to_string(epoch + 1) + ".json");
    }
  }
  return out;
}

TrainResult train(const MatrixXd& x, const VectorXd& y,
                  const ObjectiveSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  const ModelState init =
      model::init_state(x, y, cfg.num_inducing, spec, cfg.kernel_family,
                        cfg.seed);
  return train_from(init, x, y, spec, cfg);
}

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "epoch,objective,step_ms\n";
  f.precision(17);
  for (const EpochRecord& r : history) {
    f << r.epoch << ',' << r.objective << ',' << r.step_ms << '\n';
  }
}

ExactGpTrainResult train_exact_gp(const MatrixXd& x, const VectorXd& y,
                                  const grad::ExactGpModel& init, int steps,
                                  double lr) {
  if (steps < 0) throw ConfigError("steps must be nonnegative");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  ExactGpTrainResult out{init, {}};
  grad::ParamVector params = grad::pack_exact(out.state);
  AdamState adam = AdamState::zero(params.size());
  for (int step = 0; step < steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    grad::GradResult res =
        grad::exact_gp_objective_and_gradient(out.state, x, y);
    if (!std::isfinite(res.value.total) || !res.gradient.values.allFinite()) {
      throw TrainingDiverged("non-finite exact-GP objective at step " +
                             std::to_string(step));
    }
    adam_step(&adam, &params.values, res.gradient.values, lr, 0.9, 0.999,
              1e-8);
    grad::unpack_exact(params, &out.state);
    const auto t1 = std::chrono::steady_clock::now();
    out.history.push_back(EpochRecord{
        step, res.value.total,
        std::chrono::duration<double, std::milli>(t1 - t0).count(), lr});
  }
  return out;
}

}  // namespace pgpr::trainer
