#include "pgpr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pgpr/rng.hpp"
#include "pgpr/version.hpp"

namespace pgpr::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using objectives::Method;

void DatasetConfig::validate() const {
  if (csv.empty() == generator.empty()) {
    throw ConfigError("dataset needs exactly one of 'csv' or 'generator'");
  }
  if (!generator.empty()) {
    if (generator != "heteroscedastic" && generator != "prior_draw") {
      throw ConfigError("unknown generator: " + generator);
    }
    if (n < 10) throw ConfigError("generator needs n >= 10");
  }
}

std::string GridCell::label() const {
  std::ostringstream os;
  os << objectives::method_name(method) << "_beta" << beta_reg;
  if (method == Method::GammaRobust) os << "_gamma" << gamma;
  return os.str();
}

objectives::ObjectiveSpec GridCell::spec() const {
  objectives::ObjectiveSpec s;
  s.method = method;
  s.beta_reg = beta_reg;
  s.gamma = gamma;
  return s;
}

void RunConfig::validate() const {
  dataset.validate();
  split.validate();
  if (methods.empty()) throw ConfigError("no methods configured");
  train.validate();
  if (select_by != "nll" && select_by != "rmse") {
    throw ConfigError("select_by must be 'nll' or 'rmse'");
  }
  if (compare_splits < 2) throw ConfigError("compare needs >= 2 splits");
  for (double g : gamma_grid) {
    if (!(g > 1.0 && g <= 1.2)) {
      throw InvalidGamma("gamma grid entries must lie in (1, 1.2]");
    }
  }
}

std::vector<double> default_beta_grid(Method m) {
  switch (m) {
    case Method::SVGP:
    case Method::VFITC:
      return {0.1, 0.3, 0.5, 1.0};
    case Method::GammaRobust:
    case Method::MAP:
      return {1.0};
    case Method::PPGPR_Delta:
    case Method::PPGPR_MF:
    case Method::PPGPR_Chol:
    case Method::PPGPR_MFD:
      return {0.01, 0.05, 0.2, 1.0};
  }
  return {1.0};
}

std::vector<GridCell> grid_for(const RunConfig& cfg) {
  std::vector<GridCell> cells;
  for (Method m : cfg.methods) {
    std::vector<double> betas = default_beta_grid(m);
    const auto it = cfg.beta_override.find(objectives::method_name(m));
    if (it != cfg.beta_override.end()) betas = it->second;
    if (m == Method::GammaRobust) {
      std::vector<double> gammas = cfg.gamma_grid;
      if (gammas.empty()) gammas = {1.01, 1.03, 1.05, 1.07};
      for (double b : betas) {
        for (double g : gammas) cells.push_back(GridCell{m, b, g});
      }
    } else {
      for (double b : betas) cells.push_back(GridCell{m, b, 1.05});
    }
  }
  return cells;
}

namespace {

kernels::KernelParams kernel_from_json(const json& j) {
  kernels::KernelParams p;
  p.family = kernels::family_from_name(j.value("family", std::string("rbf")));
  int dim = j.value("dim", 1);
  p.log_lengthscales = Eigen::VectorXd::Zero(dim);
  if (j.contains("log_lengthscales")) {
    const auto& arr = j.at("log_lengthscales");
    p.log_lengthscales = Eigen::VectorXd(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      p.log_lengthscales[static_cast<Eigen::Index>(i)] = arr.at(i).get<double>();
    }
  } else if (j.contains("lengthscale")) {
    p.log_lengthscales.setConstant(std::log(j.at("lengthscale").get<double>()));
  }
  if (j.contains("log_outputscale")) {
    p.log_outputscale = j.at("log_outputscale").get<double>();
  } else if (j.contains("outputscale")) {
    p.log_outputscale = std::log(j.at("outputscale").get<double>());
  }
  if (j.contains("log_period")) {
    p.log_period = j.at("log_period").get<double>();
  } else if (j.contains("period")) {
    p.log_period = std::log(j.at("period").get<double>());
  }
  p.validate();
  return p;
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    const json& ds = j.at("dataset");
    cfg.dataset.csv = ds.value("csv", std::string());
    cfg.dataset.target = ds.value("target", std::string("y"));
    cfg.dataset.generator = ds.value("generator", std::string());
    cfg.dataset.n = ds.value("n", 2000);
    cfg.dataset.noise_std = ds.value("noise_std", 0.0);
    if (ds.contains("kernel")) {
      cfg.dataset.gen_kernel = kernel_from_json(ds.at("kernel"));
      cfg.dataset.has_gen_kernel = true;
    }
    if (j.contains("split")) {
      const json& sp = j.at("split");
      if (sp.contains("weights")) {
        const auto& w = sp.at("weights");
        if (w.size() != 3) throw ConfigError("split.weights needs 3 entries");
        cfg.split = data::SplitSpec::from_weights(
            w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(),
            sp.value("seed", 0ULL));
      } else {
        cfg.split.seed = sp.value("seed", 0ULL);
      }
    }
    if (!j.contains("methods")) throw ConfigError("config needs 'methods'");
    for (const auto& m : j.at("methods")) {
      cfg.methods.push_back(objectives::method_from_name(m.get<std::string>()));
    }
    if (j.contains("grid")) {
      const json& gr = j.at("grid");
      if (gr.contains("beta_reg")) {
        for (const auto& [key, value] : gr.at("beta_reg").items()) {
          std::vector<double> betas;
          for (const auto& b : value) betas.push_back(b.get<double>());
          if (betas.empty()) throw ConfigError("empty beta grid for " + key);
          objectives::method_from_name(key);  // validates the name
          cfg.beta_override[key] = std::move(betas);
        }
      }
      if (gr.contains("gamma")) {
        for (const auto& g : gr.at("gamma")) {
          cfg.gamma_grid.push_back(g.get<double>());
        }
      }
    }
    if (j.contains("train")) {
      const json& tr = j.at("train");
      cfg.train.num_inducing = tr.value("num_inducing", cfg.train.num_inducing);
      cfg.train.epochs = tr.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = tr.value("batch_size", cfg.train.batch_size);
      cfg.train.lr = tr.value("lr", cfg.train.lr);
      if (tr.contains("lr_decay_epochs")) {
        for (const auto& e : tr.at("lr_decay_epochs")) {
          cfg.train.lr_decay_epochs.push_back(e.get<int>());
        }
      }
      cfg.train.lr_decay_factor =
          tr.value("lr_decay_factor", cfg.train.lr_decay_factor);
      cfg.train.kernel_family = kernels::family_from_name(
          tr.value("kernel_family", std::string("matern52")));
      cfg.train.checkpoint_every =
          tr.value("checkpoint_every", cfg.train.checkpoint_every);
    }
    cfg.seed = j.value("seed", 0ULL);
    cfg.train.seed = cfg.seed;
    cfg.select_by = j.value("select_by", std::string("nll"));
    cfg.compare_splits = j.value("compare_splits", 5);
    cfg.standardized_metrics = j.value("standardized_metrics", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json_text(ss.str());
}

data::Dataset load_or_generate(const DatasetConfig& ds, std::uint64_t seed) {
  ds.validate();
  if (!ds.csv.empty()) return data::load_csv(ds.csv, ds.target);
  if (ds.generator == "heteroscedastic") {
    return data::gen_heteroscedastic(ds.n, seed);
  }
  kernels::KernelParams kernel = ds.gen_kernel;
  if (!ds.has_gen_kernel) {
    kernel = kernels::KernelParams::defaults(kernels::KernelFamily::RBF, 1);
  }
  return data::gen_prior_draw(kernel, ds.n, seed, ds.noise_std);
}

namespace {

json report_json(const metrics::EvalReport& r) {
  return json::parse(metrics::report_to_json(r));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << text;
  if (text.empty() || text.back() != '\n') f << '\n';
}

json config_snapshot(const RunConfig& cfg) {
  json j;
  j["version"] = kToolVersion;
  j["seed"] = cfg.seed;
  j["select_by"] = cfg.select_by;
  j["standardized_metrics"] = cfg.standardized_metrics;
  json ds;
  if (!cfg.dataset.csv.empty()) {
    ds["csv"] = cfg.dataset.csv;
    ds["target"] = cfg.dataset.target;
  } else {
    ds["generator"] = cfg.dataset.generator;
    ds["n"] = cfg.dataset.n;
    if (cfg.dataset.noise_std > 0.0) ds["noise_std"] = cfg.dataset.noise_std;
  }
  j["dataset"] = ds;
  j["split"] = {{"train", cfg.split.train},
                {"test", cfg.split.test},
                {"val", cfg.split.val},
                {"seed", cfg.split.seed}};
  json ms = json::array();
  for (Method m : cfg.methods) ms.push_back(objectives::method_name(m));
  j["methods"] = ms;
  j["train"] = {{"num_inducing", cfg.train.num_inducing},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"lr_decay_factor", cfg.train.lr_decay_factor},
                {"lr_decay_epochs", cfg.train.resolved_decay_epochs()},
                {"kernel_family",
                 kernels::family_name(cfg.train.kernel_family)}};
  return j;
}

double metric_for_selection(const metrics::EvalReport& r,
                            const std::string& select_by) {
  return select_by == "rmse" ? r.rmse : r.nll;
}

}  // namespace

TrainRunResult cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const data::Dataset raw = load_or_generate(cfg.dataset, cfg.seed);
  const data::Splits splits = data::standardize_and_split(raw, cfg.split);
  fs::create_directories(out_dir);
  write_text(out_dir + "/config.json", config_snapshot(cfg).dump(2));

  TrainRunResult out;
  json cells_json = json::array();
  double best = std::numeric_limits<double>::infinity();
  for (const GridCell& cell : grid_for(cfg)) {
    trainer::TrainConfig tc = cfg.train;
    tc.batch_size = std::min<int>(tc.batch_size,
                                  static_cast<int>(splits.train.x.rows()));
    const trainer::TrainResult tr =
        trainer::train(splits.train.x, splits.train.y, cell.spec(), tc);
    const model::PredictiveMoments pm =
        model::predictive_moments(tr.state, splits.val.x);
    const metrics::EvalReport val_report = metrics::evaluate(
        pm, splits.val.y, splits.val.target_std, cfg.standardized_metrics);

    CellResult cr;
    cr.cell = cell;
    cr.val_nll = val_report.nll;
    cr.val_rmse = val_report.rmse;
    cr.final_objective =
        tr.history.empty() ? 0.0 : tr.history.back().objective;
    cr.dir = "cells/" + cell.label();
    const std::string cell_dir = out_dir + "/" + cr.dir;
    fs::create_directories(cell_dir);
    model::save_state(tr.state, cell_dir + "/checkpoint.json");
    trainer::write_history_csv(tr.history, cell_dir + "/history.csv");
    metrics::write_report_json(val_report, cell_dir + "/val_report.json");

    json cj;
    cj["method"] = objectives::method_name(cell.method);
    cj["beta_reg"] = cell.beta_reg;
    if (cell.method == Method::GammaRobust) cj["gamma"] = cell.gamma;
    cj["dir"] = cr.dir;
    cj["checkpoint"] = cr.dir + "/checkpoint.json";
    cj["val"] = report_json(val_report);
    cj["final_objective"] = cr.final_objective;
    cells_json.push_back(std::move(cj));

    const double score = metric_for_selection(val_report, cfg.select_by);
    if (score < best) {
      best = score;
      out.selected = static_cast<int>(out.cells.size());
    }
    out.cells.push_back(std::move(cr));
  }

  // Test-split report for the winning cell.
  json manifest;
  manifest["version"] = kToolVersion;
  manifest["seed"] = cfg.seed;
  manifest["select_by"] = cfg.select_by;
  manifest["cells"] = std::move(cells_json);
  manifest["selected"] = out.selected;
  if (out.selected >= 0) {
    const std::string sel_ckpt = out_dir + "/" +
                                 out.cells[static_cast<std::size_t>(out.selected)].dir +
                                 "/checkpoint.json";
    const model::ModelState sel = model::load_state(sel_ckpt);
    const model::PredictiveMoments pm =
        model::predictive_moments(sel, splits.test.x);
    const metrics::EvalReport test_report = metrics::evaluate(
        pm, splits.test.y, splits.test.target_std, cfg.standardized_metrics);
    metrics::write_report_json(test_report, out_dir + "/test_report.json");
    manifest["selected_checkpoint"] =
        out.cells[static_cast<std::size_t>(out.selected)].dir + "/checkpoint.json";
    manifest["test"] = report_json(test_report);
  }
  out.manifest_path = out_dir + "/manifest.json";
  write_text(out.manifest_path, manifest.dump(2));
  return out;
}

metrics::EvalReport cmd_eval(const std::string& checkpoint_path,
                             const RunConfig& cfg,
                             const std::string& split_name,
                             const std::string& out_dir) {
  const model::ModelState state = model::load_state(checkpoint_path);
  const data::Dataset raw = load_or_generate(cfg.dataset, cfg.seed);
  const data::Splits splits = data::standardize_and_split(raw, cfg.split);
  const data::Dataset* ds = nullptr;
  if (split_name == "train") ds = &splits.train;
  else if (split_name == "test") ds = &splits.test;
  else if (split_name == "val") ds = &splits.val;
  else throw ConfigError("unknown split: " + split_name);

  const model::PredictiveMoments pm = model::predictive_moments(state, ds->x);
  const metrics::EvalReport report = metrics::evaluate(
      pm, ds->y, ds->target_std, cfg.standardized_metrics);
  fs::create_directories(out_dir);
  metrics::write_report_json(report, out_dir + "/report.json");
  const metrics::EcdfReport ecdf =
      metrics::zscore_ecdf(metrics::zscores(pm, ds->y));
  metrics::write_ecdf_csv(ecdf, out_dir + "/zscore_ecdf.csv");

  std::ofstream f(out_dir + "/predictions.csv");
  if (!f) throw ConfigError("cannot open predictions.csv for writing");
  for (const std::string& name : ds->feature_names) f << name << ',';
  f << "y,mu_f,var_f,var_total\n";
  f.precision(17);
  for (Eigen::Index i = 0; i < ds->size(); ++i) {
    for (Eigen::Index j = 0; j < ds->x.cols(); ++j) f << ds->x(i, j) << ',';
    f << ds->y[i] << ',' << pm.mu_f[i] << ',' << pm.var_f[i] << ','
      << pm.var_f[i] + pm.sigma_obs_sq << '\n';
  }
  return report;
}

CompareSummary cmd_compare(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  // A method listed twice would only duplicate its own rows.
  std::vector<Method> methods;
  for (Method m : cfg.methods) {
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) {
      methods.push_back(m);
    }
  }
  const std::vector<std::string> metric_names = {"nll", "rmse", "crps"};
  // method -> metric -> per-split values
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  json per_split = json::array();

  for (int rep = 0; rep < cfg.compare_splits; ++rep) {
    const data::Dataset raw = load_or_generate(cfg.dataset, cfg.seed);
    data::SplitSpec sp = cfg.split;
    sp.seed = cfg.split.seed + static_cast<std::uint64_t>(rep);
    const data::Splits splits = data::standardize_and_split(raw, sp);
    json split_json;
    split_json["split_seed"] = sp.seed;
    json method_json;
    for (Method m : methods) {
      RunConfig sub = cfg;
      sub.methods = {m};
      // Grid-select on the validation split, then score on test.
      double best = std::numeric_limits<double>::infinity();
      model::ModelState best_state;
      bool have_best = false;
      for (const GridCell& cell : grid_for(sub)) {
        const trainer::TrainResult tr =
            trainer::train(splits.train.x, splits.train.y, cell.spec(),
                           cfg.train);
        const model::PredictiveMoments pm =
            model::predictive_moments(tr.state, splits.val.x);
        const metrics::EvalReport val_report =
            metrics::evaluate(pm, splits.val.y, splits.val.target_std,
                              cfg.standardized_metrics);
        const double score = metric_for_selection(val_report, cfg.select_by);
        if (score < best) {
          best = score;
          best_state = tr.state;
          have_best = true;
        }
      }
      if (!have_best) throw ConfigError("empty grid for method");
      const model::PredictiveMoments pm =
          model::predictive_moments(best_state, splits.test.x);
      const metrics::EvalReport rep_test =
          metrics::evaluate(pm, splits.test.y, splits.test.target_std,
                            cfg.standardized_metrics);
      const std::string name = objectives::method_name(m);
      values[name]["nll"].push_back(rep_test.nll);
      values[name]["rmse"].push_back(rep_test.rmse);
      values[name]["crps"].push_back(rep_test.crps);
      method_json[name] = report_json(rep_test);
    }
    split_json["methods"] = std::move(method_json);
    per_split.push_back(std::move(split_json));
  }

  CompareSummary summary;
  for (const auto& [mname, mm] : values) {
    for (const std::string& metric : metric_names) {
      const std::vector<double>& v = mm.at(metric);
      const double n = static_cast<double>(v.size());
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= n;
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double se = n > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      summary.stats[mname][metric] = {mean, se};
    }
  }
  // Average rank per metric across splits (1 = best, i.e. smallest).
  for (const std::string& metric : metric_names) {
    std::map<std::string, double> rank_sum;
    for (int rep = 0; rep < cfg.compare_splits; ++rep) {
      std::vector<std::pair<double, std::string>> row;
      for (Method m : methods) {
        const std::string name = objectives::method_name(m);
        row.emplace_back(
            values.at(name).at(metric).at(static_cast<std::size_t>(rep)), name);
      }
      std::sort(row.begin(), row.end());
      // Ties share the average of the ranks they span.
      std::size_t i = 0;
      while (i < row.size()) {
        std::size_t j = i;
        while (j + 1 < row.size() && row[j + 1].first == row[i].first) ++j;
        const double shared = 0.5 * static_cast<double>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) rank_sum[row[k].second] += shared;
        i = j + 1;
      }
    }
    for (auto& [name, total] : rank_sum) {
      summary.ranks[name][metric] =
          total / static_cast<double>(cfg.compare_splits);
    }
  }

  json j;
  j["version"] = kToolVersion;
  j["config"] = config_snapshot(cfg);
  j["n_splits"] = cfg.compare_splits;
  j["per_split"] = std::move(per_split);
  json stats_json;
  for (const auto& [mname, mm] : summary.stats) {
    json one;
    for (const auto& [metric, pair] : mm) {
      one[metric] = {{"mean", pair.first}, {"se", pair.second}};
    }
    if (summary.ranks.count(mname) != 0U) {
      json rk;
      for (const auto& [metric, r] : summary.ranks.at(mname)) rk[metric] = r;
      one["avg_rank"] = std::move(rk);
    }
    stats_json[mname] = std::move(one);
  }
  j["summary"] = std::move(stats_json);
  write_text(out_dir + "/compare.json", j.dump(2));

  std::ofstream csv(out_dir + "/compare.csv");
  csv << "method,metric,mean,se,avg_rank\n";
  csv.precision(17);
  for (const auto& [mname, mm] : summary.stats) {
    for (const auto& [metric, pair] : mm) {
      csv << mname << ',' << metric << ',' << pair.first << ',' << pair.second
          << ',' << summary.ranks[mname][metric] << '\n';
    }
  }
  return summary;
}

void cmd_gen_data(const DatasetConfig& ds, std::uint64_t seed,
                  const std::string& out_csv) {
  DatasetConfig cfg = ds;
  cfg.csv.clear();
  if (cfg.generator.empty()) {
    throw ConfigError("gen-data needs a generator");
  }
  const data::Dataset dataset = load_or_generate(cfg, seed);
  data::save_csv(dataset, out_csv);
}

std::vector<GradCheckResult> cmd_grad_check(
    const std::vector<Method>& methods, int n, int num_inducing, int dim,
    std::uint64_t seed, double step) {
  if (n < 1 || num_inducing < 1 || dim < 1) {
    throw ConfigError("grad-check needs positive sizes");
  }
  std::vector<GradCheckResult> out;
  for (Method m : methods) {
    const model::ModelState state =
        grad::random_state(m, num_inducing, dim, derive_seed(seed, 10));
    Rng rng(derive_seed(seed, 11));
    Eigen::MatrixXd x(n, dim);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) x(i, j) = rng.normal();
      y[i] = rng.normal();
    }
    objectives::ObjectiveSpec spec;
    spec.method = m;
    spec.beta_reg = 0.7;
    spec.gamma = 1.05;
    spec.minibatch_scale = 2.0;
    out.push_back(GradCheckResult{
        objectives::method_name(m),
        grad::finite_diff_check(state, x, y, spec, step)});
  }
  return out;
}

}  // namespace pgpr::cli
