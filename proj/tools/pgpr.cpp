#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgpr/cli.hpp"
#include "pgpr/parallel.hpp"
#include "pgpr/version.hpp"

namespace {

using pgpr::objectives::Method;

int run(int argc, char** argv) {
  CLI::App app{"Sparse Gaussian-process regression toolkit"};
  app.set_version_flag("--version", pgpr::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool standardized = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) c->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--standardized-metrics", standardized,
                  "report metrics in standardized target units");
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](std::uint64_t v) {
          seed = v;
          seed_set = true;
        },
        "override the config seed");
  };

  CLI::App* train = app.add_subcommand("train", "train the configured grid");
  add_common(train, true);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  std::string split_name = "test";
  eval->add_option("--model", checkpoint, "checkpoint JSON")->required();
  eval->add_option("--split", split_name, "train | val | test");
  add_common(eval, true);

  CLI::App* compare = app.add_subcommand(
      "compare", "train methods across repeated splits and rank them");
  add_common(compare, true);

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  std::string generator = "heteroscedastic";
  int n = 2000;
  double noise_std = 0.0;
  std::string out_csv = "data.csv";
  std::string family = "rbf";
  double lengthscale = 1.0;
  double outputscale = 1.0;
  double period = 1.0;
  gen->add_option("--generator", generator, "heteroscedastic | prior_draw");
  gen->add_option("--n", n, "number of rows");
  gen->add_option("--noise-std", noise_std, "observation noise (prior_draw)");
  gen->add_option("--family", family, "kernel family (prior_draw)");
  gen->add_option("--lengthscale", lengthscale, "kernel lengthscale");
  gen->add_option("--outputscale", outputscale, "kernel variance scale");
  gen->add_option("--period", period, "kernel period");
  gen->add_option("--out", out_csv, "output CSV path");
  gen->add_option("--seed", seed, "generator seed");

  CLI::App* gc = app.add_subcommand("grad-check",
                                    "finite-difference gradient check");
  std::vector<std::string> gc_methods = {"all"};
  int gc_n = 32;
  int gc_m = 4;
  int gc_d = 2;
  double gc_step = 1e-5;
  double gc_tol = 1e-4;
  gc->add_option("--method", gc_methods, "method names or 'all'");
  gc->add_option("--n", gc_n, "points");
  gc->add_option("--m", gc_m, "inducing points");
  gc->add_option("--d", gc_d, "input dimension");
  gc->add_option("--seed", seed, "fixture seed");
  gc->add_option("--step", gc_step, "finite-difference step");
  gc->add_option("--tol", gc_tol, "max relative error to pass");

  CLI11_PARSE(app, argc, argv);
  pgpr::par::max_threads();  // applies PGPR_NUM_THREADS

  if (train->parsed()) {
    pgpr::cli::RunConfig cfg = pgpr::cli::load_config(config_path);
    if (seed_set) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    if (standardized) cfg.standardized_metrics = true;
    const pgpr::cli::TrainRunResult res = pgpr::cli::cmd_train(cfg, out_dir);
    std::cout << "trained " << res.cells.size() << " grid cells; selected "
              << res.cells[static_cast<std::size_t>(res.selected)].cell.label()
              << "\nmanifest: " << res.manifest_path << '\n';
    return 0;
  }
  if (eval->parsed()) {
    pgpr::cli::RunConfig cfg = pgpr::cli::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (standardized) cfg.standardized_metrics = true;
    const pgpr::metrics::EvalReport r =
        pgpr::cli::cmd_eval(checkpoint, cfg, split_name, out_dir);
    std::cout << pgpr::metrics::report_to_json(r) << '\n';
    return 0;
  }
  if (compare->parsed()) {
    pgpr::cli::RunConfig cfg = pgpr::cli::load_config(config_path);
    if (seed_set) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    if (standardized) cfg.standardized_metrics = true;
    const pgpr::cli::CompareSummary summary =
        pgpr::cli::cmd_compare(cfg, out_dir);
    for (const auto& [mname, mm] : summary.stats) {
      std::cout << mname << ':';
      for (const auto& [metric, pair] : mm) {
        std::printf(" %s=%.4f+-%.4f", metric.c_str(), pair.first, pair.second);
      }
      std::cout << '\n';
    }
    return 0;
  }
  if (gen->parsed()) {
    pgpr::cli::DatasetConfig ds;
    ds.generator = generator;
    ds.n = n;
    ds.noise_std = noise_std;
    if (generator == "prior_draw") {
      ds.gen_kernel = pgpr::kernels::KernelParams::defaults(
          pgpr::kernels::family_from_name(family), 1);
      ds.gen_kernel.log_lengthscales.setConstant(std::log(lengthscale));
      ds.gen_kernel.log_outputscale = std::log(outputscale);
      ds.gen_kernel.log_period = std::log(period);
      ds.has_gen_kernel = true;
    }
    pgpr::cli::cmd_gen_data(ds, seed, out_csv);
    std::cout << "wrote " << n << " rows to " << out_csv << '\n';
    return 0;
  }
  if (gc->parsed()) {
    std::vector<Method> methods;
    for (const std::string& name : gc_methods) {
      if (name == "all") {
        for (const char* mn :
             {"svgp", "map", "gamma_robust", "vfitc", "ppgpr_delta",
              "ppgpr_mf", "ppgpr_chol", "ppgpr_mfd"}) {
          methods.push_back(pgpr::objectives::method_from_name(mn));
        }
      } else {
        methods.push_back(pgpr::objectives::method_from_name(name));
      }
    }
    const auto results =
        pgpr::cli::cmd_grad_check(methods, gc_n, gc_m, gc_d, seed, gc_step);
    bool ok = true;
    for (const auto& r : results) {
      std::printf("%-13s max_rel_err %.3e %s\n", r.method.c_str(),
                  r.report.max_rel_err, r.report.pass(gc_tol) ? "ok" : "FAIL");
      for (const auto& seg : r.report.segments) {
        std::printf("  %-18s %.3e\n", seg.name.c_str(), seg.max_rel_err);
      }
      ok = ok && r.report.pass(gc_tol);
    }
    return ok ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pgpr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::InvalidGamma& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::MissingColumn& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::EmptyDataset& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::VersionMismatch& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const pgpr::FactorizationFailed& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const pgpr::TrainingDiverged& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const pgpr::SizeLimitExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
