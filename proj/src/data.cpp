#include "pgpr/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "pgpr/errors.hpp"
#include "pgpr/linalg.hpp"
#include "pgpr/rng.hpp"

namespace pgpr::data {
namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(cur);
  for (std::string& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ' || c.back() == '\t')) {
      c.pop_back();
    }
    std::size_t b = 0;
    while (b < c.size() && (c[b] == ' ' || c[b] == '\t')) ++b;
    c.erase(0, b);
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw ParseError(row, col, "'" + cell + "' is not a number");
  }
  if (!std::isfinite(v)) {
    throw ParseError(row, col, "'" + cell + "' is not finite");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(f, line)) throw EmptyDataset("no header row in " + path);
  const std::vector<std::string> header = split_cells(line);
  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == target_column) target_idx = i;
  }
  if (target_idx == header.size()) {
    throw MissingColumn("target column '" + target_column + "' not in " + path);
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw ParseError(lineno, cells.size(),
                       "expected " + std::to_string(header.size()) +
                           " cells, found " + std::to_string(cells.size()));
    }
    std::vector<double> vals(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      vals[c] = parse_cell(cells[c], lineno, c + 1);
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw EmptyDataset("no data rows in " + path);

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  ds.x = MatrixXd(n, d);
  ds.y = VectorXd(n);
  ds.target_name = target_column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i != target_idx) ds.feature_names.push_back(header[i]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == target_idx) {
        ds.y[i] = rows[static_cast<std::size_t>(i)][c];
      } else {
        ds.x(i, col++) = rows[static_cast<std::size_t>(i)][c];
      }
    }
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.precision(17);
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
    f << ds.feature_names[j] << ',';
  }
  f << ds.target_name << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) f << ds.x(i, j) << ',';
    f << ds.y[i] << '\n';
  }
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && test > 0.0 && val > 0.0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train + test + val - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

SplitSpec SplitSpec::from_weights(double train_w, double test_w, double val_w,
                                  std::uint64_t seed) {
  if (!(train_w > 0.0 && test_w > 0.0 && val_w > 0.0)) {
    throw ConfigError("split weights must be positive");
  }
  const double total = train_w + test_w + val_w;
  SplitSpec s;
  s.train = train_w / total;
  s.test = test_w / total;
  s.val = val_w / total;
  s.seed = seed;
  return s;
}

namespace {

// Integer split sizes by largest remainder; ties resolved in declaration
// order (train, test, val).
std::array<Eigen::Index, 3> split_sizes(Eigen::Index n, const SplitSpec& s) {
  const double fracs[3] = {s.train, s.test, s.val};
  std::array<Eigen::Index, 3> sizes{};
  double rems[3];
  Eigen::Index used = 0;
  for (int i = 0; i < 3; ++i) {
    const double ideal = fracs[i] * static_cast<double>(n);
    sizes[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(std::floor(ideal));
    rems[i] = ideal - std::floor(ideal);
    used += sizes[static_cast<std::size_t>(i)];
  }
  Eigen::Index left = n - used;
  while (left > 0) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rems[i] > rems[best]) best = i;
    }
    sizes[static_cast<std::size_t>(best)] += 1;
    rems[best] = -1.0;
    --left;
  }
  return sizes;
}

Dataset take_rows(const Dataset& ds, const std::vector<Eigen::Index>& order,
                  Eigen::Index lo, Eigen::Index hi) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.target_name = ds.target_name;
  out.x = MatrixXd(hi - lo, ds.x.cols());
  out.y = VectorXd(hi - lo);
  for (Eigen::Index i = lo; i < hi; ++i) {
    out.x.row(i - lo) = ds.x.row(order[static_cast<std::size_t>(i)]);
    out.y[i - lo] = ds.y[order[static_cast<std::size_t>(i)]];
  }
  return out;
}

}  // namespace

Splits standardize_and_split(const Dataset& raw, const SplitSpec& spec) {
  spec.validate();
  const Eigen::Index n = raw.size();
  if (n < 10) throw ConfigError("need at least 10 rows to split");
  if (raw.x.rows() != n) throw DimMismatch("dataset x/y row mismatch");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order.begin(), order.end());

  const auto sizes = split_sizes(n, spec);
  Splits out;
  out.train = take_rows(raw, order, 0, sizes[0]);
  out.test = take_rows(raw, order, sizes[0], sizes[0] + sizes[1]);
  out.val = take_rows(raw, order, sizes[0] + sizes[1], n);

  // Standardization statistics from the training split only.
  const Eigen::Index d = out.train.x.cols();
  VectorXd mean = out.train.x.colwise().mean();
  VectorXd var = VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < out.train.x.rows(); ++i) {
    var += (out.train.x.row(i).transpose() - mean).array().square().matrix();
  }
  var /= static_cast<double>(out.train.x.rows());
  VectorXd stddev = var.array().sqrt();

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (stddev[j] > 0.0) {
      keep.push_back(j);
    } else {
      std::cerr << "warning: dropping constant feature column '"
                << (static_cast<std::size_t>(j) < raw.feature_names.size()
                        ? raw.feature_names[static_cast<std::size_t>(j)]
                        : std::to_string(j))
                << "'\n";
    }
  }
  if (keep.empty()) throw ConfigError("all feature columns are constant");

  const double y_mean = out.train.y.mean();
  const double y_var =
      (out.train.y.array() - y_mean).square().sum() /
      static_cast<double>(out.train.y.size());
  const double y_std = std::sqrt(y_var);
  if (!(y_std > 0.0)) throw ConfigError("target is constant on the training split");

  auto apply = [&](Dataset* ds) {
    MatrixXd xk(ds->x.rows(), static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> names;
    VectorXd km(static_cast<Eigen::Index>(keep.size()));
    VectorXd ks(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
      const Eigen::Index j = keep[jj];
      xk.col(static_cast<Eigen::Index>(jj)) =
          (ds->x.col(j).array() - mean[j]) / stddev[j];
      if (static_cast<std::size_t>(j) < ds->feature_names.size()) {
        names.push_back(ds->feature_names[static_cast<std::size_t>(j)]);
      } else {
        names.push_back("x" + std::to_string(j));
      }
      km[static_cast<Eigen::Index>(jj)] = mean[j];
      ks[static_cast<Eigen::Index>(jj)] = stddev[j];
    }
    ds->x = std::move(xk);
    ds->feature_names = std::move(names);
    ds->feature_mean = km;
    ds->feature_std = ks;
    ds->y = (ds->y.array() - y_mean) / y_std;
    ds->target_mean = y_mean;
    ds->target_std = y_std;
  };
  apply(&out.train);
  apply(&out.test);
  apply(&out.val);
  return out;
}

Dataset gen_heteroscedastic(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generator needs n >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.x = MatrixXd(n, 1);
  ds.y = VectorXd(n);
  ds.feature_names = {"x0"};
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    const double noise = 0.05 + 0.5 * std::abs(x);
    ds.x(i, 0) = x;
    ds.y[i] = std::sin(2.0 * M_PI * x) + noise * rng.normal();
  }
  return ds;
}

Dataset gen_prior_draw(const kernels::KernelParams& kernel, int n,
                       std::uint64_t seed, double noise_std) {
  if (n < 2) throw ConfigError("prior draw needs n >= 2");
  if (n > 4096) throw SizeLimitExceeded("prior draw capped at n = 4096");
  if (noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
  if (kernel.dim() != 1) throw DimMismatch("prior draw is 1-D");
  Dataset ds;
  ds.x = MatrixXd(n, 1);
  ds.feature_names = {"x0"};
  for (int i = 0; i < n; ++i) {
    ds.x(i, 0) = static_cast<double>(i) / static_cast<double>(n - 1);
  }
  const MatrixXd k = kernels::kernel_matrix(kernel, ds.x, ds.x);
  const linalg::CholResult chol =
      linalg::cholesky_jitter(linalg::SymMatrix(k), 1e-8);
  Rng rng(seed);
  VectorXd eps(n);
  for (int i = 0; i < n; ++i) eps[i] = rng.normal();
  ds.y = chol.factor.mat().triangularView<Eigen::Lower>() * eps;
  if (noise_std > 0.0) {
    for (int i = 0; i < n; ++i) ds.y[i] += noise_std * rng.normal();
  }
  return ds;
}

}  // namespace pgpr::data
