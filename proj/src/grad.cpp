#include "pgpr/grad.hpp"

#include <algorithm>
#include <cmath>

#include "pgpr/rng.hpp"
#include "src/objective_core.hpp"

namespace pgpr::grad {

using kernels::KernelHyperGrad;
using model::CovKind;
using model::WhitenedBasis;

namespace {

int cov_param_count(const ModelState& s) {
  switch (s.cov.kind) {
    case CovKind::Full: {
      const int m = s.m_sigma();
      return m * (m + 1) / 2;
    }
    case CovKind::Diagonal:
      return s.m_sigma();
    case CovKind::Delta:
      return 0;
  }
  return 0;
}

std::vector<Segment> layout_for(const ModelState& s) {
  std::vector<Segment> segs;
  int off = 0;
  auto add = [&](const std::string& name, int size) {
    if (size > 0) {
      segs.push_back(Segment{name, off, size});
      off += size;
    }
  };
  const int d = s.input_dim();
  add("m_prime", s.m_mu());
  add("cov", cov_param_count(s));
  add("z_mu", s.m_mu() * d);
  if (s.decoupled) add("z_sigma", s.m_sigma() * d);
  add("log_lengthscales", d);
  add("log_outputscale", 1);
  if (s.kernel.family == kernels::KernelFamily::Periodic) add("log_period", 1);
  add("log_sigma_obs", 1);
  return segs;
}

// Column-major lower-triangle order, diagonal first within each column and
// stored as its log.
void pack_cov_full(const MatrixXd& l, double* out) {
  const Eigen::Index m = l.rows();
  int k = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    out[k++] = std::log(l(j, j));
    for (Eigen::Index i = j + 1; i < m; ++i) out[k++] = l(i, j);
  }
}

void unpack_cov_full(const double* in, MatrixXd* l) {
  const Eigen::Index m = l->rows();
  int k = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    (*l)(j, j) = std::exp(in[k++]);
    for (Eigen::Index i = j + 1; i < m; ++i) (*l)(i, j) = in[k++];
  }
}

void flatten_rows(const MatrixXd& m, double* out) {
  int k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[k++] = m(i, j);
  }
}

void unflatten_rows(const double* in, MatrixXd* m) {
  int k = 0;
  for (Eigen::Index i = 0; i < m->rows(); ++i) {
    for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = in[k++];
  }
}

}  // namespace

ParamVector pack(const ModelState& s) {
  s.validate();
  ParamVector p;
  p.segments = layout_for(s);
  int total = 0;
  for (const Segment& seg : p.segments) total += seg.size;
  p.values = VectorXd(total);
  for (const Segment& seg : p.segments) {
    double* out = p.values.data() + seg.offset;
    if (seg.name == "m_prime") {
      Eigen::Map<VectorXd>(out, seg.size) = s.m_prime;
    } else if (seg.name == "cov") {
      if (s.cov.kind == CovKind::Full) {
        pack_cov_full(s.cov.chol_factor, out);
      } else {
        Eigen::Map<VectorXd>(out, seg.size) = s.cov.log_scale;
      }
    } else if (seg.name == "z_mu") {
      flatten_rows(s.z_mu, out);
    } else if (seg.name == "z_sigma") {
      flatten_rows(s.z_sigma, out);
    } else if (seg.name == "log_lengthscales") {
      Eigen::Map<VectorXd>(out, seg.size) = s.kernel.log_lengthscales;
    } else if (seg.name == "log_outputscale") {
      out[0] = s.kernel.log_outputscale;
    } else if (seg.name == "log_period") {
      out[0] = s.kernel.log_period;
    } else if (seg.name == "log_sigma_obs") {
      out[0] = s.log_sigma_obs;
    }
  }
  return p;
}

void unpack(const ParamVector& p, ModelState* s) {
  const std::vector<Segment> expected = layout_for(*s);
  if (p.segments.size() != expected.size()) {
    throw DimMismatch("unpack: segment count mismatch");
  }
  int total = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (p.segments[i].name != expected[i].name ||
        p.segments[i].size != expected[i].size ||
        p.segments[i].offset != expected[i].offset) {
      throw DimMismatch("unpack: segment layout mismatch at " +
                        expected[i].name);
    }
    total += expected[i].size;
  }
  if (p.values.size() != total) {
    throw DimMismatch("unpack: value length mismatch");
  }
  for (const Segment& seg : p.segments) {
    const double* in = p.values.data() + seg.offset;
    if (seg.name == "m_prime") {
      s->m_prime = Eigen::Map<const VectorXd>(in, seg.size);
    } else if (seg.name == "cov") {
      if (s->cov.kind == CovKind::Full) {
        unpack_cov_full(in, &s->cov.chol_factor);
      } else {
        s->cov.log_scale = Eigen::Map<const VectorXd>(in, seg.size);
      }
    } else if (seg.name == "z_mu") {
      unflatten_rows(in, &s->z_mu);
    } else if (seg.name == "z_sigma") {
      unflatten_rows(in, &s->z_sigma);
    } else if (seg.name == "log_lengthscales") {
      s->kernel.log_lengthscales = Eigen::Map<const VectorXd>(in, seg.size);
    } else if (seg.name == "log_outputscale") {
      s->kernel.log_outputscale = in[0];
    } else if (seg.name == "log_period") {
      s->kernel.log_period = in[0];
    } else if (seg.name == "log_sigma_obs") {
      s->log_sigma_obs = in[0];
    }
  }
  if (!s->decoupled) s->z_sigma = s->z_mu;
}

namespace {

// Pulls the adjoint of the whitened feature rows back to inducing inputs
// and kernel hyperparameters for one basis.
void basis_backward(const ModelState& s, const MatrixXd& x, const MatrixXd& z,
                    const WhitenedBasis& basis, const MatrixXd& a_bar,
                    MatrixXd* dz, KernelHyperGrad* dtheta, par::Exec exec) {
  const MatrixXd ap_bar = a_bar.transpose();                     // M x n
  const MatrixXd c_bar = linalg::tri_solve(basis.l, ap_bar, true);
  MatrixXd l_bar = (-(c_bar * basis.a)).eval();
  l_bar = l_bar.triangularView<Eigen::Lower>();
  const MatrixXd kmm_bar = linalg::cholesky_pullback(basis.l.mat(), l_bar);
  kernels::kernel_matrix_vjp(s.kernel, x, z, c_bar.transpose(), dz, dtheta,
                             exec);
  kernels::kernel_matrix_vjp_sym(s.kernel, z, kmm_bar, dz, dtheta, exec);
}

}  // namespace

GradResult objective_and_gradient(const ModelState& s, const MatrixXd& x,
                                  const VectorXd& y, const ObjectiveSpec& spec,
                                  par::Exec exec, double base_jitter) {
  objectives::detail::EvalCore core =
      objectives::detail::eval_core(s, x, y, spec, exec, base_jitter);
  const Eigen::Index n = x.rows();
  const int d = s.input_dim();
  const double scale = spec.minibatch_scale;
  const double beta = spec.beta_reg;

  ParamVector g;
  g.segments = layout_for(s);
  int total = 0;
  for (const Segment& seg : g.segments) total += seg.size;
  g.values = VectorXd::Zero(total);
  auto seg_map = [&](const char* name) -> Eigen::Map<VectorXd> {
    const Segment* seg = g.find(name);
    if (seg == nullptr) {
      throw DimMismatch(std::string("missing gradient segment ") + name);
    }
    return Eigen::Map<VectorXd>(g.values.data() + seg->offset, seg->size);
  };

  const WhitenedBasis& vb = core.var_basis();
  // Per-point adjoints, with the minibatch scale folded in and the ktilde
  // clamp gating its branch.
  VectorXd mu_bar(n), kt_bar(n), quad_bar(n);
  par::parallel_for(n, [&](long i) {
    const objectives::PointTerm& t = core.terms[static_cast<std::size_t>(i)];
    mu_bar[i] = scale * t.d_mu;
    kt_bar[i] = vb.ktilde_raw[i] > 0.0 ? scale * t.d_kt : 0.0;
    quad_bar[i] = scale * t.d_quad;
  }, exec);
  const double s_bar_sum = par::chunked_sum(n, [&](long i) {
    return core.terms[static_cast<std::size_t>(i)].d_s;
  }, exec);

  // Mean branch.
  MatrixXd a_bar_mu = mu_bar * s.m_prime.transpose();  // n x M_mu
  seg_map("m_prime") = core.basis_mu.a.transpose() * mu_bar - beta * s.m_prime;

  // Variance branch: quad and ktilde pullbacks into the basis rows and the
  // covariance parameters.
  MatrixXd a_bar_vb = MatrixXd::Zero(n, s.m_sigma());
  KernelHyperGrad dtheta = KernelHyperGrad::zero(d);
  switch (s.cov.kind) {
    case CovKind::Full: {
      a_bar_vb.noalias() +=
          2.0 * (quad_bar.asDiagonal() * core.v_full) *
          s.cov.chol_factor.transpose();
      MatrixXd l_bar =
          2.0 * (vb.a.transpose() * (quad_bar.asDiagonal() * core.v_full));
      l_bar = l_bar.triangularView<Eigen::Lower>();
      // Regularizer (full whitened KL): off-diagonal L, diagonal L - 1/L.
      auto gc = seg_map("cov");
      const MatrixXd& l = s.cov.chol_factor;
      const Eigen::Index m = l.rows();
      int k = 0;
      for (Eigen::Index j = 0; j < m; ++j) {
        // Packed diagonal coordinate is log L_jj.
        gc[k++] = l_bar(j, j) * l(j, j) - beta * (l(j, j) * l(j, j) - 1.0);
        for (Eigen::Index i = j + 1; i < m; ++i) {
          gc[k++] = l_bar(i, j) - beta * l(i, j);
        }
      }
      break;
    }
    case CovKind::Diagonal: {
      const Eigen::ArrayXd sdiag = (2.0 * s.cov.log_scale.array()).exp();
      a_bar_vb.noalias() +=
          2.0 * (quad_bar.asDiagonal() * vb.a) *
          sdiag.matrix().asDiagonal();
      const VectorXd colsq =
          vb.a.array().square().matrix().transpose() * quad_bar;
      auto gc = seg_map("cov");
      const bool reg_has_diag = spec.method != objectives::Method::MAP &&
                                spec.method != objectives::Method::PPGPR_Delta;
      for (int j = 0; j < gc.size(); ++j) {
        double v = 2.0 * sdiag[j] * colsq[j];
        if (reg_has_diag) v -= beta * (sdiag[j] - 1.0);
        gc[j] = v;
      }
      break;
    }
    case CovKind::Delta:
      break;
  }
  a_bar_vb.noalias() -= 2.0 * (kt_bar.asDiagonal() * vb.a);
  dtheta.d_log_outputscale += kt_bar.sum() * s.kernel.outputscale();

  // Basis pullbacks.
  MatrixXd dz_mu = MatrixXd::Zero(s.m_mu(), d);
  if (s.decoupled) {
    MatrixXd dz_sigma = MatrixXd::Zero(s.m_sigma(), d);
    basis_backward(s, x, s.z_mu, core.basis_mu, a_bar_mu, &dz_mu, &dtheta,
                   exec);
    basis_backward(s, x, s.z_sigma, *core.basis_sigma, a_bar_vb, &dz_sigma,
                   &dtheta, exec);
    auto gz = seg_map("z_sigma");
    flatten_rows(dz_sigma, gz.data());
  } else {
    basis_backward(s, x, s.z_mu, core.basis_mu, a_bar_mu + a_bar_vb, &dz_mu,
                   &dtheta, exec);
  }
  {
    auto gz = seg_map("z_mu");
    flatten_rows(dz_mu, gz.data());
  }

  seg_map("log_lengthscales") = dtheta.d_log_lengthscales;
  seg_map("log_outputscale")[0] = dtheta.d_log_outputscale;
  if (g.find("log_period") != nullptr) {
    seg_map("log_period")[0] = dtheta.d_log_period;
  }
  seg_map("log_sigma_obs")[0] = scale * s_bar_sum * 2.0 * s.sigma_obs_sq();

  return GradResult{core.value, std::move(g)};
}

FdReport finite_diff_check(const ModelState& s, const MatrixXd& x,
                           const VectorXd& y, const ObjectiveSpec& spec,
                           double step) {
  const GradResult res = objective_and_gradient(s, x, y, spec);
  ParamVector p = pack(s);
  ModelState work = s;
  FdReport report;
  for (const Segment& seg : p.segments) {
    FdSegmentReport sr{seg.name, 0.0};
    for (int k = seg.offset; k < seg.offset + seg.size; ++k) {
      const double orig = p.values[k];
      p.values[k] = orig + step;
      unpack(p, &work);
      const double fp = objectives::evaluate_objective(work, x, y, spec).total;
      p.values[k] = orig - step;
      unpack(p, &work);
      const double fm = objectives::evaluate_objective(work, x, y, spec).total;
      p.values[k] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = res.gradient.values[k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      const double rel = std::abs(fd - an) / denom;
      sr.max_rel_err = std::max(sr.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, sr.max_rel_err);
    report.segments.push_back(std::move(sr));
  }
  return report;
}

ParamVector pack_exact(const ExactGpModel& m) {
  m.kernel.validate();
  ParamVector p;
  const int d = m.kernel.dim();
  int off = 0;
  auto add = [&](const std::string& name, int size) {
    p.segments.push_back(Segment{name, off, size});
    off += size;
  };
  add("log_lengthscales", d);
  add("log_outputscale", 1);
  if (m.kernel.family == kernels::KernelFamily::Periodic) add("log_period", 1);
  add("log_sigma_obs", 1);
  p.values = VectorXd(off);
  p.values.head(d) = m.kernel.log_lengthscales;
  p.values[d] = m.kernel.log_outputscale;
  int k = d + 1;
  if (m.kernel.family == kernels::KernelFamily::Periodic) {
    p.values[k++] = m.kernel.log_period;
  }
  p.values[k] = m.log_sigma_obs;
  return p;
}

void unpack_exact(const ParamVector& p, ExactGpModel* m) {
  const int d = m->kernel.dim();
  const int expected =
      d + 2 + (m->kernel.family == kernels::KernelFamily::Periodic ? 1 : 0);
  if (p.values.size() != expected) {
    throw DimMismatch("unpack_exact: value length mismatch");
  }
  m->kernel.log_lengthscales = p.values.head(d);
  m->kernel.log_outputscale = p.values[d];
  int k = d + 1;
  if (m->kernel.family == kernels::KernelFamily::Periodic) {
    m->kernel.log_period = p.values[k++];
  }
  m->log_sigma_obs = p.values[k];
}

GradResult exact_gp_objective_and_gradient(const ExactGpModel& m,
                                           const MatrixXd& x,
                                           const VectorXd& y) {
  if (x.rows() != y.size()) {
    throw LengthMismatch("exact gp: x rows and y length differ");
  }
  if (x.rows() > objectives::kDenseLimit) {
    throw SizeLimitExceeded("exact gp: n exceeds dense limit");
  }
  const Eigen::Index n = x.rows();
  const double s2 = std::exp(2.0 * m.log_sigma_obs);
  MatrixXd cov = kernels::kernel_matrix(m.kernel, x, x);
  cov.diagonal().array() += s2;
  const linalg::CholResult chol =
      linalg::cholesky_jitter(linalg::SymMatrix(cov), 0.0);
  const VectorXd alpha = linalg::tri_solve(
      chol.factor, linalg::tri_solve(chol.factor, y), true);
  constexpr double kLog2Pi = 1.8378770664093453;
  const double value = -0.5 * (static_cast<double>(n) * kLog2Pi +
                               y.dot(alpha)) -
                       chol.factor.log_det();
  // d value / d K = 0.5 (alpha alpha^T - K^{-1}).
  const MatrixXd linv = chol.factor.mat()
                            .triangularView<Eigen::Lower>()
                            .solve(MatrixXd::Identity(n, n));
  MatrixXd k_bar = 0.5 * (alpha * alpha.transpose() -
                          (linv.transpose() * linv));
  kernels::KernelHyperGrad dtheta =
      kernels::KernelHyperGrad::zero(m.kernel.dim());
  kernels::kernel_matrix_vjp_sym(m.kernel, x, k_bar, nullptr, &dtheta);
  const double d_log_sigma_obs = 2.0 * s2 * k_bar.trace();

  GradResult out;
  out.value.total = value;
  out.value.data_term = value;
  out.gradient = pack_exact(m);
  const int d = m.kernel.dim();
  out.gradient.values.head(d) = dtheta.d_log_lengthscales;
  out.gradient.values[d] = dtheta.d_log_outputscale;
  int k = d + 1;
  if (m.kernel.family == kernels::KernelFamily::Periodic) {
    out.gradient.values[k++] = dtheta.d_log_period;
  }
  out.gradient.values[k] = d_log_sigma_obs;
  return out;
}

FdReport finite_diff_check_exact(const ExactGpModel& m, const MatrixXd& x,
                                 const VectorXd& y, double step) {
  const GradResult res = exact_gp_objective_and_gradient(m, x, y);
  ParamVector p = pack_exact(m);
  ExactGpModel work = m;
  FdReport report;
  for (const Segment& seg : p.segments) {
    FdSegmentReport sr{seg.name, 0.0};
    for (int k = seg.offset; k < seg.offset + seg.size; ++k) {
      const double orig = p.values[k];
      p.values[k] = orig + step;
      unpack_exact(p, &work);
      const double fp = exact_gp_objective_and_gradient(work, x, y).value.total;
      p.values[k] = orig - step;
      unpack_exact(p, &work);
      const double fm = exact_gp_objective_and_gradient(work, x, y).value.total;
      p.values[k] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = res.gradient.values[k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      sr.max_rel_err = std::max(sr.max_rel_err, std::abs(fd - an) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, sr.max_rel_err);
    report.segments.push_back(std::move(sr));
  }
  return report;
}

ModelState random_state(objectives::Method method, int num_inducing, int dim,
                        std::uint64_t seed, kernels::KernelFamily family) {
  Rng rng(seed);
  ModelState s;
  s.z_mu = MatrixXd(num_inducing, dim);
  for (int i = 0; i < num_inducing; ++i) {
    for (int j = 0; j < dim; ++j) s.z_mu(i, j) = rng.normal();
  }
  s.decoupled = objectives::is_decoupled(method);
  if (s.decoupled) {
    s.z_sigma = MatrixXd(num_inducing, dim);
    for (int i = 0; i < num_inducing; ++i) {
      for (int j = 0; j < dim; ++j) s.z_sigma(i, j) = rng.normal();
    }
  } else {
    s.z_sigma = s.z_mu;
  }
  s.m_prime = VectorXd(num_inducing);
  for (int i = 0; i < num_inducing; ++i) s.m_prime[i] = 0.5 * rng.normal();
  switch (objectives::cov_requirement(method)) {
    case objectives::CovRequirement::AnyDense:
    case objectives::CovRequirement::FullOnly: {
      MatrixXd l = MatrixXd::Zero(num_inducing, num_inducing);
      for (int j = 0; j < num_inducing; ++j) {
        l(j, j) = std::exp(0.2 * rng.normal());
        for (int i = j + 1; i < num_inducing; ++i) {
          l(i, j) = 0.1 * rng.normal();
        }
      }
      s.cov.kind = model::CovKind::Full;
      s.cov.chol_factor = std::move(l);
      break;
    }
    case objectives::CovRequirement::DiagonalOnly: {
      s.cov.kind = model::CovKind::Diagonal;
      s.cov.log_scale = VectorXd(num_inducing);
      for (int i = 0; i < num_inducing; ++i) {
        s.cov.log_scale[i] = 0.2 * rng.normal();
      }
      break;
    }
    case objectives::CovRequirement::DeltaOnly:
      s.cov = model::CovParam::delta();
      break;
  }
  s.log_sigma_obs = 0.3 * rng.normal();
  s.kernel = kernels::KernelParams::defaults(family, dim);
  for (int j = 0; j < dim; ++j) {
    s.kernel.log_lengthscales[j] = 0.2 * rng.normal();
  }
  s.kernel.log_outputscale = 0.3 * rng.normal();
  s.kernel.log_period = 0.2 * rng.normal();
  s.validate();
  return s;
}

}  // namespace pgpr::grad
