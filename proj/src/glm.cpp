#include "tailwatch/glm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tailwatch/errors.hpp"
#include "tailwatch/mathutil.hpp"

namespace tailwatch {

std::string family_name(Family f) { return f == Family::nb2 ? "nb2" : "zinb2"; }

Family family_from_name(const std::string& name) {
  if (name == "nb2") return Family::nb2;
  if (name == "zinb2") return Family::zinb2;
  throw ConfigError("unknown family '" + name + "' (expected nb2 or zinb2)");
}

double zero_fraction(const Eigen::Ref<const Eigen::VectorXi>& counts) {
  if (counts.size() == 0) throw DataError("zero fraction of an empty series is undefined");
  long zeros = 0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(counts.size());
}

Family select_family(const Eigen::Ref<const Eigen::VectorXi>& counts) {
  if (counts.size() == 0) throw DataError("family selection needs a nonempty series");
  long zeros = 0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) ++zeros;
  }
  // zeros / n >= 0.65 without floating-point comparisons.
  return 20 * zeros >= 13 * counts.size() ? Family::zinb2 : Family::nb2;
}

// --- Design ----------------------------------------------------------------

DesignMatrices build_design(const Eigen::VectorXi& y, const Eigen::MatrixXi& candidates,
                            const std::vector<std::string>& candidate_names,
                            const Eigen::MatrixXd& external,
                            const std::vector<std::string>& external_names,
                            const DesignConfig& cfg) {
  const Eigen::Index t_total = y.size();
  if (candidates.cols() > 0 && candidates.rows() != t_total) {
    throw DataError("candidate panel length does not match the target series");
  }
  if (external.cols() > 0 && external.rows() != t_total) {
    throw DataError("external covariate length does not match the target series");
  }
  if (static_cast<Eigen::Index>(candidate_names.size()) != candidates.cols()) {
    throw DataError("candidate name list does not match the candidate column count");
  }
  if (static_cast<Eigen::Index>(external_names.size()) != external.cols()) {
    throw DataError("external name list does not match the external column count");
  }
  for (Eigen::Index t = 0; t < t_total; ++t) {
    if (y[t] < 0) throw DataError("negative count in target series");
  }
  if (candidates.size() > 0 && candidates.minCoeff() < 0) {
    throw DataError("negative count in candidate panel");
  }
  if (external.size() > 0 && !external.allFinite()) {
    throw DataError("non-finite external covariate value");
  }

  int max_lag = cfg.candidate_lag;
  for (int lag : cfg.ar_lags) {
    if (lag < 1) throw ConfigError("autoregressive lags must be >= 1");
    max_lag = std::max(max_lag, lag);
  }
  if (cfg.candidate_lag < 1) throw ConfigError("candidate lag must be >= 1");
  const Eigen::Index rows = t_total - max_lag;
  if (rows < 1) throw DataError("series too short for the requested lags");

  DesignMatrices d;
  d.start_row = max_lag;
  d.y = y.tail(rows);

  const int p = (cfg.intercept ? 1 : 0) + static_cast<int>(cfg.ar_lags.size()) +
                static_cast<int>(external.cols());
  d.fixed.resize(rows, p);
  int col = 0;
  if (cfg.intercept) {
    d.fixed.col(col).setOnes();
    d.fixed_names.push_back("intercept");
    ++col;
  }
  for (int lag : cfg.ar_lags) {
    for (Eigen::Index t = 0; t < rows; ++t) {
      d.fixed(t, col) = std::log1p(static_cast<double>(y[max_lag + t - lag]));
    }
    d.fixed_names.push_back("ar" + std::to_string(lag));
    ++col;
  }
  for (Eigen::Index j = 0; j < external.cols(); ++j) {
    d.fixed.col(col) = external.col(j).segment(max_lag, rows);
    d.fixed_names.push_back(external_names[j]);
    ++col;
  }

  // Candidate columns: log1p of the lagged counts; all-zero columns carry no
  // information under log1p and are dropped with a report.
  std::vector<int> kept;
  for (Eigen::Index j = 0; j < candidates.cols(); ++j) {
    bool any = false;
    for (Eigen::Index t = 0; t < rows && !any; ++t) {
      any = candidates(max_lag + t - cfg.candidate_lag, j) != 0;
    }
    if (any) {
      kept.push_back(static_cast<int>(j));
    } else {
      d.dropped_candidates.push_back(static_cast<int>(j));
    }
  }
  d.shrink.resize(rows, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const int j = kept[k];
    for (Eigen::Index t = 0; t < rows; ++t) {
      d.shrink(t, static_cast<Eigen::Index>(k)) =
          std::log1p(static_cast<double>(candidates(max_lag + t - cfg.candidate_lag, j)));
    }
    d.shrink_names.push_back(candidate_names[j]);
    d.shrink_source.push_back(j);
  }
  return d;
}

DesignMatrices reduced_design(const DesignMatrices& full, const std::vector<int>& active) {
  DesignMatrices d;
  d.y = full.y;
  d.start_row = full.start_row;
  d.fixed.resize(full.fixed.rows(), full.fixed.cols() + static_cast<Eigen::Index>(active.size()));
  d.fixed.leftCols(full.fixed.cols()) = full.fixed;
  d.fixed_names = full.fixed_names;
  Eigen::Index col = full.fixed.cols();
  for (int cand : active) {
    const auto it = std::find(full.shrink_source.begin(), full.shrink_source.end(), cand);
    if (it == full.shrink_source.end()) {
      throw DataError("active candidate " + std::to_string(cand) +
                      " is not a kept design column");
    }
    const Eigen::Index k = it - full.shrink_source.begin();
    d.fixed.col(col) = full.shrink.col(k);
    d.fixed_names.push_back(full.shrink_names[k]);
    ++col;
  }
  d.shrink.resize(full.fixed.rows(), 0);
  d.dropped_candidates = full.dropped_candidates;
  return d;
}

// --- Layout ----------------------------------------------------------------

std::vector<std::string> ParamLayout::names(const DesignMatrices& design) const {
  std::vector<std::string> out;
  auto block = [&](const std::string& prefix, int p, int q) {
    for (int i = 0; i < p; ++i) {
      out.push_back(prefix + ".b." + design.fixed_names[i]);
    }
    for (int j = 0; j < q; ++j) out.push_back(prefix + ".z." + design.shrink_names[j]);
    for (int j = 0; j < q; ++j) out.push_back(prefix + ".xi." + design.shrink_names[j]);
    if (q > 0) out.push_back(prefix + ".log_tau");
  };
  block("mu", p_mean, q_mean);
  if (gate) block("gate", p_gate, q_gate);
  out.push_back("log_alpha");
  return out;
}

// --- Posterior -------------------------------------------------------------

GlmPosterior::GlmPosterior(const DesignMatrices& design, Family family, ParamLayout layout,
                           PriorConfig prior, LinkConfig link)
    : design_(&design), family_(family), layout_(layout), prior_(prior), link_(link) {
  const Eigen::Index rows = design.y.size();
  if (design.fixed.rows() != rows || (design.shrink.cols() > 0 && design.shrink.rows() != rows)) {
    throw DataError("design matrices and response have mismatched row counts");
  }
  yd_.resize(rows);
  zero_mask_.resize(rows);
  std::vector<int> row_unique(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const long y = design.y[t];
    yd_[t] = static_cast<double>(y);
    zero_mask_[t] = y == 0 ? 1.0 : 0.0;
    lgamma_y_plus_one_sum_ += std::lgamma(yd_[t] + 1.0);
    auto it = std::lower_bound(unique_y_.begin(), unique_y_.end(), y);
    if (it == unique_y_.end() || *it != y) {
      it = unique_y_.insert(it, y);
    }
  }
  unique_count_.assign(unique_y_.size(), 0.0);
  row_unique_.resize(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const long y = design.y[t];
    const auto it = std::lower_bound(unique_y_.begin(), unique_y_.end(), y);
    row_unique_[t] = static_cast<int>(it - unique_y_.begin());
    unique_count_[row_unique_[t]] += 1.0;
  }
}

namespace {

// Per-block evaluation scratch: linear predictor pieces plus everything the
// chain rule needs to push a d/d-eta vector back onto the block parameters.
struct Block {
  Eigen::ArrayXd eta_raw, eta, interior;
  Eigen::VectorXd beta, z, gamma;
  Eigen::ArrayXd xi, lam, dlam_dxi;
  double tau = 1.0;
  int offset = 0, p = 0, q = 0;
};

void eval_linear(const DesignMatrices& d, const Eigen::VectorXd& theta, int offset, int p,
                 int q, const LinkConfig& link, double eps, Block& b) {
  b.offset = offset;
  b.p = p;
  b.q = q;
  b.beta = theta.segment(offset, p);
  b.eta_raw = (d.fixed * b.beta).array();
  if (q > 0) {
    b.z = theta.segment(offset + p, q);
    const Eigen::ArrayXd lx = theta.segment(offset + p + q, q).array();
    b.tau = std::exp(theta[offset + p + 2 * q]);
    b.xi = lx.unaryExpr([](double v) { return sigmoid(v); }).max(1e-12).min(1.0 - 1e-12);
    b.lam = ((1.0 - b.xi) / (b.xi + eps)).sqrt();
    // d lambda / d xi = -(1 + eps) / (2 lambda (xi + eps)^2)
    b.dlam_dxi = -(1.0 + eps) / (2.0 * b.lam * (b.xi + eps).square());
    b.gamma = (b.tau * b.lam * b.z.array()).matrix();
    b.eta_raw += (d.shrink * b.gamma).array();
  }
  b.eta = b.eta_raw.max(link.eta_min).min(link.eta_max);
  b.interior = ((b.eta_raw > link.eta_min) && (b.eta_raw < link.eta_max)).cast<double>();
}

// Scatter a d/d-eta vector into the flat gradient for one block.
void backprop_eta(const DesignMatrices& d, const Block& b, const Eigen::ArrayXd& d_eta,
                  Eigen::VectorXd& grad) {
  grad.segment(b.offset, b.p).noalias() += d.fixed.transpose() * d_eta.matrix();
  if (b.q > 0) {
    const Eigen::VectorXd g_gamma = d.shrink.transpose() * d_eta.matrix();
    grad.segment(b.offset + b.p, b.q).array() += g_gamma.array() * (b.tau * b.lam);
    grad.segment(b.offset + b.p + b.q, b.q).array() +=
        g_gamma.array() * (b.tau * b.z.array() * b.dlam_dxi * b.xi * (1.0 - b.xi));
    grad[b.offset + b.p + 2 * b.q] += g_gamma.dot(b.gamma);
  }
}

// Prior terms for one block (Gaussian betas plus the TPBN hierarchy).
double block_prior(const Eigen::VectorXd& theta, const Block& b, const PriorConfig& prior,
                   Eigen::VectorXd& grad) {
  double lp = 0.0;
  {
    auto seg = grad.segment(b.offset, b.p);
    lp += gaussian_block_logpdf(theta.segment(b.offset, b.p), prior.beta_sigma, seg);
  }
  if (b.q > 0) {
    auto zseg = grad.segment(b.offset + b.p, b.q);
    lp += gaussian_block_logpdf(theta.segment(b.offset + b.p, b.q), 1.0, zseg);
    for (int j = 0; j < b.q; ++j) {
      lp += beta_logit_logpdf(theta[b.offset + b.p + b.q + j], prior.tpbn_u, prior.tpbn_a,
                              grad[b.offset + b.p + b.q + j]);
    }
    lp += half_cauchy_log_scale_logpdf(theta[b.offset + b.p + 2 * b.q], prior.tau_scale,
                                       grad[b.offset + b.p + 2 * b.q]);
  }
  return lp;
}

}  // namespace

double GlmPosterior::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  const auto& d = *design_;
  if (theta.size() != layout_.dim()) {
    throw SamplerError("parameter vector does not match the model layout");
  }
  grad.setZero(theta.size());
  const Eigen::Index rows = d.y.size();

  const double log_alpha = theta[layout_.alpha_index()];
  const double alpha = std::exp(log_alpha);
  const double kappa = 1.0 / (alpha + link_.eps);
  const double log_kappa = std::log(kappa);

  Block mean;
  eval_linear(d, theta, layout_.mean_offset(), layout_.p_mean, layout_.q_mean, link_,
              link_.eps, mean);

  double ll = 0.0;
  double dkappa_weighted = 0.0;
  Eigen::ArrayXd d_eta_mean;

  if (rows > 0) {
    // Shared NB2 pieces for every row.
    const Eigen::ArrayXd mu = mean.eta.exp();
    const Eigen::ArrayXd km = kappa + mu;
    const Eigen::ArrayXd lkm = km.log();

    // lgamma(y + kappa), digamma(y + kappa) gathered over unique counts.
    std::vector<double> lg(unique_y_.size()), dg(unique_y_.size());
    for (std::size_t u = 0; u < unique_y_.size(); ++u) {
      lg[u] = std::lgamma(static_cast<double>(unique_y_[u]) + kappa);
      dg[u] = digamma(static_cast<double>(unique_y_[u]) + kappa);
    }
    Eigen::ArrayXd lg_rows(rows), dg_rows(rows);
    for (Eigen::Index t = 0; t < rows; ++t) {
      lg_rows[t] = lg[row_unique_[t]];
      dg_rows[t] = dg[row_unique_[t]];
    }
    const double lgamma_kappa = std::lgamma(kappa);
    const double digamma_kappa = digamma(kappa);

    const Eigen::ArrayXd ll_nb = lg_rows - lgamma_kappa + kappa * (log_kappa - lkm) +
                                 yd_ * (mean.eta - lkm);
    const Eigen::ArrayXd d_eta_nb = (yd_ - mu * (yd_ + kappa) / km) * mean.interior;
    const Eigen::ArrayXd dkappa_nb =
        dg_rows - digamma_kappa + (log_kappa + 1.0) - lkm - (yd_ + kappa) / km;

    if (family_ == Family::nb2) {
      ll = ll_nb.sum() - lgamma_y_plus_one_sum_;
      d_eta_mean = d_eta_nb;
      dkappa_weighted = dkappa_nb.sum();
    } else {
      Block gate;
      eval_linear(d, theta, layout_.gate_offset(), layout_.p_gate, layout_.q_gate, link_,
                  link_.eps, gate);
      const Eigen::ArrayXd sp = gate.eta.unaryExpr([](double v) { return sigmoid(v); });
      const Eigen::ArrayXd pi = sp.max(link_.eps).min(1.0 - link_.eps);
      const Eigen::ArrayXd gate_interior =
          (gate.interior > 0.5 && sp > link_.eps && sp < 1.0 - link_.eps).cast<double>();
      const Eigen::ArrayXd log_pi = pi.log();
      const Eigen::ArrayXd log_1mpi = (-pi).log1p();

      // Zero rows mix the structural zero with the count zero; positive rows
      // pick up log(1 - pi).
      const Eigen::ArrayXd branch = log_1mpi + ll_nb;
      const Eigen::ArrayXd hi = log_pi.max(branch);
      const Eigen::ArrayXd mix = hi + (log_pi.min(branch) - hi).exp().log1p();
      const Eigen::ArrayXd w_count = (branch - mix).exp();

      ll = (zero_mask_ * mix + (1.0 - zero_mask_) * branch).sum() - lgamma_y_plus_one_sum_;

      const Eigen::ArrayXd w = zero_mask_ * w_count + (1.0 - zero_mask_);
      d_eta_mean = w * d_eta_nb;
      dkappa_weighted = (w * dkappa_nb).sum();

      const Eigen::ArrayXd d_eta_gate =
          (zero_mask_ * ((1.0 - pi) * (1.0 - w_count) - pi * w_count) +
           (1.0 - zero_mask_) * (-pi)) *
          gate_interior;
      backprop_eta(d, gate, d_eta_gate, grad);
      ll += block_prior(theta, gate, prior_, grad);
    }
    backprop_eta(d, mean, d_eta_mean, grad);
    grad[layout_.alpha_index()] += dkappa_weighted * (-kappa * kappa) * alpha;
  } else if (family_ == Family::zinb2) {
    Block gate;
    eval_linear(d, theta, layout_.gate_offset(), layout_.p_gate, layout_.q_gate, link_,
                link_.eps, gate);
    ll += block_prior(theta, gate, prior_, grad);
  }

  // Mean-block and dispersion priors.
  double lp = block_prior(theta, mean, prior_, grad);
  double ga = 0.0;
  lp += log_alpha_logpdf(log_alpha, prior_, ga);
  grad[layout_.alpha_index()] += ga;
  return ll + lp;
}

LogDensityGrad GlmPosterior::as_target() const {
  return [this](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return (*this)(theta, grad);
  };
}

// --- Draw utilities --------------------------------------------------------

double draw_quantile(Eigen::VectorXd draws, double p) {
  if (draws.size() == 0) throw DataError("quantile of an empty draw vector");
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("quantile level must lie in (0, 1]");
  }
  std::sort(draws.data(), draws.data() + draws.size());
  const auto n = static_cast<double>(draws.size());
  Eigen::Index idx = static_cast<Eigen::Index>(std::ceil(p * n));
  idx = std::max<Eigen::Index>(idx, 1);
  idx = std::min<Eigen::Index>(idx, draws.size());
  return draws[idx - 1];
}

Eigen::MatrixXd shrink_coefficient_draws(const FitResult& fit, bool gate_block) {
  const ParamLayout& lay = fit.layout;
  const int q = gate_block ? lay.q_gate : lay.q_mean;
  const int p = gate_block ? lay.p_gate : lay.p_mean;
  const int offset = gate_block ? lay.gate_offset() : lay.mean_offset();
  if (gate_block && !lay.gate) throw DataError("model has no gate block");
  const Eigen::MatrixXd all = fit.samples.stacked();
  Eigen::MatrixXd out(all.rows(), q);
  const double eps = 1e-5;
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    const double tau = std::exp(all(i, offset + p + 2 * q));
    for (int j = 0; j < q; ++j) {
      const double xi =
          std::clamp(sigmoid(all(i, offset + p + q + j)), 1e-12, 1.0 - 1e-12);
      out(i, j) = tau * std::sqrt((1.0 - xi) / (xi + eps)) * all(i, offset + p + j);
    }
  }
  return out;
}

// --- Screening -------------------------------------------------------------

namespace {

Eigen::MatrixXd interval_matrix(const Eigen::MatrixXd& draws, double level) {
  const double lo_p = (1.0 - level) / 2.0;
  const double hi_p = 1.0 - lo_p;
  Eigen::MatrixXd ci(draws.cols(), 2);
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    ci(j, 0) = draw_quantile(draws.col(j), lo_p);
    ci(j, 1) = draw_quantile(draws.col(j), hi_p);
  }
  return ci;
}

}  // namespace

ScreenResult screen_candidates(const FitResult& step1, double delta, double level) {
  if (delta < 0.0) throw ConfigError("equivalence half-width delta must be >= 0");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  ScreenResult res;
  res.delta = delta;
  res.level = level;

  std::set<int> active_mean, active_gate;
  if (step1.layout.q_mean > 0) {
    const Eigen::MatrixXd gammas = shrink_coefficient_draws(step1, false);
    res.mean_ci = interval_matrix(gammas, level);
    for (Eigen::Index j = 0; j < res.mean_ci.rows(); ++j) {
      if (res.mean_ci(j, 0) > delta || res.mean_ci(j, 1) < -delta) {
        active_mean.insert(step1.design.shrink_source[j]);
      }
    }
  }
  if (step1.layout.gate && step1.layout.q_gate > 0) {
    const Eigen::MatrixXd gammas = shrink_coefficient_draws(step1, true);
    res.gate_ci = interval_matrix(gammas, level);
    for (Eigen::Index j = 0; j < res.gate_ci.rows(); ++j) {
      if (res.gate_ci(j, 0) > delta || res.gate_ci(j, 1) < -delta) {
        active_gate.insert(step1.design.shrink_source[j]);
      }
    }
  }

  std::set<int> all = active_mean;
  all.insert(active_gate.begin(), active_gate.end());
  for (int cand : all) {
    ActiveEntry e;
    e.candidate = cand;
    e.from_mean = active_mean.count(cand) > 0;
    e.from_gate = active_gate.count(cand) > 0;
    res.entries.push_back(e);
  }
  return res;
}

CoefSummary summarize_coefficients(const FitResult& fit) {
  const Eigen::MatrixXd all = fit.samples.stacked();
  CoefSummary s;
  s.names = fit.param_names;
  const Eigen::Index dim = all.cols();
  s.mean.resize(dim);
  s.sd.resize(dim);
  s.q025.resize(dim);
  s.q50.resize(dim);
  s.q975.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    s.mean[j] = all.col(j).mean();
    s.sd[j] = std::sqrt((all.col(j).array() - s.mean[j]).square().sum() /
                        std::max<Eigen::Index>(all.rows() - 1, 1));
    s.q025[j] = draw_quantile(all.col(j), 0.025);
    s.q50[j] = draw_quantile(all.col(j), 0.5);
    s.q975[j] = draw_quantile(all.col(j), 0.975);
  }
  return s;
}

// --- Fitting ---------------------------------------------------------------

FitResult fit_glm(const DesignMatrices& design, Family family, const FitConfig& cfg,
                  const std::string& stage_label) {
  FitResult fit;
  fit.family = family;
  fit.design = design;
  fit.layout.p_mean = static_cast<int>(design.fixed.cols());
  fit.layout.q_mean = static_cast<int>(design.shrink.cols());
  fit.layout.gate = family == Family::zinb2;
  fit.layout.p_gate = fit.layout.gate ? fit.layout.p_mean : 0;
  fit.layout.q_gate = fit.layout.gate ? fit.layout.q_mean : 0;
  fit.param_names = fit.layout.names(fit.design);

  GlmPosterior posterior(fit.design, family, fit.layout, cfg.prior, cfg.link);
  SamplerConfig scfg = cfg.sampler;
  scfg.stream_label = cfg.stream_tag + "/" + stage_label;
  fit.samples = nuts_sample(posterior.as_target(), Eigen::VectorXd::Zero(fit.layout.dim()),
                            scfg);
  return fit;
}

TwoStepResult two_step_fit(const Eigen::VectorXi& y, const Eigen::MatrixXi& candidates,
                           const std::vector<std::string>& candidate_names,
                           const Eigen::MatrixXd& external,
                           const std::vector<std::string>& external_names,
                           const FitConfig& cfg) {
  TwoStepResult res;
  res.family = cfg.family.value_or(select_family(y));

  const DesignMatrices full =
      build_design(y, candidates, candidate_names, external, external_names, cfg.design);
  res.step1 = fit_glm(full, res.family, cfg, "step1");
  res.screen = screen_candidates(res.step1, cfg.delta, cfg.level);
  for (const auto& e : res.screen.entries) res.active.push_back(e.candidate);

  const DesignMatrices second = reduced_design(full, res.active);
  res.step2 = fit_glm(second, res.family, cfg, "step2");
  return res;
}

}  // namespace tailwatch
