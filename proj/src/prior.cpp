#include "tailwatch/prior.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tailwatch/mathutil.hpp"

namespace tailwatch {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log sqrt(2 pi)
}

double tpbn_lambda(double xi, double eps) {
  if (!(xi > 0.0) || !(xi < 1.0)) {
    throw std::invalid_argument("tpbn local parameter xi must lie strictly in (0, 1)");
  }
  return std::sqrt((1.0 - xi) / (xi + eps));
}

Eigen::VectorXd tpbn_coefficients(const TpbnBlock& block, double eps) {
  if (block.z.size() != block.logit_xi.size()) {
    throw std::invalid_argument("tpbn block has mismatched z / xi lengths");
  }
  const double tau = std::exp(block.log_tau);
  Eigen::VectorXd gamma(block.size());
  for (Eigen::Index j = 0; j < block.size(); ++j) {
    const double xi = sigmoid(block.logit_xi[j]);
    gamma[j] = tau * tpbn_lambda(xi, eps) * block.z[j];
  }
  return gamma;
}

double gaussian_block_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x, double sigma,
                             Eigen::Ref<Eigen::VectorXd> grad) {
  if (!(sigma > 0.0)) throw std::invalid_argument("Gaussian prior sd must be > 0");
  const double inv_var = 1.0 / (sigma * sigma);
  const double lp = -static_cast<double>(x.size()) * (kLogSqrt2Pi + std::log(sigma)) -
                    0.5 * inv_var * x.squaredNorm();
  grad.noalias() -= inv_var * x;
  return lp;
}

double log_alpha_logpdf(double log_alpha, const PriorConfig& cfg, double& grad) {
  // Gamma(shape, rate) density in alpha times the Jacobian d alpha / d log
  // alpha = alpha collapses to shape * log_alpha - rate * alpha + const.
  const double alpha = std::exp(log_alpha);
  const double lp = cfg.alpha_shape * std::log(cfg.alpha_rate) - std::lgamma(cfg.alpha_shape) +
                    cfg.alpha_shape * log_alpha - cfg.alpha_rate * alpha;
  grad += cfg.alpha_shape - cfg.alpha_rate * alpha;
  return lp;
}

double half_cauchy_log_scale_logpdf(double log_tau, double scale, double& grad) {
  const double ratio = std::exp(log_tau) / scale;
  const double r2 = ratio * ratio;
  const double lp = std::log(2.0) - std::log(std::numbers::pi) - std::log(scale) -
                    std::log1p(r2) + log_tau;
  grad += 1.0 - 2.0 * r2 / (1.0 + r2);
  return lp;
}

double beta_logit_logpdf(double logit_xi, double u, double a, double& grad) {
  // Beta(u, a) in xi with the logistic Jacobian xi (1 - xi): the (u-1, a-1)
  // exponents become (u, a).
  const double log_xi = -log1pexp(-logit_xi);
  const double log_1mxi = -log1pexp(logit_xi);
  const double xi = sigmoid(logit_xi);
  grad += u * (1.0 - xi) - a * xi;
  return u * log_xi + a * log_1mxi - log_beta(u, a);
}

double tpbn_block_logpdf(const TpbnBlock& block, const PriorConfig& cfg, TpbnBlock* grad) {
  if (block.z.size() != block.logit_xi.size()) {
    throw std::invalid_argument("tpbn block has mismatched z / xi lengths");
  }
  if (grad != nullptr) {
    grad->z.setZero(block.size());
    grad->logit_xi.setZero(block.size());
    grad->log_tau = 0.0;
  }
  double lp = -static_cast<double>(block.size()) * kLogSqrt2Pi - 0.5 * block.z.squaredNorm();
  if (grad != nullptr) grad->z = -block.z;
  double xi_grad_sink = 0.0;
  for (Eigen::Index j = 0; j < block.size(); ++j) {
    double& slot = grad != nullptr ? grad->logit_xi[j] : xi_grad_sink;
    lp += beta_logit_logpdf(block.logit_xi[j], cfg.tpbn_u, cfg.tpbn_a, slot);
  }
  double tau_grad = 0.0;
  lp += half_cauchy_log_scale_logpdf(block.log_tau, cfg.tau_scale, tau_grad);
  if (grad != nullptr) grad->log_tau = tau_grad;
  return lp;
}

double log_prior(const ParameterState& state, const PriorConfig& cfg, ParameterState* grad) {
  if (grad != nullptr) {
    grad->fixed.setZero(state.fixed.size());
    grad->shrink.resize(state.shrink.size());
    grad->log_alpha = 0.0;
    grad->has_alpha = state.has_alpha;
  }
  double lp = 0.0;
  if (state.fixed.size() > 0) {
    if (grad != nullptr) {
      lp += gaussian_block_logpdf(state.fixed, cfg.beta_sigma, grad->fixed);
    } else {
      Eigen::VectorXd sink = Eigen::VectorXd::Zero(state.fixed.size());
      lp += gaussian_block_logpdf(state.fixed, cfg.beta_sigma, sink);
    }
  }
  for (std::size_t b = 0; b < state.shrink.size(); ++b) {
    lp += tpbn_block_logpdf(state.shrink[b], cfg, grad != nullptr ? &grad->shrink[b] : nullptr);
  }
  if (state.has_alpha) {
    double ga = 0.0;
    lp += log_alpha_logpdf(state.log_alpha, cfg, ga);
    if (grad != nullptr) grad->log_alpha = ga;
  }
  return lp;
}

}  // namespace tailwatch
