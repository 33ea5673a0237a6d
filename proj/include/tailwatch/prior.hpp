#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tailwatch {

// Hyperparameters for the prior layer. Fixed effects get wide Gaussians, the
// dispersion gets a Gamma prior on alpha, and shrunken coefficients get the
// three-parameter-beta-normal (TPBN) hierarchy with a half-Cauchy global
// scale. Defaults follow the reference analysis settings.
struct PriorConfig {
  double beta_sigma = 100.0;   // sd of the Gaussian prior on fixed effects
  double alpha_shape = 1.0;    // Gamma shape for the dispersion alpha
  double alpha_rate = 10.0;    // Gamma rate for the dispersion alpha
  double tpbn_u = 0.5;         // Beta(u, a) local-shrinkage shape
  double tpbn_a = 0.5;
  double tau_scale = 0.5;      // half-Cauchy scale of the global factor tau
};

// Non-centered TPBN block in its unconstrained sampling coordinates:
// z_j ~ N(0,1), xi_j ~ Beta(u, a) carried on the logit scale, tau half-Cauchy
// carried on the log scale. The shrunken coefficient is reconstructed as
// gamma_j = tau * lambda_j * z_j with lambda_j^2 = (1 - xi_j) / (xi_j + eps).
struct TpbnBlock {
  Eigen::VectorXd z;
  Eigen::VectorXd logit_xi;
  double log_tau = 0.0;

  Eigen::Index size() const { return z.size(); }
};

// Local scale lambda as a function of xi on its natural (0,1) scale.
double tpbn_lambda(double xi, double eps = 1e-5);

// Deterministic reconstruction gamma = tau * lambda * z.
Eigen::VectorXd tpbn_coefficients(const TpbnBlock& block, double eps = 1e-5);

// --- Log densities on the sampling scales (Jacobians included) ------------
// Each function returns the log density and *accumulates* its gradient into
// the out-parameter so callers can assemble a joint gradient in one pass.

// Independent N(0, sigma^2) on every element.
double gaussian_block_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x, double sigma,
                             Eigen::Ref<Eigen::VectorXd> grad);

// Gamma(shape, rate) prior on alpha = exp(log_alpha), including the exp
// Jacobian; density of the unconstrained log_alpha.
double log_alpha_logpdf(double log_alpha, const PriorConfig& cfg, double& grad);

// Half-Cauchy(0, scale) on tau = exp(log_tau), including the Jacobian.
double half_cauchy_log_scale_logpdf(double log_tau, double scale, double& grad);

// Beta(u, a) on xi = sigmoid(logit_xi), including the Jacobian.
double beta_logit_logpdf(double logit_xi, double u, double a, double& grad);

// Full TPBN block: standard normal on z, Beta-logit on xi, half-Cauchy-log
// on tau. grad may be null when only the value is needed.
double tpbn_block_logpdf(const TpbnBlock& block, const PriorConfig& cfg, TpbnBlock* grad);

// --- Joint prior over a structured parameter state ------------------------

struct ParameterState {
  Eigen::VectorXd fixed;          // all Gaussian-prior coefficients
  std::vector<TpbnBlock> shrink;  // zero, one (mean), or two (mean + gate) blocks
  double log_alpha = 0.0;
  bool has_alpha = true;
};

// Joint log prior; when grad is non-null it must be shaped like state and is
// overwritten (not accumulated).
double log_prior(const ParameterState& state, const PriorConfig& cfg, ParameterState* grad);

}  // namespace tailwatch
