#pragma once

#include <cstdint>

namespace tailwatch {

// Numerical guards shared across the likelihood code. eta values feed exp()
// and the logistic, so both linear predictors are clipped to a band where
// every downstream quantity stays finite in double precision; the same
// epsilon floors the dispersion-to-concentration map and the gate
// probability.
struct LinkConfig {
  double eta_min = -12.0;
  double eta_max = 10.0;
  double eps = 1e-5;
};

// NB2 parameters: mean mu, dispersion alpha (variance mu + alpha*mu^2), and
// the derived concentration kappa = 1 / (alpha + eps). kappa is stored so
// that every consumer shares one epsilon convention.
struct Nb2Params {
  double mu = 1.0;
  double alpha = 1.0;
  double kappa = 0.0;

  static Nb2Params from_mean_dispersion(double mu, double alpha, double eps = 1e-5);
  // Sets alpha = 1/kappa - eps so the stored kappa reproduces the requested
  // value exactly; convenient for concentration-parameterized references.
  static Nb2Params from_mean_concentration(double mu, double kappa, double eps = 1e-5);
};

// Zero-inflated NB2: structural-zero probability pi (already clipped to
// [eps, 1-eps]) plus the count component.
struct Zinb2Params {
  Nb2Params count;
  double pi = 0.5;

  static Zinb2Params make(double mu, double alpha, double pi, double eps = 1e-5);
};

// Log link with clipping: mu = exp(clip(eta)).
double apply_mean_link(double eta, const LinkConfig& link = {});
// Logistic gate with the same clip on the linear predictor, then a floor and
// ceiling on the probability itself.
double apply_gate_link(double eta_pi, const LinkConfig& link = {});

// log P(Y = y) for the NB2 pmf in its Gamma-function form. y must be >= 0.
double nb2_log_pmf(long y, const Nb2Params& p);

// log P(Y = y) under the zero-inflated NB2: the y = 0 case mixes the
// structural zero and the count zero through a log-sum-exp.
double zinb2_log_pmf(long y, const Zinb2Params& p);

// Convenience evaluations straight from the linear predictors. alpha enters
// on the log scale because that is how the samplers carry it.
double nb2_log_pmf_eta(long y, double eta, double log_alpha, const LinkConfig& link = {});
double zinb2_log_pmf_eta(long y, double eta, double eta_pi, double log_alpha,
                         const LinkConfig& link = {});

// Analytic gradients of the per-observation log pmf with respect to the
// unconstrained quantities (eta, eta_pi, log_alpha). Where a clip is active
// the derivative through that argument is exactly zero, matching the
// piecewise-constant clamp.
struct Nb2Grad {
  double d_eta = 0.0;
  double d_log_alpha = 0.0;
};
Nb2Grad nb2_grad(long y, double eta, double log_alpha, const LinkConfig& link = {});

struct Zinb2Grad {
  double d_eta = 0.0;
  double d_eta_pi = 0.0;
  double d_log_alpha = 0.0;
};
Zinb2Grad zinb2_grad(long y, double eta, double eta_pi, double log_alpha,
                     const LinkConfig& link = {});

}  // namespace tailwatch
