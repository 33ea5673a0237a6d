#include "tailwatch/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tailwatch/mathutil.hpp"

namespace tailwatch {

namespace {

inline void check_count(long y) {
  if (y < 0) throw std::invalid_argument("count observations must be >= 0");
}

inline bool mean_interior(double eta, const LinkConfig& link) {
  return eta > link.eta_min && eta < link.eta_max;
}

// The gate gradient vanishes when either the linear predictor or the
// probability itself sits on a clip boundary.
inline bool gate_interior(double eta_pi, const LinkConfig& link) {
  if (!(eta_pi > link.eta_min && eta_pi < link.eta_max)) return false;
  const double p = sigmoid(eta_pi);
  return p > link.eps && p < 1.0 - link.eps;
}

}  // namespace

Nb2Params Nb2Params::from_mean_dispersion(double mu, double alpha, double eps) {
  if (!std::isfinite(mu) || !(mu > 0.0)) {
    throw std::invalid_argument("NB2 mean must be finite and > 0");
  }
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw std::invalid_argument("NB2 dispersion must be finite and >= 0");
  }
  Nb2Params p;
  p.mu = mu;
  p.alpha = alpha;
  p.kappa = 1.0 / (alpha + eps);
  return p;
}

Nb2Params Nb2Params::from_mean_concentration(double mu, double kappa, double eps) {
  if (!std::isfinite(kappa) || !(kappa > 0.0) || kappa > 1.0 / eps) {
    throw std::invalid_argument("NB2 concentration must lie in (0, 1/eps]");
  }
  Nb2Params p = from_mean_dispersion(mu, std::max(0.0, 1.0 / kappa - eps), eps);
  p.kappa = kappa;  // exact, not re-derived, so kappa-parameterized references hold bitwise
  return p;
}

Zinb2Params Zinb2Params::make(double mu, double alpha, double pi, double eps) {
  if (!std::isfinite(pi) || pi < 0.0 || pi > 1.0) {
    throw std::invalid_argument("structural-zero probability must lie in [0, 1]");
  }
  Zinb2Params p;
  p.count = Nb2Params::from_mean_dispersion(mu, alpha, eps);
  p.pi = std::clamp(pi, eps, 1.0 - eps);
  return p;
}

double apply_mean_link(double eta, const LinkConfig& link) {
  return std::exp(std::clamp(eta, link.eta_min, link.eta_max));
}

double apply_gate_link(double eta_pi, const LinkConfig& link) {
  const double p = sigmoid(std::clamp(eta_pi, link.eta_min, link.eta_max));
  return std::clamp(p, link.eps, 1.0 - link.eps);
}

double nb2_log_pmf(long y, const Nb2Params& p) {
  check_count(y);
  const double yd = static_cast<double>(y);
  const double lkm = std::log(p.kappa + p.mu);
  return std::lgamma(yd + p.kappa) - std::lgamma(p.kappa) - std::lgamma(yd + 1.0) +
         p.kappa * (std::log(p.kappa) - lkm) + yd * (std::log(p.mu) - lkm);
}

double zinb2_log_pmf(long y, const Zinb2Params& p) {
  check_count(y);
  const double log_gate = std::log(p.pi);
  const double log_stay = std::log1p(-p.pi);
  if (y == 0) {
    return logsumexp2(log_gate, log_stay + nb2_log_pmf(0, p.count));
  }
  return log_stay + nb2_log_pmf(y, p.count);
}

double nb2_log_pmf_eta(long y, double eta, double log_alpha, const LinkConfig& link) {
  const double mu = apply_mean_link(eta, link);
  return nb2_log_pmf(y, Nb2Params::from_mean_dispersion(mu, std::exp(log_alpha), link.eps));
}

double zinb2_log_pmf_eta(long y, double eta, double eta_pi, double log_alpha,
                         const LinkConfig& link) {
  const double mu = apply_mean_link(eta, link);
  const double pi = apply_gate_link(eta_pi, link);
  Zinb2Params p;
  p.count = Nb2Params::from_mean_dispersion(mu, std::exp(log_alpha), link.eps);
  p.pi = pi;
  return zinb2_log_pmf(y, p);
}

Nb2Grad nb2_grad(long y, double eta, double log_alpha, const LinkConfig& link) {
  check_count(y);
  const double alpha = std::exp(log_alpha);
  const double kappa = 1.0 / (alpha + link.eps);
  const double mu = apply_mean_link(eta, link);
  const double yd = static_cast<double>(y);
  const double km = kappa + mu;

  Nb2Grad g;
  if (mean_interior(eta, link)) {
    g.d_eta = yd - mu * (yd + kappa) / km;
  }
  // d ll / d kappa, then kappa -> alpha -> log alpha chain.
  const double dk = digamma(yd + kappa) - digamma(kappa) + std::log(kappa) - std::log(km) +
                    1.0 - (yd + kappa) / km;
  g.d_log_alpha = dk * (-kappa * kappa) * alpha;
  return g;
}

Zinb2Grad zinb2_grad(long y, double eta, double eta_pi, double log_alpha,
                     const LinkConfig& link) {
  check_count(y);
  const double pi = apply_gate_link(eta_pi, link);
  const bool gate_open = gate_interior(eta_pi, link);
  const Nb2Grad base = nb2_grad(y, eta, log_alpha, link);

  Zinb2Grad g;
  if (y > 0) {
    g.d_eta = base.d_eta;
    g.d_log_alpha = base.d_log_alpha;
    if (gate_open) g.d_eta_pi = -pi;
    return g;
  }

  // Mixture at zero: posterior weight of the structural-zero branch.
  const double alpha = std::exp(log_alpha);
  const double kappa = 1.0 / (alpha + link.eps);
  const double mu = apply_mean_link(eta, link);
  const double ll0 = kappa * (std::log(kappa) - std::log(kappa + mu));
  const double total = logsumexp2(std::log(pi), std::log1p(-pi) + ll0);
  const double w_gate = std::exp(std::log(pi) - total);
  const double w_count = 1.0 - w_gate;

  g.d_eta = w_count * base.d_eta;
  g.d_log_alpha = w_count * base.d_log_alpha;
  if (gate_open) {
    g.d_eta_pi = (1.0 - pi) * w_gate - pi * w_count;
  }
  return g;
}

}  // namespace tailwatch
