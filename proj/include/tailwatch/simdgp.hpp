#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tailwatch/predictive.hpp"

namespace tailwatch {

// Generator constants for the synthetic two-target panel: a dense NB2 target
// and a sparse ZINB2 target, each driven by its own AR(2) history plus five
// active lag-1 cross-series effects hidden among 98 Poisson noise series.
// Defaults are the published experiment values.
struct DgpConfig {
  int t_total = 1000;
  int t_train = 950;
  int burn_in = 10;  // initial weeks excluded from every downstream window
  int n_noise = 98;
  double noise_lambda = 1.5;
  double alpha = 0.5;  // true NB2 dispersion, both targets
  // Generation-side stabilization: mean predictors clipped pre-exponential,
  // gate probabilities clipped after the inverse logit.
  double eta_min = -15.0;
  double eta_max = 15.0;
  double pi_eps = 1e-6;
  std::uint64_t seed = 1;
  // Fixed blocks are [intercept, lag-1, lag-2] on log1p of the own series;
  // gamma vectors act on log1p lag-1 of [other target, noise 1..4].
  std::vector<double> dense_beta = {0.5, 0.2, 0.1};
  std::vector<double> dense_gamma = {0.4, 0.6, -0.5, 0.5, -0.6};
  std::vector<double> sparse_beta = {0.2, 0.1, 0.05};
  std::vector<double> sparse_gamma = {0.5, -0.6, 0.4, -0.5, 0.6};
  std::vector<double> gate_beta = {-1.0, 0.2, 0.1};
  std::vector<double> gate_gamma = {0.6, 0.7, -0.5, 0.6, -0.7};
};

// Throws ConfigError on invalid windows or coefficient-vector lengths.
void validate_dgp_config(const DgpConfig& cfg);

// Truth record serialization for oracle evaluation and selection scoring.
// Numeric values survive the round trip exactly.
std::string truth_to_json(const DgpConfig& cfg);
DgpConfig truth_from_json(const std::string& text);

struct SimPanel {
  Eigen::VectorXi dense;   // t_total
  Eigen::VectorXi sparse;  // t_total
  Eigen::MatrixXi noise;   // t_total x n_noise
  DgpConfig truth;
  // Zero fraction of the sparse target over [burn_in, t_train); the family
  // rule should route the sparse target to ZINB2 when this is >= 0.65.
  double sparse_train_zero_fraction = 0.0;
};

// Deterministic generation: values before week 0 are zero; each series draws
// from its own RNG stream under the config seed.
SimPanel generate(const DgpConfig& cfg);

enum class SimTarget { dense, sparse };

// The 99 lag-1 candidate columns in the fixed convention: the other target
// first, then noise 1..98. The true active set is {0, 1, 2, 3, 4}.
Eigen::MatrixXi sim_candidates(const SimPanel& panel, SimTarget target);
std::vector<std::string> sim_candidate_names(SimTarget target);
std::vector<int> true_active_set();

// Exact one-step-ahead parameters at `week` implied by the generating
// equations and the realized history (zero padding before week 0).
struct SimWeekParams {
  double eta = 0.0;  // clipped mean predictor
  double mu = 0.0;
  double pi = 0.0;     // 0 for the dense target
  double kappa = 0.0;  // 1 / (alpha + 1e-5)
};
SimWeekParams true_week_params(const SimPanel& panel, SimTarget target, int week);

// Predictive draws under the true parameters (no estimation): the oracle
// benchmark. Streams are (oracle, target, weekN) under `seed`.
PredictiveDraws oracle_predictive(const SimPanel& panel, SimTarget target, int week,
                                  int n_draws, std::uint64_t seed);

}  // namespace tailwatch
