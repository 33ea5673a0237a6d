#include "tailwatch/simdgp.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tailwatch/errors.hpp"
#include "tailwatch/mathutil.hpp"
#include "tailwatch/rng.hpp"

namespace tailwatch {

namespace {

constexpr double kKappaEps = 1e-5;  // shared concentration guard

double log1p_at(const Eigen::VectorXi& series, int t) {
  return t >= 0 ? std::log1p(static_cast<double>(series[t])) : 0.0;
}

// Linear predictor of one generating equation at week t: fixed AR(2) block on
// the own series, gamma block on [other target, noise 1..4] at lag 1.
double dgp_eta(const std::vector<double>& beta, const std::vector<double>& gamma,
               const Eigen::VectorXi& own, const Eigen::VectorXi& other,
               const Eigen::MatrixXi& noise, int t) {
  double eta = beta[0] + beta[1] * log1p_at(own, t - 1) + beta[2] * log1p_at(own, t - 2);
  eta += gamma[0] * log1p_at(other, t - 1);
  for (int k = 0; k < 4; ++k) {
    const double v = t - 1 >= 0 ? std::log1p(static_cast<double>(noise(t - 1, k))) : 0.0;
    eta += gamma[k + 1] * v;
  }
  return eta;
}

SimWeekParams week_params_impl(const SimPanel& p, SimTarget target, int week) {
  const DgpConfig& c = p.truth;
  SimWeekParams out;
  out.kappa = 1.0 / (c.alpha + kKappaEps);
  if (target == SimTarget::dense) {
    const double eta = dgp_eta(c.dense_beta, c.dense_gamma, p.dense, p.sparse, p.noise, week);
    out.eta = std::clamp(eta, c.eta_min, c.eta_max);
    out.mu = std::exp(out.eta);
    out.pi = 0.0;
  } else {
    const double eta = dgp_eta(c.sparse_beta, c.sparse_gamma, p.sparse, p.dense, p.noise, week);
    out.eta = std::clamp(eta, c.eta_min, c.eta_max);
    out.mu = std::exp(out.eta);
    const double eta_pi =
        dgp_eta(c.gate_beta, c.gate_gamma, p.sparse, p.dense, p.noise, week);
    out.pi = std::clamp(sigmoid(eta_pi), c.pi_eps, 1.0 - c.pi_eps);
  }
  return out;
}

}  // namespace

void validate_dgp_config(const DgpConfig& cfg) {
  if (cfg.t_total < 3) throw ConfigError("dgp: t_total must be at least 3");
  if (cfg.t_train >= cfg.t_total || cfg.t_train < 1) {
    throw ConfigError("dgp: t_train must lie strictly inside [1, t_total)");
  }
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.t_train) {
    throw ConfigError("dgp: burn_in must lie in [0, t_train)");
  }
  if (cfg.n_noise < 4) throw ConfigError("dgp: need at least 4 noise series");
  if (!(cfg.noise_lambda > 0.0)) throw ConfigError("dgp: noise_lambda must be positive");
  if (!(cfg.alpha > 0.0)) throw ConfigError("dgp: alpha must be positive");
  if (!(cfg.eta_min < cfg.eta_max)) throw ConfigError("dgp: empty eta clip interval");
  if (!(cfg.pi_eps > 0.0 && cfg.pi_eps < 0.5)) {
    throw ConfigError("dgp: pi_eps must lie in (0, 0.5)");
  }
  const auto need = [](const std::vector<double>& v, std::size_t n, const char* name) {
    if (v.size() != n) {
      throw ConfigError(std::string("dgp: ") + name + " must have " + std::to_string(n) +
                        " entries");
    }
  };
  need(cfg.dense_beta, 3, "dense_beta");
  need(cfg.sparse_beta, 3, "sparse_beta");
  need(cfg.gate_beta, 3, "gate_beta");
  need(cfg.dense_gamma, 5, "dense_gamma");
  need(cfg.sparse_gamma, 5, "sparse_gamma");
  need(cfg.gate_gamma, 5, "gate_gamma");
}

std::string truth_to_json(const DgpConfig& cfg) {
  nlohmann::ordered_json j;
  j["t_total"] = cfg.t_total;
  j["t_train"] = cfg.t_train;
  j["burn_in"] = cfg.burn_in;
  j["n_noise"] = cfg.n_noise;
  j["noise_lambda"] = cfg.noise_lambda;
  j["alpha"] = cfg.alpha;
  j["eta_clip"] = {cfg.eta_min, cfg.eta_max};
  j["pi_eps"] = cfg.pi_eps;
  j["seed"] = cfg.seed;
  j["dense_beta"] = cfg.dense_beta;
  j["dense_gamma"] = cfg.dense_gamma;
  j["sparse_beta"] = cfg.sparse_beta;
  j["sparse_gamma"] = cfg.sparse_gamma;
  j["gate_beta"] = cfg.gate_beta;
  j["gate_gamma"] = cfg.gate_gamma;
  j["active_set"] = true_active_set();
  j["candidate_order"] = "other-target, noise1..98";
  return j.dump(2) + "\n";
}

DgpConfig truth_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("truth record: invalid JSON: ") + e.what());
  }
  DgpConfig cfg;
  try {
    cfg.t_total = j.at("t_total").get<int>();
    cfg.t_train = j.at("t_train").get<int>();
    cfg.burn_in = j.at("burn_in").get<int>();
    cfg.n_noise = j.at("n_noise").get<int>();
    cfg.noise_lambda = j.at("noise_lambda").get<double>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.eta_min = j.at("eta_clip").at(0).get<double>();
    cfg.eta_max = j.at("eta_clip").at(1).get<double>();
    cfg.pi_eps = j.at("pi_eps").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.dense_beta = j.at("dense_beta").get<std::vector<double>>();
    cfg.dense_gamma = j.at("dense_gamma").get<std::vector<double>>();
    cfg.sparse_beta = j.at("sparse_beta").get<std::vector<double>>();
    cfg.sparse_gamma = j.at("sparse_gamma").get<std::vector<double>>();
    cfg.gate_beta = j.at("gate_beta").get<std::vector<double>>();
    cfg.gate_gamma = j.at("gate_gamma").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("truth record: missing or mistyped field: ") + e.what());
  }
  validate_dgp_config(cfg);
  return cfg;
}

SimPanel generate(const DgpConfig& cfg) {
  validate_dgp_config(cfg);
  SimPanel p;
  p.truth = cfg;
  p.noise.resize(cfg.t_total, cfg.n_noise);
  for (int j = 0; j < cfg.n_noise; ++j) {
    Philox rng = derive_stream(cfg.seed, rng_path({"sim", "noise" + std::to_string(j + 1)}));
    for (int t = 0; t < cfg.t_total; ++t) {
      p.noise(t, j) = static_cast<int>(rng.poisson(cfg.noise_lambda));
    }
  }

  p.dense = Eigen::VectorXi::Zero(cfg.t_total);
  p.sparse = Eigen::VectorXi::Zero(cfg.t_total);
  Philox dense_rng = derive_stream(cfg.seed, rng_path({"sim", "dense"}));
  Philox sparse_rng = derive_stream(cfg.seed, rng_path({"sim", "sparse"}));
  for (int t = 0; t < cfg.t_total; ++t) {
    const SimWeekParams d = week_params_impl(p, SimTarget::dense, t);
    p.dense[t] = static_cast<int>(dense_rng.nb2(d.mu, d.kappa));
    const SimWeekParams s = week_params_impl(p, SimTarget::sparse, t);
    p.sparse[t] = static_cast<int>(sparse_rng.zinb2(s.mu, s.kappa, s.pi));
  }

  int zeros = 0;
  for (int t = cfg.burn_in; t < cfg.t_train; ++t) zeros += p.sparse[t] == 0 ? 1 : 0;
  p.sparse_train_zero_fraction =
      static_cast<double>(zeros) / static_cast<double>(cfg.t_train - cfg.burn_in);
  return p;
}

Eigen::MatrixXi sim_candidates(const SimPanel& panel, SimTarget target) {
  const int t_total = static_cast<int>(panel.dense.size());
  Eigen::MatrixXi cands(t_total, 1 + panel.truth.n_noise);
  cands.col(0) = target == SimTarget::dense ? panel.sparse : panel.dense;
  cands.rightCols(panel.truth.n_noise) = panel.noise;
  return cands;
}

std::vector<std::string> sim_candidate_names(SimTarget target) {
  std::vector<std::string> names;
  names.push_back(target == SimTarget::dense ? "sparse" : "dense");
  for (int j = 1; j <= 98; ++j) names.push_back("noise" + std::to_string(j));
  return names;
}

std::vector<int> true_active_set() { return {0, 1, 2, 3, 4}; }

SimWeekParams true_week_params(const SimPanel& panel, SimTarget target, int week) {
  if (week < 0 || week >= panel.dense.size()) {
    throw DataError("true_week_params: week " + std::to_string(week) + " outside the panel");
  }
  return week_params_impl(panel, target, week);
}

PredictiveDraws oracle_predictive(const SimPanel& panel, SimTarget target, int week,
                                  int n_draws, std::uint64_t seed) {
  if (n_draws < 1) throw ConfigError("oracle_predictive: need at least one draw");
  const SimWeekParams w = true_week_params(panel, target, week);
  const std::string name = target == SimTarget::dense ? "dense" : "sparse";
  Philox rng = derive_stream(seed, rng_path({"oracle", name, "week" + std::to_string(week)}));
  PredictiveDraws out;
  out.origin = week;
  out.series = name;
  out.draws.resize(n_draws, 1);
  for (int s = 0; s < n_draws; ++s) {
    const long y = target == SimTarget::dense ? rng.nb2(w.mu, w.kappa)
                                              : rng.zinb2(w.mu, w.kappa, w.pi);
    out.draws(s, 0) = static_cast<int>(y);
  }
  return out;
}

}  // namespace tailwatch
