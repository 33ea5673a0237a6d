#include "tailwatch/predictive.hpp"

#include <algorithm>
#include <cmath>

#include "tailwatch/errors.hpp"
#include "tailwatch/rng.hpp"

namespace tailwatch {

PredictiveDraws simulate_predictive(const FitResult& fit, const Eigen::MatrixXd& fixed_rows,
                                    const Eigen::MatrixXd& shrink_rows, int origin_week,
                                    const std::string& series, std::uint64_t root_seed,
                                    const PredictiveConfig& cfg) {
  const ParamLayout& lay = fit.layout;
  const Eigen::Index H = fixed_rows.rows();
  if (H < 1) throw DataError("simulate_predictive: no forecast weeks");
  if (fixed_rows.cols() != lay.p_mean) {
    throw DataError("simulate_predictive: fixed covariate width " +
                    std::to_string(fixed_rows.cols()) + " != model width " +
                    std::to_string(lay.p_mean));
  }
  if (lay.q_mean > 0 && (shrink_rows.rows() != H || shrink_rows.cols() != lay.q_mean)) {
    throw DataError("simulate_predictive: shrink covariate shape mismatch");
  }
  if (!fixed_rows.allFinite() || (lay.q_mean > 0 && !shrink_rows.allFinite())) {
    throw DataError("simulate_predictive: non-finite covariate value");
  }

  const Eigen::MatrixXd theta = fit.samples.stacked();
  const Eigen::Index S = theta.rows();
  if (S < 1) throw DataError("simulate_predictive: fit has no posterior draws");

  // Per-draw linear predictors, S x H.
  const int p = lay.p_mean, q = lay.q_mean;
  Eigen::MatrixXd eta = theta.leftCols(p) * fixed_rows.transpose();
  if (q > 0) {
    eta.noalias() += shrink_coefficient_draws(fit, false) * shrink_rows.transpose();
  }
  Eigen::MatrixXd eta_pi;
  if (lay.gate) {
    const int o = lay.gate_offset();
    eta_pi = theta.middleCols(o, lay.p_gate) * fixed_rows.transpose();
    if (lay.q_gate > 0) {
      eta_pi.noalias() += shrink_coefficient_draws(fit, true) * shrink_rows.transpose();
    }
  }
  const Eigen::ArrayXd alpha = theta.col(lay.alpha_index()).array().exp();

  PredictiveDraws out;
  out.draws.resize(S, H);
  out.origin = origin_week;
  out.series = series;
  for (Eigen::Index h = 0; h < H; ++h) {
    Philox rng = derive_stream(
        root_seed,
        rng_path({cfg.stream_tag, series, "week" + std::to_string(origin_week + h)}));
    for (Eigen::Index s = 0; s < S; ++s) {
      const double mu = apply_mean_link(eta(s, h), cfg.link);
      const auto np = Nb2Params::from_mean_dispersion(mu, alpha[s], cfg.link.eps);
      long y;
      if (lay.gate) {
        y = rng.zinb2(np.mu, np.kappa, apply_gate_link(eta_pi(s, h), cfg.link));
      } else {
        y = rng.nb2(np.mu, np.kappa);
      }
      out.draws(s, h) = static_cast<int>(y);
    }
  }
  return out;
}

long upper_quantile(const Eigen::VectorXi& draws, double q) {
  return static_cast<long>(std::llround(draw_quantile(draws.cast<double>(), q)));
}

double tail_score(const Eigen::VectorXi& draws, long observed) {
  if (draws.size() < 1) throw DataError("tail_score: empty draw vector");
  const Eigen::Index hits = (draws.array() >= static_cast<int>(observed)).count();
  return static_cast<double>(hits) / static_cast<double>(draws.size());
}

double tail_calibration(int exceedances, int n_pairs, double q) {
  if (n_pairs < 1) throw DataError("tail_calibration: no held-out pairs");
  if (exceedances < 0 || exceedances > n_pairs) {
    throw DataError("tail_calibration: exceedance count out of range");
  }
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("tail_calibration: q must be in (0,1)");
  return std::abs((1.0 - q) - static_cast<double>(exceedances) / n_pairs);
}

AnomalyRow score_week(const Eigen::VectorXi& draws, long observed, int week, double q) {
  if (observed < 0) throw DataError("score_week: negative observation");
  AnomalyRow row;
  row.week = week;
  row.observed = observed;
  row.median = upper_quantile(draws, 0.5);
  row.lower95 = upper_quantile(draws, 0.025);
  row.upper95 = upper_quantile(draws, 0.975);
  row.upper_q = upper_quantile(draws, q);
  row.flag = observed > row.upper_q;
  row.tail_score = tail_score(draws, observed);
  return row;
}

MaeMetrics mae_metrics(const Eigen::VectorXi& observed, const Eigen::VectorXi& medians) {
  if (observed.size() != medians.size()) throw DataError("mae_metrics: length mismatch");
  if (observed.size() < 1) throw DataError("mae_metrics: empty input");
  MaeMetrics m;
  const Eigen::ArrayXd o = observed.cast<double>().array();
  const Eigen::ArrayXd f = medians.cast<double>().array();
  m.mae_raw = (o - f).abs().mean();
  m.mae_log = ((1.0 + o).log10() - (1.0 + f).log10()).abs().mean();
  return m;
}

ForecastResult rolling_forecast(const FitResult& fit, const DesignMatrices& full_design,
                                int eval_start_row, int eval_end_row,
                                const std::string& series, std::uint64_t root_seed,
                                const PredictiveConfig& cfg) {
  if (full_design.fixed_names != fit.design.fixed_names ||
      full_design.shrink_names != fit.design.shrink_names) {
    throw DataError("rolling_forecast: evaluation design columns do not match the fit");
  }
  const int rows = static_cast<int>(full_design.y.size());
  if (!(0 <= eval_start_row && eval_start_row < eval_end_row && eval_end_row <= rows)) {
    throw DataError("rolling_forecast: evaluation rows [" + std::to_string(eval_start_row) +
                    ", " + std::to_string(eval_end_row) + ") outside design with " +
                    std::to_string(rows) + " rows");
  }
  const int H = eval_end_row - eval_start_row;
  const Eigen::MatrixXd fixed_rows = full_design.fixed.middleRows(eval_start_row, H);
  Eigen::MatrixXd shrink_rows(H, full_design.shrink.cols());
  if (shrink_rows.cols() > 0) shrink_rows = full_design.shrink.middleRows(eval_start_row, H);

  const int origin = full_design.start_row + eval_start_row;
  const PredictiveDraws pd =
      simulate_predictive(fit, fixed_rows, shrink_rows, origin, series, root_seed, cfg);

  ForecastResult out;
  out.q = cfg.q;
  Eigen::VectorXi obs(H), med(H);
  for (int h = 0; h < H; ++h) {
    const long y = full_design.y[eval_start_row + h];
    const AnomalyRow row = score_week(pd.draws.col(h), y, origin + h, cfg.q);
    obs[h] = static_cast<int>(y);
    med[h] = static_cast<int>(row.median);
    out.exceedances += row.flag ? 1 : 0;
    out.rows.push_back(row);
  }
  out.mae = mae_metrics(obs, med);
  out.tail_T = tail_calibration(out.exceedances, H, cfg.q);
  return out;
}

}  // namespace tailwatch
