#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tailwatch/glm.hpp"
#include "tailwatch/likelihood.hpp"

namespace tailwatch {

// Monte Carlo predictive counts: one simulated count per posterior draw (rows)
// per forecast week (columns).
struct PredictiveDraws {
  Eigen::MatrixXi draws;  // S x H, all entries >= 0
  int origin = 0;         // absolute week index of the first column
  std::string series;
};

struct PredictiveConfig {
  double q = 0.975;                  // right-tail level for flags
  std::string stream_tag = "predict";
  LinkConfig link;
};

// Per-week anomaly report row; the exported CSV mirrors these fields.
struct AnomalyRow {
  int week = 0;  // absolute week index
  long observed = 0;
  long median = 0;
  long lower95 = 0;   // 2.5% predictive point
  long upper95 = 0;   // 97.5% predictive point
  long upper_q = 0;   // q-quantile used for the flag
  bool flag = false;  // observed > upper_q
  double tail_score = 1.0;
};

struct MaeMetrics {
  double mae_raw = 0.0;  // mean |obs - median|
  double mae_log = 0.0;  // mean |log10(1+obs) - log10(1+median)|
};

struct ForecastResult {
  std::vector<AnomalyRow> rows;
  MaeMetrics mae;
  int exceedances = 0;
  double tail_T = 0.0;  // |(1-q) - exceedances/N|
  double q = 0.975;
};

// One simulated count per posterior draw for each covariate row. fixed_rows is
// H x p and shrink_rows H x q matching the fitted layout (q may be zero). Each
// forecast week uses the RNG stream (stream_tag, series, weekN) so weeks are
// independent and reproducible regardless of evaluation order.
PredictiveDraws simulate_predictive(const FitResult& fit, const Eigen::MatrixXd& fixed_rows,
                                    const Eigen::MatrixXd& shrink_rows, int origin_week,
                                    const std::string& series, std::uint64_t root_seed,
                                    const PredictiveConfig& cfg);

// Empirical q-quantile of integer draws: lower order statistic at rank
// ceil(q * S), clamped to at least 1 (the project-wide convention).
long upper_quantile(const Eigen::VectorXi& draws, double q);

// Posterior predictive right-tail probability: (1/S) #{draws >= observed}.
double tail_score(const Eigen::VectorXi& draws, long observed);

// Exceedance-rate deviation |(1-q) - exceedances/n_pairs|.
double tail_calibration(int exceedances, int n_pairs, double q);

// Anomaly summary of one week's draw column against the observation.
AnomalyRow score_week(const Eigen::VectorXi& draws, long observed, int week, double q);

// Point-forecast errors on the raw and log10(1+y) scales.
MaeMetrics mae_metrics(const Eigen::VectorXi& observed, const Eigen::VectorXi& medians);

// Rolling one-step-ahead evaluation: the model is fit once; covariate rows for
// each week in [eval_start_row, eval_end_row) of full_design (design-row
// indices, absolute week = start_row + row) are taken from observed history.
// full_design must have the same column structure as the design the model was
// fitted on (names are checked), extended over the evaluation weeks.
ForecastResult rolling_forecast(const FitResult& fit, const DesignMatrices& full_design,
                                int eval_start_row, int eval_end_row,
                                const std::string& series, std::uint64_t root_seed,
                                const PredictiveConfig& cfg);

}  // namespace tailwatch
