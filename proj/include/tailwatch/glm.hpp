#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tailwatch/likelihood.hpp"
#include "tailwatch/prior.hpp"
#include "tailwatch/sampler.hpp"

namespace tailwatch {

enum class Family { nb2, zinb2 };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Family routing rule: the zero-inflated variant switches on when at least
// 65% of the training counts are zero (inclusive boundary, evaluated in
// exact integer arithmetic).
Family select_family(const Eigen::Ref<const Eigen::VectorXi>& counts);
double zero_fraction(const Eigen::Ref<const Eigen::VectorXi>& counts);

// --- Design construction ---------------------------------------------------

struct DesignConfig {
  std::vector<int> ar_lags = {1, 2};  // log1p lags of the target in the fixed block
  int candidate_lag = 1;              // lag applied to every candidate column
  bool intercept = true;
};

// Lagged design for one target series. Rows start at the largest lag so every
// row is fully observed. Candidate columns that are identically zero over the
// usable rows are dropped and reported, never silently.
struct DesignMatrices {
  Eigen::MatrixXd fixed;   // rows x p: intercept, log1p AR lags, externals
  Eigen::MatrixXd shrink;  // rows x q_kept: log1p lagged candidate counts
  Eigen::VectorXi y;       // rows
  std::vector<std::string> fixed_names;
  std::vector<std::string> shrink_names;
  std::vector<int> shrink_source;       // original candidate index per kept column
  std::vector<int> dropped_candidates;  // constant-zero candidate indices
  int start_row = 0;                    // index of the first modeled week
};

DesignMatrices build_design(const Eigen::VectorXi& y, const Eigen::MatrixXi& candidates,
                            const std::vector<std::string>& candidate_names,
                            const Eigen::MatrixXd& external,
                            const std::vector<std::string>& external_names,
                            const DesignConfig& cfg);

// --- Parameter layout ------------------------------------------------------

// Flat parameter vector layout shared by the posterior, the sampler, and the
// serializers. A block is [beta(p), z(q), logit_xi(q), log_tau] with the
// shrinkage coordinates present only when q > 0; the gate block (zero-
// inflated family) repeats the structure; log_alpha is always last.
struct ParamLayout {
  int p_mean = 0;
  int q_mean = 0;
  bool gate = false;
  int p_gate = 0;
  int q_gate = 0;

  static int block_dim(int p, int q) { return p + (q > 0 ? 2 * q + 1 : 0); }
  int mean_offset() const { return 0; }
  int gate_offset() const { return block_dim(p_mean, q_mean); }
  int alpha_index() const {
    return block_dim(p_mean, q_mean) + (gate ? block_dim(p_gate, q_gate) : 0);
  }
  int dim() const { return alpha_index() + 1; }

  std::vector<std::string> names(const DesignMatrices& design) const;
};

// --- Posterior target ------------------------------------------------------

// Joint log posterior (likelihood + priors on the sampling scales) for one
// fitted model. Thread-safe: evaluation keeps no mutable state.
class GlmPosterior {
 public:
  GlmPosterior(const DesignMatrices& design, Family family, ParamLayout layout,
               PriorConfig prior, LinkConfig link);

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

  const ParamLayout& layout() const { return layout_; }
  LogDensityGrad as_target() const;

 private:
  const DesignMatrices* design_;
  Family family_;
  ParamLayout layout_;
  PriorConfig prior_;
  LinkConfig link_;

  // Precomputed per-row constants.
  Eigen::ArrayXd yd_;             // counts as doubles
  Eigen::ArrayXd zero_mask_;      // 1.0 where y == 0
  double lgamma_y_plus_one_sum_ = 0.0;
  std::vector<long> unique_y_;    // sorted distinct counts for lgamma caching
  std::vector<double> unique_count_;
  std::vector<int> row_unique_;   // row -> index into unique_y_
};

// --- Fitting ---------------------------------------------------------------

struct FitResult {
  Family family = Family::nb2;
  ParamLayout layout;
  DesignMatrices design;
  SampleResult samples;
  std::vector<std::string> param_names;
};

// Posterior draws of the reconstructed shrinkage coefficients gamma for one
// block ("mean" or "gate"); draws x q_kept over all chains.
Eigen::MatrixXd shrink_coefficient_draws(const FitResult& fit, bool gate_block);

// Lower order statistic at ceil(p * n) of a draw vector (1-based rank,
// clamped to at least 1); the single quantile convention used everywhere.
double draw_quantile(Eigen::VectorXd draws, double p);

// Screening: equal-tailed credible interval versus the equivalence region
// [-delta, delta]. A candidate is active when its interval lies entirely
// above delta or entirely below -delta.
struct ActiveEntry {
  int candidate = 0;  // original candidate index
  bool from_mean = false;
  bool from_gate = false;
};

struct ScreenResult {
  std::vector<ActiveEntry> entries;  // sorted by candidate index
  double delta = 0.0;
  double level = 0.95;
  Eigen::MatrixXd mean_ci;  // q x 2 (lower, upper), kept-column order
  Eigen::MatrixXd gate_ci;  // empty for the plain family
};

ScreenResult screen_candidates(const FitResult& step1, double delta, double level);

// Coefficient summary for reporting: posterior mean, sd, and the 2.5 / 50 /
// 97.5 percent points of every parameter.
struct CoefSummary {
  std::vector<std::string> names;
  Eigen::VectorXd mean, sd, q025, q50, q975;
};
CoefSummary summarize_coefficients(const FitResult& fit);

struct FitConfig {
  DesignConfig design;
  std::optional<Family> family;  // empty = route by zero fraction
  double delta = 0.0;            // equivalence half-width for screening
  double level = 0.95;           // credible level for screening
  PriorConfig prior;
  LinkConfig link;
  SamplerConfig sampler;
  std::string stream_tag = "fit";  // rng path prefix for this target
};

// Single-stage fit of a prepared design (used for both stages). Candidate
// columns present in the design are shrunk; a design without candidates is a
// plain Gaussian-prior GLM.
FitResult fit_glm(const DesignMatrices& design, Family family, const FitConfig& cfg,
                  const std::string& stage_label);

struct TwoStepResult {
  Family family = Family::nb2;
  FitResult step1;
  ScreenResult screen;
  FitResult step2;
  std::vector<int> active;  // original candidate indices, sorted
};

// Screen-then-refit: stage one fits with the shrinkage prior over all
// candidates, stage two refits with Gaussian priors on the fixed block plus
// the surviving candidates only (their union across blocks for the
// zero-inflated family). With no survivors stage two is the AR-only model.
TwoStepResult two_step_fit(const Eigen::VectorXi& y, const Eigen::MatrixXi& candidates,
                           const std::vector<std::string>& candidate_names,
                           const Eigen::MatrixXd& external,
                           const std::vector<std::string>& external_names,
                           const FitConfig& cfg);

// Stage-two design assembly, exposed for forecasting covariate rows.
DesignMatrices reduced_design(const DesignMatrices& full, const std::vector<int>& active);

}  // namespace tailwatch
