#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tailwatch {

// Target callback: returns the log density at q and fills grad (resized by
// the caller to q.size()). Must return -inf (not throw) for out-of-support
// points it wants rejected.
using LogDensityGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct SamplerConfig {
  int num_warmup = 1000;
  int num_samples = 6000;
  int num_chains = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double init_jitter = 1.0;              // uniform(-j, j) perturbation of the init point
  double divergence_threshold = 1000.0;  // |H - H0| beyond which a leaf is divergent
  std::uint64_t seed = 0;
  std::string stream_label = "nuts";     // rng path prefix; chain index is appended
  bool parallel_chains = true;
  // Stan-style warmup schedule: step-size-only head and tail buffers around
  // doubling variance-estimation windows.
  int adapt_init_buffer = 75;
  int adapt_term_buffer = 50;
  int adapt_base_window = 25;
};

struct ChainStats {
  long divergences = 0;
  long max_depth_hits = 0;
  double mean_accept = 0.0;   // post-warmup average acceptance statistic
  double step_size = 0.0;     // adapted leapfrog step
  Eigen::VectorXd inv_mass;   // adapted diagonal inverse mass
};

struct SampleResult {
  std::vector<Eigen::MatrixXd> chains;  // one (num_samples x dim) matrix per chain
  std::vector<ChainStats> stats;
  Eigen::VectorXd ess;                  // empty when fewer than 4 draws per chain
  Eigen::VectorXd rhat;

  long total_divergences() const;
  long total_draws() const;
  double divergence_rate() const;       // divergences / post-warmup draws
  Eigen::MatrixXd stacked() const;      // chains concatenated row-wise
};

// No-U-turn sampler with multinomial leaf selection, dual-averaging step-size
// adaptation, and windowed diagonal mass-matrix estimation. Chains use
// deterministic counter-based substreams, so results do not depend on
// threading or call order.
SampleResult nuts_sample(const LogDensityGrad& target, const Eigen::VectorXd& init,
                         const SamplerConfig& cfg);

// One leapfrog step in place. logp and grad must hold the target values at q
// on entry and hold the values at the updated q on exit. Exposed so the
// reversibility property can be tested directly.
void leapfrog(const LogDensityGrad& target, Eigen::VectorXd& q, Eigen::VectorXd& p,
              Eigen::VectorXd& grad, double& logp, double step,
              const Eigen::VectorXd& inv_mass);

}  // namespace tailwatch
