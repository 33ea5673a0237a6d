#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tailwatch {

// Convergence diagnostics over per-chain draw matrices (draws x dim). All
// chains must share one shape and hold at least 4 draws; anything smaller is
// a SamplerError because the split estimators are undefined.

// Split R-hat: each chain is halved, then the classic sqrt(var+ / W)
// potential scale reduction is computed over the split halves. Constant and
// identical chains give exactly 1; constant chains at different levels give
// +infinity.
Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains);

// Effective sample size via Geyer's initial monotone positive sequence,
// evaluating autocovariance lags incrementally until the first nonpositive
// pair. A constant parameter reports 0.
Eigen::VectorXd effective_sample_size(const std::vector<Eigen::MatrixXd>& chains);

}  // namespace tailwatch
