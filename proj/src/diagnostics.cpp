#include "tailwatch/diagnostics.hpp"

#include <cmath>
#include <limits>

#include "tailwatch/errors.hpp"

namespace tailwatch {

namespace {

void check_shapes(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.empty()) throw SamplerError("diagnostics require at least one chain");
  const Eigen::Index n = chains.front().rows();
  const Eigen::Index d = chains.front().cols();
  if (n < 4) throw SamplerError("diagnostics require at least 4 draws per chain");
  for (const auto& c : chains) {
    if (c.rows() != n || c.cols() != d) {
      throw SamplerError("diagnostics require equally shaped chains");
    }
  }
}

// Sample variance with ddof = 1.
double column_var(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains) {
  check_shapes(chains);
  const Eigen::Index n_full = chains.front().rows();
  const Eigen::Index dim = chains.front().cols();
  const Eigen::Index half = n_full / 2;

  // Split each chain into its first and last halves (middle draw dropped
  // when the length is odd).
  std::vector<Eigen::MatrixXd> split;
  split.reserve(2 * chains.size());
  for (const auto& c : chains) {
    split.push_back(c.topRows(half));
    split.push_back(c.bottomRows(half));
  }

  const double n = static_cast<double>(half);
  Eigen::VectorXd rhat(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    Eigen::VectorXd means(split.size());
    Eigen::VectorXd vars(split.size());
    for (std::size_t c = 0; c < split.size(); ++c) {
      means[c] = split[c].col(j).mean();
      vars[c] = column_var(split[c].col(j));
    }
    const double w = vars.mean();
    const double b = n * column_var(means);
    if (w == 0.0) {
      rhat[j] = (b == 0.0) ? 1.0 : std::numeric_limits<double>::infinity();
      continue;
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    rhat[j] = std::sqrt(var_plus / w);
  }
  return rhat;
}

Eigen::VectorXd effective_sample_size(const std::vector<Eigen::MatrixXd>& chains) {
  check_shapes(chains);
  const Eigen::Index n = chains.front().rows();
  const Eigen::Index dim = chains.front().cols();
  const std::size_t m = chains.size();
  const double total = static_cast<double>(m) * static_cast<double>(n);

  Eigen::VectorXd ess(dim);
  std::vector<Eigen::VectorXd> demeaned(m);
  for (Eigen::Index j = 0; j < dim; ++j) {
    double w = 0.0;
    double mean_of_means = 0.0;
    std::vector<double> means(m);
    for (std::size_t c = 0; c < m; ++c) {
      means[c] = chains[c].col(j).mean();
      demeaned[c] = chains[c].col(j).array() - means[c];
      w += demeaned[c].squaredNorm() / static_cast<double>(n - 1);
      mean_of_means += means[c];
    }
    w /= static_cast<double>(m);
    mean_of_means /= static_cast<double>(m);
    if (w == 0.0) {
      ess[j] = 0.0;
      continue;
    }
    double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w;
    if (m > 1) {
      double b = 0.0;
      for (double mu : means) b += (mu - mean_of_means) * (mu - mean_of_means);
      b *= static_cast<double>(n) / static_cast<double>(m - 1);
      var_plus += b / static_cast<double>(n);
    }

    // Mean-over-chains autocovariance at lag t, biased (divisor n), computed
    // only for the lags the Geyer scan actually requests.
    auto acov = [&](Eigen::Index t) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        s += demeaned[c].head(n - t).dot(demeaned[c].tail(n - t));
      }
      return s / (static_cast<double>(m) * static_cast<double>(n));
    };
    auto rho = [&](Eigen::Index t) { return 1.0 - (w - acov(t)) / var_plus; };

    double tau = 0.0;   // accumulates 2 * sum of pair sums, minus 1 at the end
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t + 1 < n; t += 2) {
      double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
      if (pair <= 0.0) break;
      pair = std::min(pair, prev_pair);  // initial monotone sequence
      prev_pair = pair;
      tau += 2.0 * pair;
    }
    tau -= 1.0;
    tau = std::max(tau, 1e-6);
    ess[j] = total / tau;
  }
  return ess;
}

}  // namespace tailwatch
