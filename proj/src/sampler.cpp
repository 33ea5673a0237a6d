#include "tailwatch/sampler.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "tailwatch/diagnostics.hpp"
#include "tailwatch/errors.hpp"
#include "tailwatch/mathutil.hpp"
#include "tailwatch/rng.hpp"

namespace tailwatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Position-momentum pair with the cached target value and gradient at q.
struct Phase {
  Eigen::VectorXd q, p, grad;
  double logp = -kInf;
};

struct Tree {
  Phase minus, plus, prop;  // trajectory-ordered ends and the sampled leaf
  double log_weight = -kInf;
  double sum_accept = 0.0;
  long n_leapfrog = 0;
  bool divergent = false;
  bool turning = false;
};

double kinetic(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass) {
  return 0.5 * (inv_mass.array() * p.array().square()).sum();
}

double hamiltonian(const Phase& z, const Eigen::VectorXd& inv_mass) {
  return -z.logp + kinetic(z.p, inv_mass);
}

bool uturn(const Phase& minus, const Phase& plus, const Eigen::VectorXd& inv_mass) {
  const Eigen::VectorXd dq = plus.q - minus.q;
  if (dq.dot((inv_mass.array() * minus.p.array()).matrix()) < 0.0) return true;
  if (dq.dot((inv_mass.array() * plus.p.array()).matrix()) < 0.0) return true;
  return false;
}

// Incremental variance accumulator for the mass-matrix windows.
struct Welford {
  long n = 0;
  Eigen::VectorXd mean, m2;

  void reset(Eigen::Index dim) {
    n = 0;
    mean = Eigen::VectorXd::Zero(dim);
    m2 = Eigen::VectorXd::Zero(dim);
  }
  void add(const Eigen::VectorXd& x) {
    ++n;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2.array() += delta.array() * (x - mean).array();
  }
  Eigen::VectorXd variance() const {
    if (n < 2) return Eigen::VectorXd::Ones(mean.size());
    return m2 / static_cast<double>(n - 1);
  }
};

// Nesterov dual averaging on log(step), tuned to the usual NUTS constants.
struct DualAveraging {
  double mu = 0.0;
  double h_bar = 0.0;
  double log_eps_bar = 0.0;
  long m = 1;
  double delta = 0.8;

  static constexpr double gamma = 0.05;
  static constexpr double t0 = 10.0;
  static constexpr double kappa = 0.75;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    h_bar = 0.0;
    log_eps_bar = std::log(eps);
    m = 1;
  }
  double update(double accept) {
    const double md = static_cast<double>(m);
    h_bar = (1.0 - 1.0 / (md + t0)) * h_bar + (delta - accept) / (md + t0);
    const double log_eps = mu - std::sqrt(md) / gamma * h_bar;
    const double eta = std::pow(md, -kappa);
    log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    ++m;
    return std::exp(log_eps);
  }
  double adapted() const { return std::exp(log_eps_bar); }
};

class NutsChain {
 public:
  NutsChain(const LogDensityGrad& target, const Eigen::VectorXd& init,
            const SamplerConfig& cfg, int chain_index)
      : target_(target),
        cfg_(cfg),
        rng_(derive_stream(cfg.seed,
                           cfg.stream_label + "/chain" + std::to_string(chain_index))),
        dim_(init.size()),
        inv_mass_(Eigen::VectorXd::Ones(init.size())) {
    da_.delta = cfg.target_accept;
    initialize(init);
  }

  void run(Eigen::MatrixXd& draws, ChainStats& stats) {
    draws.resize(cfg_.num_samples, dim_);
    const int w = cfg_.num_warmup;
    auto schedule = mass_windows(w);
    Welford acc;
    acc.reset(dim_);
    step_ = find_initial_step();
    da_.restart(step_);

    std::size_t window = 0;
    for (int it = 0; it < w; ++it) {
      const double accept = transition();
      step_ = da_.update(accept);
      if (window < schedule.size()) {
        const auto [win_begin, win_end] = schedule[window];
        if (it >= win_begin && it < win_end) acc.add(current_.q);
        if (it + 1 == win_end) {
          // Regularized variance estimate, shrunk toward a small identity.
          const double n = static_cast<double>(acc.n);
          inv_mass_ = (n / (n + 5.0)) * acc.variance().array() + 1e-3 * (5.0 / (n + 5.0));
          acc.reset(dim_);
          ++window;
          // The metric changed: re-establish a sane step size.
          step_ = find_initial_step();
          da_.restart(step_);
        }
      }
    }
    step_ = (w > 0) ? da_.adapted() : step_;

    stats = ChainStats{};
    stats.inv_mass = inv_mass_;
    stats.step_size = step_;
    double accept_sum = 0.0;
    divergences_ = 0;
    max_depth_hits_ = 0;
    for (int it = 0; it < cfg_.num_samples; ++it) {
      accept_sum += transition();
      draws.row(it) = current_.q.transpose();
    }
    stats.divergences = divergences_;
    stats.max_depth_hits = max_depth_hits_;
    stats.mean_accept = cfg_.num_samples > 0 ? accept_sum / cfg_.num_samples : 0.0;
  }

 private:
  const LogDensityGrad& target_;
  const SamplerConfig& cfg_;
  Philox rng_;
  Eigen::Index dim_;
  Eigen::VectorXd inv_mass_;
  Phase current_;
  double step_ = 1.0;
  DualAveraging da_;
  long divergences_ = 0;
  long max_depth_hits_ = 0;

  void initialize(const Eigen::VectorXd& init) {
    current_.q = init;
    current_.grad.resize(dim_);
    current_.p = Eigen::VectorXd::Zero(dim_);
    for (int attempt = 0; attempt < 100; ++attempt) {
      Eigen::VectorXd q = init;
      if (cfg_.init_jitter > 0.0) {
        for (Eigen::Index j = 0; j < dim_; ++j) {
          q[j] = init[j] + cfg_.init_jitter * (2.0 * rng_.uniform() - 1.0);
        }
      }
      Eigen::VectorXd grad(dim_);
      const double logp = target_(q, grad);
      if (std::isfinite(logp) && grad.allFinite()) {
        current_.q = q;
        current_.grad = grad;
        current_.logp = logp;
        return;
      }
    }
    throw SamplerError("could not find a finite starting point after 100 jitter attempts");
  }

  // Warmup variance-estimation windows as [begin, end) iteration ranges.
  std::vector<std::pair<int, int>> mass_windows(int warmup) const {
    std::vector<std::pair<int, int>> out;
    int init_buf = cfg_.adapt_init_buffer;
    int term_buf = cfg_.adapt_term_buffer;
    int base = cfg_.adapt_base_window;
    if (warmup < init_buf + term_buf + base) {
      // Short warmup: proportional buffers around one window.
      init_buf = std::max(1, warmup * 15 / 100);
      term_buf = std::max(1, warmup * 10 / 100);
      if (warmup <= init_buf + term_buf + 1) return out;
      out.emplace_back(init_buf, warmup - term_buf);
      return out;
    }
    int begin = init_buf;
    int size = base;
    const int last = warmup - term_buf;
    while (true) {
      int end = begin + size;
      // If the next doubling would overrun the tail buffer, absorb the rest.
      if (begin + size + 2 * size > last) end = last;
      out.emplace_back(begin, end);
      if (end >= last) break;
      begin = end;
      size *= 2;
    }
    return out;
  }

  void sample_momentum(Phase& z) {
    for (Eigen::Index j = 0; j < dim_; ++j) {
      z.p[j] = rng_.normal() / std::sqrt(inv_mass_[j]);
    }
  }

  // One leapfrog from z in place; returns false when the target is non-finite.
  bool step_phase(Phase& z, double eps) {
    z.p.noalias() += (0.5 * eps) * z.grad;
    z.q.array() += eps * (inv_mass_.array() * z.p.array());
    z.logp = target_(z.q, z.grad);
    if (!std::isfinite(z.logp) || !z.grad.allFinite()) {
      z.logp = -kInf;
      return false;
    }
    z.p.noalias() += (0.5 * eps) * z.grad;
    return true;
  }

  double find_initial_step() {
    Phase z = current_;
    sample_momentum(z);
    const double h0 = hamiltonian(z, inv_mass_);
    double eps = 1.0;
    auto ratio = [&](double e) {
      Phase trial = z;
      if (!step_phase(trial, e)) return 0.0;
      return std::exp(h0 - hamiltonian(trial, inv_mass_));
    };
    double a = ratio(eps);
    const double dir = a > 0.5 ? 1.0 : -1.0;
    for (int i = 0; i < 60; ++i) {
      if (dir > 0.0 && a <= 0.5) break;
      if (dir < 0.0 && a > 0.5) break;
      eps *= dir > 0.0 ? 2.0 : 0.5;
      if (eps < 1e-10 || eps > 1e7) break;
      a = ratio(eps);
    }
    return eps;
  }

  Tree leaf(const Phase& from, double directed_step, double h0) {
    Tree t;
    Phase z = from;
    const bool ok = step_phase(z, directed_step);
    const double h = ok ? hamiltonian(z, inv_mass_) : kInf;
    const double dh = h - h0;
    t.minus = z;
    t.plus = z;
    t.prop = z;
    t.n_leapfrog = 1;
    t.divergent = !ok || std::abs(dh) > cfg_.divergence_threshold;
    t.log_weight = t.divergent ? -kInf : -dh;
    t.sum_accept = std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
    return t;
  }

  Tree build_tree(int depth, const Phase& from, int dir, double h0) {
    if (depth == 0) return leaf(from, dir * step_, h0);
    Tree first = build_tree(depth - 1, from, dir, h0);
    if (first.divergent || first.turning) return first;
    const Phase& edge = dir > 0 ? first.plus : first.minus;
    Tree second = build_tree(depth - 1, edge, dir, h0);

    Tree combined;
    combined.minus = dir > 0 ? first.minus : second.minus;
    combined.plus = dir > 0 ? second.plus : first.plus;
    combined.log_weight = logsumexp2(first.log_weight, second.log_weight);
    combined.sum_accept = first.sum_accept + second.sum_accept;
    combined.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
    combined.divergent = second.divergent;
    combined.turning = second.turning;
    if (!combined.divergent && !combined.turning) {
      combined.turning = uturn(combined.minus, combined.plus, inv_mass_);
    }
    // Multinomial choice between the two halves by their total weights.
    const double log_u = std::log(rng_.uniform_pos());
    if (log_u < second.log_weight - combined.log_weight) {
      combined.prop = second.prop;
    } else {
      combined.prop = first.prop;
    }
    return combined;
  }

  double transition() {
    sample_momentum(current_);
    const double h0 = hamiltonian(current_, inv_mass_);
    Phase minus = current_;
    Phase plus = current_;
    Phase prop = current_;
    double total_lw = 0.0;  // current point carries weight exp(-(H0-H0)) = 1
    double sum_accept = 0.0;
    long n_leapfrog = 0;
    bool completed_all = true;

    for (int depth = 0; depth < cfg_.max_tree_depth; ++depth) {
      const int dir = rng_.uniform() < 0.5 ? -1 : 1;
      const Tree sub = build_tree(depth, dir > 0 ? plus : minus, dir, h0);
      sum_accept += sub.sum_accept;
      n_leapfrog += sub.n_leapfrog;
      if (sub.divergent) {
        ++divergences_;
        completed_all = false;
        break;
      }
      if (sub.turning) {
        completed_all = false;
        break;
      }
      // Biased progressive sampling: favor the fresh subtree.
      if (std::log(rng_.uniform_pos()) < sub.log_weight - total_lw) {
        prop = sub.prop;
      }
      total_lw = logsumexp2(total_lw, sub.log_weight);
      if (dir > 0) {
        plus = sub.plus;
      } else {
        minus = sub.minus;
      }
      if (uturn(minus, plus, inv_mass_)) {
        completed_all = false;
        break;
      }
    }
    if (completed_all) ++max_depth_hits_;
    current_ = prop;
    return n_leapfrog > 0 ? sum_accept / static_cast<double>(n_leapfrog) : 0.0;
  }
};

}  // namespace

void leapfrog(const LogDensityGrad& target, Eigen::VectorXd& q, Eigen::VectorXd& p,
              Eigen::VectorXd& grad, double& logp, double step,
              const Eigen::VectorXd& inv_mass) {
  p.noalias() += (0.5 * step) * grad;
  q.array() += step * (inv_mass.array() * p.array());
  logp = target(q, grad);
  p.noalias() += (0.5 * step) * grad;
}

long SampleResult::total_divergences() const {
  long n = 0;
  for (const auto& s : stats) n += s.divergences;
  return n;
}

long SampleResult::total_draws() const {
  long n = 0;
  for (const auto& c : chains) n += c.rows();
  return n;
}

double SampleResult::divergence_rate() const {
  const long n = total_draws();
  return n > 0 ? static_cast<double>(total_divergences()) / static_cast<double>(n) : 0.0;
}

Eigen::MatrixXd SampleResult::stacked() const {
  if (chains.empty()) return {};
  const Eigen::Index dim = chains.front().cols();
  Eigen::MatrixXd out(total_draws(), dim);
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    out.middleRows(row, c.rows()) = c;
    row += c.rows();
  }
  return out;
}

SampleResult nuts_sample(const LogDensityGrad& target, const Eigen::VectorXd& init,
                         const SamplerConfig& cfg) {
  if (cfg.num_chains < 1) throw SamplerError("num_chains must be >= 1");
  if (cfg.num_samples < 1) throw SamplerError("num_samples must be >= 1");
  if (cfg.num_warmup < 0) throw SamplerError("num_warmup must be >= 0");
  if (cfg.max_tree_depth < 1 || cfg.max_tree_depth > 14) {
    throw SamplerError("max_tree_depth must lie in [1, 14]");
  }
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0)) {
    throw SamplerError("target_accept must lie in (0, 1)");
  }

  SampleResult result;
  result.chains.resize(cfg.num_chains);
  result.stats.resize(cfg.num_chains);

  auto run_chain = [&](int c) {
    NutsChain chain(target, init, cfg, c);
    chain.run(result.chains[c], result.stats[c]);
  };

  if (cfg.parallel_chains && cfg.num_chains > 1 && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(cfg.num_chains);
    for (int c = 0; c < cfg.num_chains; ++c) {
      workers.emplace_back([&, c] {
        try {
          run_chain(c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (int c = 0; c < cfg.num_chains; ++c) run_chain(c);
  }

  if (cfg.num_samples >= 4) {
    result.ess = effective_sample_size(result.chains);
    result.rhat = split_rhat(result.chains);
  }
  return result;
}

}  // namespace tailwatch
