#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support/finite_diff.hpp"
#include "support/quadrature.hpp"
#include "tailwatch/mathutil.hpp"
#include "tailwatch/prior.hpp"
#include "tailwatch/rng.hpp"

using namespace tailwatch;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_SUITE("prior") {

TEST_CASE("gaussian block matches the closed form at zero") {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(2);
  const double lp = gaussian_block_logpdf(beta, 100.0, grad);
  const double expected = 2.0 * (-std::log(100.0) - 0.5 * std::log(2.0 * std::numbers::pi));
  CHECK(lp == doctest::Approx(expected).epsilon(1e-13));
  CHECK(grad.norm() == 0.0);
  CHECK_THROWS_AS(gaussian_block_logpdf(beta, 0.0, grad), std::invalid_argument);
}

TEST_CASE("beta(0.5, 0.5) density on the xi scale equals the arcsine law") {
  // Independent oracle: the arcsine density 1 / (pi sqrt(xi (1 - xi))).
  for (double xi : {0.1, 0.25, 0.5, 0.9}) {
    double g = 0.0;
    const double lp_logit = beta_logit_logpdf(logit(xi), 0.5, 0.5, g);
    const double lp_xi = lp_logit - std::log(xi * (1.0 - xi));  // strip the Jacobian
    const double arcsine = -std::log(std::numbers::pi * std::sqrt(xi * (1.0 - xi)));
    CHECK(lp_xi == doctest::Approx(arcsine).epsilon(1e-12));
  }
  // At xi = 0.5 the arcsine density is 2/pi.
  double g = 0.0;
  const double lp_mid = beta_logit_logpdf(0.0, 0.5, 0.5, g) - std::log(0.25);
  CHECK(lp_mid == doctest::Approx(std::log(2.0 / std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("half-cauchy on the log scale hits the known value at tau = scale") {
  double g = 0.0;
  const double lp = half_cauchy_log_scale_logpdf(std::log(0.5), 0.5, g);
  CHECK(lp == doctest::Approx(-std::log(std::numbers::pi)).epsilon(1e-13));
}

TEST_CASE("transformed densities normalize to one (quadrature oracle)") {
  PriorConfig cfg;
  const double z_alpha = testsupport::integrate(
      [&](double la) {
        double g = 0.0;
        return std::exp(log_alpha_logpdf(la, cfg, g));
      },
      -40.0, 8.0, 1e-13);
  CHECK(z_alpha == doctest::Approx(1.0).epsilon(1e-9));

  const double z_tau = testsupport::integrate(
      [&](double lt) {
        double g = 0.0;
        return std::exp(half_cauchy_log_scale_logpdf(lt, 0.5, g));
      },
      -45.0, 32.0, 1e-13);
  // The half-Cauchy tail above exp(32) holds ~4e-15 mass.
  CHECK(z_tau == doctest::Approx(1.0).epsilon(1e-9));

  const double z_xi = testsupport::integrate(
      [&](double lx) {
        double g = 0.0;
        return std::exp(beta_logit_logpdf(lx, 0.5, 0.5, g));
      },
      -55.0, 55.0, 1e-13);
  CHECK(z_xi == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tpbn reconstruction: sign, zero, and monotonicity in tau") {
  TpbnBlock b;
  b.z = Eigen::VectorXd(3);
  b.z << 1.0, -2.0, 0.0;
  b.logit_xi = Eigen::VectorXd::Zero(3);
  b.log_tau = 0.0;
  const auto gamma = tpbn_coefficients(b);
  const double lam_half = std::sqrt(0.5 / 0.50001);
  CHECK(gamma[0] == doctest::Approx(lam_half).epsilon(1e-12));
  CHECK(gamma[1] == doctest::Approx(-2.0 * lam_half).epsilon(1e-12));
  CHECK(gamma[2] == 0.0);

  b.log_tau = std::log(3.0);
  const auto gamma3 = tpbn_coefficients(b);
  CHECK(gamma3[0] == doctest::Approx(3.0 * gamma[0]).epsilon(1e-12));

  // xi -> 1 shrinks lambda toward zero; xi -> 0 blows it up.
  CHECK(tpbn_lambda(0.999) < tpbn_lambda(0.5));
  CHECK(tpbn_lambda(0.001) > tpbn_lambda(0.5));
  CHECK_THROWS_AS(tpbn_lambda(0.0), std::invalid_argument);
  CHECK_THROWS_AS(tpbn_lambda(1.0), std::invalid_argument);
}

TEST_CASE("tpbn marginal has a spike at zero and heavier tails than a normal") {
  // Monte Carlo from the hierarchy itself; a standard normal has
  // P(|x| < 0.05) ~ 0.04 and P(|x| > 10) ~ 1.5e-23.
  Philox rng(20240815, 0);
  const int n = 100000;
  int near_zero = 0, far_tail = 0, normal_near_zero = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.gamma(0.5, 1.0);
    const double y = rng.gamma(0.5, 1.0);
    const double xi = x / (x + y);  // Beta(0.5, 0.5)
    const double tau = 0.5 * std::tan(0.5 * std::numbers::pi * rng.uniform());
    const double gamma = tau * tpbn_lambda(std::min(std::max(xi, 1e-12), 1.0 - 1e-12)) * rng.normal();
    if (std::abs(gamma) < 0.05) ++near_zero;
    if (std::abs(gamma) > 10.0) ++far_tail;
    if (std::abs(rng.normal()) < 0.05) ++normal_near_zero;
  }
  CHECK(near_zero > 4 * normal_near_zero);  // ~23% vs ~4% for N(0,1)
  CHECK(far_tail > 0.002 * n);              // N(0,1) tail mass beyond 10 is ~1.5e-23
}

TEST_CASE("log prior gradient matches finite differences on random states") {
  Philox rng(20240816, 0);
  PriorConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 3, q = 4;
    ParameterState s;
    s.fixed = Eigen::VectorXd::NullaryExpr(p, [&](Eigen::Index) { return 2.0 * rng.normal(); });
    s.shrink.resize(1);
    s.shrink[0].z = Eigen::VectorXd::NullaryExpr(q, [&](Eigen::Index) { return rng.normal(); });
    s.shrink[0].logit_xi =
        Eigen::VectorXd::NullaryExpr(q, [&](Eigen::Index) { return 3.0 * rng.normal(); });
    s.shrink[0].log_tau = rng.normal();
    s.log_alpha = -1.0 + rng.normal();
    s.has_alpha = true;

    ParameterState g;
    const double lp0 = log_prior(s, cfg, &g);
    CHECK(std::isfinite(lp0));

    // Flatten to drive the finite-difference oracle.
    const int dim = p + 2 * q + 2;
    Eigen::VectorXd theta(dim);
    theta << s.fixed, s.shrink[0].z, s.shrink[0].logit_xi, s.shrink[0].log_tau, s.log_alpha;
    auto unpack = [&](const Eigen::VectorXd& t) {
      ParameterState u = s;
      u.fixed = t.segment(0, p);
      u.shrink[0].z = t.segment(p, q);
      u.shrink[0].logit_xi = t.segment(p + q, q);
      u.shrink[0].log_tau = t[p + 2 * q];
      u.log_alpha = t[p + 2 * q + 1];
      return u;
    };
    const Eigen::VectorXd fd = testsupport::gradient_fd(
        [&](const Eigen::VectorXd& t) { return log_prior(unpack(t), cfg, nullptr); }, theta);
    Eigen::VectorXd analytic(dim);
    analytic << g.fixed, g.shrink[0].z, g.shrink[0].logit_xi, g.shrink[0].log_tau, g.log_alpha;
    for (int j = 0; j < dim; ++j) {
      CHECK(testsupport::grad_close(analytic[j], fd[j]));
    }
  }
}

}  // TEST_SUITE
