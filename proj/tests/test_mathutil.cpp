#include <doctest.h>

#include <cmath>
#include <limits>

#include "support/finite_diff.hpp"
#include "tailwatch/mathutil.hpp"

using namespace tailwatch;

TEST_SUITE("mathutil") {

TEST_CASE("digamma matches classical closed forms") {
  constexpr double euler_gamma = 0.5772156649015328606;
  CHECK(digamma(1.0) == doctest::Approx(-euler_gamma).epsilon(1e-13));
  CHECK(digamma(0.5) == doctest::Approx(-euler_gamma - 2.0 * std::log(2.0)).epsilon(1e-13));
  CHECK(digamma(2.0) == doctest::Approx(1.0 - euler_gamma).epsilon(1e-13));
  // psi(n) = -gamma + sum_{k=1}^{n-1} 1/k
  double harmonic = 0.0;
  for (int k = 1; k <= 9; ++k) harmonic += 1.0 / k;
  CHECK(digamma(10.0) == doctest::Approx(harmonic - euler_gamma).epsilon(1e-13));
}

TEST_CASE("digamma equals the derivative of lgamma") {
  for (double x : {0.07, 0.31, 0.9, 1.5, 4.2, 11.0, 123.0, 4321.5}) {
    const double fd = testsupport::central_diff([](double t) { return std::lgamma(t); }, x);
    CHECK(testsupport::grad_close(digamma(x), fd, 1e-6));
  }
}

TEST_CASE("log1pexp is accurate across regimes") {
  for (double x : {-50.0, -30.0, -5.0, -0.3, 0.0, 0.7, 12.0, 25.0, 40.0, 800.0}) {
    const long double ref = (x > 30.0)
                                ? static_cast<long double>(x) + std::log1p(std::exp(-static_cast<long double>(x)))
                                : std::log1p(std::exp(static_cast<long double>(x)));
    CHECK(log1pexp(x) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  }
  CHECK(std::isfinite(log1pexp(7000.0)));
  CHECK(log1pexp(-800.0) == doctest::Approx(0.0));
}

TEST_CASE("sigmoid and logsumexp2 are stable") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
  CHECK(sigmoid(800.0) == doctest::Approx(1.0));
  CHECK(sigmoid(3.0) + sigmoid(-3.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(logsumexp2(std::log(0.25), std::log(0.5)) == doctest::Approx(std::log(0.75)).epsilon(1e-14));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(logsumexp2(ninf, -3.0) == doctest::Approx(-3.0));
  CHECK(logsumexp2(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("civil date conversions round-trip and hit known anchors") {
  CHECK(days_from_civil(1970, 1, 1) == 0);
  CHECK(weekday_from_days(0) == 3);  // Thursday
  const auto anchor = days_from_civil(2015, 2, 23);
  CHECK(weekday_from_days(anchor) == 0);  // Monday, the week-bin anchor
  CHECK(days_from_civil(2000, 3, 1) - days_from_civil(2000, 2, 28) == 2);  // leap day
  for (std::int64_t d = -200000; d <= 200000; d += 1237) {
    const auto c = civil_from_days(d);
    CHECK(days_from_civil(c.year, c.month, c.day) == d);
  }
  const auto c = civil_from_days(anchor + 7);
  CHECK(c.year == 2015);
  CHECK(c.month == 3);
  CHECK(c.day == 2);
}

TEST_CASE("fnv1a64 matches the published reference values") {
  CHECK(fnv1a64("") == 14695981039346656037ULL);
  CHECK(fnv1a64("a") == 12638187200555641996ULL);
  CHECK(fnv1a64("foobar") == 9625390261332436968ULL);
}

}  // TEST_SUITE
