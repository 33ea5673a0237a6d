#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace tailwatch {

// Digamma (logarithmic derivative of the Gamma function) for x > 0.
// Recurrence to shift the argument above 6, then the standard asymptotic
// series; accurate to ~1e-14 over the range used here.
double digamma(double x);

// log(1 + exp(x)) without overflow or catastrophic cancellation.
inline double log1pexp(double x) {
  if (x <= -37.0) return std::exp(x);
  if (x <= 18.0) return std::log1p(std::exp(x));
  if (x <= 33.3) return x + std::exp(-x);
  return x;
}

// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(exp(a) + exp(b)) with -inf handled as an identity element.
inline double logsumexp2(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + log1pexp(std::min(a, b) - m);
}

// log Beta(a, b).
inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// FNV-1a 64-bit hash; used for config fingerprints and RNG stream ids.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(int y, unsigned m, unsigned d);

// Inverse of days_from_civil.
struct CivilDate {
  int year;
  unsigned month;
  unsigned day;
};
CivilDate civil_from_days(std::int64_t z);

// 0 = Monday ... 6 = Sunday, consistent with ISO weekday numbering - 1.
inline int weekday_from_days(std::int64_t z) {
  return static_cast<int>(((z % 7) + 10) % 7);  // 1970-01-01 was a Thursday (3)
}

}  // namespace tailwatch
