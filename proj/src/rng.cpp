#include "tailwatch/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tailwatch/mathutil.hpp"

namespace tailwatch {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline void philox_round(std::array<std::uint32_t, 4>& c, const std::array<std::uint32_t, 2>& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kPhiloxM0, c[0], hi0, lo0);
  mulhilo(kPhiloxM1, c[2], hi1, lo1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> Philox::block(const std::array<std::uint32_t, 4>& counter,
                                           const std::array<std::uint32_t, 2>& key) {
  std::array<std::uint32_t, 4> c = counter;
  std::array<std::uint32_t, 2> k = key;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    philox_round(c, k);
  }
  return c;
}

Philox::Philox(std::uint64_t key, std::uint64_t substream)
    : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
      counter_{0u, 0u, static_cast<std::uint32_t>(substream),
               static_cast<std::uint32_t>(substream >> 32)},
      buffer_pos_(4),
      normal_spare_(0.0),
      has_normal_spare_(false) {}

void Philox::advance_counter() {
  // 64-bit position in the low two words; the substream id (high words) is
  // never touched, so distinct substreams can never collide.
  if (++counter_[0] == 0u) ++counter_[1];
}

std::uint32_t Philox::next_u32() {
  if (buffer_pos_ >= 4) {
    buffer_ = block(counter_, key_);
    advance_counter();
    buffer_pos_ = 0;
  }
  return buffer_[buffer_pos_++];
}

std::uint64_t Philox::next_u64() {
  const std::uint64_t lo = next_u32();
  const std::uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double Philox::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::normal() {
  if (has_normal_spare_) {
    has_normal_spare_ = false;
    return normal_spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
  const double t = 2.0 * std::numbers::pi * uniform();
  normal_spare_ = r * std::sin(t);
  has_normal_spare_ = true;
  return r * std::cos(t);
}

double Philox::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw std::invalid_argument("gamma draw requires shape > 0 and scale > 0");
  }
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0, 1.0);
    return scale * g * std::pow(uniform_pos(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return scale * d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

long Philox::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson draw requires a finite mean >= 0");
  }
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Sequential CDF inversion.
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    long k = 0;
    const long cap = 40 + static_cast<long>(12.0 * mean);
    while (u > cdf && k < cap) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  // PTRD (Hörmann 1993): transformed rejection with a table-free hat.
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    double u = uniform() - 0.5;
    double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
    if (lhs <= k * log_mean - mean - std::lgamma(k + 1.0)) return static_cast<long>(k);
  }
}

long Philox::nb2(double mu, double kappa) {
  if (!(mu > 0.0) || !(kappa > 0.0)) {
    throw std::invalid_argument("nb2 draw requires mu > 0 and kappa > 0");
  }
  const double rate = gamma(kappa, mu / kappa);
  return poisson(rate);
}

Philox derive_stream(std::uint64_t root_seed, std::string_view path) {
  return Philox(root_seed, fnv1a64(path));
}

std::string rng_path(std::initializer_list<std::string_view> parts) {
  std::string out;
  bool first = true;
  for (auto p : parts) {
    if (!first) out.push_back('/');
    out.append(p);
    first = false;
  }
  return out;
}

}  // namespace tailwatch
