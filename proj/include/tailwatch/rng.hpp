#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace tailwatch {

// Counter-based generator: Philox4x32-10 (Salmon et al., SC'11).
//
// State is a 64-bit key plus a 128-bit counter split into a 64-bit substream
// id (high words) and a 64-bit block position (low words). Any (key,
// substream) pair yields an independent, reproducible stream regardless of
// how many values other streams have consumed, which is what makes per-series
// and per-chain fan-out deterministic under any scheduling.
class Philox {
 public:
  static constexpr const char* algorithm_name = "philox4x32-10";
  static constexpr int algorithm_version = 1;

  explicit Philox(std::uint64_t key, std::uint64_t substream = 0);

  // Raw block for known-answer tests: one application of the 10-round bijection.
  static std::array<std::uint32_t, 4> block(const std::array<std::uint32_t, 4>& counter,
                                            const std::array<std::uint32_t, 2>& key);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1]; avoids exact zero for logs.
  double uniform_pos() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller (second draw of each pair is cached).
  double normal();

  // Gamma(shape, scale) via Marsaglia-Tsang squeeze; shape < 1 handled by the
  // boost Gamma(shape+1) * U^{1/shape}. Requires shape > 0, scale > 0.
  double gamma(double shape, double scale);

  // Poisson(mean): sequential inversion below mean 10, Hörmann's PTRD above.
  long poisson(double mean);

  bool bernoulli(double p) { return uniform() < p; }

  // Negative binomial with mean mu and concentration kappa (Poisson-Gamma
  // mixture: rate ~ Gamma(kappa, mu/kappa), count ~ Poisson(rate)).
  long nb2(double mu, double kappa);

  // Zero-inflated negative binomial: structural zero with probability pi,
  // otherwise an NB2 count. The gate uniform is always consumed; the count
  // draw only when the gate passes.
  long zinb2(double mu, double kappa, double pi) {
    return bernoulli(pi) ? 0 : nb2(mu, kappa);
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_;
  int buffer_pos_;  // 4 = empty
  double normal_spare_;
  bool has_normal_spare_;

  void advance_counter();
};

// Deterministic stream derivation: the root seed keys the generator and the
// FNV-1a hash of a path string ("dense/chain0/warmup" style) selects the
// substream. Distinct paths give non-overlapping counter ranges by
// construction.
Philox derive_stream(std::uint64_t root_seed, std::string_view path);

// Convenience for hierarchical paths assembled from parts.
std::string rng_path(std::initializer_list<std::string_view> parts);

}  // namespace tailwatch
