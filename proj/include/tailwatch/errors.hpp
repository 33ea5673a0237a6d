#pragma once

#include <stdexcept>
#include <string>

namespace tailwatch {

// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code so callers can tell a bad config from bad data
// from a sampler failure without parsing messages.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration (unknown keys, out-of-range values).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data: unparseable records, inconsistent panels, bad shapes.
struct DataError : Error {
  using Error::Error;
};

// Sampler-level failures: non-finite target at initialization, divergence
// rate above the configured bound, too few draws for diagnostics.
struct SamplerError : Error {
  using Error::Error;
};

// Filesystem and serialization failures.
struct IoError : Error {
  using Error::Error;
};

namespace exit_code {
constexpr int ok = 0;
constexpr int failure = 1;  // uncategorized
constexpr int config = 2;
constexpr int data = 3;
constexpr int sampler = 4;
constexpr int io = 5;
}  // namespace exit_code

}  // namespace tailwatch
