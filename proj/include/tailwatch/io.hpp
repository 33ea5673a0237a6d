#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tailwatch/directional.hpp"
#include "tailwatch/glm.hpp"
#include "tailwatch/predictive.hpp"

namespace tailwatch {

// Model artifact and report serialization. Every writer here is deterministic:
// identical inputs produce identical bytes (timestamps belong in the run log,
// never in data outputs).

// ---------------------------------------------------------------------------
// Plain text files. Throws IoError on filesystem failure.

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// 16-hex-digit FNV-1a fingerprint of a canonical text (config dumps, payload
// integrity tags).
std::string fingerprint_hex(std::string_view text);

// ---------------------------------------------------------------------------
// Binary draw sidecar. Layout (little-endian): 8-byte magic "TWDRAWS1",
// u64 chain count, then per chain u64 rows, u64 cols and rows*cols float64
// row-major, and finally a u64 FNV-1a hash of every preceding byte.

void write_draws(const std::string& path, const std::vector<Eigen::MatrixXd>& chains);
// Throws IoError when unreadable, DataError when malformed or corrupt.
std::vector<Eigen::MatrixXd> read_draws(const std::string& path);

// ---------------------------------------------------------------------------
// Fitted-model artifact: JSON document + draw sidecar next to it.

struct ModelArtifact {
  FitResult fit;
  PriorConfig prior;
  LinkConfig link;
  SamplerConfig sampler;
  std::string stage;        // "single", "step1", "step2"
  std::string target;       // series label the model was fitted to
  std::string config_hash;  // fingerprint of the run configuration
  std::uint64_t seed = 0;   // root seed of the run
};

// Writes `<base>.json` and `<base>_draws.bin`. The JSON records the sidecar
// file name and its content hash so a mismatched pair is detected on read.
void write_model(const ModelArtifact& artifact, const std::string& base_path);
// Throws IoError for unreadable files, DataError for malformed or
// inconsistent content.
ModelArtifact read_model(const std::string& json_path);

// Screening outcome as a JSON document (round-trips exactly).
std::string screen_to_json(const ScreenResult& screen);
ScreenResult screen_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// CSV report builders. Each returns the full file content; `comment`, when
// nonempty, is embedded as a leading '#' line (provenance: config hash, seed).

// Forecast/anomaly rows: series, week, observed, median, lower95, upper95,
// upper_q<digits>, flag, tail_score. The quantile column is named from q
// (0.975 -> "upper_q975").
std::string forecast_csv(const std::string& series_label, const std::vector<AnomalyRow>& rows,
                         std::int64_t week_origin, double q, const std::string& comment = "");

// Per-parameter posterior summary: name, mean, sd, q025, q50, q975,
// excludes_zero (1 when the equal-tailed 95% interval excludes zero).
std::string coef_summary_csv(const CoefSummary& summary, const std::string& comment = "");

// Rose sectors: sector, lo_deg, hi_deg, count, weight.
std::string rose_csv(const RoseBins& bins, const std::string& comment = "");

// Posterior (omega, r) cloud: draw, omega_rad, r.
std::string omega_r_csv(const BearingSummary& summary, const std::string& comment = "");

// Per-series evaluation metrics as a JSON document.
std::string metrics_json(const std::string& series_label, const ForecastResult& result,
                         const std::string& config_hash, std::uint64_t seed);

}  // namespace tailwatch
