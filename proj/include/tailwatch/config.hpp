#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailwatch/glm.hpp"
#include "tailwatch/panel.hpp"
#include "tailwatch/sampler.hpp"
#include "tailwatch/simdgp.hpp"

namespace tailwatch {

// Which estimation pipeline the fit command runs for the target series:
// screen-then-refit with the shrinkage prior, the AR-only baseline, or a
// single Gaussian-prior fit with every candidate as a fixed column.
enum class Pipeline { two_step, ar2, full_glm };

std::string pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct SimulateSection {
  DgpConfig dgp;  // seed is overwritten by the run seed at execution time
};

struct AggregateSection {
  std::string events;  // input event file; required by the aggregate command
  EventColumnMap columns;
  RegionGrid grid = RegionGrid::default_grid();
  std::vector<std::string> actors = default_actor_filter();
  std::vector<std::string> codes = default_code_filter();
  std::int64_t week_origin = default_week_origin();
  int anchor_weekday = 0;  // 0 = Monday
  std::optional<std::int64_t> last_week_start;
  std::optional<std::int64_t> train_end;  // when set, the panel is split
  int val_weeks = 52;
};

struct PanelSection {
  std::string csv;
  std::string manifest;
};

struct ModelSection {
  std::string target;  // series label; required by the model commands
  Pipeline pipeline = Pipeline::two_step;
  std::vector<std::string> candidates;  // empty = every other series
  std::optional<Family> family;         // empty = route by zero fraction
  DesignConfig design;
  double delta = 0.0;  // equivalence half-width for screening
  double level = 0.95;
  PriorConfig prior;
  LinkConfig link;
};

struct SamplerSection {
  SamplerConfig sampler;  // seed and stream label are set per run/target
  // A fit whose post-warmup divergence rate exceeds this bound still writes
  // its artifacts but exits with the sampler error code.
  double max_divergence_rate = 0.05;
};

struct PredictiveSection {
  double q = 0.975;        // right-tail level for anomaly flags
  int oracle_draws = 6000; // predictive draws per week under the truth record
  // Evaluation window as week-start days; default is the panel's test split.
  std::optional<std::int64_t> start;
  std::optional<std::int64_t> end;  // exclusive
  std::string truth;  // truth record path; required for oracle scoring
};

struct DirectionalSection {
  int n_sectors = 16;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  SimulateSection simulate;
  AggregateSection aggregate;
  PanelSection panel;
  ModelSection model;
  SamplerSection sampler;
  PredictiveSection predictive;
  DirectionalSection directional;
  // Fingerprint of the parsed configuration (sorted keys, canonical dump), so
  // formatting-only edits do not change the hash embedded in outputs.
  std::string config_hash;
};

// Parse and validate a run configuration. Every section is optional; unknown
// keys anywhere raise ConfigError naming the offending path, as do type and
// range violations. Dates are ISO "YYYY-MM-DD" strings.
RunConfig parse_run_config(const std::string& json_text);

// Read and parse a configuration file (IoError when unreadable).
RunConfig load_run_config(const std::string& path);

// Output directory after the environment override: when TAILWATCH_OUTPUT_ROOT
// is set and the configured directory is relative, outputs land under
// <root>/<output_dir>. An absolute output_dir is used as-is.
std::string resolve_output_dir(const RunConfig& cfg);

}  // namespace tailwatch
