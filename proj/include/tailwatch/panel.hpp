#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailwatch/directional.hpp"

namespace tailwatch {

// Event-record ingestion and aggregation into weekly spatiotemporal count
// panels: grid construction, week binning, train/val/test splits, and the
// long-form CSV + manifest JSON serialization consumed by the model stages.

// ---------------------------------------------------------------------------
// Dates travel as ISO "YYYY-MM-DD" strings at file boundaries and as epoch
// days (days since 1970-01-01) internally.

// Strict ISO "YYYY-MM-DD"; rejects impossible dates. Throws DataError.
std::int64_t parse_date_iso(const std::string& text);
// Compact "YYYYMMDD" (the raw GDELT SQLDATE convention). Throws DataError.
std::int64_t parse_date_yyyymmdd(const std::string& text);
std::string format_date_iso(std::int64_t epoch_days);

// ---------------------------------------------------------------------------
// Event records and delimited-file ingestion.

struct EventRecord {
  std::int64_t timestamp = 0;  // epoch days
  double action_lat = 0.0;
  double action_lon = 0.0;
  std::string actor1;      // may be empty; empty never matches an actor filter
  std::string root_code;   // nonempty
};

// Column mapping for delimited event files. The file must start with a header
// row carrying these names. Fields must not contain the delimiter (no quoting
// is interpreted; raw GDELT exports are tab-separated and quote-free).
struct EventColumnMap {
  std::string timestamp = "date";
  std::string lat = "lat";
  std::string lon = "lon";
  std::string actor1 = "actor1";
  std::string root_code = "root_code";
  char delimiter = ',';
  bool compact_dates = false;  // false: "YYYY-MM-DD"; true: "YYYYMMDD"

  // Mapping for raw GDELT 1.0 daily export column names (tab-separated).
  static EventColumnMap gdelt_raw();
};

struct RowRejection {
  std::int64_t line = 0;  // 1-based line number in the file
  std::string reason;
};

struct EventReadResult {
  std::vector<EventRecord> records;
  std::vector<RowRejection> rejected;  // malformed rows, never dropped silently
};

// Reads a delimited event file. Malformed rows are rejected per-row with a
// reason; a missing header column or unreadable file throws (DataError /
// IoError). Lines starting with '#' and blank lines are skipped.
EventReadResult read_event_records(const std::string& path, const EventColumnMap& map);

// Writes records in the given column mapping (used by tests and the bundled
// demo data generator). Throws IoError on failure.
void write_event_records(const std::vector<EventRecord>& records, const std::string& path,
                         const EventColumnMap& map);

// ---------------------------------------------------------------------------
// Spatial grid.

struct RegionGrid {
  std::vector<double> lat_edges;  // strictly increasing, size n_lat()+1
  std::vector<double> lon_edges;  // strictly increasing, size n_lon()+1

  int n_lat() const { return static_cast<int>(lat_edges.size()) - 1; }
  int n_lon() const { return static_cast<int>(lon_edges.size()) - 1; }
  int n_regions() const { return n_lat() * n_lon(); }

  // Region index = lat_band * n_lon + lon_band.
  GeoPoint centroid(int region) const;
  std::string region_id(int region) const;  // e.g. "lat32_lon35"

  // Cell lookup with half-open [lo, hi) bins on both axes; the northernmost
  // and easternmost edges are closed so the grid covers its stated domain
  // exactly. Returns nullopt outside the domain (NaN is outside).
  std::optional<int> cell_index(double lat, double lon) const;

  // Validates edges (>= 2 per axis, finite, strictly increasing, within
  // geographic bounds). Throws ConfigError.
  static RegionGrid from_edges(std::vector<double> lat_edges, std::vector<double> lon_edges);

  // 5-degree x 10-degree cells spanning 19.5..59.5 N, 10..60 E: 8 x 5 = 40
  // regions with centroids on the lattice lat {22,...,57}, lon {15,...,55}.
  static RegionGrid default_grid();
};

// Default analysis filters: 7 actor country codes and 4 CAMEO root codes.
// With the default grid these span 40 * 7 * 4 = 1120 series.
const std::vector<std::string>& default_actor_filter();  // USA RUS UKR ISR PSE TUR DEU
const std::vector<std::string>& default_code_filter();   // 04 13 18 19

// Monday 2015-02-23, the default first panel week.
std::int64_t default_week_origin();
// Default split boundaries (both Mondays): last training week start.
std::int64_t default_train_end_gaza();     // 2021-01-18
std::int64_t default_train_end_ukraine();  // 2020-01-20

// ---------------------------------------------------------------------------
// Count panel.

struct SeriesMeta {
  std::string region_id;                // or a synthetic series name
  std::string actor;                    // empty for synthetic series
  std::string code;                     // empty for synthetic series
  std::optional<GeoPoint> centroid;     // absent for synthetic series
};

// "region/actor/code" with empty parts skipped (synthetic series keep bare
// names like "dense").
std::string series_label(const SeriesMeta& meta);

struct WeekRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

enum class SplitPart { train, val, test };
std::string split_name(SplitPart part);

struct CountPanel {
  Eigen::MatrixXi counts;  // n_series x n_weeks
  std::vector<SeriesMeta> series;
  std::int64_t week_origin = 0;  // epoch days of week 0's start
  int anchor_weekday = 0;        // 0 = Monday ... 6 = Sunday
  int n_train = 0;               // split: weeks [0, n_train) train,
  int n_val = 0;                 // [n_train, n_train+n_val) val, rest test

  // Provenance recorded in the manifest; absent for synthetic panels.
  std::optional<RegionGrid> grid;
  std::vector<std::string> actor_filter;
  std::vector<std::string> code_filter;

  int n_series() const { return static_cast<int>(series.size()); }
  int n_weeks() const { return static_cast<int>(counts.cols()); }
  std::int64_t week_start(int week) const { return week_origin + 7 * week; }

  WeekRange range(SplitPart part) const;
  WeekRange train_range() const { return range(SplitPart::train); }
  WeekRange val_range() const { return range(SplitPart::val); }
  WeekRange test_range() const { return range(SplitPart::test); }

  std::optional<int> find_series(const std::string& label) const;
  // Counts of one series over [range.begin, range.end).
  Eigen::VectorXi series_counts(int s, WeekRange range) const;
};

// Shape, negative-value, and split consistency checks. Throws DataError.
void validate_panel(const CountPanel& panel);

// ---------------------------------------------------------------------------
// Aggregation.

struct AggregateConfig {
  RegionGrid grid = RegionGrid::default_grid();
  std::vector<std::string> actors = default_actor_filter();
  std::vector<std::string> codes = default_code_filter();
  // Any date within the desired first week; binning snaps to the anchor
  // weekday on or before it.
  std::int64_t week_origin = 0;
  int anchor_weekday = 0;  // 0 = Monday
  // Inclusive last week start; when absent the panel extends to the last
  // kept record's week.
  std::optional<std::int64_t> last_week_start;
};

struct DropReport {
  std::int64_t n_input = 0;
  std::int64_t n_kept = 0;
  std::map<std::string, std::int64_t> dropped;  // reason -> count
  std::int64_t n_dropped() const;
};

struct AggregateResult {
  CountPanel panel;
  DropReport report;
};

// Bins records into the (region x actor x code) x week panel: each record
// increments exactly one cell iff its location, week, actor, and code all
// match; otherwise it is dropped and counted under the first failing filter
// (checked in that order). The panel always materializes the full
// region x actor x code cross product. Throws ConfigError for bad config and
// DataError when the panel extent cannot be determined.
AggregateResult aggregate(const std::vector<EventRecord>& records, const AggregateConfig& cfg);

// ---------------------------------------------------------------------------
// Splits and summaries.

// Weeks with week_start <= train_end become training, the next val_weeks
// validation, the remainder test. Throws DataError when train_end is outside
// the panel's week range or fewer than val_weeks weeks remain.
CountPanel split_panel(const CountPanel& panel, std::int64_t train_end, int val_weeks = 52);

// Fraction of exact zeros of one series within a split. Throws DataError for
// an empty split or a bad series index.
double zero_fraction(const CountPanel& panel, int s, SplitPart part);

// ---------------------------------------------------------------------------
// Serialization: long-form CSV (region_id, actor, code, week_start, count)
// holding the nonzero cells, plus a manifest JSON carrying the grid, filters,
// splits, and per-series metadata. header_comment, when nonempty, is written
// as a leading '#' line in the CSV (the reader skips comment lines).

void write_panel(const CountPanel& panel, const std::string& csv_path,
                 const std::string& manifest_path, const std::string& header_comment = "",
                 const std::string& extra_json = "");

// Manifest JSON text for a panel (also embedded verbatim by write_panel).
// extra, when given, is merged in under top-level keys (e.g. drop report,
// config hash, seed) and must not collide with the panel's own keys.
std::string panel_manifest_json(const CountPanel& panel, const std::string& extra_json = "");

// Round-trips write_panel exactly: identical counts and metadata. Throws
// DataError on malformed content, IoError on unreadable files.
CountPanel read_panel(const std::string& csv_path, const std::string& manifest_path);

// JSON object text for a drop report, for embedding via panel_manifest_json.
std::string drop_report_json(const DropReport& report);

}  // namespace tailwatch
