#include "tailwatch/panel.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "tailwatch/errors.hpp"
#include "tailwatch/io.hpp"
#include "tailwatch/mathutil.hpp"

namespace tailwatch {

namespace {

bool all_digits(const std::string& s, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

int digits_to_int(const std::string& s, std::size_t from, std::size_t to) {
  int v = 0;
  for (std::size_t i = from; i < to; ++i) v = 10 * v + (s[i] - '0');
  return v;
}

// Round-trip through the civil-date conversion rejects impossible dates
// (e.g. month 13 or February 30) exactly.
std::int64_t days_from_validated(int y, int m, int d, const std::string& text) {
  const std::int64_t z = days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
  const CivilDate back = civil_from_days(z);
  if (back.year != y || back.month != static_cast<unsigned>(m) ||
      back.day != static_cast<unsigned>(d)) {
    throw DataError("invalid calendar date '" + text + "'");
  }
  return z;
}

bool parse_finite_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno == 0 && std::isfinite(out);
}

bool parse_nonneg_long(const std::string& s, long long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size() && errno == 0 && out >= 0;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Reads one line, stripping a trailing '\r' so CRLF files parse cleanly.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

bool skippable(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string compact_degrees(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void validate_grid_edges(const std::vector<double>& edges, double lo, double hi,
                         const std::string& axis) {
  if (edges.size() < 2) throw ConfigError("grid " + axis + " needs at least 2 edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i]) || edges[i] < lo || edges[i] > hi) {
      throw ConfigError("grid " + axis + " edge out of range: " + compact_degrees(edges[i]));
    }
    if (i > 0 && !(edges[i] > edges[i - 1])) {
      throw ConfigError("grid " + axis + " edges must be strictly increasing");
    }
  }
}

// Half-open [lo, hi) bands with the last (topmost) edge closed.
std::optional<int> find_band(const std::vector<double>& edges, double x) {
  if (!(x >= edges.front()) || !(x <= edges.back())) return std::nullopt;
  if (x == edges.back()) return static_cast<int>(edges.size()) - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<int>(it - edges.begin()) - 1;
}

std::int64_t snap_to_anchor(std::int64_t day, int anchor_weekday) {
  return day - ((weekday_from_days(day) - anchor_weekday + 7) % 7);
}

void check_csv_safe(const std::string& field, const std::string& what) {
  if (field.find_first_of(",\r\n") != std::string::npos) {
    throw DataError(what + " contains a delimiter or newline: '" + field + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Dates.

std::int64_t parse_date_iso(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !all_digits(text, 0, 4) ||
      !all_digits(text, 5, 7) || !all_digits(text, 8, 10)) {
    throw DataError("expected ISO date YYYY-MM-DD, got '" + text + "'");
  }
  return days_from_validated(digits_to_int(text, 0, 4), digits_to_int(text, 5, 7),
                             digits_to_int(text, 8, 10), text);
}

std::int64_t parse_date_yyyymmdd(const std::string& text) {
  if (text.size() != 8 || !all_digits(text, 0, 8)) {
    throw DataError("expected compact date YYYYMMDD, got '" + text + "'");
  }
  return days_from_validated(digits_to_int(text, 0, 4), digits_to_int(text, 4, 6),
                             digits_to_int(text, 6, 8), text);
}

std::string format_date_iso(std::int64_t epoch_days) {
  const CivilDate c = civil_from_days(epoch_days);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
  return buf;
}

// ---------------------------------------------------------------------------
// Event ingestion.

EventColumnMap EventColumnMap::gdelt_raw() {
  EventColumnMap m;
  m.timestamp = "SQLDATE";
  m.lat = "ActionGeo_Lat";
  m.lon = "ActionGeo_Long";
  m.actor1 = "Actor1CountryCode";
  m.root_code = "EventRootCode";
  m.delimiter = '\t';
  m.compact_dates = true;
  return m;
}

EventReadResult read_event_records(const std::string& path, const EventColumnMap& map) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  std::string line;
  std::int64_t line_no = 0;
  // Header: first non-comment, non-blank line.
  std::vector<std::string> header;
  while (next_line(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    header = split_line(line, map.delimiter);
    break;
  }
  if (header.empty()) throw DataError(path + ": missing header row");

  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(path + ": header is missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_time = column(map.timestamp);
  const std::size_t c_lat = column(map.lat);
  const std::size_t c_lon = column(map.lon);
  const std::size_t c_actor = column(map.actor1);
  const std::size_t c_code = column(map.root_code);

  EventReadResult out;
  while (next_line(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const std::vector<std::string> fields = split_line(line, map.delimiter);
    if (fields.size() != header.size()) {
      out.rejected.push_back({line_no, "expected " + std::to_string(header.size()) +
                                           " fields, got " + std::to_string(fields.size())});
      continue;
    }
    EventRecord rec;
    try {
      rec.timestamp = map.compact_dates ? parse_date_yyyymmdd(fields[c_time])
                                        : parse_date_iso(fields[c_time]);
    } catch (const DataError& e) {
      out.rejected.push_back({line_no, e.what()});
      continue;
    }
    if (!parse_finite_double(fields[c_lat], rec.action_lat)) {
      out.rejected.push_back({line_no, "bad latitude '" + fields[c_lat] + "'"});
      continue;
    }
    if (!parse_finite_double(fields[c_lon], rec.action_lon)) {
      out.rejected.push_back({line_no, "bad longitude '" + fields[c_lon] + "'"});
      continue;
    }
    rec.actor1 = fields[c_actor];
    rec.root_code = fields[c_code];
    if (rec.root_code.empty()) {
      out.rejected.push_back({line_no, "empty root code"});
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return out;
}

void write_event_records(const std::vector<EventRecord>& records, const std::string& path,
                         const EventColumnMap& map) {
  std::ostringstream out;
  const char d = map.delimiter;
  out << map.timestamp << d << map.lat << d << map.lon << d << map.actor1 << d << map.root_code
      << "\n";
  char buf[32];
  const auto coord = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const EventRecord& r : records) {
    const CivilDate c = civil_from_days(r.timestamp);
    if (map.compact_dates) {
      std::snprintf(buf, sizeof(buf), "%04d%02u%02u", c.year, c.month, c.day);
    } else {
      std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
    }
    out << buf << d << coord(r.action_lat) << d << coord(r.action_lon) << d << r.actor1 << d
        << r.root_code << "\n";
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Spatial grid.

GeoPoint RegionGrid::centroid(int region) const {
  const int i = region / n_lon();
  const int j = region % n_lon();
  return {0.5 * (lat_edges[i] + lat_edges[i + 1]), 0.5 * (lon_edges[j] + lon_edges[j + 1])};
}

std::string RegionGrid::region_id(int region) const {
  const GeoPoint c = centroid(region);
  return "lat" + compact_degrees(c.lat) + "_lon" + compact_degrees(c.lon);
}

std::optional<int> RegionGrid::cell_index(double lat, double lon) const {
  const std::optional<int> bi = find_band(lat_edges, lat);
  const std::optional<int> bj = find_band(lon_edges, lon);
  if (!bi || !bj) return std::nullopt;
  return *bi * n_lon() + *bj;
}

RegionGrid RegionGrid::from_edges(std::vector<double> lat_edges, std::vector<double> lon_edges) {
  validate_grid_edges(lat_edges, -90.0, 90.0, "latitude");
  validate_grid_edges(lon_edges, -180.0, 180.0, "longitude");
  RegionGrid g;
  g.lat_edges = std::move(lat_edges);
  g.lon_edges = std::move(lon_edges);
  return g;
}

RegionGrid RegionGrid::default_grid() {
  std::vector<double> lat, lon;
  for (int i = 0; i <= 8; ++i) lat.push_back(19.5 + 5.0 * i);
  for (int j = 0; j <= 5; ++j) lon.push_back(10.0 + 10.0 * j);
  return from_edges(std::move(lat), std::move(lon));
}

const std::vector<std::string>& default_actor_filter() {
  static const std::vector<std::string> v = {"USA", "RUS", "UKR", "ISR", "PSE", "TUR", "DEU"};
  return v;
}

const std::vector<std::string>& default_code_filter() {
  static const std::vector<std::string> v = {"04", "13", "18", "19"};
  return v;
}

std::int64_t default_week_origin() { return days_from_civil(2015, 2, 23); }
std::int64_t default_train_end_gaza() { return days_from_civil(2021, 1, 18); }
std::int64_t default_train_end_ukraine() { return days_from_civil(2020, 1, 20); }

// ---------------------------------------------------------------------------
// Count panel.

std::string series_label(const SeriesMeta& meta) {
  std::string label = meta.region_id;
  for (const std::string* part : {&meta.actor, &meta.code}) {
    if (!part->empty()) {
      if (!label.empty()) label += '/';
      label += *part;
    }
  }
  return label;
}

std::string split_name(SplitPart part) {
  switch (part) {
    case SplitPart::train: return "train";
    case SplitPart::val: return "val";
    case SplitPart::test: return "test";
  }
  throw ConfigError("unknown split part");
}

WeekRange CountPanel::range(SplitPart part) const {
  switch (part) {
    case SplitPart::train: return {0, n_train};
    case SplitPart::val: return {n_train, n_train + n_val};
    case SplitPart::test: return {n_train + n_val, n_weeks()};
  }
  throw ConfigError("unknown split part");
}

std::optional<int> CountPanel::find_series(const std::string& label) const {
  for (int s = 0; s < n_series(); ++s) {
    if (series_label(series[s]) == label) return s;
  }
  return std::nullopt;
}

Eigen::VectorXi CountPanel::series_counts(int s, WeekRange r) const {
  if (s < 0 || s >= n_series()) {
    throw DataError("series index out of range: " + std::to_string(s));
  }
  if (r.begin < 0 || r.end > n_weeks() || r.begin > r.end) {
    throw DataError("week range [" + std::to_string(r.begin) + ", " + std::to_string(r.end) +
                    ") outside panel with " + std::to_string(n_weeks()) + " weeks");
  }
  return counts.row(s).segment(r.begin, r.size()).transpose();
}

void validate_panel(const CountPanel& panel) {
  if (panel.counts.rows() != panel.n_series()) {
    throw DataError("panel counts rows != series metadata entries");
  }
  if (panel.n_series() == 0 || panel.n_weeks() == 0) {
    throw DataError("panel must have at least one series and one week");
  }
  if (panel.counts.minCoeff() < 0) throw DataError("panel counts must be nonnegative");
  if (panel.anchor_weekday < 0 || panel.anchor_weekday > 6) {
    throw DataError("anchor weekday must be in 0..6");
  }
  if (weekday_from_days(panel.week_origin) != panel.anchor_weekday) {
    throw DataError("week origin " + format_date_iso(panel.week_origin) +
                    " does not fall on the anchor weekday");
  }
  if (panel.n_train < 0 || panel.n_val < 0 || panel.n_train + panel.n_val > panel.n_weeks()) {
    throw DataError("panel split exceeds the week range");
  }
  std::map<std::string, int> seen;
  for (int s = 0; s < panel.n_series(); ++s) {
    const SeriesMeta& m = panel.series[s];
    const std::string label = series_label(m);
    if (label.empty()) throw DataError("series " + std::to_string(s) + " has an empty label");
    if (!seen.emplace(label, s).second) throw DataError("duplicate series label: " + label);
    if (m.centroid) validate_geopoint(*m.centroid);
  }
  if (panel.grid) {
    validate_grid_edges(panel.grid->lat_edges, -90.0, 90.0, "latitude");
    validate_grid_edges(panel.grid->lon_edges, -180.0, 180.0, "longitude");
    const std::size_t expect = static_cast<std::size_t>(panel.grid->n_regions()) *
                               panel.actor_filter.size() * panel.code_filter.size();
    if (expect != panel.series.size()) {
      throw DataError("gridded panel must cover the full region x actor x code cross product");
    }
  }
}

// ---------------------------------------------------------------------------
// Aggregation.

std::int64_t DropReport::n_dropped() const {
  std::int64_t total = 0;
  for (const auto& [reason, n] : dropped) total += n;
  return total;
}

AggregateResult aggregate(const std::vector<EventRecord>& records, const AggregateConfig& cfg) {
  validate_grid_edges(cfg.grid.lat_edges, -90.0, 90.0, "latitude");
  validate_grid_edges(cfg.grid.lon_edges, -180.0, 180.0, "longitude");
  if (cfg.actors.empty()) throw ConfigError("actor filter must be nonempty");
  if (cfg.codes.empty()) throw ConfigError("code filter must be nonempty");
  if (cfg.anchor_weekday < 0 || cfg.anchor_weekday > 6) {
    throw ConfigError("anchor weekday must be in 0..6");
  }
  std::map<std::string, int> actor_of, code_of;
  for (std::size_t i = 0; i < cfg.actors.size(); ++i) {
    if (cfg.actors[i].empty()) throw ConfigError("actor filter entries must be nonempty");
    if (!actor_of.emplace(cfg.actors[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate actor filter entry: " + cfg.actors[i]);
    }
  }
  for (std::size_t i = 0; i < cfg.codes.size(); ++i) {
    if (cfg.codes[i].empty()) throw ConfigError("code filter entries must be nonempty");
    if (!code_of.emplace(cfg.codes[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate code filter entry: " + cfg.codes[i]);
    }
  }

  const std::int64_t origin = snap_to_anchor(cfg.week_origin, cfg.anchor_weekday);
  std::optional<std::int64_t> configured_weeks;
  if (cfg.last_week_start) {
    const std::int64_t last = snap_to_anchor(*cfg.last_week_start, cfg.anchor_weekday);
    if (last < origin) throw ConfigError("last_week_start precedes the week origin");
    configured_weeks = (last - origin) / 7 + 1;
  }

  // Classify every record once; the panel extent comes from the configured
  // window or, failing that, from the latest fully matching record.
  struct Fate {
    int cell = -1, t = -1, a = -1, v = -1;
    const char* reason = nullptr;
  };
  std::vector<Fate> fates(records.size());
  std::int64_t max_t = -1;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EventRecord& r = records[i];
    Fate& f = fates[i];
    const std::optional<int> cell = cfg.grid.cell_index(r.action_lat, r.action_lon);
    if (!cell) {
      f.reason = "outside_grid";
      continue;
    }
    if (r.timestamp < origin) {
      f.reason = "before_origin";
      continue;
    }
    const std::int64_t t = (r.timestamp - origin) / 7;
    if (configured_weeks && t >= *configured_weeks) {
      f.reason = "after_end";
      continue;
    }
    const auto a = actor_of.find(r.actor1);
    if (a == actor_of.end()) {
      f.reason = "actor_filtered";
      continue;
    }
    const auto v = code_of.find(r.root_code);
    if (v == code_of.end()) {
      f.reason = "code_filtered";
      continue;
    }
    f.cell = *cell;
    f.t = static_cast<int>(t);
    f.a = a->second;
    f.v = v->second;
    max_t = std::max(max_t, t);
  }

  std::int64_t n_weeks = configured_weeks.value_or(max_t + 1);
  if (n_weeks <= 0) {
    throw DataError(
        "no records fall inside the panel window; set last_week_start to fix the extent");
  }

  const int R = cfg.grid.n_regions();
  const int A = static_cast<int>(cfg.actors.size());
  const int V = static_cast<int>(cfg.codes.size());
  AggregateResult out;
  CountPanel& panel = out.panel;
  panel.counts = Eigen::MatrixXi::Zero(R * A * V, n_weeks);
  panel.series.reserve(static_cast<std::size_t>(R) * A * V);
  for (int r = 0; r < R; ++r) {
    for (int a = 0; a < A; ++a) {
      for (int v = 0; v < V; ++v) {
        panel.series.push_back(
            {cfg.grid.region_id(r), cfg.actors[a], cfg.codes[v], cfg.grid.centroid(r)});
      }
    }
  }
  panel.week_origin = origin;
  panel.anchor_weekday = cfg.anchor_weekday;
  panel.n_train = static_cast<int>(n_weeks);  // unsplit: everything is training
  panel.n_val = 0;
  panel.grid = cfg.grid;
  panel.actor_filter = cfg.actors;
  panel.code_filter = cfg.codes;

  DropReport& report = out.report;
  report.n_input = static_cast<std::int64_t>(records.size());
  for (const Fate& f : fates) {
    if (f.reason != nullptr) {
      ++report.dropped[f.reason];
      continue;
    }
    const int s = (f.cell * A + f.a) * V + f.v;
    ++panel.counts(s, f.t);
    ++report.n_kept;
  }
  validate_panel(panel);
  return out;
}

// ---------------------------------------------------------------------------
// Splits and summaries.

CountPanel split_panel(const CountPanel& panel, std::int64_t train_end, int val_weeks) {
  validate_panel(panel);
  if (val_weeks < 0) throw ConfigError("val_weeks must be nonnegative");
  const std::int64_t first = panel.week_start(0);
  const std::int64_t last_covered = panel.week_start(panel.n_weeks() - 1) + 6;
  if (train_end < first || train_end > last_covered) {
    throw DataError("train_end " + format_date_iso(train_end) + " outside the panel range " +
                    format_date_iso(first) + ".." + format_date_iso(last_covered));
  }
  const int n_train = static_cast<int>((train_end - panel.week_origin) / 7) + 1;
  if (n_train + val_weeks > panel.n_weeks()) {
    throw DataError("insufficient weeks: " + std::to_string(panel.n_weeks()) + " total, need " +
                    std::to_string(n_train) + " train + " + std::to_string(val_weeks) + " val");
  }
  CountPanel out = panel;
  out.n_train = n_train;
  out.n_val = val_weeks;
  return out;
}

double zero_fraction(const CountPanel& panel, int s, SplitPart part) {
  const WeekRange r = panel.range(part);
  if (r.size() == 0) throw DataError("empty " + split_name(part) + " split");
  const Eigen::VectorXi y = panel.series_counts(s, r);
  const auto zeros = (y.array() == 0).count();
  return static_cast<double>(zeros) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Serialization.

std::string panel_manifest_json(const CountPanel& panel, const std::string& extra_json) {
  validate_panel(panel);
  nlohmann::ordered_json j;
  j["format"] = "tailwatch-panel";
  j["version"] = 1;
  j["week_origin"] = format_date_iso(panel.week_origin);
  j["anchor_weekday"] = panel.anchor_weekday;
  j["n_weeks"] = panel.n_weeks();
  j["split"] = {{"n_train", panel.n_train}, {"n_val", panel.n_val}};
  if (panel.grid) {
    j["grid"] = {{"lat_edges", panel.grid->lat_edges}, {"lon_edges", panel.grid->lon_edges}};
  } else {
    j["grid"] = nullptr;
  }
  if (panel.actor_filter.empty() && panel.code_filter.empty()) {
    j["filters"] = nullptr;
  } else {
    j["filters"] = {{"actors", panel.actor_filter}, {"codes", panel.code_filter}};
  }
  j["series"] = nlohmann::ordered_json::array();
  for (const SeriesMeta& m : panel.series) {
    nlohmann::ordered_json e;
    e["region_id"] = m.region_id;
    e["actor"] = m.actor;
    e["code"] = m.code;
    if (m.centroid) {
      e["centroid"] = {m.centroid->lat, m.centroid->lon};
    } else {
      e["centroid"] = nullptr;
    }
    j["series"].push_back(std::move(e));
  }
  if (!extra_json.empty()) {
    nlohmann::ordered_json extra;
    try {
      extra = nlohmann::ordered_json::parse(extra_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("manifest extra is not valid JSON: ") + e.what());
    }
    if (!extra.is_object()) throw ConfigError("manifest extra must be a JSON object");
    for (auto& [key, value] : extra.items()) {
      if (j.contains(key)) throw ConfigError("manifest extra key collides: " + key);
      j[key] = value;
    }
  }
  return j.dump(2) + "\n";
}

std::string drop_report_json(const DropReport& report) {
  nlohmann::ordered_json j;
  j["n_input"] = report.n_input;
  j["n_kept"] = report.n_kept;
  j["n_dropped"] = report.n_dropped();
  j["dropped"] = nlohmann::ordered_json::object();
  for (const auto& [reason, n] : report.dropped) j["dropped"][reason] = n;
  return j.dump(2);
}

void write_panel(const CountPanel& panel, const std::string& csv_path,
                 const std::string& manifest_path, const std::string& header_comment,
                 const std::string& extra_json) {
  const std::string manifest = panel_manifest_json(panel, extra_json);  // validates the panel

  std::ostringstream csv;
  if (!header_comment.empty()) {
    std::string comment = header_comment;
    std::replace(comment.begin(), comment.end(), '\n', ' ');
    std::replace(comment.begin(), comment.end(), '\r', ' ');
    csv << "# " << comment << "\n";
  }
  csv << "region_id,actor,code,week_start,count\n";
  for (int s = 0; s < panel.n_series(); ++s) {
    const SeriesMeta& m = panel.series[s];
    check_csv_safe(m.region_id, "region id");
    check_csv_safe(m.actor, "actor");
    check_csv_safe(m.code, "code");
    for (int t = 0; t < panel.n_weeks(); ++t) {
      const int n = panel.counts(s, t);
      if (n == 0) continue;
      csv << m.region_id << ',' << m.actor << ',' << m.code << ','
          << format_date_iso(panel.week_start(t)) << ',' << n << "\n";
    }
  }
  write_text_file(csv_path, csv.str());
  write_text_file(manifest_path, manifest);
}

namespace {

double json_number(const nlohmann::json& j, const std::string& what) {
  if (!j.is_number()) throw DataError("manifest: " + what + " must be a number");
  return j.get<double>();
}

}  // namespace

CountPanel read_panel(const std::string& csv_path, const std::string& manifest_path) {
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest_path + ": invalid JSON: " + e.what());
  }
  const auto field = [&](const std::string& key) -> const nlohmann::json& {
    if (!man.contains(key)) throw DataError(manifest_path + ": missing key '" + key + "'");
    return man.at(key);
  };
  if (field("format") != "tailwatch-panel") {
    throw DataError(manifest_path + ": not a panel manifest");
  }
  if (field("version") != 1) throw DataError(manifest_path + ": unsupported manifest version");

  CountPanel panel;
  if (!field("week_origin").is_string()) {
    throw DataError(manifest_path + ": week_origin must be an ISO date string");
  }
  panel.week_origin = parse_date_iso(man["week_origin"].get<std::string>());
  panel.anchor_weekday = static_cast<int>(json_number(field("anchor_weekday"), "anchor_weekday"));
  const int n_weeks = static_cast<int>(json_number(field("n_weeks"), "n_weeks"));
  const nlohmann::json& split = field("split");
  panel.n_train = static_cast<int>(json_number(split.at("n_train"), "split.n_train"));
  panel.n_val = static_cast<int>(json_number(split.at("n_val"), "split.n_val"));

  const nlohmann::json& grid = field("grid");
  if (!grid.is_null()) {
    panel.grid = RegionGrid::from_edges(grid.at("lat_edges").get<std::vector<double>>(),
                                        grid.at("lon_edges").get<std::vector<double>>());
  }
  const nlohmann::json& filters = field("filters");
  if (!filters.is_null()) {
    panel.actor_filter = filters.at("actors").get<std::vector<std::string>>();
    panel.code_filter = filters.at("codes").get<std::vector<std::string>>();
  }
  const nlohmann::json& series = field("series");
  if (!series.is_array() || series.empty()) {
    throw DataError(manifest_path + ": series must be a nonempty array");
  }
  std::map<std::tuple<std::string, std::string, std::string>, int> series_of;
  for (const nlohmann::json& e : series) {
    SeriesMeta m;
    m.region_id = e.at("region_id").get<std::string>();
    m.actor = e.at("actor").get<std::string>();
    m.code = e.at("code").get<std::string>();
    if (!e.at("centroid").is_null()) {
      const auto c = e.at("centroid").get<std::vector<double>>();
      if (c.size() != 2) throw DataError(manifest_path + ": centroid must be [lat, lon]");
      m.centroid = GeoPoint{c[0], c[1]};
    }
    const int s = static_cast<int>(panel.series.size());
    if (!series_of.emplace(std::make_tuple(m.region_id, m.actor, m.code), s).second) {
      throw DataError(manifest_path + ": duplicate series " + series_label(m));
    }
    panel.series.push_back(std::move(m));
  }
  if (n_weeks <= 0) throw DataError(manifest_path + ": n_weeks must be positive");
  panel.counts = Eigen::MatrixXi::Zero(panel.n_series(), n_weeks);

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + csv_path);
  std::string line;
  std::int64_t line_no = 0;
  std::vector<std::string> header;
  while (next_line(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    header = split_line(line, ',');
    break;
  }
  const std::vector<std::string> expect = {"region_id", "actor", "code", "week_start", "count"};
  if (header != expect) {
    throw DataError(csv_path + ": header must be 'region_id,actor,code,week_start,count'");
  }
  std::vector<char> seen(panel.series.size() * static_cast<std::size_t>(n_weeks), 0);
  const auto fail = [&](const std::string& why) {
    throw DataError(csv_path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (next_line(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const std::vector<std::string> f = split_line(line, ',');
    if (f.size() != 5) fail("expected 5 fields, got " + std::to_string(f.size()));
    const auto it = series_of.find(std::make_tuple(f[0], f[1], f[2]));
    if (it == series_of.end()) fail("unknown series '" + f[0] + "," + f[1] + "," + f[2] + "'");
    const std::int64_t day = parse_date_iso(f[3]);
    if (day < panel.week_origin || (day - panel.week_origin) % 7 != 0) {
      fail("week_start " + f[3] + " is not on the weekly grid");
    }
    const std::int64_t t = (day - panel.week_origin) / 7;
    if (t >= n_weeks) fail("week_start " + f[3] + " beyond the declared " +
                           std::to_string(n_weeks) + " weeks");
    long long n = 0;
    if (!parse_nonneg_long(f[4], n) || n > std::numeric_limits<int>::max()) {
      fail("bad count '" + f[4] + "'");
    }
    char& mark = seen[static_cast<std::size_t>(it->second) * n_weeks + t];
    if (mark) fail("duplicate cell for series " + f[0] + "," + f[1] + "," + f[2] + " week " + f[3]);
    mark = 1;
    panel.counts(it->second, static_cast<int>(t)) = static_cast<int>(n);
  }
  if (in.bad()) throw IoError("read failed: " + csv_path);
  validate_panel(panel);
  return panel;
}

}  // namespace tailwatch
