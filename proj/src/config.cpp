#include "tailwatch/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <set>
#include <utility>

#include "tailwatch/errors.hpp"
#include "tailwatch/io.hpp"

namespace tailwatch {

std::string pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::two_step: return "two-step";
    case Pipeline::ar2: return "ar2";
    case Pipeline::full_glm: return "full-glm";
  }
  throw ConfigError("invalid pipeline value");
}

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "two-step") return Pipeline::two_step;
  if (name == "ar2") return Pipeline::ar2;
  if (name == "full-glm") return Pipeline::full_glm;
  throw ConfigError("unknown pipeline '" + name +
                    "' (expected two-step, ar2, or full-glm)");
}

namespace {

using nlohmann::json;

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

// Wraps one JSON object, tracks which keys the caller consumed, and reports
// any leftovers as unknown-key errors with their full path.
class Section {
 public:
  Section(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node_->is_object())
      throw ConfigError("config key '" + path_ + "': expected an object");
  }

  const std::string& path() const { return path_; }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  double get_double(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  int get_int(const std::string& key, int fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(key, "expected an integer");
    return v->get<int>();
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) fail(key, "expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }

  std::vector<std::string> get_string_array(const std::string& key,
                                            std::vector<std::string> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(key, "expected an array of strings");
    std::vector<std::string> out;
    for (const json& e : *v) {
      if (!e.is_string()) fail(key, "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::vector<double> get_double_array(const std::string& key,
                                       std::vector<double> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const json& e : *v) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> get_int_array(const std::string& key, std::vector<int> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(key, "expected an array of integers");
    std::vector<int> out;
    for (const json& e : *v) {
      if (!e.is_number_integer()) fail(key, "expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  // ISO "YYYY-MM-DD" string -> epoch days.
  std::int64_t get_date(const std::string& key, std::int64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    return parse_date(key, *v);
  }

  std::optional<std::int64_t> get_date_opt(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return parse_date(key, *v);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ConfigError("config key '" + join_path(path_, key) + "': " + message);
  }

  void finish() const {
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!used_.count(it.key()))
        throw ConfigError("unknown config key '" + join_path(path_, it.key()) + "'");
    }
  }

 private:
  std::int64_t parse_date(const std::string& key, const json& v) const {
    if (!v.is_string()) fail(key, "expected an ISO date string \"YYYY-MM-DD\"");
    try {
      return parse_date_iso(v.get<std::string>());
    } catch (const DataError& e) {
      fail(key, e.what());
    }
  }

  const json* node_;
  std::string path_;
  std::set<std::string> used_;
};

void require_positive(const Section& sec, const std::string& key, double value) {
  if (!(value > 0.0)) sec.fail(key, "must be positive");
}

void require_unit_interval(const Section& sec, const std::string& key, double value) {
  if (!(value > 0.0 && value < 1.0)) sec.fail(key, "must lie strictly between 0 and 1");
}

void parse_simulate(const json& node, const std::string& path, SimulateSection& out) {
  Section sec(node, path);
  DgpConfig& d = out.dgp;
  d.t_total = sec.get_int("t_total", d.t_total);
  d.t_train = sec.get_int("t_train", d.t_train);
  d.burn_in = sec.get_int("burn_in", d.burn_in);
  d.n_noise = sec.get_int("n_noise", d.n_noise);
  d.noise_lambda = sec.get_double("noise_lambda", d.noise_lambda);
  d.alpha = sec.get_double("alpha", d.alpha);
  d.eta_min = sec.get_double("eta_min", d.eta_min);
  d.eta_max = sec.get_double("eta_max", d.eta_max);
  d.pi_eps = sec.get_double("pi_eps", d.pi_eps);
  d.dense_beta = sec.get_double_array("dense_beta", d.dense_beta);
  d.dense_gamma = sec.get_double_array("dense_gamma", d.dense_gamma);
  d.sparse_beta = sec.get_double_array("sparse_beta", d.sparse_beta);
  d.sparse_gamma = sec.get_double_array("sparse_gamma", d.sparse_gamma);
  d.gate_beta = sec.get_double_array("gate_beta", d.gate_beta);
  d.gate_gamma = sec.get_double_array("gate_gamma", d.gate_gamma);
  sec.finish();
  validate_dgp_config(d);
}

void parse_columns(const json& node, const std::string& path, EventColumnMap& out) {
  Section sec(node, path);
  const std::string format = sec.get_string("format", "csv");
  if (format == "gdelt-tsv") {
    out = EventColumnMap::gdelt_raw();
  } else if (format != "csv") {
    sec.fail("format", "expected \"csv\" or \"gdelt-tsv\"");
  }
  out.timestamp = sec.get_string("timestamp", out.timestamp);
  out.lat = sec.get_string("lat", out.lat);
  out.lon = sec.get_string("lon", out.lon);
  out.actor1 = sec.get_string("actor1", out.actor1);
  out.root_code = sec.get_string("root_code", out.root_code);
  const std::string delim = sec.get_string("delimiter", std::string(1, out.delimiter));
  if (delim.size() != 1) sec.fail("delimiter", "expected a single character");
  out.delimiter = delim[0];
  out.compact_dates = sec.get_bool("compact_dates", out.compact_dates);
  sec.finish();
}

void parse_grid(const json& node, const std::string& path, RegionGrid& out) {
  Section sec(node, path);
  const std::vector<double> lat = sec.get_double_array("lat_edges", out.lat_edges);
  const std::vector<double> lon = sec.get_double_array("lon_edges", out.lon_edges);
  sec.finish();
  out = RegionGrid::from_edges(lat, lon);
}

void parse_aggregate(const json& node, const std::string& path, AggregateSection& out) {
  Section sec(node, path);
  out.events = sec.get_string("events", out.events);
  if (const json* v = sec.find("columns"))
    parse_columns(*v, join_path(path, "columns"), out.columns);
  if (const json* v = sec.find("grid")) parse_grid(*v, join_path(path, "grid"), out.grid);
  out.actors = sec.get_string_array("actors", out.actors);
  out.codes = sec.get_string_array("codes", out.codes);
  out.week_origin = sec.get_date("week_origin", out.week_origin);
  out.anchor_weekday = sec.get_int("anchor_weekday", out.anchor_weekday);
  if (out.anchor_weekday < 0 || out.anchor_weekday > 6)
    sec.fail("anchor_weekday", "must lie in 0..6 (0 = Monday)");
  out.last_week_start = sec.get_date_opt("last_week_start");
  out.train_end = sec.get_date_opt("train_end");
  out.val_weeks = sec.get_int("val_weeks", out.val_weeks);
  if (out.val_weeks < 0) sec.fail("val_weeks", "must be nonnegative");
  sec.finish();
}

void parse_panel(const json& node, const std::string& path, PanelSection& out) {
  Section sec(node, path);
  out.csv = sec.get_string("csv", out.csv);
  out.manifest = sec.get_string("manifest", out.manifest);
  sec.finish();
}

void parse_prior(const json& node, const std::string& path, PriorConfig& out) {
  Section sec(node, path);
  out.beta_sigma = sec.get_double("beta_sigma", out.beta_sigma);
  out.alpha_shape = sec.get_double("alpha_shape", out.alpha_shape);
  out.alpha_rate = sec.get_double("alpha_rate", out.alpha_rate);
  out.tpbn_u = sec.get_double("tpbn_u", out.tpbn_u);
  out.tpbn_a = sec.get_double("tpbn_a", out.tpbn_a);
  out.tau_scale = sec.get_double("tau_scale", out.tau_scale);
  require_positive(sec, "beta_sigma", out.beta_sigma);
  require_positive(sec, "alpha_shape", out.alpha_shape);
  require_positive(sec, "alpha_rate", out.alpha_rate);
  require_positive(sec, "tpbn_u", out.tpbn_u);
  require_positive(sec, "tpbn_a", out.tpbn_a);
  require_positive(sec, "tau_scale", out.tau_scale);
  sec.finish();
}

void parse_link(const json& node, const std::string& path, LinkConfig& out) {
  Section sec(node, path);
  out.eta_min = sec.get_double("eta_min", out.eta_min);
  out.eta_max = sec.get_double("eta_max", out.eta_max);
  out.eps = sec.get_double("eps", out.eps);
  if (!(out.eta_min < out.eta_max)) sec.fail("eta_min", "must be below eta_max");
  require_positive(sec, "eps", out.eps);
  sec.finish();
}

void parse_model(const json& node, const std::string& path, ModelSection& out) {
  Section sec(node, path);
  out.target = sec.get_string("target", out.target);
  out.pipeline = pipeline_from_name(sec.get_string("pipeline", pipeline_name(out.pipeline)));
  if (const json* v = sec.find("candidates")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "all")
        sec.fail("candidates", "expected \"all\" or a non-empty array of series labels");
      out.candidates.clear();
    } else if (v->is_array() && !v->empty()) {
      out.candidates.clear();
      for (const json& e : *v) {
        if (!e.is_string())
          sec.fail("candidates", "expected \"all\" or a non-empty array of series labels");
        out.candidates.push_back(e.get<std::string>());
      }
    } else {
      sec.fail("candidates", "expected \"all\" or a non-empty array of series labels");
    }
  }
  const std::string family = sec.get_string("family", "auto");
  if (family == "auto") {
    out.family.reset();
  } else if (family == "nb2") {
    out.family = Family::nb2;
  } else if (family == "zinb2") {
    out.family = Family::zinb2;
  } else {
    sec.fail("family", "expected auto, nb2, or zinb2");
  }
  out.design.ar_lags = sec.get_int_array("ar_lags", out.design.ar_lags);
  for (int lag : out.design.ar_lags)
    if (lag < 1) sec.fail("ar_lags", "lags must be >= 1");
  out.design.candidate_lag = sec.get_int("candidate_lag", out.design.candidate_lag);
  if (out.design.candidate_lag < 1) sec.fail("candidate_lag", "must be >= 1");
  out.design.intercept = sec.get_bool("intercept", out.design.intercept);
  out.delta = sec.get_double("delta", out.delta);
  if (out.delta < 0.0) sec.fail("delta", "must be nonnegative");
  out.level = sec.get_double("level", out.level);
  require_unit_interval(sec, "level", out.level);
  if (const json* v = sec.find("prior")) parse_prior(*v, join_path(path, "prior"), out.prior);
  if (const json* v = sec.find("link")) parse_link(*v, join_path(path, "link"), out.link);
  sec.finish();
}

void parse_sampler(const json& node, const std::string& path, SamplerSection& out) {
  Section sec(node, path);
  SamplerConfig& s = out.sampler;
  s.num_warmup = sec.get_int("num_warmup", s.num_warmup);
  s.num_samples = sec.get_int("num_samples", s.num_samples);
  s.num_chains = sec.get_int("num_chains", s.num_chains);
  s.target_accept = sec.get_double("target_accept", s.target_accept);
  s.max_tree_depth = sec.get_int("max_tree_depth", s.max_tree_depth);
  s.init_jitter = sec.get_double("init_jitter", s.init_jitter);
  s.divergence_threshold = sec.get_double("divergence_threshold", s.divergence_threshold);
  s.parallel_chains = sec.get_bool("parallel_chains", s.parallel_chains);
  s.adapt_init_buffer = sec.get_int("adapt_init_buffer", s.adapt_init_buffer);
  s.adapt_term_buffer = sec.get_int("adapt_term_buffer", s.adapt_term_buffer);
  s.adapt_base_window = sec.get_int("adapt_base_window", s.adapt_base_window);
  if (s.num_warmup < 0) sec.fail("num_warmup", "must be nonnegative");
  if (s.num_samples < 1) sec.fail("num_samples", "must be >= 1");
  if (s.num_chains < 1) sec.fail("num_chains", "must be >= 1");
  require_unit_interval(sec, "target_accept", s.target_accept);
  if (s.max_tree_depth < 1) sec.fail("max_tree_depth", "must be >= 1");
  if (s.init_jitter < 0.0) sec.fail("init_jitter", "must be nonnegative");
  require_positive(sec, "divergence_threshold", s.divergence_threshold);
  if (s.adapt_init_buffer < 0) sec.fail("adapt_init_buffer", "must be nonnegative");
  if (s.adapt_term_buffer < 0) sec.fail("adapt_term_buffer", "must be nonnegative");
  if (s.adapt_base_window < 1) sec.fail("adapt_base_window", "must be >= 1");
  out.max_divergence_rate = sec.get_double("max_divergence_rate", out.max_divergence_rate);
  if (out.max_divergence_rate < 0.0 || out.max_divergence_rate > 1.0)
    sec.fail("max_divergence_rate", "must lie in [0, 1]");
  sec.finish();
}

void parse_predictive(const json& node, const std::string& path, PredictiveSection& out) {
  Section sec(node, path);
  out.q = sec.get_double("q", out.q);
  require_unit_interval(sec, "q", out.q);
  out.oracle_draws = sec.get_int("oracle_draws", out.oracle_draws);
  if (out.oracle_draws < 1) sec.fail("oracle_draws", "must be >= 1");
  out.start = sec.get_date_opt("start");
  out.end = sec.get_date_opt("end");
  out.truth = sec.get_string("truth", out.truth);
  sec.finish();
}

void parse_directional(const json& node, const std::string& path, DirectionalSection& out) {
  Section sec(node, path);
  out.n_sectors = sec.get_int("n_sectors", out.n_sectors);
  if (out.n_sectors < 1) sec.fail("n_sectors", "must be >= 1");
  sec.finish();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root: expected an object");

  RunConfig cfg;
  cfg.config_hash = fingerprint_hex(j.dump());

  Section root(j, "");
  cfg.seed = root.get_uint64("seed", cfg.seed);
  cfg.output_dir = root.get_string("output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) root.fail("output_dir", "must not be empty");
  if (const json* v = root.find("simulate")) parse_simulate(*v, "simulate", cfg.simulate);
  if (const json* v = root.find("aggregate")) parse_aggregate(*v, "aggregate", cfg.aggregate);
  if (const json* v = root.find("panel")) parse_panel(*v, "panel", cfg.panel);
  if (const json* v = root.find("model")) parse_model(*v, "model", cfg.model);
  if (const json* v = root.find("sampler")) parse_sampler(*v, "sampler", cfg.sampler);
  if (const json* v = root.find("predictive"))
    parse_predictive(*v, "predictive", cfg.predictive);
  if (const json* v = root.find("directional"))
    parse_directional(*v, "directional", cfg.directional);
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

std::string resolve_output_dir(const RunConfig& cfg) {
  const char* root = std::getenv("TAILWATCH_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0') return cfg.output_dir;
  if (!cfg.output_dir.empty() && cfg.output_dir.front() == '/') return cfg.output_dir;
  std::string base(root);
  if (base.back() != '/') base.push_back('/');
  return base + cfg.output_dir;
}

}  // namespace tailwatch
