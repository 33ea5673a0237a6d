#include "tailwatch/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tailwatch/config.hpp"
#include "tailwatch/directional.hpp"
#include "tailwatch/errors.hpp"
#include "tailwatch/glm.hpp"
#include "tailwatch/io.hpp"
#include "tailwatch/panel.hpp"
#include "tailwatch/predictive.hpp"
#include "tailwatch/simdgp.hpp"

namespace tailwatch {

namespace {

struct RunContext {
  RunConfig cfg;
  std::string out_dir;  // resolved output directory, no trailing slash
  std::ostream* out = nullptr;

  std::ostream& os() const { return *out; }
};

std::string sanitize_label(const std::string& label) {
  std::string out = label;
  std::replace(out.begin(), out.end(), '/', '_');
  return out;
}

std::string provenance(const RunConfig& cfg) {
  return "config=" + cfg.config_hash + " seed=" + std::to_string(cfg.seed);
}

std::string fmt(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

// The run log is the only place wall-clock timestamps appear; every data
// output stays byte-identical across reruns of the same config and seed.
void log_line(const RunContext& ctx, const std::string& command, const std::string& message) {
  const std::string path = ctx.out_dir + "/run.log";
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot append to '" + path + "'");
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  f << stamp << ' ' << command << ' ' << provenance(ctx.cfg) << ' ' << message << '\n';
}

void note_written(const RunContext& ctx, const std::string& path) {
  ctx.os() << "wrote " << path << '\n';
}

// --- shared panel / model plumbing ----------------------------------------

CountPanel load_panel(const RunContext& ctx) {
  if (ctx.cfg.panel.csv.empty() || ctx.cfg.panel.manifest.empty())
    throw ConfigError("panel.csv and panel.manifest are required for this command");
  return read_panel(ctx.cfg.panel.csv, ctx.cfg.panel.manifest);
}

int target_index(const RunContext& ctx, const CountPanel& panel) {
  if (ctx.cfg.model.target.empty()) throw ConfigError("model.target is required");
  const std::optional<int> s = panel.find_series(ctx.cfg.model.target);
  if (!s) throw DataError("target series '" + ctx.cfg.model.target + "' not found in panel");
  return *s;
}

std::string models_dir(const RunContext& ctx) {
  return ctx.out_dir + "/models/" + sanitize_label(ctx.cfg.model.target);
}

std::string reports_dir(const RunContext& ctx) {
  return ctx.out_dir + "/reports/" + sanitize_label(ctx.cfg.model.target);
}

// Candidate labels in their canonical order: the configured list, or every
// other series in panel order.
std::vector<std::string> candidate_labels(const RunContext& ctx, const CountPanel& panel,
                                          int target) {
  std::vector<std::string> out;
  if (ctx.cfg.model.candidates.empty()) {
    for (int i = 0; i < panel.n_series(); ++i)
      if (i != target) out.push_back(series_label(panel.series[i]));
    return out;
  }
  const std::string target_label = series_label(panel.series[target]);
  std::set<std::string> seen;
  for (const std::string& label : ctx.cfg.model.candidates) {
    if (label == target_label)
      throw ConfigError("model.candidates must not include the target series '" + label + "'");
    if (!seen.insert(label).second)
      throw ConfigError("model.candidates lists '" + label + "' twice");
    if (!panel.find_series(label))
      throw DataError("candidate series '" + label + "' not found in panel");
    out.push_back(label);
  }
  return out;
}

Eigen::MatrixXi candidate_matrix(const CountPanel& panel, const std::vector<std::string>& labels,
                                 WeekRange range) {
  Eigen::MatrixXi m(range.size(), static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j)
    m.col(static_cast<Eigen::Index>(j)) = panel.series_counts(*panel.find_series(labels[j]), range);
  return m;
}

int max_design_lag(const DesignConfig& dc) {
  int max_lag = dc.candidate_lag;
  for (int lag : dc.ar_lags) max_lag = std::max(max_lag, lag);
  return max_lag;
}

// log1p-lagged candidate columns shaped as full-length fixed covariates (the
// single-fit pipeline); zero-padded before the lag reaches back, which the
// design slicing never reads. Candidates with no nonzero value over the
// modeled rows are dropped, mirroring the shrink-column convention.
struct ExternalBlock {
  Eigen::MatrixXd cols;
  std::vector<std::string> names;
  std::vector<std::string> dropped;
};

ExternalBlock lagged_externals(const CountPanel& panel, const std::vector<std::string>& labels,
                               WeekRange range, const DesignConfig& dc, bool drop_zero) {
  const int t_total = range.size();
  const int lag = dc.candidate_lag;
  const int start = max_design_lag(dc);
  ExternalBlock out;
  std::vector<Eigen::VectorXd> kept;
  for (const std::string& label : labels) {
    const Eigen::VectorXi counts = panel.series_counts(*panel.find_series(label), range);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(t_total);
    for (int t = lag; t < t_total; ++t)
      col[t] = std::log1p(static_cast<double>(counts[t - lag]));
    bool any = false;
    for (int t = start; t < t_total && !any; ++t) any = col[t] != 0.0;
    if (any || !drop_zero) {
      kept.push_back(std::move(col));
      out.names.push_back(label);
    } else {
      out.dropped.push_back(label);
    }
  }
  out.cols.resize(t_total, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out.cols.col(static_cast<Eigen::Index>(j)) = kept[j];
  return out;
}

// Fixed-block names implied by the design config: intercept, then the AR lag
// terms. Single-fit artifacts carry any further columns as external labels.
std::vector<std::string> ar_prefix(const DesignConfig& dc) {
  std::vector<std::string> names;
  if (dc.intercept) names.push_back("intercept");
  for (int lag : dc.ar_lags) names.push_back("ar" + std::to_string(lag));
  return names;
}

FitConfig make_fit_config(const RunContext& ctx) {
  const ModelSection& m = ctx.cfg.model;
  FitConfig fc;
  fc.design = m.design;
  fc.family = m.family;
  fc.delta = m.delta;
  fc.level = m.level;
  fc.prior = m.prior;
  fc.link = m.link;
  fc.sampler = ctx.cfg.sampler.sampler;
  fc.sampler.seed = ctx.cfg.seed;
  fc.stream_tag = "fit/" + m.target;
  return fc;
}

ModelArtifact make_artifact(const RunContext& ctx, const FitResult& fit, const FitConfig& fc,
                            const std::string& stage) {
  ModelArtifact a;
  a.fit = fit;
  a.prior = fc.prior;
  a.link = fc.link;
  a.sampler = fc.sampler;
  a.sampler.stream_label = fc.stream_tag + "/" + stage;
  a.stage = stage;
  a.target = ctx.cfg.model.target;
  a.config_hash = ctx.cfg.config_hash;
  a.seed = ctx.cfg.seed;
  return a;
}

// Evaluation weeks: the panel's test split unless the predictive section
// overrides the window with explicit week-start dates.
WeekRange eval_window(const RunContext& ctx, const CountPanel& panel) {
  int begin = panel.n_train + panel.n_val;
  int end = panel.n_weeks();
  const auto to_week = [&](std::int64_t day, const char* key) {
    const std::int64_t rel = day - panel.week_origin;
    if (rel % 7 != 0 || rel < 0)
      throw ConfigError(std::string("predictive.") + key + " (" + format_date_iso(day) +
                        ") must fall on a panel week start (" +
                        format_date_iso(panel.week_origin) + " + 7k days)");
    return static_cast<int>(rel / 7);
  };
  if (ctx.cfg.predictive.start) begin = to_week(*ctx.cfg.predictive.start, "start");
  if (ctx.cfg.predictive.end) end = to_week(*ctx.cfg.predictive.end, "end");
  if (end > panel.n_weeks())
    throw DataError("evaluation window ends at week " + format_date_iso(panel.week_start(end)) +
                    " but the panel stops before that; no covariates available");
  if (begin >= end) throw DataError("evaluation window is empty");
  return {begin, end};
}

// --- simulate ---------------------------------------------------------------

CountPanel sim_to_panel(const SimPanel& sim) {
  const DgpConfig& d = sim.truth;
  const int n_weeks = d.t_total - d.burn_in;
  CountPanel panel;
  panel.counts.resize(2 + d.n_noise, n_weeks);
  panel.series.reserve(2 + d.n_noise);
  panel.series.push_back({"dense", "", "", std::nullopt});
  panel.series.push_back({"sparse", "", "", std::nullopt});
  for (int j = 0; j < d.n_noise; ++j)
    panel.series.push_back({"noise" + std::to_string(j + 1), "", "", std::nullopt});
  for (int t = 0; t < n_weeks; ++t) {
    const int w = t + d.burn_in;
    panel.counts(0, t) = sim.dense[w];
    panel.counts(1, t) = sim.sparse[w];
    for (int j = 0; j < d.n_noise; ++j) panel.counts(2 + j, t) = sim.noise(w, j);
  }
  panel.week_origin = default_week_origin();
  panel.anchor_weekday = 0;
  panel.n_train = d.t_train - d.burn_in;
  panel.n_val = 0;
  return panel;
}

int cmd_simulate(const RunContext& ctx) {
  DgpConfig dgp = ctx.cfg.simulate.dgp;
  dgp.seed = ctx.cfg.seed;
  validate_dgp_config(dgp);

  const SimPanel sim = generate(dgp);
  const CountPanel panel = sim_to_panel(sim);
  validate_panel(panel);

  ensure_dir(ctx.out_dir);
  nlohmann::json extra;
  extra["config_hash"] = ctx.cfg.config_hash;
  extra["seed"] = ctx.cfg.seed;
  extra["sim_burn_in"] = dgp.burn_in;  // panel week 0 is generator week burn_in
  extra["sparse_train_zero_fraction"] = sim.sparse_train_zero_fraction;
  const std::string csv = ctx.out_dir + "/panel.csv";
  const std::string manifest = ctx.out_dir + "/panel_manifest.json";
  write_panel(panel, csv, manifest, provenance(ctx.cfg), extra.dump());

  nlohmann::json truth = nlohmann::json::parse(truth_to_json(dgp));
  truth["config_hash"] = ctx.cfg.config_hash;
  const std::string truth_path = ctx.out_dir + "/truth.json";
  write_text_file(truth_path, truth.dump(2) + "\n");

  const WeekRange test = panel.test_range();
  ctx.os() << "simulated " << panel.n_series() << " series x " << panel.n_weeks()
           << " weeks (train " << panel.n_train << ", val " << panel.n_val << ", test "
           << test.size() << ")\n";
  ctx.os() << "sparse training zero fraction: " << fmt(sim.sparse_train_zero_fraction) << '\n';
  note_written(ctx, csv);
  note_written(ctx, manifest);
  note_written(ctx, truth_path);
  log_line(ctx, "simulate",
           "panel " + std::to_string(panel.n_series()) + "x" + std::to_string(panel.n_weeks()) +
               " sparse_zero_frac=" + fmt(sim.sparse_train_zero_fraction));
  return exit_code::ok;
}

// --- aggregate --------------------------------------------------------------

int cmd_aggregate(const RunContext& ctx) {
  const AggregateSection& a = ctx.cfg.aggregate;
  if (a.events.empty()) throw ConfigError("aggregate.events is required");

  const EventReadResult events = read_event_records(a.events, a.columns);
  AggregateConfig acfg;
  acfg.grid = a.grid;
  acfg.actors = a.actors;
  acfg.codes = a.codes;
  acfg.week_origin = a.week_origin;
  acfg.anchor_weekday = a.anchor_weekday;
  acfg.last_week_start = a.last_week_start;
  AggregateResult agg = aggregate(events.records, acfg);

  CountPanel panel = std::move(agg.panel);
  if (a.train_end) panel = split_panel(panel, *a.train_end, a.val_weeks);

  ensure_dir(ctx.out_dir);
  nlohmann::json extra;
  extra["config_hash"] = ctx.cfg.config_hash;
  extra["seed"] = ctx.cfg.seed;
  extra["aggregation"] = nlohmann::json::parse(drop_report_json(agg.report));
  extra["rejected_rows"] = events.rejected.size();
  const std::string csv = ctx.out_dir + "/panel.csv";
  const std::string manifest = ctx.out_dir + "/panel_manifest.json";
  write_panel(panel, csv, manifest, provenance(ctx.cfg), extra.dump());

  ctx.os() << "read " << agg.report.n_input << " event records (" << events.rejected.size()
           << " rows rejected)\n";
  ctx.os() << "kept " << agg.report.n_kept << " of " << agg.report.n_input << " records\n";
  for (const auto& [reason, count] : agg.report.dropped)
    ctx.os() << "dropped " << reason << ": " << count << '\n';
  const WeekRange test = panel.test_range();
  ctx.os() << "panel: " << panel.n_series() << " series x " << panel.n_weeks()
           << " weeks (train " << panel.n_train << ", val " << panel.n_val << ", test "
           << test.size() << ")\n";
  note_written(ctx, csv);
  note_written(ctx, manifest);

  if (!events.rejected.empty()) {
    std::string rej = "# " + provenance(ctx.cfg) + "\nline,reason\n";
    for (const RowRejection& r : events.rejected)
      rej += std::to_string(r.line) + ',' + r.reason + '\n';
    const std::string rej_path = ctx.out_dir + "/rejected_rows.csv";
    write_text_file(rej_path, rej);
    note_written(ctx, rej_path);
  }
  log_line(ctx, "aggregate",
           "kept " + std::to_string(agg.report.n_kept) + "/" + std::to_string(agg.report.n_input) +
               " rejected_rows=" + std::to_string(events.rejected.size()));
  return exit_code::ok;
}

// --- fit --------------------------------------------------------------------

std::string family_note(const RunContext& ctx, Family family) {
  return family_name(family) + (ctx.cfg.model.family ? " (configured)" : " (auto)");
}

// Divergence-rate guard: artifacts are written before this throws, so a noisy
// fit still leaves its draws on disk for inspection.
void check_divergences(const RunContext& ctx, const std::vector<std::pair<std::string, double>>& rates) {
  const double bound = ctx.cfg.sampler.max_divergence_rate;
  for (const auto& [stage, rate] : rates) {
    if (rate > bound)
      throw SamplerError("stage " + stage + " divergence rate " + fmt(rate) +
                         " exceeds the configured bound " + fmt(bound) +
                         " (artifacts were written)");
  }
}

int cmd_fit(const RunContext& ctx) {
  const ModelSection& m = ctx.cfg.model;
  const CountPanel panel = load_panel(ctx);
  const int target = target_index(ctx, panel);
  const WeekRange train = panel.train_range();
  const Eigen::VectorXi y = panel.series_counts(target, train);

  FitConfig fc = make_fit_config(ctx);
  const std::string dir = models_dir(ctx);
  ensure_dir(dir);

  std::vector<std::pair<std::string, double>> rates;
  if (m.pipeline == Pipeline::two_step) {
    const std::vector<std::string> labels = candidate_labels(ctx, panel, target);
    const Eigen::MatrixXi cand = candidate_matrix(panel, labels, train);
    const TwoStepResult res =
        two_step_fit(y, cand, labels, Eigen::MatrixXd(), {}, fc);

    ctx.os() << "target " << m.target << ": pipeline two-step, family "
             << family_note(ctx, res.family) << '\n';
    ctx.os() << "step1: " << res.step1.design.shrink.cols() << " candidate columns kept, "
             << res.step1.design.dropped_candidates.size() << " dropped; divergence rate "
             << fmt(res.step1.samples.divergence_rate()) << '\n';
    ctx.os() << "active candidates (" << res.screen.entries.size() << ")";
    for (std::size_t i = 0; i < res.screen.entries.size(); ++i) {
      const ActiveEntry& e = res.screen.entries[i];
      std::string blocks;
      if (e.from_mean) blocks += "mean";
      if (e.from_gate) blocks += blocks.empty() ? "gate" : "+gate";
      ctx.os() << (i == 0 ? ": " : ", ") << labels[static_cast<std::size_t>(e.candidate)] << " ["
               << blocks << "]";
    }
    ctx.os() << '\n';
    ctx.os() << "step2: divergence rate " << fmt(res.step2.samples.divergence_rate()) << '\n';

    write_model(make_artifact(ctx, res.step1, fc, "step1"), dir + "/step1");
    nlohmann::json sj = nlohmann::json::parse(screen_to_json(res.screen));
    sj["config_hash"] = ctx.cfg.config_hash;
    sj["seed"] = ctx.cfg.seed;
    sj["candidate_labels"] = labels;
    nlohmann::json active = nlohmann::json::array();
    for (const ActiveEntry& e : res.screen.entries)
      active.push_back(labels[static_cast<std::size_t>(e.candidate)]);
    sj["active_labels"] = active;
    write_text_file(dir + "/screen.json", sj.dump(2) + "\n");
    write_model(make_artifact(ctx, res.step2, fc, "step2"), dir + "/step2");
    write_text_file(dir + "/summary.csv",
                    coef_summary_csv(summarize_coefficients(res.step2), provenance(ctx.cfg)));
    note_written(ctx, dir + "/step1.json");
    note_written(ctx, dir + "/screen.json");
    note_written(ctx, dir + "/step2.json");
    note_written(ctx, dir + "/summary.csv");

    rates.emplace_back("step1", res.step1.samples.divergence_rate());
    rates.emplace_back("step2", res.step2.samples.divergence_rate());
    log_line(ctx, "fit",
             "target=" + m.target + " pipeline=two-step family=" + family_name(res.family) +
                 " active=" + std::to_string(res.screen.entries.size()) +
                 " div1=" + fmt(res.step1.samples.divergence_rate()) +
                 " div2=" + fmt(res.step2.samples.divergence_rate()));
  } else {
    DesignMatrices design;
    if (m.pipeline == Pipeline::full_glm) {
      const std::vector<std::string> labels = candidate_labels(ctx, panel, target);
      const ExternalBlock ext = lagged_externals(panel, labels, train, m.design, true);
      design = build_design(y, Eigen::MatrixXi(), {}, ext.cols, ext.names, m.design);
      if (!ext.dropped.empty()) {
        ctx.os() << "dropped constant-zero candidates (" << ext.dropped.size() << ")";
        for (std::size_t i = 0; i < ext.dropped.size(); ++i)
          ctx.os() << (i == 0 ? ": " : ", ") << ext.dropped[i];
        ctx.os() << '\n';
      }
    } else {
      design = build_design(y, Eigen::MatrixXi(), {}, Eigen::MatrixXd(), {}, m.design);
    }
    const Family family = m.family ? *m.family : select_family(y);
    const FitResult fit = fit_glm(design, family, fc, "single");

    ctx.os() << "target " << m.target << ": pipeline " << pipeline_name(m.pipeline)
             << ", family " << family_note(ctx, family) << '\n';
    ctx.os() << "fit: divergence rate " << fmt(fit.samples.divergence_rate()) << '\n';

    write_model(make_artifact(ctx, fit, fc, "single"), dir + "/model");
    write_text_file(dir + "/summary.csv",
                    coef_summary_csv(summarize_coefficients(fit), provenance(ctx.cfg)));
    note_written(ctx, dir + "/model.json");
    note_written(ctx, dir + "/summary.csv");

    rates.emplace_back("single", fit.samples.divergence_rate());
    log_line(ctx, "fit",
             "target=" + m.target + " pipeline=" + pipeline_name(m.pipeline) +
                 " family=" + family_name(family) + " div=" + fmt(fit.samples.divergence_rate()));
  }
  check_divergences(ctx, rates);
  return exit_code::ok;
}

// --- forecast / score -------------------------------------------------------

// Rebuilds the fitted design over [0, window.end) and runs the rolling
// one-step evaluation. The rebuilt column structure must reproduce the
// artifact's exactly; a config drifted since fit fails loudly.
ForecastResult model_forecast(const RunContext& ctx, const CountPanel& panel, int target,
                              WeekRange window) {
  const ModelSection& m = ctx.cfg.model;
  const std::string dir = models_dir(ctx);
  const bool two_step = std::filesystem::exists(dir + "/step2.json");
  const std::string artifact_path = dir + (two_step ? "/step2.json" : "/model.json");
  if (!std::filesystem::exists(artifact_path))
    throw IoError("no fitted model for target '" + m.target + "' under " + dir +
                  " (run fit first)");
  const ModelArtifact art = read_model(artifact_path);
  if (art.target != m.target)
    throw DataError("model artifact at " + artifact_path + " was fitted for target '" +
                    art.target + "', not '" + m.target + "'");

  const WeekRange history{0, window.end};
  const Eigen::VectorXi y = panel.series_counts(target, history);

  DesignMatrices design;
  if (two_step) {
    const ScreenResult screen = screen_from_json(read_text_file(dir + "/screen.json"));
    std::vector<int> active;
    for (const ActiveEntry& e : screen.entries) active.push_back(e.candidate);
    const std::vector<std::string> labels = candidate_labels(ctx, panel, target);
    const Eigen::MatrixXi cand = candidate_matrix(panel, labels, history);
    const DesignMatrices full =
        build_design(y, cand, labels, Eigen::MatrixXd(), {}, m.design);
    design = reduced_design(full, active);
  } else {
    const std::vector<std::string> prefix = ar_prefix(m.design);
    const std::vector<std::string>& fitted = art.fit.design.fixed_names;
    if (fitted.size() < prefix.size() ||
        !std::equal(prefix.begin(), prefix.end(), fitted.begin()))
      throw ConfigError("model design in config does not match the fitted artifact (AR terms)");
    const std::vector<std::string> ext_labels(fitted.begin() + static_cast<long>(prefix.size()),
                                              fitted.end());
    for (const std::string& label : ext_labels)
      if (!panel.find_series(label))
        throw DataError("fitted covariate series '" + label + "' not found in panel");
    const ExternalBlock ext = lagged_externals(panel, ext_labels, history, m.design, false);
    design = build_design(y, Eigen::MatrixXi(), {}, ext.cols, ext.names, m.design);
  }

  if (design.fixed_names != art.fit.design.fixed_names ||
      design.shrink_names != art.fit.design.shrink_names)
    throw DataError(
        "rebuilt design does not match the fitted artifact; has the model configuration "
        "changed since fit?");
  if (window.begin < design.start_row)
    throw DataError("evaluation begins at week " + std::to_string(window.begin) +
                    " but lagged covariates start at week " + std::to_string(design.start_row));

  PredictiveConfig pc;
  pc.q = ctx.cfg.predictive.q;
  pc.link = art.link;
  return rolling_forecast(art.fit, design, window.begin - design.start_row,
                          window.end - design.start_row, m.target, ctx.cfg.seed, pc);
}

void print_eval_summary(const RunContext& ctx, const CountPanel& panel, WeekRange window,
                        const ForecastResult& fr) {
  ctx.os() << "target " << ctx.cfg.model.target << ": " << window.size()
           << " evaluation weeks [" << format_date_iso(panel.week_start(window.begin)) << ", "
           << format_date_iso(panel.week_start(window.end)) << ")\n";
  ctx.os() << "exceedances " << fr.exceedances << "/" << fr.rows.size() << " (q=" << fmt(fr.q, 4)
           << "), tail calibration T = " << fmt(fr.tail_T) << '\n';
  ctx.os() << "mae raw " << fmt(fr.mae.mae_raw) << ", mae log10 " << fmt(fr.mae.mae_log) << '\n';
}

int cmd_forecast(const RunContext& ctx) {
  const CountPanel panel = load_panel(ctx);
  const int target = target_index(ctx, panel);
  const WeekRange window = eval_window(ctx, panel);
  const ForecastResult fr = model_forecast(ctx, panel, target, window);

  const std::string dir = reports_dir(ctx);
  ensure_dir(dir);
  const std::string csv = dir + "/forecast.csv";
  write_text_file(csv, forecast_csv(ctx.cfg.model.target, fr.rows, panel.week_origin, fr.q,
                                    provenance(ctx.cfg)));
  const std::string metrics = dir + "/metrics.json";
  write_text_file(metrics,
                  metrics_json(ctx.cfg.model.target, fr, ctx.cfg.config_hash, ctx.cfg.seed));

  print_eval_summary(ctx, panel, window, fr);
  note_written(ctx, csv);
  note_written(ctx, metrics);
  log_line(ctx, "forecast",
           "target=" + ctx.cfg.model.target + " weeks=" + std::to_string(window.size()) +
               " exceed=" + std::to_string(fr.exceedances) + " T=" + fmt(fr.tail_T));
  return exit_code::ok;
}

void print_flagged(const RunContext& ctx, const CountPanel& panel, const ForecastResult& fr) {
  std::vector<const AnomalyRow*> flagged;
  for (const AnomalyRow& r : fr.rows)
    if (r.flag) flagged.push_back(&r);
  if (flagged.empty()) {
    ctx.os() << "flagged weeks: none\n";
    return;
  }
  ctx.os() << "flagged weeks (" << flagged.size() << "):\n";
  for (const AnomalyRow* r : flagged) {
    ctx.os() << "  " << format_date_iso(panel.week_start(r->week)) << ": observed " << r->observed
             << " > upper " << r->upper_q << " (tail score " << fmt(r->tail_score) << ")\n";
  }
}

// Anomaly benchmark under the generator truth: predictive draws from the true
// one-step parameters, no estimation involved.
ForecastResult oracle_forecast(const RunContext& ctx, const CountPanel& panel, int target,
                               WeekRange window, const DgpConfig& truth) {
  const std::string& label = ctx.cfg.model.target;
  SimTarget sim_target;
  if (label == "dense") {
    sim_target = SimTarget::dense;
  } else if (label == "sparse") {
    sim_target = SimTarget::sparse;
  } else {
    throw ConfigError("oracle scoring knows the targets 'dense' and 'sparse', not '" + label +
                      "'");
  }
  const SimPanel sim = generate(truth);
  if (panel.n_weeks() != truth.t_total - truth.burn_in)
    throw DataError("panel week count does not match the truth record");
  const Eigen::VectorXi obs = panel.series_counts(target, window);
  const Eigen::VectorXi& series = sim_target == SimTarget::dense ? sim.dense : sim.sparse;
  for (int i = 0; i < window.size(); ++i) {
    if (obs[i] != series[window.begin + i + truth.burn_in])
      throw DataError("panel counts do not match the truth record (differs at week " +
                      format_date_iso(panel.week_start(window.begin + i)) + ")");
  }

  ForecastResult fr;
  fr.q = ctx.cfg.predictive.q;
  Eigen::VectorXi medians(window.size());
  for (int i = 0; i < window.size(); ++i) {
    const int week = window.begin + i;
    const PredictiveDraws draws = oracle_predictive(sim, sim_target, week + truth.burn_in,
                                                    ctx.cfg.predictive.oracle_draws, ctx.cfg.seed);
    AnomalyRow row = score_week(draws.draws.col(0), obs[i], week, fr.q);
    if (row.flag) ++fr.exceedances;
    medians[i] = static_cast<int>(row.median);
    fr.rows.push_back(row);
  }
  fr.tail_T = tail_calibration(fr.exceedances, window.size(), fr.q);
  fr.mae = mae_metrics(obs, medians);
  return fr;
}

int cmd_score(const RunContext& ctx, bool oracle) {
  const CountPanel panel = load_panel(ctx);
  const int target = target_index(ctx, panel);
  const WeekRange window = eval_window(ctx, panel);

  ForecastResult fr;
  std::string csv_name, metrics_name;
  if (oracle) {
    if (ctx.cfg.predictive.truth.empty())
      throw ConfigError("predictive.truth is required for oracle scoring");
    const DgpConfig truth = truth_from_json(read_text_file(ctx.cfg.predictive.truth));
    fr = oracle_forecast(ctx, panel, target, window, truth);
    csv_name = "oracle_score.csv";
    metrics_name = "oracle_metrics.json";
  } else {
    fr = model_forecast(ctx, panel, target, window);
    csv_name = "score.csv";
    metrics_name = "score_metrics.json";
  }

  const std::string dir = reports_dir(ctx);
  ensure_dir(dir);
  const std::string csv = dir + "/" + csv_name;
  write_text_file(csv, forecast_csv(ctx.cfg.model.target, fr.rows, panel.week_origin, fr.q,
                                    provenance(ctx.cfg)));
  const std::string metrics = dir + "/" + metrics_name;
  write_text_file(metrics,
                  metrics_json(ctx.cfg.model.target, fr, ctx.cfg.config_hash, ctx.cfg.seed));

  print_eval_summary(ctx, panel, window, fr);
  print_flagged(ctx, panel, fr);
  note_written(ctx, csv);
  note_written(ctx, metrics);
  log_line(ctx, "score",
           std::string(oracle ? "oracle " : "") + "target=" + ctx.cfg.model.target +
               " weeks=" + std::to_string(window.size()) +
               " exceed=" + std::to_string(fr.exceedances) + " T=" + fmt(fr.tail_T));
  return exit_code::ok;
}

// --- direction --------------------------------------------------------------

int cmd_direction(const RunContext& ctx) {
  const ModelSection& m = ctx.cfg.model;
  const CountPanel panel = load_panel(ctx);
  const int target = target_index(ctx, panel);
  if (!panel.series[target].centroid)
    throw DataError("target series '" + m.target +
                    "' has no centroid; directional summaries need a gridded panel");
  const GeoPoint target_point = *panel.series[target].centroid;

  const std::string dir = models_dir(ctx);
  const bool two_step = std::filesystem::exists(dir + "/step2.json");
  const std::string artifact_path = dir + (two_step ? "/step2.json" : "/model.json");
  if (!std::filesystem::exists(artifact_path))
    throw IoError("no fitted model for target '" + m.target + "' under " + dir +
                  " (run fit first)");
  const ModelArtifact art = read_model(artifact_path);
  if (art.target != m.target)
    throw DataError("model artifact at " + artifact_path + " was fitted for target '" +
                    art.target + "', not '" + m.target + "'");

  // Fixed-block columns that name another panel series with a centroid are
  // geographic sources; coincident centroids have no bearing and are skipped.
  std::vector<GeoSource> sources;
  std::vector<std::string> skipped;
  const auto& fixed_names = art.fit.design.fixed_names;
  for (std::size_t i = 0; i < fixed_names.size(); ++i) {
    const std::string& name = fixed_names[i];
    if (name == m.target) continue;
    const std::optional<int> s = panel.find_series(name);
    if (!s || !panel.series[*s].centroid) continue;
    const GeoPoint src = *panel.series[*s].centroid;
    if (src.lat == target_point.lat && src.lon == target_point.lon) {
      skipped.push_back(name);
      continue;
    }
    sources.push_back({static_cast<int>(i), name, src});
  }

  const BearingSummary summary = posterior_bearing_summary(art.fit, sources, target_point);

  const std::string rep = reports_dir(ctx);
  ensure_dir(rep);
  nlohmann::ordered_json geo = nlohmann::ordered_json::parse(bearing_field_geojson(summary.edges));
  geo["config_hash"] = ctx.cfg.config_hash;
  geo["seed"] = ctx.cfg.seed;
  const std::string geo_path = rep + "/bearing_field.geojson";
  write_text_file(geo_path, geo.dump(2) + "\n");
  const std::string rose_path = rep + "/rose.csv";
  write_text_file(rose_path,
                  rose_csv(rose_bins(summary.edges, ctx.cfg.directional.n_sectors),
                           provenance(ctx.cfg)));
  const std::string omega_path = rep + "/omega_r.csv";
  write_text_file(omega_path, omega_r_csv(summary, provenance(ctx.cfg)));

  // Coefficient intervals for the geographic sources only (mean block, and the
  // gate block for the zero-inflated family).
  const CoefSummary all = summarize_coefficients(art.fit);
  CoefSummary sub;
  std::vector<int> keep;
  for (std::size_t i = 0; i < all.names.size(); ++i) {
    for (const GeoSource& src : sources) {
      if (all.names[i] == "mu.b." + src.label || all.names[i] == "gate.b." + src.label) {
        keep.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  sub.names.reserve(keep.size());
  sub.mean.resize(static_cast<Eigen::Index>(keep.size()));
  sub.sd.resize(static_cast<Eigen::Index>(keep.size()));
  sub.q025.resize(static_cast<Eigen::Index>(keep.size()));
  sub.q50.resize(static_cast<Eigen::Index>(keep.size()));
  sub.q975.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const int i = keep[k];
    sub.names.push_back(all.names[static_cast<std::size_t>(i)]);
    sub.mean[static_cast<Eigen::Index>(k)] = all.mean[i];
    sub.sd[static_cast<Eigen::Index>(k)] = all.sd[i];
    sub.q025[static_cast<Eigen::Index>(k)] = all.q025[i];
    sub.q50[static_cast<Eigen::Index>(k)] = all.q50[i];
    sub.q975[static_cast<Eigen::Index>(k)] = all.q975[i];
  }
  const std::string ci_path = rep + "/sources_ci.csv";
  write_text_file(ci_path, coef_summary_csv(sub, provenance(ctx.cfg)));

  if (summary.empty) {
    ctx.os() << "target " << m.target
             << ": no geographic sources among fitted columns; wrote empty directional "
                "exports\n";
  } else {
    ctx.os() << "target " << m.target << ": " << sources.size() << " geographic sources\n";
    const double mean_deg = to_bearing(summary.circular_mean) * 180.0 / M_PI;
    double r_mean = 0.0;
    for (Eigen::Index i = 0; i < summary.r_draws.size(); ++i) r_mean += summary.r_draws[i];
    r_mean /= static_cast<double>(summary.r_draws.size());
    ctx.os() << "preferred bearing " << fmt(mean_deg, 2) << " deg, mean resultant length "
             << fmt(r_mean) << '\n';
    ctx.os() << "95% arc [" << fmt(to_bearing(summary.ci_lo) * 180.0 / M_PI, 2) << ", "
             << fmt(to_bearing(summary.ci_hi) * 180.0 / M_PI, 2) << "] deg (mass "
             << fmt(summary.ci_mass) << ")\n";
  }
  if (!skipped.empty()) {
    ctx.os() << "skipped sources with the target's own centroid (" << skipped.size() << ")";
    for (std::size_t i = 0; i < skipped.size(); ++i)
      ctx.os() << (i == 0 ? ": " : ", ") << skipped[i];
    ctx.os() << '\n';
  }
  note_written(ctx, geo_path);
  note_written(ctx, rose_path);
  note_written(ctx, omega_path);
  note_written(ctx, ci_path);
  log_line(ctx, "direction",
           "target=" + m.target + " sources=" + std::to_string(sources.size()));
  return exit_code::ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "tailwatch: Bayesian count-regression engine for sparse weekly event panels.\n"
      "Fits NB2 / zero-inflated NB2 models with shrinkage-based candidate screening,\n"
      "flags right-tail anomalies from posterior predictive draws, and summarizes\n"
      "cross-series spillover directions on the map."};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> output_override;
  std::optional<std::string> target_override;
  bool oracle = false;

  const auto add_common = [&](CLI::App* sub, bool model_command) {
    sub->add_option("-c,--config", config_path, "run configuration JSON file")
        ->required();
    sub->add_option("--seed", seed_override, "override the configured seed");
    sub->add_option("--output-dir", output_override, "override the configured output directory");
    if (model_command)
      sub->add_option("--target", target_override, "override the configured target series");
  };

  std::vector<std::pair<CLI::App*, std::function<int(const RunContext&)>>> commands;

  CLI::App* sim = app.add_subcommand(
      "simulate", "generate the synthetic two-target panel and its truth record");
  add_common(sim, false);
  commands.emplace_back(sim, [](const RunContext& ctx) { return cmd_simulate(ctx); });

  CLI::App* agg = app.add_subcommand(
      "aggregate", "bin an event file into the weekly region/actor/code count panel");
  add_common(agg, false);
  commands.emplace_back(agg, [](const RunContext& ctx) { return cmd_aggregate(ctx); });

  CLI::App* fit = app.add_subcommand(
      "fit", "fit the configured pipeline to the target series' training window");
  add_common(fit, true);
  commands.emplace_back(fit, [](const RunContext& ctx) { return cmd_fit(ctx); });

  CLI::App* fc = app.add_subcommand(
      "forecast", "rolling one-step predictive evaluation over the test window");
  add_common(fc, true);
  commands.emplace_back(fc, [](const RunContext& ctx) { return cmd_forecast(ctx); });

  CLI::App* sc = app.add_subcommand(
      "score", "right-tail anomaly flags and calibration over the test window");
  add_common(sc, true);
  sc->add_flag("--oracle", oracle,
               "score with predictive draws from the truth record instead of a fitted model");
  commands.emplace_back(sc, [&oracle](const RunContext& ctx) { return cmd_score(ctx, oracle); });

  CLI::App* dir = app.add_subcommand(
      "direction", "geodesic bearing field and circular summaries of fitted spillovers");
  add_common(dir, true);
  commands.emplace_back(dir, [](const RunContext& ctx) { return cmd_direction(ctx); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::config;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (output_override) cfg.output_dir = *output_override;
    if (target_override) cfg.model.target = *target_override;

    RunContext ctx;
    ctx.cfg = std::move(cfg);
    ctx.out_dir = resolve_output_dir(ctx.cfg);
    while (ctx.out_dir.size() > 1 && ctx.out_dir.back() == '/') ctx.out_dir.pop_back();
    ctx.out = &out;

    for (const auto& [sub, handler] : commands)
      if (sub->parsed()) return handler(ctx);
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_code::data;
  } catch (const SamplerError& e) {
    err << "sampler error: " << e.what() << '\n';
    return exit_code::sampler;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
}

}  // namespace tailwatch
