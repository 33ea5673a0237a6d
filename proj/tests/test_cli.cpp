// Command-line layer: run-config parsing (defaults, overrides, unknown-key
// and range rejection, hash stability), then end-to-end runs of every
// subcommand through run_cli against small panels, including exit codes and
// the byte-identical rerun guarantee.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/temp_dir.hpp"
#include "tailwatch/cli.hpp"
#include "tailwatch/config.hpp"
#include "tailwatch/errors.hpp"
#include "tailwatch/glm.hpp"
#include "tailwatch/io.hpp"
#include "tailwatch/panel.hpp"
#include "tailwatch/simdgp.hpp"

namespace {

using namespace tailwatch;
using tailwatch_test::TempDir;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult invoke(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("tailwatch");
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  REQUIRE(f.good());
  f << text;
}

}  // namespace

TEST_SUITE("cli") {

// --- configuration parsing --------------------------------------------------

TEST_CASE("empty config yields the documented defaults") {
  const RunConfig cfg = parse_run_config("{}");
  CHECK(cfg.seed == 1);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.model.pipeline == Pipeline::two_step);
  CHECK(cfg.model.candidates.empty());
  CHECK_FALSE(cfg.model.family.has_value());
  CHECK(cfg.model.design.ar_lags == std::vector<int>{1, 2});
  CHECK(cfg.model.design.candidate_lag == 1);
  CHECK(cfg.model.design.intercept);
  CHECK(cfg.model.delta == 0.0);
  CHECK(cfg.model.level == 0.95);
  CHECK(cfg.model.prior.beta_sigma == 100.0);
  CHECK(cfg.model.prior.alpha_shape == 1.0);
  CHECK(cfg.model.prior.alpha_rate == 10.0);
  CHECK(cfg.model.link.eta_min == -12.0);
  CHECK(cfg.model.link.eta_max == 10.0);
  CHECK(cfg.sampler.sampler.num_warmup == 1000);
  CHECK(cfg.sampler.sampler.num_samples == 6000);
  CHECK(cfg.sampler.sampler.num_chains == 1);
  CHECK(cfg.sampler.sampler.target_accept == 0.8);
  CHECK(cfg.sampler.max_divergence_rate == 0.05);
  CHECK(cfg.predictive.q == 0.975);
  CHECK(cfg.predictive.oracle_draws == 6000);
  CHECK_FALSE(cfg.predictive.start.has_value());
  CHECK(cfg.directional.n_sectors == 16);
  CHECK(cfg.aggregate.week_origin == default_week_origin());
  CHECK(cfg.aggregate.anchor_weekday == 0);
  CHECK(cfg.aggregate.val_weeks == 52);
  CHECK(cfg.aggregate.actors == default_actor_filter());
  CHECK(cfg.aggregate.codes == default_code_filter());
  CHECK(cfg.aggregate.grid.n_regions() == 40);
  CHECK(cfg.config_hash.size() == 16);
}

TEST_CASE("every section parses and lands in the right fields") {
  const std::string text = R"({
    "seed": 42,
    "output_dir": "runs/a",
    "simulate": {"t_total": 200, "t_train": 150, "burn_in": 5, "n_noise": 10,
                  "noise_lambda": 2.0, "alpha": 0.25},
    "aggregate": {"events": "ev.csv",
                   "columns": {"format": "gdelt-tsv"},
                   "grid": {"lat_edges": [10, 20, 30], "lon_edges": [0, 15]},
                   "actors": ["USA"], "codes": ["19"],
                   "week_origin": "2016-01-04", "anchor_weekday": 0,
                   "last_week_start": "2018-12-31",
                   "train_end": "2017-12-25", "val_weeks": 10},
    "panel": {"csv": "p.csv", "manifest": "p.json"},
    "model": {"target": "lat15_lon7.5/USA/19", "pipeline": "full-glm",
               "candidates": ["a", "b"], "family": "zinb2",
               "ar_lags": [1, 2, 4], "candidate_lag": 2, "intercept": true,
               "delta": 0.1, "level": 0.9,
               "prior": {"beta_sigma": 10.0, "tau_scale": 1.0},
               "link": {"eta_min": -10.0, "eta_max": 8.0, "eps": 1e-6}},
    "sampler": {"num_warmup": 500, "num_samples": 1000, "num_chains": 4,
                 "target_accept": 0.9, "max_tree_depth": 8, "init_jitter": 0.5,
                 "divergence_threshold": 500.0, "parallel_chains": false,
                 "adapt_init_buffer": 50, "adapt_term_buffer": 25,
                 "adapt_base_window": 20, "max_divergence_rate": 0.1},
    "predictive": {"q": 0.99, "oracle_draws": 500,
                    "start": "2018-01-01", "end": "2018-03-26",
                    "truth": "truth.json"},
    "directional": {"n_sectors": 8}
  })";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.seed == 42);
  CHECK(cfg.output_dir == "runs/a");
  CHECK(cfg.simulate.dgp.t_total == 200);
  CHECK(cfg.simulate.dgp.t_train == 150);
  CHECK(cfg.simulate.dgp.burn_in == 5);
  CHECK(cfg.simulate.dgp.n_noise == 10);
  CHECK(cfg.simulate.dgp.noise_lambda == 2.0);
  CHECK(cfg.simulate.dgp.alpha == 0.25);
  CHECK(cfg.aggregate.events == "ev.csv");
  CHECK(cfg.aggregate.columns.timestamp == "SQLDATE");      // gdelt-tsv preset
  CHECK(cfg.aggregate.columns.delimiter == '\t');
  CHECK(cfg.aggregate.columns.compact_dates);
  CHECK(cfg.aggregate.grid.n_lat() == 2);
  CHECK(cfg.aggregate.grid.n_lon() == 1);
  CHECK(cfg.aggregate.actors == std::vector<std::string>{"USA"});
  CHECK(cfg.aggregate.codes == std::vector<std::string>{"19"});
  CHECK(cfg.aggregate.week_origin == parse_date_iso("2016-01-04"));
  CHECK(cfg.aggregate.last_week_start == parse_date_iso("2018-12-31"));
  CHECK(cfg.aggregate.train_end == parse_date_iso("2017-12-25"));
  CHECK(cfg.aggregate.val_weeks == 10);
  CHECK(cfg.panel.csv == "p.csv");
  CHECK(cfg.panel.manifest == "p.json");
  CHECK(cfg.model.target == "lat15_lon7.5/USA/19");
  CHECK(cfg.model.pipeline == Pipeline::full_glm);
  CHECK(cfg.model.candidates == std::vector<std::string>{"a", "b"});
  CHECK(cfg.model.family == Family::zinb2);
  CHECK(cfg.model.design.ar_lags == std::vector<int>{1, 2, 4});
  CHECK(cfg.model.design.candidate_lag == 2);
  CHECK(cfg.model.delta == 0.1);
  CHECK(cfg.model.level == 0.9);
  CHECK(cfg.model.prior.beta_sigma == 10.0);
  CHECK(cfg.model.prior.tau_scale == 1.0);
  CHECK(cfg.model.prior.alpha_rate == 10.0);  // untouched default
  CHECK(cfg.model.link.eta_min == -10.0);
  CHECK(cfg.model.link.eps == 1e-6);
  CHECK(cfg.sampler.sampler.num_warmup == 500);
  CHECK(cfg.sampler.sampler.num_samples == 1000);
  CHECK(cfg.sampler.sampler.num_chains == 4);
  CHECK(cfg.sampler.sampler.target_accept == 0.9);
  CHECK(cfg.sampler.sampler.max_tree_depth == 8);
  CHECK(cfg.sampler.sampler.init_jitter == 0.5);
  CHECK(cfg.sampler.sampler.divergence_threshold == 500.0);
  CHECK_FALSE(cfg.sampler.sampler.parallel_chains);
  CHECK(cfg.sampler.sampler.adapt_init_buffer == 50);
  CHECK(cfg.sampler.sampler.adapt_term_buffer == 25);
  CHECK(cfg.sampler.sampler.adapt_base_window == 20);
  CHECK(cfg.sampler.max_divergence_rate == 0.1);
  CHECK(cfg.predictive.q == 0.99);
  CHECK(cfg.predictive.oracle_draws == 500);
  CHECK(cfg.predictive.start == parse_date_iso("2018-01-01"));
  CHECK(cfg.predictive.end == parse_date_iso("2018-03-26"));
  CHECK(cfg.predictive.truth == "truth.json");
  CHECK(cfg.directional.n_sectors == 8);
}

TEST_CASE("unknown keys are rejected with their full path") {
  const auto rejects = [](const std::string& text, const std::string& needle) {
    try {
      parse_run_config(text);
      FAIL("expected ConfigError for: " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  rejects(R"({"speed": 1})", "speed");
  rejects(R"({"model": {"targe": "x"}})", "model.targe");
  rejects(R"({"sampler": {"warmup": 10}})", "sampler.warmup");
  rejects(R"({"aggregate": {"grid": {"latedges": [1, 2]}}})", "aggregate.grid.latedges");
  rejects(R"({"model": {"prior": {"beta_sig": 1.0}}})", "model.prior.beta_sig");
  rejects(R"({"model": {"link": {"eta": 1.0}}})", "model.link.eta");
  rejects(R"({"aggregate": {"columns": {"separator": ";"}}})", "aggregate.columns.separator");
  rejects(R"({"predictive": {"level": 0.9}})", "predictive.level");
  rejects(R"({"simulate": {"t": 10}})", "simulate.t");
  rejects(R"({"directional": {"sectors": 4}})", "directional.sectors");
}

TEST_CASE("type and range violations are config errors") {
  CHECK_THROWS_AS(parse_run_config("[1,2]"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{bad"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": "one"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"output_dir": ""})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"pipeline": "three-step"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"family": "poisson"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"candidates": []}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"candidates": "some"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"ar_lags": [0]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"candidate_lag": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"level": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"delta": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"prior": {"tau_scale": 0.0}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"link": {"eta_min": 11.0}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"num_samples": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"num_chains": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"target_accept": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"max_divergence_rate": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"predictive": {"q": 1.2}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"predictive": {"oracle_draws": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"predictive": {"start": "2018-13-01"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"predictive": {"start": 17532}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"directional": {"n_sectors": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"aggregate": {"anchor_weekday": 7}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"aggregate": {"val_weeks": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"aggregate": {"week_origin": "Feb 23"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"aggregate": {"columns": {"delimiter": "ab"}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"aggregate": {"columns": {"format": "xlsx"}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"simulate": {"t_train": 2000}})"), ConfigError);
}

TEST_CASE("config hash ignores formatting but tracks values") {
  const std::string a = R"({"seed": 9, "model": {"target": "x"}})";
  const std::string b = "{\n  \"model\": {\"target\": \"x\"},\n  \"seed\": 9\n}";
  const std::string c = R"({"seed": 10, "model": {"target": "x"}})";
  CHECK(parse_run_config(a).config_hash == parse_run_config(b).config_hash);
  CHECK(parse_run_config(a).config_hash != parse_run_config(c).config_hash);
}

TEST_CASE("output root environment override applies to relative paths only") {
  RunConfig cfg;
  cfg.output_dir = "runs/x";
  unsetenv("TAILWATCH_OUTPUT_ROOT");
  CHECK(resolve_output_dir(cfg) == "runs/x");
  setenv("TAILWATCH_OUTPUT_ROOT", "/data/root", 1);
  CHECK(resolve_output_dir(cfg) == "/data/root/runs/x");
  cfg.output_dir = "/abs/runs";
  CHECK(resolve_output_dir(cfg) == "/abs/runs");
  unsetenv("TAILWATCH_OUTPUT_ROOT");
}

// --- end-to-end subcommand runs --------------------------------------------

TEST_CASE("help and argument errors") {
  const CliResult help = invoke({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("Subcommands") != std::string::npos);
  CHECK(invoke({"frobnicate"}).code == exit_code::config);
  CHECK(invoke({"fit"}).code == exit_code::config);  // missing --config
  CHECK(invoke({"fit", "-c", "/nonexistent/cfg.json"}).code == exit_code::io);
}

TEST_CASE("simulate, fit, forecast, score, direction on the synthetic panel") {
  const TempDir tmp("cli_sim");
  const std::string out_dir = tmp.file("out");
  const std::string cfg_path = tmp.file("cfg.json");
  nlohmann::json cfg = {
      {"seed", 11},
      {"output_dir", out_dir},
      {"simulate",
       {{"t_total", 140}, {"t_train", 115}, {"burn_in", 10}, {"n_noise", 6}}},
      {"panel",
       {{"csv", out_dir + "/panel.csv"}, {"manifest", out_dir + "/panel_manifest.json"}}},
      {"model", {{"target", "dense"}, {"pipeline", "two-step"}, {"delta", 0.1}}},
      {"sampler", {{"num_warmup", 250}, {"num_samples", 300}, {"num_chains", 2}}},
      {"predictive", {{"oracle_draws", 1500}, {"truth", out_dir + "/truth.json"}}}};
  spit(cfg_path, cfg.dump(2));

  // simulate: panel + manifest + truth, with provenance embedded.
  const CliResult sim = invoke({"simulate", "-c", cfg_path});
  CAPTURE(sim.err);
  REQUIRE(sim.code == exit_code::ok);
  CHECK(sim.out.find("simulated 8 series x 130 weeks (train 105, val 0, test 25)") !=
        std::string::npos);
  const CountPanel panel = read_panel(out_dir + "/panel.csv", out_dir + "/panel_manifest.json");
  CHECK(panel.n_series() == 8);
  CHECK(panel.n_weeks() == 130);
  CHECK(panel.n_train == 105);
  REQUIRE(panel.find_series("dense").has_value());
  REQUIRE(panel.find_series("noise6").has_value());

  const std::string expected_hash = parse_run_config(slurp(cfg_path)).config_hash;
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out_dir + "/panel_manifest.json"));
  CHECK(manifest.at("config_hash") == expected_hash);
  CHECK(manifest.at("seed") == 11);
  CHECK(manifest.at("sim_burn_in") == 10);

  // The truth record regenerates the panel exactly (burn-in rows dropped).
  const DgpConfig truth = truth_from_json(slurp(out_dir + "/truth.json"));
  CHECK(truth.seed == 11);
  const SimPanel regen = generate(truth);
  bool counts_match = true;
  for (int t = 0; t < panel.n_weeks() && counts_match; ++t) {
    counts_match = panel.counts(0, t) == regen.dense[t + truth.burn_in] &&
                   panel.counts(1, t) == regen.sparse[t + truth.burn_in];
  }
  CHECK(counts_match);
  CHECK(manifest.at("sparse_train_zero_fraction").get<double>() ==
        doctest::Approx(regen.sparse_train_zero_fraction).epsilon(1e-12));

  // fit: two-step artifacts under models/<target>.
  const CliResult fit = invoke({"fit", "-c", cfg_path});
  CAPTURE(fit.err);
  REQUIRE(fit.code == exit_code::ok);
  CHECK(fit.out.find("pipeline two-step") != std::string::npos);
  const std::string mdir = out_dir + "/models/dense";
  const ModelArtifact step2 = read_model(mdir + "/step2.json");
  CHECK(step2.stage == "step2");
  CHECK(step2.target == "dense");
  CHECK(step2.config_hash == expected_hash);
  CHECK(step2.seed == 11);
  CHECK(step2.fit.samples.chains.size() == 2);
  const ScreenResult screen = screen_from_json(slurp(mdir + "/screen.json"));
  CHECK(screen.delta == 0.1);
  const nlohmann::json sj = nlohmann::json::parse(slurp(mdir + "/screen.json"));
  CHECK(sj.at("candidate_labels").size() == 7);
  CHECK(sj.at("active_labels").size() == screen.entries.size());
  CHECK(slurp(mdir + "/summary.csv").find("mu.b.intercept") != std::string::npos);

  // forecast over the 25-week test split.
  const CliResult fc = invoke({"forecast", "-c", cfg_path});
  CAPTURE(fc.err);
  REQUIRE(fc.code == exit_code::ok);
  const std::string rdir = out_dir + "/reports/dense";
  const std::string forecast_text = slurp(rdir + "/forecast.csv");
  CHECK(forecast_text.find("# config=" + expected_hash + " seed=11") != std::string::npos);
  CHECK(forecast_text.find("series,week,observed,median,lower95,upper95,upper_q975,flag,"
                           "tail_score") != std::string::npos);
  int data_lines = 0;
  for (char ch : forecast_text)
    if (ch == '\n') ++data_lines;
  CHECK(data_lines == 2 + 25);  // comment + header + 25 weeks
  const nlohmann::json metrics = nlohmann::json::parse(slurp(rdir + "/metrics.json"));
  CHECK(metrics.at("config_hash") == expected_hash);
  CHECK(metrics.at("seed") == 11);
  CHECK(metrics.at("n_weeks") == 25);

  // score (model mode): same predictive streams, so rows match the forecast.
  const CliResult sc = invoke({"score", "-c", cfg_path});
  CAPTURE(sc.err);
  REQUIRE(sc.code == exit_code::ok);
  const std::string score_text = slurp(rdir + "/score.csv");
  CHECK(score_text == forecast_text);

  // score --oracle: draws under the generating parameters.
  const CliResult oracle = invoke({"score", "-c", cfg_path, "--oracle"});
  CAPTURE(oracle.err);
  REQUIRE(oracle.code == exit_code::ok);
  const std::string oracle_text = slurp(rdir + "/oracle_score.csv");
  CHECK(oracle_text.find("series,week,observed,median") != std::string::npos);
  const nlohmann::json om = nlohmann::json::parse(slurp(rdir + "/oracle_metrics.json"));
  CHECK(om.at("n_weeks") == 25);
  CHECK(om.at("exceedances").get<int>() <= 25);

  // Reruns are byte-identical, stdout included.
  const std::string first_step2 = slurp(mdir + "/step2.json");
  const std::string first_draws = slurp(mdir + "/step2_draws.bin");
  const CliResult fit2 = invoke({"fit", "-c", cfg_path});
  REQUIRE(fit2.code == exit_code::ok);
  CHECK(fit2.out == fit.out);
  CHECK(slurp(mdir + "/step2.json") == first_step2);
  CHECK(slurp(mdir + "/step2_draws.bin") == first_draws);
  const CliResult fc2 = invoke({"forecast", "-c", cfg_path});
  REQUIRE(fc2.code == exit_code::ok);
  CHECK(fc2.out == fc.out);
  CHECK(slurp(rdir + "/forecast.csv") == forecast_text);

  // A different seed changes the outputs and is recorded in them.
  const CliResult fit_seed = invoke({"fit", "-c", cfg_path, "--seed", "12"});
  REQUIRE(fit_seed.code == exit_code::ok);
  CHECK(slurp(mdir + "/step2.json") != first_step2);
  CHECK(read_model(mdir + "/step2.json").seed == 12);
  // Restore the original artifacts for the checks below.
  REQUIRE(invoke({"fit", "-c", cfg_path}).code == exit_code::ok);

  // direction: the synthetic panel has no centroids at all.
  const CliResult dir = invoke({"direction", "-c", cfg_path});
  CHECK(dir.code == exit_code::data);
  CHECK(dir.err.find("centroid") != std::string::npos);

  // Unknown target and bad panel paths map to the data / io codes.
  CHECK(invoke({"fit", "-c", cfg_path, "--target", "missing"}).code == exit_code::data);
  nlohmann::json broken = cfg;
  broken["panel"]["csv"] = out_dir + "/absent.csv";
  const std::string broken_path = tmp.file("broken.json");
  spit(broken_path, broken.dump());
  CHECK(invoke({"fit", "-c", broken_path}).code == exit_code::io);

  // The run log exists and records the commands; byte-identical reruns above
  // already prove the data outputs carry no wall-clock content.
  const std::string log_text = slurp(out_dir + "/run.log");
  CHECK(log_text.find(" simulate config=") != std::string::npos);
  CHECK(log_text.find(" fit config=") != std::string::npos);
  CHECK(log_text.find(" forecast config=") != std::string::npos);
}

TEST_CASE("evaluation window overrides and failure modes") {
  const TempDir tmp("cli_window");
  const std::string out_dir = tmp.file("out");
  nlohmann::json cfg = {
      {"seed", 5},
      {"output_dir", out_dir},
      {"simulate", {{"t_total", 120}, {"t_train", 100}, {"burn_in", 10}, {"n_noise", 6}}},
      {"panel",
       {{"csv", out_dir + "/panel.csv"}, {"manifest", out_dir + "/panel_manifest.json"}}},
      {"model", {{"target", "dense"}, {"pipeline", "ar2"}}},
      {"sampler", {{"num_warmup", 200}, {"num_samples", 250}, {"num_chains", 1}}}};
  const std::string cfg_path = tmp.file("cfg.json");
  spit(cfg_path, cfg.dump());
  REQUIRE(invoke({"simulate", "-c", cfg_path}).code == exit_code::ok);
  REQUIRE(invoke({"fit", "-c", cfg_path}).code == exit_code::ok);

  // Panel weeks: origin 2015-02-23, 110 weeks, train 90, test [90, 110).
  const CountPanel panel = read_panel(out_dir + "/panel.csv", out_dir + "/panel_manifest.json");
  REQUIRE(panel.n_weeks() == 110);
  REQUIRE(panel.n_train == 90);
  const auto week_date = [&](int w) { return format_date_iso(panel.week_start(w)); };

  // Explicit window inside the panel: 5 evaluation weeks.
  cfg["predictive"] = {{"start", week_date(100)}, {"end", week_date(105)}};
  spit(cfg_path, cfg.dump());
  const CliResult fc = invoke({"forecast", "-c", cfg_path});
  CAPTURE(fc.err);
  REQUIRE(fc.code == exit_code::ok);
  CHECK(fc.out.find("5 evaluation weeks") != std::string::npos);
  int rows = 0;
  for (char ch : slurp(out_dir + "/reports/dense/forecast.csv"))
    if (ch == '\n') ++rows;
  CHECK(rows == 2 + 5);

  // Start date off the weekly lattice -> config error.
  cfg["predictive"] = {{"start", "2017-01-24"}};  // a Tuesday
  spit(cfg_path, cfg.dump());
  CHECK(invoke({"forecast", "-c", cfg_path}).code == exit_code::config);

  // Window past the panel end -> data error (no covariates).
  cfg["predictive"] = {{"start", week_date(100)}, {"end", week_date(130)}};
  spit(cfg_path, cfg.dump());
  CHECK(invoke({"forecast", "-c", cfg_path}).code == exit_code::data);

  // Empty window -> data error.
  cfg["predictive"] = {{"start", week_date(100)}, {"end", week_date(100)}};
  spit(cfg_path, cfg.dump());
  CHECK(invoke({"forecast", "-c", cfg_path}).code == exit_code::data);

  // Oracle scoring without a truth path -> config error; with a truth record
  // from a different seed -> data error (panel mismatch).
  cfg["predictive"] = {{"oracle_draws", 500}};
  spit(cfg_path, cfg.dump());
  CHECK(invoke({"score", "-c", cfg_path, "--oracle"}).code == exit_code::config);
  DgpConfig other = truth_from_json(slurp(out_dir + "/truth.json"));
  other.seed = 999;
  spit(tmp.file("other_truth.json"), truth_to_json(other));
  cfg["predictive"] =
      nlohmann::json{{"oracle_draws", 500}, {"truth", tmp.file("other_truth.json")}};
  spit(cfg_path, cfg.dump());
  CHECK(invoke({"score", "-c", cfg_path, "--oracle"}).code == exit_code::data);
}

TEST_CASE("divergence bound: artifacts written, sampler exit code") {
  const TempDir tmp("cli_div");
  const std::string out_dir = tmp.file("out");
  nlohmann::json cfg = {
      {"seed", 3},
      {"output_dir", out_dir},
      {"simulate", {{"t_total", 80}, {"t_train", 70}, {"burn_in", 10}, {"n_noise", 6}}},
      {"panel",
       {{"csv", out_dir + "/panel.csv"}, {"manifest", out_dir + "/panel_manifest.json"}}},
      {"model", {{"target", "dense"}, {"pipeline", "ar2"}}},
      // An absurdly tight divergence threshold marks essentially every
      // trajectory divergent, which must trip the configured bound.
      {"sampler",
       {{"num_warmup", 150},
        {"num_samples", 200},
        {"num_chains", 1},
        {"divergence_threshold", 1e-12},
        {"max_divergence_rate", 0.05}}}};
  const std::string cfg_path = tmp.file("cfg.json");
  spit(cfg_path, cfg.dump());
  REQUIRE(invoke({"simulate", "-c", cfg_path}).code == exit_code::ok);
  const CliResult fit = invoke({"fit", "-c", cfg_path});
  CHECK(fit.code == exit_code::sampler);
  CHECK(fit.err.find("divergence rate") != std::string::npos);
  // The artifacts were still written for post-mortem inspection.
  CHECK(std::filesystem::exists(out_dir + "/models/dense/model.json"));
  CHECK(std::filesystem::exists(out_dir + "/models/dense/model_draws.bin"));
  CHECK(std::filesystem::exists(out_dir + "/models/dense/summary.csv"));
}

TEST_CASE("aggregate + gridded fit + forecast + direction end to end") {
  const TempDir tmp("cli_grid");
  const std::string out_dir = tmp.file("out");

  // Two active cells on the default grid: the target at (32, 35) ISR/19 and a
  // geographically distinct source at (42, 45) RUS/19, 48 Mondays of data with
  // deterministic (and mostly nonzero) weekly counts, plus rows exercising
  // every drop reason and one malformed row.
  std::vector<EventRecord> records;
  const std::int64_t origin = default_week_origin();
  for (int w = 0; w < 48; ++w) {
    const std::int64_t day = origin + 7 * w;
    const int a_count = 1 + (w * 3) % 5;
    const int b_count = 1 + (w * 5) % 7;
    for (int i = 0; i < a_count; ++i) records.push_back({day, 32.1, 35.4, "ISR", "19"});
    for (int i = 0; i < b_count; ++i) records.push_back({day + 2, 42.3, 45.1, "RUS", "19"});
  }
  records.push_back({origin + 7, 10.0, 35.0, "ISR", "19"});   // outside grid
  records.push_back({origin - 70, 32.1, 35.4, "ISR", "19"});  // before origin
  records.push_back({origin + 7, 32.1, 35.4, "FRA", "19"});   // actor filtered
  records.push_back({origin + 7, 32.1, 35.4, "ISR", "01"});   // code filtered
  const std::string events_path = tmp.file("events.csv");
  write_event_records(records, events_path, EventColumnMap{});
  {
    std::ofstream f(events_path, std::ios::app);
    f << "not-a-date,32.1,35.4,ISR,19\n";
  }

  const std::string target = "lat32_lon35/ISR/19";
  const std::string source = "lat42_lon45/RUS/19";
  nlohmann::json cfg = {
      {"seed", 21},
      {"output_dir", out_dir},
      {"aggregate",
       {{"events", events_path},
        {"week_origin", format_date_iso(origin)},
        {"train_end", format_date_iso(origin + 7 * 39)},
        {"val_weeks", 0}}},
      {"panel",
       {{"csv", out_dir + "/panel.csv"}, {"manifest", out_dir + "/panel_manifest.json"}}},
      {"model",
       {{"target", target},
        {"pipeline", "full-glm"},
        {"candidates", {source}},
        {"ar_lags", {1}},
        {"family", "nb2"}}},
      {"sampler", {{"num_warmup", 250}, {"num_samples", 300}, {"num_chains", 1}}},
      {"directional", {{"n_sectors", 16}}}};
  const std::string cfg_path = tmp.file("cfg.json");
  spit(cfg_path, cfg.dump());

  const CliResult agg = invoke({"aggregate", "-c", cfg_path});
  CAPTURE(agg.err);
  REQUIRE(agg.code == exit_code::ok);
  CHECK(agg.out.find("1 rows rejected") != std::string::npos);
  CHECK(agg.out.find("dropped outside_grid: 1") != std::string::npos);
  CHECK(agg.out.find("dropped before_origin: 1") != std::string::npos);
  CHECK(agg.out.find("dropped actor_filtered: 1") != std::string::npos);
  CHECK(agg.out.find("dropped code_filtered: 1") != std::string::npos);
  CHECK(std::filesystem::exists(out_dir + "/rejected_rows.csv"));

  const CountPanel panel = read_panel(out_dir + "/panel.csv", out_dir + "/panel_manifest.json");
  CHECK(panel.n_series() == 1120);
  CHECK(panel.n_weeks() == 48);
  CHECK(panel.n_train == 40);
  REQUIRE(panel.find_series(target).has_value());
  const Eigen::VectorXi tc = panel.series_counts(*panel.find_series(target), {0, 48});
  CHECK(tc[0] == 1);       // week 0: 1 + 0
  CHECK(tc[1] == 4);       // week 1: 1 + 3
  CHECK(tc.minCoeff() >= 1);

  const CliResult fit = invoke({"fit", "-c", cfg_path});
  CAPTURE(fit.err);
  REQUIRE(fit.code == exit_code::ok);
  const CliResult fc = invoke({"forecast", "-c", cfg_path});
  CAPTURE(fc.err);
  REQUIRE(fc.code == exit_code::ok);
  CHECK(fc.out.find("8 evaluation weeks") != std::string::npos);

  // direction: exactly one geographic source, fixed geometry.
  const CliResult dir = invoke({"direction", "-c", cfg_path});
  CAPTURE(dir.err);
  REQUIRE(dir.code == exit_code::ok);
  CHECK(dir.out.find("1 geographic sources") != std::string::npos);
  const std::string rdir = out_dir + "/reports/" + "lat32_lon35_ISR_19";
  const nlohmann::json geo = nlohmann::json::parse(slurp(rdir + "/bearing_field.geojson"));
  CHECK(geo.at("type") == "FeatureCollection");
  REQUIRE(geo.at("features").size() == 1);
  const nlohmann::json& feat = geo.at("features").at(0);
  CHECK(feat.at("properties").at("label") == source);
  // Source centroid (42.5? no: lattice) -> LineString from source to target.
  const auto& coords = feat.at("geometry").at("coordinates");
  CHECK(coords.at(0).at(0).get<double>() == 45.0);  // lon first
  CHECK(coords.at(0).at(1).get<double>() == 42.0);
  CHECK(coords.at(1).at(0).get<double>() == 35.0);
  CHECK(coords.at(1).at(1).get<double>() == 32.0);
  CHECK(geo.at("config_hash") == parse_run_config(slurp(cfg_path)).config_hash);

  // Rose bins: a single edge lands in exactly one sector.
  const std::string rose = slurp(rdir + "/rose.csv");
  int rose_hits = 0;
  std::istringstream rs(rose);
  std::string line;
  while (std::getline(rs, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("sector", 0) == 0) continue;
    const auto last_comma = line.rfind(',');
    const auto prev_comma = line.rfind(',', last_comma - 1);
    const int count = std::stoi(line.substr(prev_comma + 1, last_comma - prev_comma - 1));
    rose_hits += count;
  }
  CHECK(rose_hits == 1);

  // omega_r has one row per posterior draw; with one source r == 1 always.
  const std::string omega = slurp(rdir + "/omega_r.csv");
  int omega_rows = 0;
  std::istringstream os(omega);
  bool r_all_one = true;
  while (std::getline(os, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("draw", 0) == 0) continue;
    ++omega_rows;
    const auto last_comma = line.rfind(',');
    r_all_one = r_all_one && line.substr(last_comma + 1) == "1";
  }
  CHECK(omega_rows == 300);
  CHECK(r_all_one);

  // sources_ci lists the source's coefficient row.
  const std::string ci = slurp(rdir + "/sources_ci.csv");
  CHECK(ci.find("mu.b." + source) != std::string::npos);

  // ar2 fit of the same target -> no geographic sources -> empty exports.
  nlohmann::json cfg_ar2 = cfg;
  cfg_ar2["model"] = {{"target", target}, {"pipeline", "ar2"}, {"family", "nb2"},
                      {"ar_lags", {1}}};
  cfg_ar2["output_dir"] = tmp.file("out_ar2");
  cfg_ar2["panel"] = cfg["panel"];
  const std::string cfg_ar2_path = tmp.file("cfg_ar2.json");
  spit(cfg_ar2_path, cfg_ar2.dump());
  REQUIRE(invoke({"fit", "-c", cfg_ar2_path}).code == exit_code::ok);
  const CliResult dir2 = invoke({"direction", "-c", cfg_ar2_path});
  CAPTURE(dir2.err);
  REQUIRE(dir2.code == exit_code::ok);
  CHECK(dir2.out.find("no geographic sources") != std::string::npos);
  const nlohmann::json geo2 = nlohmann::json::parse(
      slurp(tmp.file("out_ar2") + "/reports/lat32_lon35_ISR_19/bearing_field.geojson"));
  CHECK(geo2.at("features").empty());

  // Aggregate rerun is byte-identical.
  const std::string first_csv = slurp(out_dir + "/panel.csv");
  const std::string first_manifest = slurp(out_dir + "/panel_manifest.json");
  REQUIRE(invoke({"aggregate", "-c", cfg_path}).code == exit_code::ok);
  CHECK(slurp(out_dir + "/panel.csv") == first_csv);
  CHECK(slurp(out_dir + "/panel_manifest.json") == first_manifest);
}

}  // TEST_SUITE
