#include "tailwatch/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tailwatch/errors.hpp"
#include "tailwatch/mathutil.hpp"
#include "tailwatch/panel.hpp"

namespace tailwatch {

namespace {

constexpr char kDrawsMagic[8] = {'T', 'W', 'D', 'R', 'A', 'W', 'S', '1'};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t take_u64(const std::string& bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

std::string encode_draws(const std::vector<Eigen::MatrixXd>& chains) {
  std::string out(kDrawsMagic, sizeof(kDrawsMagic));
  append_u64(out, chains.size());
  for (const Eigen::MatrixXd& m : chains) {
    append_u64(out, static_cast<std::uint64_t>(m.rows()));
    append_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        char raw[8];
        std::memcpy(raw, &v, 8);
        out.append(raw, 8);
      }
    }
  }
  append_u64(out, fnv1a64(out));
  return out;
}

std::vector<Eigen::MatrixXd> decode_draws(const std::string& bytes, const std::string& what) {
  const auto fail = [&](const std::string& why) { throw DataError(what + ": " + why); };
  if (bytes.size() < sizeof(kDrawsMagic) + 16) fail("truncated draws payload");
  if (std::memcmp(bytes.data(), kDrawsMagic, sizeof(kDrawsMagic)) != 0) {
    fail("bad magic; not a draws file");
  }
  const std::uint64_t stored_hash = take_u64(bytes, bytes.size() - 8);
  if (stored_hash != fnv1a64(std::string_view(bytes.data(), bytes.size() - 8))) {
    fail("content hash mismatch; file is corrupt");
  }
  std::size_t at = sizeof(kDrawsMagic);
  const std::uint64_t n_chains = take_u64(bytes, at);
  at += 8;
  std::vector<Eigen::MatrixXd> chains;
  for (std::uint64_t k = 0; k < n_chains; ++k) {
    if (at + 16 > bytes.size() - 8) fail("truncated chain header");
    const std::uint64_t rows = take_u64(bytes, at);
    const std::uint64_t cols = take_u64(bytes, at + 8);
    at += 16;
    const std::uint64_t need = rows * cols * 8;
    if (at + need > bytes.size() - 8) fail("truncated chain payload");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v = 0.0;
        std::memcpy(&v, bytes.data() + at, 8);
        at += 8;
        m(r, c) = v;
      }
    }
    chains.push_back(std::move(m));
  }
  if (at != bytes.size() - 8) fail("trailing bytes after the last chain");
  return chains;
}

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + " must be an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const nlohmann::json& row = j.at(r);
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError(what + " rows have inconsistent lengths");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

nlohmann::ordered_json vector_json(const Eigen::VectorXd& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

// Column name for the flag quantile: digits of q after "0." (0.975 -> "975").
std::string quantile_column(double q) {
  std::string text = format_double(q);
  if (text.rfind("0.", 0) == 0) text = text.substr(2);
  text.erase(std::remove(text.begin(), text.end(), '.'), text.end());
  return "upper_q" + text;
}

void append_comment(std::string& out, const std::string& comment) {
  if (comment.empty()) return;
  std::string clean = comment;
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  std::replace(clean.begin(), clean.end(), '\r', ' ');
  out += "# " + clean + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Text files and fingerprints.

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::string fingerprint_hex(std::string_view text) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

// ---------------------------------------------------------------------------
// Draw sidecar.

void write_draws(const std::string& path, const std::vector<Eigen::MatrixXd>& chains) {
  write_text_file(path, encode_draws(chains));
}

std::vector<Eigen::MatrixXd> read_draws(const std::string& path) {
  return decode_draws(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Model artifact.

void write_model(const ModelArtifact& artifact, const std::string& base_path) {
  const FitResult& fit = artifact.fit;
  const std::string draws_name =
      std::filesystem::path(base_path).filename().string() + "_draws.bin";
  const std::string draws_bytes = encode_draws(fit.samples.chains);

  nlohmann::ordered_json j;
  j["format"] = "tailwatch-model";
  j["version"] = 1;
  j["stage"] = artifact.stage;
  j["target"] = artifact.target;
  j["config_hash"] = artifact.config_hash;
  j["seed"] = artifact.seed;
  j["family"] = family_name(fit.family);
  j["layout"] = {{"p_mean", fit.layout.p_mean},
                 {"q_mean", fit.layout.q_mean},
                 {"gate", fit.layout.gate},
                 {"p_gate", fit.layout.p_gate},
                 {"q_gate", fit.layout.q_gate}};
  j["param_names"] = fit.param_names;

  nlohmann::ordered_json d;
  d["fixed_names"] = fit.design.fixed_names;
  d["shrink_names"] = fit.design.shrink_names;
  d["shrink_source"] = fit.design.shrink_source;
  d["dropped_candidates"] = fit.design.dropped_candidates;
  d["start_row"] = fit.design.start_row;
  d["y"] = std::vector<long>(fit.design.y.data(), fit.design.y.data() + fit.design.y.size());
  d["fixed"] = matrix_json(fit.design.fixed);
  d["shrink"] = matrix_json(fit.design.shrink);
  j["design"] = std::move(d);

  j["prior"] = {{"beta_sigma", artifact.prior.beta_sigma},
                {"alpha_shape", artifact.prior.alpha_shape},
                {"alpha_rate", artifact.prior.alpha_rate},
                {"tpbn_u", artifact.prior.tpbn_u},
                {"tpbn_a", artifact.prior.tpbn_a},
                {"tau_scale", artifact.prior.tau_scale}};
  j["link"] = {{"eta_min", artifact.link.eta_min},
               {"eta_max", artifact.link.eta_max},
               {"eps", artifact.link.eps}};
  j["sampler"] = {{"num_warmup", artifact.sampler.num_warmup},
                  {"num_samples", artifact.sampler.num_samples},
                  {"num_chains", artifact.sampler.num_chains},
                  {"target_accept", artifact.sampler.target_accept},
                  {"max_tree_depth", artifact.sampler.max_tree_depth},
                  {"init_jitter", artifact.sampler.init_jitter},
                  {"divergence_threshold", artifact.sampler.divergence_threshold},
                  {"seed", artifact.sampler.seed},
                  {"stream_label", artifact.sampler.stream_label},
                  {"adapt_init_buffer", artifact.sampler.adapt_init_buffer},
                  {"adapt_term_buffer", artifact.sampler.adapt_term_buffer},
                  {"adapt_base_window", artifact.sampler.adapt_base_window}};

  nlohmann::ordered_json diag;
  diag["ess"] = vector_json(fit.samples.ess);
  diag["rhat"] = vector_json(fit.samples.rhat);
  diag["divergence_rate"] = fit.samples.divergence_rate();
  diag["chains"] = nlohmann::ordered_json::array();
  for (const ChainStats& s : fit.samples.stats) {
    diag["chains"].push_back({{"divergences", s.divergences},
                              {"max_depth_hits", s.max_depth_hits},
                              {"mean_accept", s.mean_accept},
                              {"step_size", s.step_size},
                              {"inv_mass", vector_json(s.inv_mass)}});
  }
  j["diagnostics"] = std::move(diag);
  j["draws_file"] = draws_name;
  j["draws_hash"] = fingerprint_hex(draws_bytes);

  write_text_file((std::filesystem::path(base_path).parent_path() / draws_name).string(),
                  draws_bytes);
  write_text_file(base_path + ".json", j.dump(2) + "\n");
}

ModelArtifact read_model(const std::string& json_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(json_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(json_path + ": invalid JSON: " + e.what());
  }
  const auto fail = [&](const std::string& why) { throw DataError(json_path + ": " + why); };
  try {
    if (j.at("format") != "tailwatch-model") fail("not a model artifact");
    if (j.at("version") != 1) fail("unsupported model version");

    ModelArtifact a;
    a.stage = j.at("stage").get<std::string>();
    a.target = j.at("target").get<std::string>();
    a.config_hash = j.at("config_hash").get<std::string>();
    a.seed = j.at("seed").get<std::uint64_t>();

    FitResult& fit = a.fit;
    fit.family = family_from_name(j.at("family").get<std::string>());
    const nlohmann::json& lay = j.at("layout");
    fit.layout.p_mean = lay.at("p_mean").get<int>();
    fit.layout.q_mean = lay.at("q_mean").get<int>();
    fit.layout.gate = lay.at("gate").get<bool>();
    fit.layout.p_gate = lay.at("p_gate").get<int>();
    fit.layout.q_gate = lay.at("q_gate").get<int>();
    fit.param_names = j.at("param_names").get<std::vector<std::string>>();

    const nlohmann::json& d = j.at("design");
    fit.design.fixed_names = d.at("fixed_names").get<std::vector<std::string>>();
    fit.design.shrink_names = d.at("shrink_names").get<std::vector<std::string>>();
    fit.design.shrink_source = d.at("shrink_source").get<std::vector<int>>();
    fit.design.dropped_candidates = d.at("dropped_candidates").get<std::vector<int>>();
    fit.design.start_row = d.at("start_row").get<int>();
    const std::vector<long> y = d.at("y").get<std::vector<long>>();
    fit.design.y = Eigen::Map<const Eigen::VectorX<long>>(y.data(), y.size()).cast<int>();
    fit.design.fixed = matrix_from_json(d.at("fixed"), "design.fixed");
    fit.design.shrink = matrix_from_json(d.at("shrink"), "design.shrink");
    if (fit.design.shrink.size() == 0) {
      fit.design.shrink.resize(fit.design.fixed.rows(), 0);
    }

    const nlohmann::json& pr = j.at("prior");
    a.prior.beta_sigma = pr.at("beta_sigma").get<double>();
    a.prior.alpha_shape = pr.at("alpha_shape").get<double>();
    a.prior.alpha_rate = pr.at("alpha_rate").get<double>();
    a.prior.tpbn_u = pr.at("tpbn_u").get<double>();
    a.prior.tpbn_a = pr.at("tpbn_a").get<double>();
    a.prior.tau_scale = pr.at("tau_scale").get<double>();
    const nlohmann::json& lk = j.at("link");
    a.link.eta_min = lk.at("eta_min").get<double>();
    a.link.eta_max = lk.at("eta_max").get<double>();
    a.link.eps = lk.at("eps").get<double>();
    const nlohmann::json& sm = j.at("sampler");
    a.sampler.num_warmup = sm.at("num_warmup").get<int>();
    a.sampler.num_samples = sm.at("num_samples").get<int>();
    a.sampler.num_chains = sm.at("num_chains").get<int>();
    a.sampler.target_accept = sm.at("target_accept").get<double>();
    a.sampler.max_tree_depth = sm.at("max_tree_depth").get<int>();
    a.sampler.init_jitter = sm.at("init_jitter").get<double>();
    a.sampler.divergence_threshold = sm.at("divergence_threshold").get<double>();
    a.sampler.seed = sm.at("seed").get<std::uint64_t>();
    a.sampler.stream_label = sm.at("stream_label").get<std::string>();
    a.sampler.adapt_init_buffer = sm.at("adapt_init_buffer").get<int>();
    a.sampler.adapt_term_buffer = sm.at("adapt_term_buffer").get<int>();
    a.sampler.adapt_base_window = sm.at("adapt_base_window").get<int>();

    const nlohmann::json& diag = j.at("diagnostics");
    fit.samples.ess = vector_from_json(diag.at("ess"), "diagnostics.ess");
    fit.samples.rhat = vector_from_json(diag.at("rhat"), "diagnostics.rhat");
    for (const nlohmann::json& c : diag.at("chains")) {
      ChainStats s;
      s.divergences = c.at("divergences").get<long>();
      s.max_depth_hits = c.at("max_depth_hits").get<long>();
      s.mean_accept = c.at("mean_accept").get<double>();
      s.step_size = c.at("step_size").get<double>();
      s.inv_mass = vector_from_json(c.at("inv_mass"), "chain inv_mass");
      fit.samples.stats.push_back(std::move(s));
    }

    const std::string draws_name = j.at("draws_file").get<std::string>();
    const std::string draws_path =
        (std::filesystem::path(json_path).parent_path() / draws_name).string();
    const std::string draws_bytes = read_text_file(draws_path);
    if (fingerprint_hex(draws_bytes) != j.at("draws_hash").get<std::string>()) {
      fail("draw sidecar hash mismatch; files are out of sync");
    }
    fit.samples.chains = decode_draws(draws_bytes, draws_path);

    const int dim = fit.layout.dim();
    if (static_cast<int>(fit.param_names.size()) != dim) {
      fail("param_names length disagrees with the layout");
    }
    if (fit.samples.chains.size() != fit.samples.stats.size()) {
      fail("chain count disagrees between draws and diagnostics");
    }
    for (const Eigen::MatrixXd& m : fit.samples.chains) {
      if (m.cols() != dim) fail("draw matrix width disagrees with the layout");
    }
    if (static_cast<int>(fit.design.fixed_names.size()) != fit.design.fixed.cols()) {
      fail("fixed_names length disagrees with the fixed matrix");
    }
    if (static_cast<int>(fit.design.shrink_names.size()) != fit.design.shrink.cols()) {
      fail("shrink_names length disagrees with the shrink matrix");
    }
    if (fit.design.y.size() != fit.design.fixed.rows()) {
      fail("y length disagrees with the design rows");
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Screening artifact.

std::string screen_to_json(const ScreenResult& screen) {
  nlohmann::ordered_json j;
  j["format"] = "tailwatch-screen";
  j["version"] = 1;
  j["delta"] = screen.delta;
  j["level"] = screen.level;
  j["entries"] = nlohmann::ordered_json::array();
  for (const ActiveEntry& e : screen.entries) {
    j["entries"].push_back({{"candidate", e.candidate},
                            {"from_mean", e.from_mean},
                            {"from_gate", e.from_gate}});
  }
  j["mean_ci"] = matrix_json(screen.mean_ci);
  j["gate_ci"] = matrix_json(screen.gate_ci);
  return j.dump(2) + "\n";
}

ScreenResult screen_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("screen artifact: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "tailwatch-screen") throw DataError("not a screen artifact");
    if (j.at("version") != 1) throw DataError("unsupported screen version");
    ScreenResult s;
    s.delta = j.at("delta").get<double>();
    s.level = j.at("level").get<double>();
    for (const nlohmann::json& e : j.at("entries")) {
      s.entries.push_back({e.at("candidate").get<int>(), e.at("from_mean").get<bool>(),
                           e.at("from_gate").get<bool>()});
    }
    s.mean_ci = matrix_from_json(j.at("mean_ci"), "mean_ci");
    s.gate_ci = matrix_from_json(j.at("gate_ci"), "gate_ci");
    if (s.mean_ci.size() == 0) s.mean_ci.resize(0, 2);
    if (s.gate_ci.size() == 0) s.gate_ci.resize(0, 2);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("screen artifact: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV reports.

std::string forecast_csv(const std::string& series_label, const std::vector<AnomalyRow>& rows,
                         std::int64_t week_origin, double q, const std::string& comment) {
  std::string out;
  append_comment(out, comment);
  out += "series,week,observed,median,lower95,upper95," + quantile_column(q) +
         ",flag,tail_score\n";
  for (const AnomalyRow& r : rows) {
    out += series_label + ',' + format_date_iso(week_origin + 7 * r.week) + ',' +
           std::to_string(r.observed) + ',' + std::to_string(r.median) + ',' +
           std::to_string(r.lower95) + ',' + std::to_string(r.upper95) + ',' +
           std::to_string(r.upper_q) + ',' + (r.flag ? "1" : "0") + ',' +
           format_double(r.tail_score) + "\n";
  }
  return out;
}

std::string coef_summary_csv(const CoefSummary& summary, const std::string& comment) {
  std::string out;
  append_comment(out, comment);
  out += "name,mean,sd,q025,q50,q975,excludes_zero\n";
  for (std::size_t i = 0; i < summary.names.size(); ++i) {
    const Eigen::Index k = static_cast<Eigen::Index>(i);
    const bool excludes = summary.q025[k] > 0.0 || summary.q975[k] < 0.0;
    out += summary.names[i] + ',' + format_double(summary.mean[k]) + ',' +
           format_double(summary.sd[k]) + ',' + format_double(summary.q025[k]) + ',' +
           format_double(summary.q50[k]) + ',' + format_double(summary.q975[k]) + ',' +
           (excludes ? "1" : "0") + "\n";
  }
  return out;
}

std::string rose_csv(const RoseBins& bins, const std::string& comment) {
  std::string out;
  append_comment(out, comment);
  out += "sector,lo_deg,hi_deg,count,weight\n";
  for (int k = 0; k < bins.n_sectors; ++k) {
    out += std::to_string(k) + ',' + format_double(360.0 * k / bins.n_sectors) + ',' +
           format_double(360.0 * (k + 1) / bins.n_sectors) + ',' +
           std::to_string(bins.counts[k]) + ',' + format_double(bins.weights[k]) + "\n";
  }
  return out;
}

std::string omega_r_csv(const BearingSummary& summary, const std::string& comment) {
  std::string out;
  append_comment(out, comment);
  out += "draw,omega_rad,r\n";
  for (Eigen::Index i = 0; i < summary.omega_draws.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(summary.omega_draws[i]) + ',' +
           format_double(summary.r_draws[i]) + "\n";
  }
  return out;
}

std::string metrics_json(const std::string& series_label, const ForecastResult& result,
                         const std::string& config_hash, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["format"] = "tailwatch-metrics";
  j["version"] = 1;
  j["series"] = series_label;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["q"] = result.q;
  j["n_weeks"] = result.rows.size();
  j["exceedances"] = result.exceedances;
  j["tail_T"] = result.tail_T;
  j["mae_raw"] = result.mae.mae_raw;
  j["mae_log"] = result.mae.mae_log;
  return j.dump(2) + "\n";
}

}  // namespace tailwatch
