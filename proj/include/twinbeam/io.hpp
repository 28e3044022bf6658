#pragma once

// File formats: JSON run configs / model files / reports, sparse CSV
// histograms, CSV photon distributions, and tab-separated figure data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "twinbeam/criteria.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/experiment.hpp"
#include "twinbeam/fit.hpp"
#include "twinbeam/histogram.hpp"
#include "twinbeam/reconstruct.hpp"

namespace twinbeam::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write " + path.string());
  out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw validation_error(what + ": " + e.what());
  }
}

namespace detail {

inline double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw validation_error(where + ": missing or non-numeric '" + key + "'");
  return j.at(key).get<double>();
}

inline std::uint64_t count(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<std::int64_t>() < 0)
    throw validation_error(where + ": '" + key + "' must be a nonnegative integer");
  return j.at(key).get<std::uint64_t>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model pieces

inline json to_json(const TwinBeamParams& p) {
  return {{"M_p", p.paired_modes}, {"B_p", p.paired_mean}, {"M_s", p.signal_modes},
          {"B_s", p.signal_mean},  {"M_i", p.idler_modes}, {"B_i", p.idler_mean}};
}

inline TwinBeamParams twin_beam_from_json(const json& j) {
  const std::string w = "twin_beam";
  TwinBeamParams p{detail::number(j, "M_p", w), detail::number(j, "B_p", w), detail::number(j, "M_s", w),
                   detail::number(j, "B_s", w), detail::number(j, "M_i", w), detail::number(j, "B_i", w)};
  p.validate();
  return p;
}

/// Detectors are stored with the total dark rate d; D = d / pixels.
inline json to_json(const DetectorModel& d) {
  return {{"pixels", d.pixels}, {"efficiency", d.efficiency}, {"dark_total", d.dark_total()}};
}

inline DetectorModel detector_from_json(const json& j, const std::string& where, bool need_efficiency = true) {
  if (!j.is_object()) throw validation_error(where + ": expected an object");
  const auto pixels = detail::count(j, "pixels", where);
  const double eff = need_efficiency || j.contains("efficiency") ? detail::number(j, "efficiency", where) : 0.0;
  const double dark = detail::number(j, "dark_total", where);
  twinbeam::detail::require(pixels >= 1, where + ": pixels must be >= 1");
  twinbeam::detail::require(dark >= 0.0, where + ": dark_total must be >= 0");
  try {
    return DetectorModel::from_total_dark(pixels, eff, dark);
  } catch (const validation_error& e) {
    throw validation_error(where + ": " + e.what());
  }
}

inline json to_json(const TheoryModel& m) {
  return {{"twin_beam", to_json(m.twin_beam)},
          {"signal_detector", to_json(m.signal_detector)},
          {"idler_detector", to_json(m.idler_detector)}};
}

inline TheoryModel model_from_json(const json& j) {
  if (!j.contains("twin_beam") || !j.contains("signal_detector") || !j.contains("idler_detector"))
    throw validation_error("model file needs twin_beam, signal_detector and idler_detector");
  return {twin_beam_from_json(j.at("twin_beam")), detector_from_json(j.at("signal_detector"), "signal_detector"),
          detector_from_json(j.at("idler_detector"), "idler_detector")};
}

// ---------------------------------------------------------------------------
// Run configuration

inline json to_json(const ExperimentConfig& c) {
  return {{"twin_beam", to_json(c.twin_beam)},
          {"signal_detector", to_json(c.signal_detector)},
          {"idler_detector", to_json(c.idler_detector)},
          {"runs", c.runs},
          {"seed", c.seed},
          {"max_order", c.max_order},
          {"bootstrap", c.bootstrap}};
}

inline ExperimentConfig config_from_json(const json& j) {
  const TheoryModel m = model_from_json(j);
  ExperimentConfig c;
  c.twin_beam = m.twin_beam;
  c.signal_detector = m.signal_detector;
  c.idler_detector = m.idler_detector;
  c.runs = j.contains("runs") ? detail::count(j, "runs", "config") : 1200000;
  c.seed = j.contains("seed") ? detail::count(j, "seed", "config") : 0;
  c.max_order = j.contains("max_order") ? static_cast<unsigned>(detail::count(j, "max_order", "config")) : 5;
  c.bootstrap = j.contains("bootstrap") ? static_cast<unsigned>(detail::count(j, "bootstrap", "config")) : 1000;
  c.validate();
  return c;
}

inline ExperimentConfig read_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_text(path), path.string()));
}

inline TheoryModel read_model(const std::filesystem::path& path) {
  return model_from_json(parse_json(read_text(path), path.string()));
}

/// Pixel counts and dark rates from a geometry, model or config file;
/// efficiencies, if present, are ignored.
inline DetectorGeometry read_geometry(const std::filesystem::path& path) {
  const json j = parse_json(read_text(path), path.string());
  if (!j.contains("signal_detector") || !j.contains("idler_detector"))
    throw validation_error(path.string() + ": geometry needs signal_detector and idler_detector");
  const auto s = detector_from_json(j.at("signal_detector"), "signal_detector", false);
  const auto i = detector_from_json(j.at("idler_detector"), "idler_detector", false);
  return {s.pixels, i.pixels, s.dark_per_pixel, i.dark_per_pixel};
}

/// A bare detector object, or the idler detector of a model/config file.
inline DetectorModel read_detector(const std::filesystem::path& path) {
  const json j = parse_json(read_text(path), path.string());
  if (j.contains("idler_detector")) return detector_from_json(j.at("idler_detector"), "idler_detector");
  return detector_from_json(j, path.string());
}

/// Fit output: a model file plus a "fit" section, so it feeds `analyze`
/// and `simulate` directly.
inline json to_json(const FitResult& r, const DetectorGeometry& g) {
  json j = to_json(TheoryModel{r.params, r.signal_detector(g), r.idler_detector(g)});
  j["fit"] = {{"log_likelihood_per_run", r.objective_value},
              {"converged", r.converged},
              {"evaluations", r.evaluations}};
  return j;
}

inline FitResult fit_result_from_json(const json& j) {
  const TheoryModel m = model_from_json(j);
  FitResult r;
  r.params = m.twin_beam;
  r.signal_efficiency = m.signal_detector.efficiency;
  r.idler_efficiency = m.idler_detector.efficiency;
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    r.objective_value = detail::number(f, "log_likelihood_per_run", "fit");
    r.converged = f.value("converged", false);
    r.evaluations = f.value("evaluations", std::size_t{0});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Histograms: sparse CSV "c_s,c_i,count", zero cells omitted.

inline std::string histogram_csv(const JointPhotocountHistogram& h) {
  std::ostringstream out;
  out << "c_s,c_i,count\n";
  for (std::size_t s = 0; s < h.signal_extent(); ++s)
    for (std::size_t i = 0; i < h.idler_extent(); ++i)
      if (const auto k = h(s, i)) out << s << ',' << i << ',' << k << '\n';
  return out.str();
}

inline JointPhotocountHistogram parse_histogram_csv(const std::string& text, const std::string& source = "histogram") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw validation_error(source + ":" + std::to_string(lineno) + ": " + why);
  };
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t a = 0;
    while (a < s.size() && (s[a] == ' ' || s[a] == '\t')) ++a;
    return s.substr(a);
  };
  auto parse_uint = [&](const std::string& field, const char* what) -> std::uint64_t {
    const std::string f = trim(field);
    if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos)
      fail(std::string(what) + " '" + f + "' is not a nonnegative integer");
    try {
      return std::stoull(f);
    } catch (const std::exception&) {
      fail(std::string(what) + " '" + f + "' is out of range");
    }
    return 0;
  };

  bool header = false;
  std::vector<std::tuple<std::size_t, std::size_t, std::uint64_t>> cells;
  std::size_t rows = 0, cols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      std::string h = line;
      h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
      if (h != "c_s,c_i,count") fail("expected header 'c_s,c_i,count'");
      header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 3) fail("expected 3 fields, got " + std::to_string(fields.size()));
    const auto s = parse_uint(fields[0], "c_s");
    const auto i = parse_uint(fields[1], "c_i");
    const auto k = parse_uint(fields[2], "count");
    if (s > 100000 || i > 100000) fail("photocount index too large");
    cells.emplace_back(s, i, k);
    rows = std::max<std::size_t>(rows, s + 1);
    cols = std::max<std::size_t>(cols, i + 1);
  }
  if (!header) throw validation_error(source + ": missing header 'c_s,c_i,count'");
  JointPhotocountHistogram h(rows, cols);
  std::vector<bool> seen(rows * cols, false);
  lineno = 0;
  for (const auto& [s, i, k] : cells) {
    ++lineno;
    if (seen[s * cols + i])
      throw validation_error(source + ": duplicate cell (" + std::to_string(s) + "," + std::to_string(i) + ")");
    seen[s * cols + i] = true;
    h.add(s, i, k);
  }
  return h;
}

inline void write_histogram(const std::filesystem::path& path, const JointPhotocountHistogram& h) {
  write_text(path, histogram_csv(h));
}

inline JointPhotocountHistogram read_histogram(const std::filesystem::path& path) {
  return parse_histogram_csv(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Reconstructed distribution: CSV "n,probability" preceded by '#' lines
// carrying the EM diagnostics.

inline std::string distribution_csv(const PhotonDistribution& p, const EmDiagnostics& d, std::size_t cs,
                                    std::uint64_t runs) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# c_s=" << cs << " runs=" << runs << '\n';
  out << "# iterations=" << d.iterations << " converged=" << (d.converged ? "true" : "false")
      << " final_delta=" << d.final_delta
      << " log_likelihood=" << (d.log_likelihood_trace.empty() ? 0.0 : d.log_likelihood_trace.back()) << '\n';
  out << "n,probability\n";
  for (std::size_t n = 0; n <= p.n_max(); ++n) out << n << ',' << p[n] << '\n';
  return out.str();
}

inline PhotonDistribution parse_distribution_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::vector<double> probs;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("n,probability", 0) != 0) throw validation_error("distribution CSV needs header 'n,probability'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw validation_error("malformed distribution row: " + line);
    const auto n = std::stoull(line.substr(0, comma));
    if (n != probs.size()) throw validation_error("distribution rows must be consecutive from n=0");
    const std::string field = line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);  // subnormal values parse, unlike stod
    if (end == field.c_str()) throw validation_error("malformed probability: " + field);
    probs.push_back(v);
  }
  return PhotonDistribution(std::move(probs));
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline json opt(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

inline std::optional<double> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline json variant_json(const std::optional<VariantIdentifiers>& v) {
  if (!v) return nullptr;
  json arr = json::array();
  for (std::size_t k = 0; k < v->values.size(); ++k) {
    json e = {{"value", std::isfinite(v->values[k]) ? json(v->values[k]) : json(nullptr)}};
    if (!v->errors.empty()) e["error"] = k < v->errors.size() && std::isfinite(v->errors[k]) ? json(v->errors[k]) : json(nullptr);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline std::optional<VariantIdentifiers> variant_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  VariantIdentifiers v;
  bool has_errors = false;
  for (const auto& e : j) {
    v.values.push_back(e.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("value").get<double>());
    if (e.contains("error")) {
      has_errors = true;
      v.errors.push_back(e.at("error").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("error").get<double>());
    }
  }
  if (!has_errors) v.errors.clear();
  return v;
}

inline json partition_json(const Partition& p) { return json(p.parts()); }

}  // namespace detail

inline json to_json(const ConditionalReport& r) {
  json ids = json::array();
  for (const auto& s : r.identifiers)
    ids.push_back({{"name", s.name()},
                   {"order", s.order()},
                   {"lambda", detail::partition_json(s.lambda)},
                   {"mu", detail::partition_json(s.mu)},
                   {"definition", s.definition()}});
  json rows = json::array();
  for (const auto& x : r.rows) {
    rows.push_back({{"c_s", x.cs},
                    {"runs", x.runs},
                    {"low_statistics", x.low_statistics},
                    {"f_s", x.signal_fraction},
                    {"f_s_theory", detail::opt(x.signal_theory)},
                    {"mean_counts", detail::opt(x.mean_counts)},
                    {"mean_counts_error", detail::opt(x.mean_counts_error)},
                    {"mean_photons", detail::opt(x.mean_photons)},
                    {"mean_photons_error", detail::opt(x.mean_photons_error)},
                    {"mean_photons_theory", detail::opt(x.mean_photons_theory)},
                    {"fano",
                     {{"counts", detail::opt(x.fano_counts)},
                      {"counts_error", detail::opt(x.fano_counts_error)},
                      {"reconstructed", detail::opt(x.fano_reconstructed)},
                      {"reconstructed_error", detail::opt(x.fano_reconstructed_error)},
                      {"theory", detail::opt(x.fano_theory)}}},
                    {"em", {{"iterations", x.em_iterations}, {"converged", x.em_converged}}},
                    {"identifiers",
                     {{"photocount", detail::variant_json(x.photocount)},
                      {"reconstructed", detail::variant_json(x.reconstructed)},
                      {"theory", detail::variant_json(x.theory)}}}});
  }
  json meta = {{"tool", "twinbeam"},
               {"version", kToolVersion},
               {"seed", r.seed},
               {"total_runs", r.total_runs},
               {"max_order", r.max_order},
               {"bootstrap", r.bootstrap},
               {"bootstrap_em", r.bootstrap_em},
               {"model", r.theory ? to_json(*r.theory) : json(nullptr)}};
  return {{"format", "twinbeam-report"}, {"metadata", meta}, {"identifiers", ids}, {"rows", rows}};
}

inline ConditionalReport report_from_json(const json& j) {
  if (j.value("format", std::string{}) != "twinbeam-report") throw validation_error("not a twinbeam report");
  ConditionalReport r;
  const auto& meta = j.at("metadata");
  r.seed = meta.at("seed").get<std::uint64_t>();
  r.total_runs = meta.at("total_runs").get<std::uint64_t>();
  r.max_order = meta.at("max_order").get<unsigned>();
  r.bootstrap = meta.at("bootstrap").get<unsigned>();
  r.bootstrap_em = meta.at("bootstrap_em").get<unsigned>();
  if (!meta.at("model").is_null()) r.theory = model_from_json(meta.at("model"));
  for (const auto& s : j.at("identifiers"))
    r.identifiers.push_back({Partition(s.at("lambda").get<std::vector<unsigned>>()),
                             Partition(s.at("mu").get<std::vector<unsigned>>())});
  for (const auto& x : j.at("rows")) {
    ConditionalRecord rec;
    rec.cs = x.at("c_s").get<std::size_t>();
    rec.runs = x.at("runs").get<std::uint64_t>();
    rec.low_statistics = x.at("low_statistics").get<bool>();
    rec.signal_fraction = x.at("f_s").get<double>();
    rec.signal_theory = detail::get_opt(x, "f_s_theory");
    rec.mean_counts = detail::get_opt(x, "mean_counts");
    rec.mean_counts_error = detail::get_opt(x, "mean_counts_error");
    rec.mean_photons = detail::get_opt(x, "mean_photons");
    rec.mean_photons_error = detail::get_opt(x, "mean_photons_error");
    rec.mean_photons_theory = detail::get_opt(x, "mean_photons_theory");
    const auto& f = x.at("fano");
    rec.fano_counts = detail::get_opt(f, "counts");
    rec.fano_counts_error = detail::get_opt(f, "counts_error");
    rec.fano_reconstructed = detail::get_opt(f, "reconstructed");
    rec.fano_reconstructed_error = detail::get_opt(f, "reconstructed_error");
    rec.fano_theory = detail::get_opt(f, "theory");
    rec.em_iterations = x.at("em").at("iterations").get<std::size_t>();
    rec.em_converged = x.at("em").at("converged").get<bool>();
    const auto& ids = x.at("identifiers");
    rec.photocount = detail::variant_from_json(ids.at("photocount"));
    rec.reconstructed = detail::variant_from_json(ids.at("reconstructed"));
    rec.theory = detail::variant_from_json(ids.at("theory"));
    r.rows.push_back(std::move(rec));
  }
  return r;
}

inline std::string report_text(const ConditionalReport& r) { return to_json(r).dump(2) + "\n"; }

inline void write_report(const std::filesystem::path& path, const ConditionalReport& r) {
  write_text(path, report_text(r));
}

inline ConditionalReport read_report(const std::filesystem::path& path) {
  const json j = parse_json(read_text(path), path.string());
  try {
    return report_from_json(j);
  } catch (const json::exception& e) {
    throw validation_error(path.string() + ": malformed report: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Figure data

/// File-name-safe form of an identifier name: R_{2,1}^{3,0} -> R_2-1__3-0.
inline std::string identifier_file_stem(const IdentifierSpec& s) {
  std::string out;
  for (char ch : s.name()) {
    if (ch == '{' || ch == '}') continue;
    if (ch == ',') ch = '-';
    if (ch == '^') {
      out += "__";
      continue;
    }
    out += ch;
  }
  return out;
}

namespace detail {

inline std::string cell(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

inline std::optional<double> at(const std::optional<VariantIdentifiers>& v, std::size_t k, bool error) {
  if (!v) return std::nullopt;
  const auto& src = error ? v->errors : v->values;
  if (k >= src.size()) return std::nullopt;
  return src[k];
}

}  // namespace detail

/// Writes fig2a.tsv, fig2b.tsv, fig3.tsv and one fig4_<identifier>.tsv per
/// identifier into `dir`. Returns the written paths.
inline std::vector<std::filesystem::path> write_figure_data(const ConditionalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    write_text(p, text);
    written.push_back(p);
  };
  using detail::cell;
  {
    std::ostringstream o;
    o << "c_s\tmean_counts\tmean_counts_error\tmean_photons\tmean_photons_error\tmean_photons_theory\n";
    for (const auto& x : r.rows)
      o << x.cs << '\t' << cell(x.mean_counts) << '\t' << cell(x.mean_counts_error) << '\t' << cell(x.mean_photons)
        << '\t' << cell(x.mean_photons_error) << '\t' << cell(x.mean_photons_theory) << '\n';
    emit("fig2a.tsv", o.str());
  }
  {
    std::ostringstream o;
    o << "c_s\tfano_counts\tfano_counts_error\tfano_reconstructed\tfano_reconstructed_error\tfano_theory\n";
    for (const auto& x : r.rows)
      o << x.cs << '\t' << cell(x.fano_counts) << '\t' << cell(x.fano_counts_error) << '\t'
        << cell(x.fano_reconstructed) << '\t' << cell(x.fano_reconstructed_error) << '\t' << cell(x.fano_theory)
        << '\n';
    emit("fig2b.tsv", o.str());
  }
  {
    std::ostringstream o;
    o << "c_s\tf_s\tf_s_theory\truns\n";
    for (const auto& x : r.rows)
      o << x.cs << '\t' << cell(x.signal_fraction) << '\t' << cell(x.signal_theory) << '\t' << x.runs << '\n';
    emit("fig3.tsv", o.str());
  }
  for (std::size_t k = 0; k < r.identifiers.size(); ++k) {
    std::ostringstream o;
    o << "# " << r.identifiers[k].name() << '\n';
    o << "c_s\tphotocount\tphotocount_error\treconstructed\treconstructed_error\ttheory\n";
    for (const auto& x : r.rows)
      o << x.cs << '\t' << cell(detail::at(x.photocount, k, false)) << '\t' << cell(detail::at(x.photocount, k, true))
        << '\t' << cell(detail::at(x.reconstructed, k, false)) << '\t' << cell(detail::at(x.reconstructed, k, true))
        << '\t' << cell(detail::at(x.theory, k, false)) << '\n';
    emit("fig4_" + identifier_file_stem(r.identifiers[k]) + ".tsv", o.str());
  }
  return written;
}

}  // namespace twinbeam::io
