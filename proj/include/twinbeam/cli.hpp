#pragma once

// Command-line front end. Exit codes: 0 success, 1 invalid input, 2
// numerical failure.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twinbeam/criteria.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/experiment.hpp"
#include "twinbeam/fit.hpp"
#include "twinbeam/io.hpp"
#include "twinbeam/reconstruct.hpp"

namespace twinbeam::cli {

/// Photon-number range for reconstructing a row whose largest photocount is
/// `c_top` on a detector of efficiency `eta`.
inline std::size_t default_reconstruction_n_max(std::size_t c_top, double eta) {
  const double n = std::ceil(static_cast<double>(c_top + 1) / std::max(eta, 0.05)) + 20.0;
  return static_cast<std::size_t>(std::min(n, 512.0));
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Twin-beam photocount simulation, reconstruction and nonclassicality analysis", "twinbeam"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_runs, sim_seed;
  auto* sim = app.add_subcommand("simulate", "Simulate the joint photocount histogram");
  sim->add_option("--config", sim_config, "Run configuration (JSON)")->required();
  sim->add_option("--out", sim_out, "Output histogram CSV")->required();
  sim->add_option("--runs", sim_runs, "Override the number of runs");
  sim->add_option("--seed", sim_seed, "Override the seed");

  // fit
  std::string fit_hist, fit_geometry, fit_out;
  std::size_t fit_restarts = 8;
  auto* fit = app.add_subcommand("fit", "Fit the twin-beam model to a joint histogram");
  fit->add_option("--hist", fit_hist, "Joint histogram CSV")->required();
  fit->add_option("--geometry", fit_geometry, "Detector geometry (pixels, dark_total per arm)")->required();
  fit->add_option("--out", fit_out, "Output model/params file")->required();
  fit->add_option("--restarts", fit_restarts, "Number of simplex restarts");

  // reconstruct
  std::string rec_hist, rec_detector, rec_out;
  std::size_t rec_condition = 0;
  std::optional<std::size_t> rec_n_max;
  auto* rec = app.add_subcommand("reconstruct", "EM reconstruction of one conditional idler distribution");
  rec->add_option("--hist", rec_hist, "Joint histogram CSV")->required();
  rec->add_option("--condition", rec_condition, "Signal photocount c_s to condition on")->required();
  rec->add_option("--detector", rec_detector, "Idler detector (or a model/config file)")->required();
  rec->add_option("--out", rec_out, "Output distribution CSV")->required();
  rec->add_option("--n-max", rec_n_max, "Largest photon number reconstructed");

  // analyze
  std::string an_hist, an_params, an_out;
  unsigned an_order = 5, an_boot = 1000, an_boot_em = 100;
  std::uint64_t an_seed = 0;
  std::size_t an_cs_min = 0, an_cs_max = 10;
  auto* an = app.add_subcommand("analyze", "Conditional analysis of a joint histogram");
  an->add_option("--hist", an_hist, "Joint histogram CSV")->required();
  an->add_option("--params", an_params, "Model file (fit output or run config)")->required();
  an->add_option("--max-order", an_order, "Largest identifier order");
  an->add_option("--bootstrap", an_boot, "Bootstrap replicates for photocount errors");
  an->add_option("--bootstrap-em", an_boot_em, "Bootstrap replicates for reconstruction errors");
  an->add_option("--seed", an_seed, "Bootstrap seed");
  an->add_option("--cs-min", an_cs_min, "First signal photocount analyzed");
  an->add_option("--cs-max", an_cs_max, "Last signal photocount analyzed");
  an->add_option("--out", an_out, "Output report (JSON)")->required();

  // criteria list
  unsigned crit_order = 5;
  auto* crit = app.add_subcommand("criteria", "Nonclassicality criteria");
  crit->require_subcommand(1);
  auto* crit_list = crit->add_subcommand("list", "List the majorization identifiers");
  crit_list->add_option("--max-order", crit_order, "Largest total order")->required();

  // report
  std::string rep_in, rep_dir;
  auto* rep = app.add_subcommand("report", "Emit per-figure data files from a report");
  rep->add_option("--in", rep_in, "Report (JSON)")->required();
  rep->add_option("--figdata", rep_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*sim) {
      ExperimentConfig cfg = io::read_config(sim_config);
      if (sim_runs) cfg.runs = *sim_runs;
      if (sim_seed) cfg.seed = *sim_seed;
      cfg.validate();
      const auto h = simulate(cfg);
      io::write_histogram(sim_out, h);
      out << "simulated " << h.total() << " runs -> " << sim_out << '\n';
    } else if (*fit) {
      const auto h = io::read_histogram(fit_hist);
      const auto g = io::read_geometry(fit_geometry);
      FitOptions opt;
      opt.restarts = fit_restarts;
      const FitResult r = fit_twin_beam(h, g, opt);
      io::write_text(fit_out, io::to_json(r, g).dump(2) + "\n");
      out << "log-likelihood per run " << r.objective_value << (r.converged ? " (converged)" : " (not converged)")
          << " -> " << fit_out << '\n';
    } else if (*rec) {
      const auto h = io::read_histogram(rec_hist);
      const auto det = io::read_detector(rec_detector);
      const ConditionalRow row = conditional_histogram(h, rec_condition);
      const std::size_t n_max = rec_n_max.value_or(default_reconstruction_n_max(row.frequencies.size() - 1, det.efficiency));
      const ResponseMatrix T = build_response(det, n_max, row.frequencies.size() - 1);
      const EmResult em = em_reconstruct(row.frequencies, T);
      io::write_text(rec_out, io::distribution_csv(em.distribution, em.diagnostics, rec_condition, row.total));
      out << "reconstructed c_s=" << rec_condition << " from " << row.total << " runs in " << em.diagnostics.iterations
          << " iterations" << (em.diagnostics.converged ? "" : " (not converged)") << " -> " << rec_out << '\n';
    } else if (*an) {
      const auto h = io::read_histogram(an_hist);
      const TheoryModel model = io::read_model(an_params);
      const JointPhotonDistribution joint = twin_beam_joint(model.twin_beam);
      const ResponseMatrix Ti = build_response(model.idler_detector, joint.n_max(), h.idler_extent() - 1);
      AnalyzeOptions opt;
      opt.max_order = an_order;
      opt.bootstrap = an_boot;
      opt.bootstrap_em = an_boot_em;
      opt.seed = an_seed;
      opt.cs_min = an_cs_min;
      opt.cs_max = an_cs_max;
      const ConditionalReport r = analyze(h, Ti, model, opt);
      io::write_report(an_out, r);
      out << "analyzed c_s in [" << an_cs_min << "," << an_cs_max << "] -> " << an_out << '\n';
    } else if (*crit) {
      for (const auto& s : enumerate_identifiers(crit_order)) out << s.name() << '\t' << s.definition() << '\n';
    } else if (*rep) {
      const auto r = io::read_report(rep_in);
      const auto files = io::write_figure_data(r, rep_dir);
      out << "wrote " << files.size() << " figure data files to " << rep_dir << '\n';
    }
  } catch (const validation_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const numerical_error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace twinbeam::cli
