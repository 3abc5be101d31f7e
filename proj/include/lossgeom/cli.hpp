#pragma once

// Command-line front end. Subcommands:
//
//   spectrum       spectrum.csv (index,eigenvalue), outliers.json
//   overlap        overlap.csv (index,eigenvalue,cosine,cumulative_power)
//   sweep-sigmaz   sweep.csv (one row per point and repeat), sweep_summary.csv
//   sweep-snr      snr.csv
//   freeze         freeze.csv, simplex.csv (C = 3)
//   cluster        clustering.json, from --input DUMP or a sampled ensemble
//   project        projection.csv, projection.json
//
// Common flags: --config PATH, --out DIR, --seed INT, --json, --svg.
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include "lossgeom/clustering_metrics.hpp"
#include "lossgeom/config.hpp"
#include "lossgeom/csv.hpp"
#include "lossgeom/dump.hpp"
#include "lossgeom/experiments.hpp"
#include "lossgeom/svg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace lossgeom::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string>& sweep_csv_header() {
  static const std::vector<std::string> header = {
      "sigma_z",      "sigma_c",       "top_eigenvalue", "trace",     "spectral_norm",    "trace_ratio",
      "projected_trace_ratio", "mean_entropy", "mean_max_prob", "n_outliers", "grad_power_top10", "repeat"};
  return header;
}

inline CsvTable sweep_table(const std::vector<SweepRecord>& records) {
  CsvTable t;
  t.header = sweep_csv_header();
  for (const auto& r : records)
    t.rows.push_back({r.sigma_z, r.sigma_c, r.top_eigenvalue, r.trace, r.spectral_norm, r.trace_ratio,
                      r.projected_trace_ratio, r.mean_entropy, r.mean_max_prob, static_cast<double>(r.n_outliers),
                      r.grad_power_top10, static_cast<double>(r.repeat)});
  return t;
}

inline CsvTable sweep_summary_table(const std::vector<SweepSummary>& summary) {
  CsvTable t;
  t.header = {"sigma_z", "sigma_c"};
  for (const auto& name : sweep_metric_names()) {
    t.header.push_back(name + "_mean");
    t.header.push_back(name + "_std");
  }
  for (const auto& s : summary) {
    std::vector<double> row = {s.sigma_z, s.sigma_c};
    for (std::size_t m = 0; m < s.mean.size(); ++m) {
      row.push_back(s.mean[m]);
      row.push_back(s.stddev[m]);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace detail {

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Context {
  RunConfig config;
  fs::path dir;
  bool svg = false;
};

inline json cmd_spectrum(const Context& ctx) {
  const auto& p = ctx.config.model;
  const auto result = run_spectrum_experiment(p, ctx.config.options);
  const auto& ev = result.spectrum.eigenvalues;
  CsvTable t{{"index", "eigenvalue"}, {}};
  for (Index i = 0; i < ev.size(); ++i) t.rows.push_back({static_cast<double>(i + 1), ev(i)});
  write_csv(ctx.dir / "spectrum.csv", t);
  json report = {{"n_outliers", result.report.n_outliers},
                 {"bulk_edge", result.report.bulk_edge},
                 {"outlier_values", result.report.outlier_values},
                 {"gap_ratio", result.report.gap_ratio},
                 {"tau", ctx.config.options.outlier_tau},
                 {"window", ctx.config.options.window_for(p)}};
  write_json(ctx.dir / "outliers.json", report);
  if (ctx.svg) emit_spectrum_svg(ctx.dir / "spectrum.svg", ev);
  return {{"command", "spectrum"},
          {"n_outliers", result.report.n_outliers},
          {"top_eigenvalue", ev(0)},
          {"trace", ev.sum()},
          {"spectral_norm", spectral_norm(ev)},
          {"trace_ratio", finite_or_null(spectral_norm(ev) > 0 ? trace_norm_ratio(ev) : NAN)}};
}

inline json cmd_overlap(const Context& ctx) {
  const auto result = run_overlap_experiment(ctx.config.model, ctx.config.options);
  const auto& ev = result.spectrum.eigenvalues;
  CsvTable t{{"index", "eigenvalue", "cosine", "cumulative_power"}, {}};
  for (Index i = 0; i < ev.size(); ++i)
    t.rows.push_back({static_cast<double>(i + 1), ev(i), result.overlaps.cosines(i), result.overlaps.cumulative_power(i)});
  write_csv(ctx.dir / "overlap.csv", t);
  if (ctx.svg) {
    SvgSeries s{"cosine", {}, {}, true};
    for (Index i = 0; i < ev.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(result.overlaps.cosines(i));
    }
    write_svg(ctx.dir / "overlap.svg", {"gradient / eigenvector cosines", "eigenvector index", "cosine", false, {s}});
  }
  return {{"command", "overlap"},
          {"gradient_norm", result.gradient.values.norm()},
          {"grad_power_top10", top_power(result.overlaps, 10)}};
}

inline json cmd_sweep_sigmaz(const Context& ctx) {
  const auto records = run_sigma_z_sweep(ctx.config.model, ctx.config.sweep, ctx.config.options);
  const auto summary = summarize_sweep(records);
  write_csv(ctx.dir / "sweep.csv", sweep_table(records));
  write_csv(ctx.dir / "sweep_summary.csv", sweep_summary_table(summary));
  if (ctx.svg) emit_sweep_svg(ctx.dir / "sweep.svg", summary, ctx.config.sweep.scale == GridScale::log);

  std::size_t peak = 0;
  for (std::size_t i = 1; i < summary.size(); ++i)
    if (summary[i].mean[0] > summary[peak].mean[0]) peak = i;
  const auto tr = 3;  // trace_ratio column of sweep_metric_names()
  return {{"command", "sweep-sigmaz"},
          {"points", summary.size()},
          {"repeats", ctx.config.sweep.repeats},
          {"peak_sigma_z", summary[peak].sigma_z},
          {"peak_top_eigenvalue", summary[peak].mean[0]},
          {"peak_over_first", summary[peak].mean[0] / summary.front().mean[0]},
          {"peak_over_last", summary[peak].mean[0] / summary.back().mean[0]},
          {"trace_ratio_first", finite_or_null(summary.front().mean[tr])},
          {"trace_ratio_last", finite_or_null(summary.back().mean[tr])}};
}

inline json cmd_sweep_snr(const Context& ctx) {
  const auto records = run_snr_sweep(ctx.config.model, ctx.config.snr_grid, ctx.config.options);
  CsvTable t{{"snr", "sigma_c", "sigma_e", "n_outliers", "top_eigenvalue", "q_sl", "predicted_q_sl"}, {}};
  json rows = json::array();
  for (const auto& r : records) {
    t.rows.push_back({r.snr, r.sigma_c, r.sigma_e, static_cast<double>(r.n_outliers), r.top_eigenvalue, r.q_sl,
                      r.predicted_q_sl});
    rows.push_back({{"snr", finite_or_null(r.snr)}, {"n_outliers", r.n_outliers}, {"q_sl", r.q_sl}});
  }
  write_csv(ctx.dir / "snr.csv", t);
  if (ctx.svg) {
    SvgSeries s{"n_outliers", {}, {}, false};
    for (const auto& r : records) {
      s.x.push_back(r.snr);
      s.y.push_back(static_cast<double>(r.n_outliers));
    }
    write_svg(ctx.dir / "snr.svg", {"detected outliers vs SNR", "SNR", "outliers", true, {s}});
  }
  return {{"command", "sweep-snr"}, {"points", rows}};
}

inline json cmd_freeze(const Context& ctx) {
  const auto records = run_freezing_experiment(ctx.config.model, sweep_grid(ctx.config.sweep));
  CsvTable t{{"sigma_z", "mean_entropy", "mean_max_prob"}, {}};
  CsvTable simplex{{"sigma_z", "x", "y"}, {}};
  for (const auto& r : records) {
    t.rows.push_back({r.sigma_z, r.mean_entropy, r.mean_max_prob});
    for (const auto& xy : r.simplex_points) simplex.rows.push_back({r.sigma_z, xy[0], xy[1]});
  }
  write_csv(ctx.dir / "freeze.csv", t);
  if (ctx.config.model.n_classes == 3) write_csv(ctx.dir / "simplex.csv", simplex);
  if (ctx.svg) {
    SvgSeries entropy{"mean_entropy (bits)", {}, {}, false};
    SvgSeries maxp{"mean_max_prob", {}, {}, false};
    for (const auto& r : records) {
      entropy.x.push_back(r.sigma_z);
      entropy.y.push_back(r.mean_entropy);
      maxp.x.push_back(r.sigma_z);
      maxp.y.push_back(r.mean_max_prob);
    }
    write_svg(ctx.dir / "freeze.svg",
              {"probability freezing", "sigma_z", "value", ctx.config.sweep.scale == GridScale::log, {entropy, maxp}});
  }
  return {{"command", "freeze"},
          {"first", {{"sigma_z", records.front().sigma_z}, {"mean_entropy", records.front().mean_entropy}}},
          {"last", {{"sigma_z", records.back().sigma_z}, {"mean_entropy", records.back().mean_entropy}}}};
}

inline json cmd_cluster(const Context& ctx, const std::string& input, const std::string& dump_out) {
  LogitGradientDump dump;
  std::string source;
  if (!input.empty()) {
    dump = read_dump(input);
    source = input;
  } else {
    const auto draw = sample_model(ctx.config.model);
    dump.tensor = draw.grads.compose();
    dump.labels = draw.ensemble.labels;
    source = "model";
    if (!dump_out.empty()) write_dump(dump_out, dump);
  }
  const auto report = clustering_report(dump.tensor, dump.labels);
  json j = {{"q_slsc", report.q_slsc},
            {"q_sl", report.q_sl},
            {"q_dl", report.q_dl},
            {"per_class_q", report.per_class_q},
            {"n_examples", dump.tensor.n_examples},
            {"n_classes", dump.tensor.n_classes},
            {"n_weights", dump.tensor.n_weights()},
            {"source", source}};
  if (input.empty()) j["predicted_q_sl"] = predicted_q_sl(ctx.config.model.sigma_c, ctx.config.model.sigma_e);
  write_json(ctx.dir / "clustering.json", j);
  j["command"] = "cluster";
  return j;
}

inline json cmd_project(const Context& ctx) {
  const auto result = run_projection_experiment(ctx.config.model, ctx.config.options);
  CsvTable t{{"index", "eigenvalue"}, {}};
  for (Index i = 0; i < result.projected_eigenvalues.size(); ++i)
    t.rows.push_back({static_cast<double>(i + 1), result.projected_eigenvalues(i)});
  write_csv(ctx.dir / "projection.csv", t);
  json j = {{"hyperplane_dim", ctx.config.model.hyperplane_dim},
            {"trace_ratio", result.trace_ratio},
            {"projected_trace_ratio", result.projected_trace_ratio},
            {"top_eigenvalue", result.eigenvalues(0)},
            {"projected_top_eigenvalue", result.projected_eigenvalues(0)}};
  write_json(ctx.dir / "projection.json", j);
  j["command"] = "project";
  return j;
}

}  // namespace detail

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Random-model simulator of neural loss-landscape gradients and Hessians", "lossgeom"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool want_json = false;
  bool want_svg = false;
  std::string input;
  std::string dump_out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value configuration file");
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_flag("--json", want_json, "print a JSON summary to standard output");
    sub->add_flag("--svg", want_svg, "also write SVG plots");
    return sub;
  };
  add_common(app.add_subcommand("spectrum", "Hessian eigenspectrum and outliers"));
  add_common(app.add_subcommand("overlap", "gradient overlap with Hessian eigenvectors"));
  add_common(app.add_subcommand("sweep-sigmaz", "sweep the logit scale sigma_z"));
  add_common(app.add_subcommand("sweep-snr", "sweep the logit-gradient signal-to-noise ratio"));
  add_common(app.add_subcommand("freeze", "probability freezing versus sigma_z"));
  auto* cluster = add_common(app.add_subcommand("cluster", "logit-gradient clustering metrics"));
  cluster->add_option("--input", input, "LGRD dump (.lgrd binary or .csv with .labels.csv sidecar)");
  cluster->add_option("--dump", dump_out, "write the sampled ensemble's logit gradients to this dump");
  add_common(app.add_subcommand("project", "random-hyperplane projection of the Hessian"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    detail::Context ctx;
    ctx.config = config_path.empty() ? RunConfig{} : parse_config(config_path);
    if (sub->get_option("--seed")->count() > 0) ctx.config.model.seed = seed;
    if (!out_dir.empty()) ctx.config.output_dir = out_dir;
    ctx.svg = want_svg || ctx.config.emit_svg;
    ctx.dir = ctx.config.output_dir;
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec) throw IoError("cannot create output directory '" + ctx.dir.string() + "': " + ec.message());

    json summary;
    if (name == "spectrum") summary = detail::cmd_spectrum(ctx);
    else if (name == "overlap") summary = detail::cmd_overlap(ctx);
    else if (name == "sweep-sigmaz") summary = detail::cmd_sweep_sigmaz(ctx);
    else if (name == "sweep-snr") summary = detail::cmd_sweep_snr(ctx);
    else if (name == "freeze") summary = detail::cmd_freeze(ctx);
    else if (name == "cluster") summary = detail::cmd_cluster(ctx, input, dump_out);
    else summary = detail::cmd_project(ctx);

    if (want_json) out << summary.dump(2) << '\n';
    return 0;
  } catch (const ValidationError& e) {
    err << "lossgeom " << name << ": " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "lossgeom " << name << ": " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "lossgeom " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "lossgeom " << name << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace lossgeom::cli
