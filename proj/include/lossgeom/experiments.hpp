#pragma once

// Drivers for the four landscape properties and the supporting sweeps.
//
// Every draw is keyed by (params.seed, label). Labels are hierarchical:
// "<experiment>/point=<i>/repeat=<r>/<quantity>", so sweep tasks are
// independent of scheduling and results merge in grid order.

#include "lossgeom/clustering_metrics.hpp"
#include "lossgeom/gradient_hessian.hpp"
#include "lossgeom/logit_model.hpp"
#include "lossgeom/parallel.hpp"
#include "lossgeom/rand_core.hpp"
#include "lossgeom/spectra.hpp"
#include "lossgeom/types.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lossgeom {

enum class GridScale { log, linear };

/// How sigma_e follows sigma_c along a sigma_z sweep.
enum class NoiseMode {
  scaled,  // sigma_c / sigma_e held fixed
  fixed,   // sigma_e held at its base value
};

struct SweepSpec {
  double sigma_z_min = 1e-3;
  double sigma_z_max = 1e2;
  Index points = 25;
  GridScale scale = GridScale::log;
  double gamma = 0.2;  // sigma_c grows as (sigma_z / sigma_z_ref)^gamma
  double sigma_z_ref = 15.0;
  Index repeats = 5;
  NoiseMode noise_mode = NoiseMode::scaled;

  void validate() const {
    if (!(std::isfinite(sigma_z_min) && std::isfinite(sigma_z_max) && sigma_z_min < sigma_z_max))
      throw ValidationError("sigma_z_min: must be below sigma_z_max");
    if (sigma_z_min < 0.0) throw ValidationError("sigma_z_min: must be nonnegative");
    if (scale == GridScale::log && !(sigma_z_min > 0.0))
      throw ValidationError("sigma_z_min: must be positive for a log-spaced grid");
    if (points < 2) throw ValidationError("points: must be at least 2");
    if (repeats < 1) throw ValidationError("repeats: must be at least 1");
    if (!std::isfinite(gamma)) throw ValidationError("gamma: must be finite");
    if (!(sigma_z_ref > 0.0) || !std::isfinite(sigma_z_ref)) throw ValidationError("sigma_z_ref: must be positive");
  }
};

struct ExperimentOptions {
  double outlier_tau = 2.0;
  Index outlier_window = 0;  // 0 selects 3C
  unsigned threads = 0;      // 0 = hardware concurrency
  HessianOptions hessian;

  Index window_for(const ModelParams& p) const {
    const Index w = outlier_window > 0 ? outlier_window : 3 * p.n_classes;
    return std::min(w, p.n_weights);
  }
};

struct ModelDraw {
  LogitEnsemble ensemble;
  LogitGradientSet grads;
};

struct SpectrumResult {
  SymmetricSpectrum spectrum;
  OutlierReport report;
};

struct OverlapResult {
  SymmetricSpectrum spectrum;
  WeightGradient gradient;
  GradientOverlaps overlaps;
};

struct ProjectionResult {
  Vector eigenvalues;            // full Hessian, descending
  Vector projected_eigenvalues;  // B^T H B, descending
  double trace_ratio = 0.0;
  double projected_trace_ratio = 0.0;
};

struct SweepRecord {
  Index point = 0;
  Index repeat = 0;
  double sigma_z = 0.0;
  double sigma_c = 0.0;
  double top_eigenvalue = 0.0;
  double trace = 0.0;
  double spectral_norm = 0.0;
  double trace_ratio = 0.0;
  double projected_trace_ratio = 0.0;
  double mean_entropy = 0.0;
  double mean_max_prob = 0.0;
  Index n_outliers = 0;
  double grad_power_top10 = 0.0;
};

/// Statistics aggregated over repeats; indices follow sweep_metric_names.
struct SweepSummary {
  double sigma_z = 0.0;
  double sigma_c = 0.0;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct SnrRecord {
  double snr = 0.0;
  double sigma_c = 0.0;
  double sigma_e = 0.0;
  Index n_outliers = 0;
  double top_eigenvalue = 0.0;
  double q_sl = 0.0;
  double predicted_q_sl = 0.0;
};

struct FreezingRecord {
  double sigma_z = 0.0;
  double mean_entropy = 0.0;
  double mean_max_prob = 0.0;
  std::vector<std::array<double, 2>> simplex_points;  // C = 3 only
};

/// Samples one ensemble; streams are "<prefix>logits", "<prefix>labels",
/// "<prefix>means" and "<prefix>residuals".
inline ModelDraw sample_model(const ModelParams& params, const std::string& prefix = "model/") {
  params.validate();
  ModelDraw draw;
  auto logit_stream = substream(params.seed, prefix + "logits");
  auto label_stream = substream(params.seed, prefix + "labels");
  draw.ensemble = make_ensemble(params, logit_stream, label_stream);
  auto mean_stream = substream(params.seed, prefix + "means");
  auto residual_stream = substream(params.seed, prefix + "residuals");
  draw.grads.means = sample_mean_logit_gradients(params, mean_stream);
  draw.grads.residuals = sample_residuals(params, residual_stream);
  return draw;
}

inline SpectrumResult run_spectrum_experiment(const ModelParams& params, const ExperimentOptions& options = {}) {
  const auto draw = sample_model(params);
  SpectrumResult out;
  out.spectrum = eigh(model_hessian(draw.grads, draw.ensemble, options.hessian));
  out.report = detect_outliers(out.spectrum, options.window_for(params), options.outlier_tau);
  return out;
}

inline OverlapResult run_overlap_experiment(const ModelParams& params, const ExperimentOptions& options = {}) {
  const auto draw = sample_model(params);
  OverlapResult out;
  out.spectrum = eigh(model_hessian(draw.grads, draw.ensemble, options.hessian));
  out.gradient = weight_gradient(draw.grads, draw.ensemble);
  out.overlaps = gradient_overlaps(out.spectrum, out.gradient);
  return out;
}

inline ProjectionResult run_projection_experiment(const ModelParams& params, const ExperimentOptions& options = {}) {
  const auto draw = sample_model(params);
  const auto h = model_hessian(draw.grads, draw.ensemble, options.hessian);
  auto basis_stream = substream(params.seed, "model/hyperplane");
  const Matrix basis = random_orthonormal_basis(params, basis_stream);
  ProjectionResult out;
  out.eigenvalues = symmetric_eigenvalues(h.values);
  out.projected_eigenvalues = symmetric_eigenvalues(project_hessian(h, basis));
  out.trace_ratio = trace_norm_ratio(out.eigenvalues);
  out.projected_trace_ratio = trace_norm_ratio(out.projected_eigenvalues);
  return out;
}

inline std::vector<double> sweep_grid(double lo, double hi, Index points, GridScale scale) {
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (Index i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid[static_cast<std::size_t>(i)] =
        scale == GridScale::log ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

inline std::vector<double> sweep_grid(const SweepSpec& spec) {
  return sweep_grid(spec.sigma_z_min, spec.sigma_z_max, spec.points, spec.scale);
}

/// Model parameters at one sweep point: sigma_c = base * (sigma_z / ref)^gamma,
/// sigma_e scaled by the same factor unless the noise mode is fixed.
inline ModelParams sweep_point_params(const ModelParams& base, const SweepSpec& spec, double sigma_z) {
  ModelParams p = base;
  const double growth = std::pow(sigma_z / spec.sigma_z_ref, spec.gamma);
  p.sigma_z = sigma_z;
  p.sigma_c = base.sigma_c * growth;
  if (spec.noise_mode == NoiseMode::scaled) p.sigma_e = base.sigma_e * growth;
  return p;
}

namespace detail {

inline double ratio_or_nan(const Vector& eigenvalues) {
  return spectral_norm(eigenvalues) > 0.0 ? trace_norm_ratio(eigenvalues) : std::numeric_limits<double>::quiet_NaN();
}

inline SweepRecord sweep_task(const ModelParams& p, Index point, Index repeat, const ExperimentOptions& options) {
  const std::string prefix = "sweep/point=" + std::to_string(point) + "/repeat=" + std::to_string(repeat) + "/";
  const auto draw = sample_model(p, prefix);
  const auto h = model_hessian(draw.grads, draw.ensemble, options.hessian);
  const auto spectrum = eigh(h);

  SweepRecord r;
  r.point = point;
  r.repeat = repeat;
  r.sigma_z = p.sigma_z;
  r.sigma_c = p.sigma_c;
  r.top_eigenvalue = spectrum.eigenvalues(0);
  r.trace = spectrum.eigenvalues.sum();
  r.spectral_norm = spectral_norm(spectrum);
  r.trace_ratio = ratio_or_nan(spectrum.eigenvalues);
  r.n_outliers = detect_outliers(spectrum, options.window_for(p), options.outlier_tau).n_outliers;

  const auto g = weight_gradient(draw.grads, draw.ensemble);
  r.grad_power_top10 = g.values.norm() > 0.0 ? top_power(gradient_overlaps(spectrum, g), 10)
                                             : std::numeric_limits<double>::quiet_NaN();

  auto basis_stream = substream(p.seed, prefix + "hyperplane");
  const Matrix basis = random_orthonormal_basis(p, basis_stream);
  r.projected_trace_ratio = ratio_or_nan(symmetric_eigenvalues(project_hessian(h, basis)));

  const auto stats = freezing_stats(draw.ensemble);
  r.mean_entropy = stats.mean_entropy;
  r.mean_max_prob = stats.mean_max_prob;
  return r;
}

}  // namespace detail

/// One record per (point, repeat), ordered point-major.
inline std::vector<SweepRecord> run_sigma_z_sweep(const ModelParams& params, const SweepSpec& spec,
                                                  const ExperimentOptions& options = {}) {
  params.validate();
  spec.validate();
  const auto grid = sweep_grid(spec);
  const auto repeats = static_cast<std::size_t>(spec.repeats);
  std::vector<SweepRecord> records(grid.size() * repeats);
  parallel_for(records.size(), options.threads, [&](std::size_t task) {
    const std::size_t point = task / repeats;
    const std::size_t repeat = task % repeats;
    records[task] = detail::sweep_task(sweep_point_params(params, spec, grid[point]), static_cast<Index>(point),
                                       static_cast<Index>(repeat), options);
  });
  return records;
}

inline const std::vector<std::string>& sweep_metric_names() {
  static const std::vector<std::string> names = {
      "top_eigenvalue", "trace",         "spectral_norm", "trace_ratio",      "projected_trace_ratio",
      "mean_entropy",   "mean_max_prob", "n_outliers",    "grad_power_top10"};
  return names;
}

inline std::vector<double> sweep_metric_values(const SweepRecord& r) {
  return {r.top_eigenvalue, r.trace,         r.spectral_norm,                   r.trace_ratio, r.projected_trace_ratio,
          r.mean_entropy,   r.mean_max_prob, static_cast<double>(r.n_outliers), r.grad_power_top10};
}

/// Mean and sample standard deviation over repeats, in grid order.
inline std::vector<SweepSummary> summarize_sweep(const std::vector<SweepRecord>& records) {
  std::vector<SweepSummary> out;
  const std::size_t metrics = sweep_metric_names().size();
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].point == records[begin].point) ++end;
    SweepSummary s;
    s.sigma_z = records[begin].sigma_z;
    s.sigma_c = records[begin].sigma_c;
    s.mean.assign(metrics, 0.0);
    s.stddev.assign(metrics, 0.0);
    const auto n = static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto v = sweep_metric_values(records[i]);
      for (std::size_t m = 0; m < metrics; ++m) s.mean[m] += v[m] / n;
    }
    if (end - begin > 1) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto v = sweep_metric_values(records[i]);
        for (std::size_t m = 0; m < metrics; ++m) s.stddev[m] += (v[m] - s.mean[m]) * (v[m] - s.mean[m]) / (n - 1.0);
      }
      for (auto& x : s.stddev) x = std::sqrt(x);
    }
    out.push_back(std::move(s));
    begin = end;
  }
  return out;
}

/// Holds sigma_c at params.sigma_c and sets sigma_e = sigma_c / sqrt(SNR);
/// an infinite SNR means noiseless logit gradients.
inline std::vector<SnrRecord> run_snr_sweep(const ModelParams& params, const std::vector<double>& snr_grid,
                                            const ExperimentOptions& options = {}) {
  params.validate();
  for (double snr : snr_grid)
    if (!(snr > 0.0)) throw ValidationError("snr_grid: every SNR must be positive");
  std::vector<SnrRecord> out(snr_grid.size());
  parallel_for(snr_grid.size(), options.threads, [&](std::size_t i) {
    ModelParams p = params;
    const double snr = snr_grid[i];
    p.sigma_e = std::isinf(snr) ? 0.0 : p.sigma_c / std::sqrt(snr);
    const auto draw = sample_model(p, "snr/point=" + std::to_string(i) + "/");
    const auto eigenvalues = symmetric_eigenvalues(model_hessian(draw.grads, draw.ensemble, options.hessian).values);
    SnrRecord& r = out[i];
    r.snr = snr;
    r.sigma_c = p.sigma_c;
    r.sigma_e = p.sigma_e;
    r.n_outliers = detect_outliers(eigenvalues, options.window_for(p), options.outlier_tau).n_outliers;
    r.top_eigenvalue = eigenvalues(0);
    r.q_sl = q_sl(draw.grads.compose());
    r.predicted_q_sl = predicted_q_sl(p.sigma_c, p.sigma_e);
  });
  return out;
}

/// Freezing statistics per sigma_z; for C = 3 also up to `max_simplex_points`
/// probability rows in barycentric plane coordinates (vertices (0,0), (1,0),
/// (1/2, sqrt(3)/2) for classes 0, 1, 2).
inline std::vector<FreezingRecord> run_freezing_experiment(const ModelParams& params,
                                                           const std::vector<double>& sigma_z_grid,
                                                           Index max_simplex_points = 500) {
  params.validate();
  std::vector<FreezingRecord> out;
  out.reserve(sigma_z_grid.size());
  for (std::size_t i = 0; i < sigma_z_grid.size(); ++i) {
    ModelParams p = params;
    p.sigma_z = sigma_z_grid[i];
    p.validate();
    auto stream = substream(p.seed, "freeze/point=" + std::to_string(i) + "/logits");
    const RowMatrix probs = softmax_probs(sample_logits(p, stream));
    const auto stats = freezing_stats(probs);
    FreezingRecord r;
    r.sigma_z = p.sigma_z;
    r.mean_entropy = stats.mean_entropy;
    r.mean_max_prob = stats.mean_max_prob;
    if (p.n_classes == 3) {
      const Index count = std::min(max_simplex_points, probs.rows());
      for (Index mu = 0; mu < count; ++mu)
        r.simplex_points.push_back({probs(mu, 1) + 0.5 * probs(mu, 2), 0.5 * std::sqrt(3.0) * probs(mu, 2)});
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lossgeom
