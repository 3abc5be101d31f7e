#pragma once

// Flat key = value run configuration.
//
// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
// ignored; reals accept scientific notation (1e-3, 2.5E+1) and `inf`.
// Unknown and repeated keys are errors. Missing keys keep their defaults,
// except that sigma_c and sigma_e default to 1/sqrt(n_weights) and
// 0.7/sqrt(n_weights) for whatever n_weights is configured.

#include "lossgeom/experiments.hpp"
#include "lossgeom/rand_core.hpp"
#include "lossgeom/types.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lossgeom {

struct RunConfig {
  ModelParams model;
  SweepSpec sweep;
  ExperimentOptions options;
  std::vector<double> snr_grid = {10.0, 2.04, 0.5, 0.1, 0.01};
  std::string output_dir = ".";
  bool emit_svg = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("expected a real number, got '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_integer(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError("expected true or false, got '" + std::string(s) + "'");
}

inline std::vector<double> parse_real_list(std::string_view s) {
  std::vector<double> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_real(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

using ConfigSetter = std::function<void(RunConfig&, std::string_view)>;

inline const std::map<std::string, ConfigSetter, std::less<>>& config_keys() {
  static const std::map<std::string, ConfigSetter, std::less<>> keys = {
      {"n_examples", [](RunConfig& c, std::string_view v) { c.model.n_examples = parse_integer<Index>(v); }},
      {"n_classes", [](RunConfig& c, std::string_view v) { c.model.n_classes = parse_integer<Index>(v); }},
      {"n_weights", [](RunConfig& c, std::string_view v) { c.model.n_weights = parse_integer<Index>(v); }},
      {"sigma_z", [](RunConfig& c, std::string_view v) { c.model.sigma_z = parse_real(v); }},
      {"sigma_c", [](RunConfig& c, std::string_view v) { c.model.sigma_c = parse_real(v); }},
      {"sigma_e", [](RunConfig& c, std::string_view v) { c.model.sigma_e = parse_real(v); }},
      {"length_beta", [](RunConfig& c, std::string_view v) { c.model.length_beta = parse_real(v); }},
      {"target_accuracy", [](RunConfig& c, std::string_view v) { c.model.target_accuracy = parse_real(v); }},
      {"seed", [](RunConfig& c, std::string_view v) { c.model.seed = parse_integer<std::uint64_t>(v); }},
      {"hyperplane_dim", [](RunConfig& c, std::string_view v) { c.model.hyperplane_dim = parse_integer<Index>(v); }},
      {"sigma_z_min", [](RunConfig& c, std::string_view v) { c.sweep.sigma_z_min = parse_real(v); }},
      {"sigma_z_max", [](RunConfig& c, std::string_view v) { c.sweep.sigma_z_max = parse_real(v); }},
      {"points", [](RunConfig& c, std::string_view v) { c.sweep.points = parse_integer<Index>(v); }},
      {"scale",
       [](RunConfig& c, std::string_view v) {
         v = trim(v);
         if (v == "log") c.sweep.scale = GridScale::log;
         else if (v == "linear") c.sweep.scale = GridScale::linear;
         else throw ValidationError("expected log or linear, got '" + std::string(v) + "'");
       }},
      {"gamma", [](RunConfig& c, std::string_view v) { c.sweep.gamma = parse_real(v); }},
      {"sigma_z_ref", [](RunConfig& c, std::string_view v) { c.sweep.sigma_z_ref = parse_real(v); }},
      {"repeats", [](RunConfig& c, std::string_view v) { c.sweep.repeats = parse_integer<Index>(v); }},
      {"noise_mode",
       [](RunConfig& c, std::string_view v) {
         v = trim(v);
         if (v == "scaled") c.sweep.noise_mode = NoiseMode::scaled;
         else if (v == "fixed") c.sweep.noise_mode = NoiseMode::fixed;
         else throw ValidationError("expected scaled or fixed, got '" + std::string(v) + "'");
       }},
      {"outlier_tau", [](RunConfig& c, std::string_view v) { c.options.outlier_tau = parse_real(v); }},
      {"outlier_window", [](RunConfig& c, std::string_view v) { c.options.outlier_window = parse_integer<Index>(v); }},
      {"threads", [](RunConfig& c, std::string_view v) { c.options.threads = parse_integer<unsigned>(v); }},
      {"snr_grid", [](RunConfig& c, std::string_view v) { c.snr_grid = parse_real_list(v); }},
      {"output_dir", [](RunConfig& c, std::string_view v) { c.output_dir = std::string(trim(v)); }},
      {"emit_svg", [](RunConfig& c, std::string_view v) { c.emit_svg = parse_bool(v); }},
  };
  return keys;
}

inline std::string key_of(const std::string& message) {
  const auto colon = message.find(':');
  return colon == std::string::npos ? std::string{} : message.substr(0, colon);
}

}  // namespace detail

/// Checks the non-model settings; throws ValidationError prefixed with the key.
inline void validate_run_settings(const RunConfig& c) {
  if (!(c.options.outlier_tau > 0.0) || !std::isfinite(c.options.outlier_tau))
    throw ValidationError("outlier_tau: must be positive");
  if (c.options.outlier_window < 0) throw ValidationError("outlier_window: must be nonnegative");
  if (c.snr_grid.empty()) throw ValidationError("snr_grid: must not be empty");
  for (double snr : c.snr_grid)
    if (!(snr > 0.0)) throw ValidationError("snr_grid: every SNR must be positive");
  if (c.output_dir.empty()) throw ValidationError("output_dir: must not be empty");
}

inline RunConfig parse_config_text(std::string_view text, const std::string& source = "<config>") {
  RunConfig config;
  std::map<std::string, int, std::less<>> key_lines;
  auto fail = [&](int line, const std::string& message) -> void {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + message);
  };

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) fail(line_no, "unknown key '" + key + "'");
    if (key_lines.contains(key))
      fail(line_no, "key '" + key + "' repeated (first set on line " + std::to_string(key_lines[key]) + ")");
    if (value.empty()) fail(line_no, key + ": missing value");
    try {
      it->second(config, value);
    } catch (const ValidationError& e) {
      fail(line_no, key + ": " + e.what());
    }
    key_lines[key] = line_no;
  }

  if (config.model.n_weights > 0) {
    const double root = std::sqrt(static_cast<double>(config.model.n_weights));
    if (!key_lines.contains("sigma_c")) config.model.sigma_c = 1.0 / root;
    if (!key_lines.contains("sigma_e")) config.model.sigma_e = 0.7 / root;
  }

  try {
    config.model.validate();
    config.sweep.validate();
    validate_run_settings(config);
  } catch (const ValidationError& e) {
    const std::string message = e.what();
    const auto it = key_lines.find(detail::key_of(message));
    fail(it == key_lines.end() ? 0 : it->second, message);
  }
  return config;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

}  // namespace lossgeom
