#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "loop_filter.hpp"
#include "pd_characteristic.hpp"
#include "phase_model.hpp"
#include "range_estimator.hpp"

namespace pllsim {

/// Flat configuration shared by every subcommand.  All fields are optional
/// here; each subcommand validates the subset it needs (so one file can
/// drive several commands).  Unknown JSON keys are rejected by name.
struct RunConfig {
  // model
  std::optional<std::string> pd;  // "sinusoidal" | "triangular"
  std::optional<double> pd_period;
  std::optional<double> pd_scale;
  std::optional<std::string> filter;  // "leadlag" | "activepi"
  std::optional<double> tau1;
  std::optional<double> tau2;
  std::optional<double> k_vco;
  std::optional<double> omega_e_free;
  // initial state
  std::optional<double> x0;
  std::optional<double> theta0;
  // integration
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<double> tmax;
  std::optional<double> stride;
  // command-specific
  std::optional<double> tol;           // bisection tolerance, rad/s
  std::optional<std::string> method;   // "step" | "separatrix" | "analytic" | "scaled"
  std::optional<int> grid_theta;
  std::optional<int> grid_x;
  std::optional<std::vector<double>> axis;
  std::optional<std::vector<double>> family;
  // outputs
  std::optional<std::string> out;      // CSV path
  std::optional<std::string> svg_out;  // portrait path
};

namespace detail {

inline void merge_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration file must be a JSON object");

  auto want_number = [](const nlohmann::json& v, const char* key) {
    if (!v.is_number())
      throw ConfigError(std::string("configuration key '") + key + "' must be a number");
    return v.get<double>();
  };
  auto want_int = [](const nlohmann::json& v, const char* key) {
    if (!v.is_number_integer())
      throw ConfigError(std::string("configuration key '") + key + "' must be an integer");
    return v.get<int>();
  };
  auto want_string = [](const nlohmann::json& v, const char* key) {
    if (!v.is_string())
      throw ConfigError(std::string("configuration key '") + key + "' must be a string");
    return v.get<std::string>();
  };
  auto want_array = [&](const nlohmann::json& v, const char* key) {
    if (!v.is_array())
      throw ConfigError(std::string("configuration key '") + key +
                        "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(want_number(e, key));
    return out;
  };

  for (const auto& [key, value] : j.items()) {
    if (key == "pd") cfg.pd = want_string(value, "pd");
    else if (key == "pd_period") cfg.pd_period = want_number(value, "pd_period");
    else if (key == "pd_scale") cfg.pd_scale = want_number(value, "pd_scale");
    else if (key == "filter") cfg.filter = want_string(value, "filter");
    else if (key == "tau1") cfg.tau1 = want_number(value, "tau1");
    else if (key == "tau2") cfg.tau2 = want_number(value, "tau2");
    else if (key == "k_vco") cfg.k_vco = want_number(value, "k_vco");
    else if (key == "omega_e_free") cfg.omega_e_free = want_number(value, "omega_e_free");
    else if (key == "x0") cfg.x0 = want_number(value, "x0");
    else if (key == "theta0") cfg.theta0 = want_number(value, "theta0");
    else if (key == "rtol") cfg.rtol = want_number(value, "rtol");
    else if (key == "atol") cfg.atol = want_number(value, "atol");
    else if (key == "tmax") cfg.tmax = want_number(value, "tmax");
    else if (key == "stride") cfg.stride = want_number(value, "stride");
    else if (key == "tol") cfg.tol = want_number(value, "tol");
    else if (key == "method") cfg.method = want_string(value, "method");
    else if (key == "grid_theta") cfg.grid_theta = want_int(value, "grid_theta");
    else if (key == "grid_x") cfg.grid_x = want_int(value, "grid_x");
    else if (key == "axis") cfg.axis = want_array(value, "axis");
    else if (key == "family") cfg.family = want_array(value, "family");
    else if (key == "out") cfg.out = want_string(value, "out");
    else if (key == "svg_out") cfg.svg_out = want_string(value, "svg_out");
    else throw ConfigError("unknown configuration key '" + key + "'");
  }
}

}  // namespace detail

/// Parse a configuration file (strict: unknown keys are an error) into the
/// given config; values already present are overwritten by the file.  CLI
/// flags are applied *after* this, so they override file values.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open configuration file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("configuration file '" + path + "' is not valid JSON: " + e.what());
  }
  detail::merge_config_json(cfg, j);
}

// ---------------------------------------------------------------------------
// Builders: config -> library objects (validating, naming offending keys)
// ---------------------------------------------------------------------------

[[nodiscard]] inline PdCharacteristic build_pd(const RunConfig& cfg) {
  const std::string kind = cfg.pd.value_or("sinusoidal");
  const double period = cfg.pd_period.value_or(kTwoPi);
  const double scale = cfg.pd_scale.value_or(1.0);
  try {
    if (kind == "sinusoidal") return PdCharacteristic::sinusoidal(period, scale);
    if (kind == "triangular") return PdCharacteristic::triangular(period, scale);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("pd_period/pd_scale: ") + e.what());
  }
  throw ConfigError("pd must be 'sinusoidal' or 'triangular' (got '" + kind + "')");
}

[[nodiscard]] inline LoopFilter build_filter(const RunConfig& cfg) {
  if (!cfg.filter) throw ConfigError("missing configuration key 'filter'");
  if (!cfg.tau1) throw ConfigError("missing configuration key 'tau1'");
  if (!cfg.tau2) throw ConfigError("missing configuration key 'tau2'");
  const std::string kind = *cfg.filter;
  try {
    if (kind == "leadlag") return make_lead_lag(*cfg.tau1, *cfg.tau2);
    if (kind == "activepi") return make_active_pi(*cfg.tau1, *cfg.tau2);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());  // message already names tau1/tau2
  }
  throw ConfigError("filter must be 'leadlag' or 'activepi' (got '" + kind + "')");
}

[[nodiscard]] inline PhaseModel build_model(const RunConfig& cfg) {
  if (!cfg.k_vco) throw ConfigError("missing configuration key 'k_vco'");
  try {
    return make_model(build_filter(cfg), build_pd(cfg), *cfg.k_vco,
                      cfg.omega_e_free.value_or(0.0));
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

[[nodiscard]] inline SystemParams build_system(const RunConfig& cfg) {
  if (!cfg.k_vco) throw ConfigError("missing configuration key 'k_vco'");
  try {
    return SystemParams(build_filter(cfg), build_pd(cfg), *cfg.k_vco);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

[[nodiscard]] inline IntegrationConfig build_integration(const RunConfig& cfg) {
  IntegrationConfig icfg;
  if (cfg.rtol) icfg.rel_tol = *cfg.rtol;
  if (cfg.atol) icfg.abs_tol = *cfg.atol;
  if (cfg.tmax) icfg.t_max = *cfg.tmax;
  if (cfg.stride) icfg.dense_stride = *cfg.stride;
  return icfg;
}

}  // namespace pllsim
