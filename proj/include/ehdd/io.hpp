// JSON input/output: run configuration files, solution records, and
// validation reports.
#pragma once

#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehdd/checks.hpp"
#include "ehdd/config.hpp"
#include "ehdd/optimize.hpp"

namespace ehdd {

struct RunConfig {
  NetworkConfig network;
  GridSpec grid;
  RrsParams rrs;
};

namespace detail {

template <typename T>
T get_required(const nlohmann::json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline SensorParams parse_sensor(const nlohmann::json& j, const std::string& path) {
  SensorParams s;
  s.gain_mean_square = get_required<double>(j, path, "gain_mean_square");
  s.channel_noise_var = get_required<double>(j, path, "channel_noise_var");
  s.observation_noise_var = get_required<double>(j, path, "observation_noise_var");
  s.target_detection_prob = get_required<double>(j, path, "target_detection_prob");
  if (j.contains("signal_amplitude")) {
    s.signal_amplitude = j.at("signal_amplitude").get<double>();
  } else if (j.contains("snr_db")) {
    s.signal_amplitude =
        amplitude_for_snr_db(j.at("snr_db").get<double>(), s.observation_noise_var);
  } else {
    throw ConfigError(path + ": need signal_amplitude or snr_db");
  }
  return s;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig rc;
  const auto priors = detail::get_required<nlohmann::json>(j, "config", "priors");
  rc.network.prior_h0 = detail::get_required<double>(priors, "config.priors", "h0");
  rc.network.prior_h1 = detail::get_required<double>(priors, "config.priors", "h1");
  rc.network.power_budget_watts =
      detail::get_required<double>(j, "config", "power_budget_watts");
  rc.network.levels = detail::get_required<int>(j, "config", "levels");

  const auto energy = detail::get_required<nlohmann::json>(j, "config", "energy");
  rc.network.energy.arrival_rate =
      detail::get_required<double>(energy, "config.energy", "arrival_rate");
  rc.network.energy.capacity =
      detail::get_required<int>(energy, "config.energy", "capacity");
  rc.network.energy.unit_joules =
      detail::get_required<double>(energy, "config.energy", "unit_joules");
  rc.network.energy.slot_seconds =
      detail::get_required<double>(energy, "config.energy", "slot_seconds");

  const auto sensors = detail::get_required<nlohmann::json>(j, "config", "sensors");
  if (!sensors.is_array()) throw ConfigError("config.sensors: must be an array");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::string path = "config.sensors[" + std::to_string(i) + "]";
    const int count = detail::get_or<int>(sensors[i], "count", 1);
    if (count < 1) throw ConfigError(path + ".count: must be >= 1");
    const SensorParams s = detail::parse_sensor(sensors[i], path);
    for (int c = 0; c < count; ++c) rc.network.sensors.push_back(s);
  }
  rc.network.validate();

  rc.grid = default_grid(rc.network.sensors.front().gain_mean_square);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    rc.grid.scale_divisions =
        detail::get_or<int>(g, "scale_divisions", rc.grid.scale_divisions);
    rc.grid.threshold_divisions =
        detail::get_or<int>(g, "threshold_divisions", rc.grid.threshold_divisions);
    rc.grid.threshold_max =
        detail::get_or<double>(g, "threshold_max", rc.grid.threshold_max);
  }
  rc.grid.validate();

  if (j.contains("rrs")) {
    const auto& r = j.at("rrs");
    rc.rrs.confidence = detail::get_or<double>(r, "confidence", rc.rrs.confidence);
    rc.rrs.percentile = detail::get_or<double>(r, "percentile", rc.rrs.percentile);
    rc.rrs.q2 = detail::get_or<int>(r, "q2", rc.rrs.q2);
    rc.rrs.shells = detail::get_or<int>(r, "shells", rc.rrs.shells);
  }
  rc.rrs.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
    return parse_run_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Policies and solution records
// ---------------------------------------------------------------------------

/// Interior thresholds only; 0 and +inf are structural.
inline nlohmann::json policy_to_json(const Policy& p) {
  nlohmann::json j;
  j["scales"] = p.scales;
  j["thresholds_interior"] = std::vector<double>(p.thresholds.begin() + 1,
                                                 p.thresholds.end() - 1);
  return j;
}

inline Policy policy_from_json(const nlohmann::json& j, const std::string& path) {
  Policy p;
  p.scales = detail::get_required<std::vector<double>>(j, path, "scales");
  const auto interior =
      detail::get_required<std::vector<double>>(j, path, "thresholds_interior");
  p.thresholds.push_back(0.0);
  p.thresholds.insert(p.thresholds.end(), interior.begin(), interior.end());
  p.thresholds.push_back(std::numeric_limits<double>::infinity());
  p.validate(path);
  return p;
}

inline nlohmann::json solution_record(const std::vector<SolveReport>& reports,
                                      SolveMethod method, std::uint64_t seed,
                                      double wall_time) {
  nlohmann::json j;
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["wall_time"] = wall_time;
  bool feasible = true;
  double objective = 0.0;
  nlohmann::json sensors = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json s;
    s["feasible"] = r.feasible;
    s["evaluations"] = r.evaluations;
    if (r.feasible) {
      s["objective"] = r.best.objective;
      s["avg_power_watts"] = r.best.avg_power;
      s["policy"] = policy_to_json(r.best.policy);
      objective += r.best.objective;
    } else {
      s["min_power_seen"] = r.min_power_seen;
      feasible = false;
    }
    sensors.push_back(std::move(s));
  }
  j["feasible"] = feasible;
  j["objective_total"] = feasible ? nlohmann::json(objective) : nlohmann::json();
  j["sensors"] = std::move(sensors);
  return j;
}

inline std::vector<Policy> policies_from_record(const nlohmann::json& record) {
  if (!record.contains("sensors")) {
    throw ConfigError("solution record: missing sensors array");
  }
  std::vector<Policy> out;
  const auto& sensors = record.at("sensors");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::string path = "sensors[" + std::to_string(i) + "]";
    if (!sensors[i].value("feasible", false)) {
      throw ConfigError(path + ": not feasible, no policy recorded");
    }
    out.push_back(policy_from_json(sensors[i].at("policy"), path + ".policy"));
  }
  return out;
}

inline nlohmann::json validation_report(const std::vector<CheckResult>& checks) {
  nlohmann::json j;
  bool pass = true;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json e;
    e["name"] = c.name;
    e["pass"] = c.pass;
    e["observed"] = c.observed;
    e["bound"] = c.expected;
    if (!c.detail.empty()) e["detail"] = c.detail;
    pass = pass && c.pass;
    list.push_back(std::move(e));
  }
  j["pass"] = pass;
  j["checks"] = std::move(list);
  return j;
}

}  // namespace ehdd
