// Experiment sweeps: vary one parameter over a list of values, solve with the
// requested methods, measure analytic and empirical error probabilities, and
// emit rows with a frozen CSV schema. Cells are independent jobs; output
// order never depends on scheduling.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ehdd/evaluate.hpp"
#include "ehdd/metrics.hpp"
#include "ehdd/optimize.hpp"
#include "ehdd/parallel.hpp"
#include "ehdd/simulate.hpp"

namespace ehdd {

enum class SweepVariable { power_budget, capacity, arrival_rate, snr, levels, sensors };

inline const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::power_budget: return "P0";
    case SweepVariable::capacity: return "K";
    case SweepVariable::arrival_rate: return "rho";
    case SweepVariable::snr: return "snr_s";
    case SweepVariable::levels: return "L";
    case SweepVariable::sensors: return "N";
  }
  return "?";
}

inline SweepVariable sweep_variable_from_string(const std::string& s) {
  if (s == "P0") return SweepVariable::power_budget;
  if (s == "K") return SweepVariable::capacity;
  if (s == "rho") return SweepVariable::arrival_rate;
  if (s == "snr_s") return SweepVariable::snr;
  if (s == "L") return SweepVariable::levels;
  if (s == "N") return SweepVariable::sensors;
  throw std::invalid_argument("unknown sweep variable: " + s);
}

struct SweepSpec {
  SweepVariable variable = SweepVariable::power_budget;
  std::vector<double> values;
  std::vector<SolveMethod> methods;
  int replications = 1;

  void validate() const {
    detail::require(!values.empty(), "sweep.values", "must be non-empty");
    detail::require(!methods.empty(), "sweep.methods", "must be non-empty");
    detail::require(replications >= 1, "sweep.replications", "must be >= 1");
    for (std::size_t i = 1; i < values.size(); ++i) {
      detail::require(values[i] > values[i - 1], "sweep.values",
                      "must be strictly increasing");
    }
  }
};

/// One output row; numeric fields are NaN when the cell failed.
struct SweepRow {
  std::string variable;
  double value = 0.0;
  std::string method;
  double objective = NAN;
  double avg_power_watts = NAN;
  double analytic_pe = NAN;
  double empirical_pe = NAN;
  double ci_half_width = NAN;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  std::string error;
};

/// Applies one sweep value to a copy of the base configuration.
inline NetworkConfig apply_variable(NetworkConfig cfg, SweepVariable var,
                                    double value) {
  switch (var) {
    case SweepVariable::power_budget:
      cfg.power_budget_watts = value;
      break;
    case SweepVariable::capacity:
      cfg.energy.capacity = static_cast<int>(value);
      break;
    case SweepVariable::arrival_rate:
      cfg.energy.arrival_rate = value;
      break;
    case SweepVariable::snr:
      for (auto& s : cfg.sensors) {
        s.signal_amplitude = amplitude_for_snr_db(value, s.observation_noise_var);
      }
      break;
    case SweepVariable::levels:
      cfg.levels = static_cast<int>(value);
      break;
    case SweepVariable::sensors:
      cfg.sensors.assign(static_cast<std::size_t>(value), cfg.sensors.at(0));
      break;
  }
  cfg.validate();
  return cfg;
}

/// Runs every (value, method, replication) cell. Each cell derives its own
/// seed from (master seed, cell index), so results are reproducible and
/// independent of the worker count. Wall times are recorded only when
/// record_timings is set; otherwise the column is zero so that identical
/// (config, seed) runs are byte-identical.
inline std::vector<SweepRow> run_sweep(const NetworkConfig& base,
                                       const SweepSpec& spec, const GridSpec& grid,
                                       const RrsParams& rrs, long slots,
                                       std::uint64_t seed, int workers = 0,
                                       bool record_timings = false) {
  base.validate();
  spec.validate();
  struct Cell {
    double value;
    SolveMethod method;
    int rep;
  };
  std::vector<Cell> cells;
  for (double v : spec.values) {
    for (SolveMethod m : spec.methods) {
      for (int r = 0; r < spec.replications; ++r) cells.push_back({v, m, r});
    }
  }
  std::vector<SweepRow> rows(cells.size());

  parallel_for(static_cast<long>(cells.size()), workers, [&](long i) {
    const Cell& cell = cells[i];
    SweepRow& row = rows[i];
    row.variable = to_string(spec.variable);
    row.value = cell.value;
    row.method = to_string(cell.method);
    row.seed = derive_seed(seed, /*tag=*/0x535750, static_cast<std::uint64_t>(i));
    const auto started = std::chrono::steady_clock::now();
    try {
      const NetworkConfig cfg = apply_variable(base, spec.variable, cell.value);
      const auto reports = solve_p1(cfg, cell.method, grid, rrs, row.seed);

      double objective = 0.0, max_power = 0.0;
      std::vector<Policy> policies;
      for (const auto& r : reports) {
        if (!r.feasible) throw std::runtime_error("infeasible");
        objective += r.best.objective;
        max_power = std::max(max_power, r.best.avg_power);
        policies.push_back(r.best.policy);
      }
      row.objective = objective;
      row.avg_power_watts = max_power;

      std::vector<LocalDetector> detectors;
      std::vector<BatteryChain> chains;
      for (int n = 0; n < cfg.sensor_count(); ++n) {
        const SensorEvaluator eval = make_evaluator(cfg, n);
        detectors.push_back(eval.detector());
        chains.push_back(eval.chain(policies[n]));
      }
      row.analytic_pe = estimate_error_prob_clt(cfg, detectors, policies, chains,
                                                20000, row.seed);
      SimOptions opts;
      opts.workers = 1;  // cells already run in parallel
      const SimResult mc =
          run_monte_carlo(cfg, policies, slots, row.seed, FusionRule::exact, opts);
      row.empirical_pe = mc.empirical_pe;
      row.ci_half_width = mc.ci_half_width;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (record_timings) {
      row.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
              .count();
    }
  });
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output (frozen schema)
// ---------------------------------------------------------------------------

inline const char* sweep_csv_header() {
  return "variable,value,method,objective,avg_power_watts,analytic_pe,"
         "empirical_pe,ci_half_width,seed,wall_time,error";
}

namespace detail {
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace detail

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << sweep_csv_header() << '\n';
  for (const SweepRow& r : rows) {
    os << r.variable << ',' << detail::csv_number(r.value) << ',' << r.method
       << ',' << detail::csv_number(r.objective) << ','
       << detail::csv_number(r.avg_power_watts) << ','
       << detail::csv_number(r.analytic_pe) << ','
       << detail::csv_number(r.empirical_pe) << ','
       << detail::csv_number(r.ci_half_width) << ',' << r.seed << ','
       << detail::csv_number(r.wall_time) << ',' << r.error << '\n';
  }
}

}  // namespace ehdd
