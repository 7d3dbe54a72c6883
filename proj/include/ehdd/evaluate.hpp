// Per-sensor policy evaluation: detector, battery chain, objective, and
// average power assembled into one record. This is the hot path of every
// solver, so the per-sensor constants are computed once and reused.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ehdd/battery.hpp"
#include "ehdd/config.hpp"
#include "ehdd/metrics.hpp"

namespace ehdd {

/// Outcome of evaluating one policy for one sensor.
struct EvalResult {
  double objective = 0.0;    // sum over intervals of the averaged J-divergence
  double power_watts = 0.0;  // average transmit power
  bool feasible = false;
  double analytic_pe = std::numeric_limits<double>::quiet_NaN();
  double empirical_pe = std::numeric_limits<double>::quiet_NaN();
};

/// Everything about one sensor that does not change across candidate
/// policies.
class SensorEvaluator {
 public:
  SensorEvaluator(const SensorParams& sensor, const EnergyModel& energy,
                  double prior_h0, double prior_h1, double power_budget_watts)
      : sensor_(sensor),
        energy_(energy),
        budget_(power_budget_watts),
        detector_(derive_local_detector(sensor)),
        arrivals_(clipped_poisson(energy.arrival_rate, energy.capacity)),
        transmit_prob_(transmit_probability(detector_, prior_h0, prior_h1)) {}

  const LocalDetector& detector() const { return detector_; }
  const SensorParams& sensor() const { return sensor_; }
  const EnergyModel& energy() const { return energy_; }
  double transmit_prob() const { return transmit_prob_; }
  double budget() const { return budget_; }

  BatteryChain chain(const Policy& policy) const {
    return build_chain(policy, arrivals_,
                       interval_probs(sensor_.gain_mean_square, policy.thresholds),
                       transmit_prob_);
  }

  EvalResult evaluate(const Policy& policy) const {
    const IntervalProbs pi =
        interval_probs(sensor_.gain_mean_square, policy.thresholds);
    const BatteryChain bc = build_chain(policy, arrivals_, pi, transmit_prob_);
    EvalResult r;
    for (int l = 0; l < policy.levels(); ++l) {
      r.objective +=
          avg_j_interval(detector_, sensor_.channel_noise_var,
                         sensor_.gain_mean_square, policy, bc, l,
                         energy_.unit_power());
      r.power_watts +=
          avg_power_interval(policy, bc, pi, transmit_prob_, l, energy_);
    }
    r.feasible = r.power_watts <= budget_ + 1e-12;
    return r;
  }

 private:
  SensorParams sensor_;
  EnergyModel energy_;
  double budget_;
  LocalDetector detector_;
  ArrivalPmf arrivals_;
  double transmit_prob_;
};

inline SensorEvaluator make_evaluator(const NetworkConfig& net, int sensor_index) {
  return SensorEvaluator(net.sensors.at(sensor_index), net.energy, net.prior_h0,
                         net.prior_h1, net.power_budget_watts);
}

}  // namespace ehdd
