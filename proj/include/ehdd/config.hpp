// Problem parameters and the derived local-detector quantities that every
// other module consumes. All types are immutable values after construction;
// validation reports the first violated constraint with its config path.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehdd/math.hpp"

namespace ehdd {

/// Thrown by config validation; message carries the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& path, const char* what) {
  if (!ok) throw ConfigError(path + ": " + what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Per-sensor statistics.
struct SensorParams {
  double gain_mean_square = 1.0;     // E{g^2} of the Rayleigh fading gain
  double channel_noise_var = 1.0;    // receiver noise variance at the FC
  double observation_noise_var = 1.0;
  double signal_amplitude = 1.0;     // known signal level under h=1
  double target_detection_prob = 0.9;

  void validate(const std::string& path = "sensor") const {
    detail::require(gain_mean_square > 0, path + ".gain_mean_square", "must be > 0");
    detail::require(channel_noise_var > 0, path + ".channel_noise_var", "must be > 0");
    detail::require(observation_noise_var > 0, path + ".observation_noise_var",
                    "must be > 0");
    detail::require(signal_amplitude > 0, path + ".signal_amplitude", "must be > 0");
    detail::require(target_detection_prob > 0 && target_detection_prob < 1,
                    path + ".target_detection_prob", "must lie in (0,1)");
  }
};

/// Energy harvesting and storage parameters.
struct EnergyModel {
  double arrival_rate = 1.0;  // mean energy-unit arrivals per slot
  int capacity = 1;           // battery size in cells
  double unit_joules = 1.0;   // energy stored per cell
  double slot_seconds = 1.0;

  /// Transmit power of a single cell spent over one slot, in Watts.
  double unit_power() const { return unit_joules / slot_seconds; }

  void validate(const std::string& path = "energy") const {
    detail::require(arrival_rate > 0, path + ".arrival_rate", "must be > 0");
    detail::require(capacity >= 1, path + ".capacity", "must be >= 1");
    detail::require(unit_joules > 0, path + ".unit_joules", "must be > 0");
    detail::require(slot_seconds > 0, path + ".slot_seconds", "must be > 0");
  }
};

/// Transmit-power map: one scale factor per gain-quantization interval plus
/// the interval boundaries. thresholds.front() == 0, thresholds.back() == inf.
struct Policy {
  std::vector<double> scales;      // length L, each in [0,1]
  std::vector<double> thresholds;  // length L+1, strictly increasing

  int levels() const { return static_cast<int>(scales.size()); }

  void validate(const std::string& path = "policy") const {
    detail::require(!scales.empty(), path + ".scales", "must be non-empty");
    detail::require(thresholds.size() == scales.size() + 1, path + ".thresholds",
                    "must have one more entry than scales");
    detail::require(thresholds.front() == 0.0, path + ".thresholds", "must start at 0");
    detail::require(std::isinf(thresholds.back()), path + ".thresholds",
                    "must end at +infinity");
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i) {
      detail::require(thresholds[i] < thresholds[i + 1], path + ".thresholds",
                      "must be strictly increasing");
    }
    for (std::size_t i = 0; i < scales.size(); ++i) {
      detail::require(scales[i] >= 0.0 && scales[i] <= 1.0, path + ".scales",
                      "entries must lie in [0,1]");
    }
  }

  /// Interval index of a gain value.
  int interval_of(double g) const {
    int l = 0;
    while (l + 1 < levels() && g >= thresholds[l + 1]) ++l;
    return l;
  }
};

/// Whole-network configuration.
struct NetworkConfig {
  std::vector<SensorParams> sensors;
  double prior_h0 = 0.5;
  double prior_h1 = 0.5;
  double power_budget_watts = 1.0;  // average-power cap per sensor
  int levels = 1;                   // quantizer intervals L
  EnergyModel energy;

  int sensor_count() const { return static_cast<int>(sensors.size()); }

  void validate(const std::string& path = "config") const {
    detail::require(!sensors.empty(), path + ".sensors", "need at least one sensor");
    detail::require(prior_h0 > 0 && prior_h0 < 1, path + ".priors.h0",
                    "must lie in (0,1)");
    detail::require(prior_h1 > 0 && prior_h1 < 1, path + ".priors.h1",
                    "must lie in (0,1)");
    detail::require(std::fabs(prior_h0 + prior_h1 - 1.0) < 1e-12, path + ".priors",
                    "must sum to 1");
    detail::require(power_budget_watts > 0, path + ".power_budget_watts",
                    "must be > 0");
    detail::require(levels >= 1, path + ".levels", "must be >= 1");
    energy.validate(path + ".energy");
    for (std::size_t n = 0; n < sensors.size(); ++n) {
      sensors[n].validate(path + ".sensors[" + std::to_string(n) + "]");
    }
  }
};

/// Local LLR detector operating point.
struct LocalDetector {
  double llr_threshold = 0.0;
  double prob_detect = 0.5;
  double prob_false_alarm = 0.5;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Observation-channel SNR in dB, 20*log10(A/sigma_v).
inline double snr_db(const SensorParams& s) {
  return 20.0 * std::log10(s.signal_amplitude / std::sqrt(s.observation_noise_var));
}

/// Signal amplitude matching a requested observation SNR in dB.
inline double amplitude_for_snr_db(double snr, double observation_noise_var) {
  return std::pow(10.0, snr / 20.0) * std::sqrt(observation_noise_var);
}

/// LLR threshold and (pd, pf) pair that pin the detection probability at
/// target_detection_prob under the mean-shift observation model.
inline LocalDetector derive_local_detector(const SensorParams& s) {
  s.validate();
  const double snr_lin =
      s.signal_amplitude * s.signal_amplitude / s.observation_noise_var;
  const double shift = std::sqrt(snr_lin);  // A / sigma_v
  const double pd = s.target_detection_prob;
  LocalDetector det;
  det.prob_detect = pd;
  det.llr_threshold = qfunc_inv(pd) * shift + 0.5 * snr_lin;
  det.prob_false_alarm = qfunc(qfunc_inv(pd) + shift);
  return det;
}

/// Probability that a sensor transmits in a random slot.
inline double transmit_probability(const LocalDetector& det, double prior_h0,
                                   double prior_h1) {
  return prior_h0 * det.prob_false_alarm + prior_h1 * det.prob_detect;
}

/// Battery cells consumed when transmitting from state k in interval l.
inline int consumed_units(double scale, int state) {
  return static_cast<int>(std::floor(scale * state));
}

/// Transmit amplitude sqrt(floor(c_l k) b_u / T_s); zero when no whole cell
/// is released.
inline double transmit_amplitude(const Policy& policy, const EnergyModel& energy,
                                 int state, int interval) {
  if (state < 0 || state > energy.capacity) {
    throw std::out_of_range("transmit_amplitude: battery state out of range");
  }
  if (interval < 0 || interval >= policy.levels()) {
    throw std::out_of_range("transmit_amplitude: interval index out of range");
  }
  const int units = consumed_units(policy.scales[interval], state);
  return std::sqrt(units * energy.unit_power());
}

}  // namespace ehdd
