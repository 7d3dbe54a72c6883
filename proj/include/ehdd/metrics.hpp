// Detection metrics: moment-matched Gaussian surrogates, the closed-form
// J-divergence, its interval-conditional averages via exponential integrals,
// average transmit power, the fusion-statistic moments, and the CLT
// approximation of the error probability.
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ehdd/battery.hpp"
#include "ehdd/config.hpp"
#include "ehdd/math.hpp"
#include "ehdd/rng.hpp"

namespace ehdd {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Pointwise J-divergence
// ---------------------------------------------------------------------------

/// Conditional moments of the received sample y = g*alpha*1[tx] + w under the
/// two hypotheses, after matching the Gaussian-mixture moments.
struct MomentPair {
  double mean0 = 0.0, var0 = 0.0;
  double mean1 = 0.0, var1 = 0.0;
};

inline MomentPair moment_match(double gain, double amplitude,
                               const LocalDetector& det,
                               double channel_noise_var) {
  const double ga = gain * amplitude;
  const double ga2 = ga * ga;
  MomentPair mp;
  mp.mean0 = ga * det.prob_false_alarm;
  mp.mean1 = ga * det.prob_detect;
  mp.var0 = ga2 * det.prob_false_alarm * (1.0 - det.prob_false_alarm) +
            channel_noise_var;
  mp.var1 = ga2 * det.prob_detect * (1.0 - det.prob_detect) + channel_noise_var;
  return mp;
}

/// Coefficients of the two-ratio closed form of the per-sensor J-divergence.
struct JCoefficients {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

inline JCoefficients j_coefficients(const LocalDetector& det) {
  const double pd = det.prob_detect, pf = det.prob_false_alarm;
  JCoefficients k;
  k.a = pf * (1.0 - pd) + pd * (pd - pf);
  k.c = pd * (1.0 - pf) - pf * (pd - pf);
  k.b = pd * (1.0 - pd);
  k.d = pf * (1.0 - pf);
  return k;
}

/// Per-sensor J-divergence at a given gain and amplitude. Evaluates to
/// exactly 2 when the sensor is silent or uninformative (pd == pf).
inline double j_div_pointwise(double gain, double amplitude,
                              const LocalDetector& det,
                              double channel_noise_var) {
  const JCoefficients k = j_coefficients(det);
  const double x = gain * gain * amplitude * amplitude;
  const double s = channel_noise_var;
  return (s + k.a * x) / (s + k.b * x) + (s + k.c * x) / (s + k.d * x);
}

// ---------------------------------------------------------------------------
// Interval-conditional averages
// ---------------------------------------------------------------------------

/// E{ (a + b x)/(c + d x) ; x in [y0, y1) } for x exponential with the given
/// rate, d > 0. The antiderivative reduces to Ei terms:
///   (b/d)(e^{-r y0} - e^{-r y1})
///     + (a - bc/d) (r/d) e^{rc/d} [Ei(-r y1 - rc/d) - Ei(-r y0 - rc/d)].
/// y1 may be +infinity.
inline double interval_ratio_average(double a, double b, double c, double d,
                                     double rate, double y0, double y1) {
  if (!(d > 0.0) || !(rate > 0.0) || !(y0 >= 0.0) || !(y1 > y0)) {
    throw std::invalid_argument("interval_ratio_average: invalid inputs");
  }
  const double cr = c * rate / d;
  auto decay = [&](double y) { return std::isinf(y) ? 0.0 : std::exp(-rate * y); };
  // e^{cr} Ei(-rate y - cr) folded into one scaled evaluation: cr can exceed
  // the overflow threshold on its own when d << c.
  auto ei_term = [&](double y) {
    return std::isinf(y)
               ? 0.0
               : decay(y) * exp_integral_ei_scaled(-rate * y - cr);
  };
  const double head = (b / d) * (decay(y0) - decay(y1));
  const double tail = (a - b * c / d) * (rate / d) * (ei_term(y1) - ei_term(y0));
  const double out = head + tail;
  if (!std::isfinite(out)) {
    throw MetricError("interval_ratio_average: non-finite result");
  }
  return out;
}

/// Battery-averaged J-divergence mass of one quantization interval:
///   sum_k phi_k Int_{mu_l}^{mu_{l+1}} J(g, alpha(k,l)) f_g(g) dg,
/// computed in the g^2 (exponential) domain. Silent states contribute the
/// exact alpha = 0 value of 2 per unit probability instead of the Ei form.
inline double avg_j_interval(const LocalDetector& det, double channel_noise_var,
                             double gain_mean_square, const Policy& policy,
                             const BatteryChain& chain, int interval,
                             double unit_power) {
  if (interval < 0 || interval >= policy.levels()) {
    throw std::out_of_range("avg_j_interval: interval index out of range");
  }
  const JCoefficients k = j_coefficients(det);
  const double s = channel_noise_var;
  const double rate = 1.0 / gain_mean_square;
  const double mu_lo = policy.thresholds[interval];
  const double mu_hi = policy.thresholds[interval + 1];
  const double y0 = mu_lo * mu_lo;
  const double y1 = std::isinf(mu_hi) ? mu_hi : mu_hi * mu_hi;
  const double cell_prob =
      std::exp(-rate * y0) - (std::isinf(y1) ? 0.0 : std::exp(-rate * y1));

  if (!(k.b > 0.0) || !(k.d > 0.0)) {
    throw MetricError("avg_j_interval: degenerate detector (pd or pf in {0,1})");
  }

  double total = 0.0;
  for (int state = 0; state <= chain.capacity; ++state) {
    const double mass = chain.phi(state);
    if (mass == 0.0) continue;
    const int units = consumed_units(policy.scales[interval], state);
    if (units == 0) {
      total += mass * 2.0 * cell_prob;
      continue;
    }
    const double p = units * unit_power;  // alpha^2
    const double value =
        interval_ratio_average(s, k.a * p, s, k.b * p, rate, y0, y1) +
        interval_ratio_average(s, k.c * p, s, k.d * p, rate, y0, y1);
    total += mass * value;
  }
  if (!std::isfinite(total)) {
    throw MetricError("avg_j_interval: non-finite result");
  }
  return total;
}

/// Average transmit power drawn in one interval, in Watts.
inline double avg_power_interval(const Policy& policy, const BatteryChain& chain,
                                 const IntervalProbs& intervals,
                                 double transmit_prob, int interval,
                                 const EnergyModel& energy) {
  if (interval < 0 || interval >= policy.levels()) {
    throw std::out_of_range("avg_power_interval: interval index out of range");
  }
  double units = 0.0;
  for (int state = 0; state <= chain.capacity; ++state) {
    units += chain.phi(state) * consumed_units(policy.scales[interval], state);
  }
  return transmit_prob * intervals.p[interval] * units * energy.unit_power();
}

// ---------------------------------------------------------------------------
// Fusion-statistic moments and CLT error probability
// ---------------------------------------------------------------------------

/// Conditional mean and variance of the per-sensor fusion term
/// z = (y-m0)^2/v0 - (y-m1)^2/v1 under each hypothesis.
struct ZMoments {
  double mean0 = 0.0, var0 = 0.0;
  double mean1 = 0.0, var1 = 0.0;
};

namespace detail {
struct Quadratic {
  double a, b, c;
};
inline Quadratic z_quadratic(const MomentPair& mp) {
  Quadratic q;
  q.a = 1.0 / mp.var0 - 1.0 / mp.var1;
  q.b = 2.0 * mp.mean1 / mp.var1 - 2.0 * mp.mean0 / mp.var0;
  q.c = mp.mean0 * mp.mean0 / mp.var0 - mp.mean1 * mp.mean1 / mp.var1;
  return q;
}
}  // namespace detail

inline ZMoments z_moments(const MomentPair& mp) {
  if (!(mp.var0 > 0.0) || !(mp.var1 > 0.0)) {
    throw std::invalid_argument("z_moments: variances must be positive");
  }
  const auto [a, b, c] = detail::z_quadratic(mp);
  auto fill = [&](double m, double v, double& mean, double& var) {
    mean = a * (m * m + v) + b * m + c;
    var = 2.0 * a * a * v * (2.0 * m * m + v) + b * v * (b + 4.0 * a * m);
  };
  ZMoments z;
  fill(mp.mean0, mp.var0, z.mean0, z.var0);
  fill(mp.mean1, mp.var1, z.mean1, z.var1);
  return z;
}

/// Density of z under hypothesis h, from the two roots of the quadratic and
/// the Gaussian surrogate of y. Defined only when var0 != var1.
inline double z_pdf(const MomentPair& mp, double z, int hypothesis) {
  const double dv = mp.var1 - mp.var0;
  if (dv == 0.0) {
    throw std::domain_error("z_pdf: var0 == var1 has a degenerate (linear) map");
  }
  const double dm = mp.mean0 - mp.mean1;
  const double radicand = dm * dm + z * dv;
  if (radicand < 0.0) {
    throw std::domain_error("z_pdf: argument outside the support");
  }
  const double root = std::sqrt(mp.var0 * mp.var1) * std::sqrt(radicand);
  const double slope = 2.0 / std::sqrt(mp.var0 * mp.var1) * std::sqrt(radicand);
  if (slope == 0.0) return std::numeric_limits<double>::infinity();
  const double base = mp.mean0 * mp.var1 - mp.mean1 * mp.var0;
  const double y_hi = (base + root) / dv;
  const double y_lo = (base - root) / dv;
  const double m = hypothesis == 0 ? mp.mean0 : mp.mean1;
  const double v = hypothesis == 0 ? mp.var0 : mp.var1;
  return (normal_pdf(y_hi, m, v) + normal_pdf(y_lo, m, v)) / slope;
}

/// CLT approximation of the fusion error probability for one realization of
/// the per-sensor moments. log_det_term is R = (1/2) sum log(var0/var1); the
/// decision threshold is tau' = 2(log(prior0/prior1) - R). Denominators use
/// standard deviations.
inline double clt_error_prob(std::span<const ZMoments> sensors, double prior_h0,
                             double prior_h1, double log_det_term) {
  if (sensors.empty()) {
    throw std::invalid_argument("clt_error_prob: need at least one sensor");
  }
  double m0 = 0.0, m1 = 0.0, v0 = 0.0, v1 = 0.0;
  for (const auto& z : sensors) {
    m0 += z.mean0;
    m1 += z.mean1;
    v0 += z.var0;
    v1 += z.var1;
  }
  if (!(v0 > 0.0) || !(v1 > 0.0)) {
    throw MetricError("clt_error_prob: zero variance under a hypothesis");
  }
  const double tau = std::log(prior_h0 / prior_h1);
  const double tau_prime = 2.0 * (tau - log_det_term);
  return prior_h0 * qfunc((tau_prime - m0) / std::sqrt(v0)) +
         prior_h1 * (1.0 - qfunc((tau_prime - m1) / std::sqrt(v1)));
}

/// Semi-analytic error probability of a configured network: averages the
/// conditional CLT expression over sampled gains and steady-state battery
/// states (the would-be amplitude of each sensor, gate aside). Draw count
/// and seed pin the estimate exactly.
inline double estimate_error_prob_clt(
    const NetworkConfig& net, const std::vector<LocalDetector>& detectors,
    const std::vector<Policy>& policies, const std::vector<BatteryChain>& chains,
    int draws, std::uint64_t seed) {
  const int n_sensors = net.sensor_count();
  if (static_cast<int>(policies.size()) != n_sensors ||
      static_cast<int>(detectors.size()) != n_sensors ||
      static_cast<int>(chains.size()) != n_sensors) {
    throw std::invalid_argument("estimate_error_prob_clt: size mismatch");
  }
  Rng rng(derive_seed(seed, /*tag=*/0x434c54));
  const double unit_power = net.energy.unit_power();
  std::vector<ZMoments> z(n_sensors);
  std::vector<double> phi_pmf;
  double acc = 0.0;
  for (int it = 0; it < draws; ++it) {
    double log_det = 0.0;
    bool all_silent = true;
    for (int n = 0; n < n_sensors; ++n) {
      phi_pmf.assign(chains[n].phi.data(),
                     chains[n].phi.data() + chains[n].phi.size());
      const int state = static_cast<int>(rng.categorical(phi_pmf));
      const double g = rng.rayleigh(net.sensors[n].gain_mean_square);
      const int l = policies[n].interval_of(g);
      const double alpha =
          std::sqrt(consumed_units(policies[n].scales[l], state) * unit_power);
      const MomentPair mp =
          moment_match(g, alpha, detectors[n], net.sensors[n].channel_noise_var);
      z[n] = z_moments(mp);
      log_det += 0.5 * std::log(mp.var0 / mp.var1);
      if (alpha > 0.0) all_silent = false;
    }
    if (all_silent) {
      // Degenerate slot: the statistic is identically zero, the FC falls
      // back to the prior-favored hypothesis.
      const double tau = std::log(net.prior_h0 / net.prior_h1);
      acc += tau < 0.0 ? net.prior_h0 : net.prior_h1;
      continue;
    }
    acc += clt_error_prob(z, net.prior_h0, net.prior_h1, log_det);
  }
  return acc / draws;
}

}  // namespace ehdd
