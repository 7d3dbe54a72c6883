// Monte-Carlo simulation of the full per-slot loop: hypothesis draw, local
// observations and LLR gating, fading, battery dynamics, and fusion at the
// FC. Slots are simulated in fixed-size blocks with disjoint sub-seeded
// streams; batteries restart each block from the steady-state distribution,
// so results are identical whether blocks run serially or in parallel.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "ehdd/battery.hpp"
#include "ehdd/config.hpp"
#include "ehdd/evaluate.hpp"
#include "ehdd/metrics.hpp"
#include "ehdd/parallel.hpp"
#include "ehdd/rng.hpp"

namespace ehdd {

enum class FusionRule { exact, clt_approx };

inline const char* to_string(FusionRule r) {
  return r == FusionRule::exact ? "exact" : "clt-approx";
}

inline FusionRule fusion_from_string(const std::string& s) {
  if (s == "exact") return FusionRule::exact;
  if (s == "clt-approx") return FusionRule::clt_approx;
  throw std::invalid_argument("unknown fusion rule: " + s);
}

/// Everything observable about a single slot, for the optional trace dump.
struct SlotTrace {
  long slot = 0;
  int hypothesis = 0;
  std::vector<double> observation, llr, gain, received_y, amplitude;
  std::vector<int> interval, battery_before, consumed;
  double fusion_llr = 0.0;
  int decision = 0;
};

struct SimOptions {
  bool cold_start = false;  // start blocks with empty batteries + burn-in
  long trace_slots = 0;     // dump the first N slots of block 0
  std::ostream* trace_out = nullptr;
  int workers = 0;          // 0 = resolve from environment/hardware
  long block_slots = 1 << 16;
};

struct SimResult {
  long n_slots = 0;
  long errors = 0;
  double empirical_pe = 0.0;
  double ci_half_width = 0.0;  // 95% binomial half-width
  long slots_h0 = 0, slots_h1 = 0;
  std::vector<std::vector<long>> battery_hist;  // [sensor][state]
  std::vector<long> tx_given_h0, tx_given_h1;   // transmissions per sensor
};

/// Exact Bayesian fusion statistic: per-sensor log ratio of the two-component
/// Gaussian mixtures, stabilized by factoring out the larger exponent. The
/// amplitudes are the would-be transmit levels (the FC is granted the battery
/// state and interval of each sensor).
inline double fusion_llr_exact(std::span<const double> received,
                               std::span<const double> gains,
                               std::span<const double> amplitudes,
                               std::span<const LocalDetector> detectors,
                               std::span<const double> channel_noise_vars) {
  const std::size_t n = received.size();
  if (gains.size() != n || amplitudes.size() != n || detectors.size() != n ||
      channel_noise_vars.size() != n) {
    throw std::invalid_argument("fusion_llr_exact: length mismatch");
  }
  double delta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s2 = channel_noise_vars[i];
    const double y = received[i];
    const double d = y - gains[i] * amplitudes[i];
    const double e_tx = -0.5 * d * d / s2;
    const double e_idle = -0.5 * y * y / s2;
    const double m = e_tx > e_idle ? e_tx : e_idle;
    const double pd = detectors[i].prob_detect;
    const double pf = detectors[i].prob_false_alarm;
    delta += std::log(pd * std::exp(e_tx - m) + (1.0 - pd) * std::exp(e_idle - m)) -
             std::log(pf * std::exp(e_tx - m) + (1.0 - pf) * std::exp(e_idle - m));
  }
  return delta;
}

/// Gaussian-surrogate fusion: statistic, threshold, and the binary decision.
struct ApproxFusion {
  double statistic = 0.0;  // sum of per-sensor z terms
  double threshold = 0.0;  // tau' = 2(tau - R)
  int decision = 0;
};

inline ApproxFusion fusion_statistic_approx(std::span<const double> received,
                                            std::span<const MomentPair> moments,
                                            double prior_h0, double prior_h1) {
  if (received.size() != moments.size()) {
    throw std::invalid_argument("fusion_statistic_approx: length mismatch");
  }
  ApproxFusion out;
  double log_det = 0.0;
  for (std::size_t i = 0; i < received.size(); ++i) {
    const auto& mp = moments[i];
    const double y = received[i];
    const double d0 = y - mp.mean0, d1 = y - mp.mean1;
    out.statistic += d0 * d0 / mp.var0 - d1 * d1 / mp.var1;
    log_det += 0.5 * std::log(mp.var0 / mp.var1);
  }
  out.threshold = 2.0 * (std::log(prior_h0 / prior_h1) - log_det);
  out.decision = out.statistic > out.threshold ? 1 : 0;
  return out;
}

namespace detail {

// Sub-seed stream tags for the simulator.
enum class Stream : std::uint64_t {
  hypothesis = 1,
  observation = 2,
  gain = 3,
  channel = 4,
  arrival = 5,
  battery_init = 6,
};

inline Rng block_rng(std::uint64_t seed, long block, Stream stream, int sensor) {
  const std::uint64_t tag =
      (static_cast<std::uint64_t>(stream) << 32) | static_cast<std::uint32_t>(sensor);
  return Rng(derive_seed(seed, tag, static_cast<std::uint64_t>(block)));
}

}  // namespace detail

/// Runs the per-slot Monte-Carlo loop and accumulates detection errors,
/// battery occupancy, and per-sensor transmission counts.
inline SimResult run_monte_carlo(const NetworkConfig& net,
                                 const std::vector<Policy>& policies,
                                 long n_slots, std::uint64_t seed,
                                 FusionRule rule = FusionRule::exact,
                                 const SimOptions& options = {}) {
  net.validate();
  const int n_sensors = net.sensor_count();
  if (static_cast<int>(policies.size()) != n_sensors) {
    throw std::invalid_argument("run_monte_carlo: one policy per sensor required");
  }
  if (n_slots < 1) throw std::invalid_argument("run_monte_carlo: n_slots >= 1");

  const int capacity = net.energy.capacity;
  const double unit_power = net.energy.unit_power();
  const ArrivalPmf arrivals =
      clipped_poisson(net.energy.arrival_rate, capacity);

  std::vector<LocalDetector> detectors(n_sensors);
  std::vector<std::vector<double>> phi(n_sensors);
  std::vector<double> sigma_w2(n_sensors);
  for (int s = 0; s < n_sensors; ++s) {
    policies[s].validate("policy[" + std::to_string(s) + "]");
    detectors[s] = derive_local_detector(net.sensors[s]);
    const BatteryChain chain = build_chain(
        policies[s], arrivals,
        interval_probs(net.sensors[s].gain_mean_square, policies[s].thresholds),
        transmit_probability(detectors[s], net.prior_h0, net.prior_h1));
    phi[s].assign(chain.phi.data(), chain.phi.data() + chain.phi.size());
    sigma_w2[s] = net.sensors[s].channel_noise_var;
  }

  const long block_slots = std::max<long>(1, options.block_slots);
  const long n_blocks = (n_slots + block_slots - 1) / block_slots;
  const long burn_in = options.cold_start ? 10L * capacity : 0;

  struct BlockAccum {
    long errors = 0, slots_h0 = 0, slots_h1 = 0;
    std::vector<std::vector<long>> hist;
    std::vector<long> tx0, tx1;
  };
  std::vector<BlockAccum> accums(n_blocks);
  std::mutex trace_mutex;

  auto run_block = [&](long b) {
    BlockAccum acc;
    acc.hist.assign(n_sensors, std::vector<long>(capacity + 1, 0));
    acc.tx0.assign(n_sensors, 0);
    acc.tx1.assign(n_sensors, 0);

    Rng hyp = detail::block_rng(seed, b, detail::Stream::hypothesis, 0);
    std::vector<Rng> obs, gai, chan, arr;
    for (int s = 0; s < n_sensors; ++s) {
      obs.push_back(detail::block_rng(seed, b, detail::Stream::observation, s));
      gai.push_back(detail::block_rng(seed, b, detail::Stream::gain, s));
      chan.push_back(detail::block_rng(seed, b, detail::Stream::channel, s));
      arr.push_back(detail::block_rng(seed, b, detail::Stream::arrival, s));
    }

    std::vector<int> battery(n_sensors, 0);
    if (!options.cold_start) {
      Rng init = detail::block_rng(seed, b, detail::Stream::battery_init, 0);
      for (int s = 0; s < n_sensors; ++s) {
        battery[s] = static_cast<int>(init.categorical(phi[s]));
      }
    }

    const long first = b * block_slots;
    const long count = std::min(block_slots, n_slots - first);
    std::vector<double> y(n_sensors), g(n_sensors), genie_amp(n_sensors);
    std::vector<MomentPair> mp(n_sensors);

    for (long t = -burn_in; t < count; ++t) {
      const bool counted = t >= 0;
      const int h = hyp.bernoulli(net.prior_h1) ? 1 : 0;
      SlotTrace trace;
      const bool tracing = counted && b == 0 && options.trace_out != nullptr &&
                           first + t < options.trace_slots;

      for (int s = 0; s < n_sensors; ++s) {
        const SensorParams& sp = net.sensors[s];
        const double sigma_v = std::sqrt(sp.observation_noise_var);
        const double x =
            (h == 1 ? sp.signal_amplitude : 0.0) + sigma_v * obs[s].normal();
        const double llr =
            (sp.signal_amplitude * x -
             0.5 * sp.signal_amplitude * sp.signal_amplitude) /
            sp.observation_noise_var;
        g[s] = gai[s].rayleigh(sp.gain_mean_square);
        const int l = policies[s].interval_of(g[s]);
        const int would = consumed_units(policies[s].scales[l], battery[s]);
        const bool transmit = llr >= detectors[s].llr_threshold;
        const int used = transmit ? would : 0;
        assert(used <= battery[s]);
        const double alpha = std::sqrt(used * unit_power);
        genie_amp[s] = std::sqrt(would * unit_power);
        y[s] = g[s] * alpha + std::sqrt(sigma_w2[s]) * chan[s].normal();
        if (rule == FusionRule::clt_approx) {
          mp[s] = moment_match(g[s], genie_amp[s], detectors[s], sigma_w2[s]);
        }

        if (counted) {
          acc.hist[s][battery[s]] += 1;
          if (transmit) (h == 1 ? acc.tx1[s] : acc.tx0[s]) += 1;
        }
        if (tracing) {
          trace.observation.push_back(x);
          trace.llr.push_back(llr);
          trace.gain.push_back(g[s]);
          trace.interval.push_back(l);
          trace.battery_before.push_back(battery[s]);
          trace.consumed.push_back(used);
          trace.amplitude.push_back(alpha);
          trace.received_y.push_back(y[s]);
        }

        const int harvested = static_cast<int>(arr[s].categorical(arrivals.q));
        battery[s] = next_state(battery[s], harvested, used, capacity);
      }

      int decision;
      double statistic;
      if (rule == FusionRule::exact) {
        statistic = fusion_llr_exact(y, g, genie_amp, detectors, sigma_w2);
        decision = statistic > std::log(net.prior_h0 / net.prior_h1) ? 1 : 0;
      } else {
        const ApproxFusion f =
            fusion_statistic_approx(y, mp, net.prior_h0, net.prior_h1);
        statistic = f.statistic;
        decision = f.decision;
      }

      if (counted) {
        acc.errors += decision != h;
        (h == 1 ? acc.slots_h1 : acc.slots_h0) += 1;
      }
      if (tracing) {
        trace.slot = first + t;
        trace.hypothesis = h;
        trace.fusion_llr = statistic;
        trace.decision = decision;
        std::lock_guard<std::mutex> lock(trace_mutex);
        auto& os = *options.trace_out;
        os << trace.slot << ',' << trace.hypothesis;
        for (int s = 0; s < n_sensors; ++s) {
          os << ',' << trace.observation[s] << ',' << trace.llr[s] << ','
             << trace.gain[s] << ',' << trace.interval[s] << ','
             << trace.battery_before[s] << ',' << trace.consumed[s] << ','
             << trace.amplitude[s] << ',' << trace.received_y[s];
        }
        os << ',' << trace.fusion_llr << ',' << trace.decision << '\n';
      }
    }
    accums[b] = std::move(acc);
  };

  parallel_for(n_blocks, options.workers, run_block);

  SimResult result;
  result.n_slots = n_slots;
  result.battery_hist.assign(n_sensors, std::vector<long>(capacity + 1, 0));
  result.tx_given_h0.assign(n_sensors, 0);
  result.tx_given_h1.assign(n_sensors, 0);
  for (const auto& acc : accums) {
    result.errors += acc.errors;
    result.slots_h0 += acc.slots_h0;
    result.slots_h1 += acc.slots_h1;
    for (int s = 0; s < n_sensors; ++s) {
      result.tx_given_h0[s] += acc.tx0[s];
      result.tx_given_h1[s] += acc.tx1[s];
      for (int k = 0; k <= capacity; ++k) {
        result.battery_hist[s][k] += acc.hist[s][k];
      }
    }
  }
  result.empirical_pe = static_cast<double>(result.errors) / n_slots;
  result.ci_half_width =
      1.96 * std::sqrt(std::max(result.empirical_pe * (1.0 - result.empirical_pe),
                                1e-300) /
                       n_slots);
  return result;
}

/// Header matching the per-slot trace rows written by run_monte_carlo.
inline std::string trace_csv_header(int n_sensors) {
  std::string h = "slot,hypothesis";
  for (int s = 0; s < n_sensors; ++s) {
    const std::string p = ",s" + std::to_string(s) + "_";
    h += p + "observation" + p + "llr" + p + "gain" + p + "interval" + p +
         "battery_before" + p + "consumed_units" + p + "amplitude" + p +
         "received_y";
  }
  return h + ",fusion_llr,decision";
}

/// Sup-norm gap between simulated battery occupancy and the stationary
/// vector, maximized over sensors.
inline double empirical_battery_check(const NetworkConfig& net,
                                      const std::vector<Policy>& policies,
                                      long n_slots, std::uint64_t seed) {
  const SimResult r = run_monte_carlo(net, policies, n_slots, seed);
  const ArrivalPmf arrivals =
      clipped_poisson(net.energy.arrival_rate, net.energy.capacity);
  double gap = 0.0;
  for (int s = 0; s < net.sensor_count(); ++s) {
    const LocalDetector det = derive_local_detector(net.sensors[s]);
    const BatteryChain chain = build_chain(
        policies[s], arrivals,
        interval_probs(net.sensors[s].gain_mean_square, policies[s].thresholds),
        transmit_probability(det, net.prior_h0, net.prior_h1));
    for (int k = 0; k <= net.energy.capacity; ++k) {
      const double freq =
          static_cast<double>(r.battery_hist[s][k]) / static_cast<double>(n_slots);
      gap = std::max(gap, std::fabs(freq - chain.phi(k)));
    }
  }
  return gap;
}

}  // namespace ehdd
