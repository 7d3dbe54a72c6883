#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "ehdd/simulate.hpp"

using namespace ehdd;

namespace {

NetworkConfig small_network(int sensors, double prior_h1 = 0.5) {
  NetworkConfig net;
  net.prior_h1 = prior_h1;
  net.prior_h0 = 1.0 - prior_h1;
  net.power_budget_watts = 0.01;
  net.levels = 2;
  net.energy.arrival_rate = 2.0;
  net.energy.capacity = 5;
  net.energy.unit_joules = 0.01;
  net.energy.slot_seconds = 10.0;
  SensorParams s;
  s.gain_mean_square = 2.0;
  s.channel_noise_var = 1e-3;  // one cell per slot (1 mW)
  s.observation_noise_var = 1.0;
  s.signal_amplitude = amplitude_for_snr_db(3.0, 1.0);
  s.target_detection_prob = 0.9;
  net.sensors.assign(sensors, s);
  return net;
}

Policy active_policy() {
  Policy p;
  p.scales = {0.4, 0.8};
  p.thresholds = {0.0, 1.2, INFINITY};
  return p;
}

Policy silent_policy() {
  Policy p;
  p.scales = {0.1, 0.1};  // floor(0.1 k) = 0 for k <= 5
  p.thresholds = {0.0, 1.2, INFINITY};
  return p;
}

}  // namespace

TEST_CASE("exact fusion statistic") {
  LocalDetector flat;
  flat.prob_detect = flat.prob_false_alarm = 0.3;
  std::vector<double> y{0.7, -1.2}, g{1.0, 2.0}, amp{0.5, 1.0};
  std::vector<LocalDetector> det{flat, flat};
  std::vector<double> s2{1.0, 1.0};
  CHECK(fusion_llr_exact(y, g, amp, det, s2) == Catch::Approx(0.0).margin(1e-14));

  // Strong positive received value saturates at log(pd/pf) per sensor.
  LocalDetector d;
  d.prob_detect = 0.9;
  d.prob_false_alarm = 0.1;
  std::vector<double> y1{40.0}, g1{1.0}, a1{1.0};
  std::vector<LocalDetector> det1{d};
  std::vector<double> s21{1.0};
  CHECK(fusion_llr_exact(y1, g1, a1, det1, s21) ==
        Catch::Approx(std::log(9.0)).epsilon(1e-9));

  // Silent sensor contributes nothing.
  std::vector<double> a0{0.0};
  CHECK(fusion_llr_exact(y1, g1, a0, det1, s21) == Catch::Approx(0.0).margin(1e-12));

  // Stabilized form equals the naive formula at moderate magnitudes.
  Rng rng(derive_seed(17, 0));
  for (int i = 0; i < 200; ++i) {
    const double yy = 4.0 * rng.normal();
    const double gg = rng.rayleigh(1.5);
    const double aa = rng.uniform();
    std::vector<double> yv{yy}, gv{gg}, av{aa};
    const double stabilized = fusion_llr_exact(yv, gv, av, det1, s21);
    const double t1 = std::exp(-0.5 * (yy - gg * aa) * (yy - gg * aa));
    const double t0 = std::exp(-0.5 * yy * yy);
    const double naive = std::log((0.9 * t1 + 0.1 * t0) / (0.1 * t1 + 0.9 * t0));
    CHECK(stabilized == Catch::Approx(naive).margin(1e-12));
  }
}

TEST_CASE("approximate fusion statistic") {
  // Identical conditional moments: z = 0, the decision rides on tau'.
  std::vector<MomentPair> same{{0.0, 1.0, 0.0, 1.0}, {0.2, 1.5, 0.2, 1.5}};
  std::vector<double> y{0.4, -0.7};
  const ApproxFusion f = fusion_statistic_approx(y, same, 0.5, 0.5);
  CHECK(f.statistic == Catch::Approx(0.0).margin(1e-14));
  CHECK(f.threshold == Catch::Approx(0.0).margin(1e-14));
  CHECK(f.decision == 0);

  // Equal variances under both hypotheses: R = 0, tau' = 2 tau.
  std::vector<MomentPair> eq{{0.0, 1.3, 0.8, 1.3}};
  std::vector<double> y1{0.1};
  const ApproxFusion g = fusion_statistic_approx(y1, eq, 0.7, 0.3);
  CHECK(g.threshold == Catch::Approx(2.0 * std::log(0.7 / 0.3)).epsilon(1e-12));
}

TEST_CASE("silent network errs at the prior rate") {
  const NetworkConfig net = small_network(1, 0.4);
  const SimResult r =
      run_monte_carlo(net, {silent_policy()}, 200000, 21, FusionRule::exact);
  // Never any signal: the FC always picks the prior-favored hypothesis, so
  // the error rate is the smaller prior.
  CHECK(std::fabs(r.empirical_pe - 0.4) <= r.ci_half_width * 1.2 + 0.002);
  CHECK(r.slots_h0 + r.slots_h1 == r.n_slots);
}

TEST_CASE("per-sensor transmission rates match the detector") {
  const NetworkConfig net = small_network(2);
  const std::vector<Policy> policies{active_policy(), active_policy()};
  const long slots = 400000;
  const SimResult r = run_monte_carlo(net, policies, slots, 5);
  const LocalDetector det = derive_local_detector(net.sensors[0]);
  for (int s = 0; s < 2; ++s) {
    const double rate1 = static_cast<double>(r.tx_given_h1[s]) / r.slots_h1;
    const double rate0 = static_cast<double>(r.tx_given_h0[s]) / r.slots_h0;
    const double sd1 =
        std::sqrt(det.prob_detect * (1 - det.prob_detect) / r.slots_h1);
    const double sd0 =
        std::sqrt(det.prob_false_alarm * (1 - det.prob_false_alarm) / r.slots_h0);
    CHECK(std::fabs(rate1 - det.prob_detect) <= 3.0 * sd1);
    CHECK(std::fabs(rate0 - det.prob_false_alarm) <= 3.0 * sd0);
  }
}

TEST_CASE("battery occupancy converges to the stationary vector") {
  NetworkConfig net = small_network(1);
  net.levels = 4;
  net.energy.capacity = 6;
  net.energy.arrival_rate = 2.0;
  net.sensors[0].gain_mean_square = 1.0;
  Policy p;
  p.scales = {0.1, 0.3, 0.5, 0.7};
  p.thresholds = {0.0, 0.2, 1.4, 3.6, INFINITY};

  for (std::uint64_t seed : {1ULL, 2ULL}) {
    CHECK(empirical_battery_check(net, {p}, 1000000, seed) < 0.01);
  }
}

TEST_CASE("no consumption drives the battery to the top") {
  const NetworkConfig net = small_network(1);
  const SimResult r = run_monte_carlo(net, {silent_policy()}, 100000, 9);
  // The steady state is a point mass at capacity, and so is the occupancy.
  CHECK(r.battery_hist[0][net.energy.capacity] == r.n_slots);
}

TEST_CASE("fixed seeds replay and worker count does not matter") {
  const NetworkConfig net = small_network(2);
  const std::vector<Policy> policies{active_policy(), active_policy()};
  SimOptions serial;
  serial.workers = 1;
  SimOptions parallel;
  parallel.workers = 2;
  const SimResult a =
      run_monte_carlo(net, policies, 150000, 33, FusionRule::exact, serial);
  const SimResult b =
      run_monte_carlo(net, policies, 150000, 33, FusionRule::exact, parallel);
  CHECK(a.errors == b.errors);
  CHECK(a.battery_hist == b.battery_hist);
  CHECK(a.tx_given_h0 == b.tx_given_h0);

  const SimResult c =
      run_monte_carlo(net, policies, 150000, 34, FusionRule::exact, serial);
  CHECK(a.errors != c.errors);  // different seed, different stream
}

TEST_CASE("exact fusion does not lose to the surrogate rule") {
  const NetworkConfig net = small_network(3);
  const std::vector<Policy> policies(3, active_policy());
  const long slots = 300000;
  const SimResult exact = run_monte_carlo(net, policies, slots, 71);
  const SimResult approx =
      run_monte_carlo(net, policies, slots, 71, FusionRule::clt_approx);
  CHECK(exact.empirical_pe <=
        approx.empirical_pe + exact.ci_half_width + approx.ci_half_width);
}

TEST_CASE("surrogate decisions track the exact rule at moderate SNR") {
  // Single sensor, g^2 a^2 / sigma_w^2 ~ 1: the two rules should agree on
  // the vast majority of draws.
  LocalDetector det;
  det.prob_detect = 0.9;
  det.prob_false_alarm = 0.1;
  const double g = 1.2, alpha = 0.8, sw2 = 1.0;
  const MomentPair mp = moment_match(g, alpha, det, sw2);
  Rng rng(derive_seed(61, 0));
  const int draws = 100000;
  int agree = 0;
  const std::vector<LocalDetector> dets{det};
  const std::vector<double> gains{g}, amps{alpha}, noise{sw2};
  const std::vector<MomentPair> mps{mp};
  for (int i = 0; i < draws; ++i) {
    const bool h = rng.bernoulli(0.5);
    const bool tx = rng.bernoulli(h ? det.prob_detect : det.prob_false_alarm);
    const std::vector<double> y{g * (tx ? alpha : 0.0) + rng.normal()};
    const int exact = fusion_llr_exact(y, gains, amps, dets, noise) > 0.0;
    const int approx = fusion_statistic_approx(y, mps, 0.5, 0.5).decision;
    agree += exact == approx;
  }
  CHECK(static_cast<double>(agree) / draws >= 0.95);
}

TEST_CASE("cold start with burn-in stays close to steady state") {
  NetworkConfig net = small_network(1);
  SimOptions opts;
  opts.cold_start = true;
  const SimResult r =
      run_monte_carlo(net, {active_policy()}, 200000, 3, FusionRule::exact, opts);
  CHECK(r.empirical_pe > 0.0);
  CHECK(r.empirical_pe < 0.5);
}

TEST_CASE("slot trace dump") {
  const NetworkConfig net = small_network(2);
  std::ostringstream trace;
  SimOptions opts;
  opts.trace_slots = 25;
  opts.trace_out = &trace;
  opts.workers = 1;
  run_monte_carlo(net, {active_policy(), active_policy()}, 1000, 8,
                  FusionRule::exact, opts);
  std::istringstream in(trace.str());
  std::string line;
  long rows = 0;
  while (std::getline(in, line)) {
    // slot, hypothesis, 8 fields x 2 sensors, fusion llr, decision
    CHECK(std::count(line.begin(), line.end(), ',') == 2 + 16 + 2 - 1);
    ++rows;
  }
  CHECK(rows == 25);
  CHECK(trace_csv_header(2).find("s1_received_y") != std::string::npos);
}
