#include <catch_amalgamated.hpp>

#include <cmath>

#include "ehdd/config.hpp"
#include "ehdd/io.hpp"

using namespace ehdd;

namespace {
SensorParams sensor_with_shift(double shift, double pd = 0.9) {
  SensorParams s;
  s.signal_amplitude = shift;
  s.observation_noise_var = 1.0;
  s.target_detection_prob = pd;
  return s;
}
}  // namespace

TEST_CASE("derive_local_detector pins the detection probability") {
  // shift A/sigma_v = 1, pd = 0.9: frozen from the Q/Q^-1 oracle.
  const LocalDetector det = derive_local_detector(sensor_with_shift(1.0));
  CHECK(det.llr_threshold == Catch::Approx(-0.7815515655446006).epsilon(1e-10));
  CHECK(det.prob_false_alarm == Catch::Approx(0.610856308354639).epsilon(1e-10));
  CHECK(det.prob_detect == 0.9);

  // Forward-evaluating the detection probability recovers the target.
  for (double pd : {0.05, 0.35, 0.72, 0.99}) {
    for (double shift : {0.4, 1.0, 2.7}) {
      const LocalDetector d = derive_local_detector(sensor_with_shift(shift, pd));
      const double snr = shift * shift;
      const double recovered = qfunc((d.llr_threshold - 0.5 * snr) / shift);
      CHECK(std::fabs(recovered - pd) < 1e-12);
      CHECK(d.prob_false_alarm <= d.prob_detect);
    }
  }
}

TEST_CASE("derive_local_detector midpoint and limits") {
  // pd = 0.5 puts the threshold at half the observation SNR.
  for (double shift : {0.5, 1.0, 3.0}) {
    const LocalDetector d = derive_local_detector(sensor_with_shift(shift, 0.5));
    CHECK(d.llr_threshold == Catch::Approx(0.5 * shift * shift).margin(1e-10));
    CHECK(d.prob_false_alarm == Catch::Approx(qfunc(shift)).epsilon(1e-12));
  }
  // pd near 1 drives the threshold far down and pf toward 1.
  const LocalDetector hi = derive_local_detector(sensor_with_shift(1.0, 1 - 1e-9));
  CHECK(hi.llr_threshold < -4.0);
  CHECK(hi.prob_false_alarm > 0.99);
  SensorParams bad = sensor_with_shift(1.0);
  bad.target_detection_prob = 1.0;
  CHECK_THROWS_AS(derive_local_detector(bad), ConfigError);
}

TEST_CASE("pf decreases with observation SNR at fixed pd") {
  double last = 1.0;
  for (double shift : {0.2, 0.5, 1.0, 2.0, 4.0}) {
    const double pf =
        derive_local_detector(sensor_with_shift(shift)).prob_false_alarm;
    CHECK(pf < last);
    last = pf;
  }
}

TEST_CASE("snr_db") {
  CHECK(snr_db(sensor_with_shift(1.0)) == Catch::Approx(0.0).margin(1e-12));
  CHECK(snr_db(sensor_with_shift(10.0)) == Catch::Approx(20.0).epsilon(1e-12));
  CHECK(snr_db(sensor_with_shift(std::sqrt(2.0))) ==
        Catch::Approx(3.0102999566398125).epsilon(1e-12));
  CHECK(amplitude_for_snr_db(3.0102999566398125, 1.0) ==
        Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("transmit amplitude follows the floor map") {
  EnergyModel energy;
  energy.capacity = 6;
  energy.unit_joules = 0.01;  // 10 mJ
  energy.slot_seconds = 10.0;
  Policy policy;
  policy.scales = {0.1, 0.3, 0.5, 0.7};
  policy.thresholds = {0.0, 0.2, 1.4, 3.6, INFINITY};

  // state 3, interval 2 (scale 0.5): one cell, 1 mW.
  const double amp = transmit_amplitude(policy, energy, 3, 2);
  CHECK(amp * amp == Catch::Approx(0.001).epsilon(1e-12));
  // empty battery never transmits
  CHECK(transmit_amplitude(policy, energy, 0, 3) == 0.0);
  // scale 0.7, state 3 -> floor(2.1) = 2 cells -> 2 mW.
  Policy b = policy;
  b.scales = {0.3, 0.5, 0.7, 0.9};
  CHECK(transmit_amplitude(b, energy, 3, 2) * transmit_amplitude(b, energy, 3, 2) ==
        Catch::Approx(0.002).epsilon(1e-12));

  CHECK_THROWS_AS(transmit_amplitude(policy, energy, 7, 0), std::out_of_range);
  CHECK_THROWS_AS(transmit_amplitude(policy, energy, -1, 0), std::out_of_range);
  CHECK_THROWS_AS(transmit_amplitude(policy, energy, 2, 4), std::out_of_range);
}

TEST_CASE("consumption never exceeds the battery state") {
  for (int k = 0; k <= 50; ++k) {
    for (int i = 0; i <= 100; ++i) {
      const double c = i / 100.0;
      const int used = consumed_units(c, k);
      CHECK(used >= 0);
      CHECK(used <= k);
    }
  }
}

TEST_CASE("policy validation") {
  Policy p;
  p.scales = {0.5, 0.5};
  p.thresholds = {0.0, 1.0, INFINITY};
  CHECK_NOTHROW(p.validate());
  CHECK(p.interval_of(0.5) == 0);
  CHECK(p.interval_of(1.0) == 1);
  CHECK(p.interval_of(100.0) == 1);

  Policy bad = p;
  bad.thresholds = {0.0, 1.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.scales = {0.5, 1.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.thresholds = {0.1, 1.0, INFINITY};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config file loader reports the first violated field") {
  const auto parse = [](const char* text) {
    return parse_run_config(nlohmann::json::parse(text));
  };
  const char* good = R"({
    "priors": {"h0": 0.5, "h1": 0.5},
    "power_budget_watts": 0.002,
    "levels": 2,
    "energy": {"arrival_rate": 2.0, "capacity": 5, "unit_joules": 0.01,
               "slot_seconds": 10.0},
    "sensors": [{"gain_mean_square": 2.0, "channel_noise_var": 1.0,
                 "observation_noise_var": 1.0, "snr_db": 3.0,
                 "target_detection_prob": 0.9, "count": 3}]
  })";
  const RunConfig rc = parse(good);
  CHECK(rc.network.sensor_count() == 3);
  CHECK(rc.network.sensors[0].signal_amplitude ==
        Catch::Approx(std::pow(10.0, 3.0 / 20.0)));
  CHECK(rc.grid.threshold_max == Catch::Approx(3.0 * std::sqrt(2.0)));

  // Broken priors: the error names the offending path.
  std::string broken = good;
  broken.replace(broken.find("0.5"), 3, "0.7");
  try {
    parse(broken.c_str());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("priors") != std::string::npos);
  }

  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}
