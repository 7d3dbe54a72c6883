// Self-check oracles: independent numerical routes (adaptive quadrature,
// power iteration, sampling) used to validate the closed-form implementations
// at runtime via the `validate` command and in the test suites. Nothing here
// shares code with the paths it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ehdd/battery.hpp"
#include "ehdd/config.hpp"
#include "ehdd/evaluate.hpp"
#include "ehdd/metrics.hpp"
#include "ehdd/optimize.hpp"
#include "ehdd/simulate.hpp"

namespace ehdd {

// ---------------------------------------------------------------------------
// Generic quadrature
// ---------------------------------------------------------------------------

namespace detail {

inline double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f,
                                   double a, double fa, double b, double fb,
                                   double m, double fm, double whole, double tol,
                                   int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol,
                              depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol,
                              depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on a finite interval.
inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double tol = 1e-12, int max_depth = 48) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = detail::simpson(a, fa, b, fb, fm);
  return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol,
                                      max_depth);
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Ei(x) for x < 0 from the defining integral, mapped to [0,1) by
/// t = -x + u/(1-u). Accurate to ~1e-13 absolute/relative for moderate x.
inline double ei_quadrature(double x) {
  if (!(x < 0.0)) throw std::domain_error("ei_quadrature: argument must be negative");
  const double a = -x;
  auto g = [&](double u) {
    const double inv = 1.0 / (1.0 - u);
    const double t = a + u * inv;
    return std::exp(-t) / t * inv * inv;
  };
  const double scale = std::exp(-a) / a;  // integrand magnitude at the left end
  return -adaptive_simpson(g, 0.0, 1.0 - 1e-14, 1e-15 * std::max(scale, 1e-280),
                           60);
}

/// Stationary vector by plain power iteration, independent of the closed-form
/// rank-one-correction solve.
inline Eigen::VectorXd power_iteration_stationary(const Eigen::MatrixXd& psi,
                                                  double tol = 1e-13,
                                                  int max_iter = 2000000) {
  const int n = static_cast<int>(psi.rows());
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  for (int i = 0; i < max_iter; ++i) {
    Eigen::RowVectorXd next = v * psi;
    next /= next.sum();
    const double gap = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (gap < tol) break;
  }
  return v.transpose();
}

/// Battery-averaged interval J-divergence by direct quadrature against the
/// Rayleigh gain density (the route avg_j_interval must reproduce).
inline double avg_j_interval_quadrature(const LocalDetector& det,
                                        double channel_noise_var,
                                        double gain_mean_square,
                                        const Policy& policy,
                                        const BatteryChain& chain, int interval,
                                        double unit_power) {
  const double lo = policy.thresholds[interval];
  const double hi_raw = policy.thresholds[interval + 1];
  const double cutoff = std::sqrt(45.0 * gain_mean_square) + lo;
  const double hi = std::isinf(hi_raw) ? cutoff : hi_raw;
  double total = 0.0;
  for (int state = 0; state <= chain.capacity; ++state) {
    const double mass = chain.phi(state);
    if (mass == 0.0) continue;
    const double alpha = std::sqrt(
        consumed_units(policy.scales[interval], state) * unit_power);
    auto f = [&](double g) {
      const double density = 2.0 * g / gain_mean_square *
                             std::exp(-g * g / gain_mean_square);
      return j_div_pointwise(g, alpha, det, channel_noise_var) * density;
    };
    total += mass * adaptive_simpson(f, lo, hi, 1e-13);
  }
  return total;
}

/// Mean and variance of the fusion term z by quadrature over the Gaussian
/// surrogate of y (no use of the closed-form moment expressions).
inline ZMoments z_moments_quadrature(const MomentPair& mp) {
  auto integrate = [&](double m, double v, double& mean, double& var) {
    const double s = std::sqrt(v);
    auto z = [&](double y) {
      const double d0 = y - mp.mean0, d1 = y - mp.mean1;
      return d0 * d0 / mp.var0 - d1 * d1 / mp.var1;
    };
    auto f1 = [&](double y) { return z(y) * normal_pdf(y, m, v); };
    auto f2 = [&](double y) { return z(y) * z(y) * normal_pdf(y, m, v); };
    mean = adaptive_simpson(f1, m - 14.0 * s, m + 14.0 * s, 1e-14);
    var = adaptive_simpson(f2, m - 14.0 * s, m + 14.0 * s, 1e-14) - mean * mean;
  };
  ZMoments z;
  integrate(mp.mean0, mp.var0, z.mean0, z.var0);
  integrate(mp.mean1, mp.var1, z.mean1, z.var1);
  return z;
}

// ---------------------------------------------------------------------------
// Named invariant checks
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double expected = 0.0;
  std::string detail;
};

inline CheckResult make_check(const std::string& name, double observed,
                              double bound, const std::string& detail = "") {
  return CheckResult{name, observed <= bound, observed, bound, detail};
}

/// Invariants of a built chain; also used with deliberately corrupted inputs
/// in fault-injection tests.
inline std::vector<CheckResult> chain_invariant_checks(const BatteryChain& chain) {
  std::vector<CheckResult> out;
  double row_err = 0.0;
  for (int i = 0; i <= chain.capacity; ++i) {
    row_err = std::max(row_err, std::fabs(chain.psi.row(i).sum() - 1.0));
  }
  out.push_back(make_check("battery-chain.row-stochastic", row_err, 1e-10));

  const double residual =
      (chain.phi.transpose() * chain.psi - chain.phi.transpose())
          .cwiseAbs()
          .maxCoeff();
  out.push_back(make_check("battery-chain.stationarity", residual, 1e-10));

  out.push_back(make_check("battery-chain.normalization",
                           std::fabs(chain.phi.sum() - 1.0), 1e-10));
  out.push_back(make_check("battery-chain.nonnegative", -chain.phi.minCoeff(),
                           0.0));

  const Eigen::VectorXd by_power = power_iteration_stationary(chain.psi);
  out.push_back(make_check("battery-chain.power-iteration-agreement",
                           (by_power - chain.phi).cwiseAbs().maxCoeff(), 1e-8));
  return out;
}

/// Full oracle suite on a configuration: chain invariants on probe policies,
/// quadrature agreement of the interval averages, Ei spot checks, z-moment
/// integration, and a CLT-vs-Monte-Carlo comparison on a solved policy.
inline std::vector<CheckResult> run_validation(const NetworkConfig& net,
                                               const GridSpec& grid,
                                               const RrsParams& rrs, long slots,
                                               std::uint64_t seed,
                                               std::ostream* verbose = nullptr) {
  net.validate();
  std::vector<CheckResult> out;

  for (double x : {-0.1, -1.0, -5.0, -10.0}) {
    const double a = exp_integral_ei(x);
    const double b = ei_quadrature(x);
    out.push_back(make_check("math.exp-integral[" + std::to_string(x) + "]",
                             std::fabs(a - b), 1e-10 * std::fabs(b) + 1e-300));
  }

  Rng rng(derive_seed(seed, /*tag=*/0x56414c));
  const int levels = net.levels;
  for (int n = 0; n < net.sensor_count(); ++n) {
    const std::string tag = "sensor[" + std::to_string(n) + "].";
    const SensorEvaluator eval = make_evaluator(net, n);
    const double gamma = net.sensors[n].gain_mean_square;

    std::vector<Policy> probes;
    for (int rep = 0; rep < 3; ++rep) {
      Policy p;
      p.thresholds = levels == 1
                         ? std::vector<double>{0.0, INFINITY}
                         : moe_thresholds(gamma, levels);
      for (int l = 0; l < levels; ++l) {
        p.scales.push_back((1.0 + rng.uniform_int(10)) / 10.0);
      }
      probes.push_back(std::move(p));
    }

    double worst_chain = 0.0, worst_quad = 0.0;
    for (const Policy& p : probes) {
      const BatteryChain chain = eval.chain(p);
      for (const CheckResult& c : chain_invariant_checks(chain)) {
        worst_chain = std::max(worst_chain, c.observed / std::max(c.expected, 1e-300));
      }
      for (int l = 0; l < levels; ++l) {
        const double closed =
            avg_j_interval(eval.detector(), net.sensors[n].channel_noise_var,
                           gamma, p, chain, l, net.energy.unit_power());
        const double quad = avg_j_interval_quadrature(
            eval.detector(), net.sensors[n].channel_noise_var, gamma, p, chain,
            l, net.energy.unit_power());
        worst_quad = std::max(worst_quad, std::fabs(closed - quad) /
                                              std::max(std::fabs(quad), 1e-30));
        if (verbose) {
          *verbose << tag << "interval " << l << ": closed-form " << closed
                   << " quadrature " << quad << '\n';
        }
      }
    }
    out.push_back(make_check(tag + "chain-invariants(normalized)", worst_chain, 1.0));
    out.push_back(make_check(tag + "interval-average-vs-quadrature", worst_quad,
                             1e-6));

    const MomentPair mp = moment_match(1.3, 0.9, eval.detector(),
                                       net.sensors[n].channel_noise_var);
    const ZMoments zm = z_moments(mp);
    const ZMoments zq = z_moments_quadrature(mp);
    const double zerr =
        std::max({std::fabs(zm.mean0 - zq.mean0) / std::max(std::fabs(zq.mean0), 1e-12),
                  std::fabs(zm.var0 - zq.var0) / std::max(zq.var0, 1e-12),
                  std::fabs(zm.mean1 - zq.mean1) / std::max(std::fabs(zq.mean1), 1e-12),
                  std::fabs(zm.var1 - zq.var1) / std::max(zq.var1, 1e-12)});
    out.push_back(make_check(tag + "z-moments-vs-quadrature", zerr, 1e-9));
  }

  // CLT vs Monte-Carlo on a solved policy.
  {
    const auto reports =
        solve_p1(net, net.levels >= 2 ? SolveMethod::hybrid_moe : SolveMethod::rrs,
                 grid, rrs, seed);
    bool feasible = true;
    std::vector<Policy> policies;
    for (const auto& r : reports) {
      feasible = feasible && r.feasible;
      if (r.feasible) policies.push_back(r.best.policy);
    }
    if (feasible) {
      std::vector<LocalDetector> detectors;
      std::vector<BatteryChain> chains;
      for (int n = 0; n < net.sensor_count(); ++n) {
        const SensorEvaluator eval = make_evaluator(net, n);
        detectors.push_back(eval.detector());
        chains.push_back(eval.chain(policies[n]));
      }
      const double analytic = estimate_error_prob_clt(net, detectors, policies,
                                                      chains, 20000, seed);
      const SimResult mc = run_monte_carlo(net, policies, slots, seed);
      const double tol = 0.02 + 3.0 * mc.ci_half_width / 1.96;
      CheckResult c = make_check("clt-vs-monte-carlo",
                                 std::fabs(analytic - mc.empirical_pe), tol);
      std::ostringstream d;
      d << "analytic " << analytic << " empirical " << mc.empirical_pe;
      c.detail = d.str();
      out.push_back(c);
    } else {
      CheckResult c;
      c.name = "clt-vs-monte-carlo";
      c.pass = false;
      c.detail = "no feasible policy under the configured budget";
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace ehdd
