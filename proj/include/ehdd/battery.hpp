// Battery-state Markov chain: clipped Poisson arrivals, gain-interval
// probabilities, the transition matrix, and its stationary distribution.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehdd/config.hpp"

namespace ehdd {

/// Thrown when chain construction or the stationary solve goes numerically
/// wrong (singular system, row-sum drift, stationarity residual).
class ChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// pmf of energy units stored per slot; the Poisson tail above K collapses
/// into the last entry (lossless storage, finite battery).
struct ArrivalPmf {
  std::vector<double> q;  // length K+1
};

inline ArrivalPmf clipped_poisson(double rate, int capacity) {
  if (!(rate > 0.0) || capacity < 1) {
    throw std::invalid_argument("clipped_poisson: need rate > 0 and capacity >= 1");
  }
  ArrivalPmf pmf;
  pmf.q.resize(capacity + 1);
  double term = std::exp(-rate);  // e = 0
  double cdf = 0.0;
  for (int e = 0; e < capacity; ++e) {
    pmf.q[e] = term;
    cdf += term;
    term *= rate / (e + 1);
  }
  pmf.q[capacity] = 1.0 - cdf;
  return pmf;
}

/// Pr(g in I_l) under a Rayleigh gain with E{g^2} = gamma; g^2 is exponential
/// so each cell is a difference of exp(-mu^2/gamma) terms.
struct IntervalProbs {
  std::vector<double> p;  // length L
};

inline IntervalProbs interval_probs(double gain_mean_square,
                                    const std::vector<double>& thresholds) {
  if (!(gain_mean_square > 0.0) || thresholds.size() < 2) {
    throw std::invalid_argument("interval_probs: invalid inputs");
  }
  auto survivor = [&](double mu) {
    return std::isinf(mu) ? 0.0 : std::exp(-mu * mu / gain_mean_square);
  };
  IntervalProbs out;
  out.p.resize(thresholds.size() - 1);
  for (std::size_t l = 0; l + 1 < thresholds.size(); ++l) {
    out.p[l] = survivor(thresholds[l]) - survivor(thresholds[l + 1]);
  }
  return out;
}

/// Battery level at the next slot boundary: harvest s, spend d, clip to [0,K].
inline int next_state(int state, int stored, int consumed, int capacity) {
  if (state < 0 || state > capacity || stored < 0) {
    throw std::invalid_argument("next_state: state or harvest out of range");
  }
  if (consumed < 0 || consumed > state) {
    throw std::invalid_argument("next_state: consumption exceeds battery state");
  }
  const int raw = state + stored - consumed;
  return raw < 0 ? 0 : (raw > capacity ? capacity : raw);
}

/// Transition matrix and stationary vector of the battery chain.
struct BatteryChain {
  Eigen::MatrixXd psi;  // (K+1) x (K+1), row-stochastic
  Eigen::VectorXd phi;  // stationary distribution
  int capacity = 0;
};

/// Builds the chain for one sensor. transmit_prob is the probability that the
/// local LLR gate opens in a slot (pass 1 to model an always-transmitting
/// sensor). The stationary vector comes from the closed-form rank-one
/// correction solve and is verified against phi = phi * psi before returning.
inline BatteryChain build_chain(const Policy& policy, const ArrivalPmf& arrivals,
                                const IntervalProbs& intervals,
                                double transmit_prob) {
  policy.validate();
  if (!(transmit_prob >= 0.0 && transmit_prob <= 1.0)) {
    throw std::invalid_argument("build_chain: transmit_prob must lie in [0,1]");
  }
  const int capacity = static_cast<int>(arrivals.q.size()) - 1;
  if (static_cast<int>(intervals.p.size()) != policy.levels()) {
    throw std::invalid_argument("build_chain: interval/scale count mismatch");
  }
  const int n = capacity + 1;
  BatteryChain chain;
  chain.capacity = capacity;
  chain.psi = Eigen::MatrixXd::Zero(n, n);

  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < policy.levels(); ++l) {
      const int spent = consumed_units(policy.scales[l], i);
      const double w = transmit_prob * intervals.p[l];
      for (int e = 0; e <= capacity; ++e) {
        chain.psi(i, next_state(i, e, spent, capacity)) += w * arrivals.q[e];
      }
    }
    const double w0 = 1.0 - transmit_prob;
    if (w0 > 0.0) {
      for (int e = 0; e <= capacity; ++e) {
        chain.psi(i, next_state(i, e, 0, capacity)) += w0 * arrivals.q[e];
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    const double row = chain.psi.row(i).sum();
    if (std::fabs(row - 1.0) > 1e-8) {
      throw ChainError("build_chain: row " + std::to_string(i) +
                       " sums to " + std::to_string(row));
    }
  }

  // phi = -(psi^T - I - B)^{-1} 1, with B the all-ones matrix.
  Eigen::MatrixXd a = chain.psi.transpose();
  a.diagonal().array() -= 1.0;
  a.array() -= 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    throw ChainError("build_chain: stationary system is singular");
  }
  chain.phi = -lu.solve(Eigen::VectorXd::Ones(n));

  const double residual =
      (chain.phi.transpose() * chain.psi - chain.phi.transpose())
          .cwiseAbs()
          .maxCoeff();
  if (residual > 1e-10) {
    throw ChainError("build_chain: stationarity residual " +
                     std::to_string(residual));
  }
  for (int k = 0; k < n; ++k) {
    if (chain.phi(k) < -1e-10) {
      throw ChainError("build_chain: negative stationary mass");
    }
    if (chain.phi(k) < 0.0) chain.phi(k) = 0.0;  // clear solver dust
  }
  chain.phi /= chain.phi.sum();
  return chain;
}

/// Mean stored level and the empty/full battery probabilities.
struct BatteryStats {
  double mean_level = 0.0;
  double p_empty = 0.0;
  double p_full = 0.0;
};

inline BatteryStats battery_stats(const BatteryChain& chain) {
  BatteryStats s;
  for (int k = 0; k <= chain.capacity; ++k) {
    s.mean_level += k * chain.phi(k);
  }
  s.p_empty = chain.phi(0);
  s.p_full = chain.phi(chain.capacity);
  return s;
}

}  // namespace ehdd
