// Policy solvers: exhaustive grid search, recursive random search (RRS),
// and the hybrid schemes that fix the quantization thresholds first (MMAE or
// maximum-output-entropy) and then search the scale factors alone.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ehdd/config.hpp"
#include "ehdd/evaluate.hpp"
#include "ehdd/rng.hpp"

namespace ehdd {

// ---------------------------------------------------------------------------
// Search-space description
// ---------------------------------------------------------------------------

/// Resolution of the discrete search space: [0,1] is split into scale_divisions
/// per scale factor (grid values i/scale_divisions for i = 1..scale_divisions)
/// and (0, threshold_max] into threshold_divisions per interior threshold.
struct GridSpec {
  int scale_divisions = 10;
  int threshold_divisions = 20;
  double threshold_max = 3.0;

  void validate() const {
    detail::require(scale_divisions >= 2, "grid.scale_divisions", "must be >= 2");
    detail::require(threshold_divisions >= 2, "grid.threshold_divisions",
                    "must be >= 2");
    detail::require(threshold_max > 0, "grid.threshold_max", "must be > 0");
  }
};

/// Default desk-scale grid; threshold_max = 3 sqrt(gamma) covers all but
/// ~1.2e-4 of the Rayleigh gain mass.
inline GridSpec default_grid(double gain_mean_square) {
  return GridSpec{10, 20, 3.0 * std::sqrt(gain_mean_square)};
}

/// RRS parameters. q1 is derived from (confidence, percentile); q2 draws are
/// taken per neighborhood batch; shells counts the nested neighborhoods.
struct RrsParams {
  double confidence = 0.99;  // p
  double percentile = 0.10;  // r
  int q2 = 10;
  int shells = 3;

  void validate() const {
    detail::require(confidence > 0 && confidence < 1, "rrs.confidence",
                    "must lie in (0,1)");
    detail::require(percentile > 0 && percentile < 1, "rrs.percentile",
                    "must lie in (0,1)");
    detail::require(q2 >= 1, "rrs.q2", "must be >= 1");
    detail::require(shells >= 1, "rrs.shells", "must be >= 1");
  }
};

/// Number of exploration samples that lands in the top-r percentile with
/// probability p: ceil(ln(1-p)/ln(1-r)).
inline int exploration_count(double confidence, double percentile) {
  if (!(confidence > 0 && confidence < 1 && percentile > 0 && percentile < 1)) {
    throw std::invalid_argument("exploration_count: arguments must lie in (0,1)");
  }
  const double q = std::log1p(-confidence) / std::log1p(-percentile);
  return static_cast<int>(std::ceil(q - 1e-12));
}

// ---------------------------------------------------------------------------
// Discrete policy grid
// ---------------------------------------------------------------------------

using GridPoint = std::vector<int>;

struct GridPointHash {
  std::size_t operator()(const GridPoint& p) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (int v : p) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) +
           (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Index space of candidate policies. In full mode a point is
/// [c_0..c_{L-1}, mu_1..mu_{L-1}]; with fixed thresholds only the scales vary.
class PolicyGrid {
 public:
  PolicyGrid(int levels, const GridSpec& spec)
      : levels_(levels), spec_(spec) {
    spec.validate();
    if (levels < 1) throw std::invalid_argument("PolicyGrid: levels must be >= 1");
  }

  PolicyGrid(int levels, const GridSpec& spec, std::vector<double> fixed_thresholds)
      : levels_(levels), spec_(spec), fixed_(std::move(fixed_thresholds)) {
    spec.validate();
    if (levels < 1) throw std::invalid_argument("PolicyGrid: levels must be >= 1");
    if (static_cast<int>(fixed_->size()) != levels + 1) {
      throw std::invalid_argument("PolicyGrid: fixed threshold count mismatch");
    }
  }

  int levels() const { return levels_; }
  int scale_dims() const { return levels_; }
  int threshold_dims() const { return fixed_ ? 0 : levels_ - 1; }
  int dims() const { return scale_dims() + threshold_dims(); }

  double scale_value(int idx) const {
    return static_cast<double>(idx + 1) / spec_.scale_divisions;
  }
  double threshold_value(int idx) const {
    return (idx + 1) * spec_.threshold_max / spec_.threshold_divisions;
  }
  int axis_size(int dim) const {
    return dim < scale_dims() ? spec_.scale_divisions : spec_.threshold_divisions;
  }

  /// Threshold indices must be strictly increasing; scales are unconstrained.
  bool valid(const GridPoint& p) const {
    for (int d = scale_dims() + 1; d < dims(); ++d) {
      if (p[d] <= p[d - 1]) return false;
    }
    return true;
  }

  bool in_bounds(const GridPoint& p) const {
    for (int d = 0; d < dims(); ++d) {
      if (p[d] < 0 || p[d] >= axis_size(d)) return false;
    }
    return true;
  }

  Policy to_policy(const GridPoint& p) const {
    Policy policy;
    policy.scales.resize(levels_);
    for (int l = 0; l < levels_; ++l) policy.scales[l] = scale_value(p[l]);
    if (fixed_) {
      policy.thresholds = *fixed_;
    } else {
      policy.thresholds.resize(levels_ + 1);
      policy.thresholds.front() = 0.0;
      policy.thresholds.back() = std::numeric_limits<double>::infinity();
      for (int t = 0; t < levels_ - 1; ++t) {
        policy.thresholds[t + 1] = threshold_value(p[scale_dims() + t]);
      }
    }
    return policy;
  }

  /// Count of valid points: Nc^L times the strictly increasing threshold
  /// combinations (saturates instead of overflowing).
  double valid_count() const {
    double count = 1.0;
    for (int l = 0; l < scale_dims(); ++l) count *= spec_.scale_divisions;
    if (!fixed_) {
      // C(threshold_divisions, levels-1)
      double comb = 1.0;
      for (int i = 0; i < levels_ - 1; ++i) {
        comb *= static_cast<double>(spec_.threshold_divisions - i) / (i + 1);
      }
      count *= comb;
    }
    return count;
  }

  /// Visits every valid point in lexicographic index order.
  template <typename Fn>
  void for_each_valid(Fn&& fn) const {
    // Minimal value of dim t given its predecessor; thresholds must rise.
    auto reset_suffix = [&](GridPoint& p, int from) {
      for (int t = from; t < dims(); ++t) {
        p[t] = t <= scale_dims() ? 0 : p[t - 1] + 1;
        if (p[t] >= axis_size(t)) return false;
      }
      return true;
    };
    GridPoint p(dims(), 0);
    if (!reset_suffix(p, 0)) return;
    while (true) {
      fn(const_cast<const GridPoint&>(p));
      int d = dims() - 1;
      for (; d >= 0; --d) {
        bool advanced = false;
        while (++p[d] < axis_size(d)) {
          if (reset_suffix(p, d + 1)) {
            advanced = true;
            break;
          }
        }
        if (advanced) break;
      }
      if (d < 0) return;
    }
  }

  /// Uniform draw over valid points: scales independently, thresholds as a
  /// sorted distinct index subset (Floyd's sampling).
  GridPoint sample_uniform(Rng& rng) const {
    GridPoint p(dims());
    for (int l = 0; l < scale_dims(); ++l) {
      p[l] = static_cast<int>(rng.uniform_int(spec_.scale_divisions));
    }
    const int k = threshold_dims();
    if (k > 0) {
      std::unordered_set<int> chosen;
      for (int j = spec_.threshold_divisions - k; j < spec_.threshold_divisions;
           ++j) {
        int t = static_cast<int>(rng.uniform_int(j + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
      }
      std::vector<int> sorted(chosen.begin(), chosen.end());
      std::sort(sorted.begin(), sorted.end());
      for (int t = 0; t < k; ++t) p[scale_dims() + t] = sorted[t];
    }
    return p;
  }

  /// All valid points whose per-coordinate index distance from center is at
  /// most shell (Chebyshev ball), excluding the center. Shells are nested.
  std::vector<GridPoint> neighborhood(const GridPoint& center, int shell) const {
    if (shell < 1) throw std::invalid_argument("neighborhood: shell must be >= 1");
    std::vector<GridPoint> out;
    GridPoint p(dims());
    std::function<void(int)> rec = [&](int d) {
      if (d == dims()) {
        if (p != center && valid(p)) out.push_back(p);
        return;
      }
      const int lo = std::max(0, center[d] - shell);
      const int hi = std::min(axis_size(d) - 1, center[d] + shell);
      for (int v = lo; v <= hi; ++v) {
        p[d] = v;
        rec(d + 1);
      }
    };
    rec(0);
    return out;
  }

  /// One uniform draw from the shell-rho neighborhood, or nothing when
  /// rejection sampling keeps missing (near-empty clipped neighborhoods).
  std::optional<GridPoint> sample_neighborhood(const GridPoint& center, int shell,
                                               Rng& rng) const {
    const int span = 2 * shell + 1;
    const int attempts = 128 * dims();
    GridPoint p(dims());
    for (int a = 0; a < attempts; ++a) {
      bool same = true;
      for (int d = 0; d < dims(); ++d) {
        p[d] = center[d] - shell + static_cast<int>(rng.uniform_int(span));
        same = same && p[d] == center[d];
      }
      if (!same && in_bounds(p) && valid(p)) return p;
    }
    return std::nullopt;
  }

 private:
  int levels_;
  GridSpec spec_;
  std::optional<std::vector<double>> fixed_;
};

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// A solved (or candidate) operating point.
struct Candidate {
  Policy policy;
  double objective = 0.0;
  double avg_power = 0.0;  // Watts
  bool feasible = false;
};

/// Solver outcome; when no grid point meets the power budget, feasible is
/// false and min_power_seen reports the least attainable average power.
struct SolveReport {
  bool feasible = false;
  Candidate best;
  double min_power_seen = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  // RRS only: the promising-area threshold fixed after exploration.
  double exploration_threshold = std::numeric_limits<double>::quiet_NaN();
};

enum class SolveMethod { grid, rrs, hybrid_mmae, hybrid_moe };

inline const char* to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::grid: return "grid";
    case SolveMethod::rrs: return "rrs";
    case SolveMethod::hybrid_mmae: return "hybrid-mmae";
    case SolveMethod::hybrid_moe: return "hybrid-moe";
  }
  return "?";
}

inline SolveMethod method_from_string(const std::string& s) {
  if (s == "grid") return SolveMethod::grid;
  if (s == "rrs") return SolveMethod::rrs;
  if (s == "hybrid-mmae") return SolveMethod::hybrid_mmae;
  if (s == "hybrid-moe") return SolveMethod::hybrid_moe;
  throw std::invalid_argument("unknown method: " + s);
}

/// Exhaustive search over the valid grid. Deterministic: points are visited
/// in lexicographic order and only strict improvements replace the incumbent,
/// so ties resolve to the lexicographically smallest point.
inline SolveReport grid_search(const SensorEvaluator& eval, const PolicyGrid& grid) {
  SolveReport report;
  grid.for_each_valid([&](const GridPoint& p) {
    const Policy policy = grid.to_policy(p);
    const EvalResult r = eval.evaluate(policy);
    ++report.evaluations;
    report.min_power_seen = std::min(report.min_power_seen, r.power_watts);
    if (r.feasible &&
        (!report.feasible || r.objective > report.best.objective)) {
      report.feasible = true;
      report.best = Candidate{policy, r.objective, r.power_watts, true};
    }
  });
  return report;
}

namespace detail {

struct EvalCache {
  const SensorEvaluator* eval;
  const PolicyGrid* grid;
  std::unordered_map<GridPoint, EvalResult, GridPointHash> seen;
  long evaluations = 0;
  double min_power = std::numeric_limits<double>::infinity();

  const EvalResult& get(const GridPoint& p) {
    auto it = seen.find(p);
    if (it == seen.end()) {
      EvalResult r = eval->evaluate(grid->to_policy(p));
      ++evaluations;
      min_power = std::min(min_power, r.power_watts);
      it = seen.emplace(p, r).first;
    }
    return it->second;
  }
};

}  // namespace detail

/// Recursive random search. Exploration keeps drawing fresh grid points until
/// q1 feasible samples are in hand (infeasible draws are replaced from the
/// unseen remainder of the grid; if the grid runs out first the solver falls
/// back to exhaustive feasible enumeration). The feasible-sample mean sets the
/// promising-area threshold. Exploitation then alternates re-align moves (best
/// improving neighbor above the threshold, at most q1 of them per sample) with
/// neighborhood shrinks until the smallest shell has been searched.
inline SolveReport rrs_solve(const SensorEvaluator& eval, const PolicyGrid& grid,
                             const RrsParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(derive_seed(seed, /*tag=*/0x525253));
  const int q1 = exploration_count(params.confidence, params.percentile);
  // Keep the batch below the smallest (interior) neighborhood size 3^d - 1.
  double shell1 = 1.0;
  for (int d = 0; d < grid.dims() && shell1 < 1e9; ++d) shell1 *= 3.0;
  const int q2 = std::max(1, std::min<int>(params.q2,
                                           static_cast<int>(shell1 - 2.0)));

  detail::EvalCache cache{&eval, &grid, {}, 0, {}};
  std::unordered_set<GridPoint, GridPointHash> drawn;
  std::vector<GridPoint> explored;
  const double total = grid.valid_count();

  // Exploration phase.
  while (static_cast<int>(explored.size()) < q1 &&
         static_cast<double>(drawn.size()) < total) {
    GridPoint p = grid.sample_uniform(rng);
    if (!drawn.insert(p).second) continue;  // take another from the remainder
    if (cache.get(p).feasible) explored.push_back(p);
  }

  SolveReport report;
  if (static_cast<int>(explored.size()) < q1) {
    // Grid exhausted early: degrade to exhaustive feasible enumeration.
    report = grid_search(eval, grid);
    report.evaluations = std::max(report.evaluations, cache.evaluations);
    return report;
  }

  double j_threshold = 0.0;
  for (const auto& p : explored) j_threshold += cache.get(p).objective;
  j_threshold /= q1;
  report.exploration_threshold = j_threshold;

  // Exploitation phase.
  for (auto& center : explored) {
    int realigns = 0;
    int shell = params.shells;
    while (shell >= 1) {
      GridPoint best_neighbor;
      double best_obj = -std::numeric_limits<double>::infinity();
      for (int s = 0; s < q2; ++s) {
        auto cand = grid.sample_neighborhood(center, shell, rng);
        if (!cand) continue;
        const EvalResult& r = cache.get(*cand);
        if (r.feasible && r.objective >= j_threshold && r.objective > best_obj) {
          best_obj = r.objective;
          best_neighbor = *cand;
        }
      }
      if (!best_neighbor.empty() && realigns < q1 &&
          best_obj > cache.get(center).objective) {
        center = best_neighbor;  // re-align: recenter, keep the shell
        ++realigns;
      } else {
        --shell;  // shrink
      }
    }
  }

  for (const auto& p : explored) {
    const EvalResult& r = cache.get(p);
    if (!report.feasible || r.objective > report.best.objective) {
      report.feasible = true;
      report.best = Candidate{grid.to_policy(p), r.objective, r.power_watts, true};
    }
  }
  report.evaluations = cache.evaluations;
  report.min_power_seen = cache.min_power;
  return report;
}

// ---------------------------------------------------------------------------
// Hybrid threshold designs
// ---------------------------------------------------------------------------

/// Thresholds minimizing the mean absolute quantization error of the Rayleigh
/// gain. The stationarity recursion F(mu_{l+1}) = F(mu_l) + (mu_l -
/// mu_{l-1}) f(mu_l) is seeded with mu_1 and the seed is bisected until the
/// implied F at the top equals 1.
inline std::vector<double> mmae_thresholds(double gain_mean_square, int levels) {
  if (levels < 2) throw std::invalid_argument("mmae_thresholds: need levels >= 2");
  if (!(gain_mean_square > 0)) {
    throw std::invalid_argument("mmae_thresholds: gain_mean_square must be > 0");
  }
  const double g = gain_mean_square;
  auto cdf = [&](double x) { return 1.0 - std::exp(-x * x / g); };
  auto pdf = [&](double x) { return 2.0 * x / g * std::exp(-x * x / g); };
  auto inv_cdf = [&](double p) { return std::sqrt(-g * std::log1p(-p)); };

  // Implied terminal CDF value of the recursion; > 1 signals a seed too large.
  auto terminal = [&](double mu1) {
    double prev = 0.0, cur = mu1, f_cur = cdf(mu1);
    for (int l = 1; l < levels; ++l) {
      const double f_next = f_cur + (cur - prev) * pdf(cur);
      if (l == levels - 1) return f_next;
      if (f_next >= 1.0) return 2.0;
      prev = cur;
      cur = inv_cdf(f_next);
      f_cur = f_next;
    }
    return f_cur;
  };

  double lo = 1e-12, hi = std::sqrt(g);
  int guard = 0;
  while (terminal(hi) < 1.0) {
    hi *= 1.5;
    if (++guard > 200) {
      throw std::runtime_error("mmae_thresholds: failed to bracket the seed");
    }
  }
  if (terminal(lo) > 1.0) {
    throw std::runtime_error("mmae_thresholds: failed to bracket the seed");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (terminal(mid) < 1.0 ? lo : hi) = mid;
    if (hi - lo < 1e-15 * hi) break;
  }
  const double mu1 = 0.5 * (lo + hi);
  if (std::fabs(terminal(mu1) - 1.0) > 1e-9) {
    throw std::runtime_error("mmae_thresholds: terminal residual too large");
  }

  std::vector<double> out(levels + 1);
  out[0] = 0.0;
  out[levels] = std::numeric_limits<double>::infinity();
  double prev = 0.0, cur = mu1, f_cur = cdf(mu1);
  out[1] = mu1;
  for (int l = 1; l < levels - 1; ++l) {
    const double f_next = f_cur + (cur - prev) * pdf(cur);
    prev = cur;
    cur = inv_cdf(f_next);
    f_cur = f_next;
    out[l + 1] = cur;
  }
  return out;
}

/// Equal-probability (maximum output entropy) cells of the Rayleigh gain:
/// mu_l = sqrt(-gamma ln(1 - l/L)).
inline std::vector<double> moe_thresholds(double gain_mean_square, int levels) {
  if (levels < 2) throw std::invalid_argument("moe_thresholds: need levels >= 2");
  if (!(gain_mean_square > 0)) {
    throw std::invalid_argument("moe_thresholds: gain_mean_square must be > 0");
  }
  std::vector<double> out(levels + 1);
  out[0] = 0.0;
  out[levels] = std::numeric_limits<double>::infinity();
  for (int l = 1; l < levels; ++l) {
    out[l] = std::sqrt(-gain_mean_square *
                       std::log1p(-static_cast<double>(l) / levels));
  }
  return out;
}

/// Fix thresholds by the chosen rule, then run RRS over the scales alone.
inline SolveReport hybrid_solve(const SensorEvaluator& eval, int levels,
                                SolveMethod method, const GridSpec& spec,
                                const RrsParams& params, std::uint64_t seed) {
  std::vector<double> thresholds;
  if (levels == 1) {
    thresholds = {0.0, std::numeric_limits<double>::infinity()};
  } else if (method == SolveMethod::hybrid_mmae) {
    thresholds = mmae_thresholds(eval.sensor().gain_mean_square, levels);
  } else if (method == SolveMethod::hybrid_moe) {
    thresholds = moe_thresholds(eval.sensor().gain_mean_square, levels);
  } else {
    throw std::invalid_argument("hybrid_solve: method must be a hybrid scheme");
  }
  PolicyGrid grid(levels, spec, std::move(thresholds));
  return rrs_solve(eval, grid, params, seed);
}

/// Solves the per-sensor subproblems independently; the joint problem is
/// decoupled across sensors, so the results line up with the sensor order.
inline std::vector<SolveReport> solve_p1(const NetworkConfig& net,
                                         SolveMethod method, const GridSpec& spec,
                                         const RrsParams& params,
                                         std::uint64_t seed) {
  net.validate();
  std::vector<SolveReport> out;
  out.reserve(net.sensors.size());
  for (int n = 0; n < net.sensor_count(); ++n) {
    const SensorEvaluator eval = make_evaluator(net, n);
    const std::uint64_t sensor_seed = derive_seed(seed, /*tag=*/0x503253, n);
    switch (method) {
      case SolveMethod::grid: {
        PolicyGrid grid(net.levels, spec);
        out.push_back(grid_search(eval, grid));
        break;
      }
      case SolveMethod::rrs: {
        PolicyGrid grid(net.levels, spec);
        out.push_back(rrs_solve(eval, grid, params, sensor_seed));
        break;
      }
      case SolveMethod::hybrid_mmae:
      case SolveMethod::hybrid_moe:
        out.push_back(
            hybrid_solve(eval, net.levels, method, spec, params, sensor_seed));
        break;
    }
  }
  return out;
}

}  // namespace ehdd
