// Command-line harness: optimize transmit policies, simulate them, run
// parameter sweeps, and self-validate the numerical pipeline.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 no feasible
// policy, 3 numerical failure, 4 validation check failed.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ehdd/checks.hpp"
#include "ehdd/io.hpp"
#include "ehdd/metrics.hpp"
#include "ehdd/optimize.hpp"
#include "ehdd/simulate.hpp"
#include "ehdd/sweep.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitValidation = 4;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void dump_chains(const ehdd::NetworkConfig& net,
                 const std::vector<ehdd::Policy>& policies,
                 const std::string& prefix) {
  char buf[40];
  for (int n = 0; n < net.sensor_count(); ++n) {
    const ehdd::SensorEvaluator eval = ehdd::make_evaluator(net, n);
    const ehdd::BatteryChain chain = eval.chain(policies[n]);
    std::ofstream psi(prefix + ".sensor" + std::to_string(n) + ".psi.csv");
    for (int i = 0; i <= chain.capacity; ++i) {
      for (int j = 0; j <= chain.capacity; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", chain.psi(i, j));
        psi << (j ? "," : "") << buf;
      }
      psi << '\n';
    }
    std::ofstream phi(prefix + ".sensor" + std::to_string(n) + ".phi.csv");
    for (int k = 0; k <= chain.capacity; ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", chain.phi(k));
      phi << (k ? "," : "") << buf;
    }
    phi << '\n';
  }
}

std::vector<ehdd::SolveMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<ehdd::SolveMethod> out;
  for (const auto& n : names) out.push_back(ehdd::method_from_string(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive transmit-power policies for energy-harvesting "
               "distributed detection"};
  app.require_subcommand(1);

  std::string config_path, out_path, method_name = "grid";
  std::string policies_path, dump_prefix, trace_path, fusion_name = "exact";
  std::uint64_t seed = 1;
  long slots = 200000, trace_slots = 0;
  int workers = 0, replications = 1;
  bool timings = false, cold_start = false;
  std::string variable_name = "P0";
  std::vector<double> values;
  std::vector<std::string> method_names;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file (JSON)")
        ->required();
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--workers", workers,
                    "worker threads (0 = EHDD_WORKERS env or hardware)");
    cmd->add_option("--out", out_path, "output path ('-' for stdout)");
  };

  CLI::App* optimize = app.add_subcommand("optimize", "solve for the best policy");
  add_common(optimize);
  optimize->add_option("--method", method_name,
                       "grid | rrs | hybrid-mmae | hybrid-moe");
  optimize->add_flag("--timings", timings, "record wall time in the output");
  optimize->add_option("--dump-chain", dump_prefix,
                       "write psi/phi CSV dumps with this path prefix");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo simulation");
  add_common(simulate);
  simulate->add_option("--policies", policies_path,
                       "solution record from `optimize` (default: solve first)");
  simulate->add_option("--method", method_name, "solver when --policies absent");
  simulate->add_option("--slots", slots, "number of simulated slots");
  simulate->add_option("--fusion", fusion_name, "exact | clt-approx");
  simulate->add_option("--trace", trace_slots, "dump the first N slot traces");
  simulate->add_option("--trace-out", trace_path, "trace CSV path");
  simulate->add_flag("--cold-start", cold_start,
                     "start batteries empty with a burn-in window");

  CLI::App* sweep = app.add_subcommand("sweep", "parameter sweep to CSV");
  add_common(sweep);
  sweep->add_option("--variable", variable_name, "P0 | K | rho | snr_s | L | N");
  sweep->add_option("--values", values, "sweep values (increasing)")
      ->required()
      ->delimiter(',');
  sweep->add_option("--methods", method_names, "solver list")
      ->delimiter(',')
      ->default_val(std::vector<std::string>{"grid"});
  sweep->add_option("--replications", replications, "seeds per cell");
  sweep->add_option("--slots", slots, "Monte-Carlo slots per cell");
  sweep->add_flag("--timings", timings, "record wall times (non-reproducible)");

  bool verbose = false;
  CLI::App* validate = app.add_subcommand("validate", "run the oracle suite");
  add_common(validate);
  validate->add_option("--slots", slots, "Monte-Carlo slots for the CLT check");
  validate->add_flag("--verbose", verbose,
                     "print intermediate closed-form vs quadrature values");

  CLI11_PARSE(app, argc, argv);

  try {
    const ehdd::RunConfig rc = ehdd::load_run_config(config_path);

    if (optimize->parsed()) {
      const auto started = std::chrono::steady_clock::now();
      const auto reports = ehdd::solve_p1(rc.network,
                                          ehdd::method_from_string(method_name),
                                          rc.grid, rc.rrs, seed);
      const double wall =
          timings ? std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - started)
                        .count()
                  : 0.0;
      const auto record = ehdd::solution_record(
          reports, ehdd::method_from_string(method_name), seed, wall);
      write_text(out_path, record.dump(2) + "\n");
      if (!record["feasible"].get<bool>()) return kExitInfeasible;
      if (!dump_prefix.empty()) {
        dump_chains(rc.network, ehdd::policies_from_record(record), dump_prefix);
      }
      return 0;
    }

    if (simulate->parsed()) {
      std::vector<ehdd::Policy> policies;
      if (!policies_path.empty()) {
        std::ifstream in(policies_path);
        if (!in) throw ehdd::ConfigError("cannot open " + policies_path);
        nlohmann::json record;
        in >> record;
        policies = ehdd::policies_from_record(record);
      } else {
        const auto reports = ehdd::solve_p1(
            rc.network, ehdd::method_from_string(method_name), rc.grid, rc.rrs,
            seed);
        for (const auto& r : reports) {
          if (!r.feasible) return kExitInfeasible;
          policies.push_back(r.best.policy);
        }
      }
      ehdd::SimOptions opts;
      opts.workers = workers;
      opts.cold_start = cold_start;
      std::ofstream trace_file;
      if (trace_slots > 0) {
        const std::string path = trace_path.empty() ? "trace.csv" : trace_path;
        trace_file.open(path);
        if (!trace_file) throw std::runtime_error("cannot write " + path);
        trace_file << ehdd::trace_csv_header(rc.network.sensor_count()) << '\n';
        opts.trace_slots = trace_slots;
        opts.trace_out = &trace_file;
      }
      const ehdd::SimResult r = ehdd::run_monte_carlo(
          rc.network, policies, slots, seed,
          ehdd::fusion_from_string(fusion_name), opts);
      nlohmann::json j;
      j["n_slots"] = r.n_slots;
      j["errors"] = r.errors;
      j["empirical_pe"] = r.empirical_pe;
      j["ci_half_width"] = r.ci_half_width;
      j["slots_h0"] = r.slots_h0;
      j["slots_h1"] = r.slots_h1;
      j["battery_hist"] = r.battery_hist;
      j["tx_given_h0"] = r.tx_given_h0;
      j["tx_given_h1"] = r.tx_given_h1;
      j["fusion"] = fusion_name;
      j["seed"] = seed;
      write_text(out_path, j.dump(2) + "\n");
      return 0;
    }

    if (sweep->parsed()) {
      ehdd::SweepSpec spec;
      spec.variable = ehdd::sweep_variable_from_string(variable_name);
      spec.values = values;
      spec.methods = parse_methods(method_names);
      spec.replications = replications;
      const auto rows = ehdd::run_sweep(rc.network, spec, rc.grid, rc.rrs, slots,
                                        seed, workers, timings);
      std::ostringstream os;
      ehdd::write_sweep_csv(rows, os);
      write_text(out_path, os.str());
      return 0;
    }

    if (validate->parsed()) {
      const auto checks = ehdd::run_validation(rc.network, rc.grid, rc.rrs,
                                               slots, seed,
                                               verbose ? &std::cerr : nullptr);
      const auto report = ehdd::validation_report(checks);
      write_text(out_path, report.dump(2) + "\n");
      for (const auto& c : checks) {
        std::cerr << (c.pass ? "[pass] " : "[FAIL] ") << c.name;
        if (!c.detail.empty()) std::cerr << " (" << c.detail << ")";
        std::cerr << '\n';
      }
      return report["pass"].get<bool>() ? 0 : kExitValidation;
    }
  } catch (const ehdd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
