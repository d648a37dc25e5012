#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtl/trainer.hpp"

namespace mrtl {

// One training run inside a comparison: either the fixed-resolution baseline
// (factored model at the finest grids, random init) or the full
// coarse-to-fine pipeline under one transition criterion.
struct MethodRun {
  std::string method;
  std::uint64_t seed = 0;
  bool reached = false;
  double cost_to_threshold = 0.0;  // weighted cost; +inf when not reached
  double total_cost = 0.0;
  double wall_seconds = 0.0;
  double final_val_loss = 0.0;
  std::vector<EvalPoint> curve;          // (cum_cost, val_loss) evaluation points
  std::vector<double> stage_boundaries;  // cumulative cost at each stage end
};

struct BenchmarkReport {
  double loss_threshold = 0.0;
  std::vector<MethodRun> runs;
};

const std::vector<std::string>& valid_methods();

struct ComparisonOptions {
  long fixed_step_cap = 20000;  // step budget for the fixed-resolution baseline
};

// Train every method on every seed until validation loss <= loss_threshold
// or the step budget runs out. All methods of one seed share the data split,
// shuffles, and evaluation cadence.
BenchmarkReport run_comparison(const RawDataset& data, const ResolutionSchedule& schedule,
                               const TrainConfig& cfg, double loss_threshold,
                               const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds,
                               const ComparisonOptions& opt = {});

// Median cost-to-threshold over a method's runs (+inf entries included).
double median_cost(const BenchmarkReport& report, const std::string& method);

nlohmann::json benchmark_to_json(const BenchmarkReport& report);
// Plot-ready curves: method,seed,cost,val_loss rows.
void write_benchmark_csv(const BenchmarkReport& report, const std::string& path);

struct TauRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Threshold search ranges for the sweep, one per criterion parameter.
struct SweepRanges {
  TauRange tau_l{1e-6, 1e-2};
  TauRange tau_s{1e-6, 1e0};
  TauRange tau_mu{1e-8, 1e-2};
  TauRange tau_sigma{1e-8, 1e-1};
};

struct SweepDraw {
  double tau_primary = 0.0;    // tau_l / tau_s / tau_sigma depending on kind
  double tau_secondary = 0.0;  // tau_mu for the mu-sigma criterion, else unused
  bool converged = false;
  double cost = 0.0;
};

struct SweepResult {
  CriterionKind kind = CriterionKind::entropy_threshold;
  std::vector<SweepDraw> draws;
  int n_converged = 0;
  int n_nonconverged = 0;
  double min_cost = 0.0;   // over converging draws
  double mean_cost = 0.0;
  double var_cost = 0.0;
};

struct SweepOptions {
  SweepRanges ranges;
  // weighted-cost budget per run; a draw that exhausts it before reaching the
  // loss threshold counts as non-converging. <= 0 disables the budget.
  double cost_budget = 0.0;
};

// Draw n_draws thresholds log-uniformly over the criterion's range and run
// the pipeline once per draw. Non-converging draws (threshold never reached
// within the budget) are counted, not fatal.
SweepResult sensitivity_sweep(const RawDataset& data, const ResolutionSchedule& schedule,
                              const TrainConfig& cfg, CriterionKind kind, int n_draws,
                              double loss_threshold, std::uint64_t sweep_seed,
                              const SweepOptions& opt = {});

nlohmann::json sweep_to_json(const SweepResult& r);

// ---- Complexity-prediction harness ---------------------------------------
//
// Deterministic full-batch gradient descent on a 1-D discretized quadratic
// whose fixed-point operator contracts with factor exactly alpha. Each level
// stops by the parameter-change rule ||W^t - W^{t-1}|| <= C0 d / (alpha (1-alpha));
// the finest level is the largest dyadic d <= (1-alpha)^2 eps. Norms are
// function-space norms (sqrt(d sum w^2)) so levels are comparable.

struct TheoryLevel {
  double d = 0.0;
  int cells = 0;
  long iters = 0;
};

struct TheoryResult {
  double alpha = 0.0;
  double eps = 0.0;
  std::vector<TheoryLevel> levels;
  long fixed_iters = 0;
  double predicted_fixed_iters = 0.0;  // (1/|ln a|) ln(2C/((1-a) eps)) with C=1
  double fixed_cost = 0.0;             // iters x cells
  double multi_cost = 0.0;
  double cost_ratio = 0.0;  // fixed / multi
  double level_iter_max_min_ratio = 0.0;
  double fitted_cprime = 0.0;  // max over levels of t(d) |ln alpha|
  double multi_final_error = 0.0;
  double fixed_final_error = 0.0;
};

TheoryResult theory_check(double alpha, double eps, int levels = 0, double c0 = 0.05);

}  // namespace mrtl
