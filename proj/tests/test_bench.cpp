#include <doctest.h>

#include <cmath>

#include "mrtl/bench.hpp"
#include "mrtl/data.hpp"

using namespace mrtl;

namespace {

// small synthetic problem so comparison tests stay quick
GeneratedData small_benchmark(std::uint64_t seed, double task_scale = 1.0) {
  SyntheticSpec spec = default_synthetic_spec();
  spec.grid_b = build_grid(8, 8, 1.0);
  spec.grid_c = build_grid(2, 2, 4.0);
  spec.n_samples = 6000;
  spec.task_scale = task_scale;
  spec.seed = seed;
  return generate(spec);
}

ResolutionSchedule small_schedule() {
  return dyadic_schedule(build_grid(4, 4, 2.0), build_grid(1, 1, 8.0), 2, 0, 8,
                         std::size_t{256} << 20);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 256;
  cfg.max_steps_per_stage = 600;
  cfg.window = 50;
  cfg.criterion.check_every = 50;
  cfg.criterion.tau_s = 0.5;
  cfg.criterion.tau_l = 8e-3;
  cfg.criterion.tau_sigma = 1e-6;
  cfg.criterion.tau_mu = 1e-3;
  cfg.eval_every = 50;
  return cfg;
}

}  // namespace

TEST_CASE("run_comparison validates method names") {
  const GeneratedData gen = small_benchmark(1);
  CHECK_THROWS_WITH_AS(run_comparison(gen.data, small_schedule(), small_config(), 0.69,
                                      {"nope"}, {1}, {}),
                       doctest::Contains("fixed_resolution"), std::invalid_argument);
  CHECK_THROWS_AS(run_comparison(gen.data, small_schedule(), small_config(), 0.69,
                                 {"mrtl_entropy"}, {}, {}),
                  std::invalid_argument);
}

TEST_CASE("trivial labels make every method reach the threshold immediately") {
  // labels independent of position: logit 0 everywhere
  const GeneratedData gen = small_benchmark(2, 0.0);
  const double threshold = std::log(2.0) + 0.01;
  ComparisonOptions copt;
  copt.fixed_step_cap = 2000;
  const BenchmarkReport rep = run_comparison(gen.data, small_schedule(), small_config(),
                                             threshold, valid_methods(), {1, 2}, copt);
  REQUIRE(rep.runs.size() == 10);
  for (const auto& r : rep.runs) {
    CHECK(r.reached);
    // first evaluation already sits at ln 2; everything is within noise of the
    // cheapest possible crossing (one eval tick per stage)
    CHECK(r.cost_to_threshold <= 60000.0);
  }
}

TEST_CASE("comparison runs are reproducible and fair across methods") {
  const GeneratedData gen = small_benchmark(3);
  const auto methods = std::vector<std::string>{"fixed_resolution", "mrtl_entropy"};
  const BenchmarkReport a =
      run_comparison(gen.data, small_schedule(), small_config(), 0.68, methods, {7, 8}, {});
  const BenchmarkReport b =
      run_comparison(gen.data, small_schedule(), small_config(), 0.68, methods, {7, 8}, {});
  REQUIRE(a.runs.size() == b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].cost_to_threshold == b.runs[i].cost_to_threshold);
    CHECK(a.runs[i].final_val_loss == b.runs[i].final_val_loss);
  }
  // cost-to-threshold is recomputable from the eval curve
  for (const auto& r : a.runs)
    if (r.reached) {
      double first = std::numeric_limits<double>::infinity();
      for (const auto& e : r.curve)
        if (e.val_loss <= 0.68) {
          first = e.cum_cost;
          break;
        }
      CHECK(r.cost_to_threshold == first);
    }
}

TEST_CASE("sensitivity sweep draws are reproducible and respect ranges") {
  const GeneratedData gen = small_benchmark(4);
  SweepOptions opt;
  const SweepResult a = sensitivity_sweep(gen.data, small_schedule(), small_config(),
                                          CriterionKind::entropy_threshold, 5, 0.68, 99, opt);
  const SweepResult b = sensitivity_sweep(gen.data, small_schedule(), small_config(),
                                          CriterionKind::entropy_threshold, 5, 0.68, 99, opt);
  REQUIRE(a.draws.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.draws[i].tau_primary == b.draws[i].tau_primary);
    CHECK(a.draws[i].cost == b.draws[i].cost);
    CHECK(a.draws[i].tau_primary >= 1e-6);
    CHECK(a.draws[i].tau_primary <= 1.0);
  }
  CHECK(a.n_converged + a.n_nonconverged == 5);

  CHECK_THROWS_AS(sensitivity_sweep(gen.data, small_schedule(), small_config(),
                                    CriterionKind::entropy_threshold, 1, 0.68, 99, opt),
                  std::invalid_argument);
}

TEST_CASE("degenerate sweep range gives identical draws with zero variance") {
  const GeneratedData gen = small_benchmark(5);
  SweepOptions opt;
  opt.ranges.tau_s = {0.25, 0.25};
  const SweepResult r = sensitivity_sweep(gen.data, small_schedule(), small_config(),
                                          CriterionKind::entropy_threshold, 4, 0.68, 3, opt);
  for (const auto& d : r.draws) CHECK(d.tau_primary == doctest::Approx(0.25));
  if (r.n_converged > 1) CHECK(r.var_cost == doctest::Approx(0.0));
}

TEST_CASE("mu-sigma sweeps are harder to stabilize than entropy sweeps") {
  // the default benchmark at acceptance scale, with a cost budget so stuck
  // draws register as non-converging
  SyntheticSpec spec = default_synthetic_spec();
  spec.seed = 101;
  const GeneratedData gen = generate(spec);
  const ResolutionSchedule sched = dyadic_schedule(
      build_grid(4, 4, 8.0), build_grid(1, 1, 8.0), 4, 1, 8, std::size_t{256} << 20);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 512;
  cfg.max_steps_per_stage = 1500;
  cfg.window = 100;
  cfg.reg = {1e-5, 1e-5};
  cfg.criterion.check_every = 100;
  cfg.eval_every = 100;
  cfg.seed = 1;

  SweepOptions opt;
  opt.cost_budget = 2e6;
  const SweepResult entropy = sensitivity_sweep(gen.data, sched, cfg,
                                                CriterionKind::entropy_threshold, 10, 0.6225,
                                                17, opt);
  const SweepResult musigma = sensitivity_sweep(gen.data, sched, cfg,
                                                CriterionKind::mu_sigma_threshold, 10, 0.6225,
                                                17, opt);
  CHECK(entropy.n_converged >= 1);
  CHECK(musigma.n_nonconverged >= entropy.n_nonconverged);
}

TEST_CASE("theory harness validates the argument checks") {
  CHECK_THROWS_AS(theory_check(0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(theory_check(1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(theory_check(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("theory harness matches the contraction predictions") {
  // alpha=0.5, eps=1e-2: predicted fixed-resolution iterations about 8.6
  const TheoryResult r = theory_check(0.5, 1e-2);
  CHECK(r.predicted_fixed_iters == doctest::Approx(8.64).epsilon(0.01));
  CHECK(r.fixed_iters >= r.predicted_fixed_iters / 2.0);
  CHECK(r.fixed_iters <= r.predicted_fixed_iters * 2.0);
  CHECK(r.fixed_final_error <= 1e-2 / 2.0);
  CHECK(r.multi_final_error <= 1e-2);
  for (const auto& l : r.levels) CHECK(l.iters >= 1);
}

TEST_CASE("small contraction factors need few iterations per level") {
  const TheoryResult r = theory_check(0.1, 1e-2);
  CHECK(r.level_iter_max_min_ratio <= 4.0);
  for (const auto& l : r.levels)
    CHECK(static_cast<double>(l.iters) <= r.fitted_cprime / std::log(10.0) + 1e-9);
  CHECK(r.fitted_cprime < 10.0);
}

TEST_CASE("cost ratio grows as the error target shrinks") {
  for (double alpha : {0.3, 0.5, 0.8}) {
    double prev = -1.0;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
      const TheoryResult r = theory_check(alpha, eps);
      CHECK(r.cost_ratio > prev);
      prev = r.cost_ratio;
    }
  }
}
