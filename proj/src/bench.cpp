#include "mrtl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "mrtl/rng.hpp"

namespace mrtl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CriterionKind method_criterion(const std::string& method) {
  if (method == "mrtl_loss_conv") return CriterionKind::loss_convergence;
  if (method == "mrtl_entropy") return CriterionKind::entropy_threshold;
  if (method == "mrtl_sigma") return CriterionKind::sigma_threshold;
  if (method == "mrtl_mu_sigma") return CriterionKind::mu_sigma_threshold;
  throw std::invalid_argument("unknown method: " + method);
}

MethodRun run_mrtl_method(const RawDataset& data, const ResolutionSchedule& schedule,
                          TrainConfig cfg, double threshold, const std::string& method,
                          std::uint64_t seed) {
  cfg.seed = seed;
  cfg.criterion.kind = method_criterion(method);
  MrtlOptions opt;
  opt.stop_at_val_loss = threshold;
  const auto t0 = std::chrono::steady_clock::now();
  MrtlResult res = mrtl_train(schedule, data, cfg, opt);

  MethodRun run;
  run.method = method;
  run.seed = seed;
  run.reached = res.report.stopped_at_target;
  run.cost_to_threshold = run.reached ? res.report.cost_at_target : kInf;
  run.total_cost = res.report.total_weighted_cost;
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double cum = 0.0;
  for (const auto& s : res.report.stages) {
    run.curve.insert(run.curve.end(), s.evals.begin(), s.evals.end());
    run.final_val_loss = s.final_val_loss;
    cum += s.weighted_cost;
    run.stage_boundaries.push_back(cum);
  }
  return run;
}

MethodRun run_fixed_resolution(const RawDataset& data, const ResolutionSchedule& schedule,
                               TrainConfig cfg, double threshold, std::uint64_t seed,
                               long step_cap) {
  cfg.seed = seed;
  cfg.max_steps_per_stage = step_cap;
  // The baseline trains the factored model at the finest grids only; disable
  // the transition criterion so only the threshold or the cap can stop it.
  cfg.criterion.kind = CriterionKind::loss_convergence;
  cfg.criterion.tau_l = 0.0;

  const Grid& gb = schedule.grids_b.back();
  const Grid& gc = schedule.grids_c.back();
  const SplitIndices split = split_dataset(data.records.size(), cfg.val_fraction, seed);
  const RawDataset train_raw = subset(data, split.train);
  const RawDataset val_raw = subset(data, split.val);
  const auto train_ex = encode_at(train_raw, gb, gc);
  const auto val_ex = encode_at(val_raw, gb, gc);

  FactoredModel model = FactoredModel::random_init(data.n_tasks, gb, gc, cfg.rank_dense,
                                                   cfg.rank_sparse, seed ^ 0x5eedf1d0u);
  GradStatsBuffer buf(spatial_group_count(model, cfg.track_per_weight), cfg.window, cfg.bins);
  SgdSeOptions so;
  so.val = val_ex;
  so.stop_at_val_loss = threshold;
  // same data order as the finest factored stage of the mrtl runs
  so.shuffle_seed = stage_stream_seed(seed, schedule.n_stages() - 1, true);

  const auto t0 = std::chrono::steady_clock::now();
  StageRecord rec = sgd_se(model, train_ex, cfg, buf, so);

  MethodRun run;
  run.method = "fixed_resolution";
  run.seed = seed;
  run.reached = rec.reached_stop_loss;
  run.cost_to_threshold = kInf;
  if (run.reached)
    for (const auto& e : rec.evals)
      if (e.val_loss <= threshold) {
        run.cost_to_threshold = e.cum_cost;
        break;
      }
  run.total_cost = rec.weighted_cost;
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.final_val_loss = rec.final_val_loss;
  run.curve = rec.evals;
  run.stage_boundaries = {rec.weighted_cost};
  return run;
}

}  // namespace

const std::vector<std::string>& valid_methods() {
  static const std::vector<std::string> methods{"fixed_resolution", "mrtl_loss_conv",
                                                "mrtl_entropy", "mrtl_sigma", "mrtl_mu_sigma"};
  return methods;
}

BenchmarkReport run_comparison(const RawDataset& data, const ResolutionSchedule& schedule,
                               const TrainConfig& cfg, double loss_threshold,
                               const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds,
                               const ComparisonOptions& opt) {
  for (const auto& m : methods)
    if (std::find(valid_methods().begin(), valid_methods().end(), m) == valid_methods().end()) {
      std::string msg = "unknown method '" + m + "'; valid methods:";
      for (const auto& v : valid_methods()) msg += " " + v;
      throw std::invalid_argument(msg);
    }
  if (seeds.empty()) throw std::invalid_argument("run_comparison: need at least one seed");

  BenchmarkReport report;
  report.loss_threshold = loss_threshold;
  for (std::uint64_t seed : seeds) {
    for (const auto& m : methods) {
      if (m == "fixed_resolution")
        report.runs.push_back(
            run_fixed_resolution(data, schedule, cfg, loss_threshold, seed, opt.fixed_step_cap));
      else
        report.runs.push_back(run_mrtl_method(data, schedule, cfg, loss_threshold, m, seed));
    }
  }
  return report;
}

double median_cost(const BenchmarkReport& report, const std::string& method) {
  std::vector<double> costs;
  for (const auto& r : report.runs)
    if (r.method == method) costs.push_back(r.cost_to_threshold);
  if (costs.empty()) throw std::invalid_argument("no runs for method " + method);
  std::sort(costs.begin(), costs.end());
  const std::size_t n = costs.size();
  return n % 2 ? costs[n / 2] : 0.5 * (costs[n / 2 - 1] + costs[n / 2]);
}

nlohmann::json benchmark_to_json(const BenchmarkReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : r.curve) curve.push_back({{"cost", e.cum_cost}, {"val_loss", e.val_loss}});
    runs.push_back({{"method", r.method},
                    {"seed", r.seed},
                    {"reached", r.reached},
                    {"stage_boundaries", r.stage_boundaries},
                    {"cost_to_threshold", r.reached ? nlohmann::json(r.cost_to_threshold)
                                                    : nlohmann::json(nullptr)},
                    {"total_cost", r.total_cost},
                    {"wall_seconds", r.wall_seconds},
                    {"final_val_loss", r.final_val_loss},
                    {"curve", curve}});
  }
  nlohmann::json per_method = nlohmann::json::object();
  for (const auto& m : valid_methods()) {
    int n = 0, reached = 0;
    for (const auto& r : report.runs)
      if (r.method == m) {
        ++n;
        reached += r.reached ? 1 : 0;
      }
    if (n == 0) continue;
    const double med = median_cost(report, m);
    per_method[m] = {{"runs", n},
                     {"reached", reached},
                     {"median_cost", std::isfinite(med) ? nlohmann::json(med)
                                                        : nlohmann::json(nullptr)}};
  }
  return {{"loss_threshold", report.loss_threshold},
          {"per_method", per_method},
          {"runs", runs}};
}

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("method,seed,cost,val_loss\n", f);
  for (const auto& r : report.runs)
    for (const auto& e : r.curve)
      std::fprintf(f, "%s,%llu,%.17g,%.17g\n", r.method.c_str(),
                   static_cast<unsigned long long>(r.seed), e.cum_cost, e.val_loss);
  std::fclose(f);
}

SweepResult sensitivity_sweep(const RawDataset& data, const ResolutionSchedule& schedule,
                              const TrainConfig& cfg, CriterionKind kind, int n_draws,
                              double loss_threshold, std::uint64_t sweep_seed,
                              const SweepOptions& opt) {
  const SweepRanges& ranges = opt.ranges;
  if (n_draws < 2) throw std::invalid_argument("sensitivity_sweep: need at least 2 draws");

  SweepResult res;
  res.kind = kind;
  Rng rng(sweep_seed);
  auto log_uniform = [&](const TauRange& r) {
    return std::exp(rng.uniform(std::log(r.lo), std::log(r.hi)));
  };

  for (int i = 0; i < n_draws; ++i) {
    TrainConfig run_cfg = cfg;
    run_cfg.criterion.kind = kind;
    SweepDraw draw;
    switch (kind) {
      case CriterionKind::loss_convergence:
        draw.tau_primary = run_cfg.criterion.tau_l = log_uniform(ranges.tau_l);
        break;
      case CriterionKind::entropy_threshold:
        draw.tau_primary = run_cfg.criterion.tau_s = log_uniform(ranges.tau_s);
        break;
      case CriterionKind::sigma_threshold:
        draw.tau_primary = run_cfg.criterion.tau_sigma = log_uniform(ranges.tau_sigma);
        break;
      case CriterionKind::mu_sigma_threshold:
        draw.tau_primary = run_cfg.criterion.tau_sigma = log_uniform(ranges.tau_sigma);
        draw.tau_secondary = run_cfg.criterion.tau_mu = log_uniform(ranges.tau_mu);
        break;
    }

    MrtlOptions mopt;
    mopt.stop_at_val_loss = loss_threshold;
    if (opt.cost_budget > 0.0) mopt.cost_budget = opt.cost_budget;
    const MrtlResult r = mrtl_train(schedule, data, run_cfg, mopt);
    draw.converged = r.report.stopped_at_target;
    draw.cost = draw.converged ? r.report.cost_at_target : kInf;
    res.draws.push_back(draw);
  }

  double sum = 0.0, sum2 = 0.0;
  res.min_cost = kInf;
  for (const auto& d : res.draws) {
    if (!d.converged) {
      ++res.n_nonconverged;
      continue;
    }
    ++res.n_converged;
    res.min_cost = std::min(res.min_cost, d.cost);
    sum += d.cost;
    sum2 += d.cost * d.cost;
  }
  if (res.n_converged > 0) {
    res.mean_cost = sum / res.n_converged;
    res.var_cost = std::max(0.0, sum2 / res.n_converged - res.mean_cost * res.mean_cost);
  }
  return res;
}

nlohmann::json sweep_to_json(const SweepResult& r) {
  nlohmann::json draws = nlohmann::json::array();
  for (const auto& d : r.draws)
    draws.push_back({{"tau", d.tau_primary},
                     {"tau_mu", d.tau_secondary},
                     {"converged", d.converged},
                     {"cost", d.converged ? nlohmann::json(d.cost) : nlohmann::json(nullptr)}});
  return {{"criterion", to_string(r.kind)},
          {"n_converged", r.n_converged},
          {"n_nonconverged", r.n_nonconverged},
          {"min_cost", r.n_converged ? nlohmann::json(r.min_cost) : nlohmann::json(nullptr)},
          {"mean_cost", r.n_converged ? nlohmann::json(r.mean_cost) : nlohmann::json(nullptr)},
          {"var_cost", r.n_converged ? nlohmann::json(r.var_cost) : nlohmann::json(nullptr)},
          {"draws", draws}};
}

namespace {

// Cell-center samples of the harness target on [0, 1], scaled so the
// function-space norm is ~2 (so ||F(0)|| <= 2 for every alpha, i.e. C = 1).
// The two incommensurate phases keep coarse-level optima from being scalar
// multiples of finer ones, which would short-circuit warm-started levels.
std::vector<double> target_at(int cells) {
  std::vector<double> w(cells);
  const double amp = 2.0 / std::sqrt(0.5 * (1.0 + 0.45 * 0.45));
  for (int i = 0; i < cells; ++i) {
    const double u = (i + 0.5) / cells;
    w[i] = amp * (std::sin(2.0 * M_PI * u + 0.9) + 0.45 * std::sin(6.0 * M_PI * u + 0.4));
  }
  return w;
}

double error_norm(const std::vector<double>& w, const std::vector<double>& star, double d) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] - star[i]) * (w[i] - star[i]);
  return std::sqrt(d * s);
}

}  // namespace

TheoryResult theory_check(double alpha, double eps, int levels, double c0) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("theory_check: alpha must be in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("theory_check: eps must be > 0");

  TheoryResult res;
  res.alpha = alpha;
  res.eps = eps;
  const double lambda = 1.0 - alpha;  // step size; operator I - lambda * Hessian contracts at alpha

  int n_levels = levels;
  if (n_levels <= 0) {
    const double d_n = (1.0 - alpha) * (1.0 - alpha) * eps;
    n_levels = 1;
    while (0.25 / std::pow(2.0, n_levels - 1) > d_n && n_levels < 24) ++n_levels;
  }

  constexpr long kIterCap = 1000000;
  std::vector<double> w;
  for (int lev = 0; lev < n_levels; ++lev) {
    const int cells = 4 << lev;  // d0 = 1/4
    const double d = 1.0 / cells;
    const std::vector<double> star = target_at(cells);
    if (lev == 0) {
      w.assign(cells, 0.0);
    } else {
      std::vector<double> fine(cells);
      for (int i = 0; i < cells; ++i) fine[i] = w[i / 2];
      w = std::move(fine);
    }
    const double thr = c0 * d / (alpha * (1.0 - alpha));
    long t = 0;
    double resid;
    do {
      resid = lambda * error_norm(w, star, d);  // = ||W^t - W^{t-1}|| after the update
      for (int i = 0; i < cells; ++i) w[i] -= lambda * (w[i] - star[i]);
      ++t;
    } while (resid > thr && t < kIterCap);
    res.levels.push_back({d, cells, t});
    res.multi_cost += static_cast<double>(t) * cells;
  }
  {
    const int cells = 4 << (n_levels - 1);
    const double d = 1.0 / cells;
    res.multi_final_error = error_norm(w, target_at(cells), d);
  }

  // Fixed-resolution run at the finest level from zero.
  {
    const int cells = 4 << (n_levels - 1);
    const double d = 1.0 / cells;
    const std::vector<double> star = target_at(cells);
    std::vector<double> wf(cells, 0.0);
    long t = 0;
    while (error_norm(wf, star, d) > eps / 2.0 && t < kIterCap) {
      for (int i = 0; i < cells; ++i) wf[i] -= lambda * (wf[i] - star[i]);
      ++t;
    }
    res.fixed_iters = t;
    res.fixed_cost = static_cast<double>(t) * cells;
    res.fixed_final_error = error_norm(wf, star, d);
  }

  res.predicted_fixed_iters = std::log(2.0 / ((1.0 - alpha) * eps)) / std::abs(std::log(alpha));
  res.cost_ratio = res.fixed_cost / res.multi_cost;

  long tmin = res.levels.front().iters, tmax = tmin;
  for (const auto& l : res.levels) {
    tmin = std::min(tmin, l.iters);
    tmax = std::max(tmax, l.iters);
    res.fitted_cprime = std::max(
        res.fitted_cprime, static_cast<double>(l.iters) * std::abs(std::log(alpha)));
  }
  res.level_iter_max_min_ratio = static_cast<double>(tmax) / static_cast<double>(std::max(tmin, 1L));
  return res;
}

}  // namespace mrtl
