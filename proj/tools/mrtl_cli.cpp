// Command-line front end: config-driven training, benchmark comparisons and
// threshold sweeps, and factor export from checkpoints.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrtl/bench.hpp"
#include "mrtl/checkpoint.hpp"
#include "mrtl/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int env_threads() {
  const char* v = std::getenv("MRTL_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_train(const std::string& config_path, const std::string& resume_path) {
  mrtl::RunConfig cfg = mrtl::load_run_config(config_path);
  cfg.train.n_shards = env_threads();
  if (cfg.output_dir.empty())
    throw mrtl::ConfigError("output_dir", "required for the train command");

  const fs::path out_dir = cfg.output_dir;
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    throw mrtl::ConfigError("output_dir", e.what());
  }
  write_text(out_dir / "config_resolved.json", mrtl::resolved_config_json(cfg).dump(2) + "\n");

  const mrtl::RawDataset data = mrtl::dataset_from_config(cfg);
  const mrtl::ResolutionSchedule schedule = mrtl::schedule_from_config(cfg, data.n_tasks);

  mrtl::MrtlOptions opt;
  opt.diagnostics_path = (out_dir / "diagnostics.jsonl").string();
  opt.checkpoint_dir = out_dir.string();

  mrtl::Checkpoint resume;
  if (!resume_path.empty()) {
    resume = mrtl::load_checkpoint(resume_path);
    opt.resume_stage = resume.stage;
    if (resume.full)
      opt.resume_full = &*resume.full;
    else
      opt.resume_factored = &*resume.factored;
  }

  const mrtl::MrtlResult res = mrtl::mrtl_train(schedule, data, cfg.train, opt);

  write_text(out_dir / "report.json", mrtl::report_to_json(res.report).dump(2) + "\n");
  mrtl::save_checkpoint((out_dir / "final.ckpt").string(), res.model, schedule.n_stages() - 1);
  mrtl::export_factor_csv(res.model, (out_dir / "factors.csv").string());
  mrtl::export_spatial_layout_csv(res.model, (out_dir / "factor_layout.csv").string());
  mrtl::export_smoothness_csv(res.model, (out_dir / "factor_smoothness.csv").string());

  std::cout << "run complete: " << res.report.stages.size() << " stages, total weighted cost "
            << res.report.total_weighted_cost << "\n";
  return 0;
}

mrtl::CriterionKind sweep_kind_from_string(const std::string& s) {
  if (s == "entropy") return mrtl::CriterionKind::entropy_threshold;
  if (s == "loss") return mrtl::CriterionKind::loss_convergence;
  if (s == "sigma") return mrtl::CriterionKind::sigma_threshold;
  if (s == "mu_sigma") return mrtl::CriterionKind::mu_sigma_threshold;
  return mrtl::criterion_kind_from_string(s);
}

int cmd_bench(const std::string& config_path, const std::string& methods_csv, double threshold,
              int n_seeds, const std::string& sweep, int draws, long fixed_cap, double budget) {
  mrtl::RunConfig cfg = mrtl::load_run_config(config_path);
  cfg.train.n_shards = env_threads();
  const fs::path out_dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  fs::create_directories(out_dir);
  write_text(out_dir / "config_resolved.json", mrtl::resolved_config_json(cfg).dump(2) + "\n");

  // Thresholds for every requested criterion must be explicit in the config.
  json raw;
  {
    std::ifstream in(config_path);
    in >> raw;
  }
  const json crit_block = raw.value("criterion", json::object());

  const mrtl::RawDataset data = mrtl::dataset_from_config(cfg);
  const mrtl::ResolutionSchedule schedule = mrtl::schedule_from_config(cfg, data.n_tasks);

  if (!sweep.empty()) {
    const mrtl::CriterionKind kind = sweep_kind_from_string(sweep);
    mrtl::SweepOptions sopt;
    sopt.cost_budget = budget;
    const mrtl::SweepResult res = mrtl::sensitivity_sweep(data, schedule, cfg.train, kind, draws,
                                                          threshold, cfg.train.seed, sopt);
    const fs::path out = out_dir / ("sweep_" + std::string(mrtl::to_string(kind)) + ".json");
    write_text(out, mrtl::sweep_to_json(res).dump(2) + "\n");
    std::cout << "sweep " << mrtl::to_string(kind) << ": " << res.n_converged << "/"
              << res.draws.size() << " draws converged\n";
    return 0;
  }

  std::vector<std::string> methods;
  for (std::size_t pos = 0; pos < methods_csv.size();) {
    const std::size_t comma = methods_csv.find(',', pos);
    const std::size_t end = comma == std::string::npos ? methods_csv.size() : comma;
    if (end > pos) methods.push_back(methods_csv.substr(pos, end - pos));
    pos = end + 1;
  }
  if (methods.empty()) methods = mrtl::valid_methods();
  for (auto& m : methods) {
    // Accept short aliases for the mrtl variants.
    if (m == "fixed") m = "fixed_resolution";
    else if (m == "entropy") m = "mrtl_entropy";
    else if (m == "loss") m = "mrtl_loss_conv";
    else if (m == "sigma") m = "mrtl_sigma";
    else if (m == "mu_sigma") m = "mrtl_mu_sigma";
  }
  for (const auto& m : methods) {
    if (std::find(mrtl::valid_methods().begin(), mrtl::valid_methods().end(), m) ==
        mrtl::valid_methods().end()) {
      std::string msg = "unknown method '" + m + "'; valid methods:";
      for (const auto& v : mrtl::valid_methods()) msg += " " + v;
      throw std::invalid_argument(msg);
    }
    if (m != "fixed_resolution")
      mrtl::require_criterion_thresholds(
          crit_block, m == "mrtl_loss_conv"  ? mrtl::CriterionKind::loss_convergence
                      : m == "mrtl_entropy"  ? mrtl::CriterionKind::entropy_threshold
                      : m == "mrtl_sigma"    ? mrtl::CriterionKind::sigma_threshold
                                             : mrtl::CriterionKind::mu_sigma_threshold);
  }

  std::vector<std::uint64_t> seeds;
  for (int i = 1; i <= n_seeds; ++i) seeds.push_back(cfg.train.seed + i - 1);

  mrtl::ComparisonOptions copt;
  copt.fixed_step_cap = fixed_cap;
  const mrtl::BenchmarkReport report =
      mrtl::run_comparison(data, schedule, cfg.train, threshold, methods, seeds, copt);

  write_text(out_dir / "bench_report.json", mrtl::benchmark_to_json(report).dump(2) + "\n");
  mrtl::write_benchmark_csv(report, (out_dir / "bench_curves.csv").string());
  for (const auto& m : methods) {
    const double med = mrtl::median_cost(report, m);
    std::cout << m << ": median cost to threshold "
              << (std::isfinite(med) ? std::to_string(med) : std::string("unreached")) << "\n";
  }
  return 0;
}

int cmd_export_factors(const std::string& ckpt_path, const std::string& out_dir) {
  mrtl::Checkpoint ck;
  try {
    ck = mrtl::load_checkpoint(ckpt_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (!ck.factored)
    throw mrtl::ConfigError("(checkpoint)",
                            "holds a full-rank model; factor export needs a factored checkpoint");
  fs::create_directories(out_dir);
  const fs::path dir = out_dir;
  mrtl::export_factor_csv(*ck.factored, (dir / "factors.csv").string());
  mrtl::export_spatial_layout_csv(*ck.factored, (dir / "factor_layout.csv").string());
  mrtl::export_smoothness_csv(*ck.factored, (dir / "factor_smoothness.csv").string());
  std::cout << "exported factors to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-resolution spatial tensor factor model trainer"};
  app.require_subcommand(1);

  std::string config_path, resume_path;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "config file (JSON)")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  std::string bench_config, methods_csv, sweep_kind;
  double threshold = 0.0;
  int seeds = 5, draws = 20;
  long fixed_cap = 20000;
  auto* bench = app.add_subcommand("bench", "compare methods / sweep criterion thresholds");
  bench->add_option("--config", bench_config, "config file (JSON)")->required();
  bench->add_option("--methods", methods_csv, "comma-separated method list");
  bench->add_option("--threshold", threshold, "validation loss threshold")->required();
  bench->add_option("--seeds", seeds, "number of seeds");
  bench->add_option("--sweep", sweep_kind, "criterion kind to sweep instead of comparing");
  bench->add_option("--draws", draws, "threshold draws for the sweep");
  bench->add_option("--fixed-cap", fixed_cap, "step cap for the fixed-resolution baseline");
  double budget = 0.0;
  bench->add_option("--budget", budget, "weighted-cost budget per sweep run (0 = none)");

  std::string ckpt_path, export_out;
  auto* exp = app.add_subcommand("export-factors", "export factor CSVs from a checkpoint");
  exp->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  exp->add_option("--out", export_out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (*train) return cmd_train(config_path, resume_path);
    if (*bench) return cmd_bench(bench_config, methods_csv, threshold, seeds, sweep_kind, draws,
                                 fixed_cap, budget);
    if (*exp) return cmd_export_factors(ckpt_path, export_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  } catch (const mrtl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
