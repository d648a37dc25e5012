#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtl/data.hpp"
#include "mrtl/gradstats.hpp"
#include "mrtl/grid.hpp"
#include "mrtl/model.hpp"

namespace mrtl {

// Ordered grids for both spatial modes plus the refinement maps that connect
// consecutive stages. factorize_stage marks the last full-rank stage: the
// full tensor trained there is factorized to seed the latent factor model.
struct ResolutionSchedule {
  std::vector<Grid> grids_b;
  std::vector<Grid> grids_c;
  std::vector<RefinementMap> refmaps_b;
  std::vector<RefinementMap> refmaps_c;
  int factorize_stage = 0;

  int n_stages() const { return static_cast<int>(grids_b.size()); }
  void validate() const;
};

// Dyadic schedule: both modes halve their cell size each stage. If
// factorize_stage < 0 it is chosen as the last stage whose full tensor fits
// in memory_budget_bytes.
ResolutionSchedule dyadic_schedule(const Grid& coarse_b, const Grid& coarse_c, int stages,
                                   int factorize_stage, int n_tasks,
                                   std::size_t memory_budget_bytes);

enum class Prolongation { replicate, bilinear };

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 0.01;
  // step-decay schedule: lr * lr_decay_factor^floor(step / lr_decay_every),
  // per stage; factor 1 (or every <= 0) keeps the rate constant
  double lr_decay_factor = 1.0;
  long lr_decay_every = 0;
  OptimizerConfig optimizer;
  int batch_size = 512;
  long max_steps_per_stage = 2000;
  CriterionConfig criterion;
  RegConfig reg;
  int rank_dense = 2;
  int rank_sparse = 2;
  std::uint64_t seed = 1;
  int n_shards = 1;
  bool track_per_weight = false;  // one stats group per spatial weight instead of per cell
  Prolongation prolongation = Prolongation::replicate;
  int window = 100;  // gradient buffer length T
  int bins = 20;     // histogram bins
  double val_fraction = 0.2;
  int eval_every = 100;
  std::size_t memory_budget_bytes = std::size_t{256} << 20;
  int als_max_iters = 200;
  double als_tol = 1e-9;
};

// Lift the full tensor to finer grids by copying each parent weight into its
// children (or by bilinear interpolation of cell centers). Pass nullptr to
// keep a mode unchanged.
FullTensorModel finegrain_full(const FullTensorModel& m, const RefinementMap* rm_b,
                               const RefinementMap* rm_c,
                               Prolongation kind = Prolongation::replicate);

// Same lift applied to the spatial factor rows (B, C and their sparse
// counterparts); task factors and bias are untouched.
FactoredModel finegrain_factors(const FactoredModel& m, const RefinementMap* rm_b,
                                const RefinementMap* rm_c,
                                Prolongation kind = Prolongation::replicate);

// Frobenius norm of the parameter difference between two iterates.
double fixed_point_residual(FullTensorModel& prev, FullTensorModel& cur);
double fixed_point_residual(FactoredModel& prev, FactoredModel& cur);

// Number of tracked gradient groups: cells of both spatial modes, or every
// spatial weight when per_weight is set.
int spatial_group_count(const FullTensorModel& m, bool per_weight);
int spatial_group_count(const FactoredModel& m, bool per_weight);
void spatial_group_means(const FullTensorModel& m, std::span<const double> grad, bool per_weight,
                         std::vector<double>& out);
void spatial_group_means(const FactoredModel& m, std::span<const double> grad, bool per_weight,
                         std::vector<double>& out);

struct EvalPoint {
  long step = 0;        // step within the stage
  double cum_cost = 0;  // run-cumulative weighted cost at this point
  double train_loss = 0;
  double val_loss = 0;
};

struct StageRecord {
  int stage = 0;
  std::string phase;  // "full" or "factored"
  std::string resolution;
  long steps = 0;
  long fired_step = -1;  // stage step at which the criterion fired, -1 if never
  bool timed_out = false;
  bool reached_stop_loss = false;
  bool budget_exhausted = false;
  double step_cost = 0;  // parameters touched per step
  double weighted_cost = 0;
  double final_train_loss = 0;
  double final_val_loss = 0;
  double wall_seconds = 0;
  std::vector<EvalPoint> evals;
};

struct FactorizeRecord {
  int stage = 0;
  double fit = 0;
  int sweeps = 0;
  double wall_seconds = 0;
};

struct TrainReport {
  std::vector<StageRecord> stages;
  std::optional<FactorizeRecord> factorization;
  double total_weighted_cost = 0;
  double total_wall_seconds = 0;
  bool stopped_at_target = false;
  bool budget_exhausted = false;
  double cost_at_target = -1;  // cumulative cost when the target loss was first met
};

nlohmann::json report_to_json(const TrainReport& r);

struct SgdSeOptions {
  std::span<const Example> val;
  std::optional<double> stop_at_val_loss;
  // run-level weighted-cost ceiling; the stage stops once an eval point
  // crosses it
  std::optional<double> cost_budget;
  DiagnosticsWriter* diagnostics = nullptr;
  std::uint64_t shuffle_seed = 0;
  double cost_offset = 0;
  long step_offset = 0;  // run-global step numbering for diagnostics
};

// Seed of the minibatch shuffle stream a stage consumes. Deterministic in
// (seed, stage, phase) so every method sharing a run seed sees the same data
// order.
std::uint64_t stage_stream_seed(std::uint64_t seed, int stage, bool factored);

// One stage of stochastic training with gradient-statistics-controlled early
// transition: every step pushes the spatial group aggregates into `buf`,
// every criterion.check_every steps (after warm-up) the fine-graining
// criterion decides whether to stop the stage. Hitting max_steps_per_stage
// records a time-out instead.
StageRecord sgd_se(FullTensorModel& model, std::span<const Example> train, const TrainConfig& cfg,
                   GradStatsBuffer& buf, const SgdSeOptions& opt = {});
StageRecord sgd_se(FactoredModel& model, std::span<const Example> train, const TrainConfig& cfg,
                   GradStatsBuffer& buf, const SgdSeOptions& opt = {});

struct MrtlOptions {
  std::optional<double> stop_at_val_loss;
  std::optional<double> cost_budget;
  std::string diagnostics_path;
  std::string checkpoint_dir;
  // Validation records override; when null a val_fraction split of `data`
  // (seeded by cfg.seed) is used.
  const RawDataset* external_val = nullptr;
  // Resume points: continue the full-rank phase (or the factored phase) from
  // a checkpointed model at resume_stage instead of starting cold.
  const FullTensorModel* resume_full = nullptr;
  const FactoredModel* resume_factored = nullptr;
  int resume_stage = 0;
};

struct MrtlResult {
  FactoredModel model;
  TrainReport report;
};

// Two-phase coarse-to-fine training: full-rank model through the stages up to
// factorize_stage, CP factorization to seed the dense+sparse factor model,
// then factored training through the remaining stages (fine-tuning at the
// factorization stage first).
MrtlResult mrtl_train(const ResolutionSchedule& schedule, const RawDataset& data,
                      const TrainConfig& cfg, const MrtlOptions& opt = {});

}  // namespace mrtl
