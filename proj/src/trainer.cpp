#include "mrtl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string_view>

#include "mrtl/checkpoint.hpp"
#include "mrtl/rng.hpp"

namespace mrtl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// fine index -> weighted coarse contributions
using ProlongRows = std::vector<std::vector<std::pair<int, double>>>;

ProlongRows replicate_rows(const RefinementMap& rm) {
  ProlongRows rows(rm.parent.size());
  for (std::size_t i = 0; i < rm.parent.size(); ++i) rows[i] = {{rm.parent[i], 1.0}};
  return rows;
}

ProlongRows bilinear_rows(const Grid& coarse, const Grid& fine) {
  ProlongRows rows(fine.cell_count());
  for (int i = 0; i < fine.cell_count(); ++i) {
    const Point p = fine.cell_center(i);
    const double u = (p.x - coarse.origin.x) / coarse.cell_size - 0.5;
    const double v = (p.y - coarse.origin.y) / coarse.cell_size - 0.5;
    const int c0 = std::clamp(static_cast<int>(std::floor(u)), 0, std::max(coarse.cols - 2, 0));
    const int r0 = std::clamp(static_cast<int>(std::floor(v)), 0, std::max(coarse.rows - 2, 0));
    const double fu = coarse.cols > 1 ? std::clamp(u - c0, 0.0, 1.0) : 0.0;
    const double fv = coarse.rows > 1 ? std::clamp(v - r0, 0.0, 1.0) : 0.0;
    auto add = [&](int r, int c, double w) {
      if (w <= 0.0 || r >= coarse.rows || c >= coarse.cols) return;
      rows[i].emplace_back(coarse.index(r, c), w);
    };
    add(r0, c0, (1 - fu) * (1 - fv));
    add(r0, c0 + 1, fu * (1 - fv));
    add(r0 + 1, c0, (1 - fu) * fv);
    add(r0 + 1, c0 + 1, fu * fv);
  }
  return rows;
}

ProlongRows prolong_rows(const RefinementMap& rm, Prolongation kind) {
  return kind == Prolongation::replicate ? replicate_rows(rm)
                                         : bilinear_rows(rm.coarse, rm.fine);
}

Eigen::MatrixXd prolong_matrix_rows(const Eigen::MatrixXd& m, const ProlongRows& rows) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [j, w] : rows[i]) out.row(static_cast<Eigen::Index>(i)) += w * m.row(j);
  return out;
}

std::string resolution_string(const Grid& gb, const Grid& gc) {
  return "b=" + std::to_string(gb.rows) + "x" + std::to_string(gb.cols) +
         ",c=" + std::to_string(gc.rows) + "x" + std::to_string(gc.cols);
}

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, std::size_t n) : cfg_(cfg) {
    if (cfg_.kind == OptimizerConfig::Kind::adam) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
    }
  }

  void step(double lr, std::vector<ParamBlock>& blocks, std::span<const double> grad) {
    ++t_;
    std::size_t off = 0;
    if (cfg_.kind == OptimizerConfig::Kind::sgd) {
      for (auto& b : blocks) {
        for (std::size_t i = 0; i < b.size; ++i) b.data[i] -= lr * grad[off + i];
        off += b.size;
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& b : blocks) {
      for (std::size_t i = 0; i < b.size; ++i) {
        const std::size_t j = off + i;
        const double g = grad[j];
        m_[j] = cfg_.beta1 * m_[j] + (1.0 - cfg_.beta1) * g;
        v_[j] = cfg_.beta2 * v_[j] + (1.0 - cfg_.beta2) * g * g;
        b.data[i] -= lr * (m_[j] / bc1) / (std::sqrt(v_[j] / bc2) + cfg_.eps);
      }
      off += b.size;
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  double t_ = 0;
};

template <typename Model>
StageRecord sgd_se_impl(Model& model, std::span<const Example> train, const TrainConfig& cfg,
                        GradStatsBuffer& buf, const SgdSeOptions& opt) {
  if (train.empty()) throw std::invalid_argument("sgd_se: empty training set");
  if (buf.groups() != spatial_group_count(model, cfg.track_per_weight))
    throw std::invalid_argument("sgd_se: buffer group count does not match model");

  const auto t0 = Clock::now();
  StageRecord rec;
  rec.step_cost = static_cast<double>(param_count(model));
  rec.resolution = resolution_string(model.grid_b, model.grid_c);

  auto blocks = param_blocks(model);
  Optimizer optim(cfg.optimizer, param_count(model));
  const long min_steps = cfg.criterion.min_steps > 0 ? cfg.criterion.min_steps : buf.window();

  std::vector<double> losses;
  losses.reserve(cfg.max_steps_per_stage);
  std::vector<double> groups(buf.groups());

  Rng shuffle_rng(opt.shuffle_seed);
  std::vector<Example> epoch(train.begin(), train.end());
  shuffle_rng.shuffle(epoch);
  std::size_t pos = 0;

  auto eval_val = [&]() {
    return opt.val.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : mean_loss(model, opt.val, cfg.n_shards);
  };

  for (long step = 1; step <= cfg.max_steps_per_stage; ++step) {
    if (pos >= epoch.size()) {
      shuffle_rng.shuffle(epoch);
      pos = 0;
    }
    const std::size_t take = std::min<std::size_t>(cfg.batch_size, epoch.size() - pos);
    std::span<const Example> batch(epoch.data() + pos, take);
    pos += take;

    LossGrad lg = loss_and_grad(model, batch, cfg.reg, cfg.n_shards);
    losses.push_back(lg.loss);
    spatial_group_means(model, lg.grad, cfg.track_per_weight, groups);
    buf.push(groups);
    double lr = cfg.learning_rate;
    if (cfg.lr_decay_every > 0 && cfg.lr_decay_factor != 1.0)
      lr *= std::pow(cfg.lr_decay_factor, static_cast<double>((step - 1) / cfg.lr_decay_every));
    optim.step(lr, blocks, lg.grad);
    rec.steps = step;

    const bool at_eval = cfg.eval_every > 0 && step % cfg.eval_every == 0;
    if (at_eval && !opt.val.empty()) {
      const double vl = eval_val();
      const double cum = opt.cost_offset + step * rec.step_cost;
      rec.evals.push_back({step, cum, lg.loss, vl});
      if (opt.stop_at_val_loss && vl <= *opt.stop_at_val_loss) {
        rec.reached_stop_loss = true;
        break;
      }
      if (opt.cost_budget && cum >= *opt.cost_budget) {
        rec.budget_exhausted = true;
        break;
      }
    }

    if (step >= min_steps && step % cfg.criterion.check_every == 0) {
      CriterionDecision d = should_finegrain(cfg.criterion, buf, losses);
      if (opt.diagnostics) opt.diagnostics->record(opt.step_offset + step, cfg.criterion, d);
      if (d.fire) {
        rec.fired_step = step;
        break;
      }
    }
  }
  rec.timed_out = rec.fired_step < 0 && !rec.reached_stop_loss && !rec.budget_exhausted;
  rec.weighted_cost = static_cast<double>(rec.steps) * rec.step_cost;
  rec.final_train_loss = losses.empty() ? 0.0 : losses.back();
  rec.final_val_loss = eval_val();
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

}  // namespace

std::uint64_t stage_stream_seed(std::uint64_t seed, int stage, bool factored) {
  return mix_seed(seed, static_cast<std::uint64_t>(stage) * 2 + (factored ? 1 : 0));
}

void ResolutionSchedule::validate() const {
  const std::size_t n = grids_b.size();
  if (n == 0) throw std::invalid_argument("schedule: no stages");
  if (grids_c.size() != n) throw std::invalid_argument("schedule: mode grid lists differ in length");
  if (refmaps_b.size() != n - 1 || refmaps_c.size() != n - 1)
    throw std::invalid_argument("schedule: need one refinement map per consecutive stage pair");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (grids_b[i + 1].cell_count() <= grids_b[i].cell_count() ||
        grids_c[i + 1].cell_count() <= grids_c[i].cell_count())
      throw std::invalid_argument("schedule: cell counts must strictly increase");
    if (!(refmaps_b[i].coarse == grids_b[i]) || !(refmaps_b[i].fine == grids_b[i + 1]) ||
        !(refmaps_c[i].coarse == grids_c[i]) || !(refmaps_c[i].fine == grids_c[i + 1]))
      throw std::invalid_argument("schedule: refinement maps do not connect consecutive grids");
  }
  if (factorize_stage < 0 || factorize_stage >= static_cast<int>(n))
    throw std::invalid_argument("schedule: factorize_stage out of range");
}

ResolutionSchedule dyadic_schedule(const Grid& coarse_b, const Grid& coarse_c, int stages,
                                   int factorize_stage, int n_tasks,
                                   std::size_t memory_budget_bytes) {
  if (stages < 1) throw std::invalid_argument("schedule: need at least one stage");
  ResolutionSchedule s;
  s.grids_b.push_back(coarse_b);
  s.grids_c.push_back(coarse_c);
  for (int i = 1; i < stages; ++i) {
    auto [fb, mb] = refine_dyadic(s.grids_b.back());
    auto [fc, mc] = refine_dyadic(s.grids_c.back());
    s.grids_b.push_back(fb);
    s.refmaps_b.push_back(std::move(mb));
    s.grids_c.push_back(fc);
    s.refmaps_c.push_back(std::move(mc));
  }
  if (factorize_stage >= 0) {
    s.factorize_stage = factorize_stage;
  } else {
    int best = -1;
    for (int i = 0; i < stages; ++i) {
      const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(n_tasks) *
                                s.grids_b[i].cell_count() * s.grids_c[i].cell_count();
      if (bytes <= memory_budget_bytes) best = i;
    }
    if (best < 0)
      throw std::runtime_error("schedule too large: no stage's full tensor fits the memory budget");
    s.factorize_stage = best;
  }
  s.validate();
  return s;
}

FullTensorModel finegrain_full(const FullTensorModel& m, const RefinementMap* rm_b,
                               const RefinementMap* rm_c, Prolongation kind) {
  if (rm_b && !(rm_b->coarse == m.grid_b))
    throw std::invalid_argument("finegrain_full: mode-b map does not match model grid");
  if (rm_c && !(rm_c->coarse == m.grid_c))
    throw std::invalid_argument("finegrain_full: mode-c map does not match model grid");

  const Grid gb = rm_b ? rm_b->fine : m.grid_b;
  const Grid gc = rm_c ? rm_c->fine : m.grid_c;
  FullTensorModel out;
  out.grid_b = gb;
  out.grid_c = gc;
  out.bias = m.bias;
  out.weights = DenseTensor3(m.n_tasks(), gb.cell_count(), gc.cell_count());

  const ProlongRows rows_b = rm_b ? prolong_rows(*rm_b, kind) : ProlongRows{};
  const ProlongRows rows_c = rm_c ? prolong_rows(*rm_c, kind) : ProlongRows{};
  for (int a = 0; a < m.n_tasks(); ++a) {
    for (int b = 0; b < out.weights.mb; ++b) {
      const auto* wb = rm_b ? &rows_b[b] : nullptr;
      for (int c = 0; c < out.weights.mc; ++c) {
        double v = 0.0;
        if (rm_b && rm_c) {
          for (const auto& [pb, fb] : *wb)
            for (const auto& [pc, fc] : rows_c[c]) v += fb * fc * m.weights(a, pb, pc);
        } else if (rm_b) {
          for (const auto& [pb, fb] : *wb) v += fb * m.weights(a, pb, c);
        } else if (rm_c) {
          for (const auto& [pc, fc] : rows_c[c]) v += fc * m.weights(a, b, pc);
        } else {
          v = m.weights(a, b, c);
        }
        out.weights(a, b, c) = v;
      }
    }
  }
  return out;
}

FactoredModel finegrain_factors(const FactoredModel& m, const RefinementMap* rm_b,
                                const RefinementMap* rm_c, Prolongation kind) {
  if (rm_b && !(rm_b->coarse == m.grid_b))
    throw std::invalid_argument("finegrain_factors: mode-b map does not match model grid");
  if (rm_c && !(rm_c->coarse == m.grid_c))
    throw std::invalid_argument("finegrain_factors: mode-c map does not match model grid");

  FactoredModel out = m;
  if (rm_b) {
    const ProlongRows rows = prolong_rows(*rm_b, kind);
    out.dense.B = prolong_matrix_rows(m.dense.B, rows);
    out.sparse.B = prolong_matrix_rows(m.sparse.B, rows);
    out.grid_b = rm_b->fine;
  }
  if (rm_c) {
    const ProlongRows rows = prolong_rows(*rm_c, kind);
    out.dense.C = prolong_matrix_rows(m.dense.C, rows);
    out.sparse.C = prolong_matrix_rows(m.sparse.C, rows);
    out.grid_c = rm_c->fine;
  }
  return out;
}

namespace {

template <typename Model>
double residual_impl(Model& prev, Model& cur) {
  auto pb = param_blocks(prev);
  auto cb = param_blocks(cur);
  if (pb.size() != cb.size()) throw std::invalid_argument("fixed_point_residual: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb[i].size != cb[i].size)
      throw std::invalid_argument("fixed_point_residual: shape mismatch in " + pb[i].name);
    for (std::size_t j = 0; j < pb[i].size; ++j) {
      const double d = cb[i].data[j] - pb[i].data[j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

}  // namespace

double fixed_point_residual(FullTensorModel& prev, FullTensorModel& cur) {
  return residual_impl(prev, cur);
}
double fixed_point_residual(FactoredModel& prev, FactoredModel& cur) {
  return residual_impl(prev, cur);
}

int spatial_group_count(const FullTensorModel& m, bool per_weight) {
  return per_weight ? static_cast<int>(m.weights.size()) : m.weights.mb + m.weights.mc;
}

int spatial_group_count(const FactoredModel& m, bool per_weight) {
  if (!per_weight) return m.dense.mb() + m.dense.mc();
  return static_cast<int>(m.dense.B.size() + m.dense.C.size() + m.sparse.B.size() +
                          m.sparse.C.size());
}

void spatial_group_means(const FullTensorModel& m, std::span<const double> grad, bool per_weight,
                         std::vector<double>& out) {
  const int na = m.weights.na, mb = m.weights.mb, mc = m.weights.mc;
  if (per_weight) {
    out.assign(grad.begin(), grad.begin() + m.weights.size());
    return;
  }
  out.assign(mb + mc, 0.0);
  std::size_t idx = 0;
  for (int a = 0; a < na; ++a)
    for (int b = 0; b < mb; ++b)
      for (int c = 0; c < mc; ++c, ++idx) {
        out[b] += grad[idx];
        out[mb + c] += grad[idx];
      }
  for (int b = 0; b < mb; ++b) out[b] /= static_cast<double>(na) * mc;
  for (int c = 0; c < mc; ++c) out[mb + c] /= static_cast<double>(na) * mb;
}

void spatial_group_means(const FactoredModel& m, std::span<const double> grad, bool per_weight,
                         std::vector<double>& out) {
  const int na = m.n_tasks(), mb = m.dense.mb(), mc = m.dense.mc();
  const int kd = m.dense.rank(), ks = m.sparse.rank();
  const std::size_t off_dB = static_cast<std::size_t>(na) * kd;
  const std::size_t off_dC = off_dB + static_cast<std::size_t>(mb) * kd;
  const std::size_t off_sA = off_dC + static_cast<std::size_t>(mc) * kd;
  const std::size_t off_sB = off_sA + static_cast<std::size_t>(na) * ks;
  const std::size_t off_sC = off_sB + static_cast<std::size_t>(mb) * ks;

  if (per_weight) {
    out.clear();
    out.reserve(spatial_group_count(m, true));
    out.insert(out.end(), grad.begin() + off_dB, grad.begin() + off_sA);  // dense B, C
    out.insert(out.end(), grad.begin() + off_sB,
               grad.begin() + off_sC + static_cast<std::size_t>(mc) * ks);  // sparse B, C
    return;
  }
  out.assign(mb + mc, 0.0);
  for (int k = 0; k < kd; ++k)
    for (int b = 0; b < mb; ++b) out[b] += grad[off_dB + static_cast<std::size_t>(k) * mb + b];
  for (int k = 0; k < ks; ++k)
    for (int b = 0; b < mb; ++b) out[b] += grad[off_sB + static_cast<std::size_t>(k) * mb + b];
  for (int k = 0; k < kd; ++k)
    for (int c = 0; c < mc; ++c) out[mb + c] += grad[off_dC + static_cast<std::size_t>(k) * mc + c];
  for (int k = 0; k < ks; ++k)
    for (int c = 0; c < mc; ++c) out[mb + c] += grad[off_sC + static_cast<std::size_t>(k) * mc + c];
  for (int b = 0; b < mb; ++b) out[b] /= kd + ks;
  for (int c = 0; c < mc; ++c) out[mb + c] /= kd + ks;
}

StageRecord sgd_se(FullTensorModel& model, std::span<const Example> train, const TrainConfig& cfg,
                   GradStatsBuffer& buf, const SgdSeOptions& opt) {
  return sgd_se_impl(model, train, cfg, buf, opt);
}

StageRecord sgd_se(FactoredModel& model, std::span<const Example> train, const TrainConfig& cfg,
                   GradStatsBuffer& buf, const SgdSeOptions& opt) {
  return sgd_se_impl(model, train, cfg, buf, opt);
}

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : s.evals)
      evals.push_back({{"step", e.step},
                       {"cum_cost", e.cum_cost},
                       {"train_loss", e.train_loss},
                       {"val_loss", e.val_loss}});
    stages.push_back({{"stage", s.stage},
                      {"phase", s.phase},
                      {"resolution", s.resolution},
                      {"steps", s.steps},
                      {"fired_step", s.fired_step},
                      {"timed_out", s.timed_out},
                      {"reached_stop_loss", s.reached_stop_loss},
                      {"step_cost", s.step_cost},
                      {"weighted_cost", s.weighted_cost},
                      {"final_train_loss", s.final_train_loss},
                      {"final_val_loss", s.final_val_loss},
                      {"wall_seconds", s.wall_seconds},
                      {"evals", evals}});
  }
  nlohmann::json j{{"stages", stages},
                   {"total_weighted_cost", r.total_weighted_cost},
                   {"total_wall_seconds", r.total_wall_seconds},
                   {"stopped_at_target", r.stopped_at_target},
                   {"budget_exhausted", r.budget_exhausted},
                   {"cost_at_target", r.cost_at_target}};
  if (r.factorization)
    j["factorization"] = {{"stage", r.factorization->stage},
                          {"fit", r.factorization->fit},
                          {"sweeps", r.factorization->sweeps},
                          {"wall_seconds", r.factorization->wall_seconds}};
  return j;
}

MrtlResult mrtl_train(const ResolutionSchedule& schedule, const RawDataset& data,
                      const TrainConfig& cfg, const MrtlOptions& opt) {
  schedule.validate();
  if (data.records.empty()) throw std::invalid_argument("mrtl_train: empty dataset");
  const int n_stages = schedule.n_stages();
  const int f = schedule.factorize_stage;

  {
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(data.n_tasks) *
                              schedule.grids_b[f].cell_count() * schedule.grids_c[f].cell_count();
    if (bytes > cfg.memory_budget_bytes)
      throw std::runtime_error("schedule too large: full tensor at the factorization stage needs " +
                               std::to_string(bytes) + " bytes");
  }

  RawDataset train_raw, val_raw;
  if (opt.external_val) {
    train_raw = data;
    val_raw = *opt.external_val;
  } else {
    const SplitIndices split = split_dataset(data.records.size(), cfg.val_fraction, cfg.seed);
    train_raw = subset(data, split.train);
    val_raw = subset(data, split.val);
  }

  DiagnosticsWriter diag;
  if (!opt.diagnostics_path.empty()) diag = DiagnosticsWriter(opt.diagnostics_path);
  DiagnosticsWriter* diag_ptr = diag.open() ? &diag : nullptr;

  const auto run_t0 = Clock::now();
  TrainReport report;
  double cum_cost = 0.0;
  long cum_steps = 0;
  bool stopped = false;

  const std::filesystem::path ckpt_dir = opt.checkpoint_dir;
  auto ckpt_path = [&](int stage, const char* phase, const char* kind) {
    return (ckpt_dir / ("stage_" + std::to_string(stage) + "_" + phase + "_" + kind + ".ckpt"))
        .string();
  };

  auto run_stage = [&](auto& model, int stage, const char* phase) {
    const auto train_ex = encode_at(train_raw, schedule.grids_b[stage], schedule.grids_c[stage]);
    const auto val_ex = encode_at(val_raw, schedule.grids_b[stage], schedule.grids_c[stage]);
    GradStatsBuffer buf(spatial_group_count(model, cfg.track_per_weight), cfg.window, cfg.bins);
    SgdSeOptions so;
    so.val = val_ex;
    so.stop_at_val_loss = opt.stop_at_val_loss;
    so.cost_budget = opt.cost_budget;
    so.diagnostics = diag_ptr;
    so.shuffle_seed = stage_stream_seed(cfg.seed, stage, std::string_view(phase) == "factored");
    so.cost_offset = cum_cost;
    so.step_offset = cum_steps;
    StageRecord rec = sgd_se(model, train_ex, cfg, buf, so);
    rec.stage = stage;
    rec.phase = phase;
    cum_cost += rec.weighted_cost;
    cum_steps += rec.steps;
    if (rec.budget_exhausted) {
      stopped = true;
      report.budget_exhausted = true;
    }
    if (rec.reached_stop_loss) {
      stopped = true;
      report.stopped_at_target = true;
      for (const auto& e : rec.evals)
        if (opt.stop_at_val_loss && e.val_loss <= *opt.stop_at_val_loss) {
          report.cost_at_target = e.cum_cost;
          break;
        }
    }
    report.stages.push_back(rec);
    if (!ckpt_dir.empty()) save_checkpoint(ckpt_path(stage, phase, "trained"), model, stage);
  };

  FactoredModel fact;
  int first_factored_stage = f;
  if (opt.resume_factored) {
    fact = *opt.resume_factored;
    first_factored_stage = opt.resume_stage;
    if (first_factored_stage < f || first_factored_stage >= n_stages)
      throw std::runtime_error("resume stage out of the factored phase");
    if (!(fact.grid_b == schedule.grids_b[first_factored_stage]) ||
        !(fact.grid_c == schedule.grids_c[first_factored_stage]))
      throw std::runtime_error("resume checkpoint grids do not match the schedule");
  } else {
    FullTensorModel full =
        FullTensorModel::zeros(data.n_tasks, schedule.grids_b[0], schedule.grids_c[0]);
    int first_full_stage = 0;
    if (opt.resume_full) {
      full = *opt.resume_full;
      first_full_stage = opt.resume_stage;
      if (first_full_stage > f) throw std::runtime_error("resume stage out of the full phase");
      if (!(full.grid_b == schedule.grids_b[first_full_stage]) ||
          !(full.grid_c == schedule.grids_c[first_full_stage]))
        throw std::runtime_error("resume checkpoint grids do not match the schedule");
    }
    for (int s = first_full_stage; s <= f && !stopped; ++s) {
      run_stage(full, s, "full");
      if (stopped || s == f) break;
      full = finegrain_full(full, &schedule.refmaps_b[s], &schedule.refmaps_c[s], cfg.prolongation);
      if (!ckpt_dir.empty()) save_checkpoint(ckpt_path(s + 1, "full", "init"), full, s + 1);
    }

    // Factorize the trained full tensor to seed the latent factor model. The
    // fit runs at the combined rank and the components split by norm: the
    // largest seed the dense set, the rest the sparse set.
    const int last_full_stage = report.stages.empty() ? 0 : report.stages.back().stage;
    const auto als_t0 = Clock::now();
    const CpAlsResult als = cp_als(full.weights, cfg.rank_dense + cfg.rank_sparse,
                                   cfg.als_max_iters, cfg.als_tol, mix_seed(cfg.seed, 0xa15));
    auto [dense, sparse] = split_by_component_norm(als.factors, cfg.rank_dense);
    fact.dense = std::move(dense);
    fact.sparse = std::move(sparse);
    fact.bias = full.bias;
    fact.grid_b = full.grid_b;
    fact.grid_c = full.grid_c;
    report.factorization =
        FactorizeRecord{last_full_stage, als.fit, als.sweeps, seconds_since(als_t0)};
    if (!ckpt_dir.empty())
      save_checkpoint(ckpt_path(last_full_stage, "factored", "init"), fact, last_full_stage);
  }

  for (int s = first_factored_stage; s < n_stages && !stopped; ++s) {
    run_stage(fact, s, "factored");
    if (stopped || s + 1 >= n_stages) break;
    fact = finegrain_factors(fact, &schedule.refmaps_b[s], &schedule.refmaps_c[s],
                             cfg.prolongation);
    if (!ckpt_dir.empty()) save_checkpoint(ckpt_path(s + 1, "factored", "init"), fact, s + 1);
  }

  for (const auto& s : report.stages) report.total_weighted_cost += s.weighted_cost;
  report.total_wall_seconds = seconds_since(run_t0);
  return {std::move(fact), std::move(report)};
}

}  // namespace mrtl
