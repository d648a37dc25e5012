#include "mrtl/config.hpp"

#include <fstream>

#include "mrtl/checkpoint.hpp"

namespace mrtl {

namespace {

using nlohmann::json;

// Field access with dotted-path error messages.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  bool has(const char* name) const { return j_->contains(name); }

  Reader at(const char* name) const {
    if (!j_->contains(name)) throw ConfigError(join(name), "missing required field");
    return Reader((*j_)[name], join(name));
  }

  template <typename T>
  T get() const {
    try {
      return j_->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_, "has the wrong type");
    }
  }

  template <typename T>
  T get(const char* name) const {
    return at(name).get<T>();
  }

  template <typename T>
  T get_or(const char* name, T fallback) const {
    return has(name) ? get<T>(name) : fallback;
  }

  const json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

  std::string join(const char* name) const {
    return path_.empty() ? name : path_ + "." + name;
  }

 private:
  const json* j_;
  std::string path_;
};

Grid grid_from(const Reader& r) {
  const Grid g = build_grid(r.get<int>("rows"), r.get<int>("cols"), r.get<double>("cell_size"),
                            r.has("origin")
                                ? Point{r.at("origin").raw().at(0).get<double>(),
                                        r.at("origin").raw().at(1).get<double>()}
                                : Point{0.0, 0.0});
  return g;
}

CriterionConfig criterion_from(const Reader& r) {
  CriterionConfig c;
  c.kind = criterion_kind_from_string(r.get<std::string>("kind"));
  require_criterion_thresholds(r.raw(), c.kind);
  c.tau_l = r.get_or("tau_l", 0.0);
  c.tau_s = r.get_or("tau_s", 0.0);
  c.tau_sigma = r.get_or("tau_sigma", 0.0);
  c.tau_mu = r.get_or("tau_mu", 0.0);
  c.p_frac = r.get_or("p_frac", 0.10);
  c.check_every = r.get_or("check_every", 100);
  c.min_steps = r.get_or("min_steps", 0);
  if (!(c.p_frac > 0.0 && c.p_frac <= 1.0))
    throw ConfigError(r.join("p_frac"), "must be in (0, 1]");
  if (c.check_every < 1) throw ConfigError(r.join("check_every"), "must be >= 1");
  return c;
}

}  // namespace

void require_criterion_thresholds(const json& criterion_block, CriterionKind kind) {
  auto need = [&](const char* name) {
    if (!criterion_block.contains(name))
      throw ConfigError(std::string("criterion.") + name,
                        std::string("must be set explicitly for kind ") + to_string(kind));
  };
  switch (kind) {
    case CriterionKind::loss_convergence: need("tau_l"); break;
    case CriterionKind::entropy_threshold: need("tau_s"); break;
    case CriterionKind::sigma_threshold: need("tau_sigma"); break;
    case CriterionKind::mu_sigma_threshold:
      need("tau_sigma");
      need("tau_mu");
      break;
  }
}

RunConfig parse_run_config(const json& j) {
  Reader root(j, "");
  RunConfig cfg;

  const Reader ds = root.at("dataset");
  const bool has_synth = ds.has("synthetic");
  const bool has_path = ds.has("path");
  if (has_synth == has_path)
    throw ConfigError("dataset", "exactly one of 'synthetic' or 'path' must be given");
  if (has_path) {
    cfg.dataset_path = ds.get<std::string>("path");
  } else {
    const Reader s = ds.at("synthetic");
    SyntheticSpec spec = default_synthetic_spec();
    spec.n_tasks = s.get_or("n_tasks", spec.n_tasks);
    if (s.has("grid_b")) spec.grid_b = grid_from(s.at("grid_b"));
    if (s.has("grid_c")) spec.grid_c = grid_from(s.at("grid_c"));
    spec.rank_dense = s.get_or("rank_dense", spec.rank_dense);
    spec.rank_sparse = s.get_or("rank_sparse", spec.rank_sparse);
    spec.n_samples = s.get_or("n_samples", spec.n_samples);
    spec.n_context = s.get_or("n_context", spec.n_context);
    spec.label_noise = s.get_or("label_noise", spec.label_noise);
    spec.task_scale = s.get_or("task_scale", spec.task_scale);
    spec.sparse_cells = s.get_or("sparse_cells", spec.sparse_cells);
    spec.sparse_magnitude = s.get_or("sparse_magnitude", spec.sparse_magnitude);
    spec.bias = s.get_or("bias", spec.bias);
    spec.seed = s.get_or("seed", spec.seed);
    if (!(spec.label_noise >= 0.0 && spec.label_noise < 0.5))
      throw ConfigError(s.join("label_noise"), "must be in [0, 0.5)");
    cfg.synthetic = spec;
  }

  const Reader sch = root.at("schedule");
  cfg.coarse_b = grid_from(sch.at("coarse_b"));
  cfg.coarse_c = grid_from(sch.at("coarse_c"));
  cfg.stages = sch.get<int>("stages");
  if (cfg.stages < 1) throw ConfigError("schedule.stages", "must be >= 1");
  cfg.factorize_stage = sch.get_or("factorize_stage", -1);
  if (cfg.factorize_stage >= cfg.stages)
    throw ConfigError("schedule.factorize_stage", "must be < stages");

  const Reader tr = root.at("train");
  TrainConfig& t = cfg.train;
  t.learning_rate = tr.get<double>("learning_rate");
  if (!(t.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  t.lr_decay_factor = tr.get_or("lr_decay_factor", t.lr_decay_factor);
  t.lr_decay_every = tr.get_or<long>("lr_decay_every", t.lr_decay_every);
  if (!(t.lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor", "must be > 0");
  const std::string optname = tr.get_or<std::string>("optimizer", "adam");
  if (optname == "adam") {
    t.optimizer.kind = OptimizerConfig::Kind::adam;
    if (tr.has("adam")) {
      const Reader a = tr.at("adam");
      t.optimizer.beta1 = a.get_or("beta1", t.optimizer.beta1);
      t.optimizer.beta2 = a.get_or("beta2", t.optimizer.beta2);
      t.optimizer.eps = a.get_or("eps", t.optimizer.eps);
    }
  } else if (optname == "sgd") {
    t.optimizer.kind = OptimizerConfig::Kind::sgd;
  } else {
    throw ConfigError("train.optimizer", "must be 'adam' or 'sgd'");
  }
  t.batch_size = tr.get_or("batch_size", t.batch_size);
  if (t.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  t.max_steps_per_stage = tr.get_or<long>("max_steps_per_stage", t.max_steps_per_stage);
  if (t.max_steps_per_stage < 1) throw ConfigError("train.max_steps_per_stage", "must be >= 1");
  t.rank_dense = tr.get_or("rank_dense", t.rank_dense);
  t.rank_sparse = tr.get_or("rank_sparse", t.rank_sparse);
  if (t.rank_dense < 1) throw ConfigError("train.rank_dense", "must be >= 1");
  if (t.rank_sparse < 1) throw ConfigError("train.rank_sparse", "must be >= 1");
  t.seed = tr.get_or<std::uint64_t>("seed", t.seed);
  if (tr.has("reg")) {
    const Reader rg = tr.at("reg");
    t.reg.l2_dense = rg.get_or("l2_dense", 0.0);
    t.reg.l1_sparse = rg.get_or("l1_sparse", 0.0);
    if (t.reg.l2_dense < 0.0) throw ConfigError("train.reg.l2_dense", "must be >= 0");
    if (t.reg.l1_sparse < 0.0) throw ConfigError("train.reg.l1_sparse", "must be >= 0");
  }
  t.window = tr.get_or("window", t.window);
  if (t.window < 2) throw ConfigError("train.window", "must be >= 2");
  t.bins = tr.get_or("bins", t.bins);
  if (t.bins < 2) throw ConfigError("train.bins", "must be >= 2");
  t.val_fraction = tr.get_or("val_fraction", t.val_fraction);
  if (!(t.val_fraction >= 0.0 && t.val_fraction < 1.0))
    throw ConfigError("train.val_fraction", "must be in [0, 1)");
  t.eval_every = tr.get_or("eval_every", t.eval_every);
  t.track_per_weight = tr.get_or("track_per_weight", false);
  const std::string prol = tr.get_or<std::string>("prolongation", "replicate");
  if (prol == "replicate")
    t.prolongation = Prolongation::replicate;
  else if (prol == "bilinear")
    t.prolongation = Prolongation::bilinear;
  else
    throw ConfigError("train.prolongation", "must be 'replicate' or 'bilinear'");
  t.als_max_iters = tr.get_or("als_max_iters", t.als_max_iters);
  t.als_tol = tr.get_or("als_tol", t.als_tol);

  t.criterion = criterion_from(root.at("criterion"));

  cfg.output_dir = root.get_or<std::string>("output_dir", "");
  const double budget_mb = root.get_or("memory_budget_mb", 256.0);
  if (!(budget_mb > 0.0)) throw ConfigError("memory_budget_mb", "must be > 0");
  t.memory_budget_bytes = static_cast<std::size_t>(budget_mb * (1 << 20));
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("(file)", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json resolved_config_json(const RunConfig& cfg) {
  json ds;
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    ds["synthetic"] = {{"n_tasks", s.n_tasks},
                       {"grid_b", grid_to_json(s.grid_b)},
                       {"grid_c", grid_to_json(s.grid_c)},
                       {"rank_dense", s.rank_dense},
                       {"rank_sparse", s.rank_sparse},
                       {"n_samples", s.n_samples},
                       {"n_context", s.n_context},
                       {"label_noise", s.label_noise},
                       {"task_scale", s.task_scale},
                       {"sparse_cells", s.sparse_cells},
                       {"sparse_magnitude", s.sparse_magnitude},
                       {"bias", s.bias},
                       {"seed", s.seed}};
  } else {
    ds["path"] = cfg.dataset_path;
  }

  const TrainConfig& t = cfg.train;
  const CriterionConfig& c = t.criterion;
  json j{
      {"dataset", ds},
      {"schedule",
       {{"coarse_b", grid_to_json(cfg.coarse_b)},
        {"coarse_c", grid_to_json(cfg.coarse_c)},
        {"stages", cfg.stages},
        {"factorize_stage", cfg.factorize_stage}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"lr_decay_factor", t.lr_decay_factor},
        {"lr_decay_every", t.lr_decay_every},
        {"optimizer", t.optimizer.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd"},
        {"adam", {{"beta1", t.optimizer.beta1}, {"beta2", t.optimizer.beta2}, {"eps", t.optimizer.eps}}},
        {"batch_size", t.batch_size},
        {"max_steps_per_stage", t.max_steps_per_stage},
        {"rank_dense", t.rank_dense},
        {"rank_sparse", t.rank_sparse},
        {"seed", t.seed},
        {"reg", {{"l2_dense", t.reg.l2_dense}, {"l1_sparse", t.reg.l1_sparse}}},
        {"window", t.window},
        {"bins", t.bins},
        {"val_fraction", t.val_fraction},
        {"eval_every", t.eval_every},
        {"track_per_weight", t.track_per_weight},
        {"prolongation", t.prolongation == Prolongation::replicate ? "replicate" : "bilinear"},
        {"als_max_iters", t.als_max_iters},
        {"als_tol", t.als_tol},
        {"n_shards", t.n_shards}}},
      {"criterion",
       {{"kind", to_string(c.kind)},
        {"tau_l", c.tau_l},
        {"tau_s", c.tau_s},
        {"tau_sigma", c.tau_sigma},
        {"tau_mu", c.tau_mu},
        {"p_frac", c.p_frac},
        {"check_every", c.check_every},
        {"min_steps", c.min_steps}}},
      {"output_dir", cfg.output_dir},
      {"memory_budget_mb", static_cast<double>(t.memory_budget_bytes) / (1 << 20)}};
  return j;
}

ResolutionSchedule schedule_from_config(const RunConfig& cfg, int n_tasks) {
  return dyadic_schedule(cfg.coarse_b, cfg.coarse_c, cfg.stages, cfg.factorize_stage, n_tasks,
                         cfg.train.memory_budget_bytes);
}

RawDataset dataset_from_config(const RunConfig& cfg) {
  if (cfg.synthetic) return generate(*cfg.synthetic).data;
  return load_jsonl(cfg.dataset_path);
}

}  // namespace mrtl
