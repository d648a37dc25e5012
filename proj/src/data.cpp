#include "mrtl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mrtl/rng.hpp"

namespace mrtl {

namespace {

using nlohmann::json;

// Low-frequency random field: base_n x base_n white noise bilinearly
// upsampled to the grid's cell centers, then centered and scaled to unit RMS.
Eigen::VectorXd smooth_field(const Grid& g, Rng& rng, int base_n = 4) {
  Eigen::MatrixXd base(base_n, base_n);
  for (int i = 0; i < base_n; ++i)
    for (int j = 0; j < base_n; ++j) base(i, j) = rng.normal();

  Eigen::VectorXd field(g.cell_count());
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const double u = (c + 0.5) / g.cols * base_n - 0.5;
      const double v = (r + 0.5) / g.rows * base_n - 0.5;
      const int j0 = std::clamp(static_cast<int>(std::floor(u)), 0, base_n - 2);
      const int i0 = std::clamp(static_cast<int>(std::floor(v)), 0, base_n - 2);
      const double fu = std::clamp(u - j0, 0.0, 1.0);
      const double fv = std::clamp(v - i0, 0.0, 1.0);
      field[g.index(r, c)] = base(i0, j0) * (1 - fu) * (1 - fv) +
                             base(i0, j0 + 1) * fu * (1 - fv) +
                             base(i0 + 1, j0) * (1 - fu) * fv +
                             base(i0 + 1, j0 + 1) * fu * fv;
    }
  }
  field.array() -= field.mean();
  const double rms = std::sqrt(field.squaredNorm() / field.size());
  if (rms > 0.0) field /= rms;
  return field;
}

Eigen::VectorXd sparse_column(const Grid& g, Rng& rng, int cells, double magnitude) {
  Eigen::VectorXd col = Eigen::VectorXd::Zero(g.cell_count());
  std::set<std::size_t> chosen;
  while (static_cast<int>(chosen.size()) < std::min(cells, g.cell_count()))
    chosen.insert(rng.index(g.cell_count()));
  for (std::size_t i : chosen) col[i] = rng.uniform() < 0.5 ? magnitude : -magnitude;
  return col;
}

json extent_to_json(const Extent& e) {
  return {{"x", e.origin.x}, {"y", e.origin.y}, {"w", e.width}, {"h", e.height}};
}

Extent extent_from_json(const json& j) {
  return Extent{{j.at("x").get<double>(), j.at("y").get<double>()}, j.at("w").get<double>(),
                j.at("h").get<double>()};
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw std::runtime_error("parse error at line " + std::to_string(line) + ": " + what);
}

}  // namespace

Extent extent_of(const Grid& g) { return Extent{g.origin, g.width(), g.height()}; }

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.grid_b = build_grid(32, 32, 1.0);
  spec.grid_c = build_grid(8, 8, 1.0);
  return spec;
}

GeneratedData generate(const SyntheticSpec& spec) {
  if (spec.n_tasks < 1 || spec.n_samples < 0 || spec.n_context < 1)
    throw std::invalid_argument("generate: invalid spec counts");
  if (!(spec.label_noise >= 0.0 && spec.label_noise < 0.5))
    throw std::invalid_argument("generate: label_noise must be in [0, 0.5)");

  Rng rng(spec.seed);

  FactoredModel truth;
  truth.grid_b = spec.grid_b;
  truth.grid_c = spec.grid_c;
  truth.dense = CPFactors::zeros(spec.n_tasks, spec.grid_b.cell_count(),
                                 spec.grid_c.cell_count(), spec.rank_dense);
  truth.sparse = CPFactors::zeros(spec.n_tasks, spec.grid_b.cell_count(),
                                  spec.grid_c.cell_count(), spec.rank_sparse);
  for (int k = 0; k < spec.rank_dense; ++k) {
    for (int a = 0; a < spec.n_tasks; ++a) truth.dense.A(a, k) = spec.task_scale * rng.normal();
    truth.dense.B.col(k) = smooth_field(spec.grid_b, rng);
    truth.dense.C.col(k) = smooth_field(spec.grid_c, rng);
  }
  for (int k = 0; k < spec.rank_sparse; ++k) {
    for (int a = 0; a < spec.n_tasks; ++a) truth.sparse.A(a, k) = spec.task_scale * rng.normal();
    truth.sparse.B.col(k) =
        sparse_column(spec.grid_b, rng, spec.sparse_cells, spec.sparse_magnitude);
    truth.sparse.C.col(k) =
        sparse_column(spec.grid_c, rng, spec.sparse_cells, spec.sparse_magnitude);
  }
  truth.bias = Eigen::VectorXd::Constant(spec.n_tasks, spec.bias);

  GeneratedData out;
  out.data.n_tasks = spec.n_tasks;
  out.data.extent_primary = extent_of(spec.grid_b);
  out.data.extent_context = extent_of(spec.grid_c);
  out.data.records.reserve(spec.n_samples);

  const Extent& eb = out.data.extent_primary;
  const Extent& ec = out.data.extent_context;
  for (int i = 0; i < spec.n_samples; ++i) {
    RawRecord rec;
    rec.primary = {eb.origin.x + rng.uniform() * eb.width, eb.origin.y + rng.uniform() * eb.height};
    rec.context.resize(spec.n_context);
    for (auto& p : rec.context)
      p = {ec.origin.x + rng.uniform() * ec.width, ec.origin.y + rng.uniform() * ec.height};

    Example enc;
    enc.phi = encode_position(spec.grid_b, rec.primary);
    enc.psi.dim = spec.grid_c.cell_count();
    std::set<int> cells;
    for (const Point& p : rec.context) cells.insert(spec.grid_c.cell_of(p));
    for (int c : cells) {
      enc.psi.indices.push_back(c);
      enc.psi.values.push_back(1.0);
    }
    enc.labels.assign(spec.n_tasks, 1);
    enc.task_mask.assign(spec.n_tasks, 1);
    const Eigen::VectorXd z = forward_factored(truth, enc);

    rec.labels.resize(spec.n_tasks);
    rec.task_mask.assign(spec.n_tasks, 1);
    for (int a = 0; a < spec.n_tasks; ++a) {
      std::int8_t y = rng.uniform() < sigmoid(z[a]) ? 1 : -1;
      if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) y = -y;
      rec.labels[a] = y;
    }
    out.data.records.push_back(std::move(rec));
  }
  out.truth = std::move(truth);
  return out;
}

void save_jsonl(const RawDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  json meta{{"meta",
             {{"n_tasks", ds.n_tasks},
              {"extent", extent_to_json(ds.extent_primary)},
              {"context_extent", extent_to_json(ds.extent_context)}}}};
  out << meta.dump() << '\n';
  for (const RawRecord& r : ds.records) {
    json j;
    j["p"] = {r.primary.x, r.primary.y};
    auto& ctx = j["ctx"] = json::array();
    for (const Point& p : r.context) ctx.push_back({p.x, p.y});
    auto& y = j["y"] = json::array();
    for (std::int8_t v : r.labels) y.push_back(static_cast<int>(v));
    auto& mask = j["mask"] = json::array();
    for (std::uint8_t v : r.task_mask) mask.push_back(v != 0);
    out << j.dump() << '\n';
  }
}

RawDataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);

  RawDataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(lineno, e.what());
    }
    if (!have_meta) {
      if (!j.contains("meta")) parse_fail(lineno, "first line must be a {\"meta\": ...} header");
      const json& m = j["meta"];
      try {
        ds.n_tasks = m.at("n_tasks").get<int>();
        ds.extent_primary = extent_from_json(m.at("extent"));
        ds.extent_context = extent_from_json(m.at("context_extent"));
      } catch (const json::exception& e) {
        parse_fail(lineno, e.what());
      }
      if (ds.n_tasks < 1) parse_fail(lineno, "n_tasks must be >= 1");
      have_meta = true;
      continue;
    }

    RawRecord rec;
    try {
      const auto& p = j.at("p");
      rec.primary = {p.at(0).get<double>(), p.at(1).get<double>()};
      for (const auto& c : j.at("ctx"))
        rec.context.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      for (const auto& y : j.at("y")) {
        const int v = y.get<int>();
        if (v != 1 && v != -1) parse_fail(lineno, "labels must be +1 or -1, got " + std::to_string(v));
        rec.labels.push_back(static_cast<std::int8_t>(v));
      }
      if (j.contains("mask"))
        for (const auto& m : j.at("mask")) rec.task_mask.push_back(m.get<bool>() ? 1 : 0);
      else
        rec.task_mask.assign(rec.labels.size(), 1);
    } catch (const json::exception& e) {
      parse_fail(lineno, e.what());
    }
    if (static_cast<int>(rec.labels.size()) != ds.n_tasks)
      parse_fail(lineno, "expected " + std::to_string(ds.n_tasks) + " labels");
    if (rec.task_mask.size() != rec.labels.size()) parse_fail(lineno, "mask length mismatch");
    if (!ds.extent_primary.contains(rec.primary)) parse_fail(lineno, "primary position outside extent");
    for (const Point& p : rec.context)
      if (!ds.extent_context.contains(p)) parse_fail(lineno, "context position outside extent");
    ds.records.push_back(std::move(rec));
  }
  if (!have_meta && lineno > 0) throw std::runtime_error("parse error at line 1: missing meta header");
  return ds;
}

std::vector<Example> encode_at(const RawDataset& ds, const Grid& grid_b, const Grid& grid_c) {
  std::vector<Example> out;
  out.reserve(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const RawRecord& r = ds.records[i];
    Example e;
    try {
      e.phi = encode_position(grid_b, r.primary);
      e.psi.dim = grid_c.cell_count();
      std::set<int> cells;
      for (const Point& p : r.context) cells.insert(grid_c.cell_of(p));
      for (int c : cells) {
        e.psi.indices.push_back(c);
        e.psi.values.push_back(1.0);
      }
    } catch (const std::out_of_range& ex) {
      throw std::out_of_range("record " + std::to_string(i) + ": " + ex.what());
    }
    e.labels = r.labels;
    e.task_mask = r.task_mask;
    out.push_back(std::move(e));
  }
  return out;
}

SplitIndices split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t nval = static_cast<std::size_t>(std::lround(val_fraction * n));
  SplitIndices s;
  s.val.assign(idx.begin(), idx.begin() + nval);
  s.train.assign(idx.begin() + nval, idx.end());
  return s;
}

RawDataset subset(const RawDataset& ds, const std::vector<std::size_t>& idx) {
  RawDataset out;
  out.n_tasks = ds.n_tasks;
  out.extent_primary = ds.extent_primary;
  out.extent_context = ds.extent_context;
  out.records.reserve(idx.size());
  for (std::size_t i : idx) out.records.push_back(ds.records.at(i));
  return out;
}

}  // namespace mrtl
