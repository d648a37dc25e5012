#include "mrtl/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mrtl {

namespace {

using nlohmann::json;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

json manifest_common(const char* type, int stage, const Grid& gb, const Grid& gc) {
  return json{{"version", kCheckpointVersion},
              {"model", type},
              {"stage", stage},
              {"grid_b", grid_to_json(gb)},
              {"grid_c", grid_to_json(gc)}};
}

template <typename Model>
void write_file(const std::string& path, json manifest, Model& m) {
  auto blocks = param_blocks(m);
  json jb = json::array();
  for (const auto& b : blocks) jb.push_back({{"name", b.name}, {"count", b.size}});
  manifest["blocks"] = jb;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(out, kCheckpointVersion);
  const std::string mstr = manifest.dump();
  write_u64(out, mstr.size());
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& b : blocks)
    out.write(reinterpret_cast<const char*>(b.data),
              static_cast<std::streamsize>(b.size * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void read_blocks(std::ifstream& in, const json& manifest, std::vector<ParamBlock>& blocks,
                 const std::string& path) {
  const auto& jb = manifest.at("blocks");
  if (jb.size() != blocks.size())
    throw std::runtime_error("corrupt checkpoint (block table mismatch): " + path);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (jb[i].at("name").get<std::string>() != blocks[i].name ||
        jb[i].at("count").get<std::size_t>() != blocks[i].size)
      throw std::runtime_error("corrupt checkpoint (block " + blocks[i].name + "): " + path);
    in.read(reinterpret_cast<char*>(blocks[i].data),
            static_cast<std::streamsize>(blocks[i].size * sizeof(double)));
  }
  if (!in) throw std::runtime_error("corrupt checkpoint (truncated data): " + path);
}

void csv_write_value(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

struct CsvFile {
  std::FILE* f = nullptr;
  explicit CsvFile(const std::string& path) : f(std::fopen(path.c_str(), "w")) {
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
  }
  ~CsvFile() {
    if (f) std::fclose(f);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;
};

void dump_factor(std::FILE* f, const char* mode, const Eigen::MatrixXd& m) {
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::fprintf(f, "%s,%ld,%ld,", mode, static_cast<long>(k), static_cast<long>(i));
      csv_write_value(f, m(i, k));
      std::fputc('\n', f);
    }
}

}  // namespace

json grid_to_json(const Grid& g) {
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"cell_size", g.cell_size},
          {"origin", {g.origin.x, g.origin.y}}};
}

Grid grid_from_json(const json& j) {
  return build_grid(j.at("rows").get<int>(), j.at("cols").get<int>(),
                    j.at("cell_size").get<double>(),
                    {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()});
}

void save_checkpoint(const std::string& path, const FullTensorModel& m, int stage) {
  json manifest = manifest_common("full", stage, m.grid_b, m.grid_c);
  manifest["n_tasks"] = m.n_tasks();
  write_file(path, manifest, const_cast<FullTensorModel&>(m));
}

void save_checkpoint(const std::string& path, const FactoredModel& m, int stage) {
  json manifest = manifest_common("factored", stage, m.grid_b, m.grid_c);
  manifest["n_tasks"] = m.n_tasks();
  manifest["rank_dense"] = m.dense.rank();
  manifest["rank_sparse"] = m.sparse.rank();
  write_file(path, manifest, const_cast<FactoredModel&>(m));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("corrupt checkpoint (truncated manifest): " + path);

  json manifest;
  try {
    manifest = json::parse(mstr);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint ck;
  ck.version = version;
  try {
    ck.stage = manifest.at("stage").get<int>();
    ck.model_type = manifest.at("model").get<std::string>();
    const Grid gb = grid_from_json(manifest.at("grid_b"));
    const Grid gc = grid_from_json(manifest.at("grid_c"));
    const int n_tasks = manifest.at("n_tasks").get<int>();

    if (ck.model_type == "full") {
      FullTensorModel m = FullTensorModel::zeros(n_tasks, gb, gc);
      auto blocks = param_blocks(m);
      read_blocks(in, manifest, blocks, path);
      ck.full = std::move(m);
    } else if (ck.model_type == "factored") {
      FactoredModel m;
      m.grid_b = gb;
      m.grid_c = gc;
      m.dense = CPFactors::zeros(n_tasks, gb.cell_count(), gc.cell_count(),
                                 manifest.at("rank_dense").get<int>());
      m.sparse = CPFactors::zeros(n_tasks, gb.cell_count(), gc.cell_count(),
                                  manifest.at("rank_sparse").get<int>());
      m.bias = Eigen::VectorXd::Zero(n_tasks);
      auto blocks = param_blocks(m);
      read_blocks(in, manifest, blocks, path);
      ck.factored = std::move(m);
    } else {
      throw std::runtime_error("unknown model type '" + ck.model_type + "'");
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint manifest in " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  return ck;
}

void export_factor_csv(const FactoredModel& m, const std::string& path) {
  CsvFile csv(path);
  std::fputs("mode,component,index,value\n", csv.f);
  dump_factor(csv.f, "A", m.dense.A);
  dump_factor(csv.f, "B", m.dense.B);
  dump_factor(csv.f, "C", m.dense.C);
  dump_factor(csv.f, "Us", m.sparse.A);
  dump_factor(csv.f, "Vs", m.sparse.B);
  dump_factor(csv.f, "Ws", m.sparse.C);
}

void export_spatial_layout_csv(const FactoredModel& m, const std::string& path) {
  CsvFile csv(path);
  std::fputs("mode,component,row,col,value\n", csv.f);
  auto dump = [&](const char* mode, const Eigen::MatrixXd& mat, const Grid& g) {
    for (Eigen::Index k = 0; k < mat.cols(); ++k)
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
          std::fprintf(csv.f, "%s,%ld,%d,%d,", mode, static_cast<long>(k), r, c);
          csv_write_value(csv.f, mat(g.index(r, c), k));
          std::fputc('\n', csv.f);
        }
  };
  dump("B", m.dense.B, m.grid_b);
  dump("C", m.dense.C, m.grid_c);
  dump("Vs", m.sparse.B, m.grid_b);
  dump("Ws", m.sparse.C, m.grid_c);
}

double total_variation_per_cell(std::span<const double> column, const Grid& g) {
  if (static_cast<int>(column.size()) != g.cell_count())
    throw std::invalid_argument("total_variation_per_cell: column length does not match grid");
  double tv = 0.0;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      if (c + 1 < g.cols) tv += std::abs(column[g.index(r, c)] - column[g.index(r, c + 1)]);
      if (r + 1 < g.rows) tv += std::abs(column[g.index(r, c)] - column[g.index(r + 1, c)]);
    }
  return tv / g.cell_count();
}

void export_smoothness_csv(const FactoredModel& m, const std::string& path) {
  CsvFile csv(path);
  std::fputs("mode,component,total_variation_per_cell\n", csv.f);
  auto dump = [&](const char* mode, const Eigen::MatrixXd& mat, const Grid& g) {
    for (Eigen::Index k = 0; k < mat.cols(); ++k) {
      std::span<const double> col(mat.col(k).data(), static_cast<std::size_t>(mat.rows()));
      std::fprintf(csv.f, "%s,%ld,", mode, static_cast<long>(k));
      csv_write_value(csv.f, total_variation_per_cell(col, g));
      std::fputc('\n', csv.f);
    }
  };
  dump("B", m.dense.B, m.grid_b);
  dump("C", m.dense.C, m.grid_c);
  dump("Vs", m.sparse.B, m.grid_b);
  dump("Ws", m.sparse.C, m.grid_c);
}

}  // namespace mrtl
