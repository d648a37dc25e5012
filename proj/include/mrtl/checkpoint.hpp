#pragma once

#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "mrtl/model.hpp"

namespace mrtl {

// Checkpoint container: magic + version, a JSON manifest (model type, stage,
// grids, dims, ranks, block table), then each parameter block as raw
// little-endian float64, in manifest order. Round-trips are bit-exact.
inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'T', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const FullTensorModel& m, int stage);
void save_checkpoint(const std::string& path, const FactoredModel& m, int stage);

struct Checkpoint {
  std::uint32_t version = 0;
  int stage = 0;
  std::string model_type;  // "full" | "factored"
  std::optional<FullTensorModel> full;
  std::optional<FactoredModel> factored;
};

Checkpoint load_checkpoint(const std::string& path);

nlohmann::json grid_to_json(const Grid& g);
Grid grid_from_json(const nlohmann::json& j);

// Factor table, one row per entry: mode in {A,B,C,Us,Vs,Ws}.
void export_factor_csv(const FactoredModel& m, const std::string& path);

// Spatial columns laid out on their grids (mode,component,row,col,value),
// ready for heatmap plotting.
void export_spatial_layout_csv(const FactoredModel& m, const std::string& path);

// Mean absolute difference over 4-neighbor cell pairs, per cell. 0 for a
// constant column; higher = rougher.
double total_variation_per_cell(std::span<const double> column, const Grid& g);

// Smoothness table (mode,component,total_variation_per_cell) for all spatial
// factor columns.
void export_smoothness_csv(const FactoredModel& m, const std::string& path);

}  // namespace mrtl
