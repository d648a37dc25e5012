#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/model.hpp"

namespace mrtl {

struct Extent {
  Point origin;
  double width = 0.0;
  double height = 0.0;

  bool contains(Point p) const {
    return p.x >= origin.x && p.x < origin.x + width && p.y >= origin.y &&
           p.y < origin.y + height;
  }
};

Extent extent_of(const Grid& g);

struct RawRecord {
  Point primary;
  std::vector<Point> context;
  std::vector<std::int8_t> labels;
  std::vector<std::uint8_t> task_mask;
};

struct RawDataset {
  int n_tasks = 0;
  Extent extent_primary;
  Extent extent_context;
  std::vector<RawRecord> records;
};

// Generator spec for the synthetic benchmark. Ground-truth factors follow the
// dense/sparse split: dense spatial columns are low-frequency random fields
// (4x4 white noise bilinearly upsampled, unit RMS), sparse columns put
// +/-sparse_magnitude on a few random cells.
struct SyntheticSpec {
  int n_tasks = 8;
  Grid grid_b;  // true resolution for the primary mode
  Grid grid_c;  // true resolution for the context mode
  int rank_dense = 2;
  int rank_sparse = 2;
  int n_samples = 50000;
  int n_context = 3;         // context positions per record
  double label_noise = 0.1;  // independent flip probability, in [0, 0.5)
  double task_scale = 1.0;   // scale of task-mode factor entries
  int sparse_cells = 3;
  double sparse_magnitude = 2.0;
  double bias = 0.0;
  std::uint64_t seed = 1;
};

// Default desk-scale benchmark: 8 tasks, 32x32 primary / 8x8 context grids,
// rank 2 + 2, 50k samples, 10% label noise.
SyntheticSpec default_synthetic_spec();

struct GeneratedData {
  RawDataset data;
  FactoredModel truth;
};

GeneratedData generate(const SyntheticSpec& spec);

void save_jsonl(const RawDataset& ds, const std::string& path);
RawDataset load_jsonl(const std::string& path);

// Encode every record at the given grids: phi one-hot from the primary
// position, psi multi-hot occupancy of the context positions (duplicates in
// one cell collapse to a single 1.0).
std::vector<Example> encode_at(const RawDataset& ds, const Grid& grid_b, const Grid& grid_c);

// Deterministic index split: shuffles [0, n) with `seed` and takes the first
// round(val_fraction * n) indices as validation.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
SplitIndices split_dataset(std::size_t n, double val_fraction, std::uint64_t seed);

RawDataset subset(const RawDataset& ds, const std::vector<std::size_t>& idx);

}  // namespace mrtl
