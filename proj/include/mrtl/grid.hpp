#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mrtl {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Rectangular spatial discretization. Cells are square with side cell_size,
// indexed row-major: index(r, c) = r * cols + c. A point belongs to the cell
// whose half-open interval [lo, lo + cell_size) contains it, so boundary
// points resolve to the higher cell.
struct Grid {
  int rows = 0;
  int cols = 0;
  double cell_size = 0.0;
  Point origin;

  int cell_count() const { return rows * cols; }
  double width() const { return cols * cell_size; }
  double height() const { return rows * cell_size; }

  int index(int r, int c) const { return r * cols + c; }
  std::pair<int, int> row_col(int idx) const { return {idx / cols, idx % cols}; }

  bool contains(Point p) const;
  // Row-major index of the cell containing p; throws std::out_of_range if
  // p lies outside the grid extent.
  int cell_of(Point p) const;
  // Center of cell idx in domain coordinates.
  Point cell_center(int idx) const;

  bool operator==(const Grid& other) const;
};

Grid build_grid(int rows, int cols, double cell_size, Point origin = {0.0, 0.0});

// Sparse feature vector over grid cells. One-hot for a single position,
// multi-hot (occupancy) for several.
struct FeatureVector {
  std::vector<int> indices;
  std::vector<double> values;
  int dim = 0;
};

FeatureVector encode_position(const Grid& g, Point p);

// Parent->children mapping between a coarse grid and a finer one covering
// the same region. Children lists partition the fine cells.
struct RefinementMap {
  Grid coarse;
  Grid fine;
  std::vector<std::vector<int>> children;  // coarse index -> fine indices
  std::vector<int> parent;                 // fine index -> coarse index
};

// Halve the cell size; every coarse cell gets exactly 4 children.
std::pair<Grid, RefinementMap> refine_dyadic(const Grid& g);

// Generalized refinement: each fine cell is assigned to the coarse cell
// containing its center. Works for non-nested schedules; the partition
// invariant still holds but children counts may vary.
RefinementMap build_refinement(const Grid& coarse, const Grid& fine);

int cell_of_fine(const RefinementMap& rm, int fine_idx);

// Chain two maps coarse->mid and mid->fine into coarse->fine.
RefinementMap compose(const RefinementMap& first, const RefinementMap& second);

}  // namespace mrtl
