#include "mrtl/grid.hpp"

#include <cmath>
#include <string>

namespace mrtl {

bool Grid::contains(Point p) const {
  return p.x >= origin.x && p.x < origin.x + width() && p.y >= origin.y &&
         p.y < origin.y + height();
}

int Grid::cell_of(Point p) const {
  const int c = static_cast<int>(std::floor((p.x - origin.x) / cell_size));
  const int r = static_cast<int>(std::floor((p.y - origin.y) / cell_size));
  if (r < 0 || r >= rows || c < 0 || c >= cols)
    throw std::out_of_range("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                            ") outside grid extent");
  return index(r, c);
}

Point Grid::cell_center(int idx) const {
  const auto [r, c] = row_col(idx);
  return {origin.x + (c + 0.5) * cell_size, origin.y + (r + 0.5) * cell_size};
}

bool Grid::operator==(const Grid& other) const {
  return rows == other.rows && cols == other.cols && cell_size == other.cell_size &&
         origin.x == other.origin.x && origin.y == other.origin.y;
}

Grid build_grid(int rows, int cols, double cell_size, Point origin) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("grid dimensions must be positive, got " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell_size must be > 0");
  return Grid{rows, cols, cell_size, origin};
}

FeatureVector encode_position(const Grid& g, Point p) {
  FeatureVector f;
  f.dim = g.cell_count();
  f.indices.push_back(g.cell_of(p));
  f.values.push_back(1.0);
  return f;
}

std::pair<Grid, RefinementMap> refine_dyadic(const Grid& g) {
  // halving the cell size is exact in binary floating point, so cell lookups
  // at the two resolutions stay consistent for every point
  Grid fine{2 * g.rows, 2 * g.cols, g.cell_size / 2.0, g.origin};
  RefinementMap rm;
  rm.coarse = g;
  rm.fine = fine;
  rm.children.resize(g.cell_count());
  rm.parent.assign(fine.cell_count(), -1);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const int parent = g.index(r, c);
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) {
          const int child = fine.index(2 * r + dr, 2 * c + dc);
          rm.children[parent].push_back(child);
          rm.parent[child] = parent;
        }
      }
    }
  }
  return {fine, rm};
}

RefinementMap build_refinement(const Grid& coarse, const Grid& fine) {
  RefinementMap rm;
  rm.coarse = coarse;
  rm.fine = fine;
  rm.children.resize(coarse.cell_count());
  rm.parent.assign(fine.cell_count(), -1);
  for (int i = 0; i < fine.cell_count(); ++i) {
    const int p = coarse.cell_of(fine.cell_center(i));
    rm.parent[i] = p;
    rm.children[p].push_back(i);
  }
  return rm;
}

int cell_of_fine(const RefinementMap& rm, int fine_idx) {
  if (fine_idx < 0 || fine_idx >= static_cast<int>(rm.parent.size()))
    throw std::out_of_range("fine cell index " + std::to_string(fine_idx) + " out of range");
  return rm.parent[fine_idx];
}

RefinementMap compose(const RefinementMap& first, const RefinementMap& second) {
  if (!(first.fine == second.coarse))
    throw std::invalid_argument("refinement maps do not chain: mid grids differ");
  RefinementMap rm;
  rm.coarse = first.coarse;
  rm.fine = second.fine;
  rm.children.resize(first.coarse.cell_count());
  rm.parent.assign(second.fine.cell_count(), -1);
  for (int i = 0; i < second.fine.cell_count(); ++i) {
    const int p = first.parent[second.parent[i]];
    rm.parent[i] = p;
    rm.children[p].push_back(i);
  }
  return rm;
}

}  // namespace mrtl
