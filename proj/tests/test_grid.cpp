#include <doctest.h>

#include <algorithm>
#include <set>

#include "mrtl/grid.hpp"
#include "mrtl/rng.hpp"

using namespace mrtl;

namespace {

// Independent point->cell oracle: scan every cell rectangle.
int brute_force_cell(const Grid& g, Point p) {
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const double x0 = g.origin.x + c * g.cell_size;
      const double y0 = g.origin.y + r * g.cell_size;
      if (p.x >= x0 && p.x < x0 + g.cell_size && p.y >= y0 && p.y < y0 + g.cell_size)
        return g.index(r, c);
    }
  return -1;
}

void check_partition(const RefinementMap& rm) {
  std::vector<int> seen(rm.fine.cell_count(), 0);
  for (const auto& kids : rm.children)
    for (int k : kids) {
      REQUIRE(k >= 0);
      REQUIRE(k < rm.fine.cell_count());
      ++seen[k];
    }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
}

}  // namespace

TEST_CASE("build_grid dimensions and indexing") {
  const Grid court = build_grid(40, 50, 1.0);
  CHECK(court.cell_count() == 2000);
  const Grid single = build_grid(1, 1, 4.0);
  CHECK(single.cell_count() == 1);
  const Grid around = build_grid(12, 12, 1.0, {-6.0, -6.0});
  CHECK(around.cell_count() == 144);

  for (int r = 0; r < court.rows; r += 7)
    for (int c = 0; c < court.cols; c += 11) CHECK(court.index(r, c) == r * court.cols + c);

  CHECK_THROWS_AS(build_grid(0, 5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(5, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(5, 5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(5, 5, -1.0), std::invalid_argument);
}

TEST_CASE("encode_position picks the half-open cell") {
  const Grid g = build_grid(2, 2, 1.0);
  CHECK(encode_position(g, {0.5, 0.5}).indices[0] == 0);
  CHECK(encode_position(g, {1.5, 1.5}).indices[0] == 3);
  // boundary points belong to the higher cell
  CHECK(encode_position(g, {1.0, 0.0}).indices[0] == 1);
  CHECK(encode_position(g, {0.0, 1.0}).indices[0] == 2);

  const FeatureVector f = encode_position(g, {0.25, 0.75});
  CHECK(f.indices.size() == 1);
  CHECK(f.values[0] == 1.0);
  CHECK(f.dim == 4);

  CHECK_THROWS_AS(encode_position(g, {2.0, 0.5}), std::out_of_range);
  CHECK_THROWS_AS(encode_position(g, {-0.1, 0.5}), std::out_of_range);
}

TEST_CASE("encode_position matches the brute-force rectangle scan") {
  const Grid court = build_grid(40, 50, 1.0);
  CHECK(encode_position(court, {25.3, 10.7}).indices[0] == 10 * 50 + 25);
  CHECK(brute_force_cell(court, {25.3, 10.7}) == 525);

  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Point p{rng.uniform(0.0, court.width()), rng.uniform(0.0, court.height())};
    CHECK(encode_position(court, p).indices[0] == brute_force_cell(court, p));
  }
}

TEST_CASE("refine_dyadic splits each cell in four") {
  const auto [fine, rm] = refine_dyadic(build_grid(5, 5, 4.0));
  CHECK(fine.rows == 10);
  CHECK(fine.cols == 10);
  CHECK(fine.cell_size == 2.0);
  for (const auto& kids : rm.children) CHECK(kids.size() == 4);
  check_partition(rm);
  for (int c = 0; c < rm.coarse.cell_count(); ++c)
    for (int k : rm.children[c]) CHECK(cell_of_fine(rm, k) == c);

  const auto [fine1, rm1] = refine_dyadic(build_grid(1, 1, 2.0));
  CHECK(fine1.rows == 2);
  CHECK(fine1.cell_size == 1.0);
  CHECK(rm1.children[0] == std::vector<int>{0, 1, 2, 3});
  CHECK(cell_of_fine(rm1, 3) == 0);
}

TEST_CASE("cell_of_fine agrees with a geometric inversion") {
  const auto [g4, rm] = refine_dyadic(build_grid(2, 2, 2.0));
  // independent inversion: a fine cell's parent is the coarse cell containing
  // its center
  for (int i = 0; i < g4.cell_count(); ++i)
    CHECK(cell_of_fine(rm, i) == rm.coarse.cell_of(g4.cell_center(i)));
  CHECK(cell_of_fine(rm, 5) == 0);
  CHECK(cell_of_fine(rm, 15) == 3);
  CHECK_THROWS_AS(cell_of_fine(rm, 16), std::out_of_range);
  CHECK_THROWS_AS(cell_of_fine(rm, -1), std::out_of_range);
}

TEST_CASE("double refinement composes to 16 grandchildren") {
  const Grid g0 = build_grid(5, 5, 4.0);
  const auto [g1, rm01] = refine_dyadic(g0);
  const auto [g2, rm12] = refine_dyadic(g1);
  CHECK(g2.rows == 20);
  CHECK(g2.cell_size == 1.0);

  const RefinementMap composed = compose(rm01, rm12);
  check_partition(composed);
  for (const auto& kids : composed.children) CHECK(kids.size() == 16);
  // brute force: grandchildren are exactly the fine cells whose centers fall
  // inside the coarse rectangle
  for (int c = 0; c < g0.cell_count(); ++c) {
    std::set<int> expect;
    for (int i = 0; i < g2.cell_count(); ++i)
      if (g0.cell_of(g2.cell_center(i)) == c) expect.insert(i);
    CHECK(std::set<int>(composed.children[c].begin(), composed.children[c].end()) == expect);
  }
}

TEST_CASE("generalized center-assignment refinement keeps the partition") {
  // non-dyadic schedule: 3x-per-side refinement
  const Grid coarse = build_grid(5, 5, 3.0);
  const Grid fine = build_grid(15, 15, 1.0);
  const RefinementMap rm = build_refinement(coarse, fine);
  check_partition(rm);
  for (const auto& kids : rm.children) CHECK(kids.size() == 9);

  // smaller fine extent still partitions, with uneven children counts
  const Grid odd = build_grid(7, 7, 1.0);
  const RefinementMap rm2 = build_refinement(build_grid(2, 2, 3.5), odd);
  check_partition(rm2);
}

TEST_CASE("partition property holds for dyadic maps up to 64x64") {
  for (int n : {1, 3, 8, 32}) {
    const auto [fine, rm] = refine_dyadic(build_grid(n, n, 1.0));
    CHECK(fine.cell_count() == 4 * n * n);
    check_partition(rm);
  }
}

TEST_CASE("encoding is refinement-consistent across resolutions") {
  Grid coarse = build_grid(4, 6, 2.0, {-3.0, 1.0});
  const auto [fine, rm] = refine_dyadic(coarse);
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    const Point p{coarse.origin.x + rng.uniform() * coarse.width(),
                  coarse.origin.y + rng.uniform() * coarse.height()};
    const int fine_cell = encode_position(fine, p).indices[0];
    const int coarse_cell = encode_position(coarse, p).indices[0];
    CHECK(cell_of_fine(rm, fine_cell) == coarse_cell);
  }
}
