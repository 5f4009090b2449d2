#ifndef MVLIFT_MATCHING_HPP
#define MVLIFT_MATCHING_HPP

#include <utility>
#include <vector>

#include "mvlift/types.hpp"

namespace mvlift {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  double total_cost = 0;                   // sum of costs over pairs
};

/// Minimum-cost bipartite assignment of an n x m cost matrix. Matches
/// min(n, m) pairs; leftover rows are reported unmatched. Costs must be
/// finite.
Assignment hungarian_assign(const Matrix& cost);

}  // namespace mvlift

#endif
