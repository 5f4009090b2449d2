#include "mvlift/matching.hpp"

#include <algorithm>
#include <limits>

#include "mvlift/errors.hpp"

namespace mvlift {
namespace {

// Shortest-augmenting-path assignment with dual potentials. Requires
// rows <= cols; returns the matched column of every row.
std::vector<int> solve_wide(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual root of each augmenting search.
  std::vector<double> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
  std::vector<int> col_to_row(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_to_row[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != 0);
    do {
      const int j1 = way[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (col_to_row[j] != 0) row_to_col[col_to_row[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian_assign(const Matrix& cost) {
  if (!cost.allFinite()) {
    throw NumericError("hungarian_assign: cost matrix has non-finite entries");
  }
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  Assignment out;
  if (n == 0 || m == 0) {
    for (int i = 0; i < n; ++i) out.unmatched_rows.push_back(i);
    return out;
  }
  std::vector<int> row_to_col(n, -1);
  if (n <= m) {
    row_to_col = solve_wide(cost);
  } else {
    // Transposing keeps the guarantee that every unit on the smaller side
    // is matched, which zero-padding would not.
    const Matrix flipped = cost.transpose();
    const std::vector<int> col_to_row = solve_wide(flipped);
    for (int j = 0; j < m; ++j) {
      if (col_to_row[j] >= 0) row_to_col[col_to_row[j]] = j;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (row_to_col[i] >= 0) {
      out.pairs.emplace_back(i, row_to_col[i]);
      out.total_cost += cost(i, row_to_col[i]);
    } else {
      out.unmatched_rows.push_back(i);
    }
  }
  return out;
}

}  // namespace mvlift
