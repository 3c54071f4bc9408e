// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Rectangular maximum-weight assignment (Hungarian method with potentials).
//
// Among all optimal assignments the one returned prefers lexicographically
// smallest (row, column) pairs: pairs are fixed greedily in row-major order
// whenever fixing them still reaches the optimum. Complementary slackness
// against the first solve's dual potentials rules out almost every pair
// without another solve.

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "filmdiar/error.hpp"

namespace filmdiar {

using WeightMatrix = std::vector<std::vector<double>>;

struct Assignment {
  std::vector<int> row_to_col;  // -1 when the row is unassigned
  double total = 0.0;           // summed weight of assigned pairs, row order
};

namespace internal {

struct HungarianSolution {
  std::vector<int> row_to_col;
  std::vector<double> u;  // row potentials, 1-based
  std::vector<double> v;  // column potentials, 1-based
};

/// Minimum-cost perfect assignment on a square matrix.
inline HungarianSolution solve_min_cost(const WeightMatrix &cost) {
  const std::size_t n = cost.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  HungarianSolution s;
  s.row_to_col.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) s.row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  s.u = std::move(u);
  s.v = std::move(v);
  return s;
}

/// Optimal assignment restricted to the given rows/columns; zero-padded.
inline HungarianSolution solve_max_weight(const WeightMatrix &w,
                                          const std::vector<std::size_t> &rows,
                                          const std::vector<std::size_t> &cols,
                                          double *total) {
  const std::size_t n = std::max(rows.size(), cols.size());
  WeightMatrix cost(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      cost[a][b] = -w[rows[a]][cols[b]];
    }
  }
  HungarianSolution s = solve_min_cost(cost);
  *total = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const int b = s.row_to_col[a];
    if (b >= 0 && static_cast<std::size_t>(b) < cols.size()) {
      *total += w[rows[a]][cols[b]];
    }
  }
  return s;
}

}  // namespace internal

/// Maximum-weight one-to-one assignment of rows to columns. Only pairs with
/// positive weight are reported; everything else stays unassigned.
inline Assignment max_weight_assignment(const WeightMatrix &w) {
  const std::size_t nr = w.size();
  const std::size_t nc = nr ? w[0].size() : 0;
  Assignment out;
  out.row_to_col.assign(nr, -1);
  if (nr == 0 || nc == 0) return out;

  double max_w = 0.0;
  for (const auto &row : w) {
    if (row.size() != nc) throw InvalidArgument("ragged weight matrix");
    for (double x : row) {
      if (!(x >= 0.0)) throw InvalidArgument("weights must be non-negative");
      max_w = std::max(max_w, x);
    }
  }
  const double tol = 1e-9 * std::max(1.0, max_w);

  std::vector<std::size_t> rows(nr), cols(nc);
  for (std::size_t i = 0; i < nr; ++i) rows[i] = i;
  for (std::size_t j = 0; j < nc; ++j) cols[j] = j;

  double remaining = 0.0;
  const internal::HungarianSolution first =
      internal::solve_max_weight(w, rows, cols, &remaining);
  auto reduced_cost = [&](std::size_t r, std::size_t c) {
    return -w[r][c] - first.u[r + 1] - first.v[c + 1];
  };

  // current optimal completion of the free rows, by original indices
  std::vector<int> current(nr, -1);
  for (std::size_t r = 0; r < nr; ++r) {
    const int c = first.row_to_col[r];
    if (c >= 0 && static_cast<std::size_t>(c) < nc) current[r] = c;
  }

  std::vector<char> row_free(nr, 1), col_free(nc, 1);
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t c = 0; c < nc; ++c) {
      if (!row_free[r]) break;
      if (!col_free[c] || !(w[r][c] > 0.0)) continue;
      if (current[r] == static_cast<int>(c)) {
        row_free[r] = col_free[c] = 0;
        out.row_to_col[r] = static_cast<int>(c);
        remaining -= w[r][c];
        continue;
      }
      if (reduced_cost(r, c) > tol) continue;

      std::vector<std::size_t> sub_rows, sub_cols;
      for (std::size_t i = 0; i < nr; ++i)
        if (row_free[i] && i != r) sub_rows.push_back(i);
      for (std::size_t j = 0; j < nc; ++j)
        if (col_free[j] && j != c) sub_cols.push_back(j);
      double sub_total = 0.0;
      const auto sub = internal::solve_max_weight(w, sub_rows, sub_cols, &sub_total);
      if (w[r][c] + sub_total < remaining - tol) continue;

      row_free[r] = col_free[c] = 0;
      out.row_to_col[r] = static_cast<int>(c);
      remaining = sub_total;
      std::fill(current.begin(), current.end(), -1);
      for (std::size_t a = 0; a < sub_rows.size(); ++a) {
        const int b = sub.row_to_col[a];
        if (b >= 0 && static_cast<std::size_t>(b) < sub_cols.size()) {
          current[sub_rows[a]] = static_cast<int>(sub_cols[b]);
        }
      }
    }
  }

  for (std::size_t r = 0; r < nr; ++r) {
    if (out.row_to_col[r] >= 0) out.total += w[r][out.row_to_col[r]];
  }
  return out;
}

}  // namespace filmdiar
