#pragma once

// Reference implementations the tests trust: written from the documented
// contracts, independently of the library code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fedtsd/clustering.hpp"
#include "fedtsd/divergence.hpp"
#include "fedtsd/rng.hpp"

namespace testref {

inline std::vector<double> random_prob(fedtsd::RngStream& rng, int k) {
  return rng.dirichlet(1.0, k);
}

inline std::vector<std::vector<int>> canonical(std::vector<std::vector<int>> parts) {
  for (auto& p : parts) std::sort(p.begin(), p.end());
  std::sort(parts.begin(), parts.end());
  return parts;
}

// Exhaustive density-connectivity clustering over a precomputed distance
// matrix. Cores hold at least min_pts points (self included) within the
// closed eps ball; core components are the transitive closure of the
// core-to-core eps relation; a non-core point joins the lowest-indexed core
// that reaches it, or stays a singleton.
inline std::vector<std::vector<int>> reference_dbscan(const fedtsd::SimilarityMatrix& dist,
                                                      double eps, int min_pts) {
  int n = dist.size;
  std::vector<bool> core(n, false);
  for (int i = 0; i < n; ++i) {
    int within = 0;
    for (int j = 0; j < n; ++j)
      if (dist.at(i, j) <= eps) ++within;
    core[i] = within >= min_pts;
  }
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      reach[i][j] = core[i] && core[j] && dist.at(i, j) <= eps;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;

  std::vector<int> owner(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j = 0; j <= i; ++j)
      if (core[j] && reach[i][j]) {
        owner[i] = j;
        break;
      }
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (int j = 0; j < n; ++j)
      if (core[j] && dist.at(i, j) <= eps) {
        owner[i] = owner[j];
        break;
      }
    if (owner[i] < 0) owner[i] = i;  // unreachable: singleton
  }
  std::vector<std::vector<int>> clusters;
  std::vector<int> label(n, -1);
  for (int i = 0; i < n; ++i) {
    if (label[owner[i]] < 0) {
      label[owner[i]] = static_cast<int>(clusters.size());
      clusters.emplace_back();
    }
    clusters[label[owner[i]]].push_back(i);
  }
  return clusters;
}

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

// Chance-corrected partition agreement from the pair-counting contingency
// table. Degenerate splits where expected equals maximum agreement score 1.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  int n = static_cast<int>(a.size());
  int ka = *std::max_element(a.begin(), a.end()) + 1;
  int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<int>> table(ka, std::vector<int>(kb, 0));
  for (int i = 0; i < n; ++i) ++table[a[i]][b[i]];
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (int i = 0; i < ka; ++i) {
    int row = 0;
    for (int j = 0; j < kb; ++j) {
      sum_ij += choose2(table[i][j]);
      row += table[i][j];
    }
    sum_a += choose2(row);
  }
  for (int j = 0; j < kb; ++j) {
    int col = 0;
    for (int i = 0; i < ka; ++i) col += table[i][j];
    sum_b += choose2(col);
  }
  double expected = sum_a * sum_b / choose2(n);
  double maximum = 0.5 * (sum_a + sum_b);
  if (std::abs(maximum - expected) < 1e-12) return sum_ij == maximum ? 1.0 : 0.0;
  return (sum_ij - expected) / (maximum - expected);
}

}  // namespace testref
