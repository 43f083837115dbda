#pragma once

#include <vector>

#include "fedtsd/common.hpp"
#include "fedtsd/divergence.hpp"

namespace fedtsd {

struct DbscanParams {
  double eps = 0.15;
  int min_pts = 2;
  void validate() const;
};

// Two nested partitions of the connected-client index set {0..m-1}:
// first_stage groups by inference behavior, second_stage refines each group
// by weight distance. second_stage always refines first_stage.
struct ClusterAssignment {
  std::vector<std::vector<int>> first_stage;
  std::vector<std::vector<int>> second_stage;
  int round_formed = 0;
};

// Density clustering over a precomputed distance matrix. A point is core
// when at least min_pts points (itself included) lie within eps (closed
// ball). Border points go to the lowest-indexed core point that reaches
// them; unreachable points become singleton clusters, so the result is
// always a partition.
std::vector<std::vector<int>> dbscan(const SimilarityMatrix& dist, const DbscanParams& params);

ClusterAssignment two_stage_cluster(const std::vector<InferenceProfile>& profiles,
                                    const std::vector<const LayeredWeights*>& weights,
                                    const DbscanParams& stage1, const DbscanParams& stage2,
                                    double upsilon, JsVariant variant = JsVariant::textbook);

}  // namespace fedtsd
