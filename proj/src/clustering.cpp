#include "fedtsd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace fedtsd {

void DbscanParams::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("dbscan eps must be positive");
  if (min_pts < 1) throw ConfigError("dbscan min_pts must be at least 1");
}

std::vector<std::vector<int>> dbscan(const SimilarityMatrix& dist, const DbscanParams& params) {
  params.validate();
  int m = dist.size;
  if (m < 1) throw ValueError("dbscan needs at least one point");
  if (dist.values.size() != static_cast<std::size_t>(m) * static_cast<std::size_t>(m)) {
    throw ShapeError("distance matrix storage does not match its size");
  }
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (std::abs(dist.at(i, j) - dist.at(j, i)) > 1e-9) {
        throw ValueError("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
      }
    }
  }

  std::vector<bool> core(static_cast<std::size_t>(m), false);
  for (int i = 0; i < m; ++i) {
    int within = 0;
    for (int j = 0; j < m; ++j) {
      if (dist.at(i, j) <= params.eps) ++within;
    }
    core[static_cast<std::size_t>(i)] = within >= params.min_pts;
  }

  std::vector<int> label(static_cast<std::size_t>(m), -1);
  int next_label = 0;

  // Flood fill over core points; eps-reachability between cores is symmetric
  // so a plain breadth-first walk covers each density-connected component.
  for (int i = 0; i < m; ++i) {
    if (!core[static_cast<std::size_t>(i)] || label[static_cast<std::size_t>(i)] != -1) continue;
    int cluster = next_label++;
    std::deque<int> queue{i};
    label[static_cast<std::size_t>(i)] = cluster;
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int j = 0; j < m; ++j) {
        if (core[static_cast<std::size_t>(j)] && label[static_cast<std::size_t>(j)] == -1 &&
            dist.at(u, j) <= params.eps) {
          label[static_cast<std::size_t>(j)] = cluster;
          queue.push_back(j);
        }
      }
    }
  }

  // Border points join the first core point (ascending index) within reach.
  for (int i = 0; i < m; ++i) {
    if (core[static_cast<std::size_t>(i)] || label[static_cast<std::size_t>(i)] != -1) continue;
    for (int c = 0; c < m; ++c) {
      if (core[static_cast<std::size_t>(c)] && dist.at(i, c) <= params.eps) {
        label[static_cast<std::size_t>(i)] = label[static_cast<std::size_t>(c)];
        break;
      }
    }
  }

  // Whatever is left is noise; each such point stands alone.
  for (int i = 0; i < m; ++i) {
    if (label[static_cast<std::size_t>(i)] == -1) label[static_cast<std::size_t>(i)] = next_label++;
  }

  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(next_label));
  for (int i = 0; i < m; ++i) {
    clusters[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])].push_back(i);
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

ClusterAssignment two_stage_cluster(const std::vector<InferenceProfile>& profiles,
                                    const std::vector<const LayeredWeights*>& weights,
                                    const DbscanParams& stage1, const DbscanParams& stage2,
                                    double upsilon, JsVariant variant) {
  if (profiles.size() != weights.size()) {
    throw ValueError("got " + std::to_string(profiles.size()) + " profiles for " +
                     std::to_string(weights.size()) + " weight sets");
  }
  if (profiles.empty()) throw ValueError("clustering needs at least one client");

  ClusterAssignment out;
  out.first_stage = dbscan(similarity_matrix(profiles, variant), stage1);

  for (const auto& group : out.first_stage) {
    if (group.size() == 1) {
      out.second_stage.push_back(group);
      continue;
    }
    std::vector<const LayeredWeights*> members;
    members.reserve(group.size());
    for (int idx : group) members.push_back(weights[static_cast<std::size_t>(idx)]);
    auto sub = dbscan(weight_distance_matrix(members, upsilon), stage2);
    for (const auto& local : sub) {
      std::vector<int> mapped;
      mapped.reserve(local.size());
      for (int pos : local) mapped.push_back(group[static_cast<std::size_t>(pos)]);
      out.second_stage.push_back(std::move(mapped));
    }
  }
  return out;
}

}  // namespace fedtsd
