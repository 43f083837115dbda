#include "fedtsd/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedtsd {

namespace {

constexpr double kLogFloor = 1e-12;

void check_probability(std::span<const double> p, const char* name) {
  if (p.empty()) throw ShapeError(std::string(name) + " is empty");
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValueError(std::string(name) + " is not a probability vector");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValueError(std::string(name) + " sums to " + std::to_string(sum) + ", expected 1");
  }
}

// Assumes validated inputs of equal length.
double kl_core(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    sum += p[i] * std::log(p[i] / std::max(q[i], kLogFloor));
  }
  // The floor can push the total a hair below zero when q has near-zero mass.
  return std::max(sum, 0.0);
}

double js_core(std::span<const double> p, std::span<const double> q, JsVariant variant) {
  std::vector<double> mid(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
  if (variant == JsVariant::textbook) {
    return 0.5 * kl_core(p, mid) + 0.5 * kl_core(q, mid);
  }
  return 0.5 * kl_core(p, mid) + 0.5 * kl_core(mid, q);
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

InferenceProfile::InferenceProfile(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows < 1 || probs_.cols < 1) throw ShapeError("profile needs at least one row");
  for (int r = 0; r < probs_.rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < probs_.cols; ++c) {
      double v = probs_.at(r, c);
      if (!std::isfinite(v) || v < -1e-12 || v > 1.0 + 1e-12) {
        throw ValueError("profile row " + std::to_string(r) + " is not a probability vector");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValueError("profile row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

void HopkinsConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("hopkins threshold must lie in (0, 1)");
  if (sample_count != 0 && sample_count < 2) {
    throw ConfigError("hopkins sample count must be 0 (auto) or at least 2");
  }
}

int HopkinsConfig::resolve_sample_count(int point_count) const {
  int m = sample_count > 0 ? sample_count : std::max(2, point_count / 4);
  return std::min(m, point_count - 1);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_probability(p, "p");
  check_probability(q, "q");
  if (p.size() != q.size()) {
    throw ShapeError("probability vectors of length " + std::to_string(p.size()) + " and " +
                     std::to_string(q.size()));
  }
  return kl_core(p, q);
}

double js_divergence(std::span<const double> p, std::span<const double> q, JsVariant variant) {
  check_probability(p, "p");
  check_probability(q, "q");
  if (p.size() != q.size()) {
    throw ShapeError("probability vectors of length " + std::to_string(p.size()) + " and " +
                     std::to_string(q.size()));
  }
  return js_core(p, q, variant);
}

double profile_js(const InferenceProfile& a, const InferenceProfile& b, JsVariant variant) {
  if (a.batch() != b.batch() || a.classes() != b.classes()) {
    throw ShapeError("profiles cover different batch shapes");
  }
  const Matrix& pa = a.probs();
  const Matrix& pb = b.probs();
  double total = 0.0;
  for (int r = 0; r < pa.rows; ++r) {
    std::span<const double> row_a(pa.data.data() + static_cast<std::size_t>(r) * pa.cols,
                                  static_cast<std::size_t>(pa.cols));
    std::span<const double> row_b(pb.data.data() + static_cast<std::size_t>(r) * pb.cols,
                                  static_cast<std::size_t>(pb.cols));
    total += js_core(row_a, row_b, variant);
  }
  return total / static_cast<double>(pa.rows);
}

SimilarityMatrix similarity_matrix(const std::vector<InferenceProfile>& profiles,
                                   JsVariant variant) {
  int m = static_cast<int>(profiles.size());
  if (m < 1) throw ValueError("similarity matrix needs at least one profile");
  SimilarityMatrix sim(m, SimilarityKind::js);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double d = profile_js(profiles[static_cast<std::size_t>(i)],
                            profiles[static_cast<std::size_t>(j)], variant);
      sim.at(i, j) = d;
      sim.at(j, i) = d;
    }
  }
  return sim;
}

double hopkins_statistic(const std::vector<std::vector<double>>& points,
                         const HopkinsConfig& cfg, RngStream& rng) {
  cfg.validate();
  int m = static_cast<int>(points.size());
  if (m < 3) throw ValueError("hopkins statistic needs at least three points");
  std::size_t dims = points.front().size();
  if (dims == 0) throw ShapeError("hopkins points need at least one dimension");
  for (const auto& p : points) {
    if (p.size() != dims) throw ShapeError("hopkins points have mixed dimensions");
  }
  int samples = cfg.resolve_sample_count(m);

  std::vector<double> lo(dims), hi(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    lo[d] = hi[d] = points[0][d];
    for (const auto& p : points) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }

  // Draw the data-sample indices first, then the box points, so the stream
  // layout is fixed.
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> sampled(order.begin(), order.begin() + samples);

  std::vector<std::vector<double>> box_points;
  box_points.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    std::vector<double> p(dims);
    for (std::size_t d = 0; d < dims; ++d) p[d] = rng.uniform(lo[d], hi[d]);
    box_points.push_back(std::move(p));
  }

  double z_sum = 0.0;
  for (const auto& bp : box_points) {
    double best = squared_distance(bp, points[0]);
    for (int j = 1; j < m; ++j) {
      best = std::min(best, squared_distance(bp, points[static_cast<std::size_t>(j)]));
    }
    z_sum += std::sqrt(best);
  }

  double v_sum = 0.0;
  for (int idx : sampled) {
    double best = -1.0;
    for (int j = 0; j < m; ++j) {
      if (j == idx) continue;
      double d = squared_distance(points[static_cast<std::size_t>(idx)],
                                  points[static_cast<std::size_t>(j)]);
      if (best < 0.0 || d < best) best = d;
    }
    v_sum += std::sqrt(best);
  }

  double denom = z_sum + v_sum;
  if (denom <= 0.0) return 0.5;
  return z_sum / denom;
}

double weight_distance(const LayeredWeights& a, const LayeredWeights& b, double upsilon) {
  if (!(upsilon >= 0.0) || !std::isfinite(upsilon)) {
    throw ValueError("upsilon must be nonnegative and finite");
  }
  int shared = static_cast<int>(std::ceil(std::min(a.split_point(), b.split_point())));
  if (shared < 1) throw ValueError("weight distance needs at least one shared layer");
  for (int k = 0; k < shared; ++k) {
    if (!a.layers()[static_cast<std::size_t>(k)].weight.same_shape(
            b.layers()[static_cast<std::size_t>(k)].weight)) {
      throw ShapeError("shared layer " + std::to_string(k) + " shapes differ");
    }
  }
  std::vector<double> fa = a.flatten_layers(shared);
  std::vector<double> fb = b.flatten_layers(shared);
  double sum = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    double d = fa[i] - fb[i] + upsilon;
    sum += d * d;
  }
  return std::sqrt(sum);
}

SimilarityMatrix weight_distance_matrix(const std::vector<const LayeredWeights*>& models,
                                        double upsilon) {
  int m = static_cast<int>(models.size());
  if (m < 1) throw ValueError("weight distance matrix needs at least one model");
  SimilarityMatrix sim(m, SimilarityKind::weight_l2);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      double d = weight_distance(*models[static_cast<std::size_t>(i)],
                                 *models[static_cast<std::size_t>(j)], upsilon);
      sim.at(i, j) = d;
      sim.at(j, i) = d;
    }
  }
  return sim;
}

}  // namespace fedtsd
