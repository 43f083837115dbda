#pragma once

#include <span>
#include <vector>

#include "fedtsd/common.hpp"
#include "fedtsd/matrix.hpp"
#include "fedtsd/nn.hpp"
#include "fedtsd/rng.hpp"

namespace fedtsd {

// Two readings of the per-row divergence used for profile comparison.
// `textbook` is the symmetric form 0.5*KL(p||m) + 0.5*KL(q||m) with
// m = (p+q)/2, bounded by ln 2; `as_printed` replaces the second term with
// 0.5*KL(m||q), which is neither symmetric nor bounded. The textbook form is
// the default everywhere.
enum class JsVariant { textbook, as_printed };

// Softmax outputs of one client over a public batch: rows are probability
// vectors.
class InferenceProfile {
 public:
  explicit InferenceProfile(Matrix probs);

  int batch() const { return probs_.rows; }
  int classes() const { return probs_.cols; }
  const Matrix& probs() const { return probs_; }

  // Row-major flattening, dimension batch * classes.
  std::vector<double> flat() const { return probs_.data; }

 private:
  Matrix probs_;
};

enum class SimilarityKind { js, weight_l2 };

struct SimilarityMatrix {
  int size = 0;
  SimilarityKind kind = SimilarityKind::js;
  std::vector<double> values;

  SimilarityMatrix() = default;
  SimilarityMatrix(int n, SimilarityKind k)
      : size(n), kind(k), values(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0) {}

  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(size) + static_cast<std::size_t>(j)];
  }
  double& at(int i, int j) {
    return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(size) + static_cast<std::size_t>(j)];
  }
};

struct HopkinsConfig {
  int sample_count = 0;     // 0 resolves to max(2, m/4)
  double threshold = 0.65;  // clustering-tendency gate

  void validate() const;
  int resolve_sample_count(int point_count) const;
};

// KL(p || q) with an epsilon floor of 1e-12 inside the logarithm, so zero
// entries in q stay finite. Zero entries in p contribute nothing.
double kl_divergence(std::span<const double> p, std::span<const double> q);

double js_divergence(std::span<const double> p, std::span<const double> q,
                     JsVariant variant = JsVariant::textbook);

// Mean row-wise JS divergence between two profiles over the same batch.
double profile_js(const InferenceProfile& a, const InferenceProfile& b,
                  JsVariant variant = JsVariant::textbook);

SimilarityMatrix similarity_matrix(const std::vector<InferenceProfile>& profiles,
                                   JsVariant variant = JsVariant::textbook);

// Hopkins statistic H = sum(z) / (sum(z) + sum(v)) over the data's own
// bounding box: z are nearest-data distances of uniform box samples, v are
// nearest-neighbor distances of sampled data points (excluding themselves).
// Degenerate geometry (all distances zero) scores 0.5.
double hopkins_statistic(const std::vector<std::vector<double>>& points,
                         const HopkinsConfig& cfg, RngStream& rng);

// || w_a - w_b + upsilon * ones ||_2 over the shared layers of the pair
// (the first ceil(min(split_a, split_b)) layers).
double weight_distance(const LayeredWeights& a, const LayeredWeights& b, double upsilon);

SimilarityMatrix weight_distance_matrix(const std::vector<const LayeredWeights*>& models,
                                        double upsilon);

}  // namespace fedtsd
