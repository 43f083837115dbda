#pragma once

#include <string>
#include <vector>

#include "fedtsd/common.hpp"
#include "fedtsd/matrix.hpp"
#include "fedtsd/rng.hpp"

namespace fedtsd {

struct LabeledDataset {
  Matrix features;          // N x F
  std::vector<int> labels;  // values in [0, class_count)
  int class_count = 0;

  int size() const { return features.rows; }
  int feature_count() const { return features.cols; }
  void validate() const;
};

enum class PartitionScheme { iid, dirichlet, shards };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::iid;
  int client_count = 1;
  double beta = 0.5;            // dirichlet concentration
  int classes_per_client = 2;   // shards
  double test_fraction = 0.2;
  void validate() const;
};

struct ClientSplit {
  LabeledDataset train;
  LabeledDataset test;
};

// Unlabeled server-side pool with per-example sampling weights.
struct PublicPool {
  Matrix features;                       // M x F
  std::vector<double> sampling_weights;  // nonnegative, sums to 1

  static PublicPool uniform(Matrix features);
  int size() const { return features.rows; }
  void validate() const;
};

struct PublicBatch {
  std::vector<int> indices;  // distinct positions into the pool
  Matrix features;           // B x F, rows in draw order
};

// Gaussian-mixture generator. All concepts share one far-separated layout of
// class means; concept g rotates the class-to-mean assignment by g positions,
// so feature geometry is identical across concepts while the labeling is not.
std::vector<LabeledDataset> generate_synthetic(int concepts, int classes, int features,
                                               int per_class, RngStream& rng);

// Disjoint covering split of one dataset into client train/test shards.
// Retries a failed draw (some client left without data) up to ten times.
std::vector<ClientSplit> partition(const LabeledDataset& dataset, const PartitionSpec& spec,
                                   RngStream& rng);

// Weighted sampling without replacement: sequential draws proportional to the
// remaining weights, renormalizing after each pick.
PublicBatch sample_public_batch(const PublicPool& pool, int batch_size, RngStream& rng);

// Adds |pool| / |batch| to every drawn example's weight, then renormalizes.
void update_sampling_weights(PublicPool& pool, const std::vector<int>& batch_indices);

// CSV with a header row, feature columns and a final integer label column.
LabeledDataset load_csv_dataset(const std::string& path);

struct DataSpec {
  int concepts = 1;
  int classes = 4;
  int features = 8;
  int per_class = 150;
  PartitionSpec partition;
  int public_pool = 200;
  std::string csv_path;  // when set, replaces the synthetic generator
  void validate() const;
};

struct FederatedData {
  std::vector<ClientSplit> clients;
  PublicPool pool;
  std::vector<int> concept_of_client;  // ground truth for recovery scoring
};

// Builds the full cross-client layout: per-concept generation, contiguous
// concept-to-client blocks, per-concept partitioning, and a public pool drawn
// from the shared feature mixture (or held out of the CSV when one is given).
FederatedData build_federated_data(const DataSpec& spec, RngStream& rng);

}  // namespace fedtsd
