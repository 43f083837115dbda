#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "fedtsd/clustering.hpp"
#include "fedtsd/common.hpp"
#include "fedtsd/data.hpp"
#include "fedtsd/divergence.hpp"
#include "fedtsd/metrics.hpp"
#include "fedtsd/nn.hpp"

namespace fedtsd {

enum class Strategy { fedtsd, fedavg, fedprox, fedper };

struct FedConfig {
  int client_count = 20;
  double connect_ratio = 1.0;  // fraction of clients drawn each round
  int rounds = 200;
  Strategy strategy = Strategy::fedtsd;

  HopkinsConfig hopkins;
  DbscanParams dbscan_stage1{0.15, 2};
  DbscanParams dbscan_stage2{3.5, 2};
  double dampening = 0.98;        // shared-layer shrink ratio on gate fire
  int public_batch = 50;
  int initial_shared_layers = 0;  // 0 means every layer
  double upsilon = 1e-12;
  JsVariant js_variant = JsVariant::textbook;

  int fixed_split = 0;    // fedper share depth; 0 means all but the last layer
  double prox_mu = 0.01;  // fedprox proximal coefficient

  int connected_count() const;
  int resolve_initial_shared(int total_layers) const;
  int resolve_fixed_split(int total_layers) const;
  void validate(int total_layers) const;
};

struct Client {
  LabeledDataset train;
  LabeledDataset test;
  LayeredWeights model;
};

struct RoundState {
  int round = 0;
  std::vector<int> cluster_of_client;            // client id -> cluster id
  std::map<int, LayeredWeights> cluster_models;  // cluster id -> shared model
  std::map<int, double> cluster_shared_counts;   // cluster id -> current share depth
  PublicPool pool;
  ClusterAssignment assignment;  // positions within the last clustered cohort
  std::vector<MetricsRecord> history;
};

RoundState init_round_state(const FedConfig& cfg, const LayeredWeights& global_model,
                            PublicPool pool);

// Data-size weighted average of the member uploads over the first
// ceil(shared_count) layers. Deeper layers are never averaged; the returned
// model carries the first member's values there to keep its shape.
LayeredWeights aggregate_cluster(const std::vector<std::pair<const LayeredWeights*, int>>& members,
                                 double shared_count);

// What a client actually runs: cluster layers below floor(shared_count), its
// own layers above, and a frac(shared_count)-weighted blend on the boundary
// layer when the share depth is fractional.
LayeredWeights compose_for_client(const LayeredWeights& cluster_model, double shared_count,
                                  const LayeredWeights& own);

// shared_count <- max(1, shared_count * dampening^round) for every cluster.
void decay_shared_layers(RoundState& state, double dampening, int round);

struct EvalResult {
  std::vector<double> client_accuracy;
  double weighted_accuracy = 0.0;
};

EvalResult evaluate(const RoundState& state, const std::vector<Client>& clients);

// One communication round: select, send composed models, train locally,
// upload; then (fedtsd only) profile the uploads on a public batch, gate on
// the Hopkins statistic, re-cluster and reweigh the pool when it fires;
// finally aggregate per cluster, shrink share depths on fire, evaluate.
void run_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
               const TrainConfig& train, std::uint64_t seed);

struct ExperimentSetup {
  DataSpec data;
  std::vector<int> widths;
  TrainConfig train;
  FedConfig fed;
  std::uint64_t seed = 1;
  void validate() const;
};

struct ExperimentResult {
  std::vector<MetricsRecord> rounds;
  std::vector<int> final_cluster_of_client;
  std::vector<int> concept_of_client;
};

ExperimentResult run_experiment(const ExperimentSetup& setup);

}  // namespace fedtsd
