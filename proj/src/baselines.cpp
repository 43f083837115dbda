#include "fedtsd/baselines.hpp"

#include <chrono>

namespace fedtsd {

namespace {

// The common single-cluster round: compose, train, aggregate, evaluate.
void single_cluster_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                          const TrainConfig& train, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  if (clients.size() != static_cast<std::size_t>(cfg.client_count)) {
    throw ConfigError("state built for " + std::to_string(cfg.client_count) + " clients, got " +
                      std::to_string(clients.size()));
  }
  if (state.cluster_models.size() != 1) {
    throw ConfigError("baseline strategies keep a single global model");
  }
  int round = ++state.round;
  double shared = state.cluster_shared_counts.at(0);

  int k = cfg.client_count;
  int m = cfg.connected_count();
  std::vector<int> connected(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) connected[static_cast<std::size_t>(i)] = i;
  if (m < k) {
    RngStream rng = RngStream::derive(seed, "select", static_cast<std::uint64_t>(round));
    rng.shuffle(connected);
    connected.resize(static_cast<std::size_t>(m));
    std::sort(connected.begin(), connected.end());
  }

  const LayeredWeights& global = state.cluster_models.at(0);
  for (int i : connected) {
    LayeredWeights composed =
        compose_for_client(global, shared, clients[static_cast<std::size_t>(i)].model);
    RngStream rng = RngStream::derive(seed, "client", static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(round));
    clients[static_cast<std::size_t>(i)].model =
        local_train(composed, clients[static_cast<std::size_t>(i)].train, train, round - 1, rng);
  }

  std::vector<std::pair<const LayeredWeights*, int>> members;
  members.reserve(connected.size());
  for (int i : connected) {
    members.emplace_back(&clients[static_cast<std::size_t>(i)].model,
                         clients[static_cast<std::size_t>(i)].train.size());
  }
  state.cluster_models.at(0) = aggregate_cluster(members, shared);

  EvalResult eval = evaluate(state, clients);

  MetricsRecord record;
  record.round = round;
  record.hopkins = 0.0;
  record.gate_fired = false;
  record.cluster_count = 1;
  record.shared_counts.push_back(shared);
  record.client_accuracy = std::move(eval.client_accuracy);
  record.weighted_accuracy = eval.weighted_accuracy;
  record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  state.history.push_back(std::move(record));
}

}  // namespace

void fedavg_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                  const TrainConfig& train, std::uint64_t seed) {
  if (train.prox_mu != 0.0) throw ConfigError("fedavg does not take a proximal term");
  single_cluster_round(state, clients, cfg, train, seed);
}

void fedprox_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                   const TrainConfig& train, std::uint64_t seed) {
  if (!(train.prox_mu > 0.0)) throw ConfigError("fedprox needs a positive prox_mu");
  single_cluster_round(state, clients, cfg, train, seed);
}

void fedper_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                  const TrainConfig& train, std::uint64_t seed) {
  if (train.prox_mu != 0.0) throw ConfigError("fedper does not take a proximal term");
  int total = state.cluster_models.at(0).total_layers();
  if (state.cluster_shared_counts.at(0) != static_cast<double>(cfg.resolve_fixed_split(total))) {
    throw ConfigError("fedper share depth drifted from its fixed split");
  }
  single_cluster_round(state, clients, cfg, train, seed);
}

}  // namespace fedtsd
