#pragma once

#include <cstdint>
#include <vector>

#include "fedtsd/federation.hpp"

namespace fedtsd {

// Single-cluster reference strategies. They share the orchestrator's client
// streams and aggregation arithmetic so paired runs differ only in strategy.

// Full-model weighted averaging across every connected client.
void fedavg_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                  const TrainConfig& train, std::uint64_t seed);

// fedavg with a proximal pull toward the round's global weights inside each
// local step. train.prox_mu must be positive.
void fedprox_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                   const TrainConfig& train, std::uint64_t seed);

// Shares only the first fixed_split layers; deeper layers stay personal and
// the split never moves.
void fedper_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
                  const TrainConfig& train, std::uint64_t seed);

}  // namespace fedtsd
