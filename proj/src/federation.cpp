#include "fedtsd/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fedtsd/baselines.hpp"

namespace fedtsd {

int FedConfig::connected_count() const {
  return std::max(static_cast<int>(std::floor(connect_ratio * client_count)), 1);
}

int FedConfig::resolve_initial_shared(int total_layers) const {
  return initial_shared_layers > 0 ? initial_shared_layers : total_layers;
}

int FedConfig::resolve_fixed_split(int total_layers) const {
  return fixed_split > 0 ? fixed_split : std::max(total_layers - 1, 1);
}

void FedConfig::validate(int total_layers) const {
  if (client_count < 1) throw ConfigError("client_count must be at least 1");
  if (!(connect_ratio > 0.0 && connect_ratio <= 1.0)) {
    throw ConfigError("connect_ratio must lie in (0, 1]");
  }
  if (rounds < 0) throw ConfigError("rounds must be nonnegative");
  hopkins.validate();
  dbscan_stage1.validate();
  dbscan_stage2.validate();
  if (!(dampening > 0.0 && dampening <= 1.0)) throw ConfigError("dampening must lie in (0, 1]");
  if (public_batch < 1) throw ConfigError("public_batch must be at least 1");
  if (initial_shared_layers < 0 || initial_shared_layers > total_layers) {
    throw ConfigError("initial_shared_layers outside [0, " + std::to_string(total_layers) + "]");
  }
  if (!(upsilon >= 0.0) || !std::isfinite(upsilon)) {
    throw ConfigError("upsilon must be nonnegative and finite");
  }
  if (fixed_split < 0 || fixed_split > total_layers) {
    throw ConfigError("fixed_split outside [0, " + std::to_string(total_layers) + "]");
  }
  if (strategy == Strategy::fedprox && !(prox_mu > 0.0)) {
    throw ConfigError("fedprox needs a positive prox_mu");
  }
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) {
    throw ConfigError("prox_mu must be nonnegative and finite");
  }
}

RoundState init_round_state(const FedConfig& cfg, const LayeredWeights& global_model,
                            PublicPool pool) {
  int total = global_model.total_layers();
  cfg.validate(total);
  pool.validate();

  double shared = 0.0;
  switch (cfg.strategy) {
    case Strategy::fedtsd:
      shared = cfg.resolve_initial_shared(total);
      break;
    case Strategy::fedavg:
    case Strategy::fedprox:
      shared = total;
      break;
    case Strategy::fedper:
      shared = cfg.resolve_fixed_split(total);
      break;
  }

  RoundState state;
  state.round = 0;
  state.cluster_of_client.assign(static_cast<std::size_t>(cfg.client_count), 0);
  LayeredWeights model = global_model;
  model.set_split_point(shared);
  state.cluster_models.emplace(0, std::move(model));
  state.cluster_shared_counts.emplace(0, shared);
  state.pool = std::move(pool);
  state.assignment.first_stage = {{}};
  state.assignment.second_stage = {{}};
  for (int i = 0; i < cfg.client_count; ++i) {
    state.assignment.first_stage[0].push_back(i);
    state.assignment.second_stage[0].push_back(i);
  }
  state.assignment.round_formed = 0;
  return state;
}

LayeredWeights aggregate_cluster(const std::vector<std::pair<const LayeredWeights*, int>>& members,
                                 double shared_count) {
  if (members.empty()) throw ValueError("aggregation needs at least one member");
  const LayeredWeights& first = *members.front().first;
  long long total_n = 0;
  for (const auto& [model, n] : members) {
    if (n < 0) throw ValueError("member data size must be nonnegative");
    if (!model->congruent_with(first)) throw ShapeError("member models have mismatched shapes");
    total_n += n;
  }
  if (total_n <= 0) throw DataError("cluster has no data to weight the average by");
  if (!(shared_count >= 0.0) || shared_count > static_cast<double>(first.total_layers())) {
    throw ValueError("shared_count outside the model's layer range");
  }

  int averaged = std::min(first.total_layers(), static_cast<int>(std::ceil(shared_count)));
  LayeredWeights out = first;
  for (int k = 0; k < averaged; ++k) {
    auto& layer = out.layers()[static_cast<std::size_t>(k)];
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    for (const auto& [model, n] : members) {
      double coef = static_cast<double>(n) / static_cast<double>(total_n);
      const auto& src = model->layers()[static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < layer.weight.data.size(); ++j) {
        layer.weight.data[j] += coef * src.weight.data[j];
      }
      for (std::size_t j = 0; j < layer.bias.size(); ++j) {
        layer.bias[j] += coef * src.bias[j];
      }
    }
  }
  out.set_split_point(shared_count);
  return out;
}

LayeredWeights compose_for_client(const LayeredWeights& cluster_model, double shared_count,
                                  const LayeredWeights& own) {
  if (!cluster_model.congruent_with(own)) {
    throw ShapeError("cluster model shape does not match the client model");
  }
  int total = own.total_layers();
  if (!(shared_count >= 0.0) || shared_count > static_cast<double>(total)) {
    throw ValueError("shared_count outside the model's layer range");
  }

  int whole = static_cast<int>(std::floor(shared_count));
  double frac = shared_count - static_cast<double>(whole);

  LayeredWeights out = own;
  for (int k = 0; k < whole; ++k) {
    out.layers()[static_cast<std::size_t>(k)] = cluster_model.layers()[static_cast<std::size_t>(k)];
  }
  if (frac > 0.0 && whole < total) {
    auto& dst = out.layers()[static_cast<std::size_t>(whole)];
    const auto& shared = cluster_model.layers()[static_cast<std::size_t>(whole)];
    const auto& mine = own.layers()[static_cast<std::size_t>(whole)];
    for (std::size_t j = 0; j < dst.weight.data.size(); ++j) {
      dst.weight.data[j] = frac * shared.weight.data[j] + (1.0 - frac) * mine.weight.data[j];
    }
    for (std::size_t j = 0; j < dst.bias.size(); ++j) {
      dst.bias[j] = frac * shared.bias[j] + (1.0 - frac) * mine.bias[j];
    }
  }
  out.set_split_point(shared_count);
  return out;
}

void decay_shared_layers(RoundState& state, double dampening, int round) {
  if (!(dampening > 0.0 && dampening <= 1.0)) throw ConfigError("dampening must lie in (0, 1]");
  if (round < 1) throw ValueError("round index must be at least 1");
  double ratio = std::pow(dampening, round);
  for (auto& [id, count] : state.cluster_shared_counts) {
    count = std::max(1.0, count * ratio);
  }
}

EvalResult evaluate(const RoundState& state, const std::vector<Client>& clients) {
  EvalResult result;
  result.client_accuracy.reserve(clients.size());
  double weighted = 0.0;
  long long total_n = 0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    int cluster = state.cluster_of_client[i];
    const LayeredWeights& shared = state.cluster_models.at(cluster);
    double count = state.cluster_shared_counts.at(cluster);
    LayeredWeights composed = compose_for_client(shared, count, clients[i].model);
    if (clients[i].test.size() == 0) {
      throw DataError("client " + std::to_string(i) + " has an empty test split");
    }
    double acc = dataset_accuracy(composed, clients[i].test);
    result.client_accuracy.push_back(acc);
    weighted += acc * static_cast<double>(clients[i].train.size());
    total_n += clients[i].train.size();
  }
  if (total_n <= 0) throw DataError("no training data to weight the evaluation by");
  result.weighted_accuracy = weighted / static_cast<double>(total_n);
  return result;
}

namespace {

std::vector<int> select_connected(const FedConfig& cfg, int round, std::uint64_t seed) {
  int k = cfg.client_count;
  int m = cfg.connected_count();
  std::vector<int> ids(static_cast<std::size_t>(k));
  std::iota(ids.begin(), ids.end(), 0);
  if (m >= k) return ids;
  RngStream rng = RngStream::derive(seed, "select", static_cast<std::uint64_t>(round));
  rng.shuffle(ids);
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Replaces the cluster layout with the freshly flattened second-stage groups.
// Each new cluster inherits share depth and model from the previous cluster
// that contributed most of its members (ties toward the lower old id), and
// clients outside the cohort follow their old cluster's heaviest heir.
void adopt_assignment(RoundState& state, const ClusterAssignment& assignment,
                      const std::vector<int>& connected) {
  std::vector<int> old_of_client = state.cluster_of_client;
  std::map<int, LayeredWeights> old_models = std::move(state.cluster_models);
  std::map<int, double> old_counts = std::move(state.cluster_shared_counts);

  state.cluster_models.clear();
  state.cluster_shared_counts.clear();

  int next_id = 0;
  std::vector<std::pair<int, int>> heirs;  // (old id, member count) per new cluster
  for (const auto& group : assignment.second_stage) {
    std::map<int, int> votes;
    for (int pos : group) {
      int client = connected[static_cast<std::size_t>(pos)];
      votes[old_of_client[static_cast<std::size_t>(client)]] += 1;
    }
    int best_old = votes.begin()->first;
    int best_votes = votes.begin()->second;
    for (const auto& [old_id, n] : votes) {
      if (n > best_votes) {
        best_old = old_id;
        best_votes = n;
      }
    }
    int id = next_id++;
    for (int pos : group) {
      state.cluster_of_client[static_cast<std::size_t>(connected[static_cast<std::size_t>(pos)])] = id;
    }
    state.cluster_models.emplace(id, old_models.at(best_old));
    state.cluster_shared_counts.emplace(id, old_counts.at(best_old));
    heirs.emplace_back(best_old, best_votes);
  }

  // Clients that did not participate this round: send each to the new cluster
  // that absorbed the largest share of its previous cluster.
  std::vector<bool> in_cohort(old_of_client.size(), false);
  for (int c : connected) in_cohort[static_cast<std::size_t>(c)] = true;
  for (std::size_t client = 0; client < old_of_client.size(); ++client) {
    if (in_cohort[client]) continue;
    int old_id = old_of_client[client];
    int target = -1;
    int best = -1;
    for (int id = 0; id < next_id; ++id) {
      const auto& [heir_old, votes] = heirs[static_cast<std::size_t>(id)];
      int score = heir_old == old_id ? votes : 0;
      if (score > best) {
        best = score;
        target = id;
      }
    }
    state.cluster_of_client[client] = target >= 0 ? target : 0;
  }

  state.assignment = assignment;
}

}  // namespace

void run_round(RoundState& state, std::vector<Client>& clients, const FedConfig& cfg,
               const TrainConfig& train, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  if (clients.size() != static_cast<std::size_t>(cfg.client_count)) {
    throw ConfigError("state built for " + std::to_string(cfg.client_count) + " clients, got " +
                      std::to_string(clients.size()));
  }
  int round = ++state.round;
  std::vector<int> connected = select_connected(cfg, round, seed);

  // Local updates: each client composes its cluster's shared layers with its
  // own personalization layers and runs E epochs of SGD.
  for (int i : connected) {
    int cluster = state.cluster_of_client[static_cast<std::size_t>(i)];
    double shared = state.cluster_shared_counts.at(cluster);
    LayeredWeights composed =
        compose_for_client(state.cluster_models.at(cluster), shared, clients[static_cast<std::size_t>(i)].model);
    RngStream rng = RngStream::derive(seed, "client", static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(round));
    clients[static_cast<std::size_t>(i)].model =
        local_train(composed, clients[static_cast<std::size_t>(i)].train, train, round - 1, rng);
  }

  double hopkins_value = 0.0;
  bool fired = false;

  if (cfg.strategy == Strategy::fedtsd) {
    RngStream pool_rng = RngStream::derive(seed, "pool", static_cast<std::uint64_t>(round));
    PublicBatch batch = sample_public_batch(state.pool, cfg.public_batch, pool_rng);

    std::vector<InferenceProfile> profiles;
    std::vector<const LayeredWeights*> uploads;
    profiles.reserve(connected.size());
    uploads.reserve(connected.size());
    for (int i : connected) {
      const LayeredWeights& model = clients[static_cast<std::size_t>(i)].model;
      profiles.emplace_back(softmax_rows(forward(model, batch.features)));
      uploads.push_back(&model);
    }

    std::vector<std::vector<double>> flats;
    flats.reserve(profiles.size());
    for (const auto& p : profiles) flats.push_back(p.flat());
    RngStream hopkins_rng = RngStream::derive(seed, "hopkins", static_cast<std::uint64_t>(round));
    hopkins_value = hopkins_statistic(flats, cfg.hopkins, hopkins_rng);

    if (hopkins_value > cfg.hopkins.threshold) {
      fired = true;
      ClusterAssignment assignment = two_stage_cluster(profiles, uploads, cfg.dbscan_stage1,
                                                       cfg.dbscan_stage2, cfg.upsilon, cfg.js_variant);
      assignment.round_formed = round;
      adopt_assignment(state, assignment, connected);
      update_sampling_weights(state.pool, batch.indices);
    }
  }

  // Aggregate uploads within each cluster, weighted by local data size.
  for (auto& [id, model] : state.cluster_models) {
    std::vector<std::pair<const LayeredWeights*, int>> members;
    for (int i : connected) {
      if (state.cluster_of_client[static_cast<std::size_t>(i)] == id) {
        members.emplace_back(&clients[static_cast<std::size_t>(i)].model,
                             clients[static_cast<std::size_t>(i)].train.size());
      }
    }
    if (members.empty()) continue;
    model = aggregate_cluster(members, state.cluster_shared_counts.at(id));
  }

  if (fired) decay_shared_layers(state, cfg.dampening, round);

  EvalResult eval = evaluate(state, clients);

  MetricsRecord record;
  record.round = round;
  record.hopkins = hopkins_value;
  record.gate_fired = fired;
  record.cluster_count = static_cast<int>(state.cluster_models.size());
  for (const auto& [id, count] : state.cluster_shared_counts) record.shared_counts.push_back(count);
  record.client_accuracy = std::move(eval.client_accuracy);
  record.weighted_accuracy = eval.weighted_accuracy;
  record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  state.history.push_back(std::move(record));
}

void ExperimentSetup::validate() const {
  data.validate();
  train.validate();
  if (widths.size() < 2) throw ConfigError("model needs at least input and output widths");
  fed.validate(static_cast<int>(widths.size()) - 1);
  if (fed.client_count != data.partition.client_count) {
    throw ConfigError("federation client_count disagrees with the partition spec");
  }
  if (data.csv_path.empty()) {
    if (widths.front() != data.features) {
      throw ConfigError("model input width must equal the feature count");
    }
    if (widths.back() != data.classes) {
      throw ConfigError("model output width must equal the class count");
    }
  }
  if (fed.public_batch > data.public_pool) {
    throw ConfigError("public_batch cannot exceed the public pool size");
  }
}

ExperimentResult run_experiment(const ExperimentSetup& setup) {
  setup.validate();

  RngStream data_rng = RngStream::derive(setup.seed, "data");
  FederatedData data = build_federated_data(setup.data, data_rng);

  std::vector<int> widths = setup.widths;
  if (!setup.data.csv_path.empty()) {
    // The CSV fixes the input/output widths; verify instead of trusting config.
    const LabeledDataset& probe = data.clients.front().train;
    if (widths.front() != probe.feature_count() || widths.back() != probe.class_count) {
      throw ConfigError("model widths do not match the CSV dataset (" +
                        std::to_string(probe.feature_count()) + " features, " +
                        std::to_string(probe.class_count) + " classes)");
    }
  }

  RngStream init_rng = RngStream::derive(setup.seed, "init");
  int total_layers = static_cast<int>(widths.size()) - 1;
  double initial_split = setup.fed.strategy == Strategy::fedper
                             ? setup.fed.resolve_fixed_split(total_layers)
                             : setup.fed.resolve_initial_shared(total_layers);
  LayeredWeights global = LayeredWeights::glorot_init(widths, initial_split, init_rng);

  std::vector<Client> clients;
  clients.reserve(data.clients.size());
  for (auto& split : data.clients) {
    clients.push_back({std::move(split.train), std::move(split.test), global});
  }

  RoundState state = init_round_state(setup.fed, global, std::move(data.pool));

  TrainConfig train = setup.train;
  train.prox_mu = setup.fed.strategy == Strategy::fedprox ? setup.fed.prox_mu : 0.0;

  for (int r = 0; r < setup.fed.rounds; ++r) {
    switch (setup.fed.strategy) {
      case Strategy::fedtsd:
        run_round(state, clients, setup.fed, train, setup.seed);
        break;
      case Strategy::fedavg:
        fedavg_round(state, clients, setup.fed, train, setup.seed);
        break;
      case Strategy::fedprox:
        fedprox_round(state, clients, setup.fed, train, setup.seed);
        break;
      case Strategy::fedper:
        fedper_round(state, clients, setup.fed, train, setup.seed);
        break;
    }
  }

  ExperimentResult result;
  result.rounds = std::move(state.history);
  result.final_cluster_of_client = std::move(state.cluster_of_client);
  result.concept_of_client = std::move(data.concept_of_client);
  return result;
}

}  // namespace fedtsd
