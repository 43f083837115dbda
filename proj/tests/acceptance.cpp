// End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
// process exits nonzero if any fail. Runs from any directory; everything it
// needs is generated in memory or under the working directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedtsd/clustering.hpp"
#include "fedtsd/config.hpp"
#include "fedtsd/data.hpp"
#include "fedtsd/divergence.hpp"
#include "fedtsd/federation.hpp"
#include "fedtsd/nn.hpp"
#include "fedtsd/rng.hpp"
#include "helpers.hpp"

using namespace fedtsd;

namespace {

// Single-concept task: no clustering signal, the gate must stay quiet.
const char* kIidTask = R"(
[data]
scheme = iid
concepts = 1
classes = 4
features = 8
per_class = 100
public_pool = 200

[train]
learning_rate = 0.1
local_epochs = 4
batch_size = 10

[federation]
clients = 8
rounds = 40
strategy = fedtsd
public_batch = 40
hopkins_samples = 7
)";

// Two-concept task: clients 0-3 and 4-7 label the same feature space
// differently, so inference profiles split into two groups.
const char* kTwoConceptTask = R"(
[data]
scheme = shards
concepts = 2
classes = 4
features = 8
per_class = 160
classes_per_client = 4
test_fraction = 0.5
public_pool = 200

[model]
layers = 8 24 16 24 4

[train]
learning_rate = 0.1
local_epochs = 4
batch_size = 10

[federation]
clients = 8
rounds = 60
strategy = fedtsd
public_batch = 40
hopkins_samples = 7
eps1 = 0.22
dampening = 0.9999
)";

struct Outcome {
  bool pass = true;
  std::string note;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

ExperimentResult run_task(const char* text, const std::string& strategy, std::uint64_t seed) {
  auto cfg = parse_config_text(text, "task");
  cfg.strategy = strategy;
  cfg.seed = seed;
  return run_experiment(to_setup(cfg));
}

std::string format_note(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

// ---- 1: analytic gradients vs central differences --------------------------

Outcome check_gradients() {
  RngStream rng(9001);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int in = 2 + rng.uniform_int(3);
    int hidden = 2 + rng.uniform_int(4);
    int out = 2 + rng.uniform_int(3);
    std::vector<int> widths =
        trial % 3 == 0 ? std::vector<int>{in, out} : std::vector<int>{in, hidden, out};
    auto model =
        LayeredWeights::glorot_init(widths, static_cast<double>(widths.size() - 1), rng);
    int batch_n = 2 + rng.uniform_int(4);
    Matrix batch(batch_n, in);
    for (double& v : batch.data) v = rng.normal();
    std::vector<int> labels(static_cast<std::size_t>(batch_n));
    for (int& l : labels) l = rng.uniform_int(out);

    ForwardCache cache;
    forward(model, batch, &cache);
    GradientBlock grads = backward(model, cache, labels);

    const double h = 1e-5;
    auto loss = [&] { return mean_cross_entropy(forward(model, batch), labels); };
    for (std::size_t k = 0; k < model.layers().size(); ++k) {
      auto probe = [&](double& w, double g) {
        double keep = w;
        w = keep + h;
        double up = loss();
        w = keep - h;
        double down = loss();
        w = keep;
        double fd = (up - down) / (2.0 * h);
        double rel = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
        worst = std::max(worst, rel);
      };
      for (std::size_t p = 0; p < model.layers()[k].weight.data.size(); ++p)
        probe(model.layers()[k].weight.data[p], grads.layers[k].weight.data[p]);
      for (std::size_t p = 0; p < model.layers()[k].bias.size(); ++p)
        probe(model.layers()[k].bias[p], grads.layers[k].bias[p]);
    }
  }
  return {worst < 1e-4, format_note("worst relative error %.2e over 100 models", worst)};
}

// ---- 2: divergence properties ----------------------------------------------

Outcome check_divergences() {
  const double ln2 = std::log(2.0);
  std::vector<double> e0 = {1.0, 0.0}, e1 = {0.0, 1.0}, half = {0.5, 0.5};
  if (std::abs(kl_divergence(e0, half) - ln2) > 1e-9)
    return {false, "KL([1,0]||[0.5,0.5]) missed ln 2"};
  if (std::abs(js_divergence(e0, e1) - ln2) > 1e-9)
    return {false, "JS([1,0]||[0,1]) missed ln 2"};

  RngStream rng(9002);
  for (int t = 0; t < 500; ++t) {
    int k = 2 + t % 5;
    auto p = rng.dirichlet(1.0, k);
    auto q = rng.dirichlet(1.0, k);
    double kl = kl_divergence(p, q);
    if (!(kl >= 0.0)) return {false, "negative KL on a random pair"};
    if (kl_divergence(p, p) > 1e-13) return {false, "KL(p||p) nonzero"};
    double gap = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) gap = std::max(gap, std::abs(p[i] - q[i]));
    if (gap > 1e-6 && !(kl > 0.0)) return {false, "KL zero on distinct distributions"};

    double js = js_divergence(p, q);
    if (std::abs(js - js_divergence(q, p)) > 1e-12) return {false, "JS asymmetric"};
    if (js > ln2 + 1e-12) return {false, "JS above ln 2"};
    if (js_divergence(p, p) != 0.0) return {false, "JS(p||p) nonzero"};
  }
  return {true, "500 random pairs plus closed forms at 1e-9"};
}

// ---- 3: density clustering vs exhaustive reference -------------------------

Outcome check_dbscan_oracle() {
  RngStream rng(9003);
  for (int t = 0; t < 1000; ++t) {
    int n = 1 + rng.uniform_int(8);
    SimilarityMatrix d(n, SimilarityKind::js);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double v = rng.uniform();
        d.at(i, j) = v;
        d.at(j, i) = v;
      }
    DbscanParams params{0.05 + 0.9 * rng.uniform(), 1 + rng.uniform_int(4)};
    auto got = testref::canonical(dbscan(d, params));
    auto want = testref::canonical(testref::reference_dbscan(d, params.eps, params.min_pts));
    if (got != want) return {false, format_note("mismatch on instance %.0f", t)};
  }
  return {true, "1000 random instances up to 8 points"};
}

// ---- 4: Hopkins statistic behavior ------------------------------------------

Outcome check_hopkins() {
  HopkinsConfig cfg;
  cfg.sample_count = 10;
  double scattered_sum = 0.0, clumped_sum = 0.0;
  int paired = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    RngStream data_rng(9100 + s);
    std::vector<std::vector<double>> scattered;
    for (int i = 0; i < 150; ++i) scattered.push_back({data_rng.uniform(), data_rng.uniform()});
    std::vector<std::vector<double>> clumped;
    for (int i = 0; i < 75; ++i)
      clumped.push_back({0.01 * data_rng.normal(), 0.01 * data_rng.normal()});
    for (int i = 0; i < 75; ++i)
      clumped.push_back({10.0 + 0.01 * data_rng.normal(), 10.0 + 0.01 * data_rng.normal()});

    RngStream h1(9200 + s), h2(9200 + s);
    double hs = hopkins_statistic(scattered, cfg, h1);
    double hc = hopkins_statistic(clumped, cfg, h2);
    scattered_sum += hs;
    clumped_sum += hc;
    paired += hc > hs;
  }
  double mean_scattered = scattered_sum / seeds;
  double mean_clumped = clumped_sum / seeds;
  bool pass = std::abs(mean_scattered - 0.5) <= 0.1 && mean_clumped > 0.75 && paired >= 45;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "uniform %.3f, blobs %.3f, paired %d/50", mean_scattered,
                mean_clumped, paired);
  return {pass, buf};
}

// ---- 5: sampling-weight ledger ----------------------------------------------

Outcome check_sampling_ledger() {
  // invariants under arbitrary update sequences
  auto pool = PublicPool::uniform(Matrix(60, 1));
  RngStream rng(9005);
  for (int step = 0; step < 200; ++step) {
    int b = 1 + rng.uniform_int(60);
    auto batch = sample_public_batch(pool, b, rng);
    update_sampling_weights(pool, batch.indices);
    double sum = 0.0;
    for (double w : pool.sampling_weights) {
      if (w < 0.0) return {false, "negative sampling weight"};
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) return {false, "weights drifted off 1"};
  }

  // worked example: M=100, B=10, uniform start. Each drawn weight becomes
  // 0.01 + 10 = 10.01 and the total mass 90*0.01 + 10*10.01 = 101, so the
  // normalized batch weight is 10.01/101 = 0.0991089..., i.e. 0.09912 at
  // four significant digits.
  auto worked = PublicPool::uniform(Matrix(100, 1));
  std::vector<int> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(i);
  update_sampling_weights(worked, batch);
  double got = worked.sampling_weights[0];
  if (std::abs(got - 10.01 / 101.0) > 1e-9)
    return {false, format_note("batch weight %.7f differs from 10.01/101", got)};
  if (std::abs(got - 0.09912) > 2e-5)
    return {false, format_note("batch weight %.7f too far from 0.09912", got)};
  return {true, format_note("batch weight %.7f (= 10.01/101)", got)};
}

// ---- 6: quiet gate on the single-concept task -------------------------------

Outcome check_iid_quiet(std::map<std::uint64_t, ExperimentResult>& iid_cache) {
  int quiet = 0;
  double worst_seed_seconds = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto start = Clock::now();
    auto result = run_task(kIidTask, "fedtsd", seed);
    worst_seed_seconds = std::max(worst_seed_seconds, seconds_since(start));
    bool ok = true;
    for (const auto& r : result.rounds) ok = ok && r.hopkins <= 0.65 && r.cluster_count == 1;
    quiet += ok;
    iid_cache.emplace(seed, std::move(result));
  }
  bool pass = quiet >= 9 && worst_seed_seconds < 120.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "quiet in %d/10 seeds, slowest seed %.1fs", quiet,
                worst_seed_seconds);
  return {pass, buf};
}

// ---- 7: gate fires and share depth shrinks on the two-concept task ----------

Outcome check_clustering_fires(std::map<std::uint64_t, ExperimentResult>& cache) {
  auto cfg = parse_config_text(kTwoConceptTask, "task");
  int initial_shared = to_setup(cfg).fed.resolve_initial_shared(
      static_cast<int>(to_setup(cfg).widths.size()) - 1);
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto result = run_task(kTwoConceptTask, "fedtsd", seed);
    bool fired = false;
    bool split_in_second_half = true;
    std::size_t half = result.rounds.size() / 2;
    for (std::size_t r = 0; r < result.rounds.size(); ++r) {
      fired = fired || result.rounds[r].gate_fired;
      if (r >= half) split_in_second_half &= result.rounds[r].cluster_count >= 2;
    }
    const auto& last = result.rounds.back();
    bool shrunk = !last.shared_counts.empty();
    for (double c : last.shared_counts) shrunk = shrunk && c < initial_shared;
    good += fired && split_in_second_half && last.cluster_count >= 2 && shrunk;
    cache.emplace(seed, std::move(result));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "fired, split and shrunk in %d/10 seeds", good);
  return {good >= 8, buf};
}

// ---- 8: cluster recovery against ground truth --------------------------------

Outcome check_cluster_recovery(const std::map<std::uint64_t, ExperimentResult>& cache) {
  int recovered = 0;
  double worst = 1.0;
  for (const auto& [seed, result] : cache) {
    double ari =
        testref::adjusted_rand_index(result.final_cluster_of_client, result.concept_of_client);
    worst = std::min(worst, ari);
    recovered += ari >= 0.9;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "ARI >= 0.9 in %d/10 seeds (worst %.3f)", recovered, worst);
  return {recovered >= 8, buf};
}

// ---- 9: strategy ordering -----------------------------------------------------

Outcome check_strategy_ordering(const std::map<std::uint64_t, ExperimentResult>& noniid_cache,
                                const std::map<std::uint64_t, ExperimentResult>& iid_cache) {
  int ordered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double tsd = noniid_cache.at(seed).rounds.back().weighted_accuracy;
    double per = run_task(kTwoConceptTask, "fedper", seed).rounds.back().weighted_accuracy;
    double avg = run_task(kTwoConceptTask, "fedavg", seed).rounds.back().weighted_accuracy;
    ordered += tsd >= per && per > avg;
  }

  double worst_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double tsd = iid_cache.at(seed).rounds.back().weighted_accuracy;
    double avg = run_task(kIidTask, "fedavg", seed).rounds.back().weighted_accuracy;
    worst_gap = std::max(worst_gap, std::abs(tsd - avg));
  }
  bool pass = ordered >= 7 && worst_gap <= 0.02;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "ordered in %d/10 seeds, worst iid gap %.4f", ordered,
                worst_gap);
  return {pass, buf};
}

// ---- 10: strategy reductions ---------------------------------------------------

struct MiniRun {
  std::vector<Client> clients;
  RoundState state;
};

MiniRun run_mini(Strategy strategy, int fixed_split, double train_mu) {
  DataSpec data;
  data.concepts = 1;
  data.classes = 3;
  data.features = 4;
  data.per_class = 30;
  data.public_pool = 20;
  data.partition.scheme = PartitionScheme::iid;
  data.partition.client_count = 4;

  const std::uint64_t seed = 77;
  RngStream data_rng = RngStream::derive(seed, "data");
  auto fed_data = build_federated_data(data, data_rng);

  FedConfig cfg;
  cfg.client_count = 4;
  cfg.rounds = 3;
  cfg.strategy = strategy;
  cfg.public_batch = 5;
  cfg.fixed_split = fixed_split;

  std::vector<int> widths = {4, 6, 3};
  RngStream init_rng = RngStream::derive(seed, "init");
  double split = cfg.resolve_fixed_split(2);
  if (strategy != Strategy::fedper) split = cfg.resolve_initial_shared(2);
  auto global = LayeredWeights::glorot_init(widths, split, init_rng);

  TrainConfig train;
  train.learning_rate = 0.05;
  train.local_epochs = 1;
  train.batch_size = 10;
  train.prox_mu = train_mu;

  MiniRun run{{}, init_round_state(cfg, global, fed_data.pool)};
  for (auto& split_data : fed_data.clients)
    run.clients.push_back({split_data.train, split_data.test, global});
  for (int round = 1; round <= cfg.rounds; ++round)
    run_round(run.state, run.clients, cfg, train, seed);
  return run;
}

Outcome check_reductions() {
  auto avg = run_mini(Strategy::fedavg, 0, 0.0);
  auto per = run_mini(Strategy::fedper, 2, 0.0);  // full split: nothing personal
  auto prox = run_mini(Strategy::fedprox, 0, 1e-8);

  for (std::size_t i = 0; i < avg.clients.size(); ++i) {
    if (per.clients[i].model.flatten() != avg.clients[i].model.flatten())
      return {false, "fedper at the full split changed a client model"};
  }
  if (per.state.cluster_models.at(0).flatten() != avg.state.cluster_models.at(0).flatten())
    return {false, "fedper at the full split changed the aggregate"};

  double worst = 0.0;
  for (std::size_t i = 0; i < avg.clients.size(); ++i) {
    auto a = avg.clients[i].model.flatten();
    auto p = prox.clients[i].model.flatten();
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - p[k]));
  }
  if (worst > 1e-6)
    return {false, format_note("prox at mu=1e-8 drifted %.2e from fedavg", worst)};
  return {true, format_note("full-split identical, prox drift %.2e", worst)};
}

// ---- 11: byte-identical logs -----------------------------------------------------

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome check_log_determinism() {
  for (const char* task : {kIidTask, kTwoConceptTask}) {
    auto cfg = parse_config_text(task, "task");
    cfg.rounds = std::min(cfg.rounds, 15);
    cfg.seed = 3;
    cfg.out_path = "acceptance_det_a.jsonl";
    run_to_file(cfg);
    cfg.out_path = "acceptance_det_b.jsonl";
    run_to_file(cfg);
    bool same = file_bytes("acceptance_det_a.jsonl") == file_bytes("acceptance_det_b.jsonl");
    std::remove("acceptance_det_a.jsonl");
    std::remove("acceptance_det_b.jsonl");
    if (!same) return {false, "reruns of one config wrote different bytes"};
  }
  return {true, "both tasks byte-stable across reruns"};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    Outcome outcome;
    double seconds;
    double limit;  // 0 = no limit
  };
  std::vector<Entry> entries;
  std::map<std::uint64_t, ExperimentResult> noniid_cache, iid_cache;

  auto timed = [&](int id, const char* name, auto&& fn, double limit = 0.0) {
    auto start = Clock::now();
    Outcome outcome = fn();
    double elapsed = seconds_since(start);
    if (limit > 0.0 && elapsed >= limit) {
      outcome.pass = false;
      outcome.note += format_note(" (exceeded %.0fs budget)", limit);
    }
    entries.push_back({id, name, outcome, elapsed, limit});
  };

  timed(1, "analytic gradients vs central differences", check_gradients, 30.0);
  timed(2, "divergence properties and closed forms", check_divergences);
  timed(3, "density clustering vs exhaustive reference", check_dbscan_oracle, 60.0);
  timed(4, "clustering tendency separates scatter from blobs", check_hopkins);
  timed(5, "sampling-weight ledger invariants", check_sampling_ledger);
  timed(6, "single-concept run keeps a quiet gate", [&] { return check_iid_quiet(iid_cache); });
  timed(7, "two-concept run fires, splits and shrinks",
        [&] { return check_clustering_fires(noniid_cache); });
  timed(8, "final clusters recover the concepts",
        [&] { return check_cluster_recovery(noniid_cache); });
  timed(9, "accuracy ordering across strategies",
        [&] { return check_strategy_ordering(noniid_cache, iid_cache); });
  timed(10, "baseline reductions match exactly", check_reductions);
  timed(11, "metrics logs are byte-deterministic", check_log_determinism);

  int failures = 0;
  for (const auto& e : entries) {
    failures += !e.outcome.pass;
    std::printf("[%2d] %-48s %s  (%.1fs) %s\n", e.id, e.name,
                e.outcome.pass ? "PASS" : "FAIL", e.seconds, e.outcome.note.c_str());
  }
  std::printf("%d/%zu checks passed\n", static_cast<int>(entries.size()) - failures,
              entries.size());
  return failures == 0 ? 0 : 1;
}
