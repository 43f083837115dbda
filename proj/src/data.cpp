#include "fedtsd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedtsd {

namespace {

// Class mean magnitude in noise units. Neighboring spikes sit ~4 sigma apart,
// close enough that class boundaries retain several percent of irreducible
// confusion; fully separable blobs would let every client converge to the
// same saturated predictions.
constexpr double kMeanRadius = 2.0;
constexpr int kPartitionRetries = 10;

// Class mean `index` of the shared layout: one axis-aligned spike per class,
// cycling through dimensions with growing magnitude and alternating sign once
// the dimensions are exhausted.
std::vector<double> base_class_mean(int index, int features) {
  std::vector<double> mean(static_cast<std::size_t>(features), 0.0);
  int dim = index % features;
  int tier = index / features;
  double sign = (tier % 2 == 0) ? 1.0 : -1.0;
  mean[static_cast<std::size_t>(dim)] = sign * kMeanRadius * static_cast<double>(tier + 1);
  return mean;
}

LabeledDataset dataset_from_indices(const LabeledDataset& source, const std::vector<int>& idxs) {
  LabeledDataset out;
  out.class_count = source.class_count;
  out.features = Matrix(static_cast<int>(idxs.size()), source.feature_count());
  out.labels.reserve(idxs.size());
  for (std::size_t r = 0; r < idxs.size(); ++r) {
    for (int c = 0; c < source.feature_count(); ++c) {
      out.features.at(static_cast<int>(r), c) = source.features.at(idxs[r], c);
    }
    out.labels.push_back(source.labels[static_cast<std::size_t>(idxs[r])]);
  }
  return out;
}

std::vector<std::vector<int>> indices_by_class(const LabeledDataset& d) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(d.class_count));
  for (int i = 0; i < d.size(); ++i) {
    by_class[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  return by_class;
}

// Splits `count` into `parts` chunks proportional to `props` by largest
// remainder, ties resolved toward the lower index.
std::vector<int> proportional_counts(int count, const std::vector<double>& props) {
  std::size_t parts = props.size();
  std::vector<int> counts(parts, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    double exact = props[i] * count;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < count - assigned; ++k) {
    counts[remainders[static_cast<std::size_t>(k)].second] += 1;
  }
  return counts;
}

std::vector<std::vector<int>> assign_iid(const LabeledDataset& d, int k, RngStream& rng) {
  std::vector<int> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<int>> shards(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < order.size(); ++i) {
    shards[i % static_cast<std::size_t>(k)].push_back(order[i]);
  }
  return shards;
}

std::vector<std::vector<int>> assign_dirichlet(const LabeledDataset& d, const PartitionSpec& spec,
                                               RngStream& rng) {
  int k = spec.client_count;
  std::vector<std::vector<int>> shards(static_cast<std::size_t>(k));
  for (auto& idxs : indices_by_class(d)) {
    rng.shuffle(idxs);
    std::vector<double> props = rng.dirichlet(spec.beta, k);
    std::vector<int> counts = proportional_counts(static_cast<int>(idxs.size()), props);
    std::size_t pos = 0;
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < counts[static_cast<std::size_t>(c)]; ++j) {
        shards[static_cast<std::size_t>(c)].push_back(idxs[pos++]);
      }
    }
  }
  return shards;
}

std::vector<std::vector<int>> assign_shards(const LabeledDataset& d, const PartitionSpec& spec,
                                            RngStream& rng) {
  int k = spec.client_count;
  int cpc = spec.classes_per_client;
  int classes = d.class_count;
  int slots = k * cpc;

  // Every class fills slots/classes slots, the first slots%classes one more.
  std::vector<int> slot_count(static_cast<std::size_t>(classes), slots / classes);
  for (int c = 0; c < slots % classes; ++c) slot_count[static_cast<std::size_t>(c)] += 1;

  // Each client draws classes_per_client distinct classes, weighted by the
  // remaining slot counts; a dead end (too few classes left) restarts the deal.
  std::vector<std::vector<int>> client_classes;
  bool ok = false;
  for (int attempt = 0; attempt < kPartitionRetries && !ok; ++attempt) {
    std::vector<int> remaining = slot_count;
    client_classes.assign(static_cast<std::size_t>(k), {});
    ok = true;
    for (int c = 0; c < k && ok; ++c) {
      std::vector<int> left = remaining;
      for (int j = 0; j < cpc; ++j) {
        int total = std::accumulate(left.begin(), left.end(), 0);
        if (total <= 0) {
          ok = false;
          break;
        }
        int pick = rng.uniform_int(total);
        int cls = 0;
        while (pick >= left[static_cast<std::size_t>(cls)]) {
          pick -= left[static_cast<std::size_t>(cls)];
          ++cls;
        }
        client_classes[static_cast<std::size_t>(c)].push_back(cls);
        left[static_cast<std::size_t>(cls)] = 0;  // distinct classes per client
        remaining[static_cast<std::size_t>(cls)] -= 1;
      }
    }
  }
  if (!ok) throw DataError("shards partition failed: could not deal distinct classes per client");

  // Split each class's examples evenly across the clients holding it.
  std::vector<std::vector<int>> holders(static_cast<std::size_t>(classes));
  for (int c = 0; c < k; ++c) {
    for (int cls : client_classes[static_cast<std::size_t>(c)]) {
      holders[static_cast<std::size_t>(cls)].push_back(c);
    }
  }
  std::vector<std::vector<int>> shards_out(static_cast<std::size_t>(k));
  auto by_class = indices_by_class(d);
  for (int cls = 0; cls < classes; ++cls) {
    auto& idxs = by_class[static_cast<std::size_t>(cls)];
    auto& who = holders[static_cast<std::size_t>(cls)];
    if (who.empty()) continue;
    rng.shuffle(idxs);
    std::vector<double> even(who.size(), 1.0 / static_cast<double>(who.size()));
    std::vector<int> counts = proportional_counts(static_cast<int>(idxs.size()), even);
    std::size_t pos = 0;
    for (std::size_t h = 0; h < who.size(); ++h) {
      for (int j = 0; j < counts[h]; ++j) {
        shards_out[static_cast<std::size_t>(who[h])].push_back(idxs[pos++]);
      }
    }
  }
  return shards_out;
}

}  // namespace

void LabeledDataset::validate() const {
  if (features.rows == 0) throw DataError("dataset is empty");
  if (class_count < 1) throw DataError("dataset needs at least one class");
  if (labels.size() != static_cast<std::size_t>(features.rows)) {
    throw ShapeError("dataset has " + std::to_string(features.rows) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw ValueError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(class_count) + ")");
    }
  }
  for (double v : features.data) {
    if (!std::isfinite(v)) throw ValueError("dataset contains a non-finite feature");
  }
}

void PartitionSpec::validate() const {
  if (client_count < 1) throw ConfigError("partition client_count must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("partition test_fraction must lie in (0, 1)");
  }
  if (scheme == PartitionScheme::dirichlet && !(beta > 0.0)) {
    throw ConfigError("partition beta must be positive");
  }
  if (scheme == PartitionScheme::shards && classes_per_client < 1) {
    throw ConfigError("partition classes_per_client must be at least 1");
  }
}

std::vector<LabeledDataset> generate_synthetic(int concepts, int classes, int features,
                                               int per_class, RngStream& rng) {
  if (concepts < 1) throw ValueError("need at least one concept");
  if (classes < 2) throw ValueError("need at least two classes");
  if (features < 1) throw ValueError("need at least one feature");
  if (per_class < 1) throw ValueError("need at least one example per class");
  if (concepts > classes) {
    throw ValueError("layout rotation supports at most one concept per class (" +
                     std::to_string(concepts) + " concepts, " + std::to_string(classes) +
                     " classes)");
  }

  std::vector<std::vector<double>> layout;
  layout.reserve(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) layout.push_back(base_class_mean(c, features));

  std::vector<LabeledDataset> out;
  out.reserve(static_cast<std::size_t>(concepts));
  for (int g = 0; g < concepts; ++g) {
    LabeledDataset d;
    d.class_count = classes;
    d.features = Matrix(classes * per_class, features);
    d.labels.reserve(static_cast<std::size_t>(classes) * static_cast<std::size_t>(per_class));
    int row = 0;
    for (int c = 0; c < classes; ++c) {
      const auto& mean = layout[static_cast<std::size_t>((c + g) % classes)];
      for (int n = 0; n < per_class; ++n) {
        for (int f = 0; f < features; ++f) {
          d.features.at(row, f) = mean[static_cast<std::size_t>(f)] + rng.normal();
        }
        d.labels.push_back(c);
        ++row;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<ClientSplit> partition(const LabeledDataset& dataset, const PartitionSpec& spec,
                                   RngStream& rng) {
  dataset.validate();
  spec.validate();
  int k = spec.client_count;
  if (dataset.size() < 2 * k) {
    throw DataError("cannot split " + std::to_string(dataset.size()) + " examples into " +
                    std::to_string(k) + " train/test shards");
  }
  if (spec.scheme == PartitionScheme::shards) {
    if (spec.classes_per_client > dataset.class_count) {
      throw ConfigError("classes_per_client exceeds the number of classes");
    }
    if (k * spec.classes_per_client < dataset.class_count) {
      throw ConfigError("shards partition would leave some classes unassigned");
    }
  }

  for (int attempt = 0; attempt < kPartitionRetries; ++attempt) {
    std::vector<std::vector<int>> shards;
    switch (spec.scheme) {
      case PartitionScheme::iid:
        shards = assign_iid(dataset, k, rng);
        break;
      case PartitionScheme::dirichlet:
        shards = assign_dirichlet(dataset, spec, rng);
        break;
      case PartitionScheme::shards:
        shards = assign_shards(dataset, spec, rng);
        break;
    }

    bool viable = true;
    for (const auto& s : shards) {
      if (s.size() < 2) {  // need a nonempty train and test side
        viable = false;
        break;
      }
    }
    if (!viable) continue;

    std::vector<ClientSplit> out;
    out.reserve(static_cast<std::size_t>(k));
    for (auto& shard : shards) {
      rng.shuffle(shard);
      int n = static_cast<int>(shard.size());
      int test_n = static_cast<int>(std::lround(spec.test_fraction * n));
      test_n = std::clamp(test_n, 1, n - 1);
      std::vector<int> test_idx(shard.begin(), shard.begin() + test_n);
      std::vector<int> train_idx(shard.begin() + test_n, shard.end());
      std::sort(test_idx.begin(), test_idx.end());
      std::sort(train_idx.begin(), train_idx.end());
      out.push_back({dataset_from_indices(dataset, train_idx), dataset_from_indices(dataset, test_idx)});
    }
    return out;
  }
  throw DataError("partition failed after " + std::to_string(kPartitionRetries) +
                  " attempts: a client kept ending up with too little data");
}

PublicPool PublicPool::uniform(Matrix features) {
  if (features.rows < 1) throw DataError("public pool is empty");
  PublicPool pool;
  pool.sampling_weights.assign(static_cast<std::size_t>(features.rows),
                               1.0 / static_cast<double>(features.rows));
  pool.features = std::move(features);
  return pool;
}

void PublicPool::validate() const {
  if (features.rows < 1) throw DataError("public pool is empty");
  if (sampling_weights.size() != static_cast<std::size_t>(features.rows)) {
    throw ShapeError("pool has " + std::to_string(features.rows) + " rows but " +
                     std::to_string(sampling_weights.size()) + " weights");
  }
  double sum = 0.0;
  for (double w : sampling_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValueError("pool weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValueError("pool weights must sum to 1");
}

PublicBatch sample_public_batch(const PublicPool& pool, int batch_size, RngStream& rng) {
  pool.validate();
  int m = pool.size();
  if (batch_size < 1 || batch_size > m) {
    throw ValueError("batch size " + std::to_string(batch_size) + " outside [1, " +
                     std::to_string(m) + "]");
  }

  std::vector<int> alive(static_cast<std::size_t>(m));
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<double> weights = pool.sampling_weights;

  PublicBatch batch;
  batch.indices.reserve(static_cast<std::size_t>(batch_size));
  for (int draw = 0; draw < batch_size; ++draw) {
    double total = 0.0;
    for (int idx : alive) total += weights[static_cast<std::size_t>(idx)];
    std::size_t pick = alive.size() - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t j = 0; j < alive.size(); ++j) {
        acc += weights[static_cast<std::size_t>(alive[j])];
        if (u < acc) {
          pick = j;
          break;
        }
      }
    } else {
      // All remaining mass is zero; fall back to a uniform pick.
      pick = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(alive.size())));
    }
    batch.indices.push_back(alive[pick]);
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  batch.features = Matrix(batch_size, pool.features.cols);
  for (int r = 0; r < batch_size; ++r) {
    for (int c = 0; c < pool.features.cols; ++c) {
      batch.features.at(r, c) = pool.features.at(batch.indices[static_cast<std::size_t>(r)], c);
    }
  }
  return batch;
}

void update_sampling_weights(PublicPool& pool, const std::vector<int>& batch_indices) {
  pool.validate();
  if (batch_indices.empty()) throw ValueError("weight update needs a nonempty batch");
  std::vector<bool> seen(static_cast<std::size_t>(pool.size()), false);
  for (int idx : batch_indices) {
    if (idx < 0 || idx >= pool.size()) {
      throw ValueError("batch index " + std::to_string(idx) + " outside the pool");
    }
    if (seen[static_cast<std::size_t>(idx)]) {
      throw ValueError("batch index " + std::to_string(idx) + " appears twice");
    }
    seen[static_cast<std::size_t>(idx)] = true;
  }

  double bump = static_cast<double>(pool.size()) / static_cast<double>(batch_indices.size());
  for (int idx : batch_indices) pool.sampling_weights[static_cast<std::size_t>(idx)] += bump;
  double sum = 0.0;
  for (double w : pool.sampling_weights) sum += w;
  for (double& w : pool.sampling_weights) w /= sum;
}

LabeledDataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  auto chomp = [](std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  };

  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty: " + path);
  chomp(line);
  int columns = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (columns < 2) throw DataError("dataset needs at least one feature column and a label: " + path);
  int features = columns - 1;

  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int col = 0;
    double label_value = 0.0;
    while (std::getline(row, cell, ',')) {
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + " of " + path +
                        ": cannot parse '" + cell + "'");
      }
      if (col < features) {
        values.push_back(v);
      } else {
        label_value = v;
      }
      ++col;
    }
    if (col != columns) {
      throw DataError("line " + std::to_string(line_no) + " of " + path + ": expected " +
                      std::to_string(columns) + " columns, got " + std::to_string(col));
    }
    double rounded = std::round(label_value);
    if (std::abs(label_value - rounded) > 1e-9 || rounded < 0) {
      throw DataError("line " + std::to_string(line_no) + " of " + path +
                      ": label must be a nonnegative integer");
    }
    labels.push_back(static_cast<int>(rounded));
  }
  if (labels.empty()) throw DataError("dataset has a header but no rows: " + path);

  LabeledDataset d;
  d.features = Matrix(static_cast<int>(labels.size()), features);
  d.features.data = std::move(values);
  d.labels = std::move(labels);
  d.class_count = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.validate();
  return d;
}

void DataSpec::validate() const {
  partition.validate();
  if (public_pool < 1) throw ConfigError("public_pool must be at least 1");
  if (!csv_path.empty()) {
    if (concepts != 1) throw ConfigError("a CSV dataset provides a single concept");
    return;
  }
  if (concepts < 1) throw ConfigError("concepts must be at least 1");
  if (classes < 2) throw ConfigError("classes must be at least 2");
  if (features < 1) throw ConfigError("features must be at least 1");
  if (per_class < 1) throw ConfigError("per_class must be at least 1");
  if (concepts > classes) throw ConfigError("concepts cannot exceed classes");
  if (partition.client_count % concepts != 0) {
    throw ConfigError("client count must split evenly across concepts");
  }
}

FederatedData build_federated_data(const DataSpec& spec, RngStream& rng) {
  spec.validate();
  FederatedData out;

  if (!spec.csv_path.empty()) {
    LabeledDataset full = load_csv_dataset(spec.csv_path);
    if (spec.public_pool >= full.size()) {
      throw ConfigError("public_pool would swallow the whole CSV dataset");
    }
    std::vector<int> order(static_cast<std::size_t>(full.size()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<int> pool_idx(order.begin(), order.begin() + spec.public_pool);
    std::vector<int> client_idx(order.begin() + spec.public_pool, order.end());
    std::sort(pool_idx.begin(), pool_idx.end());
    std::sort(client_idx.begin(), client_idx.end());

    Matrix pool_features(spec.public_pool, full.feature_count());
    for (std::size_t r = 0; r < pool_idx.size(); ++r) {
      for (int c = 0; c < full.feature_count(); ++c) {
        pool_features.at(static_cast<int>(r), c) = full.features.at(pool_idx[r], c);
      }
    }
    out.pool = PublicPool::uniform(std::move(pool_features));

    LabeledDataset rest = dataset_from_indices(full, client_idx);
    rest.class_count = full.class_count;
    out.clients = partition(rest, spec.partition, rng);
    out.concept_of_client.assign(static_cast<std::size_t>(spec.partition.client_count), 0);
    return out;
  }

  auto concepts = generate_synthetic(spec.concepts, spec.classes, spec.features,
                                     spec.per_class, rng);
  PartitionSpec per_concept = spec.partition;
  per_concept.client_count = spec.partition.client_count / spec.concepts;
  for (int g = 0; g < spec.concepts; ++g) {
    auto splits = partition(concepts[static_cast<std::size_t>(g)], per_concept, rng);
    for (auto& s : splits) {
      out.clients.push_back(std::move(s));
      out.concept_of_client.push_back(g);
    }
  }

  // The concepts share one feature mixture, so the pool draws from the base
  // layout directly.
  Matrix pool_features(spec.public_pool, spec.features);
  for (int r = 0; r < spec.public_pool; ++r) {
    auto mean = base_class_mean(rng.uniform_int(spec.classes), spec.features);
    for (int c = 0; c < spec.features; ++c) {
      pool_features.at(r, c) = mean[static_cast<std::size_t>(c)] + rng.normal();
    }
  }
  out.pool = PublicPool::uniform(std::move(pool_features));
  return out;
}

}  // namespace fedtsd
