#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedtsd/federation.hpp"

namespace fedtsd {

// Flat key-value experiment description, mirroring the config file layout.
// Sections: data, model, train, federation, output. Every field has a
// default, so an empty file is a valid experiment.
struct ExperimentConfig {
  // [data]
  std::string scheme = "iid";  // iid | dirichlet | shards
  int concepts = 1;
  int classes = 4;
  int features = 8;
  int per_class = 150;
  double beta = 0.5;
  int classes_per_client = 2;
  double test_fraction = 0.2;
  int public_pool = 200;
  std::string csv_path;

  // [model] empty widths resolve to {features, 24, 16, 12, classes}
  std::vector<int> layers;

  // [train]
  double learning_rate = 0.05;
  double momentum = 0.5;
  double lr_decay = 0.95;
  int local_epochs = 2;
  int batch_size = 50;
  double prox_mu = 0.01;

  // [federation]
  int clients = 20;
  double connect_ratio = 1.0;
  int rounds = 200;
  std::string strategy = "fedtsd";
  double hopkins_threshold = 0.65;
  int hopkins_samples = 0;
  double eps1 = 0.15;
  double eps2 = 3.5;
  int min_pts = 2;
  double dampening = 0.98;
  int public_batch = 50;
  int initial_shared_layers = 0;
  int fixed_split = 0;
  double upsilon = 1e-12;
  std::string js_variant = "textbook";
  std::uint64_t seed = 1;

  // [output]
  std::string out_path = "metrics.jsonl";
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Accepts "section.key" paths, e.g. "train.learning_rate=0.01".
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

// Validates and lowers the flat config into the runnable experiment setup.
ExperimentSetup to_setup(const ExperimentConfig& cfg);

// One JSON object per line: every round record, then a summary line.
void write_metrics(std::ostream& out, const ExperimentConfig& cfg, const ExperimentResult& result);

// Runs the experiment described by cfg and writes its metrics log.
ExperimentResult run_to_file(const ExperimentConfig& cfg);

// Merges one or more metrics logs into a round-aligned CSV table of their
// scalar per-round fields.
void export_plot_data(const std::vector<std::string>& log_paths, const std::string& out_path);

}  // namespace fedtsd
