#include "fedtsd/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fedtsd {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ValueError("cannot format value");
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
}

int parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + text + "' as an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + text + "' as an unsigned integer");
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  if (text == "auto") return {};
  std::vector<int> out;
  std::string item;
  std::stringstream ss(text);
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::stringstream ns(normalized);
  while (ns >> item) out.push_back(parse_int(key, item));
  if (out.empty()) throw ConfigError(key + ": expected 'auto' or a list of widths");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  if (v.empty()) return "auto";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

struct FieldOps {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Single registry drives parsing, overrides and serialization, so the three
// can never disagree about the schema.
const std::vector<std::pair<std::string, FieldOps>>& field_table() {
  auto dbl = [](double ExperimentConfig::* member) {
    return FieldOps{
        [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
          c.*member = parse_double(key, v);
        },
        [member](const ExperimentConfig& c) { return format_double(c.*member); }};
  };
  auto integer = [](int ExperimentConfig::* member) {
    return FieldOps{
        [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
          c.*member = parse_int(key, v);
        },
        [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
  };
  auto text = [](std::string ExperimentConfig::* member) {
    return FieldOps{
        [member](ExperimentConfig& c, const std::string&, const std::string& v) { c.*member = v; },
        [member](const ExperimentConfig& c) { return c.*member; }};
  };

  static const std::vector<std::pair<std::string, FieldOps>> table = {
      {"data.scheme", text(&ExperimentConfig::scheme)},
      {"data.concepts", integer(&ExperimentConfig::concepts)},
      {"data.classes", integer(&ExperimentConfig::classes)},
      {"data.features", integer(&ExperimentConfig::features)},
      {"data.per_class", integer(&ExperimentConfig::per_class)},
      {"data.beta", dbl(&ExperimentConfig::beta)},
      {"data.classes_per_client", integer(&ExperimentConfig::classes_per_client)},
      {"data.test_fraction", dbl(&ExperimentConfig::test_fraction)},
      {"data.public_pool", integer(&ExperimentConfig::public_pool)},
      {"data.csv_path", text(&ExperimentConfig::csv_path)},
      {"model.layers",
       {[](ExperimentConfig& c, const std::string& key, const std::string& v) {
          c.layers = parse_int_list(key, v);
        },
        [](const ExperimentConfig& c) { return format_int_list(c.layers); }}},
      {"train.learning_rate", dbl(&ExperimentConfig::learning_rate)},
      {"train.momentum", dbl(&ExperimentConfig::momentum)},
      {"train.lr_decay", dbl(&ExperimentConfig::lr_decay)},
      {"train.local_epochs", integer(&ExperimentConfig::local_epochs)},
      {"train.batch_size", integer(&ExperimentConfig::batch_size)},
      {"train.prox_mu", dbl(&ExperimentConfig::prox_mu)},
      {"federation.clients", integer(&ExperimentConfig::clients)},
      {"federation.connect_ratio", dbl(&ExperimentConfig::connect_ratio)},
      {"federation.rounds", integer(&ExperimentConfig::rounds)},
      {"federation.strategy", text(&ExperimentConfig::strategy)},
      {"federation.hopkins_threshold", dbl(&ExperimentConfig::hopkins_threshold)},
      {"federation.hopkins_samples", integer(&ExperimentConfig::hopkins_samples)},
      {"federation.eps1", dbl(&ExperimentConfig::eps1)},
      {"federation.eps2", dbl(&ExperimentConfig::eps2)},
      {"federation.min_pts", integer(&ExperimentConfig::min_pts)},
      {"federation.dampening", dbl(&ExperimentConfig::dampening)},
      {"federation.public_batch", integer(&ExperimentConfig::public_batch)},
      {"federation.initial_shared_layers", integer(&ExperimentConfig::initial_shared_layers)},
      {"federation.fixed_split", integer(&ExperimentConfig::fixed_split)},
      {"federation.upsilon", dbl(&ExperimentConfig::upsilon)},
      {"federation.js_variant", text(&ExperimentConfig::js_variant)},
      {"federation.seed",
       {[](ExperimentConfig& c, const std::string& key, const std::string& v) {
          c.seed = parse_u64(key, v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"output.path", text(&ExperimentConfig::out_path)},
  };
  return table;
}

const FieldOps* find_field(const std::string& key) {
  for (const auto& [name, ops] : field_table()) {
    if (name == key) return &ops;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section != "data" && section != "model" && section != "train" &&
          section != "federation" && section != "output") {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
    }
    std::string key = section + "." + trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    const FieldOps* ops = find_field(key);
    if (!ops) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    ops->set(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const FieldOps* ops = find_field(key);
  if (!ops) throw ConfigError("unknown override key '" + key + "'");
  ops->set(cfg, key, value);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [name, ops] : field_table()) {
    std::string sec = name.substr(0, name.find('.'));
    std::string key = name.substr(name.find('.') + 1);
    if (sec != section) {
      if (!out.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key + " = " + ops.get(cfg) + "\n";
  }
  return out;
}

ExperimentSetup to_setup(const ExperimentConfig& cfg) {
  ExperimentSetup setup;

  if (cfg.scheme == "iid") {
    setup.data.partition.scheme = PartitionScheme::iid;
  } else if (cfg.scheme == "dirichlet") {
    setup.data.partition.scheme = PartitionScheme::dirichlet;
  } else if (cfg.scheme == "shards") {
    setup.data.partition.scheme = PartitionScheme::shards;
  } else {
    throw ConfigError("data.scheme must be iid, dirichlet or shards, got '" + cfg.scheme + "'");
  }
  setup.data.concepts = cfg.concepts;
  setup.data.classes = cfg.classes;
  setup.data.features = cfg.features;
  setup.data.per_class = cfg.per_class;
  setup.data.partition.beta = cfg.beta;
  setup.data.partition.classes_per_client = cfg.classes_per_client;
  setup.data.partition.test_fraction = cfg.test_fraction;
  setup.data.partition.client_count = cfg.clients;
  setup.data.public_pool = cfg.public_pool;
  setup.data.csv_path = cfg.csv_path;

  setup.widths = cfg.layers.empty()
                     ? std::vector<int>{cfg.features, 24, 16, 12, cfg.classes}
                     : cfg.layers;

  setup.train.learning_rate = cfg.learning_rate;
  setup.train.momentum = cfg.momentum;
  setup.train.lr_decay = cfg.lr_decay;
  setup.train.local_epochs = cfg.local_epochs;
  setup.train.batch_size = cfg.batch_size;
  setup.train.prox_mu = 0.0;  // applied per strategy inside run_experiment

  if (cfg.strategy == "fedtsd") {
    setup.fed.strategy = Strategy::fedtsd;
  } else if (cfg.strategy == "fedavg") {
    setup.fed.strategy = Strategy::fedavg;
  } else if (cfg.strategy == "fedprox") {
    setup.fed.strategy = Strategy::fedprox;
  } else if (cfg.strategy == "fedper") {
    setup.fed.strategy = Strategy::fedper;
  } else {
    throw ConfigError("federation.strategy must be fedtsd, fedavg, fedprox or fedper, got '" +
                      cfg.strategy + "'");
  }

  if (cfg.js_variant == "textbook") {
    setup.fed.js_variant = JsVariant::textbook;
  } else if (cfg.js_variant == "as_printed") {
    setup.fed.js_variant = JsVariant::as_printed;
  } else {
    throw ConfigError("federation.js_variant must be textbook or as_printed, got '" +
                      cfg.js_variant + "'");
  }

  setup.fed.client_count = cfg.clients;
  setup.fed.connect_ratio = cfg.connect_ratio;
  setup.fed.rounds = cfg.rounds;
  setup.fed.hopkins.threshold = cfg.hopkins_threshold;
  setup.fed.hopkins.sample_count = cfg.hopkins_samples;
  setup.fed.dbscan_stage1 = DbscanParams{cfg.eps1, cfg.min_pts};
  setup.fed.dbscan_stage2 = DbscanParams{cfg.eps2, cfg.min_pts};
  setup.fed.dampening = cfg.dampening;
  setup.fed.public_batch = cfg.public_batch;
  setup.fed.initial_shared_layers = cfg.initial_shared_layers;
  setup.fed.fixed_split = cfg.fixed_split;
  setup.fed.upsilon = cfg.upsilon;
  setup.fed.prox_mu = cfg.prox_mu;
  setup.seed = cfg.seed;

  setup.validate();
  return setup;
}

void write_metrics(std::ostream& out, const ExperimentConfig& cfg, const ExperimentResult& result) {
  for (const auto& r : result.rounds) {
    json line{{"round", r.round},
              {"hopkins", r.hopkins},
              {"gate_fired", r.gate_fired},
              {"cluster_count", r.cluster_count},
              {"shared_counts", r.shared_counts},
              {"client_accuracy", r.client_accuracy},
              {"weighted_accuracy", r.weighted_accuracy}};
    out << line.dump() << '\n';
  }
  json summary{{"summary", true},
               {"strategy", cfg.strategy},
               {"seed", cfg.seed},
               {"rounds", result.rounds.size()},
               {"final_weighted_accuracy",
                result.rounds.empty() ? 0.0 : result.rounds.back().weighted_accuracy},
               {"cluster_of_client", result.final_cluster_of_client},
               {"concept_of_client", result.concept_of_client}};
  out << summary.dump() << '\n';
}

ExperimentResult run_to_file(const ExperimentConfig& cfg) {
  ExperimentSetup setup = to_setup(cfg);
  ExperimentResult result = run_experiment(setup);
  std::ofstream out(cfg.out_path, std::ios::binary);
  if (!out) throw DataError("cannot open output path: " + cfg.out_path);
  write_metrics(out, cfg, result);
  if (!out) throw DataError("failed writing metrics to: " + cfg.out_path);
  return result;
}

void export_plot_data(const std::vector<std::string>& log_paths, const std::string& out_path) {
  if (log_paths.empty()) throw ValueError("export needs at least one metrics log");
  static const std::vector<std::string> metrics = {"hopkins", "gate_fired", "cluster_count",
                                                   "weighted_accuracy"};

  std::vector<std::string> names;
  std::vector<std::vector<int>> rounds_per_log;
  std::vector<std::vector<std::vector<double>>> columns;  // log -> metric -> rows

  for (const auto& path : log_paths) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metrics log: " + path);
    std::vector<int> rounds;
    std::vector<std::vector<double>> cols(metrics.size());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) + ": not a metrics record (" +
                        e.what() + ")");
      }
      if (record.contains("summary")) continue;
      if (!record.contains("round")) {
        throw DataError(path + ":" + std::to_string(line_no) + ": record without a round field");
      }
      rounds.push_back(record.at("round").get<int>());
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        const json& v = record.at(metrics[m]);
        cols[m].push_back(v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>());
      }
    }
    if (rounds.empty()) throw DataError(path + ": no round records");
    std::filesystem::path p(path);
    names.push_back(p.stem().string());
    rounds_per_log.push_back(std::move(rounds));
    columns.push_back(std::move(cols));
  }

  for (std::size_t i = 1; i < rounds_per_log.size(); ++i) {
    if (rounds_per_log[i] != rounds_per_log[0]) {
      throw ValueError("metrics logs cover different round axes: " + log_paths[0] + " vs " +
                       log_paths[i]);
    }
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot open output path: " + out_path);
  out << "round";
  for (std::size_t l = 0; l < names.size(); ++l) {
    for (const auto& m : metrics) out << ',' << names[l] << '.' << m;
  }
  out << '\n';
  for (std::size_t r = 0; r < rounds_per_log[0].size(); ++r) {
    out << rounds_per_log[0][r];
    for (std::size_t l = 0; l < columns.size(); ++l) {
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        out << ',' << format_double(columns[l][m][r]);
      }
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing table to: " + out_path);
}

}  // namespace fedtsd
