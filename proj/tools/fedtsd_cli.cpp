// Command line front end: run experiments from a config file, export metrics
// logs to a plotting table. Errors come out as one JSON line on stdout so
// batch drivers can parse them.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedtsd/config.hpp"

namespace {

int fail(const std::string& kind, const std::string& message) {
  nlohmann::json record{{"error", kind}, {"message", message}};
  std::cout << record.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string strategy;
  std::string out_path;
  std::vector<std::string> overrides;

  CLI::App* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("--seed", seed, "Replace federation.seed")->trigger_on_parse()
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--strategy", strategy, "Replace federation.strategy");
  run->add_option("--out", out_path, "Replace output.path");
  run->add_option("--override", overrides, "Extra section.key=value replacements");

  std::vector<std::string> log_paths;
  std::string table_path;
  CLI::App* exp = app.add_subcommand("export", "Merge metrics logs into a plotting CSV");
  exp->add_option("logs", log_paths, "Metrics logs to merge")->required();
  exp->add_option("--out", table_path, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    return fail("usage", e.what());
  }

  try {
    if (run->parsed()) {
      fedtsd::ExperimentConfig cfg = fedtsd::parse_config(config_path);
      if (seed_set) cfg.seed = seed;
      if (!strategy.empty()) cfg.strategy = strategy;
      if (!out_path.empty()) cfg.out_path = out_path;
      for (const auto& o : overrides) {
        std::size_t eq = o.find('=');
        if (eq == std::string::npos) {
          return fail("usage", "override must look like section.key=value, got '" + o + "'");
        }
        fedtsd::apply_override(cfg, o.substr(0, eq), o.substr(eq + 1));
      }
      fedtsd::ExperimentResult result = fedtsd::run_to_file(cfg);
      nlohmann::json done{{"ok", true},
                          {"out", cfg.out_path},
                          {"rounds", result.rounds.size()},
                          {"final_weighted_accuracy",
                           result.rounds.empty() ? 0.0
                                                 : result.rounds.back().weighted_accuracy}};
      std::cout << done.dump() << std::endl;
    } else {
      fedtsd::export_plot_data(log_paths, table_path);
      nlohmann::json done{{"ok", true}, {"out", table_path}};
      std::cout << done.dump() << std::endl;
    }
  } catch (const fedtsd::ConfigError& e) {
    return fail("config", e.what());
  } catch (const fedtsd::Error& e) {
    return fail("runtime", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
