// spml-lab: simulate worlds, train, sweep DAMP parameters and audit
// pseudo-labels from a JSON experiment config.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spml/core.hpp"
#include "spml/experiment.hpp"
#include "spml/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t end = std::min(csv.find(',', start), csv.size());
    const std::string token = csv.substr(start, end - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (token.empty() || used != token.size()) {
      throw spml::ConfigError("--values: '" + token + "' is not a number");
    }
    values.push_back(v);
    start = end + 1;
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-positive multi-label experiment lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string param;
  std::string values_csv;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "Replaces world.seed and train.seed");
    sub->add_flag("-v,--verbose", verbose, "Log progress to stderr");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Write synthetic SSM1 score maps");
  CLI::App* train = app.add_subcommand("train", "Train one method and report validation mAP");
  CLI::App* sweep = app.add_subcommand("sweep", "Train once per value of a DAMP parameter");
  CLI::App* audit = app.add_subcommand("audit-pseudo", "Pseudo-label precision/recall without training");
  for (CLI::App* sub : {simulate, train, sweep, audit}) add_common(sub);
  sweep->add_option("--param", param, "grid_size or delta_neg_pct")->required();
  sweep->add_option("--values", values_csv, "Comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (verbose) spml::set_log_level(spml::LogLevel::kInfo);
  try {
    spml::ExperimentConfig cfg = spml::load_experiment_config(config_path);
    if (seed) spml::override_seed(cfg, *seed);
    const std::filesystem::path out = out_dir.empty() ? cfg.output.dir : out_dir;

    if (simulate->parsed()) {
      const auto outcome = spml::run_simulate(cfg, out);
      std::cout << "instances=" << outcome.instance_count << '\n';
    } else if (train->parsed()) {
      const auto outcome = spml::run_train(cfg, out);
      std::cout << "mAP=" << spml::format_number(outcome.final_map) << '\n';
    } else if (sweep->parsed()) {
      const std::vector<double> values = parse_values(values_csv);
      for (const auto& row : spml::run_sweep(cfg, param, values, out)) {
        std::cout << param << '=' << spml::format_number(row.value)
                  << " mAP=" << spml::format_number(row.final_map) << '\n';
      }
    } else if (audit->parsed()) {
      const auto outcome = spml::run_audit(cfg, out);
      auto show = [](const std::optional<double>& v) {
        return v ? spml::format_number(*v) : std::string("undefined");
      };
      std::cout << "average precision=" << show(outcome.report.average_precision)
                << " recall=" << show(outcome.report.average_recall) << '\n'
                << "accumulated precision=" << show(outcome.report.accumulated_precision)
                << " recall=" << show(outcome.report.accumulated_recall) << '\n';
    }
  } catch (const spml::ConfigError& e) {
    std::cerr << "spml-lab: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "spml-lab: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
