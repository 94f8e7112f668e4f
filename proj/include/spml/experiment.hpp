#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spml/core.hpp"
#include "spml/eval.hpp"
#include "spml/scorers.hpp"
#include "spml/trainer.hpp"
#include "spml/world.hpp"

namespace spml {

enum class ScorerKind { kOracle, kEmbedding };

struct ScorerConfig {
  ScorerKind kind = ScorerKind::kOracle;
  // Std. dev. of the log-evidence jitter (oracle) or relative embedding noise.
  double noise_sigma = 1.0;
  double evidence_floor = 0.05;
  std::size_t embedding_dim = 32;
  std::size_t gcn_layers = 1;
  // SSM1 directory for gpr_file_scorer; resolved against the config file.
  std::string map_dir;

  void validate() const;
};

struct OutputConfig {
  std::string dir = "out";
  std::size_t histogram_bins = 50;
};

struct ExperimentConfig {
  WorldConfig world;
  GprConfig gpr;
  DampConfig damp;
  TrainConfig train;
  ScorerConfig scorer;
  OutputConfig output;

  void validate() const;
};

// Parses JSON text. Sections and keys may be omitted (defaults apply) except
// `train.method`; unknown keys and mistyped values raise ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Every field, defaults included.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Replaces both the world and training seeds.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

// Scorer over `world` (which must outlive it), or over cfg.scorer.map_dir for
// gpr_file_scorer.
std::unique_ptr<ViewScorer> make_scorer(const ExperimentConfig& cfg, const SyntheticWorld& world);

struct SimulateOutcome {
  std::size_t instance_count = 0;
  std::vector<std::filesystem::path> files;
};

// Writes maps/NNNNNN.ssm1 with sidecars and manifest.json into `out`.
SimulateOutcome run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct TrainOutcome {
  FitResult fit;
  // Validation mAP of the selected (best-epoch) model.
  double final_map = 0.0;
  double positive_mass = 0.0;  // validation TP mass above 0.5
  Histogram histogram;
};

// Writes metrics.csv, history.json, checkpoint.txt, histogram.csv and
// effective-config.json into `out` (skipped when `out` is empty).
TrainOutcome run_train(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct SweepRow {
  double value = 0.0;
  double final_map = 0.0;
};

bool is_sweepable(const std::string& param);
// One training run per value; writes sweep.csv.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values,
                                const std::filesystem::path& out);

struct AuditOutcome {
  PseudoQualityReport report;
  std::vector<std::vector<PseudoLabelVector>> labels;  // [epoch][image]
  std::vector<double> confidence;
  std::vector<bool> gate_active;
};

// DAMP over every instance for train.epochs epochs, no training. Writes
// audit.csv.
AuditOutcome run_audit(const ExperimentConfig& cfg, const std::filesystem::path& out);

void write_metrics_csv(std::ostream& out, const TrainHistory& history);
std::string format_number(double value);

}  // namespace spml
