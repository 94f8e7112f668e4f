#include "spml/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spml/damp.hpp"
#include "spml/log.hpp"
#include "spml/score_map.hpp"
#include "spml/seed.hpp"

namespace spml {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Reads typed keys from one config section and rejects leftovers.
class SectionReader {
 public:
  SectionReader(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) {
      node_ = json::object();
      return;
    }
    node_ = root.at(name_);
    if (!node_.is_object()) throw ConfigError(name_ + ": section must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  void read(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }

  void read_u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  void read(const std::string& key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  // Nested object, consumed as a whole.
  SectionReader child(const std::string& key) {
    seen_.insert(key);
    return SectionReader(node_, name_ + "." + key, key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
    }
  }

 private:
  SectionReader(const json& parent, std::string qualified, const std::string& key)
      : name_(std::move(qualified)) {
    node_ = parent.contains(key) ? parent.at(key) : json::object();
    if (!node_.is_object()) throw ConfigError(name_ + ": section must be an object");
  }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(name_ + "." + key + ": expected " + what);
  }

  std::string name_;
  json node_;
  std::set<std::string> seen_;
};

const char* scorer_kind_name(ScorerKind kind) {
  return kind == ScorerKind::kOracle ? "oracle" : "embedding";
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory '" + dir.string() + "'");
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

SyntheticWorld build_world(const ExperimentConfig& cfg) { return simulate_world(cfg.world); }

}  // namespace

void ScorerConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("scorer: noise_sigma must be nonnegative");
  if (!(evidence_floor >= 0.0)) throw ConfigError("scorer: evidence_floor must be nonnegative");
  if (embedding_dim < 1) throw ConfigError("scorer: embedding_dim must be at least 1");
}

void ExperimentConfig::validate() const {
  world.validate();
  gpr.validate();
  damp.validate();
  train.validate();
  scorer.validate();
  if (output.histogram_bins < 1) throw ConfigError("output: histogram_bins must be at least 1");
  if (damp.top_k > world.class_count) throw ConfigError("damp: top_k exceeds class_count");
  if (train.method == Method::kGprFileScorer && scorer.map_dir.empty()) {
    throw ConfigError("scorer: gpr_file_scorer needs map_dir");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {"world", "gpr",    "damp",
                                                  "train", "scorer", "output"};
  for (const auto& [key, value] : root.items()) {
    if (!kSections.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }

  ExperimentConfig cfg;
  {
    SectionReader s(root, "world");
    WorldConfig& w = cfg.world;
    s.read("class_count", w.class_count);
    s.read("instances", w.instance_count);
    s.read("map_size", w.map_size);
    s.read("feature_dim", w.feature_dim);
    s.read("feature_noise", w.feature_noise);
    s.read("object_size_min", w.object_size_min);
    s.read("object_size_max", w.object_size_max);
    s.read("amplitude_min", w.amplitude_min);
    s.read("amplitude_max", w.amplitude_max);
    s.read_u64("seed", w.seed);
    SectionReader o = s.child("objects");
    o.read("min", w.objects.min_objects);
    o.read("max", w.objects.max_objects);
    o.read("weights", w.objects.weights);
    o.finish();
    s.finish();
  }
  {
    SectionReader s(root, "gpr");
    GprConfig& g = cfg.gpr;
    s.read("q1", g.q1);
    s.read("q2", g.q2);
    s.read("q3", g.q3);
    s.read("lambda1", g.lambda1);
    s.read("lambda2", g.lambda2);
    s.read("eta", g.eta);
    s.read("beta", g.beta);
    s.read("mu_start", g.mu_start);
    s.read("mu_end", g.mu_end);
    s.read("sigma_start", g.sigma_start);
    s.read("sigma_end", g.sigma_end);
    s.read("m", g.m);
    s.read("epsilon", g.epsilon_confidence);
    s.finish();
  }
  {
    SectionReader s(root, "damp");
    DampConfig& d = cfg.damp;
    s.read("grid_size", d.grid_size);
    s.read("overlap_ratio_max", d.overlap_ratio_max);
    s.read("nu", d.nu);
    s.read("zeta_global", d.zeta_global);
    s.read("top_k", d.top_k);
    s.read("delta_neg_pct", d.delta_neg_pct);
    s.read("tau", d.tau);
    s.finish();
  }
  {
    SectionReader s(root, "train");
    TrainConfig& t = cfg.train;
    if (!s.has("method")) throw ConfigError("train.method is required");
    std::string method;
    s.read("method", method);
    t.method = parse_method(method);
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("learning_rate", t.learning_rate);
    s.read("adam_beta1", t.adam_beta1);
    s.read("adam_beta2", t.adam_beta2);
    s.read("validation_fraction", t.validation_fraction);
    s.read("hidden_units", t.hidden_units);
    s.read_u64("seed", t.seed);
    s.finish();
  }
  {
    SectionReader s(root, "scorer");
    ScorerConfig& sc = cfg.scorer;
    std::string kind = scorer_kind_name(sc.kind);
    s.read("kind", kind);
    if (kind == "oracle") {
      sc.kind = ScorerKind::kOracle;
    } else if (kind == "embedding") {
      sc.kind = ScorerKind::kEmbedding;
    } else {
      throw ConfigError("scorer.kind must be 'oracle' or 'embedding'");
    }
    s.read("noise_sigma", sc.noise_sigma);
    s.read("evidence_floor", sc.evidence_floor);
    s.read("embedding_dim", sc.embedding_dim);
    s.read("gcn_layers", sc.gcn_layers);
    s.read("map_dir", sc.map_dir);
    s.finish();
  }
  {
    SectionReader s(root, "output");
    s.read("dir", cfg.output.dir);
    s.read("histogram_bins", cfg.output.histogram_bins);
    s.finish();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!cfg.scorer.map_dir.empty() && fs::path(cfg.scorer.map_dir).is_relative()) {
    cfg.scorer.map_dir = (path.parent_path() / cfg.scorer.map_dir).lexically_normal().string();
  }
  return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  const WorldConfig& w = cfg.world;
  const GprConfig& g = cfg.gpr;
  const DampConfig& d = cfg.damp;
  const TrainConfig& t = cfg.train;
  const ScorerConfig& s = cfg.scorer;
  json j;
  j["world"] = {{"class_count", w.class_count},
                {"instances", w.instance_count},
                {"map_size", w.map_size},
                {"feature_dim", w.feature_dim},
                {"feature_noise", w.feature_noise},
                {"object_size_min", w.object_size_min},
                {"object_size_max", w.object_size_max},
                {"amplitude_min", w.amplitude_min},
                {"amplitude_max", w.amplitude_max},
                {"seed", w.seed},
                {"objects",
                 {{"min", w.objects.min_objects},
                  {"max", w.objects.max_objects},
                  {"weights", w.objects.weights}}}};
  j["gpr"] = {{"q1", g.q1},
              {"q2", g.q2},
              {"q3", g.q3},
              {"lambda1", g.lambda1},
              {"lambda2", g.lambda2},
              {"eta", g.eta},
              {"beta", g.beta},
              {"mu_start", g.mu_start},
              {"mu_end", g.mu_end},
              {"sigma_start", g.sigma_start},
              {"sigma_end", g.sigma_end},
              {"m", g.m},
              {"epsilon", g.epsilon_confidence}};
  j["damp"] = {{"grid_size", d.grid_size},
               {"overlap_ratio_max", d.overlap_ratio_max},
               {"nu", d.nu},
               {"zeta_global", d.zeta_global},
               {"top_k", d.top_k},
               {"delta_neg_pct", d.delta_neg_pct},
               {"tau", d.tau}};
  j["train"] = {{"method", std::string(method_name(t.method))},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"validation_fraction", t.validation_fraction},
                {"hidden_units", t.hidden_units},
                {"seed", t.seed}};
  j["scorer"] = {{"kind", scorer_kind_name(s.kind)},
                 {"noise_sigma", s.noise_sigma},
                 {"evidence_floor", s.evidence_floor},
                 {"embedding_dim", s.embedding_dim},
                 {"gcn_layers", s.gcn_layers},
                 {"map_dir", s.map_dir}};
  j["output"] = {{"dir", cfg.output.dir}, {"histogram_bins", cfg.output.histogram_bins}};
  return j.dump(2) + "\n";
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.world.seed = seed;
  cfg.train.seed = seed;
}

std::unique_ptr<ViewScorer> make_scorer(const ExperimentConfig& cfg, const SyntheticWorld& world) {
  OracleOptions oracle{cfg.damp.tau, cfg.scorer.noise_sigma, cfg.scorer.evidence_floor};
  if (cfg.train.method == Method::kGprFileScorer) {
    auto scorer = SpatialMapScorer::from_directory(cfg.scorer.map_dir, oracle);
    if (scorer->class_count() != world.class_count) {
      throw ConfigError("scorer.map_dir: maps have " + std::to_string(scorer->class_count()) +
                        " classes, world has " + std::to_string(world.class_count));
    }
    return scorer;
  }
  SpatialMapScorer::MapLookup lookup = [&world](ImageId id) -> const SpatialScoreMap& {
    return world.instances.at(id).evidence;
  };
  if (cfg.scorer.kind == ScorerKind::kOracle) {
    return std::make_unique<SpatialMapScorer>(world.class_count, std::move(lookup), oracle);
  }
  const std::size_t c = world.class_count;
  const std::size_t k = cfg.scorer.embedding_dim;
  Matrix prototypes(c, k);
  Rng rng(derive_seed({cfg.world.seed, 0, 0, kInitStream - 1}));
  for (double& v : prototypes.values()) v = rng.normal();
  const GcnNoiseModule gcn = GcnNoiseModule::initialize(
      prototypes, cfg.scorer.gcn_layers, derive_seed({cfg.world.seed, 0, 0, kInitStream - 2}));
  Matrix text = gcn_noise(prototypes, gcn);
  return std::make_unique<EmbeddingScorer>(
      std::move(text), make_prototype_embedder(std::move(lookup), prototypes, cfg.scorer.noise_sigma),
      cfg.damp.tau);
}

SimulateOutcome run_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  ensure_directory(out / "maps");
  const SyntheticWorld world = build_world(cfg);
  SimulateOutcome outcome;
  outcome.instance_count = world.instances.size();

  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < world.class_count; ++c) class_names.push_back("class_" + std::to_string(c));

  json instances = json::array();
  json maps = json::array();
  for (const WorldInstance& inst : world.instances) {
    char name[32];
    std::snprintf(name, sizeof(name), "maps/%06llu.ssm1",
                  static_cast<unsigned long long>(inst.image_id));
    const fs::path path = out / name;
    save_score_map(path, inst.evidence);
    save_sidecar(path, {std::to_string(inst.image_id), class_names, "synthetic"});
    outcome.files.push_back(path);
    std::vector<int> truth;
    for (std::size_t c = 0; c < world.class_count; ++c) truth.push_back(inst.truth[c] ? 1 : 0);
    instances.push_back({{"image_id", inst.image_id},
                         {"map", name},
                         {"annotation", inst.annotation.positive()},
                         {"ground_truth", truth},
                         {"features", inst.features}});
    maps.push_back(name);
  }
  json manifest = {{"class_count", world.class_count},
                   {"feature_dim", world.feature_dim},
                   {"expected_positives", world.expected_positives},
                   {"class_names", class_names},
                   {"maps", maps},
                   {"instances", instances}};
  write_text(out / "manifest.json", manifest.dump(1) + "\n");
  write_text(out / "effective-config.json", experiment_config_to_json(cfg));
  outcome.files.push_back(out / "manifest.json");
  return outcome;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,loss_total,loss_L1,loss_L2,loss_L3,loss_L4,regularizer,mAP_val,"
         "precision_avg,recall_avg,precision_acc,recall_acc,confidence_CM,gate_active\n";
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << ',' << format_number(r.loss.total);
    for (double v : r.loss.per_case_sums) out << ',' << format_number(v);
    out << ',' << format_number(r.loss.regularizer_value) << ','
        << format_number(r.validation_map) << ',' << optional_number(r.pseudo.precision_avg) << ','
        << optional_number(r.pseudo.recall_avg) << ',' << optional_number(r.pseudo.precision_acc)
        << ',' << optional_number(r.pseudo.recall_acc) << ',' << optional_number(r.confidence)
        << ',' << (r.gate_active ? 1 : 0) << '\n';
  }
}

TrainOutcome run_train(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  if (!out.empty()) ensure_directory(out);
  const SyntheticWorld world = build_world(cfg);
  std::unique_ptr<ViewScorer> scorer;
  if (uses_damp(cfg.train.method)) scorer = make_scorer(cfg, world);

  TrainOutcome outcome;
  outcome.fit = fit(world, cfg.gpr, cfg.damp, cfg.train, scorer.get());
  outcome.final_map = outcome.fit.history.best_validation_map;

  // Reproduce the split to evaluate the returned model on held-out data.
  const DatasetSplit split = split_world(world, cfg.train.validation_fraction, cfg.train.seed);
  const PredictionBatch preds = forward(outcome.fit.model, gather_features(world, split.validation));
  std::vector<GroundTruthVector> truths;
  for (std::size_t idx : split.validation) truths.push_back(world.instances[idx].truth);
  outcome.histogram = probability_histogram(preds, truths, cfg.output.histogram_bins);
  outcome.positive_mass = positive_mass_above(preds, truths);

  if (out.empty()) return outcome;
  {
    std::ofstream f = open_output(out / "metrics.csv");
    write_metrics_csv(f, outcome.fit.history);
  }
  {
    std::ofstream f = open_output(out / "histogram.csv");
    write_histogram_csv(f, outcome.histogram);
  }
  {
    std::ofstream f = open_output(out / "checkpoint.txt");
    save_checkpoint(f, outcome.fit.model);
  }
  json epochs = json::array();
  for (const EpochRecord& r : outcome.fit.history.epochs) {
    epochs.push_back({{"epoch", r.epoch},
                      {"loss_total", r.loss.total},
                      {"loss_cases", r.loss.per_case_sums},
                      {"regularizer", r.loss.regularizer_value},
                      {"m_hat", r.loss.m_hat},
                      {"mAP_val", r.validation_map},
                      {"mu", r.alpha.mu},
                      {"sigma", r.alpha.sigma},
                      {"precision_avg", optional_json(r.pseudo.precision_avg)},
                      {"recall_avg", optional_json(r.pseudo.recall_avg)},
                      {"precision_acc", optional_json(r.pseudo.precision_acc)},
                      {"recall_acc", optional_json(r.pseudo.recall_acc)},
                      {"positive_pseudo_labels", r.pseudo.positive_labels},
                      {"negative_pseudo_labels", r.pseudo.negative_labels},
                      {"confidence_CM", optional_json(r.confidence)},
                      {"gate_active", r.gate_active}});
  }
  json history = {{"method", std::string(method_name(cfg.train.method))},
                  {"epochs", epochs},
                  {"best_epoch", outcome.fit.history.best_epoch},
                  {"best_mAP_val", outcome.fit.history.best_validation_map},
                  {"final_mAP_val", outcome.final_map},
                  {"validation_positive_mass_above_half", outcome.positive_mass},
                  {"validation_positive_mean", validation_positive_mean(truths)}};
  write_text(out / "history.json", history.dump(2) + "\n");
  write_text(out / "effective-config.json", experiment_config_to_json(cfg));
  return outcome;
}

bool is_sweepable(const std::string& param) {
  return param == "grid_size" || param == "delta_neg_pct";
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values, const fs::path& out) {
  if (!is_sweepable(param)) {
    throw ConfigError("parameter '" + param + "' is not sweepable (grid_size, delta_neg_pct)");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> runs;
  for (double v : values) {
    ExperimentConfig run = cfg;
    if (param == "grid_size") {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("grid_size values must be positive integers");
      run.damp.grid_size = static_cast<std::size_t>(v);
    } else {
      run.damp.delta_neg_pct = v;
    }
    run.validate();
    runs.push_back(std::move(run));
  }
  if (!out.empty()) ensure_directory(out);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    log_info("sweep " + param + "=" + format_number(values[i]));
    rows.push_back({values[i], run_train(runs[i], {}).final_map});
  }
  if (!out.empty()) {
    std::ofstream f = open_output(out / "sweep.csv");
    f << param << ",mAP\n";
    for (const SweepRow& r : rows) f << format_number(r.value) << ',' << format_number(r.final_map) << '\n';
    write_text(out / "effective-config.json", experiment_config_to_json(cfg));
  }
  return rows;
}

AuditOutcome run_audit(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  if (!out.empty()) ensure_directory(out);
  const SyntheticWorld world = build_world(cfg);
  ExperimentConfig scored = cfg;
  if (!uses_damp(scored.train.method)) scored.train.method = Method::kGprDamp;
  const std::unique_ptr<ViewScorer> scorer = make_scorer(scored, world);

  std::vector<ImageId> ids;
  std::vector<AnnotationVector> annotations;
  std::vector<GroundTruthVector> truths;
  for (const WorldInstance& inst : world.instances) {
    ids.push_back(inst.image_id);
    annotations.push_back(inst.annotation);
    truths.push_back(inst.truth);
  }
  AuditOutcome outcome;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    EpochPseudoLabels labels = generate_epoch_pseudo_labels(ids, annotations, *scorer, cfg.damp,
                                                            cfg.gpr, cfg.train.seed, epoch);
    outcome.confidence.push_back(labels.confidence);
    outcome.gate_active.push_back(labels.gate_active);
    outcome.labels.push_back(std::move(labels.labels));
  }
  outcome.report = pseudo_quality(outcome.labels, truths, annotations);

  if (!out.empty()) {
    std::ofstream f = open_output(out / "audit.csv");
    f << "row,precision,recall,confidence_CM,gate_active\n";
    for (std::size_t e = 0; e < outcome.report.per_epoch.size(); ++e) {
      const EpochQuality& q = outcome.report.per_epoch[e];
      f << "epoch_" << e << ',' << optional_number(q.precision) << ','
        << optional_number(q.recall) << ',' << format_number(outcome.confidence[e]) << ','
        << (outcome.gate_active[e] ? 1 : 0) << '\n';
    }
    f << "average," << optional_number(outcome.report.average_precision) << ','
      << optional_number(outcome.report.average_recall) << ",,\n";
    f << "accumulated," << optional_number(outcome.report.accumulated_precision) << ','
      << optional_number(outcome.report.accumulated_recall) << ",,\n";
    write_text(out / "effective-config.json", experiment_config_to_json(cfg));
  }
  return outcome;
}

}  // namespace spml
