#include "spml/damp.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "spml/gpr_loss.hpp"
#include "spml/numeric.hpp"
#include "spml/seed.hpp"

namespace spml {
namespace {

// Class indices ordered by score; ties go to the lower index.
std::vector<ClassIndex> rank_classes(std::span<const double> scores, bool descending) {
  std::vector<ClassIndex> order(scores.size());
  std::iota(order.begin(), order.end(), ClassIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](ClassIndex a, ClassIndex b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace

std::vector<ViewSpec> partition_grid(std::size_t grid_size, double overlap_ratio_max,
                                     std::uint64_t seed) {
  if (grid_size == 0) throw DomainError("partition_grid: grid size must be at least 1");
  if (!(overlap_ratio_max >= 0.0 && overlap_ratio_max < 0.5)) {
    throw DomainError("partition_grid: overlap ratio must be in [0, 0.5)");
  }
  const double g = static_cast<double>(grid_size);
  const double cell = 1.0 / g;
  Rng rng(seed);
  std::vector<ViewSpec> views;
  views.reserve(grid_size * grid_size);
  for (std::size_t row = 0; row < grid_size; ++row) {
    for (std::size_t col = 0; col < grid_size; ++col) {
      const double left = rng.uniform(0.0, overlap_ratio_max) * cell;
      const double top = rng.uniform(0.0, overlap_ratio_max) * cell;
      const double right = rng.uniform(0.0, overlap_ratio_max) * cell;
      const double bottom = rng.uniform(0.0, overlap_ratio_max) * cell;
      ViewSpec v;
      v.x0 = std::max(0.0, static_cast<double>(col) / g - left);
      v.y0 = std::max(0.0, static_cast<double>(row) / g - top);
      v.x1 = std::min(1.0, static_cast<double>(col + 1) / g + right);
      v.y1 = std::min(1.0, static_cast<double>(row + 1) / g + bottom);
      v.augmentation_seed = derive_seed({seed, 0, 0, views.size() + 1});
      views.push_back(v);
    }
  }
  return views;
}

double local_threshold(double global_score_of_single_positive, double nu) {
  return std::min(global_score_of_single_positive, nu);
}

std::vector<double> aggregate_local(std::span<const ScoreDistribution> locals, double zeta_local) {
  if (locals.empty()) throw DomainError("aggregate_local: at least one local view is required");
  const std::size_t c = locals.front().size();
  std::vector<double> out(c);
  for (std::size_t k = 0; k < c; ++k) {
    double hi = locals.front()[k];
    double lo = hi;
    for (const auto& s : locals) {
      if (s.size() != c) throw DomainError("aggregate_local: class count mismatch");
      hi = std::max(hi, s[k]);
      lo = std::min(lo, s[k]);
    }
    out[k] = hi >= zeta_local ? hi : lo;
  }
  return out;
}

std::vector<double> final_scores(const ScoreDistribution& s_global, std::span<const double> s_agg) {
  if (s_agg.size() != s_global.size()) throw DomainError("final_scores: class count mismatch");
  std::vector<double> out(s_global.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = 0.5 * (s_global[k] + s_agg[k]);
  return out;
}

PseudoLabelVector assign_positive_pseudo(const ScoreDistribution& s_global,
                                         std::span<const double> s_agg, const DampConfig& cfg) {
  const std::vector<double> s_final = final_scores(s_global, s_agg);
  const std::vector<ClassIndex> order = rank_classes(s_final, /*descending=*/true);
  PseudoLabelVector labels(s_final.size());
  const std::size_t take = std::min(cfg.top_k, order.size());
  for (std::size_t r = 0; r < take; ++r) {
    if (s_final[order[r]] >= cfg.zeta_global) labels[order[r]] = PseudoLabel::kPositive;
  }
  return labels;
}

PseudoLabelVector assign_negative_pseudo(const ScoreDistribution& s_global,
                                         std::span<const ScoreDistribution> locals,
                                         const PseudoLabelVector& positives,
                                         const DampConfig& cfg) {
  const std::size_t c = s_global.size();
  if (locals.empty()) throw DomainError("assign_negative_pseudo: no local views");
  if (positives.size() != c) throw DomainError("assign_negative_pseudo: class count mismatch");
  std::vector<double> s_avg(c, 0.0);
  for (const auto& s : locals) {
    if (s.size() != c) throw DomainError("assign_negative_pseudo: class count mismatch");
    for (std::size_t k = 0; k < c; ++k) s_avg[k] += s[k];
  }
  const double r = static_cast<double>(locals.size());
  for (std::size_t k = 0; k < c; ++k) s_avg[k] = 0.5 * (s_global[k] + s_avg[k] / r);

  PseudoLabelVector labels = positives;
  const std::vector<ClassIndex> order = rank_classes(s_avg, /*descending=*/false);
  const std::size_t n_neg = cfg.negative_count(c);
  for (std::size_t i = 0; i < n_neg; ++i) labels[order[i]] = PseudoLabel::kNegative;
  return labels;
}

ImagePseudoLabels generate_pseudo_labels(ImageId image, ClassIndex single_positive,
                                         const ViewScorer& scorer, const DampConfig& cfg,
                                         std::uint64_t master_seed, std::size_t epoch) {
  const std::size_t c = scorer.class_count();
  if (single_positive >= c) throw DomainError("generate_pseudo_labels: positive class out of range");
  try {
    const std::vector<ViewSpec> patches = partition_grid(
        cfg.grid_size, cfg.overlap_ratio_max, derive_seed({master_seed, epoch, image, kGridStream}));
    ViewSpec whole;
    whole.augmentation_seed = derive_seed({master_seed, epoch, image, 0});

    ImagePseudoLabels out;
    out.views.global = scorer.score_view(image, whole);
    out.views.locals.reserve(patches.size());
    for (const auto& patch : patches) out.views.locals.push_back(scorer.score_view(image, patch));

    const double zeta_local = local_threshold(out.views.global[single_positive], cfg.nu);
    const std::vector<double> s_agg = aggregate_local(out.views.locals, zeta_local);
    const PseudoLabelVector positives = assign_positive_pseudo(out.views.global, s_agg, cfg);
    out.labels = assign_negative_pseudo(out.views.global, out.views.locals, positives, cfg);
    out.confirmed_positive_score = final_scores(out.views.global, s_agg)[single_positive];
    return out;
  } catch (const std::exception& e) {
    throw std::runtime_error("pseudo-labeling image " + std::to_string(image) + ": " + e.what());
  }
}

EpochPseudoLabels generate_epoch_pseudo_labels(std::span<const ImageId> images,
                                               std::span<const AnnotationVector> annotations,
                                               const ViewScorer& scorer,
                                               const DampConfig& damp_cfg,
                                               const GprConfig& gpr_cfg,
                                               std::uint64_t master_seed, std::size_t epoch) {
  if (images.size() != annotations.size()) {
    throw DomainError("generate_epoch_pseudo_labels: image and annotation counts differ");
  }
  EpochPseudoLabels out;
  out.labels.resize(images.size());
  std::vector<double> positive_scores(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    ImagePseudoLabels r = generate_pseudo_labels(images[i], annotations[i].positive(), scorer,
                                                 damp_cfg, master_seed, epoch);
    out.labels[i] = std::move(r.labels);
    positive_scores[i] = std::clamp(r.confirmed_positive_score, kProbabilityEpsilon, 1.0);
  });
  if (!images.empty()) {
    out.log_confidence = log_method_confidence(positive_scores);
    out.confidence = method_confidence_per_positive(positive_scores);
  }
  out.gate_active = out.confidence < gpr_cfg.epsilon_confidence;
  if (out.gate_active) {
    for (auto& l : out.labels) l = PseudoLabelVector(l.size());
  }
  return out;
}

}  // namespace spml
