#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spml/core.hpp"
#include "spml/scorers.hpp"

namespace spml {

struct ViewScores {
  ScoreDistribution global;
  std::vector<ScoreDistribution> locals;
};

// g×g uniform grid over [0,1]², row-major. Every side of every cell is pushed
// out by an independent U[0, overlap_ratio_max]·cell_size draw and clipped to
// the unit square.
std::vector<ViewSpec> partition_grid(std::size_t grid_size, double overlap_ratio_max,
                                     std::uint64_t seed);

// ζ_local = min(s_ĉ^global, ν).
double local_threshold(double global_score_of_single_positive, double nu);

// Per class: max over patches if that max reaches ζ_local, else min.
std::vector<double> aggregate_local(std::span<const ScoreDistribution> locals, double zeta_local);

// S^final = (S^global + S^agg) / 2.
std::vector<double> final_scores(const ScoreDistribution& s_global, std::span<const double> s_agg);

// +1 for classes in the top k of S^final (ties to the lower index) whose score
// also reaches ζ_global.
PseudoLabelVector assign_positive_pseudo(const ScoreDistribution& s_global,
                                         std::span<const double> s_agg, const DampConfig& cfg);

// The floor(Δ_neg·C/100) lowest classes of S^avg = (S^global + mean local) / 2
// become -1, overriding positives; everything else is copied from `positives`.
PseudoLabelVector assign_negative_pseudo(const ScoreDistribution& s_global,
                                         std::span<const ScoreDistribution> locals,
                                         const PseudoLabelVector& positives,
                                         const DampConfig& cfg);

struct ImagePseudoLabels {
  PseudoLabelVector labels;
  ViewScores views;
  // S^final at the confirmed positive, the image's term in C(M).
  double confirmed_positive_score = 0.0;
};

ImagePseudoLabels generate_pseudo_labels(ImageId image, ClassIndex single_positive,
                                         const ViewScorer& scorer, const DampConfig& cfg,
                                         std::uint64_t master_seed, std::size_t epoch);

struct EpochPseudoLabels {
  std::vector<PseudoLabelVector> labels;
  // Raw log C(M) over all images and its per-positive geometric mean, which is
  // the quantity compared against ε.
  double log_confidence = 0.0;
  double confidence = 1.0;
  bool gate_active = false;
};

// Runs the pipeline for every image (concurrently when allowed), then applies
// the confidence gate: if the gated confidence is below ε every label is
// replaced by 0.
EpochPseudoLabels generate_epoch_pseudo_labels(std::span<const ImageId> images,
                                               std::span<const AnnotationVector> annotations,
                                               const ViewScorer& scorer,
                                               const DampConfig& damp_cfg,
                                               const GprConfig& gpr_cfg,
                                               std::uint64_t master_seed, std::size_t epoch);

}  // namespace spml
