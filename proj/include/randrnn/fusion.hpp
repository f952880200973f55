#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "randrnn/matrix.hpp"

namespace randrnn {

/// Feature concatenation of several levels of the same sample, in order.
std::vector<float> concat_levels(std::span<const std::span<const float>> parts);
/// Row-wise concatenation of per-level feature matrices with equal row counts.
FeatureMatrix concat_levels(std::span<const FeatureMatrix> parts);

/// Elementwise mean of equally shaped score matrices (soft voting).
ScoreMatrix average_vote(std::span<const ScoreMatrix> scores);

/// Per-sample modality weighting.
///
/// m_i = |S_i|^2 / max(|S_rgb|^2, |S_depth|^2), w_i = sqrt(softmax(m)_i).
struct ModalityWeights {
  double m_rgb = 1.0;
  double m_depth = 1.0;
  double w_rgb = 0.0;
  double w_depth = 0.0;
  /// Both score rows were zero; equal weights were used.
  bool degenerate = false;
};

/// Weights from normalised squared magnitudes.
ModalityWeights weights_from_magnitudes(double m_rgb, double m_depth);
ModalityWeights modality_weights(std::span<const double> rgb_row, std::span<const double> depth_row);

enum class WeightNormalization {
  per_sample,  // max taken over the two rows of each sample
  run_level,   // max taken over every row of both modalities
};

std::string_view to_string(WeightNormalization n) noexcept;
WeightNormalization parse_weight_normalization(std::string_view text);

struct WeightedVote {
  std::vector<int> labels;
  std::vector<ModalityWeights> weights;
  ScoreMatrix blended;  // w_rgb * S_rgb + w_depth * S_depth
  std::size_t degenerate_count = 0;
};

/// Confidence-weighted RGB-D decision: argmax_n of w_rgb*S_rgb + w_depth*S_depth,
/// ties to the smallest class index.
WeightedVote weighted_vote(const ScoreMatrix& rgb, const ScoreMatrix& depth,
                           WeightNormalization norm = WeightNormalization::per_sample);

/// CSV `sample_id,m_rgb,m_depth,w_rgb,w_depth,pred`.
void write_fused_csv(const std::filesystem::path& path, std::span<const std::string> sample_ids,
                     const WeightedVote& vote);

}  // namespace randrnn
