#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "randrnn/depth_colorize.hpp"
#include "randrnn/fusion.hpp"
#include "randrnn/linear_svm.hpp"
#include "randrnn/manifest.hpp"
#include "randrnn/pooling.hpp"
#include "randrnn/rng.hpp"
#include "randrnn/rnn_encoder.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

inline constexpr int kConfigVersion = 1;

enum class LevelStrategy { concat_features, average_vote };
enum class ModalityStrategy { average_vote, weighted_vote };

std::string_view to_string(LevelStrategy s) noexcept;
std::string_view to_string(ModalityStrategy s) noexcept;

/// Which levels feed each modality's decision and how they are combined.
struct FusionPlan {
  std::vector<int> rgb_levels;
  std::vector<int> depth_levels;
  LevelStrategy level_strategy = LevelStrategy::average_vote;
  ModalityStrategy modality_strategy = ModalityStrategy::weighted_vote;
  WeightNormalization weight_normalization = WeightNormalization::per_sample;

  const std::vector<int>& levels_of(Modality m) const { return m == Modality::rgb ? rgb_levels : depth_levels; }
};

/// Train/test assignment. Without held-out instances or a draw seed the
/// manifest's own split_role column is used.
struct SplitDef {
  std::string id;
  std::optional<HeldoutInstances> heldout;
  std::optional<Seed> draw_seed;

  DatasetManifest apply(const DatasetManifest& m) const;
};

struct ReportOptions {
  std::vector<std::size_t> topk{1, 3, 5};
  bool confusion_matrix = true;
};

struct ColorizeOptions {
  CameraIntrinsics intrinsics;
  double depth_scale = 0.001;
  ResizeMode resize = ResizeMode::square;
  std::size_t max_fill_passes = 10;
};

/// Network bank settings shared by all levels; K and s come from each
/// level's target shape and the master seed from the run seed.
struct EncoderSettings {
  std::size_t num_rnns = 128;
  std::size_t tree_depth = 1;
};

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  EncoderSettings encoder;
  std::vector<LevelSpec> levels;
  PoolMethod pool_method = PoolMethod::random;
  bool force_uniform_pool_weights = false;
  SvmConfig svm;
  FusionPlan fusion;
  std::vector<SplitDef> splits;
  std::vector<Seed> seeds;
  ReportOptions report;
  ColorizeOptions colorize;
  bool cache = true;
  bool write_features = false;

  const LevelSpec& level_spec(int level) const;
  bool has_level(int level) const;
  std::vector<int> level_ids() const;
  EncoderConfig encoder_for(int level, Seed seed) const;
  /// Throws ConfigError naming the first offending key.
  void validate() const;
};

/// The seven extraction points of ResNet-101 mapped into 64-map canonical forms.
std::vector<LevelSpec> default_level_specs();

/// Best-trio levels for the modality among those configured; all of them
/// when none of the trio is present.
std::vector<int> default_fusion_levels(Modality m, std::span<const int> configured);

/// Strict parse: unknown keys, wrong types and unsupported versions are errors.
/// Relative paths resolve against `base_dir`.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Parses "3", "1-7" or "1,3,5-7" into sorted unique level ids.
std::vector<int> parse_level_range(std::string_view text);

}  // namespace randrnn
