#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "randrnn/rng.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

enum class Modality { rgb, depth };
enum class SplitRole { train, test };

std::string_view to_string(Modality m) noexcept;
std::string_view to_string(SplitRole r) noexcept;
Modality parse_modality(std::string_view text);
SplitRole parse_split_role(std::string_view text);

struct SampleRecord {
  std::string sample_id;
  int category = 0;
  std::string instance_id;
  Modality modality = Modality::rgb;
  SplitRole split_role = SplitRole::train;
  /// Index 0 holds level 1. Empty path = level absent.
  std::array<std::filesystem::path, kNumLevels> level_paths;

  bool has_level(int level) const;
  const std::filesystem::path& level_path(int level) const;
};

/// One row per (sample, modality). Paths are resolved against the manifest's
/// directory when loaded.
struct DatasetManifest {
  std::vector<SampleRecord> records;

  int num_categories() const;
  std::vector<const SampleRecord*> select(Modality m) const;
  bool has_modality(Modality m) const;
};

/// Header row expected in every manifest CSV.
inline constexpr std::string_view kManifestHeader =
    "sample_id,category,instance_id,modality,split_role,level1,level2,level3,level4,level5,level6,level7";

/// Throws ValidationError listing every offending row or category.
/// With `check_paths`, each non-empty level path must name an existing file.
void validate_manifest(const DatasetManifest& m, bool check_paths);

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view csv, const std::filesystem::path& base_dir);

/// Paths are written relative to the manifest's directory when possible.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

using HeldoutInstances = std::map<int, std::string>;

/// Leave-one-instance-out split: every sample of a held-out instance becomes
/// test, everything else train.
DatasetManifest make_instance_split(const DatasetManifest& m, const HeldoutInstances& heldout);

/// Seeded uniform choice of one instance per category (instances ordered by id).
HeldoutInstances draw_heldout_instances(const DatasetManifest& m, Seed seed);

}  // namespace randrnn
