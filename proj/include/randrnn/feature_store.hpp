#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "randrnn/config.hpp"
#include "randrnn/manifest.hpp"
#include "randrnn/matrix.hpp"

namespace randrnn {

/// Lowercase hex SHA-256 digest of the concatenated parts.
std::string sha256_hex(std::initializer_list<std::string_view> parts);

/// Identifies one encoded view of the dataset.
struct EncodingKey {
  Modality modality = Modality::rgb;
  int level = 1;
  Seed seed = 0;
  PoolMethod method = PoolMethod::random;

  friend auto operator<=>(const EncodingKey&, const EncodingKey&) = default;
};

/// Encodes manifest samples level by level and memoises the results.
///
/// With caching on, each sample's feature vector is stored under
/// `<output_dir>/cache/` keyed by the SHA-256 of the encoding settings and the
/// raw tensor bytes, so reruns and other splits reuse it.
class FeatureStore {
 public:
  /// Keeps references to `cfg` and `manifest`; both must outlive the store.
  FeatureStore(const RunConfig& cfg, const DatasetManifest& manifest, std::size_t workers);
  FeatureStore(const RunConfig&, DatasetManifest&&, std::size_t) = delete;
  FeatureStore(RunConfig&&, const DatasetManifest&, std::size_t) = delete;

  /// Records of one modality in manifest order; rows of `features` follow it.
  const std::vector<const SampleRecord*>& records(Modality m) const;

  /// Features of every record of `key.modality`, one row per record.
  const FeatureMatrix& features(const EncodingKey& key);

  /// Drops memoised matrices (the on-disk cache is kept).
  void clear() { memo_.clear(); }

  std::size_t cache_hits() const noexcept { return hits_; }
  std::size_t cache_misses() const noexcept { return misses_; }

 private:
  FeatureMatrix encode(const EncodingKey& key);
  std::string settings_slice(const EncodingKey& key) const;

  const RunConfig& cfg_;
  std::size_t workers_;
  std::map<Modality, std::vector<const SampleRecord*>> records_;
  std::map<EncodingKey, FeatureMatrix> memo_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// File-system safe form of a sample id; throws on ids that would collide.
std::string feature_file_name(std::string_view sample_id);

/// Writes one rank-1 NPY per row under `dir`.
void write_feature_files(const std::filesystem::path& dir, const std::vector<const SampleRecord*>& records,
                         const FeatureMatrix& features);

}  // namespace randrnn
