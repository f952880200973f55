#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace randrnn {

constexpr int kNumLevels = 7;

using Shape = std::vector<std::size_t>;

/// Dense single-precision activation tensor, row-major.
///
/// Rank 3 tensors are laid out as [K, s, s] (maps, rows, cols); rank 1 holds a
/// flat vector such as a fully-connected output or an encoded feature.
struct ActivationTensor {
  Shape shape;
  std::vector<float> data;
  int level = 0;  // 1..7 when known, 0 when untagged

  static ActivationTensor zeros(Shape shape, int level = 0);

  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t size() const noexcept { return data.size(); }

  /// K of a rank-3 tensor.
  std::size_t maps() const;
  /// s of a rank-3 tensor with square maps.
  std::size_t side() const;
};

std::size_t element_count(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

/// Throws ValidationError unless rank is 1 or 3, extents are positive, the
/// element count matches and every value is finite.
void validate_tensor(const ActivationTensor& t);

/// NPY v1.0 encoding: little-endian float32, C order, header padded so the
/// payload starts on a 64-byte boundary (the layout numpy itself writes).
std::string encode_npy(const ActivationTensor& t);
ActivationTensor decode_npy(std::string_view bytes);

ActivationTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const ActivationTensor& t, const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a partial file.
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

enum class Preprocess { reshape, pool_maps, pool_spatial, pool_both };

std::string_view to_string(Preprocess p) noexcept;
Preprocess parse_preprocess(std::string_view text);

/// How one extraction level is brought into canonical [K', s', s'] form.
struct LevelSpec {
  int level = 1;
  Shape raw_shape;
  std::array<std::size_t, 3> target_shape{64, 8, 8};
  Preprocess preprocess = Preprocess::reshape;

  /// Picks the cheapest preprocess that can reach `target` from `raw`.
  static Preprocess infer_preprocess(std::span<const std::size_t> raw,
                                     const std::array<std::size_t, 3>& target);
  void validate() const;
};

}  // namespace randrnn
