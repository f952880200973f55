#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "randrnn/rng.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

enum class PoolMode { maps, spatial };
enum class PoolMethod { random, max, average };

std::string_view to_string(PoolMethod m) noexcept;
PoolMethod parse_pool_method(std::string_view text);

/// One downsampling step from [K, s, s] to [K', s', s'].
///
/// Maps mode merges contiguous groups of K/K' maps elementwise; spatial mode
/// merges non-overlapping (s/s')x(s/s') windows within each map.
struct PoolSpec {
  PoolMode mode = PoolMode::spatial;
  std::size_t source_maps = 0;
  std::size_t source_side = 0;
  std::size_t target_maps = 0;
  std::size_t target_side = 0;
  PoolMethod method = PoolMethod::random;

  static PoolSpec over_maps(std::size_t maps, std::size_t side, std::size_t target_maps, PoolMethod method);
  static PoolSpec over_space(std::size_t maps, std::size_t side, std::size_t target_side, PoolMethod method);

  /// Members per pooling area |A|.
  std::size_t area() const noexcept;
  Shape source_shape() const { return {source_maps, source_side, source_side}; }
  Shape target_shape() const { return {target_maps, target_side, target_side}; }
  /// Throws ShapeError on a divisibility or mode violation.
  void validate() const;
};

/// Fixed random weights for one PoolSpec: one vector of |A| weights per output
/// map, shared by every spatial position of that map and by every sample.
struct PoolWeights {
  PoolSpec spec;
  std::vector<float> values;  // target_maps x area, row-major

  /// Draws U[-0.1, 0.1) weights from the (master, level, stage) stream.
  static PoolWeights draw(const PoolSpec& spec, Seed master, int level, std::size_t stage);
  static PoolWeights constant(const PoolSpec& spec, float value);

  const float* of_map(std::size_t out_map) const { return values.data() + out_map * spec.area(); }
};

ActivationTensor random_pool(const ActivationTensor& t, const PoolWeights& weights);
ActivationTensor random_pool(const ActivationTensor& t, const PoolSpec& spec, Seed seed, int level = 0,
                             std::size_t stage = 0);
ActivationTensor max_pool(const ActivationTensor& t, const PoolSpec& spec);
ActivationTensor avg_pool(const ActivationTensor& t, const PoolSpec& spec);

/// Row-major reinterpretation; data is untouched.
ActivationTensor reshape_to_form(const ActivationTensor& t, const Shape& target);

/// Composed steps that bring one level into canonical form.
class LevelPreprocessor {
 public:
  /// With `uniform_weights`, random pooling uses 1/|A| everywhere (diagnostic:
  /// it must then agree with average pooling).
  LevelPreprocessor(const LevelSpec& spec, PoolMethod method, Seed master, bool uniform_weights = false);

  ActivationTensor operator()(const ActivationTensor& raw) const;

  const LevelSpec& spec() const noexcept { return spec_; }
  /// Pool steps in application order (empty for a pure reshape).
  const std::vector<PoolSpec>& pool_steps() const noexcept { return pools_; }
  /// Shape fed to the first pool step (after any flat->3D reshape).
  const Shape& staged_shape() const noexcept { return staged_; }
  /// One entry per pool step for random pooling, empty otherwise.
  const std::vector<PoolWeights>& pool_weights() const noexcept { return weights_; }

 private:
  LevelSpec spec_;
  Shape staged_;
  std::vector<PoolSpec> pools_;
  std::vector<PoolWeights> weights_;
};

ActivationTensor preprocess_level(const ActivationTensor& t, const LevelSpec& spec, Seed seed,
                                  PoolMethod method = PoolMethod::random);

}  // namespace randrnn
