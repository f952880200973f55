#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "randrnn/matrix.hpp"
#include "randrnn/rng.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

/// Settings of the random recursive network bank for one level.
///
/// `channels` x `side` x `side` is the canonical input form. With
/// `tree_depth == 1` each network has a single parent node whose receptive
/// field is the whole grid; deeper trees merge 2x2 blocks with one tied
/// matrix until a single node remains, so `side` must equal 2^tree_depth.
struct EncoderConfig {
  std::size_t num_rnns = 128;
  std::size_t channels = 64;
  std::size_t side = 8;
  std::size_t tree_depth = 1;
  Seed master_seed = 0;

  /// Children merged by one parent: side^2 for a single level, 4 otherwise.
  std::size_t child_count() const noexcept { return tree_depth == 1 ? side * side : 4; }
  std::size_t feature_dim() const noexcept { return num_rnns * channels; }
  void validate() const;
};

/// Tied weight matrix W (K rows x child_count*K columns) of one network.
struct RnnWeights {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float, Eigen::aligned_allocator<float>> values;  // row-major
  Seed master_seed = 0;
  int level = 0;
  std::size_t rnn_index = 0;

  static constexpr float lower_bound = -0.1f;
  static constexpr float upper_bound = 0.1f;
};

/// Entries are i.i.d. uniform on [-0.1, 0.1), keyed by (master_seed, level,
/// rnn_index) and the element's row-major position.
RnnWeights generate_weights(const EncoderConfig& cfg, int level, std::size_t rnn_index);

/// tanh, rounded toward zero when float rounding would reach +-1, so encoded
/// components always stay strictly inside (-1, 1).
float bounded_tanh(float x) noexcept;

/// Child vector of a [K, s, s] tensor: spatial positions row-major, the K
/// channels of each position contiguous.
std::vector<float> flatten_children(const ActivationTensor& c);

/// p = tanh(W v) with v the flattened children of `c`.
std::vector<float> encode_single(const ActivationTensor& c, const RnnWeights& w);

/// Repeatedly merges 2x2 neighbourhoods with `w_tied` (K x 4K) until one
/// K-vector remains; `depth` merge rounds on a 2^depth grid.
std::vector<float> encode_multilevel(const ActivationTensor& c, const RnnWeights& w_tied, std::size_t depth);

/// Concatenation over rnn_index = 0..num_rnns-1 of the per-network encodings.
std::vector<float> encode_level(const ActivationTensor& c, const EncoderConfig& cfg, int level,
                                std::size_t workers = 1);

/// Encodes many samples of one level, one output row per input.
///
/// Work is split across networks; every network multiplies fixed-width
/// sample blocks, so each row depends only on its own input and is
/// bit-identical for any worker count or batch composition.
FeatureMatrix encode_batch(std::span<const ActivationTensor> inputs, const EncoderConfig& cfg, int level,
                           std::size_t workers = 1);

}  // namespace randrnn
