#include "randrnn/rnn_encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "randrnn/error.hpp"
#include "randrnn/parallel.hpp"

namespace randrnn {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ColMatrix = Eigen::MatrixXf;

// Columns per projection. Fixed so every product has the same shape no matter
// how many samples share a block.
constexpr std::size_t kBlockColumns = 16;

constexpr float kOpenUnit = 0x1.fffffep-1f;  // nextafter(1.0f, 0)

void require_input(const ActivationTensor& c, std::size_t channels, std::size_t side) {
  if (c.rank() != 3 || c.shape[0] != channels || c.shape[1] != side || c.shape[2] != side)
    throw ShapeError(fmt::format("encoder expects [{}, {}, {}], got {}", channels, side, side, shape_string(c.shape)));
}

void flatten_into(const ActivationTensor& c, float* out) {
  const std::size_t k = c.shape[0];
  const std::size_t plane = c.shape[1] * c.shape[2];
  for (std::size_t ch = 0; ch < k; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[p * k + ch] = c.data[ch * plane + p];
}

RowMajorMap weight_map(const RnnWeights& w) {
  return RowMajorMap(w.values.data(), static_cast<Eigen::Index>(w.rows), static_cast<Eigen::Index>(w.cols));
}

// K x B parents of the children stacked in the columns of `children`.
ColMatrix merge(const RnnWeights& w, const ColMatrix& children) {
  ColMatrix parents(static_cast<Eigen::Index>(w.rows), children.cols());
  parents.noalias() = weight_map(w) * children;
  parents = parents.unaryExpr([](float x) { return bounded_tanh(x); });
  return parents;
}

// Runs the 2x2 merge tree on one sample; `nodes` holds one K-column per grid
// cell, cells row-major.
ColMatrix merge_tree(const RnnWeights& w, ColMatrix nodes, std::size_t side, std::size_t depth) {
  const auto k = static_cast<Eigen::Index>(w.rows);
  for (std::size_t round = 0; round < depth; ++round) {
    const std::size_t half = side / 2;
    ColMatrix gathered(4 * k, static_cast<Eigen::Index>(half * half));
    for (std::size_t py = 0; py < half; ++py)
      for (std::size_t px = 0; px < half; ++px) {
        const auto col = static_cast<Eigen::Index>(py * half + px);
        const std::size_t children[4] = {(2 * py) * side + 2 * px, (2 * py) * side + 2 * px + 1,
                                         (2 * py + 1) * side + 2 * px, (2 * py + 1) * side + 2 * px + 1};
        for (Eigen::Index c = 0; c < 4; ++c)
          gathered.block(c * k, col, k, 1) = nodes.col(static_cast<Eigen::Index>(children[c]));
      }
    nodes = merge(w, gathered);
    side = half;
  }
  return nodes;
}

ColMatrix grid_nodes(const ActivationTensor& c) {
  const auto k = static_cast<Eigen::Index>(c.shape[0]);
  const auto cells = static_cast<Eigen::Index>(c.shape[1] * c.shape[2]);
  ColMatrix nodes(k, cells);
  flatten_into(c, nodes.data());  // column-major K x cells == channels fastest per cell
  return nodes;
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_rnns < 1) throw ConfigError("encoder needs at least one network");
  if (channels < 1 || side < 1) throw ConfigError("encoder channels and side must be positive");
  if (tree_depth < 1) throw ConfigError("tree depth must be at least 1");
  if (tree_depth > 1 && side != (std::size_t{1} << tree_depth))
    throw ConfigError(fmt::format("multi-level tree of depth {} needs side {}, got {}", tree_depth,
                                  std::size_t{1} << tree_depth, side));
}

RnnWeights generate_weights(const EncoderConfig& cfg, int level, std::size_t rnn_index) {
  cfg.validate();
  RnnWeights w;
  w.rows = cfg.channels;
  w.cols = cfg.child_count() * cfg.channels;
  w.values.resize(w.rows * w.cols);
  w.master_seed = cfg.master_seed;
  w.level = level;
  w.rnn_index = rnn_index;
  const CounterRng rng(cfg.master_seed, StreamDomain::rnn_weights, static_cast<std::uint64_t>(level), rnn_index);
  fill_symmetric_uniform(rng, w.values.data(), w.values.size());
  return w;
}

float bounded_tanh(float x) noexcept {
  const float y = std::tanh(x);
  if (y >= 1.0f) return kOpenUnit;
  if (y <= -1.0f) return -kOpenUnit;
  return y;
}

std::vector<float> flatten_children(const ActivationTensor& c) {
  if (c.rank() != 3) throw ShapeError(fmt::format("expected [K, s, s] input, got {}", shape_string(c.shape)));
  std::vector<float> v(c.size());
  flatten_into(c, v.data());
  return v;
}

std::vector<float> encode_single(const ActivationTensor& c, const RnnWeights& w) {
  if (c.rank() != 3 || c.shape[0] != w.rows || c.shape[1] * c.shape[2] * w.rows != w.cols)
    throw ShapeError(fmt::format("weights {}x{} do not fit input {}", w.rows, w.cols, shape_string(c.shape)));
  const ColMatrix parent = merge(w, grid_nodes(c).reshaped(static_cast<Eigen::Index>(w.cols), 1));
  return {parent.data(), parent.data() + parent.size()};
}

std::vector<float> encode_multilevel(const ActivationTensor& c, const RnnWeights& w_tied, std::size_t depth) {
  if (c.rank() != 3 || c.shape[1] != c.shape[2]) throw ShapeError("multi-level input must be [K, s, s]");
  if (depth < 1 || c.shape[1] != (std::size_t{1} << depth))
    throw ShapeError(fmt::format("side {} is not 2^{}", c.shape[1], depth));
  if (w_tied.rows != c.shape[0] || w_tied.cols != 4 * c.shape[0])
    throw ShapeError(fmt::format("tied weights must be {}x{}, got {}x{}", c.shape[0], 4 * c.shape[0], w_tied.rows,
                                 w_tied.cols));
  const ColMatrix root = merge_tree(w_tied, grid_nodes(c), c.shape[1], depth);
  return {root.data(), root.data() + root.size()};
}

std::vector<float> encode_level(const ActivationTensor& c, const EncoderConfig& cfg, int level, std::size_t workers) {
  const auto batch = encode_batch(std::span(&c, 1), cfg, level, workers);
  return batch.values;
}

FeatureMatrix encode_batch(std::span<const ActivationTensor> inputs, const EncoderConfig& cfg, int level,
                           std::size_t workers) {
  cfg.validate();
  for (const auto& c : inputs) require_input(c, cfg.channels, cfg.side);

  const std::size_t n = inputs.size();
  const std::size_t k = cfg.channels;
  FeatureMatrix out(n, cfg.feature_dim());
  if (n == 0) return out;

  if (cfg.tree_depth > 1) {
    parallel_for(cfg.num_rnns, workers, [&](std::size_t r) {
      const auto w = generate_weights(cfg, level, r);
      for (std::size_t i = 0; i < n; ++i) {
        const ColMatrix root = merge_tree(w, grid_nodes(inputs[i]), cfg.side, cfg.tree_depth);
        std::copy(root.data(), root.data() + k, out.row(i).begin() + static_cast<std::ptrdiff_t>(r * k));
      }
    });
    return out;
  }

  const auto dim = static_cast<Eigen::Index>(cfg.child_count() * k);
  const std::size_t blocks = (n + kBlockColumns - 1) / kBlockColumns;
  std::vector<ColMatrix> children(blocks, ColMatrix::Zero(dim, static_cast<Eigen::Index>(kBlockColumns)));
  for (std::size_t i = 0; i < n; ++i)
    flatten_into(inputs[i], children[i / kBlockColumns].col(static_cast<Eigen::Index>(i % kBlockColumns)).data());

  parallel_for(cfg.num_rnns, workers, [&](std::size_t r) {
    const auto w = generate_weights(cfg, level, r);
    for (std::size_t b = 0; b < blocks; ++b) {
      const ColMatrix parents = merge(w, children[b]);
      const std::size_t used = std::min(kBlockColumns, n - b * kBlockColumns);
      for (std::size_t j = 0; j < used; ++j) {
        auto dst = out.row(b * kBlockColumns + j).begin() + static_cast<std::ptrdiff_t>(r * k);
        const float* src = parents.col(static_cast<Eigen::Index>(j)).data();
        std::copy(src, src + k, dst);
      }
    }
  });
  return out;
}

}  // namespace randrnn
