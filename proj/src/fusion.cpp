#include "randrnn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <fmt/format.h>

#include "randrnn/error.hpp"
#include "randrnn/linear_svm.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

namespace {

double squared_norm(std::span<const double> row) {
  double acc = 0.0;
  for (const double v : row) acc += v * v;
  return acc;
}

}  // namespace

std::vector<float> concat_levels(std::span<const std::span<const float>> parts) {
  std::vector<float> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

FeatureMatrix concat_levels(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows != rows) throw ShapeError(fmt::format("cannot concatenate {} rows with {} rows", rows, p.rows));
    cols += p.cols;
  }
  FeatureMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return out;
}

ScoreMatrix average_vote(std::span<const ScoreMatrix> scores) {
  if (scores.empty()) throw ShapeError("average vote over no score matrices");
  const auto& first = scores.front();
  for (const auto& s : scores)
    if (s.rows != first.rows || s.cols != first.cols)
      throw ShapeError(fmt::format("score shapes differ: {}x{} vs {}x{}", first.rows, first.cols, s.rows, s.cols));
  ScoreMatrix out(first.rows, first.cols, 0.0);
  for (const auto& s : scores)
    for (std::size_t i = 0; i < s.values.size(); ++i) out.values[i] += s.values[i];
  const auto n = static_cast<double>(scores.size());
  for (auto& v : out.values) v /= n;
  return out;
}

ModalityWeights weights_from_magnitudes(double m_rgb, double m_depth) {
  ModalityWeights w;
  w.m_rgb = m_rgb;
  w.m_depth = m_depth;
  const double top = std::max(m_rgb, m_depth);
  const double e_rgb = std::exp(m_rgb - top);
  const double e_depth = std::exp(m_depth - top);
  const double total = e_rgb + e_depth;
  w.w_rgb = std::sqrt(e_rgb / total);
  w.w_depth = std::sqrt(e_depth / total);
  return w;
}

ModalityWeights modality_weights(std::span<const double> rgb_row, std::span<const double> depth_row) {
  if (rgb_row.size() != depth_row.size())
    throw ShapeError(fmt::format("score rows have {} and {} classes", rgb_row.size(), depth_row.size()));
  const double n_rgb = squared_norm(rgb_row);
  const double n_depth = squared_norm(depth_row);
  const double top = std::max(n_rgb, n_depth);
  if (top == 0.0) {
    auto w = weights_from_magnitudes(1.0, 1.0);
    w.degenerate = true;
    return w;
  }
  return weights_from_magnitudes(n_rgb / top, n_depth / top);
}

std::string_view to_string(WeightNormalization n) noexcept {
  return n == WeightNormalization::per_sample ? "per_sample" : "run_level";
}

WeightNormalization parse_weight_normalization(std::string_view text) {
  if (text == "per_sample") return WeightNormalization::per_sample;
  if (text == "run_level") return WeightNormalization::run_level;
  throw ConfigError(fmt::format("unknown weight normalization '{}'", text));
}

WeightedVote weighted_vote(const ScoreMatrix& rgb, const ScoreMatrix& depth, WeightNormalization norm) {
  if (rgb.rows != depth.rows || rgb.cols != depth.cols)
    throw ShapeError(fmt::format("modality scores differ in shape: {}x{} vs {}x{}", rgb.rows, rgb.cols, depth.rows,
                                 depth.cols));
  WeightedVote vote;
  vote.weights.reserve(rgb.rows);

  double run_top = 0.0;
  if (norm == WeightNormalization::run_level)
    for (std::size_t i = 0; i < rgb.rows; ++i)
      run_top = std::max({run_top, squared_norm(rgb.row(i)), squared_norm(depth.row(i))});

  vote.blended = ScoreMatrix(rgb.rows, rgb.cols);
  for (std::size_t i = 0; i < rgb.rows; ++i) {
    ModalityWeights w;
    if (norm == WeightNormalization::per_sample) {
      w = modality_weights(rgb.row(i), depth.row(i));
    } else if (run_top == 0.0) {
      w = weights_from_magnitudes(1.0, 1.0);
      w.degenerate = true;
    } else {
      w = weights_from_magnitudes(squared_norm(rgb.row(i)) / run_top, squared_norm(depth.row(i)) / run_top);
    }
    vote.degenerate_count += w.degenerate;
    for (std::size_t c = 0; c < rgb.cols; ++c) vote.blended(i, c) = w.w_rgb * rgb(i, c) + w.w_depth * depth(i, c);
    vote.weights.push_back(w);
  }
  vote.labels = predict(vote.blended);
  if (vote.degenerate_count > 0)
    std::cerr << "warning: " << vote.degenerate_count
              << " sample(s) had all-zero scores in both modalities; equal modality weights used\n";
  return vote;
}

void write_fused_csv(const std::filesystem::path& path, std::span<const std::string> sample_ids,
                     const WeightedVote& vote) {
  if (sample_ids.size() != vote.labels.size()) throw ShapeError("sample id count does not match predictions");
  std::string out = "sample_id,m_rgb,m_depth,w_rgb,w_depth,pred\n";
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    const auto& w = vote.weights[i];
    out += fmt::format("{},{:.9f},{:.9f},{:.9f},{:.9f},{}\n", sample_ids[i], w.m_rgb, w.m_depth, w.w_rgb, w.w_depth,
                       vote.labels[i]);
  }
  write_file_bytes(path, out);
}

}  // namespace randrnn
