#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "randrnn/matrix.hpp"
#include "randrnn/rng.hpp"

namespace randrnn {

struct SvmConfig {
  double C = 1.0;
  double tol = 1e-4;
  std::size_t max_iter = 1000;
  Seed seed = 0;
  /// Value of the constant feature appended to every sample; its weight is the bias.
  double bias_feature = 1.0;
  /// Expected class count; 0 takes it from the largest label.
  std::size_t num_classes = 0;
};

/// Result of one binary L1-loss SVM solve.
struct BinarySolution {
  std::vector<double> weights;  // feature weights
  double bias = 0.0;            // weight of the constant feature times its value
  std::vector<double> alpha;    // dual variables, 0 <= alpha_i <= C
  std::size_t iterations = 0;
  double objective = 0.0;       // primal objective at the solution
};

/// Minimises 0.5*(|w|^2 + b^2) + C * sum_i max(0, 1 - y_i (w.x_i + b)) by dual
/// coordinate descent with random coordinate order and shrinking.
/// Labels are +1/-1.
BinarySolution solve_binary_svm(const Matrix<double>& x, std::span<const int> y, double C, double tol,
                                std::size_t max_iter, Seed seed, double bias_feature = 1.0);

/// Primal objective of the augmented-bias L1-loss SVM.
double svm_primal_objective(const Matrix<double>& x, std::span<const int> y, std::span<const double> w, double bias,
                            double C, double bias_feature = 1.0);

struct BinaryTrainInfo {
  std::uint32_t iterations = 0;
  double objective = 0.0;

  friend bool operator==(const BinaryTrainInfo&, const BinaryTrainInfo&) = default;
};

/// One-vs-rest linear classifier over N classes.
struct LinearModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<float> weights;  // num_classes x dim, row-major
  std::vector<float> biases;
  double C = 1.0;
  std::vector<BinaryTrainInfo> info;  // one per class

  std::span<const float> weights_of(std::size_t c) const { return {weights.data() + c * dim, dim}; }
  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

/// Trains N binary one-vs-rest problems; class c is trained with seed
/// stream (cfg.seed, c), so the result does not depend on `workers`.
LinearModel train_ovr(const FeatureMatrix& x, std::span<const int> labels, const SvmConfig& cfg,
                      std::size_t workers = 1);

/// S[n][c] = w_c . x_n + b_c
ScoreMatrix decision_scores(const LinearModel& m, const FeatureMatrix& x);

/// Row-wise argmax; ties go to the smallest class index.
std::vector<int> predict(const ScoreMatrix& s);

/// Fraction of rows whose true class ranks within the k largest scores
/// (equal scores rank by class index).
double topk_accuracy(const ScoreMatrix& s, std::span<const int> labels, std::size_t k);

using ConfusionMatrix = Matrix<std::int64_t>;

/// M[i][j] = number of samples of true class i predicted as j.
ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t num_classes);
std::vector<double> per_category_accuracy(const ConfusionMatrix& m);
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Binary model blob: "LSVM", u32 version, u32 N, u32 dim, f64 C, then per
/// class (u32 iterations, f64 objective), N*dim f32 weights, N f32 biases.
/// All little-endian.
std::string serialize_model(const LinearModel& m);
LinearModel deserialize_model(std::string_view bytes);
void save_model(const LinearModel& m, const std::filesystem::path& path);
LinearModel load_model(const std::filesystem::path& path);

/// CSV with header `sample_id,label,s0,...,s{N-1}`; values round-trip exactly.
void write_scores_csv(const std::filesystem::path& path, std::span<const std::string> sample_ids,
                      std::span<const int> labels, const ScoreMatrix& s);

struct ScoreTable {
  std::vector<std::string> sample_ids;
  std::vector<int> labels;
  ScoreMatrix scores;
};
ScoreTable read_scores_csv(const std::filesystem::path& path);

}  // namespace randrnn
