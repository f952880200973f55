#include "randrnn/linear_svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "randrnn/error.hpp"
#include "randrnn/parallel.hpp"
#include "randrnn/tensor_io.hpp"

namespace randrnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint32_t kModelVersion = 1;

// Training rows in 64-byte aligned storage with the row stride padded to a
// whole number of cache lines, so every dot product sees the same alignment
// and therefore the same summation order on every run.
struct AlignedRows {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
  std::size_t dim = 0;

  template <typename T>
  static AlignedRows from(const Matrix<T>& x) {
    AlignedRows a;
    a.dim = x.cols;
    const std::size_t stride = (x.cols + 7) / 8 * 8;
    a.values.setZero(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(stride));
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j)
        a.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(x(i, j));
    return a;
  }
  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

BinarySolution solve_dual(const AlignedRows& x, std::span<const int> y, double C, double tol, std::size_t max_iter,
                          Seed seed, double bias_feature) {
  const std::size_t l = x.rows();
  if (y.size() != l) throw ShapeError("label count does not match sample count");
  const CounterRng rng(seed, StreamDomain::svm_order, 0, 0);
  std::uint64_t draws = 0;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.values.cols());
  double wb = 0.0;  // weight of the constant feature
  const double b2 = bias_feature * bias_feature;
  std::vector<double> alpha(l, 0.0);
  std::vector<double> qd(l);
  std::vector<std::size_t> index(l);
  for (std::size_t i = 0; i < l; ++i) {
    qd[i] = x.values.row(static_cast<Eigen::Index>(i)).squaredNorm() + b2;
    index[i] = i;
  }

  std::size_t active = l;
  double pg_max_old = kInf;
  double pg_min_old = -kInf;
  std::size_t iter = 0;
  while (iter < max_iter) {
    double pg_max_new = -kInf;
    double pg_min_new = kInf;
    for (std::size_t i = 0; i < active; ++i) {
      const std::size_t j = i + rng.below(draws++, active - i);
      std::swap(index[i], index[j]);
    }
    for (std::size_t s = 0; s < active; ++s) {
      const std::size_t i = index[s];
      const auto xi = x.values.row(static_cast<Eigen::Index>(i));
      const double yi = y[i];
      const double g = yi * (xi.dot(w) + wb * bias_feature) - 1.0;

      double pg = 0.0;
      if (alpha[i] == 0.0) {
        if (g > pg_max_old) {
          --active;
          std::swap(index[s], index[active]);
          --s;
          continue;
        }
        if (g < 0.0) pg = g;
      } else if (alpha[i] == C) {
        if (g < pg_min_old) {
          --active;
          std::swap(index[s], index[active]);
          --s;
          continue;
        }
        if (g > 0.0) pg = g;
      } else {
        pg = g;
      }
      pg_max_new = std::max(pg_max_new, pg);
      pg_min_new = std::min(pg_min_new, pg);

      if (std::fabs(pg) > 1e-12 && qd[i] > 0.0) {
        const double old = alpha[i];
        alpha[i] = std::min(std::max(alpha[i] - g / qd[i], 0.0), C);
        const double d = (alpha[i] - old) * yi;
        w.noalias() += d * xi.transpose();
        wb += d * bias_feature;
      }
    }
    ++iter;
    if (pg_max_new - pg_min_new <= tol) {
      if (active == l) break;
      active = l;
      pg_max_old = kInf;
      pg_min_old = -kInf;
      continue;
    }
    pg_max_old = pg_max_new <= 0.0 ? kInf : pg_max_new;
    pg_min_old = pg_min_new >= 0.0 ? -kInf : pg_min_new;
  }

  BinarySolution sol;
  sol.weights.assign(w.data(), w.data() + x.dim);
  sol.bias = wb * bias_feature;
  sol.alpha = std::move(alpha);
  sol.iterations = iter;
  return sol;
}

double objective_of(const AlignedRows& x, std::span<const int> y, std::span<const double> w, double bias, double C,
                    double bias_feature) {
  double reg = 0.0;
  for (const double v : w) reg += v * v;
  const double wb = bias_feature == 0.0 ? 0.0 : bias / bias_feature;
  reg += wb * wb;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double f = bias;
    for (std::size_t j = 0; j < x.dim; ++j) f += w[j] * x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    loss += std::max(0.0, 1.0 - y[i] * f);
  }
  return 0.5 * reg + C * loss;
}

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }
void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

template <typename T>
T take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw FormatError("model blob truncated");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

BinarySolution solve_binary_svm(const Matrix<double>& x, std::span<const int> y, double C, double tol,
                                std::size_t max_iter, Seed seed, double bias_feature) {
  const auto rows = AlignedRows::from(x);
  auto sol = solve_dual(rows, y, C, tol, max_iter, seed, bias_feature);
  sol.objective = objective_of(rows, y, sol.weights, sol.bias, C, bias_feature);
  return sol;
}

double svm_primal_objective(const Matrix<double>& x, std::span<const int> y, std::span<const double> w, double bias,
                            double C, double bias_feature) {
  return objective_of(AlignedRows::from(x), y, w, bias, C, bias_feature);
}

LinearModel train_ovr(const FeatureMatrix& x, std::span<const int> labels, const SvmConfig& cfg, std::size_t workers) {
  if (labels.size() != x.rows) throw ShapeError("label count does not match sample count");
  if (cfg.C <= 0.0 || cfg.tol <= 0.0 || cfg.max_iter == 0) throw ConfigError("SVM needs C > 0, tol > 0, max_iter > 0");
  if (std::any_of(x.values.begin(), x.values.end(), [](float v) { return !std::isfinite(v); }))
    throw ValidationError("non-finite feature value in training data");

  std::set<int> present(labels.begin(), labels.end());
  if (!present.empty() && *present.begin() < 0) throw ValidationError("negative class label");
  const std::size_t n_classes =
      cfg.num_classes != 0 ? cfg.num_classes
                           : (present.empty() ? 0 : static_cast<std::size_t>(*present.rbegin()) + 1);
  if (!present.empty() && static_cast<std::size_t>(*present.rbegin()) >= n_classes)
    throw ValidationError(fmt::format("label {} out of range for {} classes", *present.rbegin(), n_classes));
  std::vector<int> absent;
  for (std::size_t c = 0; c < n_classes; ++c)
    if (!present.contains(static_cast<int>(c))) absent.push_back(static_cast<int>(c));
  if (!absent.empty()) throw ValidationError(fmt::format("classes absent from training labels: {}", fmt::join(absent, ", ")));
  if (n_classes < 2) throw ValidationError("need at least two classes");
  if (x.rows < n_classes) throw ValidationError("fewer samples than classes");

  const auto rows = AlignedRows::from(x);
  LinearModel m;
  m.num_classes = n_classes;
  m.dim = x.cols;
  m.C = cfg.C;
  m.weights.assign(n_classes * x.cols, 0.0f);
  m.biases.assign(n_classes, 0.0f);
  m.info.resize(n_classes);

  parallel_for(n_classes, workers, [&](std::size_t c) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = labels[i] == static_cast<int>(c) ? 1 : -1;
    const Seed class_seed = CounterRng(cfg.seed, StreamDomain::svm_order, 1, c).bits(0);
    const auto sol = solve_dual(rows, y, cfg.C, cfg.tol, cfg.max_iter, class_seed, cfg.bias_feature);
    std::vector<double> stored(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
      m.weights[c * x.cols + j] = static_cast<float>(sol.weights[j]);
      stored[j] = m.weights[c * x.cols + j];
    }
    m.biases[c] = static_cast<float>(sol.bias);
    m.info[c].iterations = static_cast<std::uint32_t>(sol.iterations);
    m.info[c].objective = objective_of(rows, y, stored, m.biases[c], cfg.C, cfg.bias_feature);
  });
  return m;
}

ScoreMatrix decision_scores(const LinearModel& m, const FeatureMatrix& x) {
  if (x.cols != m.dim) throw ShapeError(fmt::format("feature dim {} does not match model dim {}", x.cols, m.dim));
  ScoreMatrix s(x.rows, m.num_classes);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      const auto wc = m.weights_of(c);
      double acc = m.biases[c];
      for (std::size_t j = 0; j < m.dim; ++j) acc += static_cast<double>(wc[j]) * static_cast<double>(xi[j]);
      s(i, c) = acc;
    }
  }
  return s;
}

std::vector<int> predict(const ScoreMatrix& s) {
  std::vector<int> out(s.rows, 0);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const auto r = s.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());  // first maximum
  }
  return out;
}

double topk_accuracy(const ScoreMatrix& s, std::span<const int> labels, std::size_t k) {
  if (labels.size() != s.rows) throw ShapeError("label count does not match score rows");
  if (k < 1 || k > s.cols) throw ValidationError(fmt::format("top-k needs 1 <= k <= {}, got {}", s.cols, k));
  if (s.rows == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= s.cols) throw ValidationError(fmt::format("label {} out of range", labels[i]));
    const auto r = s.row(i);
    std::size_t rank = 0;
    for (std::size_t c = 0; c < s.cols; ++c)
      if (r[c] > r[y] || (r[c] == r[y] && c < y)) ++rank;
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(s.rows);
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t num_classes) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and truth lengths differ");
  ConfusionMatrix m(num_classes, num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= num_classes ||
        static_cast<std::size_t>(predicted[i]) >= num_classes)
      throw ValidationError(fmt::format("label out of range at sample {}: true {}, predicted {}", i, truth[i],
                                        predicted[i]));
    ++m(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
  }
  return m;
}

std::vector<double> per_category_accuracy(const ConfusionMatrix& m) {
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::int64_t total = 0;
    for (std::size_t j = 0; j < m.cols; ++j) total += m(i, j);
    out[i] = total == 0 ? 0.0 : static_cast<double>(m(i, i)) / static_cast<double>(total);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and truth lengths differ");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::string serialize_model(const LinearModel& m) {
  if (m.weights.size() != m.num_classes * m.dim || m.biases.size() != m.num_classes || m.info.size() != m.num_classes)
    throw ValidationError("inconsistent linear model");
  std::string out = "LSVM";
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<std::uint32_t>(m.num_classes));
  put_u32(out, static_cast<std::uint32_t>(m.dim));
  put_f64(out, m.C);
  for (const auto& info : m.info) {
    put_u32(out, info.iterations);
    put_f64(out, info.objective);
  }
  out.append(reinterpret_cast<const char*>(m.weights.data()), m.weights.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(m.biases.data()), m.biases.size() * sizeof(float));
  return out;
}

LinearModel deserialize_model(std::string_view bytes) {
  if (bytes.substr(0, 4) != "LSVM") throw FormatError("not a linear model blob (bad magic)");
  bytes.remove_prefix(4);
  const auto version = take<std::uint32_t>(bytes);
  if (version != kModelVersion) throw FormatError(fmt::format("unsupported model version {}", version));
  LinearModel m;
  m.num_classes = take<std::uint32_t>(bytes);
  m.dim = take<std::uint32_t>(bytes);
  m.C = take<double>(bytes);
  m.info.resize(m.num_classes);
  for (auto& info : m.info) {
    info.iterations = take<std::uint32_t>(bytes);
    info.objective = take<double>(bytes);
  }
  const std::size_t expected = (m.num_classes * m.dim + m.num_classes) * sizeof(float);
  if (bytes.size() != expected) throw FormatError("model blob payload has the wrong size");
  m.weights.resize(m.num_classes * m.dim);
  m.biases.resize(m.num_classes);
  std::memcpy(m.weights.data(), bytes.data(), m.weights.size() * sizeof(float));
  std::memcpy(m.biases.data(), bytes.data() + m.weights.size() * sizeof(float), m.biases.size() * sizeof(float));
  return m;
}

void save_model(const LinearModel& m, const std::filesystem::path& path) { write_file_bytes(path, serialize_model(m)); }

LinearModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

void write_scores_csv(const std::filesystem::path& path, std::span<const std::string> sample_ids,
                      std::span<const int> labels, const ScoreMatrix& s) {
  if (sample_ids.size() != s.rows || labels.size() != s.rows) throw ShapeError("score table columns disagree");
  std::string out = "sample_id,label";
  for (std::size_t c = 0; c < s.cols; ++c) out += fmt::format(",s{}", c);
  out += '\n';
  for (std::size_t i = 0; i < s.rows; ++i) {
    out += fmt::format("{},{}", sample_ids[i], labels[i]);
    for (const double v : s.row(i)) out += fmt::format(",{:.17g}", v);
    out += '\n';
  }
  write_file_bytes(path, out);
}

ScoreTable read_scores_csv(const std::filesystem::path& path) {
  const auto text = read_file_bytes(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty score file", path.string()));
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
    throw FormatError(fmt::format("{}: bad score header", path.string()));
  ScoreTable t;
  t.scores.cols = header.size() - 2;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) throw FormatError(fmt::format("{}: ragged row '{}'", path.string(), line));
    t.sample_ids.emplace_back(fields[0]);
    int label = 0;
    std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), label);
    t.labels.push_back(label);
    for (std::size_t c = 2; c < fields.size(); ++c) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
      if (ec != std::errc()) throw FormatError(fmt::format("{}: bad score '{}'", path.string(), fields[c]));
      t.scores.values.push_back(v);
    }
    ++t.scores.rows;
  }
  return t;
}

}  // namespace randrnn
