#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randrnn/linear_svm.hpp"
#include "randrnn/rng.hpp"

namespace randrnn {

/// Accuracy of one (split, seed, modality, level) evaluation.
struct RunRow {
  std::string split;
  Seed seed = 0;
  std::string modality;  // rgb, depth or rgbd
  std::string level;     // L1..L7, fused, or the modality strategy for rgbd
  std::size_t num_test = 0;
  double accuracy = 0.0;
  /// Aligned with RunReport::topk; NaN where k exceeds the class count.
  std::vector<double> topk;
};

/// Population mean and standard deviation; `stddev` is empty below two values.
struct MeanStd {
  std::size_t count = 0;
  double mean = 0.0;
  std::optional<double> stddev;
};

MeanStd mean_std(std::span<const double> values);

/// Percentages to one decimal, e.g. "92.3 ± 1.0", or "92.3" without a std.
std::string format_percent(const MeanStd& m);

struct SummaryRow {
  std::string modality;
  std::string level;
  MeanStd over_splits;  // of the per-split accuracy averaged over seeds
};

struct ReseedRow {
  std::string split;
  std::string modality;
  std::string level;
  MeanStd over_seeds;
};

struct TopkRow {
  std::string modality;
  std::string level;
  std::size_t k = 1;
  double mean = 0.0;  // over every split and seed
};

struct RunReport {
  std::vector<std::size_t> topk;
  std::vector<RunRow> runs;
  /// Summed over splits and seeds for the headline decision.
  std::optional<ConfusionMatrix> confusion;
  std::string confusion_source;

  /// Groups keep the order in which they first appear in `runs`.
  std::vector<SummaryRow> summary() const;
  std::vector<ReseedRow> reseed() const;
  std::vector<TopkRow> topk_table() const;
};

/// Writes runs.csv, summary.csv, reseed.csv, topk.csv, summary.txt and, when
/// present, confusion.csv and per_category.csv. Output has no timestamps, so
/// identical reports give identical files.
void write_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace randrnn
