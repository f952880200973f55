#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randrnn/config.hpp"
#include "randrnn/report.hpp"

namespace randrnn {

/// Encodes every configured level for every seed, trains one-vs-rest SVMs on
/// the train role of each split, scores the test role, applies the fusion
/// plan and collects accuracies. Identical configs give identical reports
/// regardless of `cfg.workers`.
RunReport run_experiment(const RunConfig& cfg);

/// `n` master seeds derived from `base`.
std::vector<Seed> reseed_seeds(Seed base, std::size_t n);

/// Reruns the experiment with `n_runs` master seeds (derived from the first
/// configured seed unless `forced_seeds` is given) on fixed data.
RunReport reseed_stability(const RunConfig& cfg, std::size_t n_runs,
                           const std::optional<std::vector<Seed>>& forced_seeds = std::nullopt);

struct AblationRow {
  PoolMethod method = PoolMethod::random;
  std::string modality;
  std::string level;
  MeanStd accuracy;
};

/// Runs the identical pipeline with random, max and average pooling. RNN
/// weights depend only on the seeds, so all three share them.
std::vector<AblationRow> pooling_ablation(const RunConfig& cfg);
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);

/// Keeps only `levels` in the level list and the fusion plan.
RunConfig restrict_levels(const RunConfig& cfg, std::span<const int> levels);
/// Keeps only the named splits; throws ConfigError on an unknown id.
RunConfig restrict_splits(const RunConfig& cfg, std::span<const std::string> ids);

/// Staged execution for the CLI. Each stage reads the previous stage's files
/// under `cfg.output_dir`:
///   features/seed-<s>/<modality>-L<l>/<sample>.npy
///   models/<split>/seed-<s>/<modality>-<L<l>|fused>.lsvm
///   scores/<split>/seed-<s>/<modality>-<L<l>|fused>.csv
///   fused/<split>/seed-<s>/rgbd.csv
void encode_stage(const RunConfig& cfg);
void train_stage(const RunConfig& cfg);
RunReport evaluate_stage(const RunConfig& cfg);
RunReport fuse_stage(const RunConfig& cfg);

/// Writes the generated weights for audit, per seed and level:
///   weights/seed-<s>/L<l>-rnn.npy     (num_rnns x K x child_count*K)
///   weights/seed-<s>/L<l>-pool<i>.npy (target maps x 1 x |A|), random pooling only
void export_weights(const RunConfig& cfg);

}  // namespace randrnn
