#include "randrnn/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "randrnn/error.hpp"
#include "randrnn/feature_store.hpp"
#include "randrnn/fusion.hpp"

namespace randrnn {

namespace {

constexpr std::array<Modality, 2> kModalities{Modality::rgb, Modality::depth};
constexpr std::string_view kFusedTag = "fused";

std::string level_tag(int level) { return fmt::format("L{}", level); }

struct ModelId {
  std::string split;
  std::size_t split_index = 0;
  Seed seed = 0;
  Modality modality = Modality::rgb;
  std::string tag;  // L<l> or fused
  int code = 0;     // level number, 0 for the fused model
  std::size_t num_classes = 0;
};

std::filesystem::path seed_dir(const std::filesystem::path& root, const std::string& split, Seed seed) {
  return root / split / fmt::format("seed-{}", seed);
}

std::filesystem::path model_path(const RunConfig& cfg, const ModelId& id) {
  return seed_dir(cfg.output_dir / "models", id.split, id.seed) / fmt::format("{}-{}.lsvm", to_string(id.modality), id.tag);
}

std::filesystem::path scores_path(const RunConfig& cfg, const std::string& split, Seed seed, Modality m,
                                  std::string_view tag) {
  return seed_dir(cfg.output_dir / "scores", split, seed) / fmt::format("{}-{}.csv", to_string(m), tag);
}

std::filesystem::path features_dir(const RunConfig& cfg, Seed seed, Modality m, int level) {
  return cfg.output_dir / "features" / fmt::format("seed-{}", seed) / fmt::format("{}-{}", to_string(m), level_tag(level));
}

SvmConfig svm_for(const RunConfig& cfg, const ModelId& id) {
  SvmConfig s = cfg.svm;
  s.num_classes = id.num_classes;
  const auto stream = (static_cast<std::uint64_t>(id.modality) << 8) | static_cast<std::uint64_t>(id.code);
  s.seed = CounterRng(id.seed, StreamDomain::svm_order, id.split_index, stream).bits(0);
  return s;
}

struct SplitRoles {
  std::string id;
  std::size_t index = 0;
  std::map<Modality, std::vector<std::size_t>> train;
  std::map<Modality, std::vector<std::size_t>> test;
};

std::vector<SplitRoles> build_splits(const RunConfig& cfg, const DatasetManifest& manifest) {
  std::vector<SplitRoles> out;
  for (std::size_t i = 0; i < cfg.splits.size(); ++i) {
    const auto& def = cfg.splits[i];
    DatasetManifest split;
    try {
      split = def.apply(manifest);
    } catch (...) {
      rethrow_with_context(fmt::format("split '{}'", def.id));
    }
    SplitRoles roles;
    roles.id = def.id;
    roles.index = i;
    for (const Modality m : kModalities) {
      const auto recs = split.select(m);
      for (std::size_t j = 0; j < recs.size(); ++j)
        (recs[j]->split_role == SplitRole::train ? roles.train : roles.test)[m].push_back(j);
    }
    out.push_back(std::move(roles));
  }
  return out;
}

std::vector<int> labels_at(const std::vector<const SampleRecord*>& recs, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(recs[i]->category);
  return out;
}

std::vector<std::string> ids_at(const std::vector<const SampleRecord*>& recs, std::span<const std::size_t> idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(recs[i]->sample_id);
  return out;
}

RunRow make_row(const std::string& split, Seed seed, std::string_view modality, std::string_view level,
                const ScoreMatrix& s, std::span<const int> predicted, std::span<const int> labels,
                std::span<const std::size_t> ks) {
  RunRow row;
  row.split = split;
  row.seed = seed;
  row.modality = std::string(modality);
  row.level = std::string(level);
  row.num_test = labels.size();
  row.accuracy = accuracy(predicted, labels);
  for (const auto k : ks)
    row.topk.push_back(k <= s.cols ? topk_accuracy(s, labels, k) : std::numeric_limits<double>::quiet_NaN());
  return row;
}

using ModelFn = std::function<LinearModel(const ModelId&, const FeatureMatrix&, std::span<const int>)>;
using ScoreSink = std::function<void(const ModelId&, const ScoreTable&)>;

struct FusedDecision {
  std::vector<std::string> ids;
  std::vector<int> labels;
  WeightedVote vote;
};

// Pairs RGB and depth test rows by sample id (RGB order) and applies the
// modality strategy.
FusedDecision fuse_modalities(const ScoreTable& rgb, const ScoreTable& depth, const FusionPlan& plan) {
  std::map<std::string_view, std::size_t> depth_row;
  for (std::size_t i = 0; i < depth.sample_ids.size(); ++i) depth_row.emplace(depth.sample_ids[i], i);
  std::vector<std::string> missing;
  ScoreMatrix aligned(rgb.scores.rows, depth.scores.cols);
  for (std::size_t i = 0; i < rgb.sample_ids.size(); ++i) {
    const auto it = depth_row.find(rgb.sample_ids[i]);
    if (it == depth_row.end()) {
      missing.push_back(rgb.sample_ids[i]);
      continue;
    }
    if (depth.labels[it->second] != rgb.labels[i])
      throw ValidationError(fmt::format("sample '{}' has category {} as rgb but {} as depth", rgb.sample_ids[i],
                                        rgb.labels[i], depth.labels[it->second]));
    std::copy(depth.scores.row(it->second).begin(), depth.scores.row(it->second).end(), aligned.row(i).begin());
  }
  if (!missing.empty() || depth.sample_ids.size() != rgb.sample_ids.size()) {
    if (missing.size() > 10) missing.resize(10);
    throw ValidationError(fmt::format("rgb and depth test sets differ ({} vs {} samples); unmatched rgb ids: {}",
                                      rgb.sample_ids.size(), depth.sample_ids.size(), fmt::join(missing, ", ")));
  }

  FusedDecision d;
  d.ids = rgb.sample_ids;
  d.labels = rgb.labels;
  if (plan.modality_strategy == ModalityStrategy::weighted_vote) {
    d.vote = weighted_vote(rgb.scores, aligned, plan.weight_normalization);
  } else {
    const std::array<ScoreMatrix, 2> both{rgb.scores, aligned};
    d.vote.blended = average_vote(both);
    d.vote.labels = predict(d.vote.blended);
    ModalityWeights half;
    half.w_rgb = 0.5;
    half.w_depth = 0.5;
    d.vote.weights.assign(rgb.scores.rows, half);
  }
  return d;
}

struct CoreOptions {
  ModelFn model;
  ScoreSink scores;  // may be empty
  bool fuse_modalities = true;
};

// Evaluates one modality for one (seed, split): per-level rows plus the
// fused row; returns the fused test scores when the plan has levels for it.
std::optional<ScoreTable> evaluate_modality(const RunConfig& cfg, FeatureStore& store, const SplitRoles& split,
                                            Seed seed, Modality m, std::size_t num_classes, const CoreOptions& opt,
                                            RunReport& report) {
  const auto& recs = store.records(m);
  const auto& train = split.train.count(m) ? split.train.at(m) : std::vector<std::size_t>{};
  const auto& test = split.test.count(m) ? split.test.at(m) : std::vector<std::size_t>{};
  if (train.empty() || test.empty())
    throw ValidationError(fmt::format("split '{}' has {} train and {} test {} samples; both must be non-empty",
                                      split.id, train.size(), test.size(), to_string(m)));
  const auto y_train = labels_at(recs, train);
  ScoreTable table;
  table.sample_ids = ids_at(recs, test);
  table.labels = labels_at(recs, test);

  auto fit = [&](const ModelId& id, const FeatureMatrix& x_train) {
    LinearModel model;
    try {
      model = opt.model(id, x_train, y_train);
    } catch (...) {
      rethrow_with_context(fmt::format("train {} {} on split '{}' seed {}", to_string(m), id.tag, id.split, id.seed));
    }
    if (model.num_classes != num_classes || model.dim != x_train.cols)
      throw ValidationError(fmt::format("{} {} model has {} classes x {} features, expected {} x {}", to_string(m),
                                        id.tag, model.num_classes, model.dim, num_classes, x_train.cols));
    return model;
  };
  auto record = [&](const ModelId& id, ScoreMatrix scores) {
    ScoreTable t{table.sample_ids, table.labels, std::move(scores)};
    if (opt.scores) opt.scores(id, t);
    report.runs.push_back(make_row(split.id, seed, to_string(m), id.tag, t.scores, predict(t.scores), t.labels,
                                   report.topk));
    return t;
  };

  const auto& fusion_levels = cfg.fusion.levels_of(m);
  std::vector<ScoreMatrix> fusion_scores;
  for (const int level : cfg.level_ids()) {
    const auto& f = store.features({m, level, seed, cfg.pool_method});
    const ModelId id{split.id, split.index, seed, m, level_tag(level), level, num_classes};
    const auto model = fit(id, take_rows(f, std::span<const std::size_t>(train)));
    auto t = record(id, decision_scores(model, take_rows(f, std::span<const std::size_t>(test))));
    if (std::find(fusion_levels.begin(), fusion_levels.end(), level) != fusion_levels.end())
      fusion_scores.push_back(std::move(t.scores));
  }
  if (fusion_levels.empty()) return std::nullopt;

  const ModelId id{split.id, split.index, seed, m, std::string(kFusedTag), 0, num_classes};
  if (cfg.fusion.level_strategy == LevelStrategy::average_vote) {
    // fusion_scores follow sorted level order; averaging is order-free.
    return record(id, average_vote(fusion_scores));
  }
  std::vector<FeatureMatrix> train_parts;
  std::vector<FeatureMatrix> test_parts;
  for (const int level : fusion_levels) {
    const auto& f = store.features({m, level, seed, cfg.pool_method});
    train_parts.push_back(take_rows(f, std::span<const std::size_t>(train)));
    test_parts.push_back(take_rows(f, std::span<const std::size_t>(test)));
  }
  const auto x_train = concat_levels(train_parts);
  const auto model = fit(id, x_train);
  return record(id, decision_scores(model, concat_levels(test_parts)));
}

void add_confusion(RunReport& report, std::span<const int> predicted, std::span<const int> truth,
                   std::size_t num_classes, std::string source) {
  const auto c = confusion_matrix(predicted, truth, num_classes);
  if (!report.confusion) {
    report.confusion = c;
    report.confusion_source = std::move(source);
    return;
  }
  for (std::size_t i = 0; i < c.values.size(); ++i) report.confusion->values[i] += c.values[i];
}

std::filesystem::path fused_path(const RunConfig& cfg, const std::string& split, Seed seed) {
  return seed_dir(cfg.output_dir / "fused", split, seed) / "rgbd.csv";
}

void add_fused_row(const RunConfig& cfg, const std::string& split, Seed seed, const FusedDecision& d,
                   RunReport& report) {
  write_fused_csv(fused_path(cfg, split, seed), d.ids, d.vote);
  report.runs.push_back(make_row(split, seed, "rgbd", to_string(cfg.fusion.modality_strategy), d.vote.blended,
                                 d.vote.labels, d.labels, report.topk));
}

RunReport run_core(const RunConfig& cfg, const CoreOptions& opt) {
  cfg.validate();
  const auto manifest = load_manifest(cfg.manifest);
  const auto num_classes = static_cast<std::size_t>(manifest.num_categories());
  const auto splits = build_splits(cfg, manifest);
  FeatureStore store(cfg, manifest, cfg.workers);

  RunReport report;
  report.topk = cfg.report.topk;
  for (const Seed seed : cfg.seeds) {
    store.clear();
    if (cfg.write_features)
      for (const Modality m : kModalities)
        if (!store.records(m).empty())
          for (const int level : cfg.level_ids())
            write_feature_files(features_dir(cfg, seed, m, level), store.records(m),
                                store.features({m, level, seed, cfg.pool_method}));

    for (const auto& split : splits) {
      std::map<Modality, ScoreTable> fused;
      for (const Modality m : kModalities) {
        if (store.records(m).empty()) continue;
        if (auto t = evaluate_modality(cfg, store, split, seed, m, num_classes, opt, report)) fused[m] = std::move(*t);
      }
      if (!cfg.report.confusion_matrix && !opt.fuse_modalities) continue;

      if (opt.fuse_modalities && fused.size() == 2) {
        const auto d = fuse_modalities(fused.at(Modality::rgb), fused.at(Modality::depth), cfg.fusion);
        add_fused_row(cfg, split.id, seed, d, report);
        if (cfg.report.confusion_matrix)
          add_confusion(report, d.vote.labels, d.labels, num_classes,
                        fmt::format("rgbd {}", to_string(cfg.fusion.modality_strategy)));
      } else if (cfg.report.confusion_matrix && !fused.empty()) {
        const auto& [m, t] = *fused.begin();
        add_confusion(report, predict(t.scores), t.labels, num_classes, fmt::format("{} fused", to_string(m)));
      }
    }
  }
  return report;
}

ModelFn training_model_fn(const RunConfig& cfg, bool save) {
  return [&cfg, save](const ModelId& id, const FeatureMatrix& x, std::span<const int> y) {
    auto model = train_ovr(x, y, svm_for(cfg, id), cfg.workers);
    if (save) save_model(model, model_path(cfg, id));
    return model;
  };
}

}  // namespace

RunReport run_experiment(const RunConfig& cfg) { return run_core(cfg, {training_model_fn(cfg, false), {}, true}); }

std::vector<Seed> reseed_seeds(Seed base, std::size_t n) {
  const CounterRng rng(base, StreamDomain::reseed, 0, 0);
  std::vector<Seed> seeds;
  for (std::size_t i = 0; i < n; ++i) seeds.push_back(rng.bits(i));
  return seeds;
}

RunReport reseed_stability(const RunConfig& cfg, std::size_t n_runs, const std::optional<std::vector<Seed>>& forced_seeds) {
  if (n_runs < 2) throw ConfigError(fmt::format("reseed stability needs at least 2 runs, got {}", n_runs));
  if (forced_seeds && forced_seeds->size() != n_runs)
    throw ConfigError(fmt::format("{} forced seeds given for {} runs", forced_seeds->size(), n_runs));
  RunConfig c = cfg;
  c.seeds = forced_seeds ? *forced_seeds : reseed_seeds(cfg.seeds.front(), n_runs);
  return run_experiment(c);
}

std::vector<AblationRow> pooling_ablation(const RunConfig& cfg) {
  const bool pooled = std::any_of(cfg.levels.begin(), cfg.levels.end(),
                                  [](const LevelSpec& l) { return l.preprocess != Preprocess::reshape; });
  if (!pooled) throw ConfigError("pooling ablation needs at least one level that is pooled, all are reshape-only");
  std::vector<AblationRow> rows;
  for (const PoolMethod method : {PoolMethod::random, PoolMethod::max, PoolMethod::average}) {
    RunConfig c = cfg;
    c.pool_method = method;
    c.write_features = false;
    c.report.confusion_matrix = false;
    for (const auto& s : run_experiment(c).summary()) rows.push_back({method, s.modality, s.level, s.over_splits});
  }
  return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::string out = "method,modality,level,num_splits,mean,std\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{:.10f},{}\n", to_string(r.method), r.modality, r.level, r.accuracy.count,
                       r.accuracy.mean, r.accuracy.stddev ? fmt::format("{:.10f}", *r.accuracy.stddev) : "");
  write_file_bytes(path, out);
}

RunConfig restrict_levels(const RunConfig& cfg, std::span<const int> levels) {
  RunConfig c = cfg;
  for (const int l : levels)
    if (!cfg.has_level(l)) throw ConfigError(fmt::format("level {} is not configured", l));
  auto keep = [&](int l) { return std::find(levels.begin(), levels.end(), l) != levels.end(); };
  std::erase_if(c.levels, [&](const LevelSpec& s) { return !keep(s.level); });
  std::erase_if(c.fusion.rgb_levels, [&](int l) { return !keep(l); });
  std::erase_if(c.fusion.depth_levels, [&](int l) { return !keep(l); });
  const auto ids = c.level_ids();
  if (c.fusion.rgb_levels.empty()) c.fusion.rgb_levels = default_fusion_levels(Modality::rgb, ids);
  if (c.fusion.depth_levels.empty()) c.fusion.depth_levels = default_fusion_levels(Modality::depth, ids);
  return c;
}

RunConfig restrict_splits(const RunConfig& cfg, std::span<const std::string> ids) {
  RunConfig c = cfg;
  c.splits.clear();
  for (const auto& id : ids) {
    const auto it = std::find_if(cfg.splits.begin(), cfg.splits.end(), [&](const SplitDef& s) { return s.id == id; });
    if (it == cfg.splits.end()) throw ConfigError(fmt::format("unknown split '{}'", id));
    c.splits.push_back(*it);
  }
  return c;
}

void export_weights(const RunConfig& cfg) {
  cfg.validate();
  for (const Seed seed : cfg.seeds)
    for (const int level : cfg.level_ids()) {
      const auto dir = cfg.output_dir / "weights" / fmt::format("seed-{}", seed);
      const auto enc = cfg.encoder_for(level, seed);
      ActivationTensor rnn;
      for (std::size_t r = 0; r < enc.num_rnns; ++r) {
        const auto w = generate_weights(enc, level, r);
        if (r == 0) rnn.shape = {enc.num_rnns, w.rows, w.cols};
        rnn.data.insert(rnn.data.end(), w.values.begin(), w.values.end());
      }
      write_tensor(rnn, dir / fmt::format("{}-rnn.npy", level_tag(level)));
      const LevelPreprocessor pre(cfg.level_spec(level), cfg.pool_method, seed, cfg.force_uniform_pool_weights);
      for (std::size_t i = 0; i < pre.pool_weights().size(); ++i) {
        const auto& pw = pre.pool_weights()[i];
        ActivationTensor t{{pw.spec.target_maps, 1, pw.spec.area()}, pw.values, level};
        write_tensor(t, dir / fmt::format("{}-pool{}.npy", level_tag(level), i));
      }
    }
}

void encode_stage(const RunConfig& cfg) {
  cfg.validate();
  const auto manifest = load_manifest(cfg.manifest);
  FeatureStore store(cfg, manifest, cfg.workers);
  for (const Seed seed : cfg.seeds) {
    store.clear();
    for (const Modality m : kModalities) {
      if (store.records(m).empty()) continue;
      for (const int level : cfg.level_ids())
        write_feature_files(features_dir(cfg, seed, m, level), store.records(m),
                            store.features({m, level, seed, cfg.pool_method}));
    }
  }
}

void train_stage(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.write_features = false;
  run_core(c, {training_model_fn(c, true), {}, false});
}

RunReport evaluate_stage(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.write_features = false;
  const ModelFn load = [&c](const ModelId& id, const FeatureMatrix&, std::span<const int>) {
    return load_model(model_path(c, id));
  };
  const ScoreSink sink = [&c](const ModelId& id, const ScoreTable& t) {
    write_scores_csv(scores_path(c, id.split, id.seed, id.modality, id.tag), t.sample_ids, t.labels, t.scores);
  };
  return run_core(c, {load, sink, false});
}

RunReport fuse_stage(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.fusion.rgb_levels.empty() || cfg.fusion.depth_levels.empty())
    throw ConfigError("fuse needs fusion levels for both rgb and depth");
  RunReport report;
  report.topk = cfg.report.topk;
  for (const Seed seed : cfg.seeds)
    for (const auto& split : cfg.splits) {
      const auto rgb = read_scores_csv(scores_path(cfg, split.id, seed, Modality::rgb, kFusedTag));
      const auto depth = read_scores_csv(scores_path(cfg, split.id, seed, Modality::depth, kFusedTag));
      const auto d = fuse_modalities(rgb, depth, cfg.fusion);
      add_fused_row(cfg, split.id, seed, d, report);
      if (cfg.report.confusion_matrix)
        add_confusion(report, d.vote.labels, d.labels, rgb.scores.cols,
                      fmt::format("rgbd {}", to_string(cfg.fusion.modality_strategy)));
    }
  return report;
}

}  // namespace randrnn
