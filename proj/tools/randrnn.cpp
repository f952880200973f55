// Command-line front end for the RGB-D random RNN pipeline.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "randrnn/config.hpp"
#include "randrnn/depth_colorize.hpp"
#include "randrnn/error.hpp"
#include "randrnn/experiment.hpp"
#include "randrnn/report.hpp"
#include "randrnn/tensor_io.hpp"

namespace {

using namespace randrnn;

struct CommonOptions {
  std::string config;
  std::string split = "all";
  std::optional<Seed> seed;
  std::string levels;
  std::string out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_split = true) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  if (with_split) cmd->add_option("--split", o.split, "Split id, or 'all'");
  cmd->add_option("--seed", o.seed, "Use this master seed instead of the configured list");
  cmd->add_option("--levels", o.levels, "Level selection such as 1-7 or 1,3,5");
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
}

RunConfig resolve(const CommonOptions& o) {
  auto cfg = load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.workers) cfg.workers = *o.workers;
  if (!o.levels.empty()) cfg = restrict_levels(cfg, parse_level_range(o.levels));
  if (o.split != "all") cfg = restrict_splits(cfg, std::vector<std::string>{o.split});
  cfg.validate();
  return cfg;
}

void print_summary(const RunReport& report) {
  for (const auto& s : report.summary())
    fmt::print("{:<6} {:<14} {}\n", s.modality, s.level, format_percent(s.over_splits));
}

void finish(const RunReport& report, const std::filesystem::path& dir) {
  write_report(report, dir);
  print_summary(report);
  fmt::print("report written to {}\n", dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random recursive neural network features for RGB-D object recognition"};
  app.require_subcommand(1);

  std::string depth_in, rgb_in, colorize_out, colorize_config;
  auto* colorize = app.add_subcommand("colorize", "Turn a depth PNG (or an RGB image) into a standardized 3x224x224 tensor");
  auto* depth_opt = colorize->add_option("--depth", depth_in, "16-bit depth PNG")->check(CLI::ExistingFile);
  auto* rgb_opt = colorize->add_option("--rgb", rgb_in, "RGB image")->check(CLI::ExistingFile);
  depth_opt->excludes(rgb_opt);
  colorize->add_option("--out", colorize_out, "Output NPY file")->required();
  colorize->add_option("--config", colorize_config, "Config supplying camera intrinsics and resize mode")
      ->check(CLI::ExistingFile);
  std::optional<double> depth_scale;
  colorize->add_option("--depth-scale", depth_scale, "Metres per raw depth unit")->check(CLI::PositiveNumber);

  CommonOptions encode_o, train_o, eval_o, fuse_o, ablate_o, stab_o, report_o;
  auto* encode = app.add_subcommand("encode", "Encode all samples and write feature files");
  add_common(encode, encode_o, false);
  bool export_w = false;
  encode->add_flag("--export-weights", export_w, "Also write the generated RNN and pooling weights");
  auto* train = app.add_subcommand("train", "Train per-level one-vs-rest SVMs");
  add_common(train, train_o);
  auto* evaluate = app.add_subcommand("evaluate", "Score test samples with trained models");
  add_common(evaluate, eval_o);
  auto* fuse = app.add_subcommand("fuse", "Combine RGB and depth scores");
  add_common(fuse, fuse_o);
  auto* ablate = app.add_subcommand("ablate-pooling", "Compare random, max and average pooling");
  add_common(ablate, ablate_o);
  std::size_t runs = 5;
  auto* stability = app.add_subcommand("stability", "Repeat the experiment with fresh master seeds");
  add_common(stability, stab_o);
  stability->add_option("--runs", runs, "Number of master seeds")->check(CLI::Range(2, 1000));
  auto* report = app.add_subcommand("report", "Run the full experiment and write the report");
  add_common(report, report_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (colorize->parsed()) {
      if (depth_in.empty() && rgb_in.empty()) throw ConfigError("colorize needs --depth or --rgb");
      ColorizeOptions opts;
      if (!colorize_config.empty()) opts = load_config(colorize_config).colorize;
      if (depth_scale) opts.depth_scale = *depth_scale;
      const auto tensor = depth_in.empty()
                              ? standardize_rgb(read_rgb_image(rgb_in), opts.resize)
                              : colorize_depth(read_depth_png(depth_in, opts.depth_scale), opts.intrinsics,
                                               opts.resize, opts.max_fill_passes);
      write_tensor(tensor, colorize_out);
    } else if (encode->parsed()) {
      auto cfg = resolve(encode_o);
      encode_stage(cfg);
      if (export_w) {
        export_weights(cfg);
        fmt::print("weights written to {}\n", (cfg.output_dir / "weights").string());
      }
      fmt::print("features written to {}\n", (cfg.output_dir / "features").string());
    } else if (train->parsed()) {
      const auto cfg = resolve(train_o);
      train_stage(cfg);
      fmt::print("models written to {}\n", (cfg.output_dir / "models").string());
    } else if (evaluate->parsed()) {
      const auto cfg = resolve(eval_o);
      finish(evaluate_stage(cfg), cfg.output_dir / "evaluation");
    } else if (fuse->parsed()) {
      const auto cfg = resolve(fuse_o);
      finish(fuse_stage(cfg), cfg.output_dir / "fusion");
    } else if (ablate->parsed()) {
      const auto cfg = resolve(ablate_o);
      const auto rows = pooling_ablation(cfg);
      write_ablation_csv(rows, cfg.output_dir / "ablation.csv");
      for (const auto& r : rows)
        fmt::print("{:<8} {:<6} {:<14} {}\n", to_string(r.method), r.modality, r.level, format_percent(r.accuracy));
    } else if (stability->parsed()) {
      const auto cfg = resolve(stab_o);
      finish(reseed_stability(cfg, runs), cfg.output_dir / "stability");
    } else if (report->parsed()) {
      const auto cfg = resolve(report_o);
      finish(run_experiment(cfg), cfg.output_dir / "report");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
