#include "randrnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <initializer_list>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "randrnn/error.hpp"

namespace randrnn {

namespace {

using json = nlohmann::json;

// Rejects keys outside `allowed` so typos fail loudly.
void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
}

template <typename T>
T get(const json& obj, std::string_view where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{}: wrong type", where, key));
  }
}

std::size_t get_count(const json& obj, std::string_view where, const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(fmt::format("{}.{}: expected a non-negative integer", where, key));
  return v.get<std::size_t>();
}

std::vector<int> get_levels(const json& obj, std::string_view where, const char* key) {
  if (!obj.contains(key)) return {};
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(fmt::format("{}.{}: expected a list of levels", where, key));
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ConfigError(fmt::format("{}.{}: levels must be integers", where, key));
    out.push_back(e.get<int>());
  }
  return out;
}

Shape get_shape(const json& v, std::string_view where) {
  if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("{}: expected a non-empty list of extents", where));
  Shape out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError(fmt::format("{}: extents must be positive integers", where));
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

LevelSpec parse_level(const json& v, std::size_t index) {
  const auto where = fmt::format("levels[{}]", index);
  check_keys(v, where, {"level", "raw_shape", "target_shape", "preprocess"});
  if (!v.contains("level") || !v.contains("raw_shape"))
    throw ConfigError(fmt::format("{}: 'level' and 'raw_shape' are required", where));
  LevelSpec spec;
  spec.level = get<int>(v, where, "level", 0);
  spec.raw_shape = get_shape(v.at("raw_shape"), where + ".raw_shape");
  if (v.contains("target_shape")) {
    const auto t = get_shape(v.at("target_shape"), where + ".target_shape");
    if (t.size() != 3) throw ConfigError(fmt::format("{}.target_shape: must be [K, s, s]", where));
    spec.target_shape = {t[0], t[1], t[2]};
  }
  spec.preprocess = v.contains("preprocess")
                        ? parse_preprocess(get<std::string>(v, where, "preprocess", ""))
                        : LevelSpec::infer_preprocess(spec.raw_shape, spec.target_shape);
  return spec;
}

SplitDef parse_split(const json& v, std::size_t index) {
  const auto where = fmt::format("splits[{}]", index);
  check_keys(v, where, {"id", "heldout", "draw_seed"});
  SplitDef s;
  s.id = get<std::string>(v, where, "id", "");
  if (s.id.empty()) throw ConfigError(fmt::format("{}: 'id' is required", where));
  if (v.contains("heldout") && v.contains("draw_seed"))
    throw ConfigError(fmt::format("{}: give either 'heldout' or 'draw_seed', not both", where));
  if (v.contains("heldout")) {
    const auto& h = v.at("heldout");
    if (!h.is_object()) throw ConfigError(fmt::format("{}.heldout: expected category -> instance map", where));
    HeldoutInstances heldout;
    for (const auto& [key, inst] : h.items()) {
      int category = -1;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), category);
      if (ec != std::errc{} || ptr != key.data() + key.size() || category < 0)
        throw ConfigError(fmt::format("{}.heldout: '{}' is not a category index", where, key));
      if (!inst.is_string()) throw ConfigError(fmt::format("{}.heldout.{}: instance id must be a string", where, key));
      heldout[category] = inst.get<std::string>();
    }
    s.heldout = std::move(heldout);
  }
  if (v.contains("draw_seed")) {
    if (!v.at("draw_seed").is_number_unsigned())
      throw ConfigError(fmt::format("{}.draw_seed: expected a non-negative integer", where));
    s.draw_seed = v.at("draw_seed").get<Seed>();
  }
  return s;
}

template <typename Enum>
Enum parse_enum(std::string_view text, std::string_view where, std::initializer_list<std::pair<std::string_view, Enum>> options) {
  for (const auto& [name, value] : options)
    if (name == text) return value;
  throw ConfigError(fmt::format("{}: unknown value '{}'", where, text));
}

}  // namespace

std::string_view to_string(LevelStrategy s) noexcept {
  return s == LevelStrategy::concat_features ? "concat_features" : "average_vote";
}

std::string_view to_string(ModalityStrategy s) noexcept {
  return s == ModalityStrategy::average_vote ? "average_vote" : "weighted_vote";
}

DatasetManifest SplitDef::apply(const DatasetManifest& m) const {
  if (heldout) return make_instance_split(m, *heldout);
  if (draw_seed) return make_instance_split(m, draw_heldout_instances(m, *draw_seed));
  return m;
}

const LevelSpec& RunConfig::level_spec(int level) const {
  for (const auto& l : levels)
    if (l.level == level) return l;
  throw ConfigError(fmt::format("level {} is not configured", level));
}

bool RunConfig::has_level(int level) const {
  return std::any_of(levels.begin(), levels.end(), [&](const LevelSpec& l) { return l.level == level; });
}

std::vector<int> RunConfig::level_ids() const {
  std::vector<int> ids;
  for (const auto& l : levels) ids.push_back(l.level);
  std::sort(ids.begin(), ids.end());
  return ids;
}

EncoderConfig RunConfig::encoder_for(int level, Seed seed) const {
  const auto& spec = level_spec(level);
  EncoderConfig e;
  e.num_rnns = encoder.num_rnns;
  e.tree_depth = encoder.tree_depth;
  e.channels = spec.target_shape[0];
  e.side = spec.target_shape[1];
  e.master_seed = seed;
  return e;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (levels.empty()) throw ConfigError("levels: at least one level is required");
  if (workers == 0) throw ConfigError("workers: must be at least 1");
  std::set<int> seen;
  for (const auto& l : levels) {
    l.validate();
    if (!seen.insert(l.level).second) throw ConfigError(fmt::format("levels: level {} listed twice", l.level));
    // Constructing the preprocessor checks that the target is reachable.
    LevelPreprocessor(l, pool_method, 0);
    try {
      encoder_for(l.level, 0).validate();
    } catch (const Error& e) {
      throw ConfigError(fmt::format("level {}: {}", l.level, e.what()));
    }
  }
  for (const Modality m : {Modality::rgb, Modality::depth})
    for (const int level : fusion.levels_of(m)) {
      if (level < 1 || level > kNumLevels)
        throw ConfigError(fmt::format("fusion.{}_levels: level {} outside 1..{}", to_string(m), level, kNumLevels));
      if (!has_level(level))
        throw ConfigError(fmt::format("fusion.{}_levels: level {} is not configured", to_string(m), level));
    }
  std::set<std::string> ids;
  for (const auto& s : splits)
    if (!ids.insert(s.id).second) throw ConfigError(fmt::format("splits: id '{}' used twice", s.id));
  if (report.topk.empty() || std::find(report.topk.begin(), report.topk.end(), 0) != report.topk.end())
    throw ConfigError("report.topk: values must be positive");
  if (!(svm.C > 0.0) || !(svm.tol > 0.0) || svm.max_iter == 0) throw ConfigError("svm: C, tol and max_iter must be positive");
  try {
    colorize.intrinsics.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(fmt::format("colorize: {}", e.what()));
  }
  if (!(colorize.depth_scale > 0.0)) throw ConfigError("colorize.depth_scale: must be positive");
}

std::vector<int> default_fusion_levels(Modality m, std::span<const int> configured) {
  const std::vector<int> trio = m == Modality::rgb ? std::vector<int>{4, 5, 6} : std::vector<int>{5, 6, 7};
  std::vector<int> out;
  for (const int l : trio)
    if (std::find(configured.begin(), configured.end(), l) != configured.end()) out.push_back(l);
  if (out.empty()) out.assign(configured.begin(), configured.end());
  return out;
}

std::vector<LevelSpec> default_level_specs() {
  auto spec = [](int level, Shape raw, std::array<std::size_t, 3> target) {
    LevelSpec s;
    s.level = level;
    s.raw_shape = std::move(raw);
    s.target_shape = target;
    s.preprocess = LevelSpec::infer_preprocess(s.raw_shape, s.target_shape);
    return s;
  };
  return {
      spec(1, {64, 56, 56}, {64, 8, 8}),     spec(2, {256, 56, 56}, {64, 8, 8}),  spec(3, {512, 28, 28}, {64, 7, 7}),
      spec(4, {1024, 14, 14}, {64, 7, 7}),   spec(5, {1024, 14, 14}, {64, 7, 7}), spec(6, {2048, 7, 7}, {64, 7, 7}),
      spec(7, {2048}, {64, 4, 4}),
  };
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  check_keys(root, "config",
             {"config_version", "manifest", "output_dir", "workers", "seeds", "encoder", "levels", "pooling", "svm",
              "fusion", "splits", "report", "colorize", "cache", "write_features"});
  if (!root.contains("config_version")) throw ConfigError("config: 'config_version' is required");
  const int version = get<int>(root, "config", "config_version", 0);
  if (version != kConfigVersion)
    throw ConfigError(fmt::format("config_version {} is not supported (expected {})", version, kConfigVersion));

  RunConfig cfg;
  if (root.contains("manifest")) cfg.manifest = resolve(base_dir, get<std::string>(root, "config", "manifest", ""));
  cfg.output_dir = resolve(base_dir, get<std::string>(root, "config", "output_dir", "out"));
  cfg.workers = get_count(root, "config", "workers", 1);
  cfg.cache = get<bool>(root, "config", "cache", true);
  cfg.write_features = get<bool>(root, "config", "write_features", false);

  if (root.contains("seeds")) {
    const auto& seeds = root.at("seeds");
    if (!seeds.is_array()) throw ConfigError("seeds: expected a list");
    for (const auto& s : seeds) {
      if (!s.is_number_unsigned()) throw ConfigError("seeds: values must be non-negative integers");
      cfg.seeds.push_back(s.get<Seed>());
    }
  } else {
    cfg.seeds = {0};
  }

  if (root.contains("encoder")) {
    const auto& e = root.at("encoder");
    check_keys(e, "encoder", {"num_rnns", "tree_depth"});
    cfg.encoder.num_rnns = get_count(e, "encoder", "num_rnns", cfg.encoder.num_rnns);
    cfg.encoder.tree_depth = get_count(e, "encoder", "tree_depth", cfg.encoder.tree_depth);
  }

  if (root.contains("levels")) {
    const auto& levels = root.at("levels");
    if (!levels.is_array()) throw ConfigError("levels: expected a list");
    for (std::size_t i = 0; i < levels.size(); ++i) cfg.levels.push_back(parse_level(levels[i], i));
  } else {
    cfg.levels = default_level_specs();
  }

  if (root.contains("pooling")) {
    const auto& p = root.at("pooling");
    check_keys(p, "pooling", {"method", "force_uniform_weights"});
    if (p.contains("method")) cfg.pool_method = parse_pool_method(get<std::string>(p, "pooling", "method", ""));
    cfg.force_uniform_pool_weights = get<bool>(p, "pooling", "force_uniform_weights", false);
  }

  if (root.contains("svm")) {
    const auto& s = root.at("svm");
    check_keys(s, "svm", {"C", "tol", "max_iter", "bias_feature"});
    cfg.svm.C = get<double>(s, "svm", "C", cfg.svm.C);
    cfg.svm.tol = get<double>(s, "svm", "tol", cfg.svm.tol);
    cfg.svm.max_iter = get_count(s, "svm", "max_iter", cfg.svm.max_iter);
    cfg.svm.bias_feature = get<double>(s, "svm", "bias_feature", cfg.svm.bias_feature);
  }

  if (root.contains("fusion")) {
    const auto& f = root.at("fusion");
    check_keys(f, "fusion", {"rgb_levels", "depth_levels", "level_strategy", "modality_strategy", "weight_normalization"});
    cfg.fusion.rgb_levels = get_levels(f, "fusion", "rgb_levels");
    cfg.fusion.depth_levels = get_levels(f, "fusion", "depth_levels");
    if (f.contains("level_strategy"))
      cfg.fusion.level_strategy =
          parse_enum<LevelStrategy>(get<std::string>(f, "fusion", "level_strategy", ""), "fusion.level_strategy",
                                    {{"concat_features", LevelStrategy::concat_features},
                                     {"average_vote", LevelStrategy::average_vote}});
    if (f.contains("modality_strategy"))
      cfg.fusion.modality_strategy =
          parse_enum<ModalityStrategy>(get<std::string>(f, "fusion", "modality_strategy", ""),
                                       "fusion.modality_strategy",
                                       {{"average_vote", ModalityStrategy::average_vote},
                                        {"weighted_vote", ModalityStrategy::weighted_vote}});
    if (f.contains("weight_normalization"))
      cfg.fusion.weight_normalization =
          parse_weight_normalization(get<std::string>(f, "fusion", "weight_normalization", ""));
  }

  const auto ids = cfg.level_ids();
  if (cfg.fusion.rgb_levels.empty()) cfg.fusion.rgb_levels = default_fusion_levels(Modality::rgb, ids);
  if (cfg.fusion.depth_levels.empty()) cfg.fusion.depth_levels = default_fusion_levels(Modality::depth, ids);

  if (root.contains("splits")) {
    const auto& splits = root.at("splits");
    if (!splits.is_array()) throw ConfigError("splits: expected a list");
    for (std::size_t i = 0; i < splits.size(); ++i) cfg.splits.push_back(parse_split(splits[i], i));
  }
  if (cfg.splits.empty()) cfg.splits.push_back(SplitDef{"manifest", std::nullopt, std::nullopt});

  if (root.contains("report")) {
    const auto& r = root.at("report");
    check_keys(r, "report", {"topk", "confusion_matrix"});
    if (r.contains("topk")) {
      if (!r.at("topk").is_array()) throw ConfigError("report.topk: expected a list");
      cfg.report.topk.clear();
      for (const auto& k : r.at("topk")) {
        if (!k.is_number_unsigned()) throw ConfigError("report.topk: values must be positive integers");
        cfg.report.topk.push_back(k.get<std::size_t>());
      }
      std::sort(cfg.report.topk.begin(), cfg.report.topk.end());
      cfg.report.topk.erase(std::unique(cfg.report.topk.begin(), cfg.report.topk.end()), cfg.report.topk.end());
    }
    cfg.report.confusion_matrix = get<bool>(r, "report", "confusion_matrix", true);
  }

  if (root.contains("colorize")) {
    const auto& c = root.at("colorize");
    check_keys(c, "colorize", {"fx", "fy", "cx", "cy", "depth_scale", "resize", "max_fill_passes"});
    auto& k = cfg.colorize.intrinsics;
    k.fx = get<double>(c, "colorize", "fx", k.fx);
    k.fy = get<double>(c, "colorize", "fy", k.fy);
    k.cx = get<double>(c, "colorize", "cx", k.cx);
    k.cy = get<double>(c, "colorize", "cy", k.cy);
    cfg.colorize.depth_scale = get<double>(c, "colorize", "depth_scale", cfg.colorize.depth_scale);
    if (c.contains("resize"))
      cfg.colorize.resize = parse_enum<ResizeMode>(get<std::string>(c, "colorize", "resize", ""), "colorize.resize",
                                                   {{"square", ResizeMode::square}, {"short_side", ResizeMode::short_side}});
    cfg.colorize.max_fill_passes = get_count(c, "colorize", "max_fill_passes", cfg.colorize.max_fill_passes);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto text = read_file_bytes(path);
  return parse_config(text, path.parent_path());
}

std::vector<int> parse_level_range(std::string_view text) {
  std::set<int> levels;
  auto number = [&](std::string_view part) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty())
      throw ConfigError(fmt::format("bad level list '{}'", text));
    if (v < 1 || v > kNumLevels) throw ConfigError(fmt::format("level {} outside 1..{}", v, kNumLevels));
    return v;
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    const auto part = text.substr(start, comma - start);
    const auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      levels.insert(number(part));
    } else {
      const int lo = number(part.substr(0, dash));
      const int hi = number(part.substr(dash + 1));
      if (lo > hi) throw ConfigError(fmt::format("bad level range '{}'", part));
      for (int l = lo; l <= hi; ++l) levels.insert(l);
    }
    start = comma + 1;
  }
  return {levels.begin(), levels.end()};
}

}  // namespace randrnn
