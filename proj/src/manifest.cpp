#include "randrnn/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "randrnn/error.hpp"

namespace randrnn {

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::string join_limited(const std::vector<std::string>& items) {
  constexpr std::size_t kShown = 10;
  if (items.size() <= kShown) return fmt::format("{}", fmt::join(items, ", "));
  return fmt::format("{}, ... ({} total)", fmt::join(items.begin(), items.begin() + kShown, ", "), items.size());
}

}  // namespace

std::string_view to_string(Modality m) noexcept { return m == Modality::rgb ? "rgb" : "depth"; }
std::string_view to_string(SplitRole r) noexcept { return r == SplitRole::train ? "train" : "test"; }

Modality parse_modality(std::string_view text) {
  if (text == "rgb") return Modality::rgb;
  if (text == "depth") return Modality::depth;
  throw ValidationError(fmt::format("unknown modality '{}'", text));
}

SplitRole parse_split_role(std::string_view text) {
  if (text == "train") return SplitRole::train;
  if (text == "test") return SplitRole::test;
  throw ValidationError(fmt::format("unknown split role '{}'", text));
}

bool SampleRecord::has_level(int level) const {
  return level >= 1 && level <= kNumLevels && !level_paths[static_cast<std::size_t>(level - 1)].empty();
}

const std::filesystem::path& SampleRecord::level_path(int level) const {
  if (!has_level(level))
    throw ValidationError(fmt::format("sample {} ({}) has no level {}", sample_id, to_string(modality), level));
  return level_paths[static_cast<std::size_t>(level - 1)];
}

int DatasetManifest::num_categories() const {
  int top = -1;
  for (const auto& r : records) top = std::max(top, r.category);
  return top + 1;
}

std::vector<const SampleRecord*> DatasetManifest::select(Modality m) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.modality == m) out.push_back(&r);
  return out;
}

bool DatasetManifest::has_modality(Modality m) const {
  return std::any_of(records.begin(), records.end(), [m](const SampleRecord& r) { return r.modality == m; });
}

void validate_manifest(const DatasetManifest& m, bool check_paths) {
  std::vector<std::string> problems;

  std::set<std::pair<Modality, std::string>> seen;
  std::vector<std::string> duplicates;
  for (const auto& r : m.records) {
    if (r.sample_id.empty()) problems.push_back("empty sample_id");
    if (!seen.emplace(r.modality, r.sample_id).second)
      duplicates.push_back(fmt::format("{} ({})", r.sample_id, to_string(r.modality)));
  }
  if (!duplicates.empty()) problems.push_back(fmt::format("duplicate sample_id: {}", join_limited(duplicates)));

  std::set<int> categories;
  for (const auto& r : m.records) {
    if (r.category < 0) problems.push_back(fmt::format("negative category {} on sample {}", r.category, r.sample_id));
    categories.insert(r.category);
  }
  if (!categories.empty() && *categories.begin() >= 0) {
    std::vector<std::string> missing;
    for (int c = 0; c <= *categories.rbegin(); ++c)
      if (!categories.contains(c)) missing.push_back(std::to_string(c));
    if (!missing.empty()) problems.push_back(fmt::format("categories not contiguous, missing: {}", join_limited(missing)));
  }

  if (check_paths) {
    std::vector<std::string> unresolved;
    for (const auto& r : m.records)
      for (int level = 1; level <= kNumLevels; ++level)
        if (r.has_level(level) && !std::filesystem::is_regular_file(r.level_path(level)))
          unresolved.push_back(fmt::format("{} level{} -> {}", r.sample_id, level, r.level_path(level).string()));
    if (!unresolved.empty()) problems.push_back(fmt::format("unresolvable paths: {}", join_limited(unresolved)));
  }

  if (!problems.empty()) throw ValidationError(fmt::format("invalid manifest: {}", fmt::join(problems, "; ")));
}

DatasetManifest parse_manifest(std::string_view csv, const std::filesystem::path& base_dir) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < csv.size();) {
    auto end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    const auto line = strip(csv.substr(start, end - start));
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ValidationError("manifest is empty (no header row)");

  const auto header = split_csv_line(lines.front());
  const auto expected = split_csv_line(kManifestHeader);
  std::vector<std::string> missing;
  std::array<std::size_t, 12> column{};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto it = std::find_if(header.begin(), header.end(), [&](std::string_view h) { return strip(h) == expected[i]; });
    if (it == header.end())
      missing.emplace_back(expected[i]);
    else
      column[i] = static_cast<std::size_t>(it - header.begin());
  }
  if (!missing.empty()) throw ValidationError(fmt::format("manifest missing columns: {}", fmt::join(missing, ", ")));

  DatasetManifest m;
  std::vector<std::string> bad_rows;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto fields = split_csv_line(lines[row]);
    if (fields.size() != header.size()) {
      bad_rows.push_back(fmt::format("line {}: {} fields, header has {}", row + 1, fields.size(), header.size()));
      continue;
    }
    try {
      SampleRecord r;
      r.sample_id = std::string(strip(fields[column[0]]));
      const auto cat = strip(fields[column[1]]);
      const auto [ptr, ec] = std::from_chars(cat.data(), cat.data() + cat.size(), r.category);
      if (ec != std::errc() || ptr != cat.data() + cat.size())
        throw ValidationError(fmt::format("bad category '{}'", cat));
      r.instance_id = std::string(strip(fields[column[2]]));
      r.modality = parse_modality(strip(fields[column[3]]));
      r.split_role = parse_split_role(strip(fields[column[4]]));
      for (std::size_t level = 0; level < kNumLevels; ++level) {
        const auto cell = strip(fields[column[5 + level]]);
        if (cell.empty()) continue;
        std::filesystem::path p{std::string(cell)};
        r.level_paths[level] = p.is_absolute() ? p : (base_dir / p).lexically_normal();
      }
      m.records.push_back(std::move(r));
    } catch (const ValidationError& e) {
      bad_rows.push_back(fmt::format("line {}: {}", row + 1, e.what()));
    }
  }
  if (!bad_rows.empty()) throw ValidationError(fmt::format("invalid manifest rows: {}", join_limited(bad_rows)));
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto text = read_file_bytes(path);
  auto m = parse_manifest(text, path.parent_path());
  validate_manifest(m, /*check_paths=*/true);
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate_manifest(m, false);
  const auto base = std::filesystem::absolute(path).parent_path();
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& r : m.records) {
    out << r.sample_id << ',' << r.category << ',' << r.instance_id << ',' << to_string(r.modality) << ','
        << to_string(r.split_role);
    for (const auto& p : r.level_paths) {
      out << ',';
      if (p.empty()) continue;
      const auto rel = std::filesystem::absolute(p).lexically_relative(base);
      out << (rel.empty() ? p.generic_string() : rel.generic_string());
    }
    out << '\n';
  }
  write_file_bytes(path, out.str());
}

DatasetManifest make_instance_split(const DatasetManifest& m, const HeldoutInstances& heldout) {
  std::map<int, std::set<std::string>> instances;
  for (const auto& r : m.records) instances[r.category].insert(r.instance_id);

  std::vector<std::string> problems;
  for (const auto& [category, ids] : instances) {
    if (ids.size() < 2)
      problems.push_back(fmt::format("category {} has {} instance(s), need at least 2", category, ids.size()));
    const auto it = heldout.find(category);
    if (it == heldout.end())
      problems.push_back(fmt::format("category {} has no held-out instance", category));
    else if (!ids.contains(it->second))
      problems.push_back(fmt::format("held-out instance '{}' absent from category {}", it->second, category));
  }
  for (const auto& [category, id] : heldout)
    if (!instances.contains(category)) problems.push_back(fmt::format("held-out category {} not in manifest", category));
  if (!problems.empty()) throw ValidationError(fmt::format("bad instance split: {}", fmt::join(problems, "; ")));

  DatasetManifest out = m;
  for (auto& r : out.records)
    r.split_role = heldout.at(r.category) == r.instance_id ? SplitRole::test : SplitRole::train;
  return out;
}

HeldoutInstances draw_heldout_instances(const DatasetManifest& m, Seed seed) {
  std::map<int, std::set<std::string>> instances;
  for (const auto& r : m.records) instances[r.category].insert(r.instance_id);
  const CounterRng rng(seed, StreamDomain::split_draw, 0, 0);
  HeldoutInstances heldout;
  for (const auto& [category, ids] : instances) {
    const auto pick = rng.below(static_cast<std::uint64_t>(category), ids.size());
    heldout[category] = *std::next(ids.begin(), static_cast<std::ptrdiff_t>(pick));
  }
  return heldout;
}

}  // namespace randrnn
