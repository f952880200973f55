#include "randrnn/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "randrnn/tensor_io.hpp"

namespace randrnn {

namespace {

// Ordered grouping that remembers first appearance.
template <typename Key>
class Groups {
 public:
  std::vector<double>& operator[](const Key& key) {
    const auto it = std::find(keys_.begin(), keys_.end(), key);
    if (it != keys_.end()) return values_[static_cast<std::size_t>(it - keys_.begin())];
    keys_.push_back(key);
    values_.emplace_back();
    return values_.back();
  }
  const std::vector<Key>& keys() const { return keys_; }
  const std::vector<double>& values(std::size_t i) const { return values_[i]; }

 private:
  std::vector<Key> keys_;
  std::vector<std::vector<double>> values_;
};

std::string number(double v) { return std::isnan(v) ? std::string() : fmt::format("{:.10f}", v); }

std::string stddev_cell(const MeanStd& m) { return m.stddev ? number(*m.stddev) : std::string(); }

}  // namespace

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.count = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (const double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double sq = 0.0;
    for (const double v : values) sq += (v - m.mean) * (v - m.mean);
    m.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  }
  return m;
}

std::string format_percent(const MeanStd& m) {
  if (!m.stddev) return fmt::format("{:.1f}", 100.0 * m.mean);
  return fmt::format("{:.1f} ± {:.1f}", 100.0 * m.mean, 100.0 * *m.stddev);
}

std::vector<SummaryRow> RunReport::summary() const {
  using Key = std::tuple<std::string, std::string, std::string>;  // modality, level, split
  Groups<Key> per_split;
  for (const auto& r : runs) per_split[{r.modality, r.level, r.split}].push_back(r.accuracy);

  Groups<std::pair<std::string, std::string>> per_level;
  for (std::size_t i = 0; i < per_split.keys().size(); ++i) {
    const auto& [modality, level, split] = per_split.keys()[i];
    per_level[{modality, level}].push_back(mean_std(per_split.values(i)).mean);
  }
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < per_level.keys().size(); ++i)
    out.push_back({per_level.keys()[i].first, per_level.keys()[i].second, mean_std(per_level.values(i))});
  return out;
}

std::vector<ReseedRow> RunReport::reseed() const {
  using Key = std::tuple<std::string, std::string, std::string>;  // split, modality, level
  Groups<Key> groups;
  for (const auto& r : runs) groups[{r.split, r.modality, r.level}].push_back(r.accuracy);
  std::vector<ReseedRow> out;
  for (std::size_t i = 0; i < groups.keys().size(); ++i) {
    const auto& [split, modality, level] = groups.keys()[i];
    out.push_back({split, modality, level, mean_std(groups.values(i))});
  }
  return out;
}

std::vector<TopkRow> RunReport::topk_table() const {
  using Key = std::tuple<std::string, std::string, std::size_t>;
  Groups<Key> groups;
  for (const auto& r : runs)
    for (std::size_t j = 0; j < topk.size() && j < r.topk.size(); ++j)
      if (!std::isnan(r.topk[j])) groups[{r.modality, r.level, topk[j]}].push_back(r.topk[j]);
  std::vector<TopkRow> out;
  for (std::size_t i = 0; i < groups.keys().size(); ++i) {
    const auto& [modality, level, k] = groups.keys()[i];
    out.push_back({modality, level, k, mean_std(groups.values(i)).mean});
  }
  return out;
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::string runs = "split,seed,modality,level,num_test,accuracy";
  for (const auto k : report.topk) runs += fmt::format(",top{}", k);
  runs += '\n';
  for (const auto& r : report.runs) {
    runs += fmt::format("{},{},{},{},{},{}", r.split, r.seed, r.modality, r.level, r.num_test, number(r.accuracy));
    for (std::size_t j = 0; j < report.topk.size(); ++j)
      runs += "," + (j < r.topk.size() ? number(r.topk[j]) : std::string());
    runs += '\n';
  }
  write_file_bytes(dir / "runs.csv", runs);

  const auto summary = report.summary();
  std::string summary_csv = "modality,level,num_splits,mean,std\n";
  for (const auto& s : summary)
    summary_csv += fmt::format("{},{},{},{},{}\n", s.modality, s.level, s.over_splits.count,
                               number(s.over_splits.mean), stddev_cell(s.over_splits));
  write_file_bytes(dir / "summary.csv", summary_csv);

  const auto reseed = report.reseed();
  std::string reseed_csv = "split,modality,level,num_seeds,mean,std\n";
  for (const auto& s : reseed)
    reseed_csv += fmt::format("{},{},{},{},{},{}\n", s.split, s.modality, s.level, s.over_seeds.count,
                              number(s.over_seeds.mean), stddev_cell(s.over_seeds));
  write_file_bytes(dir / "reseed.csv", reseed_csv);

  const auto topk = report.topk_table();
  std::string topk_csv = "modality,level,k,mean\n";
  for (const auto& t : topk) topk_csv += fmt::format("{},{},{},{}\n", t.modality, t.level, t.k, number(t.mean));
  write_file_bytes(dir / "topk.csv", topk_csv);

  std::string text =
      "Accuracy in percent, mean ± population standard deviation over splits\n"
      "(each split averaged over seeds; std omitted with fewer than two splits).\n\n";
  for (const auto& s : summary) text += fmt::format("{:<6} {:<14} {}\n", s.modality, s.level, format_percent(s.over_splits));
  bool any_reseed = std::any_of(reseed.begin(), reseed.end(), [](const ReseedRow& r) { return r.over_seeds.stddev.has_value(); });
  if (any_reseed) {
    text += "\nReseed stability, mean ± population standard deviation over seeds:\n";
    for (const auto& r : reseed)
      text += fmt::format("{:<10} {:<6} {:<14} {}\n", r.split, r.modality, r.level, format_percent(r.over_seeds));
  }
  if (!topk.empty()) {
    text += "\nTop-k accuracy (mean over splits and seeds):\n";
    for (const auto& t : topk) text += fmt::format("{:<6} {:<14} top-{:<3} {:.1f}\n", t.modality, t.level, t.k, 100.0 * t.mean);
  }

  if (report.confusion) {
    const auto& m = *report.confusion;
    std::string csv = "true\\pred";
    for (std::size_t c = 0; c < m.cols; ++c) csv += fmt::format(",{}", c);
    csv += '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
      csv += fmt::format("{}", r);
      for (std::size_t c = 0; c < m.cols; ++c) csv += fmt::format(",{}", m(r, c));
      csv += '\n';
    }
    write_file_bytes(dir / "confusion.csv", csv);

    const auto per_cat = per_category_accuracy(m);
    std::string per = "category,num_test,accuracy\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
      std::int64_t total = 0;
      for (std::size_t c = 0; c < m.cols; ++c) total += m(r, c);
      per += fmt::format("{},{},{}\n", r, total, total == 0 ? std::string() : number(per_cat[r]));
    }
    write_file_bytes(dir / "per_category.csv", per);
    text += fmt::format("\nConfusion matrix of {} written to confusion.csv.\n", report.confusion_source);
  }
  write_file_bytes(dir / "summary.txt", text);
}

}  // namespace randrnn
