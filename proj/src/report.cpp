#include "grsaudit/report.hpp"

#include <fstream>
#include <set>

#include <fmt/core.h>

#include "grsaudit/errors.hpp"

namespace grsaudit {

void ReportSet::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write report {}", (dir / name).string()));
    out << content;
  }
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

std::string md_rule(std::size_t columns) {
  std::string out = "|";
  for (std::size_t i = 0; i < columns; ++i) out += " --- |";
  return out + "\n";
}

// Numeric groups are zero-padded so they sort by value; strip that for display.
std::string display(const std::string& group) {
  if (group.empty() || group.find_first_not_of("0123456789") != std::string::npos) return group;
  const auto first = group.find_first_not_of('0');
  return first == std::string::npos ? "0" : group.substr(first);
}

struct Axes {
  std::set<std::string> generators;
  std::set<StrategyKind, StrategyLess> strategies;
  std::set<std::size_t> item_counts;
};

void render_ndcg(const std::vector<EvalRecord>& records, const std::vector<FailureRecord>& failures, ReportSet& out) {
  std::string csv = "generator,strategy,item_count,mean_ndcg,n,failures,failure_rate\n";
  std::string md = "# Mean NDCG@k per generator and reference strategy\n\n";
  if (records.empty() && failures.empty()) {
    out.files["ndcg_by_strategy.csv"] = csv;
    out.files["ndcg_by_strategy.md"] = md + "No records.\n";
    return;
  }
  const auto table = summarize(records, failures);
  Axes axes;
  for (const auto& [key, cell] : table) {
    axes.generators.insert(key.generator);
    axes.strategies.insert(key.strategy);
    axes.item_counts.insert(key.item_count);
    csv += fmt::format("{},{},{},{:.6f},{},{},{:.4f}\n", csv_field(key.generator), csv_field(key.strategy.name()),
                       key.item_count, cell.mean_ndcg, cell.count, cell.failures, cell.failure_rate());
  }
  std::vector<std::string> header{"Generator"};
  for (const auto& s : axes.strategies)
    for (auto n : axes.item_counts) header.push_back(fmt::format("{} {}", s.name(), n));
  for (auto n : axes.item_counts) header.push_back(fmt::format("Fail % {}", n));
  md += md_row(header) + md_rule(header.size());
  for (const auto& g : axes.generators) {
    std::vector<std::string> row{g};
    for (const auto& s : axes.strategies) {
      for (auto n : axes.item_counts) {
        const auto it = table.find({g, s, n});
        row.push_back(it == table.end() || it->second.count == 0 ? "-" : fmt::format("{:.2f}", it->second.mean_ndcg));
      }
    }
    for (auto n : axes.item_counts) {
      double rate = -1;
      for (const auto& s : axes.strategies) {
        const auto it = table.find({g, s, n});
        if (it != table.end()) rate = it->second.failure_rate();
      }
      row.push_back(rate < 0 ? "-" : fmt::format("{:.1f}", 100.0 * rate));
    }
    md += md_row(row);
  }
  out.files["ndcg_by_strategy.csv"] = csv;
  out.files["ndcg_by_strategy.md"] = md;
}

template <typename Group>
void render_categories(const std::string& stem, const std::string& title, const std::string& group_column,
                       const std::vector<VerdictRecord>& verdicts, const std::vector<std::string>& labels,
                       Group group_of, ReportSet& out) {
  // (generator, group) -> (explanations, per-label counts)
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::map<std::string, std::size_t>>> counts;
  for (const auto& v : verdicts) {
    const auto group = group_of(v);
    if (!group) continue;
    auto& [n, per_label] = counts[{v.generator, *group}];
    ++n;
    for (const auto& l : v.verdict.labels) ++per_label[l];
  }
  std::string csv = fmt::format("generator,{},label,percent,count,n\n", group_column);
  std::string md = fmt::format("# {}\n\n", title);
  std::vector<std::string> header{"Generator", group_column, "n"};
  for (const auto& l : labels) header.push_back(l);
  md += md_row(header) + md_rule(header.size());
  for (const auto& [key, value] : counts) {
    const auto& [n, per_label] = value;
    std::vector<std::string> row{key.first, display(key.second), std::to_string(n)};
    for (const auto& l : labels) {
      const auto it = per_label.find(l);
      const std::size_t c = it == per_label.end() ? 0 : it->second;
      const double pct = 100.0 * static_cast<double>(c) / static_cast<double>(n);
      csv += fmt::format("{},{},{},{:.2f},{},{}\n", csv_field(key.first), csv_field(display(key.second)), csv_field(l), pct, c, n);
      row.push_back(fmt::format("{:.1f}", pct));
    }
    md += md_row(row);
  }
  if (counts.empty()) md += "\nNo explanations.\n";
  out.files[stem + ".csv"] = csv;
  out.files[stem + ".md"] = md;
}

void render_delta(const std::vector<EvalRecord>& records, const std::unordered_map<std::string, StructureClass>& labels,
                  ReportSet& out) {
  const auto report = delta_ndcg(records, labels);
  std::string csv = "generator,strategy,item_count,delta,uniform_mean,divergent_mean,n_uniform,n_divergent\n";
  std::map<std::pair<std::string, StrategyKind>, std::map<std::size_t, double>, decltype([](const auto& a, const auto& b) {
             if (a.first != b.first) return a.first < b.first;
             return StrategyLess{}(a.second, b.second);
           })>
      grid;
  std::set<std::size_t> item_counts;
  for (const auto& e : report.entries) {
    csv += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{},{}\n", csv_field(e.key.generator), csv_field(e.key.strategy.name()),
                       e.key.item_count, e.delta, e.uniform_mean, e.divergent_mean, e.uniform_count, e.divergent_count);
    grid[{e.key.generator, e.key.strategy}][e.key.item_count] = e.delta;
    item_counts.insert(e.key.item_count);
  }
  for (const auto& r : records) item_counts.insert(r.item_count);
  std::string md =
      "# Delta NDCG@k (uniform minus divergent)\n\nPositive values mean the generator matches the strategy better on "
      "uniform groups; 0 means equal performance.\n\n";
  std::vector<std::string> header{"Generator", "Strategy"};
  for (auto n : item_counts) header.push_back(fmt::format("{} items", n));
  md += md_row(header) + md_rule(header.size());
  for (const auto& [key, by_count] : grid) {
    std::vector<std::string> row{key.first, key.second.name()};
    for (auto n : item_counts) {
      const auto it = by_count.find(n);
      row.push_back(it == by_count.end() ? "-" : fmt::format("{:+.3f}", it->second));
    }
    md += md_row(row);
  }
  if (!report.warnings.empty()) {
    md += "\nOmitted:\n\n";
    for (const auto& w : report.warnings) md += "- " + w + "\n";
  }
  out.files["delta_ndcg.csv"] = csv;
  out.files["delta_ndcg.md"] = md;
  out.warnings.insert(out.warnings.end(), report.warnings.begin(), report.warnings.end());
}

}  // namespace

ReportSet render_reports(const std::vector<EvalRecord>& records, const std::vector<FailureRecord>& failures,
                         const std::vector<VerdictRecord>& verdicts,
                         const std::unordered_map<std::string, StructureClass>& labels,
                         const std::vector<std::string>& category_labels) {
  ReportSet out;
  render_ndcg(records, failures, out);
  render_categories(
      "categories_by_items", "Explanations per category label (%) by item count", "item_count", verdicts,
      category_labels, [](const VerdictRecord& v) -> std::optional<std::string> { return fmt::format("{:06}", v.item_count); },
      out);
  render_categories(
      "categories_by_structure", "Explanations per category label (%) by group structure", "structure", verdicts,
      category_labels,
      [&labels](const VerdictRecord& v) -> std::optional<std::string> {
        const auto it = labels.find(v.scenario_id);
        const StructureClass c = it == labels.end() ? v.structure : it->second;
        if (c == StructureClass::kIntermediate) return std::nullopt;
        return std::string(to_string(c));
      },
      out);
  render_delta(records, labels, out);
  return out;
}

}  // namespace grsaudit
