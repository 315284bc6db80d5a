#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "grsaudit/explain.hpp"
#include "grsaudit/metrics.hpp"

namespace grsaudit {

// Classifier output for one parsed (scenario, generator) response.
struct VerdictRecord {
  std::string scenario_id;
  std::string generator;
  std::size_t item_count = 0;
  StructureClass structure = StructureClass::kIntermediate;
  ExplanationVerdict verdict;
};

struct ReportSet {
  std::map<std::string, std::string> files;  // file name -> contents
  std::vector<std::string> warnings;

  void write(const std::filesystem::path& dir) const;
};

// Renders, as CSV and markdown:
//   ndcg_by_strategy   mean NDCG per generator x strategy x item count, with failure rates
//   categories_by_items     % of explanations per label, generator x item count
//   categories_by_structure % of explanations per label, generator x {divergent, uniform}
//   delta_ndcg         mean(uniform) - mean(divergent) per generator x strategy x item count
// Output depends only on the arguments; input order does not matter.
ReportSet render_reports(const std::vector<EvalRecord>& records, const std::vector<FailureRecord>& failures,
                         const std::vector<VerdictRecord>& verdicts,
                         const std::unordered_map<std::string, StructureClass>& labels,
                         const std::vector<std::string>& category_labels);

}  // namespace grsaudit
