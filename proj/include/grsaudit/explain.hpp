#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace grsaudit {

struct Category {
  std::string label;
  std::vector<std::string> keyphrases;
};

struct RuleSet {
  std::vector<Category> categories;
  std::vector<std::string> negation_cues;
  std::size_t negation_window = 3;
  double similarity_threshold = 0.85;
  // Templates with a "{value}" slot, e.g. "ratings above {value}".
  std::vector<std::string> threshold_phrases;
  // A captured number followed by one of these tokens counts things, not ratings.
  std::vector<std::string> non_rating_units;
  // Label given when a threshold is extracted; it replaces `undefined_popularity_label`.
  std::string threshold_label = "popularity_threshold";
  std::string undefined_popularity_label = "popularity_undefined";

  // Every label the ruleset can emit, in declaration order.
  std::vector<std::string> labels() const;
};

// Shipped keyword lists. They are reconstructions from the strategy
// definitions and observed explanation phrasing, not a published inventory.
RuleSet default_ruleset();

// Throws ConfigError describing the first violated constraint.
void validate(const RuleSet& rules);
RuleSet load_ruleset(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const RuleSet& r);
void from_json(const nlohmann::json& j, RuleSet& r);

// Lower-cased word token. Numbers keep their decimal point; apostrophes stay
// inside words. `clause` increments at , ; : . ! ? and newlines.
struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the source text
  std::size_t end = 0;
  std::size_t clause = 0;
};

std::vector<Token> tokenize(std::string_view text);

std::size_t levenshtein(std::string_view a, std::string_view b);
// 1 - distance / max(len); 1 for two empty strings.
double similarity(std::string_view a, std::string_view b);

struct TokenSpan {
  std::size_t first = 0;  // token index, inclusive
  std::size_t last = 0;   // token index, exclusive
};

// True iff a cue ends within `window` tokens before span.first, in the same clause.
bool detect_negation(const std::vector<Token>& tokens, TokenSpan span, const std::vector<std::string>& cues,
                     std::size_t window);

struct ExtractedThreshold {
  double value = 0.0;
  std::string span;
};

std::vector<ExtractedThreshold> extract_thresholds(std::string_view text, const RuleSet& rules);

struct KeyphraseMatch {
  std::string label;
  std::string keyphrase;
  std::string span;
  double similarity = 0.0;
  bool negated = false;
};

struct ExplanationVerdict {
  std::set<std::string> labels;
  std::vector<KeyphraseMatch> matches;
  std::vector<ExtractedThreshold> extracted_thresholds;
};

ExplanationVerdict classify_explanation(std::string_view text, const RuleSet& rules);

void to_json(nlohmann::json& j, const ExplanationVerdict& v);
void from_json(const nlohmann::json& j, ExplanationVerdict& v);

// Binary-presence Cohen's kappa for one label. Throws ValidationError on
// length mismatch and DegenerateError when chance agreement is 1.
double cohens_kappa(const std::vector<std::set<std::string>>& labels_a,
                    const std::vector<std::set<std::string>>& labels_b, std::string_view label);

struct LabeledExplanation {
  std::string text;
  std::set<std::string> gold_labels;
};

// JSON lines of {"text", "gold_labels"}.
std::vector<LabeledExplanation> load_fixtures(const std::filesystem::path& path);

}  // namespace grsaudit
