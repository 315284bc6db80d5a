#include "grsaudit/explain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "grsaudit/errors.hpp"

namespace grsaudit {

std::vector<std::string> RuleSet::labels() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.push_back(c.label);
  if (std::find(out.begin(), out.end(), threshold_label) == out.end()) out.push_back(threshold_label);
  return out;
}

RuleSet default_ruleset() {
  RuleSet r;
  r.categories = {
      {"average",
       {"average", "averaged", "averages", "averaging", "mean", "mean rating", "average rating", "average score",
        "averaged the ratings"}},
      {"sum", {"sum", "summed", "summing", "total", "total rating", "total score", "added up", "add up", "sum of ratings"}},
      {"user_similarity",
       {"user similarity", "similar users", "similar preferences", "similar tastes", "similarity between users",
        "similar ratings", "shared preferences", "common preferences", "users who agree"}},
      {"item_similarity",
       {"item similarity", "similar items", "similarity between items", "items that are similar", "related items",
        "comparable items", "items similar to"}},
      {"diversity", {"diversity", "diverse", "variety", "varied selection", "mix of", "wide range", "different types"}},
      {"popularity_undefined",
       {"popular", "popularity", "most popular", "well liked", "widely liked", "highly rated", "liked by the group",
        "liked by most", "favorites", "crowd pleaser", "certain threshold", "threshold"}},
      {"least_misery",
       {"least misery", "misery", "lowest rating", "minimum rating", "lowest score", "nobody is unhappy",
        "no one is unhappy", "nobody dislikes"}},
      {"most_pleasure",
       {"most pleasure", "pleasure", "highest rating", "highest individual rating", "highest single rating",
        "maximum rating", "top rating"}},
      {"approval", {"approval", "approval voting", "approved", "approve", "vote", "votes", "voted", "voting", "counted how many"}},
  };
  r.negation_cues = {"not", "no", "never", "without", "didn't", "don't", "doesn't", "wasn't", "isn't", "cannot",
                     "neither", "nor", "instead of", "rather than"};
  r.negation_window = 3;
  r.similarity_threshold = 0.85;
  r.threshold_phrases = {"ratings above {value}", "rating above {value}", "above {value}", "at least {value}",
                         "higher than {value}", "greater than {value}", "more than {value}", "over {value}",
                         "exceeding {value}", "{value} or higher", "{value} or above", "{value} or more",
                         "threshold of {value}", "minimum of {value}"};
  r.non_rating_units = {"users", "members", "people", "persons", "items", "of", "out", "times"};
  return r;
}

void validate(const RuleSet& r) {
  if (r.categories.empty()) throw ConfigError("ruleset defines no categories");
  std::unordered_set<std::string> seen;
  for (const auto& c : r.categories) {
    if (c.label.empty()) throw ConfigError("category with empty label");
    if (!seen.insert(c.label).second) throw ConfigError(fmt::format("duplicate category label '{}'", c.label));
    if (c.keyphrases.empty()) throw ConfigError(fmt::format("category '{}' has no keyphrases", c.label));
    for (const auto& k : c.keyphrases) {
      if (tokenize(k).empty()) throw ConfigError(fmt::format("category '{}' has an empty keyphrase", c.label));
    }
  }
  if (!(r.similarity_threshold > 0.0 && r.similarity_threshold <= 1.0))
    throw ConfigError(fmt::format("similarity_threshold must be in (0, 1], got {}", r.similarity_threshold));
  for (const auto& cue : r.negation_cues) {
    if (tokenize(cue).empty()) throw ConfigError("empty negation cue");
  }
  for (const auto& phrase : r.threshold_phrases) {
    if (phrase.find("{value}") == std::string::npos)
      throw ConfigError(fmt::format("threshold phrase '{}' has no {{value}} slot", phrase));
  }
  if (r.threshold_label.empty()) throw ConfigError("threshold_label is empty");
  if (!seen.contains(r.undefined_popularity_label))
    throw ConfigError(fmt::format("undefined_popularity_label '{}' is not a category", r.undefined_popularity_label));
}

void to_json(nlohmann::json& j, const RuleSet& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) cats.push_back({{"label", c.label}, {"keyphrases", c.keyphrases}});
  j = nlohmann::json{{"categories", std::move(cats)},
                     {"negation_cues", r.negation_cues},
                     {"negation_window", r.negation_window},
                     {"similarity_threshold", r.similarity_threshold},
                     {"threshold_phrases", r.threshold_phrases},
                     {"non_rating_units", r.non_rating_units},
                     {"threshold_label", r.threshold_label},
                     {"undefined_popularity_label", r.undefined_popularity_label}};
}

void from_json(const nlohmann::json& j, RuleSet& r) {
  const RuleSet defaults;
  r = RuleSet{};
  for (const auto& c : j.at("categories")) {
    r.categories.push_back({c.at("label").get<std::string>(), c.at("keyphrases").get<std::vector<std::string>>()});
  }
  r.negation_cues = j.value("negation_cues", std::vector<std::string>{});
  r.negation_window = j.value("negation_window", defaults.negation_window);
  r.similarity_threshold = j.value("similarity_threshold", defaults.similarity_threshold);
  r.threshold_phrases = j.value("threshold_phrases", std::vector<std::string>{});
  r.non_rating_units = j.value("non_rating_units", std::vector<std::string>{});
  r.threshold_label = j.value("threshold_label", defaults.threshold_label);
  r.undefined_popularity_label = j.value("undefined_popularity_label", defaults.undefined_popularity_label);
}

RuleSet load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open ruleset {}", path.string()));
  RuleSet r;
  try {
    r = nlohmann::json::parse(in).get<RuleSet>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed ruleset {}: {}", path.string(), e.what()));
  }
  validate(r);
  return r;
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_clause_break(char c) {
  return c == ',' || c == ';' || c == ':' || c == '.' || c == '!' || c == '?' || c == '\n';
}

bool is_number(std::string_view s) {
  if (s.empty() || !std::isdigit(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; });
}

std::string join(const std::vector<Token>& tokens, std::size_t first, std::size_t last) {
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (i > first) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

std::vector<std::string> token_texts(std::string_view phrase) {
  std::vector<std::string> out;
  for (auto& t : tokenize(phrase)) out.push_back(std::move(t.text));
  return out;
}

// True when `cue` occupies the tokens ending at end_index, all within `clause`.
bool cue_ends_at(const std::vector<Token>& tokens, std::size_t end_index, const std::vector<std::string>& cue,
                 std::size_t clause) {
  if (cue.empty() || end_index + 1 < cue.size()) return false;
  const std::size_t start = end_index + 1 - cue.size();
  for (std::size_t i = 0; i < cue.size(); ++i) {
    const auto& t = tokens[start + i];
    if (t.clause != clause || t.text != cue[i]) return false;
  }
  return true;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t clause = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      Token t;
      t.begin = i;
      t.clause = clause;
      const bool numeric = std::isdigit(c) != 0;
      while (i < n) {
        const auto d = static_cast<unsigned char>(text[i]);
        if (numeric && d == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i + 1])) &&
            t.text.find('.') == std::string::npos) {
          t.text += '.';
          ++i;
          continue;
        }
        // ASCII apostrophe or U+2019 between letters stays in the word.
        if (d == '\'' && !t.text.empty() && i + 1 < n && std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
          t.text += '\'';
          ++i;
          continue;
        }
        if (d == 0xE2 && i + 2 < n && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            static_cast<unsigned char>(text[i + 2]) == 0x99) {
          if (!t.text.empty() && i + 3 < n && std::isalpha(static_cast<unsigned char>(text[i + 3]))) {
            t.text += '\'';
            i += 3;
            continue;
          }
          break;
        }
        if (!is_word_byte(d)) break;
        t.text += static_cast<char>(std::tolower(d));
        ++i;
      }
      t.end = i;
      tokens.push_back(std::move(t));
      continue;
    }
    if (is_clause_break(static_cast<char>(c))) ++clause;
    ++i;
  }
  return tokens;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

bool detect_negation(const std::vector<Token>& tokens, TokenSpan span, const std::vector<std::string>& cues,
                     std::size_t window) {
  if (span.first >= tokens.size() || span.first >= span.last || span.last > tokens.size())
    throw ValidationError("negation span outside token bounds");
  const std::size_t clause = tokens[span.first].clause;
  std::vector<std::vector<std::string>> cue_tokens;
  for (const auto& cue : cues) cue_tokens.push_back(token_texts(cue));
  for (std::size_t distance = 1; distance <= window && distance <= span.first; ++distance) {
    const std::size_t end_index = span.first - distance;
    if (tokens[end_index].clause != clause) break;
    for (const auto& cue : cue_tokens) {
      if (cue_ends_at(tokens, end_index, cue, clause)) return true;
    }
  }
  return false;
}

std::vector<ExtractedThreshold> extract_thresholds(std::string_view text, const RuleSet& rules) {
  const auto tokens = tokenize(text);
  struct Template {
    std::vector<std::string> parts;  // empty string marks the numeric slot
  };
  std::vector<Template> templates;
  for (const auto& phrase : rules.threshold_phrases) {
    Template t;
    std::size_t pos = 0;
    while (pos <= phrase.size()) {
      const auto slot = phrase.find("{value}", pos);
      const auto literal = phrase.substr(pos, slot == std::string::npos ? std::string::npos : slot - pos);
      for (auto& w : token_texts(literal)) t.parts.push_back(std::move(w));
      if (slot == std::string::npos) break;
      t.parts.emplace_back();
      pos = slot + 7;
    }
    templates.push_back(std::move(t));
  }
  const std::unordered_set<std::string> units(rules.non_rating_units.begin(), rules.non_rating_units.end());

  // number token index -> (first, last) token span of the longest template match
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> captures;
  for (const auto& t : templates) {
    const std::size_t len = t.parts.size();
    for (std::size_t start = 0; start + len <= tokens.size(); ++start) {
      std::size_t number_at = tokens.size();
      bool ok = true;
      for (std::size_t p = 0; p < len && ok; ++p) {
        const auto& tok = tokens[start + p];
        if (tok.clause != tokens[start].clause) ok = false;
        else if (t.parts[p].empty()) {
          ok = is_number(tok.text);
          number_at = start + p;
        } else ok = tok.text == t.parts[p];
      }
      if (!ok || number_at == tokens.size()) continue;
      double value = 0;
      const auto& num = tokens[number_at].text;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
      if (ec != std::errc() || value < 0.0 || value > 100.0) continue;
      if (number_at + 1 < tokens.size() && tokens[number_at + 1].clause == tokens[number_at].clause &&
          units.contains(tokens[number_at + 1].text))
        continue;
      auto [it, inserted] = captures.try_emplace(number_at, start, start + len);
      if (!inserted && len > it->second.second - it->second.first) it->second = {start, start + len};
    }
  }
  std::vector<ExtractedThreshold> out;
  for (const auto& [number_at, span] : captures) {
    double value = 0;
    const auto& num = tokens[number_at].text;
    std::from_chars(num.data(), num.data() + num.size(), value);
    const auto begin = tokens[span.first].begin;
    const auto end = tokens[span.second - 1].end;
    out.push_back({value, std::string(text.substr(begin, end - begin))});
  }
  return out;
}

ExplanationVerdict classify_explanation(std::string_view text, const RuleSet& rules) {
  ExplanationVerdict verdict;
  const auto tokens = tokenize(text);
  if (tokens.empty()) return verdict;

  constexpr std::size_t kMaxWindow = 4;
  const double threshold = rules.similarity_threshold;

  // Window strings, built once: windows[start][size - 1].
  std::vector<std::vector<std::string>> windows(tokens.size());
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    for (std::size_t w = 1; w <= kMaxWindow && s + w <= tokens.size(); ++w) {
      if (tokens[s + w - 1].clause != tokens[s].clause) break;
      windows[s].push_back(join(tokens, s, s + w));
    }
  }

  struct Candidate {
    std::size_t first, last;
    double sim;
  };
  struct Found {
    KeyphraseMatch match;
    std::size_t first, last;
  };
  std::vector<Found> found;
  for (const auto& category : rules.categories) {
    for (const auto& phrase : category.keyphrases) {
      const auto phrase_tokens = tokenize(phrase);
      const std::string key = join(phrase_tokens, 0, phrase_tokens.size());
      std::vector<Candidate> candidates;
      for (std::size_t s = 0; s < tokens.size(); ++s) {
        for (std::size_t w = 0; w < windows[s].size(); ++w) {
          const auto& win = windows[s][w];
          const double longest = static_cast<double>(std::max(win.size(), key.size()));
          const double gap = win.size() > key.size() ? win.size() - key.size() : key.size() - win.size();
          if (1.0 - gap / longest < threshold) continue;
          const double sim = similarity(win, key);
          if (sim >= threshold) candidates.push_back({s, s + w + 1, sim});
        }
      }
      // Best non-overlapping windows per keyphrase.
      std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.first < b.first;
      });
      std::vector<Candidate> kept;
      for (const auto& c : candidates) {
        const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) { return c.first < k.last && k.first < c.last; });
        if (!overlaps) kept.push_back(c);
      }
      std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.first < b.first; });
      for (const auto& c : kept) {
        KeyphraseMatch m;
        m.label = category.label;
        m.keyphrase = phrase;
        m.span = std::string(text.substr(tokens[c.first].begin, tokens[c.last - 1].end - tokens[c.first].begin));
        m.similarity = c.sim;
        m.negated = detect_negation(tokens, {c.first, c.last}, rules.negation_cues, rules.negation_window);
        found.push_back({std::move(m), c.first, c.last});
      }
    }
  }

  auto overlap = [](const Found& a, const Found& b) { return a.first < b.last && b.first < a.last; };
  // A span belongs to its closest keyphrase: "minimum rating" must not also
  // count as a near miss of "maximum rating".
  std::vector<bool> dropped(found.size(), false);
  for (std::size_t i = 0; i < found.size(); ++i) {
    for (std::size_t j = 0; j < found.size(); ++j) {
      if (found[j].match.label != found[i].match.label && overlap(found[i], found[j]) &&
          found[j].match.similarity > found[i].match.similarity) {
        dropped[i] = true;
        break;
      }
    }
  }
  // Negating a phrase negates the shorter matches of the same label inside it
  // ("not ... most popular" also covers "popular").
  std::vector<bool> negated(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) negated[i] = found[i].match.negated;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (dropped[i] || !found[i].match.negated) continue;
    for (std::size_t j = 0; j < found.size(); ++j)
      if (!dropped[j] && found[j].match.label == found[i].match.label && overlap(found[i], found[j])) negated[j] = true;
  }
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (dropped[i]) continue;
    found[i].match.negated = negated[i];
    if (!negated[i]) verdict.labels.insert(found[i].match.label);
    verdict.matches.push_back(std::move(found[i].match));
  }

  verdict.extracted_thresholds = extract_thresholds(text, rules);
  if (!verdict.extracted_thresholds.empty()) {
    verdict.labels.erase(rules.undefined_popularity_label);
    verdict.labels.insert(rules.threshold_label);
  }
  return verdict;
}

void to_json(nlohmann::json& j, const ExplanationVerdict& v) {
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : v.matches) {
    matches.push_back({{"label", m.label}, {"keyphrase", m.keyphrase}, {"span", m.span}, {"similarity", m.similarity}, {"negated", m.negated}});
  }
  nlohmann::json thresholds = nlohmann::json::array();
  for (const auto& t : v.extracted_thresholds) thresholds.push_back({{"value", t.value}, {"span", t.span}});
  j = nlohmann::json{{"labels", v.labels}, {"matches", std::move(matches)}, {"thresholds", std::move(thresholds)}};
}

void from_json(const nlohmann::json& j, ExplanationVerdict& v) {
  v = ExplanationVerdict{};
  v.labels = j.at("labels").get<std::set<std::string>>();
  for (const auto& m : j.value("matches", nlohmann::json::array())) {
    v.matches.push_back({m.at("label").get<std::string>(), m.at("keyphrase").get<std::string>(), m.at("span").get<std::string>(),
                         m.at("similarity").get<double>(), m.at("negated").get<bool>()});
  }
  for (const auto& t : j.value("thresholds", nlohmann::json::array())) {
    v.extracted_thresholds.push_back({t.at("value").get<double>(), t.at("span").get<std::string>()});
  }
}

double cohens_kappa(const std::vector<std::set<std::string>>& a, const std::vector<std::set<std::string>>& b,
                    std::string_view label) {
  if (a.size() != b.size()) throw ValidationError(fmt::format("label lists differ in length ({} vs {})", a.size(), b.size()));
  if (a.empty()) throw ValidationError("no items to compare");
  const std::string key(label);
  double agree = 0, a_yes = 0, b_yes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i].contains(key);
    const bool y = b[i].contains(key);
    agree += x == y ? 1 : 0;
    a_yes += x ? 1 : 0;
    b_yes += y ? 1 : 0;
  }
  const double n = static_cast<double>(a.size());
  const double p_o = agree / n;
  const double pa = a_yes / n, pb = b_yes / n;
  const double p_e = pa * pb + (1 - pa) * (1 - pb);
  if (p_e >= 1.0) throw DegenerateError(fmt::format("kappa undefined for '{}': both coders use a single value throughout", label));
  return (p_o - p_e) / (1 - p_e);
}

std::vector<LabeledExplanation> load_fixtures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open fixtures {}", path.string()));
  std::vector<LabeledExplanation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("text").get<std::string>(), j.at("gold_labels").get<std::set<std::string>>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

}  // namespace grsaudit
