#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartmark/cot.hpp"
#include "json.hpp"

namespace chartmark {

enum class ExtractMode { direct, match };

std::string_view to_string(ExtractMode m);
ExtractMode extract_mode_from_string(std::string_view s);

// match: content of the last \box{...} (or \boxed{...}), else the last numeric
// token. direct: the whole reply. Throws ExtractionError when nothing usable
// remains.
Answer extract_answer(std::string_view raw, ExtractMode mode);

struct MatchOptions {
  // Ignore trailing periods and the word "the" when comparing text answers.
  bool lenient_text = true;
};

enum class MatchOutcome { correct, incorrect, type_mismatch };

MatchOutcome compare_answers(const Answer& pred, const Answer& gt, double margin, const MatchOptions& opts = {});

// Numbers: relative error to a non-zero gt at most `margin`, exact match for
// gt == 0. Text: case-insensitive trimmed equality. A number/text mismatch is
// incorrect. Throws ValidationError for a negative margin.
bool relaxed_match(const Answer& pred, const Answer& gt, double margin, const MatchOptions& opts = {});

std::string normalize_text_answer(std::string_view s, bool lenient);

struct Prediction {
  std::string sample_id;
  std::string raw_text;
  std::optional<std::string> group;
};

struct GoldEntry {
  std::string sample_id;
  Answer answer;
  std::optional<std::string> group;
};

// JSONL readers; FormatError on malformed lines or duplicate ids.
// `group_key` names the gold field used as the group label.
std::vector<GoldEntry> parse_gold_jsonl(std::string_view text, const std::string& group_key = "group");
std::vector<Prediction> parse_predictions_jsonl(std::string_view text);

inline const std::vector<double> kDefaultMargins{0.05, 0.10, 0.20};

struct EvalOptions {
  std::vector<double> margins = kDefaultMargins;
  ExtractMode mode = ExtractMode::match;
  MatchOptions match;
};

struct GroupResult {
  std::size_t total = 0;
  std::vector<std::size_t> correct;  // per margin
  std::vector<double> accuracy;      // per margin
};

struct EvalReport {
  std::vector<double> margins;
  std::map<std::string, GroupResult> groups;
  std::vector<double> avg;  // unweighted mean of group accuracies
  GroupResult all;          // pooled over every sample
  std::size_t extraction_failures = 0;
  std::size_t type_mismatches = 0;
  std::size_t missing_predictions = 0;
};

// Every gold entry is scored; a gold entry without a prediction counts as
// incorrect. The group of a sample is the gold label, else the prediction's,
// else "all". Throws MissingGoldError for a prediction with no gold entry,
// ValidationError for an empty or negative margin list.
EvalReport evaluate(const std::vector<Prediction>& predictions, const std::vector<GoldEntry>& gold,
                    const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& r);
// Aligned text table: one row per group plus Avg. and ALL, one column per margin.
std::string format_table(const EvalReport& r);

}  // namespace chartmark
