#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "chartmark/chart_spec.hpp"
#include "chartmark/renderer.hpp"
#include "json.hpp"

namespace chartmark {

class LlmClient;

// Unit-free answer: a number (optionally flagged as a percentage) or a short
// text span.
struct Answer {
  std::variant<double, std::string> value;
  bool percent = false;

  bool is_numeric() const { return std::holds_alternative<double>(value); }
  double number() const { return std::get<double>(value); }
  const std::string& text() const { return std::get<std::string>(value); }
  bool operator==(const Answer&) const = default;
};

Answer numeric_answer(double v, bool percent = false);
Answer text_answer(std::string s);

// Reads "42", "1,234.5", "37.5%" as numbers and anything else as text.
Answer parse_answer_text(std::string_view s);
std::string answer_to_string(const Answer& a);
// Numbers stay JSON numbers; percentages become "37.5%" strings.
nlohmann::json to_json(const Answer& a);
Answer answer_from_json(const nlohmann::json& j);

enum class StepKind { Grounding, Reasoning };

std::string_view to_string(StepKind k);

struct Step {
  int index = 0;
  StepKind kind = StepKind::Reasoning;
  std::string text;
  std::optional<ElementRef> target;
  bool operator==(const Step&) const = default;
};

struct CotSample {
  std::string chart_id;
  std::string question;
  Answer answer;
  std::vector<Step> steps;

  std::size_t grounding_count() const;
  std::size_t reasoning_count() const;
  bool operator==(const CotSample&) const = default;
};

nlohmann::json to_json(const CotSample& s);
std::string serialize_cot(const CotSample& s);

// FormatError: not JSON, not an object, or a field of the wrong type.
// IntegrityError: missing key, unknown step kind, Grounding step without a
// target, Reasoning step with one, empty text, non-contiguous indices.
CotSample validate_cot(std::string_view document);

// Throws IntegrityError when a Grounding target has no entry in the chart's
// geometry.
void check_targets(const CotSample& sample, const GeometryMap& geometry);

// Deterministic question + steps for a spec: datapoint lookup or per-series
// max/min for bar and line charts, wedge share for pies.
CotSample generate_cot_rule_based(const ChartSpec& spec, std::uint64_t seed);

// Value a sample's answer should equal, recomputed from spec data via the
// last Grounding step that targets a datapoint (pie: the wedge's share of the
// total, one decimal). Empty when no datapoint is grounded.
std::optional<double> recompute_answer(const CotSample& sample, const ChartSpec& spec);

// Sends the chain-of-thought prompt with the spec in the code slot, validates
// the reply and retries once. Throws ClientError, or the FormatError /
// IntegrityError of the second attempt.
CotSample generate_cot_llm(const ChartSpec& spec, LlmClient& client, std::uint64_t seed = 0);

// Strips Markdown code fences and surrounding prose, returning the outermost
// JSON object in a teacher reply (or the input unchanged).
std::string extract_json_block(std::string_view reply);

}  // namespace chartmark
