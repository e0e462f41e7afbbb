#include "chartmark/cot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <regex>

#include "chartmark/error.hpp"
#include "chartmark/llm_client.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

Answer numeric_answer(double v, bool percent) { return {v, percent}; }
Answer text_answer(std::string s) { return {std::move(s), false}; }

Answer parse_answer_text(std::string_view raw) {
  std::string s = trim(raw);
  bool percent = false;
  if (s.ends_with('%')) {
    percent = true;
    s = trim(std::string_view(s).substr(0, s.size() - 1));
  }
  static const std::regex plain(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  static const std::regex grouped(R"([-+]?\d{1,3}(,\d{3})+(\.\d+)?)");
  std::string candidate = s;
  if (candidate.ends_with('.') && candidate.size() > 1) candidate.pop_back();
  if (std::regex_match(candidate, grouped)) {
    candidate.erase(std::remove(candidate.begin(), candidate.end(), ','), candidate.end());
  }
  if (std::regex_match(candidate, plain)) {
    const double v = std::strtod(candidate.c_str(), nullptr);
    if (std::isfinite(v)) return numeric_answer(v, percent);
  }
  return text_answer(std::string(trim(raw)));
}

std::string answer_to_string(const Answer& a) {
  if (!a.is_numeric()) return a.text();
  return format_number(a.number()) + (a.percent ? "%" : "");
}

json to_json(const Answer& a) {
  if (a.is_numeric() && !a.percent) return a.number();
  return answer_to_string(a);
}

Answer answer_from_json(const json& j) {
  if (j.is_number()) return numeric_answer(j.get<double>());
  if (j.is_string()) return parse_answer_text(j.get<std::string>());
  throw FormatError("answer must be a number or a string");
}

std::string_view to_string(StepKind k) { return k == StepKind::Grounding ? "Grounding" : "Reasoning"; }

std::size_t CotSample::grounding_count() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const Step& s) { return s.kind == StepKind::Grounding; }));
}

std::size_t CotSample::reasoning_count() const { return steps.size() - grounding_count(); }

json to_json(const CotSample& s) {
  json steps = json::array();
  for (const auto& st : s.steps) {
    json j = {{"index", st.index}, {"kind", std::string(to_string(st.kind))}, {"text", st.text}};
    if (st.target) j["target"] = to_json(*st.target);
    steps.push_back(std::move(j));
  }
  return {{"chart_id", s.chart_id}, {"question", s.question}, {"answer", to_json(s.answer)}, {"steps", steps}};
}

std::string serialize_cot(const CotSample& s) { return to_json(s).dump(); }

namespace {

const json& require_key(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw IntegrityError(std::string("missing required key '") + key + "'");
  return *it;
}

std::string require_text(const json& j, const char* key) {
  const auto& v = require_key(j, key);
  if (!v.is_string()) throw FormatError(std::string("'") + key + "' must be a string");
  auto s = v.get<std::string>();
  if (trim(s).empty()) throw IntegrityError(std::string("'") + key + "' must be non-empty");
  return s;
}

}  // namespace

CotSample validate_cot(std::string_view document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("CoT document is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("CoT document must be a JSON object");

  CotSample out;
  out.chart_id = require_text(j, "chart_id");
  out.question = require_text(j, "question");
  out.answer = answer_from_json(require_key(j, "answer"));
  if (!out.answer.is_numeric() && trim(out.answer.text()).empty()) throw IntegrityError("answer must be non-empty");

  const auto& steps = require_key(j, "steps");
  if (!steps.is_array()) throw FormatError("'steps' must be an array");
  if (steps.empty()) throw IntegrityError("steps must be non-empty");
  for (const auto& st : steps) {
    if (!st.is_object()) throw FormatError("steps entries must be objects");
    Step step;
    const auto& index = require_key(st, "index");
    if (!index.is_number_integer()) throw FormatError("step 'index' must be an integer");
    step.index = index.get<int>();
    const auto kind = require_text(st, "kind");
    if (kind == "Grounding") {
      step.kind = StepKind::Grounding;
    } else if (kind == "Reasoning") {
      step.kind = StepKind::Reasoning;
    } else {
      throw IntegrityError("unknown step kind '" + kind + "'");
    }
    step.text = require_text(st, "text");
    auto target = st.find("target");
    if (target != st.end() && !target->is_null()) step.target = element_ref_from_json(*target);
    if (step.kind == StepKind::Grounding && !step.target) {
      throw IntegrityError("Grounding step " + std::to_string(step.index) + " has no target");
    }
    if (step.kind == StepKind::Reasoning && step.target) {
      throw IntegrityError("Reasoning step " + std::to_string(step.index) + " must not carry a target");
    }
    out.steps.push_back(std::move(step));
  }
  for (std::size_t i = 0; i < out.steps.size(); ++i) {
    if (out.steps[i].index != static_cast<int>(i)) throw IntegrityError("step indices are non-contiguous");
  }
  return out;
}

void check_targets(const CotSample& sample, const GeometryMap& geometry) {
  for (const auto& st : sample.steps) {
    if (st.target && !geometry.find(*st.target)) {
      throw IntegrityError("step " + std::to_string(st.index) + " targets missing element " + describe(*st.target));
    }
  }
}

namespace {

const Series* find_series(const ChartSpec& spec, const std::string& name) {
  for (const auto& s : spec.series) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<std::size_t> find_category(const ChartSpec& spec, const std::string& name) {
  auto it = std::find(spec.x_labels.begin(), spec.x_labels.end(), name);
  if (it == spec.x_labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - spec.x_labels.begin());
}

double pie_share(const Series& s, std::size_t c) {
  const double total = std::accumulate(s.values.begin(), s.values.end(), 0.0);
  return round_decimals(s.values[c] / total * 100.0, 1);
}

class StepList {
 public:
  void ground(std::string text, ElementRef target) {
    steps_.push_back({static_cast<int>(steps_.size()), StepKind::Grounding, std::move(text), std::move(target)});
  }
  void reason(std::string text) {
    steps_.push_back({static_cast<int>(steps_.size()), StepKind::Reasoning, std::move(text), std::nullopt});
  }
  std::vector<Step> take() { return std::move(steps_); }

 private:
  std::vector<Step> steps_;
};

}  // namespace

CotSample generate_cot_rule_based(const ChartSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(derive_seed(seed, spec.id, 0xC07));
  CotSample out;
  out.chart_id = spec.id;
  StepList steps;

  if (spec.chart_type == ChartType::pie) {
    const auto& s = spec.series[0];
    const auto c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.x_labels.size()) - 1));
    const auto& cat = spec.x_labels[c];
    const double share = pie_share(s, c);
    out.question = "What percentage of the chart does " + cat + " account for?";
    steps.ground("Locate " + cat + " in the legend to identify its color.",
                 {ElementRole::legend_entry, s.name, cat});
    steps.ground("Find the wedge drawn in the color of " + cat + ".", {ElementRole::datapoint, s.name, cat});
    steps.reason("Comparing the wedge with the whole pie, " + cat + " accounts for " + format_number(share) + "%.");
    out.answer = numeric_answer(share, true);
    out.steps = steps.take();
    return out;
  }

  const bool multi = spec.series.size() > 1;
  const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.series.size()) - 1));
  const auto& s = spec.series[k];
  const double pick = rng.uniform();
  const std::string mark = spec.chart_type == ChartType::bar ? "bar" : "point";
  const std::string where = multi ? " of " + s.name : "";

  enum class Kind { lookup, max, min } kind = pick < 0.6 ? Kind::lookup : pick < 0.8 ? Kind::max : Kind::min;
  std::size_t c;
  if (kind == Kind::lookup) {
    c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.x_labels.size()) - 1));
  } else {
    const auto it = kind == Kind::max ? std::max_element(s.values.begin(), s.values.end())
                                      : std::min_element(s.values.begin(), s.values.end());
    c = static_cast<std::size_t>(it - s.values.begin());
  }
  const auto& cat = spec.x_labels[c];
  const double value = s.values[c];

  switch (kind) {
    case Kind::lookup:
      out.question = multi ? "What is the value of " + s.name + " in " + cat + "?" : "What is the value for " + cat + "?";
      break;
    case Kind::max: out.question = "What is the highest value" + where + " in the chart?"; break;
    case Kind::min: out.question = "What is the lowest value" + where + " in the chart?"; break;
  }

  if (multi) {
    steps.ground("Locate the legend entry for " + s.name + " to identify its color.", {ElementRole::legend_entry, s.name, {}});
  }
  if (kind == Kind::lookup) {
    steps.ground("Find " + cat + " on the x-axis.", {ElementRole::x_tick, {}, cat});
    steps.ground("Locate the " + mark + where + " above " + cat + ".", {ElementRole::datapoint, s.name, cat});
    steps.reason("Reading the " + mark + " against the y-axis gives " + format_number(value) + ".");
  } else {
    const std::string extreme = kind == Kind::max ? "highest" : "lowest";
    steps.ground("Scan the " + mark + "s" + where + " and find the " + extreme + " one, at " + cat + " on the x-axis.",
                 {ElementRole::x_tick, {}, cat});
    steps.ground("Locate the " + mark + where + " above " + cat + ".", {ElementRole::datapoint, s.name, cat});
    steps.reason("Compared with the other " + mark + "s, it is the " + extreme + "; reading it against the y-axis gives " +
                 format_number(value) + ".");
  }
  out.answer = numeric_answer(value);
  out.steps = steps.take();
  return out;
}

std::optional<double> recompute_answer(const CotSample& sample, const ChartSpec& spec) {
  for (auto it = sample.steps.rbegin(); it != sample.steps.rend(); ++it) {
    if (it->kind != StepKind::Grounding || !it->target || it->target->role != ElementRole::datapoint) continue;
    const auto* s = find_series(spec, *it->target->series);
    const auto c = find_category(spec, *it->target->category);
    if (!s || !c) return std::nullopt;
    if (spec.chart_type == ChartType::pie) return pie_share(*s, *c);
    return s->values[*c];
  }
  return std::nullopt;
}

std::string extract_json_block(std::string_view reply) {
  std::string fenced = prompts::last_fenced_block(reply);
  std::string_view body = fenced.empty() ? reply : std::string_view(fenced);
  const auto open = body.find('{');
  const auto close = body.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::string(reply);
  return std::string(body.substr(open, close - open + 1));
}

CotSample generate_cot_llm(const ChartSpec& spec, LlmClient& client, std::uint64_t seed) {
  ChatRequest request;
  request.template_id = std::string(prompts::kCotTemplateId);
  request.chart_id = spec.id;
  request.seed = seed;
  request.messages.push_back({"user", prompts::chain_of_thought(prompts::cot_example(), serialize_spec(spec))});

  for (int attempt = 0;; ++attempt) {
    try {
      CotSample sample = validate_cot(extract_json_block(client.chat(request)));
      if (sample.chart_id != spec.id) {
        throw IntegrityError("reply is for chart '" + sample.chart_id + "', expected '" + spec.id + "'");
      }
      return sample;
    } catch (const FormatError&) {
      if (attempt >= 1) throw;
    } catch (const IntegrityError&) {
      if (attempt >= 1) throw;
    }
  }
}

}  // namespace chartmark
