#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "chartmark/cot.hpp"
#include "chartmark/error.hpp"
#include "chartmark/llm_client.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/renderer.hpp"

using namespace chartmark;
using nlohmann::json;

namespace {

json fixture() { return json::parse(prompts::cot_example()); }

ChartSpec spec_of(ChartType type, std::size_t n_series, std::uint64_t seed = 1) {
  for (std::size_t i = 0;; ++i) {
    ChartSpec s = generate_spec(seed, i, type);
    if (s.series.size() == n_series) return s;
  }
}

// Value the question asks for, recomputed from spec data for the question's
// own wording, independent of the step list.
double oracle_answer(const ChartSpec& spec, const CotSample& sample) {
  if (spec.chart_type == ChartType::pie) {
    const auto& v = spec.series[0].values;
    const double sum = std::accumulate(v.begin(), v.end(), 0.0);
    for (std::size_t i = 0; i < spec.x_labels.size(); ++i) {
      if (sample.question.find(" " + spec.x_labels[i] + " ") != std::string::npos) {
        return std::round(v[i] / sum * 1000.0) / 10.0;
      }
    }
    ADD_FAILURE() << "no category in " << sample.question;
    return NAN;
  }
  const Series* series = &spec.series[0];
  for (const auto& s : spec.series) {
    if (spec.series.size() > 1 && sample.question.find(" " + s.name + " ") != std::string::npos) series = &s;
  }
  const auto& v = series->values;
  if (sample.question.find("highest") != std::string::npos) return *std::max_element(v.begin(), v.end());
  if (sample.question.find("lowest") != std::string::npos) return *std::min_element(v.begin(), v.end());
  for (std::size_t i = 0; i < spec.x_labels.size(); ++i) {
    if (sample.question.ends_with(" " + spec.x_labels[i] + "?")) return v[i];
  }
  ADD_FAILURE() << "unrecognized question " << sample.question;
  return NAN;
}

}  // namespace

TEST(ValidateCot, FourStepFixture) {
  const CotSample s = validate_cot(fixture().dump());
  EXPECT_EQ(s.steps.size(), 4u);
  EXPECT_EQ(s.grounding_count(), 3u);
  EXPECT_EQ(s.reasoning_count(), 1u);
  EXPECT_EQ(s.answer, numeric_answer(412.5));
  EXPECT_EQ(validate_cot(serialize_cot(s)), s);
}

TEST(ValidateCot, GroundingWithoutTarget) {
  json j = fixture();
  j["steps"][1].erase("target");
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
}

TEST(ValidateCot, NonContiguousIndices) {
  json j = fixture();
  j["steps"][3]["index"] = 4;
  j["steps"].erase(2);
  j["steps"][2]["index"] = 3;
  try {
    validate_cot(j.dump());
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("non-contiguous"), std::string::npos);
  }
}

TEST(ValidateCot, OtherRejections) {
  EXPECT_THROW(validate_cot("not json"), FormatError);
  EXPECT_THROW(validate_cot("[1,2]"), FormatError);
  json j = fixture();
  j.erase("question");
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
  j = fixture();
  j["steps"][0]["kind"] = "Guessing";
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
  j = fixture();
  j["steps"][3]["target"] = {{"role", "title"}};
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
  j = fixture();
  j["steps"][0]["text"] = "  ";
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
  j = fixture();
  j["steps"] = json::array();
  EXPECT_THROW(validate_cot(j.dump()), IntegrityError);
  j = fixture();
  j["steps"][0]["index"] = "zero";
  EXPECT_THROW(validate_cot(j.dump()), FormatError);
}

TEST(RuleBased, SingleSeriesBar) {
  const ChartSpec spec = spec_of(ChartType::bar, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CotSample s = generate_cot_rule_based(spec, seed);
    EXPECT_EQ(s.grounding_count(), 2u);
    EXPECT_EQ(s.reasoning_count(), 1u);
    EXPECT_EQ(s.steps.back().kind, StepKind::Reasoning);
    EXPECT_DOUBLE_EQ(s.answer.number(), oracle_answer(spec, s));
  }
}

TEST(RuleBased, MultiSeriesLineStartsWithLegend) {
  const ChartSpec spec = spec_of(ChartType::line, 3);
  const CotSample s = generate_cot_rule_based(spec, 4);
  ASSERT_TRUE(s.steps[0].target);
  EXPECT_EQ(s.steps[0].target->role, ElementRole::legend_entry);
}

TEST(RuleBased, PieShare) {
  const ChartSpec spec = spec_of(ChartType::pie, 1);
  const CotSample s = generate_cot_rule_based(spec, 2);
  EXPECT_TRUE(s.answer.percent);
  EXPECT_DOUBLE_EQ(s.answer.number(), oracle_answer(spec, s));
}

TEST(RuleBased, PropertiesOverCorpus) {
  for (const auto& spec : generate_corpus(31, 400, reference_type_mix())) {
    const CotSample s = generate_cot_rule_based(spec, 9);
    ASSERT_EQ(s, generate_cot_rule_based(spec, 9));
    EXPECT_GE(s.steps.size(), 3u);
    EXPECT_LE(s.steps.size(), 5u);
    EXPECT_NO_THROW(check_targets(s, layout(spec)));
    EXPECT_NEAR(s.answer.number(), oracle_answer(spec, s), 1e-9) << spec.id;
    const auto recomputed = recompute_answer(s, spec);
    ASSERT_TRUE(recomputed);
    EXPECT_NEAR(*recomputed, s.answer.number(), 1e-9);
    EXPECT_EQ(validate_cot(serialize_cot(s)), s);
  }
}

TEST(CheckTargets, DanglingTargetRejected) {
  const ChartSpec spec = spec_of(ChartType::bar, 1);
  CotSample s = generate_cot_rule_based(spec, 1);
  s.steps[0].target = ElementRef{ElementRole::x_tick, std::nullopt, "Nowhere"};
  EXPECT_THROW(check_targets(s, layout(spec)), IntegrityError);
}

TEST(Answer, ParseForms) {
  EXPECT_EQ(parse_answer_text("42"), numeric_answer(42));
  EXPECT_EQ(parse_answer_text("1,234.5"), numeric_answer(1234.5));
  EXPECT_EQ(parse_answer_text("37.5%"), numeric_answer(37.5, true));
  EXPECT_EQ(parse_answer_text(" 12. "), numeric_answer(12));
  EXPECT_EQ(parse_answer_text("Asia"), text_answer("Asia"));
  EXPECT_EQ(parse_answer_text("1e999"), text_answer("1e999"));
  EXPECT_EQ(answer_to_string(numeric_answer(37.5, true)), "37.5%");
  EXPECT_EQ(answer_from_json(to_json(numeric_answer(37.5, true))), numeric_answer(37.5, true));
}

TEST(ExtractJsonBlock, StripsFencesAndProse) {
  EXPECT_EQ(extract_json_block("Here:\n```json\n{\"a\": {\"b\": 1}}\n```\nDone"), "{\"a\": {\"b\": 1}}");
  EXPECT_EQ(extract_json_block("{\"a\":1}"), "{\"a\":1}");
}

TEST(GenerateCotLlm, StubEchoesFixture) {
  ChartSpec spec = spec_of(ChartType::bar, 1);
  CotSample expected = generate_cot_rule_based(spec, 77);
  expected.question = "Custom fixture question?";
  StubClient stub({{{"cot", spec.id}, serialize_cot(expected)}});
  EXPECT_EQ(generate_cot_llm(spec, stub), expected);
}

TEST(GenerateCotLlm, MalformedTwiceIsDiscarded) {
  const ChartSpec spec = spec_of(ChartType::bar, 1);
  StubClient stub({{{"cot", spec.id}, "{\"chart_id\": oops"}});
  EXPECT_THROW(generate_cot_llm(spec, stub), FormatError);
  EXPECT_EQ(stub.calls(), 2u);
}

TEST(GenerateCotLlm, WrongChartIdRejected) {
  const ChartSpec spec = spec_of(ChartType::bar, 1);
  CotSample other = generate_cot_rule_based(spec, 1);
  other.chart_id = "elsewhere";
  StubClient stub({{{"cot", spec.id}, serialize_cot(other)}});
  EXPECT_THROW(generate_cot_llm(spec, stub), IntegrityError);
}

TEST(GenerateCotLlm, InjectedMalformationRate) {
  StubClient stub;
  FaultInjectingClient faulty(stub, "cot", 0.0383, 2024);
  std::size_t passed = 0;
  const auto corpus = generate_corpus(2024, 1000, reference_type_mix());
  for (const auto& spec : corpus) {
    try {
      generate_cot_llm(spec, faulty, 1);
      ++passed;
    } catch (const FormatError&) {
    }
  }
  EXPECT_NEAR(static_cast<double>(passed) / 1000.0, 0.9617, 0.015);
}
