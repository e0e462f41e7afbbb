#include "chartmark/prompts.hpp"

namespace chartmark::prompts {

namespace {

constexpr std::string_view kCotExample = R"({
  "chart_id": "example",
  "question": "What is the value of Online in 2019?",
  "answer": 412.5,
  "steps": [
    {"index": 0, "kind": "Grounding", "text": "Locate the legend entry for Online to find its color.",
     "target": {"role": "legend_entry", "series": "Online"}},
    {"index": 1, "kind": "Grounding", "text": "Find 2019 on the x-axis.",
     "target": {"role": "x_tick", "category": "2019"}},
    {"index": 2, "kind": "Grounding", "text": "Locate the top of the Online bar above 2019.",
     "target": {"role": "datapoint", "series": "Online", "category": "2019"}},
    {"index": 3, "kind": "Reasoning", "text": "Reading the bar top against the y-axis gives 412.5."}
  ]
})";

constexpr std::string_view kCodeEditExample =
    R"(Instruction: Locate the legend entry for Online. [target: {"role":"legend_entry","series":"Online"}]
Output: the same chart document with "Online" renamed to "Online@" and nothing else changed.
For a datapoint target, leave all text untouched and add "markers": [{"x": <px>, "y": <px>}] at the
just inside the top-center of the bar, the line vertex, or the wedge centroid.)";

std::string replace_all(std::string text, std::string_view token, std::string_view value) {
  for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size())) {
    text.replace(pos, token.size(), value);
  }
  return text;
}

constexpr std::string_view kCotTemplate =
    R"(Given a chart plot code, please propose a **question** based on the code and provide the **answer** to this question.

Additionally, provide detailed reasoning steps for arriving at the answer, categorizing each step as either **Grounding** or **Reasoning**.

Requirements for the Question:
1. Focus on specific elements within the chart, such as the chart title, data values for specific categories, or identifying peak values.
2. Do not ask descriptive or summary questions, like describing trends or summarizing the chart's message.
3. Do not ask about visually non-distinguishing details, such as font type or size of the title.

Requirements for Thinking Steps:
1. Categorize each step into two types: Grounding and Reasoning.
2. Grounding steps involve locating elements within the chart, such as identifying positions on axes or legend entries.
3. Reasoning steps involve logical deductions based on information gathered from previous grounding steps.

Output Format Requirements:
1. Do not include any extraneous text unrelated to the content.
2. Strictly follow the JSON format for the response.
3. Refer to the example provided below for the expected structure.

Example:

{#EXAMPLE_HERE}

Now, given the chart plot code, please provide the Question, Answer, and Steps.
Output strictly in the given example format.

Chart Plot Code

```json
{#CODE_HERE}
```
Your should provide:
)";

constexpr std::string_view kCodeEditTemplate =
    R"(You are provided with Python code that generates a chart and a specific instruction related to an element within this chart that needs to be highlighted. Your task is to amend the plotting code by adding an `@' symbol at the location specified in the instruction.

Requirements:
1. Chart Plot Code: The original Python code for generating the chart.
2. Instruction: A directive specifying which chart element should be highlighted (e.g., "Locate the bar corresponding to `2018' and `Domestic'.", "Circle the highest sales month").
3. Modification: Integrate an `@' symbol into the chart. This symbol should be centered on the element as indicated - for instance, in the middle of a title, legend, or label, or at the top of a bar.
4. Output: Deliver the updated code that correctly places the `@'.

Output Format:
1. Provide only the modified code as output.
2. Exclude any text not pertinent to the response content.
3. Ensure the modified code preserves all original chart features while incorporating the specified `@'.

Example:

{#EXAMPLE_HERE}

Now, given the chart plot code and instruction:

Instruction: {#INST_HERE}.

Chart Plot Code

```json
{#CODE_HERE}
```
Your should provide:
)";

constexpr std::string_view kMatchTemplate =
    R"(You are a professional data analyst with expertise in interpreting various types of charts and graphs. When presented with a question about a given chart, your response should adhere to the following guidelines.

Guidelines:
1. Initial Assessment: Begin by carefully examining the provided chart. Note the type of chart (e.g., bar chart, pie chart, line graph), the labels on the axes (if applicable), the title, and any legends present. Identify the key data points relevant to the question.
2. Step-by-Step Reasoning: Break down the process of answering the question into clear, logical steps. Explain each step in detail, referencing specific data from the chart. Use phrases like "First, we look at...", "Next, we calculate...", "Then, we compare...".
3. Final Answer: Conclude your response with the final answer presented in the format \box{answer}, where "answer" is either a single number or a percentage. Do not include any units. Ensure that the answer is accurate based on your analysis.
4. BBox: Output bboxes whenever possible to support your understanding of the chart elements.

Question: {#QUESTION_HERE}.
)";

constexpr std::string_view kReviewTemplate =
    R"(You are checking a question-answer pair written for a chart. The chart's underlying data and the pair are given below as JSON.
Decide whether the answer is correct for the question according to the data. Numeric answers may differ from the data by rounding only.
Reply with a single word: yes or no.

```json
{#PAYLOAD_HERE}
```
)";

}  // namespace

std::string chain_of_thought(std::string_view example, std::string_view code) {
  return replace_all(replace_all(std::string(kCotTemplate), "{#EXAMPLE_HERE}", example), "{#CODE_HERE}", code);
}

std::string code_edit(std::string_view example, std::string_view instruction, std::string_view code) {
  auto text = replace_all(std::string(kCodeEditTemplate), "{#EXAMPLE_HERE}", example);
  text = replace_all(std::move(text), "{#INST_HERE}", instruction);
  return replace_all(std::move(text), "{#CODE_HERE}", code);
}

std::string review(std::string_view payload) {
  return replace_all(std::string(kReviewTemplate), "{#PAYLOAD_HERE}", payload);
}

std::string direct_answer(std::string_view question) {
  return std::string(question) + "\nAnswer the question using a single word or number.";
}

std::string match_style(std::string_view question) {
  return replace_all(std::string(kMatchTemplate), "{#QUESTION_HERE}", question);
}

std::string_view cot_example() { return kCotExample; }
std::string_view code_edit_example() { return kCodeEditExample; }

std::string last_fenced_block(std::string_view text) {
  const auto close = text.rfind("```");
  if (close == std::string_view::npos || close == 0) return {};
  const auto open = text.rfind("```", close - 1);
  if (open == std::string_view::npos) return {};
  auto body_start = text.find('\n', open);
  if (body_start == std::string_view::npos || body_start > close) return {};
  return std::string(text.substr(body_start + 1, close - body_start - 1));
}

namespace instruction {

std::string answer_directly(std::string_view question) {
  return std::string(question) + "\nAnswer with a single number or phrase.";
}

std::string think_step_by_step(std::string_view question) {
  return std::string(question) +
         "\nReason step by step, marking each step as Grounding or Reasoning, then give the final answer.";
}

std::string locate_next(std::string_view question) {
  return std::string(question) +
         "\nThe reasoning so far is listed below. Give the bounding box (x0,y0),(x1,y1) of the chart element "
         "needed for the next step.";
}

std::string locate_next_on_overlay(std::string_view question) {
  return std::string(question) +
         "\nBoxes from the previous grounding steps are drawn on the chart in red. Give the bounding box "
         "(x0,y0),(x1,y1) of the chart element needed for the next step.";
}

std::string final_answer(std::string_view question) {
  return std::string(question) + "\nUsing the reasoning below, give the final answer.";
}

}  // namespace instruction

}  // namespace chartmark::prompts
