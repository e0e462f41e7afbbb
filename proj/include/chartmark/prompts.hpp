#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chartmark::prompts {

// Bumped whenever any template text changes; recorded in run manifests.
inline constexpr std::string_view kVersion = "prompts-v1";

inline constexpr std::string_view kCotTemplateId = "cot";
inline constexpr std::string_view kCodeEditTemplateId = "code_edit";
inline constexpr std::string_view kReviewTemplateId = "review";

// Teacher prompt asking for question, answer and Grounding/Reasoning steps.
std::string chain_of_thought(std::string_view example, std::string_view code);

// Teacher prompt asking for the code with an '@' added at one element.
std::string code_edit(std::string_view example, std::string_view instruction, std::string_view code);

// Yes/no verdict on whether a Q&A pair matches the chart data.
std::string review(std::string_view payload);

// Evaluation-time prompts: single-token answer vs. stepwise with \box{}.
std::string direct_answer(std::string_view question);
std::string match_style(std::string_view question);

// Few-shot example embedded in the chain-of-thought prompt.
std::string_view cot_example();
std::string_view code_edit_example();

// Content of the last fenced block (```...```) in a prompt, or empty.
std::string last_fenced_block(std::string_view text);

// Instruction-record prompt parts.
namespace instruction {
std::string answer_directly(std::string_view question);
std::string think_step_by_step(std::string_view question);
std::string locate_next(std::string_view question);
std::string locate_next_on_overlay(std::string_view question);
std::string final_answer(std::string_view question);
}  // namespace instruction

}  // namespace chartmark::prompts
