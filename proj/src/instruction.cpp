#include "chartmark/instruction.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "chartmark/error.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/renderer.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

std::string_view to_string(InstructionKind k) {
  switch (k) {
    case InstructionKind::T1a: return "T1a";
    case InstructionKind::T1b: return "T1b";
    case InstructionKind::T2: return "T2";
    case InstructionKind::T3: return "T3";
    case InstructionKind::T4_final: return "T4_final";
  }
  return "?";
}

InstructionKind instruction_kind_from_string(std::string_view s) {
  for (auto k : {InstructionKind::T1a, InstructionKind::T1b, InstructionKind::T2, InstructionKind::T3,
                 InstructionKind::T4_final}) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown instruction kind '" + std::string(s) + "'");
}

std::string_view to_string(ImageVariant v) { return v == ImageVariant::vanilla ? "vanilla" : "overlay"; }

json to_json(const InstructionSample& s) {
  return {{"kind", to_string(s.kind)},
          {"chart_id", s.chart_id},
          {"step", s.step ? json(*s.step) : json(nullptr)},
          {"image", {{"variant", to_string(s.image.variant)}, {"file", s.image.file}}},
          {"prompt", s.prompt},
          {"ground_truth", s.ground_truth}};
}

bool record_less(const InstructionSample& a, const InstructionSample& b) {
  const auto key = [](const InstructionSample& s) {
    return std::tuple(std::string_view(s.chart_id), s.kind, s.step.has_value(), s.step.value_or(0));
  };
  return key(a) < key(b);
}

std::string vanilla_image_file(const std::string& chart_id) { return "images/" + chart_id + ".svg"; }

std::string overlay_image_file(const std::string& chart_id, int last_step) {
  return "images/" + chart_id + "_overlay_s" + std::to_string(last_step) + ".svg";
}

std::string format_step(const Step& step, const NormBBox* box) {
  std::string out = "Step " + std::to_string(step.index + 1) + " [" + std::string(to_string(step.kind)) + "]: " + step.text;
  if (box) out += " " + serialize(*box);
  return out;
}

std::size_t uncapped_record_count(const std::vector<StepKind>& kinds) {
  std::size_t g = 0, pairs = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] != StepKind::Grounding) continue;
    ++g;
    if (i + 1 < kinds.size() && kinds[i + 1] == StepKind::Grounding) ++pairs;
  }
  return 2 + g + pairs + 1;
}

namespace {

void check_coverage(const CotSample& sample, const std::map<int, NormBBox>& boxes) {
  std::size_t grounding = 0;
  for (const auto& step : sample.steps) {
    if (step.kind != StepKind::Grounding) continue;
    ++grounding;
    if (!boxes.contains(step.index)) {
      throw CoverageError("no bounding box for Grounding step " + std::to_string(step.index));
    }
  }
  if (boxes.size() != grounding) throw CoverageError("bounding boxes supplied for non-Grounding steps");
}

ImageRef vanilla_ref(const std::string& chart_id) {
  return {chart_id, ImageVariant::vanilla, {}, vanilla_image_file(chart_id)};
}

// Steps [0, end) as prompt parts.
std::vector<std::string> trace(const CotSample& sample, const std::map<int, NormBBox>& boxes, std::size_t end) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < end; ++i) {
    const auto& step = sample.steps[i];
    const auto it = boxes.find(step.index);
    parts.push_back(format_step(step, it == boxes.end() ? nullptr : &it->second));
  }
  return parts;
}

}  // namespace

std::vector<InstructionSample> build_instructions(const ChartSpec& spec, const CotSample& sample,
                                                  const std::map<int, NormBBox>& boxes, std::optional<double> cap,
                                                  std::uint64_t seed) {
  if (cap && !(*cap >= 0)) throw ConfigError("cap must be a non-negative number");
  check_coverage(sample, boxes);
  const std::string& id = spec.id;
  const std::string answer = answer_to_string(sample.answer);

  std::vector<InstructionSample> fixed;
  fixed.push_back({InstructionKind::T1a, id, std::nullopt, vanilla_ref(id),
                   {prompts::instruction::answer_directly(sample.question)}, answer});
  std::string long_text;
  for (const auto& step : sample.steps) long_text += format_step(step, nullptr) + "\n";
  long_text += "Answer: " + answer;
  fixed.push_back({InstructionKind::T1b, id, std::nullopt, vanilla_ref(id),
                   {prompts::instruction::think_step_by_step(sample.question)}, long_text});

  std::vector<InstructionSample> per_step;
  const auto& steps = sample.steps;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].kind != StepKind::Grounding) continue;
    auto prompt = trace(sample, boxes, i);
    prompt.insert(prompt.begin(), prompts::instruction::locate_next(sample.question));
    per_step.push_back({InstructionKind::T2, id, steps[i].index, vanilla_ref(id), std::move(prompt),
                        serialize(boxes.at(steps[i].index))});
  }
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    if (steps[i].kind != StepKind::Grounding || steps[i + 1].kind != StepKind::Grounding) continue;
    ImageRef image{id, ImageVariant::overlay, {}, overlay_image_file(id, steps[i].index)};
    for (std::size_t j = 0; j <= i; ++j) {
      if (steps[j].kind == StepKind::Grounding) {
        image.overlay_boxes.push_back(denormalize(boxes.at(steps[j].index), spec.canvas));
      }
    }
    auto prompt = trace(sample, boxes, i + 1);
    prompt.insert(prompt.begin(), prompts::instruction::locate_next_on_overlay(sample.question));
    per_step.push_back({InstructionKind::T3, id, steps[i + 1].index, std::move(image), std::move(prompt),
                        serialize(boxes.at(steps[i + 1].index))});
  }

  auto final_prompt = trace(sample, boxes, steps.size());
  final_prompt.insert(final_prompt.begin(), prompts::instruction::final_answer(sample.question));
  fixed.push_back({InstructionKind::T4_final, id, std::nullopt, vanilla_ref(id), std::move(final_prompt), answer});

  if (cap) {
    Rng rng(derive_seed(seed, id, 0xCA9));
    const double whole = std::floor(*cap);
    const auto limit = static_cast<std::size_t>(whole) + (rng.bernoulli(*cap - whole) ? 1 : 0);
    const std::size_t keep = limit > fixed.size() ? std::min(limit - fixed.size(), per_step.size()) : 0;
    std::vector<std::size_t> order(per_step.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span(order));
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<InstructionSample> kept;
    for (auto i : order) kept.push_back(std::move(per_step[i]));
    per_step = std::move(kept);
  }

  std::vector<InstructionSample> out = std::move(fixed);
  for (auto& s : per_step) out.push_back(std::move(s));
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

OverlayImage render_overlay_image(const ChartSpec& spec, const std::vector<PixelBBox>& boxes, int last_step) {
  if (boxes.empty()) throw LayoutError("an overlay image needs at least one box");
  auto rendered = render_svg(spec, std::span<const PixelBBox>(boxes));
  return {{spec.id, ImageVariant::overlay, boxes, overlay_image_file(spec.id, last_step)}, std::move(rendered.svg)};
}

}  // namespace chartmark
