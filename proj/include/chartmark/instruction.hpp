#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartmark/bbox.hpp"
#include "chartmark/chart_spec.hpp"
#include "chartmark/cot.hpp"
#include "json.hpp"

namespace chartmark {

// Declaration order is the dataset sort order.
enum class InstructionKind { T1a, T1b, T2, T3, T4_final };

std::string_view to_string(InstructionKind k);
InstructionKind instruction_kind_from_string(std::string_view s);

enum class ImageVariant { vanilla, overlay };

std::string_view to_string(ImageVariant v);

struct ImageRef {
  std::string chart_id;
  ImageVariant variant = ImageVariant::vanilla;
  std::vector<PixelBBox> overlay_boxes;
  std::string file;  // relative to the run directory

  bool operator==(const ImageRef&) const = default;
};

struct InstructionSample {
  InstructionKind kind = InstructionKind::T1a;
  std::string chart_id;
  // T2/T3: index of the step whose box is the ground truth. Unset otherwise.
  std::optional<int> step;
  ImageRef image;
  std::vector<std::string> prompt;
  std::string ground_truth;

  bool operator==(const InstructionSample&) const = default;
};

nlohmann::json to_json(const InstructionSample& s);

// Orders by (chart_id, kind, step) with unset steps first.
bool record_less(const InstructionSample& a, const InstructionSample& b);

std::string vanilla_image_file(const std::string& chart_id);
std::string overlay_image_file(const std::string& chart_id, int last_step);

// Step text as it appears inside prompts; Grounding steps carry their box.
std::string format_step(const Step& step, const NormBBox* box);

// Expands one chart into instruction records: T1a, T1b, one T2 per Grounding
// step, one T3 per Grounding step directly followed by another, and T4_final.
// With a cap, the per-chart record limit is floor(cap) plus one more with
// probability frac(cap); T1a, T1b and T4_final are always kept and a seeded
// uniform subset of the T2/T3 records fills the remainder.
// Throws CoverageError when `boxes` does not cover exactly the Grounding
// steps, ConfigError for a negative cap.
std::vector<InstructionSample> build_instructions(const ChartSpec& spec, const CotSample& sample,
                                                  const std::map<int, NormBBox>& boxes,
                                                  std::optional<double> cap = std::nullopt,
                                                  std::uint64_t seed = 0);

// Record count before capping: 2 + G + (adjacent Grounding pairs) + 1.
std::size_t uncapped_record_count(const std::vector<StepKind>& kinds);

struct OverlayImage {
  ImageRef ref;
  std::string svg;
};

// Vanilla chart with the boxes stroked on top. Throws LayoutError for an
// empty box list or boxes outside the canvas.
OverlayImage render_overlay_image(const ChartSpec& spec, const std::vector<PixelBBox>& boxes, int last_step);

}  // namespace chartmark
