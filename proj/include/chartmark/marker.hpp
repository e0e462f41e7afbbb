#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartmark/bbox.hpp"
#include "chartmark/chart_spec.hpp"
#include "chartmark/cot.hpp"
#include "chartmark/renderer.hpp"
#include "json.hpp"

namespace chartmark {

inline constexpr char kMarkerChar = '@';

enum class MarkerMode { text_suffix, point_anchor };

std::string_view to_string(MarkerMode m);
// title/legend/ticks take a text suffix, datapoints a point anchor.
// Throws TargetError for roles that cannot carry a marker.
MarkerMode marker_mode_for(ElementRole role);

struct MarkerEdit {
  int step_index = 0;
  ElementRef target;
  MarkerMode mode = MarkerMode::text_suffix;
};

// A spec after one marker insertion. Text suffixes live in the spec's own
// text fields; y tick labels are computed, so a marked tick is named in
// `marked_y_tick`; point anchors are listed in `markers`.
struct EditedSpec {
  ChartSpec spec;
  std::vector<MarkerAnchor> markers;
  std::optional<std::string> marked_y_tick;

  bool operator==(const EditedSpec&) const = default;
};

Decorations decorations(const EditedSpec& e);

// The chart spec document plus optional "markers":[{x,y}] and
// "y_tick_marker" keys.
nlohmann::json to_json(const EditedSpec& e);
std::string serialize_edited_spec(const EditedSpec& e);
// SyntaxError / ValidationError as for parse_spec.
EditedSpec parse_edited_spec(std::string_view text);

// Inserts the marker for one Grounding step. TargetError if the step is not
// Grounding or its target does not resolve; CollisionError if the spec
// already contains '@'.
EditedSpec apply_marker(const ChartSpec& spec, const Step& step);
MarkerEdit describe_edit(const Step& step);

// Ref of the target element in the edited render (its text gains the '@').
ElementRef marked_ref(const ChartSpec& spec, const ElementRef& target);

std::size_t count_markers(const EditedSpec& e);
// Exactly one '@' or one anchor across the whole edited spec.
bool verify_marker(const EditedSpec& e);

// True when the edited spec equals `original` once every '@' is removed and
// markers are dropped.
bool preserves_content(const EditedSpec& e, const ChartSpec& original);

enum class DetectionMethod { structural, raster };
std::string_view to_string(DetectionMethod m);

struct DetectionResult {
  PixelBBox bbox;
  DetectionMethod method = DetectionMethod::structural;
};

// Glyph boxes of every '@' in the SVG's text nodes, from the text metrics.
std::vector<PixelBBox> find_text_markers(std::string_view svg);

struct MarkerComponent {
  PixelBBox bbox;
  std::size_t pixels = 0;
  double cx = 0, cy = 0;  // centroid of pixel centers
};

// 8-connected components of marker-colored pixels, in scan order.
std::vector<MarkerComponent> find_marker_components(const Bitmap& bmp);

// Structural pass over the vector document; unless it finds exactly one hit,
// the raster pass (produced on demand) decides. Throws NotFoundError (no hits) or
// AmbiguousError (several hits in the deciding pass).
DetectionResult detect_markers(std::string_view svg, const std::function<Bitmap()>& raster);
DetectionResult detect_markers(std::string_view svg, const Bitmap& bmp);

// Widens boxes below the minimum around their center, then shifts them back
// inside the canvas.
PixelBBox finalize_bbox(const PixelBBox& raw, const Canvas& canvas, double min_w, double min_h);

// Minimum marker box edge for a canvas: reference_px at width 1000, scaled
// with the canvas width.
double min_marker_size(const Canvas& canvas, double reference_px = 12.0);

}  // namespace chartmark
