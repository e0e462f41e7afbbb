#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chartmark/bbox.hpp"
#include "chartmark/chart_spec.hpp"
#include "json.hpp"

namespace chartmark {

enum class ElementRole { title, legend_entry, x_tick, y_tick, datapoint, plot_area };

std::string_view to_string(ElementRole r);
ElementRole element_role_from_string(std::string_view s);

// Names one visible chart element. For y ticks `category` holds the tick
// label text; pie legend entries carry both the series and the wedge category.
struct ElementRef {
  ElementRole role = ElementRole::title;
  std::optional<std::string> series;
  std::optional<std::string> category;

  auto operator<=>(const ElementRef&) const = default;
  bool operator==(const ElementRef&) const = default;
};

std::string describe(const ElementRef& ref);
nlohmann::json to_json(const ElementRef& ref);
// Throws IntegrityError on unknown roles, wrong types or missing
// series/category for roles that require them.
ElementRef element_ref_from_json(const nlohmann::json& j);

// Exact element-to-box oracle for one rendered chart.
struct GeometryMap {
  Canvas canvas;
  std::map<ElementRef, PixelBBox> entries;

  const PixelBBox* find(const ElementRef& ref) const;
  bool operator==(const GeometryMap&) const = default;
};

nlohmann::json to_json(const GeometryMap& g);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kMarkerColor{255, 0, 255};
inline constexpr Rgb kOverlayColor{255, 0, 0};
inline constexpr Rgb kBackgroundColor{255, 255, 255};
inline constexpr Rgb kTextColor{33, 33, 33};
inline constexpr Rgb kAxisColor{90, 90, 90};
inline constexpr Rgb kGridColor{225, 225, 225};
inline constexpr double kOverlayStroke = 3.0;
inline constexpr int kMarkerGlyphSize = 9;

// Series/category color, rotated by the spec's style seed.
Rgb palette_color(std::uint64_t style_seed, std::size_t index);
std::span<const Rgb> palette();

// Monospace metric table: every code point advances 0.6 em; the glyph box
// spans 0.8 em above the baseline and 0.2 em below.
struct TextMetrics {
  static constexpr double advance = 0.6;
  static constexpr double ascent = 0.8;
  static constexpr double descent = 0.2;
};

struct MarkerAnchor {
  double x = 0, y = 0;
  bool operator==(const MarkerAnchor&) const = default;
};

struct TextItem {
  ElementRef owner;
  std::string text;
  double x = 0;         // left edge of the first glyph
  double baseline = 0;
  double font_size = 0;

  double width() const;
  PixelBBox bbox() const;
  PixelBBox glyph_box(std::size_t index) const;
};

struct Segment {
  double x0, y0, x1, y1, width;
  Rgb color;
};

struct FilledRect {
  ElementRef owner;
  PixelBBox rect;
  Rgb color;
};

struct Polyline {
  std::string series;
  std::vector<std::pair<double, double>> points;
  double width;
  Rgb color;
};

struct Wedge {
  ElementRef owner;
  // Triangle fan: points[0] is the center, the rest trace the arc.
  std::vector<std::pair<double, double>> points;
  Rgb color;
};

// Full deterministic layout of one chart. `geometry` is the public oracle;
// the drawing lists feed both the SVG writer and the rasterizer.
struct ChartLayout {
  GeometryMap geometry;
  std::vector<Segment> rules;
  std::vector<FilledRect> rects;  // bars, legend swatches, line vertices
  std::vector<Polyline> lines;
  std::vector<Wedge> wedges;
  std::vector<TextItem> texts;
  std::map<ElementRef, MarkerAnchor> anchors;  // one per datapoint
  double font_size = 0;                        // tick/legend size
};

// Extra content drawn on top of a chart: marker glyphs, an '@' suffix on one
// y tick label, and stroked overlay boxes.
struct Decorations {
  std::vector<MarkerAnchor> markers;
  std::optional<std::string> marked_y_tick;
  std::vector<PixelBBox> overlays;
};

// Throws LayoutError when the canvas cannot hold the mandatory elements
// without overlap.
ChartLayout layout_chart(const ChartSpec& spec, const std::optional<std::string>& marked_y_tick = std::nullopt);
GeometryMap layout(const ChartSpec& spec);

struct SvgRender {
  std::string svg;
  GeometryMap geometry;
};

SvgRender render_svg(const ChartSpec& spec, const Decorations& deco);
SvgRender render_svg(const ChartSpec& spec, std::span<const PixelBBox> overlays = {});

class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int width, int height, Rgb fill = kBackgroundColor);

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  bool operator==(const Bitmap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct RasterRender {
  Bitmap bitmap;
  GeometryMap geometry;
};

RasterRender rasterize(const ChartSpec& spec, const Decorations& deco);
RasterRender rasterize(const ChartSpec& spec, std::span<const MarkerAnchor> markers);

// Draws the marker glyph: a 9x9 cross, three pixels thick, centered on the
// pixel containing the anchor, clipped to the bitmap.
void draw_marker(Bitmap& bmp, const MarkerAnchor& anchor);
// Paints a solid glyph block in the marker color (how a '@' is rasterized).
void fill_rect(Bitmap& bmp, const PixelBBox& box, Rgb color);

// Binary PPM (P6), 8-bit RGB.
std::string write_ppm(const Bitmap& bmp);
Bitmap read_ppm(std::string_view data);

}  // namespace chartmark
