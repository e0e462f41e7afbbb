#include "chartmark/renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "chartmark/error.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

std::string_view to_string(ElementRole r) {
  switch (r) {
    case ElementRole::title: return "title";
    case ElementRole::legend_entry: return "legend_entry";
    case ElementRole::x_tick: return "x_tick";
    case ElementRole::y_tick: return "y_tick";
    case ElementRole::datapoint: return "datapoint";
    case ElementRole::plot_area: return "plot_area";
  }
  return "title";
}

ElementRole element_role_from_string(std::string_view s) {
  for (auto r : {ElementRole::title, ElementRole::legend_entry, ElementRole::x_tick, ElementRole::y_tick,
                 ElementRole::datapoint, ElementRole::plot_area}) {
    if (to_string(r) == s) return r;
  }
  throw IntegrityError("unknown element role '" + std::string(s) + "'");
}

std::string describe(const ElementRef& ref) {
  std::string out(to_string(ref.role));
  if (ref.series || ref.category) {
    out += "[";
    if (ref.series) out += "series=" + *ref.series;
    if (ref.series && ref.category) out += ",";
    if (ref.category) out += "category=" + *ref.category;
    out += "]";
  }
  return out;
}

json to_json(const ElementRef& ref) {
  json j = {{"role", std::string(to_string(ref.role))}};
  if (ref.series) j["series"] = *ref.series;
  if (ref.category) j["category"] = *ref.category;
  return j;
}

ElementRef element_ref_from_json(const json& j) {
  if (!j.is_object()) throw IntegrityError("target must be an object");
  ElementRef ref;
  auto role = j.find("role");
  if (role == j.end() || !role->is_string()) throw IntegrityError("target needs a string 'role'");
  ref.role = element_role_from_string(role->get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "role") continue;
    if (key != "series" && key != "category") throw IntegrityError("unknown target key '" + key + "'");
    if (!value.is_string()) throw IntegrityError("target '" + key + "' must be a string");
    (key == "series" ? ref.series : ref.category) = value.get<std::string>();
  }
  const bool needs_series = ref.role == ElementRole::datapoint || ref.role == ElementRole::legend_entry;
  const bool needs_category = ref.role == ElementRole::datapoint || ref.role == ElementRole::x_tick ||
                              ref.role == ElementRole::y_tick;
  if (needs_series && !ref.series) throw IntegrityError(describe(ref) + " requires a series");
  if (needs_category && !ref.category) throw IntegrityError(describe(ref) + " requires a category");
  return ref;
}

const PixelBBox* GeometryMap::find(const ElementRef& ref) const {
  auto it = entries.find(ref);
  return it == entries.end() ? nullptr : &it->second;
}

json to_json(const GeometryMap& g) {
  json entries = json::array();
  for (const auto& [ref, b] : g.entries) {
    entries.push_back({{"ref", to_json(ref)}, {"bbox", {b.x0, b.y0, b.x1, b.y1}}});
  }
  return {{"canvas", {g.canvas.width, g.canvas.height}}, {"entries", entries}};
}

namespace {

constexpr std::array<Rgb, 10> kPalette = {{
    {31, 119, 180},
    {255, 127, 14},
    {44, 160, 44},
    {214, 39, 40},
    {148, 103, 189},
    {140, 86, 75},
    {227, 119, 194},
    {127, 127, 127},
    {188, 189, 34},
    {23, 190, 207},
}};

}  // namespace

std::span<const Rgb> palette() { return kPalette; }

Rgb palette_color(std::uint64_t style_seed, std::size_t index) {
  return kPalette[(style_seed + index) % kPalette.size()];
}

double TextItem::width() const { return static_cast<double>(utf8_length(text)) * TextMetrics::advance * font_size; }

PixelBBox TextItem::bbox() const {
  return {x, baseline - TextMetrics::ascent * font_size, x + width(),
          baseline + TextMetrics::descent * font_size};
}

PixelBBox TextItem::glyph_box(std::size_t index) const {
  const double adv = TextMetrics::advance * font_size;
  const double gx = x + static_cast<double>(index) * adv;
  return {gx, baseline - TextMetrics::ascent * font_size, gx + adv, baseline + TextMetrics::descent * font_size};
}

// --- layout ----------------------------------------------------------------

namespace {

struct Axis {
  double min = 0, max = 1, step = 1;
  std::vector<double> ticks;
  std::vector<std::string> labels;
};

double nice_step(double raw) {
  const double exponent = std::floor(std::log10(raw));
  const double base = std::pow(10.0, exponent);
  const double frac = raw / base;
  const double nice = frac <= 1.0 ? 1.0 : frac <= 2.0 ? 2.0 : frac <= 5.0 ? 5.0 : 10.0;
  return nice * base;
}

double next_nice(double step) {
  const double exponent = std::floor(std::log10(step) + 1e-9);
  const double base = std::pow(10.0, exponent);
  const double frac = std::round(step / base);
  if (frac < 2.0) return 2.0 * base;
  if (frac < 5.0) return 5.0 * base;
  return 10.0 * base;
}

Axis make_axis(double lo, double hi, double step) {
  Axis axis;
  axis.step = step;
  axis.min = std::floor(lo / step + 1e-9) * step;
  axis.max = std::ceil(hi / step - 1e-9) * step;
  if (axis.max <= axis.min) axis.max = axis.min + step;
  const auto count = static_cast<int>(std::llround((axis.max - axis.min) / step));
  const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)));
  for (int i = 0; i <= count; ++i) {
    const double v = axis.min + i * step;
    axis.ticks.push_back(v);
    axis.labels.push_back(format_fixed(v, decimals));
  }
  return axis;
}

struct Metrics {
  double scale, title_font, font, pad, tick_len;
};

Metrics metrics_for(const Canvas& canvas) {
  const double s = canvas.width / 1000.0;
  return {s, std::max(10.0, std::round(20 * s)), std::max(9.0, std::round(13 * s)), std::max(4.0, std::round(10 * s)),
          std::max(3.0, std::round(5 * s))};
}

void require_inside(const PixelBBox& b, const Canvas& c, const std::string& what) {
  if (!is_valid(b, c)) throw LayoutError(what + " does not fit on the canvas");
}

class LayoutBuilder {
 public:
  LayoutBuilder(const ChartSpec& spec, const std::optional<std::string>& marked_y_tick)
      : spec_(spec), marked_y_tick_(marked_y_tick), m_(metrics_for(spec.canvas)) {
    out_.geometry.canvas = spec.canvas;
    out_.font_size = m_.font;
  }

  ChartLayout build() {
    place_title();
    place_legend();
    if (spec_.chart_type == ChartType::pie) {
      place_pie();
    } else {
      place_axes_and_data();
    }
    for (const auto& [ref, box] : out_.geometry.entries) require_inside(box, spec_.canvas, describe(ref));
    return std::move(out_);
  }

 private:
  double advance(double font) const { return TextMetrics::advance * font; }

  void add_entry(const ElementRef& ref, const PixelBBox& box) { out_.geometry.entries[ref] = box; }

  void place_title() {
    top_ = m_.pad;
    if (spec_.title.empty()) {
      top_ += m_.pad;
      return;
    }
    TextItem t{{ElementRole::title, {}, {}}, spec_.title, 0, 0, m_.title_font};
    const double w = t.width();
    if (w > spec_.canvas.width - 2 * m_.pad) throw LayoutError("title is wider than the canvas");
    t.x = (spec_.canvas.width - w) / 2;
    t.baseline = m_.pad + TextMetrics::ascent * m_.title_font;
    add_entry(t.owner, t.bbox());
    out_.texts.push_back(t);
    top_ = m_.pad + m_.title_font + m_.pad;
  }

  void place_legend() {
    if (!spec_.legend) return;
    const bool pie = spec_.chart_type == ChartType::pie;
    std::vector<std::string> names;
    if (pie) {
      names = spec_.x_labels;
    } else {
      for (const auto& s : spec_.series) names.push_back(s.name);
    }
    std::size_t max_chars = 0;
    for (const auto& n : names) max_chars = std::max(max_chars, utf8_length(n));
    const double f = m_.font;
    const double swatch = f;
    const double gap = 0.4 * f;
    // One spare glyph of room per row, so a suffixed marker stays inside the entry.
    const double width = swatch + gap + static_cast<double>(max_chars + 1) * advance(f);
    const double row = 1.6 * f;
    const double x0 = spec_.canvas.width - m_.pad - width;
    if (x0 < m_.pad) throw LayoutError("legend is wider than the canvas");
    if (top_ + static_cast<double>(names.size()) * row > spec_.canvas.height - m_.pad) {
      throw LayoutError("legend is taller than the canvas");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = top_ + static_cast<double>(i) * row;
      ElementRef ref{ElementRole::legend_entry, pie ? spec_.series[0].name : names[i],
                     pie ? std::optional<std::string>(names[i]) : std::nullopt};
      add_entry(ref, {x0, y, x0 + width, y + f});
      out_.rects.push_back({ref, {x0, y, x0 + swatch, y + f}, palette_color(spec_.style_seed, i)});
      out_.texts.push_back({ref, names[i], x0 + swatch + gap, y + TextMetrics::ascent * f, f});
    }
    right_reserved_ = width + 2 * m_.pad;
  }

  void place_axes_and_data() {
    const auto& canvas = spec_.canvas;
    const double f = m_.font;
    double lo = 0.0, hi = 0.0;
    for (const auto& s : spec_.series) {
      for (double v : s.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi <= lo) hi = lo + 1.0;

    const double plot_y0 = top_ + f / 2;
    const double plot_y1 = canvas.height - (m_.tick_len + 2 + f + m_.pad);
    const double ph = plot_y1 - plot_y0;
    if (ph < 4 * f) throw LayoutError("canvas too small for the plot area");

    // Coarsen the tick step until labels are at least 1.2 em apart.
    double step = nice_step((hi - lo) / 5.0);
    Axis axis = make_axis(lo, hi, step);
    while (axis.ticks.size() > 2 && ph / static_cast<double>(axis.ticks.size() - 1) < 1.2 * f) {
      step = next_nice(step);
      axis = make_axis(lo, hi, step);
    }
    if (ph / static_cast<double>(axis.ticks.size() - 1) < 1.2 * f) throw LayoutError("y tick labels overlap");

    std::size_t label_chars = 0;
    for (const auto& l : axis.labels) label_chars = std::max(label_chars, utf8_length(l));
    const double plot_x0 = m_.pad + static_cast<double>(label_chars + 1) * advance(f) + m_.tick_len + 2;
    const double plot_x1 = canvas.width - m_.pad - right_reserved_;
    const double pw = plot_x1 - plot_x0;
    if (pw < 4 * f) throw LayoutError("canvas too small for the plot area");

    const PixelBBox plot{plot_x0, plot_y0, plot_x1, plot_y1};
    add_entry({ElementRole::plot_area, {}, {}}, plot);
    const auto map_y = [&](double v) { return plot_y1 - (v - axis.min) / (axis.max - axis.min) * ph; };

    // y axis: gridlines, tick marks, right-aligned labels.
    for (std::size_t i = 0; i < axis.ticks.size(); ++i) {
      const double y = map_y(axis.ticks[i]);
      out_.rules.push_back({plot_x0, y, plot_x1, y, 1.0, kGridColor});
      out_.rules.push_back({plot_x0 - m_.tick_len, y, plot_x0, y, 1.0, kAxisColor});
      std::string label = axis.labels[i];
      if (marked_y_tick_ && *marked_y_tick_ == label) label += "@";
      ElementRef ref{ElementRole::y_tick, {}, label};
      TextItem t{ref, label, 0, y + (TextMetrics::ascent - 0.5) * f, f};
      t.x = plot_x0 - m_.tick_len - 2 - t.width();
      add_entry(ref, t.bbox());
      out_.texts.push_back(t);
    }
    const double zero_y = map_y(std::clamp(0.0, axis.min, axis.max));
    out_.rules.push_back({plot_x0, plot_y0, plot_x0, plot_y1, 1.5, kAxisColor});
    out_.rules.push_back({plot_x0, zero_y, plot_x1, zero_y, 1.5, kAxisColor});

    // x axis: one slot per category.
    const auto n_cat = spec_.x_labels.size();
    const double slot = pw / static_cast<double>(n_cat);
    double prev_right = -1e9;
    for (std::size_t c = 0; c < n_cat; ++c) {
      const double cx = plot_x0 + (static_cast<double>(c) + 0.5) * slot;
      out_.rules.push_back({cx, plot_y1, cx, plot_y1 + m_.tick_len, 1.0, kAxisColor});
      ElementRef ref{ElementRole::x_tick, {}, spec_.x_labels[c]};
      TextItem t{ref, spec_.x_labels[c], 0, plot_y1 + m_.tick_len + 2 + TextMetrics::ascent * f, f};
      t.x = cx - t.width() / 2;
      // Overlap is judged with room for one extra glyph on either side.
      const double reach = t.width() / 2 + advance(f) / 2;
      if (cx - reach < prev_right || cx - reach < 0 || cx + reach > canvas.width) {
        throw LayoutError("x tick labels overlap");
      }
      prev_right = cx + reach;
      add_entry(ref, t.bbox());
      out_.texts.push_back(t);
    }

    const auto n_series = spec_.series.size();
    if (spec_.chart_type == ChartType::bar) {
      const double bar_w = slot * 0.8 / static_cast<double>(n_series);
      for (std::size_t k = 0; k < n_series; ++k) {
        const auto& s = spec_.series[k];
        for (std::size_t c = 0; c < n_cat; ++c) {
          const double x = plot_x0 + static_cast<double>(c) * slot + 0.1 * slot + static_cast<double>(k) * bar_w;
          const double yv = map_y(s.values[c]);
          double y0 = std::min(yv, zero_y), y1 = std::max(yv, zero_y);
          if (y1 - y0 < 1.0) y0 = y1 - 1.0;
          ElementRef ref{ElementRole::datapoint, s.name, spec_.x_labels[c]};
          const PixelBBox rect{x, y0, x + bar_w, y1};
          add_entry(ref, rect);
          out_.rects.push_back({ref, rect, palette_color(spec_.style_seed, k)});
          // Just inside the top edge so the marker's center stays within the bar.
          out_.anchors[ref] = {x + bar_w / 2, y0 + std::min(kMarkerGlyphSize / 2.0, (y1 - y0) / 2)};
        }
      }
    } else {
      const double r = std::max(3.0, std::round(4 * m_.scale));
      const double line_w = std::max(2.0, 2.5 * m_.scale);
      for (std::size_t k = 0; k < n_series; ++k) {
        const auto& s = spec_.series[k];
        const Rgb color = palette_color(spec_.style_seed, k);
        Polyline line{s.name, {}, line_w, color};
        for (std::size_t c = 0; c < n_cat; ++c) {
          const double cx = plot_x0 + (static_cast<double>(c) + 0.5) * slot;
          const double cy = map_y(s.values[c]);
          line.points.emplace_back(cx, cy);
          ElementRef ref{ElementRole::datapoint, s.name, spec_.x_labels[c]};
          PixelBBox box{std::max(0.0, cx - r), std::max(0.0, cy - r), std::min<double>(canvas.width, cx + r),
                        std::min<double>(canvas.height, cy + r)};
          add_entry(ref, box);
          out_.rects.push_back({ref, {cx - r * 0.75, cy - r * 0.75, cx + r * 0.75, cy + r * 0.75}, color});
          out_.anchors[ref] = {cx, cy};
        }
        out_.lines.push_back(std::move(line));
      }
    }
  }

  void place_pie() {
    const auto& canvas = spec_.canvas;
    const double rx0 = m_.pad, rx1 = canvas.width - m_.pad - right_reserved_;
    const double ry0 = top_, ry1 = canvas.height - m_.pad;
    const double radius = 0.45 * std::min(rx1 - rx0, ry1 - ry0);
    if (radius < 30) throw LayoutError("canvas too small for the pie");
    const double cx = (rx0 + rx1) / 2, cy = (ry0 + ry1) / 2;
    add_entry({ElementRole::plot_area, {}, {}}, {cx - radius, cy - radius, cx + radius, cy + radius});

    const auto& series = spec_.series[0];
    const double total = std::accumulate(series.values.begin(), series.values.end(), 0.0);
    double angle = -std::numbers::pi / 2;
    for (std::size_t c = 0; c < series.values.size(); ++c) {
      const double frac = series.values[c] / total;
      const double sweep = frac * 2 * std::numbers::pi;
      const int segments = std::max(1, static_cast<int>(std::ceil(64 * frac)));
      ElementRef ref{ElementRole::datapoint, series.name, spec_.x_labels[c]};
      Wedge w{ref, {{cx, cy}}, palette_color(spec_.style_seed, c)};
      for (int i = 0; i <= segments; ++i) {
        const double a = angle + sweep * i / segments;
        w.points.emplace_back(cx + radius * std::cos(a), cy + radius * std::sin(a));
      }
      PixelBBox box{cx, cy, cx, cy};
      for (const auto& [px, py] : w.points) {
        box.x0 = std::min(box.x0, px);
        box.y0 = std::min(box.y0, py);
        box.x1 = std::max(box.x1, px);
        box.y1 = std::max(box.y1, py);
      }
      add_entry(ref, box);
      // Centroid of a circular sector lies on the bisector at 4 r sin(t/2) / 3t.
      const double mid = angle + sweep / 2;
      const double dist = sweep > 1e-9 ? 4 * radius * std::sin(sweep / 2) / (3 * sweep) : 2 * radius / 3;
      out_.anchors[ref] = {cx + dist * std::cos(mid), cy + dist * std::sin(mid)};
      out_.wedges.push_back(std::move(w));
      angle += sweep;
    }
  }

  const ChartSpec& spec_;
  const std::optional<std::string>& marked_y_tick_;
  Metrics m_;
  ChartLayout out_;
  double top_ = 0;
  double right_reserved_ = 0;
};

}  // namespace

ChartLayout layout_chart(const ChartSpec& spec, const std::optional<std::string>& marked_y_tick) {
  validate(spec);
  return LayoutBuilder(spec, marked_y_tick).build();
}

GeometryMap layout(const ChartSpec& spec) { return layout_chart(spec).geometry; }

// --- SVG -------------------------------------------------------------------

namespace {

std::string num(double v) { return format_fixed(v, 2); }

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_overlays(const std::vector<PixelBBox>& overlays, const Canvas& canvas) {
  for (const auto& b : overlays) {
    if (!is_valid(b, canvas)) throw LayoutError("overlay box outside the canvas");
  }
}

}  // namespace

SvgRender render_svg(const ChartSpec& spec, const Decorations& deco) {
  const ChartLayout lay = layout_chart(spec, deco.marked_y_tick);
  check_overlays(deco.overlays, spec.canvas);
  const auto w = std::to_string(spec.canvas.width), h = std::to_string(spec.canvas.height);
  std::string s;
  s.reserve(8192);
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + w + "\" height=\"" + h +
       "\" viewBox=\"0 0 " + w + " " + h + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + w + "\" height=\"" + h + "\" fill=\"#ffffff\"/>\n";

  s += "<g id=\"axes\">\n";
  for (const auto& r : lay.rules) {
    s += "<line x1=\"" + num(r.x0) + "\" y1=\"" + num(r.y0) + "\" x2=\"" + num(r.x1) + "\" y2=\"" + num(r.y1) +
         "\" stroke=\"" + hex(r.color) + "\" stroke-width=\"" + num(r.width) + "\"/>\n";
  }
  s += "</g>\n<g id=\"data\">\n";
  for (const auto& wdg : lay.wedges) {
    s += "<path d=\"M" + num(wdg.points[0].first) + " " + num(wdg.points[0].second);
    for (std::size_t i = 1; i < wdg.points.size(); ++i) {
      s += " L" + num(wdg.points[i].first) + " " + num(wdg.points[i].second);
    }
    s += " Z\" fill=\"" + hex(wdg.color) + "\" stroke=\"#ffffff\" stroke-width=\"1.00\"/>\n";
  }
  for (const auto& line : lay.lines) {
    s += "<path d=\"";
    for (std::size_t i = 0; i < line.points.size(); ++i) {
      s += (i == 0 ? "M" : " L") + num(line.points[i].first) + " " + num(line.points[i].second);
    }
    s += "\" fill=\"none\" stroke=\"" + hex(line.color) + "\" stroke-width=\"" + num(line.width) + "\"/>\n";
  }
  for (const auto& r : lay.rects) {
    s += "<rect x=\"" + num(r.rect.x0) + "\" y=\"" + num(r.rect.y0) + "\" width=\"" + num(r.rect.width()) +
         "\" height=\"" + num(r.rect.height()) + "\" fill=\"" + hex(r.color) + "\"/>\n";
  }
  s += "</g>\n<g id=\"text\">\n";
  for (const auto& t : lay.texts) {
    s += "<text x=\"" + num(t.x) + "\" y=\"" + num(t.baseline) + "\" font-family=\"monospace\" font-size=\"" +
         num(t.font_size) + "\" textLength=\"" + num(t.width()) +
         "\" lengthAdjust=\"spacingAndGlyphs\" text-anchor=\"start\" fill=\"" + hex(kTextColor) + "\">" +
         xml_escape(t.text) + "</text>\n";
  }
  s += "</g>\n";
  if (!deco.markers.empty()) {
    s += "<g id=\"markers\">\n";
    for (const auto& m : deco.markers) {
      const double half = kMarkerGlyphSize / 2.0, arm = 1.5;
      s += "<path class=\"marker\" d=\"M" + num(m.x - half) + " " + num(m.y - arm) + " h" + num(2 * half) + " v" +
           num(2 * arm) + " h" + num(-2 * half) + " Z M" + num(m.x - arm) + " " + num(m.y - half) + " h" +
           num(2 * arm) + " v" + num(2 * half) + " h" + num(-2 * arm) + " Z\" fill=\"" + hex(kMarkerColor) +
           "\"/>\n";
    }
    s += "</g>\n";
  }
  if (!deco.overlays.empty()) {
    s += "<g id=\"overlays\">\n";
    for (const auto& b : deco.overlays) {
      s += "<rect class=\"overlay\" x=\"" + num(b.x0) + "\" y=\"" + num(b.y0) + "\" width=\"" + num(b.width()) +
           "\" height=\"" + num(b.height()) + "\" fill=\"none\" stroke=\"" + hex(kOverlayColor) +
           "\" stroke-width=\"" + num(kOverlayStroke) + "\"/>\n";
    }
    s += "</g>\n";
  }
  s += "</svg>\n";
  return {std::move(s), lay.geometry};
}

SvgRender render_svg(const ChartSpec& spec, std::span<const PixelBBox> overlays) {
  Decorations deco;
  deco.overlays.assign(overlays.begin(), overlays.end());
  return render_svg(spec, deco);
}

// --- raster ----------------------------------------------------------------

Bitmap::Bitmap(int width, int height, Rgb fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb Bitmap::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Bitmap::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

// Pixel (i, j) is covered when its center (i + 0.5, j + 0.5) falls inside.
void fill_rect(Bitmap& bmp, const PixelBBox& box, Rgb color) {
  const int i0 = std::max(0, static_cast<int>(std::ceil(box.x0 - 0.5)));
  const int i1 = std::min(bmp.width(), static_cast<int>(std::ceil(box.x1 - 0.5)));
  const int j0 = std::max(0, static_cast<int>(std::ceil(box.y0 - 0.5)));
  const int j1 = std::min(bmp.height(), static_cast<int>(std::ceil(box.y1 - 0.5)));
  for (int j = j0; j < j1; ++j) {
    for (int i = i0; i < i1; ++i) bmp.set(i, j, color);
  }
}

namespace {

void fill_triangle(Bitmap& bmp, std::pair<double, double> a, std::pair<double, double> b,
                   std::pair<double, double> c, Rgb color) {
  const auto edge = [](std::pair<double, double> p, std::pair<double, double> q, double x, double y) {
    return (q.first - p.first) * (y - p.second) - (q.second - p.second) * (x - p.first);
  };
  const double area = edge(a, b, c.first, c.second);
  if (std::fabs(area) < 1e-12) return;
  const int i0 = std::max(0, static_cast<int>(std::floor(std::min({a.first, b.first, c.first}))));
  const int i1 = std::min(bmp.width() - 1, static_cast<int>(std::ceil(std::max({a.first, b.first, c.first}))));
  const int j0 = std::max(0, static_cast<int>(std::floor(std::min({a.second, b.second, c.second}))));
  const int j1 = std::min(bmp.height() - 1, static_cast<int>(std::ceil(std::max({a.second, b.second, c.second}))));
  const double sign = area > 0 ? 1.0 : -1.0;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const double x = i + 0.5, y = j + 0.5;
      if (sign * edge(a, b, x, y) >= 0 && sign * edge(b, c, x, y) >= 0 && sign * edge(c, a, x, y) >= 0) {
        bmp.set(i, j, color);
      }
    }
  }
}

void draw_segment(Bitmap& bmp, const Segment& s) {
  const double half = s.width / 2;
  const int i0 = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - half)));
  const int i1 = std::min(bmp.width() - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + half)));
  const int j0 = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - half)));
  const int j1 = std::min(bmp.height() - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + half)));
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const double px = i + 0.5, py = j + 0.5;
      double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
      if (ex * ex + ey * ey <= half * half) bmp.set(i, j, s.color);
    }
  }
}

void draw_text(Bitmap& bmp, const TextItem& t) {
  const double inset = 0.08 * TextMetrics::advance * t.font_size;
  std::size_t index = 0;
  for (std::size_t pos = 0; pos < t.text.size(); ++index) {
    const unsigned char lead = static_cast<unsigned char>(t.text[pos]);
    const std::size_t len = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3 : 4;
    const char c = t.text[pos];
    pos += len;
    if (c == ' ') continue;
    PixelBBox g = t.glyph_box(index);
    g.x0 += inset;
    g.x1 -= inset;
    fill_rect(bmp, g, c == '@' ? kMarkerColor : kTextColor);
  }
}

}  // namespace

void draw_marker(Bitmap& bmp, const MarkerAnchor& anchor) {
  const int cx = static_cast<int>(std::floor(anchor.x));
  const int cy = static_cast<int>(std::floor(anchor.y));
  const int half = kMarkerGlyphSize / 2;
  for (int d = -half; d <= half; ++d) {
    for (int t = -1; t <= 1; ++t) {
      bmp.set(cx + d, cy + t, kMarkerColor);
      bmp.set(cx + t, cy + d, kMarkerColor);
    }
  }
}

RasterRender rasterize(const ChartSpec& spec, const Decorations& deco) {
  const ChartLayout lay = layout_chart(spec, deco.marked_y_tick);
  check_overlays(deco.overlays, spec.canvas);
  Bitmap bmp(spec.canvas.width, spec.canvas.height);
  for (const auto& r : lay.rules) draw_segment(bmp, r);
  for (const auto& w : lay.wedges) {
    for (std::size_t i = 1; i + 1 < w.points.size(); ++i) fill_triangle(bmp, w.points[0], w.points[i], w.points[i + 1], w.color);
  }
  for (const auto& line : lay.lines) {
    for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
      draw_segment(bmp, {line.points[i].first, line.points[i].second, line.points[i + 1].first,
                         line.points[i + 1].second, line.width, line.color});
    }
  }
  for (const auto& r : lay.rects) fill_rect(bmp, r.rect, r.color);
  for (const auto& t : lay.texts) draw_text(bmp, t);
  for (const auto& m : deco.markers) draw_marker(bmp, m);
  const double half = kOverlayStroke / 2;
  for (const auto& b : deco.overlays) {
    fill_rect(bmp, {b.x0 - half, b.y0 - half, b.x1 + half, b.y0 + half}, kOverlayColor);
    fill_rect(bmp, {b.x0 - half, b.y1 - half, b.x1 + half, b.y1 + half}, kOverlayColor);
    fill_rect(bmp, {b.x0 - half, b.y0 - half, b.x0 + half, b.y1 + half}, kOverlayColor);
    fill_rect(bmp, {b.x1 - half, b.y0 - half, b.x1 + half, b.y1 + half}, kOverlayColor);
  }
  return {std::move(bmp), lay.geometry};
}

RasterRender rasterize(const ChartSpec& spec, std::span<const MarkerAnchor> markers) {
  Decorations deco;
  deco.markers.assign(markers.begin(), markers.end());
  return rasterize(spec, deco);
}

std::string write_ppm(const Bitmap& bmp) {
  std::string out = "P6\n" + std::to_string(bmp.width()) + " " + std::to_string(bmp.height()) + "\n255\n";
  const auto bytes = bmp.bytes();
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return out;
}

Bitmap read_ppm(std::string_view data) {
  std::size_t pos = 0;
  const auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const auto start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return std::string(data.substr(start, pos - start));
  };
  if (token() != "P6") throw FormatError("not a binary PPM (P6) image");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PPM dimensions or depth");
  ++pos;  // single whitespace after maxval
  const auto need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (data.size() < pos + need) throw FormatError("truncated PPM pixel data");
  Bitmap bmp(w, h);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(data.data() + pos), need, bmp.bytes().begin());
  return bmp;
}

}  // namespace chartmark
