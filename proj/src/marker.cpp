#include "chartmark/marker.hpp"

#include <algorithm>
#include <functional>
#include <regex>

#include "chartmark/error.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

std::string_view to_string(MarkerMode m) { return m == MarkerMode::text_suffix ? "text_suffix" : "point_anchor"; }

MarkerMode marker_mode_for(ElementRole role) {
  switch (role) {
    case ElementRole::title:
    case ElementRole::legend_entry:
    case ElementRole::x_tick:
    case ElementRole::y_tick: return MarkerMode::text_suffix;
    case ElementRole::datapoint: return MarkerMode::point_anchor;
    case ElementRole::plot_area: break;
  }
  throw TargetError("element role '" + std::string(to_string(role)) + "' cannot carry a marker");
}

Decorations decorations(const EditedSpec& e) {
  Decorations d;
  d.markers = e.markers;
  d.marked_y_tick = e.marked_y_tick;
  return d;
}

json to_json(const EditedSpec& e) {
  json j = to_json(e.spec);
  if (!e.markers.empty()) {
    json markers = json::array();
    for (const auto& m : e.markers) markers.push_back({{"x", m.x}, {"y", m.y}});
    j["markers"] = markers;
  }
  if (e.marked_y_tick) j["y_tick_marker"] = *e.marked_y_tick;
  return j;
}

std::string serialize_edited_spec(const EditedSpec& e) { return to_json(e).dump(); }

EditedSpec parse_edited_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SyntaxError(std::string("malformed edited spec: ") + e.what());
  }
  if (!j.is_object()) throw SyntaxError("edited spec must be a JSON object");
  EditedSpec out;
  if (auto it = j.find("markers"); it != j.end()) {
    if (!it->is_array()) throw SyntaxError("'markers' must be an array");
    for (const auto& m : *it) {
      if (!m.is_object() || !m.contains("x") || !m.contains("y") || !m["x"].is_number() || !m["y"].is_number() ||
          m.size() != 2) {
        throw SyntaxError("markers entries must be {x, y} numbers");
      }
      out.markers.push_back({m["x"].get<double>(), m["y"].get<double>()});
    }
    j.erase("markers");
  }
  if (auto it = j.find("y_tick_marker"); it != j.end()) {
    if (!it->is_string()) throw SyntaxError("'y_tick_marker' must be a string");
    out.marked_y_tick = it->get<std::string>();
    j.erase("y_tick_marker");
  }
  out.spec = spec_from_json(j);
  return out;
}

namespace {

bool has_marker_char(std::string_view s) { return s.find(kMarkerChar) != std::string_view::npos; }

bool spec_has_marker_char(const ChartSpec& spec) {
  if (has_marker_char(spec.title) || has_marker_char(spec.id)) return true;
  for (const auto& s : spec.series) {
    if (has_marker_char(s.name)) return true;
  }
  return std::any_of(spec.x_labels.begin(), spec.x_labels.end(), has_marker_char);
}

std::size_t count_char(std::string_view s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), kMarkerChar)); }

std::string strip_marker(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), kMarkerChar), s.end());
  return s;
}

}  // namespace

MarkerEdit describe_edit(const Step& step) {
  if (step.kind != StepKind::Grounding || !step.target) {
    throw TargetError("step " + std::to_string(step.index) + " is not a Grounding step with a target");
  }
  return {step.index, *step.target, marker_mode_for(step.target->role)};
}

ElementRef marked_ref(const ChartSpec& spec, const ElementRef& target) {
  ElementRef ref = target;
  switch (target.role) {
    case ElementRole::legend_entry:
      if (spec.chart_type == ChartType::pie) {
        if (ref.category) *ref.category += kMarkerChar;
      } else if (ref.series) {
        *ref.series += kMarkerChar;
      }
      break;
    case ElementRole::x_tick:
    case ElementRole::y_tick:
      if (ref.category) *ref.category += kMarkerChar;
      break;
    default: break;
  }
  return ref;
}

EditedSpec apply_marker(const ChartSpec& spec, const Step& step) {
  const MarkerEdit edit = describe_edit(step);
  if (spec_has_marker_char(spec)) throw CollisionError("spec text already contains '@'");
  const ChartLayout lay = layout_chart(spec);
  if (!lay.geometry.find(edit.target)) throw TargetError("target " + describe(edit.target) + " does not resolve");

  EditedSpec out{spec, {}, std::nullopt};
  auto& s = out.spec;
  const auto& t = edit.target;
  switch (t.role) {
    case ElementRole::title: s.title += kMarkerChar; break;
    case ElementRole::legend_entry:
      if (s.chart_type == ChartType::pie) {
        *std::find(s.x_labels.begin(), s.x_labels.end(), *t.category) += kMarkerChar;
      } else {
        std::find_if(s.series.begin(), s.series.end(), [&](const Series& x) { return x.name == *t.series; })->name +=
            kMarkerChar;
      }
      break;
    case ElementRole::x_tick: *std::find(s.x_labels.begin(), s.x_labels.end(), *t.category) += kMarkerChar; break;
    case ElementRole::y_tick: out.marked_y_tick = *t.category; break;
    case ElementRole::datapoint: out.markers.push_back(lay.anchors.at(t)); break;
    case ElementRole::plot_area: throw TargetError("plot area cannot carry a marker");
  }
  return out;
}

std::size_t count_markers(const EditedSpec& e) {
  std::size_t n = count_char(e.spec.title) + e.markers.size() + (e.marked_y_tick ? 1 : 0);
  for (const auto& s : e.spec.series) n += count_char(s.name);
  for (const auto& l : e.spec.x_labels) n += count_char(l);
  return n;
}

bool verify_marker(const EditedSpec& e) { return count_markers(e) == 1; }

bool preserves_content(const EditedSpec& e, const ChartSpec& original) {
  ChartSpec stripped = e.spec;
  stripped.title = strip_marker(stripped.title);
  for (auto& s : stripped.series) s.name = strip_marker(s.name);
  for (auto& l : stripped.x_labels) l = strip_marker(l);
  return stripped == original;
}

std::string_view to_string(DetectionMethod m) { return m == DetectionMethod::structural ? "structural" : "raster"; }

// --- detection -------------------------------------------------------------

namespace {

std::string xml_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    static constexpr std::pair<std::string_view, char> kEntities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    bool matched = false;
    for (const auto& [entity, ch] : kEntities) {
      if (s.substr(i, entity.size()) == entity) {
        out += ch;
        i += entity.size() - 1;
        matched = true;
        break;
      }
    }
    if (!matched) out += '&';
  }
  return out;
}

std::optional<double> attribute(std::string_view tag, std::string_view name) {
  const std::string key = " " + std::string(name) + "=\"";
  const auto pos = tag.find(key);
  if (pos == std::string_view::npos) return std::nullopt;
  const auto start = pos + key.size();
  const auto end = tag.find('"', start);
  try {
    return std::stod(std::string(tag.substr(start, end - start)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string anchor_of(std::string_view tag) {
  const std::string_view key = " text-anchor=\"";
  const auto pos = tag.find(key);
  if (pos == std::string_view::npos) return "start";
  const auto start = pos + key.size();
  return std::string(tag.substr(start, tag.find('"', start) - start));
}

}  // namespace

std::vector<PixelBBox> find_text_markers(std::string_view svg) {
  std::vector<PixelBBox> hits;
  for (std::size_t pos = svg.find("<text"); pos != std::string_view::npos; pos = svg.find("<text", pos + 1)) {
    const auto tag_end = svg.find('>', pos);
    if (tag_end == std::string_view::npos) break;
    const auto close = svg.find("</text>", tag_end);
    if (close == std::string_view::npos) break;
    const std::string_view tag = svg.substr(pos, tag_end - pos);
    const std::string content = xml_unescape(svg.substr(tag_end + 1, close - tag_end - 1));
    if (content.find(kMarkerChar) == std::string::npos) continue;

    const auto x = attribute(tag, "x"), y = attribute(tag, "y"), size = attribute(tag, "font-size");
    if (!x || !y || !size) continue;
    TextItem item{{}, content, *x, *y, *size};
    const std::string anchor = anchor_of(tag);
    if (anchor == "middle") item.x -= item.width() / 2;
    if (anchor == "end") item.x -= item.width();

    std::size_t index = 0;
    for (std::size_t i = 0; i < content.size(); ++i) {
      const auto c = static_cast<unsigned char>(content[i]);
      if ((c & 0xC0) == 0x80) continue;
      if (content[i] == kMarkerChar) hits.push_back(item.glyph_box(index));
      ++index;
    }
  }
  return hits;
}

std::vector<MarkerComponent> find_marker_components(const Bitmap& bmp) {
  const int w = bmp.width(), h = bmp.height();
  const auto bytes = bmp.bytes();
  const auto is_marker = [&](std::size_t p) {
    return bytes[p * 3] == kMarkerColor.r && bytes[p * 3 + 1] == kMarkerColor.g && bytes[p * 3 + 2] == kMarkerColor.b;
  };
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  std::vector<MarkerComponent> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < seen.size(); ++start) {
    if (seen[start] || !is_marker(start)) continue;
    MarkerComponent comp;
    comp.bbox = {1e18, 1e18, -1e18, -1e18};
    double sx = 0, sy = 0;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
      ++comp.pixels;
      sx += x + 0.5;
      sy += y + 0.5;
      comp.bbox.x0 = std::min<double>(comp.bbox.x0, x);
      comp.bbox.y0 = std::min<double>(comp.bbox.y0, y);
      comp.bbox.x1 = std::max<double>(comp.bbox.x1, x + 1);
      comp.bbox.y1 = std::max<double>(comp.bbox.y1, y + 1);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const auto q = static_cast<std::size_t>(ny) * static_cast<std::size_t>(w) + static_cast<std::size_t>(nx);
          if (!seen[q] && is_marker(q)) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    comp.cx = sx / static_cast<double>(comp.pixels);
    comp.cy = sy / static_cast<double>(comp.pixels);
    out.push_back(comp);
  }
  return out;
}

DetectionResult detect_markers(std::string_view svg, const std::function<Bitmap()>& raster) {
  const auto text_hits = find_text_markers(svg);
  if (text_hits.size() == 1) return {text_hits.front(), DetectionMethod::structural};
  const auto components = find_marker_components(raster());
  if (components.size() == 1) return {components.front().bbox, DetectionMethod::raster};
  if (components.size() > 1) {
    throw AmbiguousError("marker found in " + std::to_string(components.size()) + " raster components");
  }
  if (text_hits.size() > 1) {
    throw AmbiguousError("marker found in " + std::to_string(text_hits.size()) + " text nodes");
  }
  throw NotFoundError("no marker found in either pass");
}

DetectionResult detect_markers(std::string_view svg, const Bitmap& bmp) {
  return detect_markers(svg, [&bmp] { return bmp; });
}

PixelBBox finalize_bbox(const PixelBBox& raw, const Canvas& canvas, double min_w, double min_h) {
  PixelBBox b = raw;
  const auto widen = [](double& lo, double& hi, double min_len, double limit) {
    if (hi - lo < min_len) {
      const double c = (lo + hi) / 2;
      lo = c - min_len / 2;
      hi = c + min_len / 2;
    }
    if (hi - lo >= limit) {
      lo = 0;
      hi = limit;
      return;
    }
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi > limit) {
      lo -= hi - limit;
      hi = limit;
    }
  };
  widen(b.x0, b.x1, min_w, canvas.width);
  widen(b.y0, b.y1, min_h, canvas.height);
  return b;
}

double min_marker_size(const Canvas& canvas, double reference_px) { return reference_px * canvas.width / 1000.0; }

}  // namespace chartmark
