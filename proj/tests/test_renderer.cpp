#include <gtest/gtest.h>

#include <algorithm>

#include "chartmark/chart_spec.hpp"
#include "chartmark/error.hpp"
#include "chartmark/marker.hpp"
#include "chartmark/renderer.hpp"

using namespace chartmark;

namespace {

ChartSpec bar_spec(std::vector<double> values) {
  ChartSpec s;
  s.id = "r1";
  s.chart_type = ChartType::bar;
  s.title = "Revenue";
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < values.size(); ++i) labels.push_back("C" + std::to_string(i + 1));
  s.x_labels = labels;
  s.series = {{"Sales", std::move(values)}};
  return s;
}

ElementRef datapoint(const std::string& series, const std::string& category) {
  return {ElementRole::datapoint, series, category};
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

bool has_ink(const Bitmap& bmp, const PixelBBox& b) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y0)));
  const int x1 = std::min(bmp.width(), static_cast<int>(std::ceil(b.x1)));
  const int y1 = std::min(bmp.height(), static_cast<int>(std::ceil(b.y1)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (bmp.at(x, y) != kBackgroundColor) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Layout, BarHeightsProportional) {
  const GeometryMap g = layout(bar_spec({10, 20}));
  const PixelBBox* a = g.find(datapoint("Sales", "C1"));
  const PixelBBox* b = g.find(datapoint("Sales", "C2"));
  ASSERT_TRUE(a && b);
  EXPECT_NEAR(b->height(), 2 * a->height(), 1.0);
  EXPECT_DOUBLE_EQ(a->y1, b->y1);  // common zero baseline
}

TEST(Layout, Deterministic) {
  const auto corpus = generate_corpus(4, 30, reference_type_mix());
  for (const auto& s : corpus) EXPECT_EQ(layout(s), layout(s));
}

TEST(Layout, AllEntriesInsideCanvas) {
  for (const auto& s : generate_corpus(21, 300, reference_type_mix())) {
    const GeometryMap g = layout(s);
    for (const auto& [ref, box] : g.entries) ASSERT_TRUE(is_valid(box, s.canvas)) << s.id << " " << describe(ref);
  }
}

TEST(Layout, BarHeightsFollowLinearAxisOnCorpus) {
  for (const auto& s : generate_corpus(5, 200, {{ChartType::bar, 1.0}})) {
    const GeometryMap g = layout(s);
    double scale = 0;
    for (const auto& series : s.series) {
      for (std::size_t i = 0; i < s.x_labels.size(); ++i) {
        const PixelBBox* b = g.find(datapoint(series.name, s.x_labels[i]));
        ASSERT_NE(b, nullptr);
        if (scale == 0) scale = b->height() / series.values[i];
        EXPECT_NEAR(b->height(), series.values[i] * scale, 1.0) << s.id;
      }
    }
  }
}

TEST(Layout, CrowdedSmallCanvasNeverOverlapsTicks) {
  ChartSpec s;
  s.id = "crowded";
  s.chart_type = ChartType::bar;
  s.title = "Crowded";
  s.canvas = {200, 200};
  s.x_labels = {"Alpha", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel"};
  for (int k = 0; k < 4; ++k) s.series.push_back({"S" + std::to_string(k), std::vector<double>(8, 10.0 + k)});
  s.legend = true;
  try {
    const GeometryMap g = layout(s);
    std::vector<PixelBBox> ticks;
    for (const auto& [ref, box] : g.entries) {
      if (ref.role == ElementRole::x_tick || ref.role == ElementRole::y_tick) ticks.push_back(box);
    }
    for (std::size_t i = 0; i < ticks.size(); ++i) {
      for (std::size_t j = i + 1; j < ticks.size(); ++j) EXPECT_FALSE(intersects(ticks[i], ticks[j]));
    }
  } catch (const LayoutError&) {
    SUCCEED();
  }
}

TEST(Layout, TickLabelsNeverOverlapOnCorpus) {
  for (const auto& s : generate_corpus(13, 200, reference_type_mix())) {
    const GeometryMap g = layout(s);
    std::vector<PixelBBox> texts;
    for (const auto& [ref, box] : g.entries) {
      if (ref.role == ElementRole::x_tick || ref.role == ElementRole::y_tick || ref.role == ElementRole::legend_entry ||
          ref.role == ElementRole::title) {
        texts.push_back(box);
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (std::size_t j = i + 1; j < texts.size(); ++j) ASSERT_FALSE(intersects(texts[i], texts[j])) << s.id;
    }
  }
}

TEST(RenderSvg, TitleIsOneTextNodeInsideItsBox) {
  const ChartSpec s = bar_spec({10, 20, 30});
  const SvgRender r = render_svg(s);
  EXPECT_EQ(count(r.svg, ">Revenue</text>"), 1u);
  const PixelBBox* title = r.geometry.find({ElementRole::title, std::nullopt, std::nullopt});
  ASSERT_NE(title, nullptr);
  // The structural scanner reads back the same text node position.
  ChartSpec marked = s;
  marked.title += "@";
  const auto hits = find_text_markers(render_svg(marked).svg);
  ASSERT_EQ(hits.size(), 1u);
  const GeometryMap marked_geometry = layout(marked);
  const PixelBBox* marked_title = marked_geometry.find({ElementRole::title, std::nullopt, std::nullopt});
  EXPECT_TRUE(contains(*marked_title, hits[0].cx(), hits[0].cy()));
}

TEST(RenderSvg, OneOverlayRect) {
  const ChartSpec s = bar_spec({10, 20, 30});
  const std::vector<PixelBBox> boxes{{100, 100, 150, 140}};
  const SvgRender r = render_svg(s, std::span<const PixelBBox>(boxes));
  EXPECT_EQ(count(r.svg, "class=\"overlay\""), 1u);
  EXPECT_NE(r.svg.find("stroke=\"#ff0000\""), std::string::npos);
  EXPECT_EQ(count(render_svg(s).svg, "class=\"overlay\""), 0u);
}

TEST(RenderSvg, OverlayOutsideCanvasRejected) {
  const ChartSpec s = bar_spec({10, 20, 30});
  const std::vector<PixelBBox> boxes{{700, 500, 900, 640}};
  EXPECT_THROW(render_svg(s, std::span<const PixelBBox>(boxes)), LayoutError);
}

TEST(RenderSvg, ByteDeterministicAndEscaped) {
  ChartSpec s = bar_spec({1, 2, 3});
  s.title = "R&D <share>";
  EXPECT_EQ(render_svg(s).svg, render_svg(s).svg);
  EXPECT_NE(render_svg(s).svg.find("R&amp;D &lt;share&gt;"), std::string::npos);
}

TEST(Rasterize, NoMarkerColorWithoutMarkers) {
  for (const auto& s : generate_corpus(17, 40, reference_type_mix())) {
    const Bitmap bmp = rasterize(s, std::span<const MarkerAnchor>{}).bitmap;
    EXPECT_TRUE(find_marker_components(bmp).empty()) << s.id;
  }
}

TEST(Rasterize, MarkerCentroidAtAnchor) {
  const ChartSpec s = bar_spec({10, 20, 30});
  const std::vector<MarkerAnchor> m{{100, 100}};
  const Bitmap bmp = rasterize(s, std::span<const MarkerAnchor>(m)).bitmap;
  const auto comps = find_marker_components(bmp);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_NEAR(comps[0].cx, 100, 1.0);
  EXPECT_NEAR(comps[0].cy, 100, 1.0);
}

TEST(Rasterize, MarkerAtCornerClippedButSingle) {
  Bitmap bmp(50, 50);
  draw_marker(bmp, {0, 0});
  const auto comps = find_marker_components(bmp);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].bbox.x0, 0);
  EXPECT_EQ(comps[0].bbox.y0, 0);
  EXPECT_LE(comps[0].bbox.x1, kMarkerGlyphSize);
}

TEST(Rasterize, CrossShape) {
  Bitmap bmp(40, 40);
  draw_marker(bmp, {20.4, 20.7});
  const auto comps = find_marker_components(bmp);
  ASSERT_EQ(comps.size(), 1u);
  // 9x9 cross with 3-pixel arms: 2 * 9 * 3 - 3 * 3 pixels
  EXPECT_EQ(comps[0].pixels, 45u);
  EXPECT_EQ(comps[0].bbox, (PixelBBox{16, 16, 25, 25}));
}

TEST(Rasterize, EveryElementHasInk) {
  for (const auto& s : generate_corpus(23, 60, reference_type_mix())) {
    const RasterRender r = rasterize(s, std::span<const MarkerAnchor>{});
    for (const auto& [ref, box] : r.geometry.entries) ASSERT_TRUE(has_ink(r.bitmap, box)) << s.id << " " << describe(ref);
  }
}

TEST(Palette, ExcludesReservedColors) {
  for (const Rgb& c : palette()) {
    EXPECT_NE(c, kMarkerColor);
    EXPECT_NE(c, kBackgroundColor);
  }
  EXPECT_NE(kOverlayColor, kMarkerColor);
  EXPECT_NE(kTextColor, kMarkerColor);
  EXPECT_NE(kAxisColor, kMarkerColor);
  EXPECT_NE(kGridColor, kMarkerColor);
}

TEST(Ppm, RoundTripAndErrors) {
  Bitmap bmp(3, 2);
  bmp.set(1, 1, {1, 2, 3});
  const std::string data = write_ppm(bmp);
  EXPECT_EQ(data.substr(0, 2), "P6");
  EXPECT_EQ(read_ppm(data), bmp);
  EXPECT_THROW(read_ppm("P3\n1 1\n255\n"), FormatError);
  EXPECT_THROW(read_ppm(data.substr(0, data.size() - 1)), FormatError);
}

TEST(ElementRef, JsonRoundTripAndRequirements) {
  const ElementRef r{ElementRole::datapoint, "S", "C"};
  EXPECT_EQ(element_ref_from_json(to_json(r)), r);
  EXPECT_THROW(element_ref_from_json(nlohmann::json::parse(R"({"role":"datapoint","series":"S"})")), IntegrityError);
  EXPECT_THROW(element_ref_from_json(nlohmann::json::parse(R"({"role":"legend_entry"})")), IntegrityError);
  EXPECT_THROW(element_ref_from_json(nlohmann::json::parse(R"({"role":"x_tick"})")), IntegrityError);
  EXPECT_THROW(element_ref_from_json(nlohmann::json::parse(R"({"role":"bogus"})")), IntegrityError);
}
