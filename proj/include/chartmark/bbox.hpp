#pragma once

#include <array>
#include <string>
#include <string_view>

#include "chartmark/chart_spec.hpp"

namespace chartmark {

// Pixel-space box, origin top-left, x1/y1 exclusive edges.
struct PixelBBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double cx() const { return (x0 + x1) / 2; }
  double cy() const { return (y0 + y1) / 2; }
  bool operator==(const PixelBBox&) const = default;
};

// True when 0 <= x0 < x1 <= width and likewise for y.
bool is_valid(const PixelBBox& b, const Canvas& canvas);
bool contains(const PixelBBox& b, double x, double y);
// Positive-area overlap.
bool intersects(const PixelBBox& a, const PixelBBox& b);
bool touches(const PixelBBox& a, const PixelBBox& b);

// A: fractions with 4 decimals, B: fractions with 3 decimals, C: integers 0..999.
enum class BBoxFormat { A, B, C };

std::string_view to_string(BBoxFormat f);
BBoxFormat bbox_format_from_string(std::string_view s);

// Quantized coordinates are held as integer steps of the format's unit
// (1e-4, 1e-3 or 1), so equality and text round-trips are exact.
struct NormBBox {
  BBoxFormat format = BBoxFormat::C;
  std::array<int, 4> units{};

  double value(std::size_t i) const;
  bool operator==(const NormBBox&) const = default;
};

// Largest unit count a coordinate may take (10000, 1000 or 999).
int max_units(BBoxFormat f);
int decimals(BBoxFormat f);

// Half-away-from-zero rounding of pixel/size scaled to the format.
NormBBox normalize(const PixelBBox& p, const Canvas& canvas, BBoxFormat fmt);
PixelBBox denormalize(const NormBBox& n, const Canvas& canvas);

// "(x0,y0),(x1,y1)"; A and B zero-padded to their decimals, C bare integers.
std::string serialize(const NormBBox& n);
// Inverse of serialize for one format; throws ParseError on anything else.
NormBBox parse_bbox(std::string_view text, BBoxFormat fmt);

// True if the text contains anything shaped like a serialized box in any of
// the three formats.
bool contains_bbox_pattern(std::string_view text);

}  // namespace chartmark
