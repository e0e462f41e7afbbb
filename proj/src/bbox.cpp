#include "chartmark/bbox.hpp"

#include <cmath>
#include <regex>

#include "chartmark/error.hpp"

namespace chartmark {

bool is_valid(const PixelBBox& b, const Canvas& canvas) {
  return 0 <= b.x0 && b.x0 < b.x1 && b.x1 <= canvas.width && 0 <= b.y0 && b.y0 < b.y1 &&
         b.y1 <= canvas.height;
}

bool contains(const PixelBBox& b, double x, double y) {
  return x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1;
}

bool intersects(const PixelBBox& a, const PixelBBox& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

bool touches(const PixelBBox& a, const PixelBBox& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

std::string_view to_string(BBoxFormat f) {
  switch (f) {
    case BBoxFormat::A: return "A";
    case BBoxFormat::B: return "B";
    case BBoxFormat::C: return "C";
  }
  return "C";
}

BBoxFormat bbox_format_from_string(std::string_view s) {
  if (s == "A") return BBoxFormat::A;
  if (s == "B") return BBoxFormat::B;
  if (s == "C") return BBoxFormat::C;
  throw ConfigError("unknown bbox format '" + std::string(s) + "'");
}

int max_units(BBoxFormat f) {
  switch (f) {
    case BBoxFormat::A: return 10000;
    case BBoxFormat::B: return 1000;
    case BBoxFormat::C: return 999;
  }
  return 999;
}

int decimals(BBoxFormat f) {
  switch (f) {
    case BBoxFormat::A: return 4;
    case BBoxFormat::B: return 3;
    case BBoxFormat::C: return 0;
  }
  return 0;
}

double NormBBox::value(std::size_t i) const {
  const int u = units.at(i);
  switch (format) {
    case BBoxFormat::A: return u / 10000.0;
    case BBoxFormat::B: return u / 1000.0;
    case BBoxFormat::C: return u;
  }
  return u;
}

namespace {

// round(pixel * scale / size), half away from zero. Integral pixels go through
// exact integer arithmetic so ties such as 499.5 never suffer from
// representation error.
int quantize(double pixel, int scale, int size) {
  if (pixel == std::floor(pixel) && std::fabs(pixel) < 1e12) {
    const auto num = static_cast<long long>(pixel) * scale;
    const long long den = size;
    const long long mag = (2 * std::llabs(num) + den) / (2 * den);
    return static_cast<int>(num < 0 ? -mag : mag);
  }
  return static_cast<int>(std::round(pixel * scale / size));
}

}  // namespace

NormBBox normalize(const PixelBBox& p, const Canvas& canvas, BBoxFormat fmt) {
  const int scale = max_units(fmt);
  const auto q = [&](double v, int size) { return std::clamp(quantize(v, scale, size), 0, scale); };
  return {fmt,
          {q(p.x0, canvas.width), q(p.y0, canvas.height), q(p.x1, canvas.width), q(p.y1, canvas.height)}};
}

PixelBBox denormalize(const NormBBox& n, const Canvas& canvas) {
  const double scale = max_units(n.format);
  const auto d = [&](int u, int size) { return u * static_cast<double>(size) / scale; };
  return {d(n.units[0], canvas.width), d(n.units[1], canvas.height), d(n.units[2], canvas.width),
          d(n.units[3], canvas.height)};
}

namespace {

std::string format_units(int u, BBoxFormat fmt) {
  if (fmt == BBoxFormat::C) return std::to_string(u);
  const int den = fmt == BBoxFormat::A ? 10000 : 1000;
  std::string frac = std::to_string(u % den);
  frac.insert(0, static_cast<std::size_t>(decimals(fmt)) - frac.size(), '0');
  return std::to_string(u / den) + "." + frac;
}

const std::regex& pattern_for(BBoxFormat fmt) {
  static const std::regex a(R"(\((\d\.\d{4}),(\d\.\d{4})\),\((\d\.\d{4}),(\d\.\d{4})\))");
  static const std::regex b(R"(\((\d\.\d{3}),(\d\.\d{3})\),\((\d\.\d{3}),(\d\.\d{3})\))");
  static const std::regex c(R"(\((0|[1-9]\d{0,2}),(0|[1-9]\d{0,2})\),\((0|[1-9]\d{0,2}),(0|[1-9]\d{0,2})\))");
  switch (fmt) {
    case BBoxFormat::A: return a;
    case BBoxFormat::B: return b;
    case BBoxFormat::C: return c;
  }
  return c;
}

int parse_units(const std::string& s, BBoxFormat fmt) {
  if (fmt == BBoxFormat::C) return std::stoi(s);
  const auto dot = s.find('.');
  return std::stoi(s.substr(0, dot)) * (fmt == BBoxFormat::A ? 10000 : 1000) + std::stoi(s.substr(dot + 1));
}

}  // namespace

std::string serialize(const NormBBox& n) {
  return "(" + format_units(n.units[0], n.format) + "," + format_units(n.units[1], n.format) + "),(" +
         format_units(n.units[2], n.format) + "," + format_units(n.units[3], n.format) + ")";
}

NormBBox parse_bbox(std::string_view text, BBoxFormat fmt) {
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(text.begin(), text.end(), m, pattern_for(fmt))) {
    throw ParseError("malformed bbox '" + std::string(text) + "' for format " + std::string(to_string(fmt)));
  }
  NormBBox out{fmt, {}};
  for (std::size_t i = 0; i < 4; ++i) {
    out.units[i] = parse_units(m[i + 1].str(), fmt);
    if (out.units[i] > max_units(fmt)) throw ParseError("bbox coordinate out of range: " + m[i + 1].str());
  }
  if (out.units[0] > out.units[2] || out.units[1] > out.units[3]) {
    throw ParseError("bbox corners out of order: " + std::string(text));
  }
  return out;
}

bool contains_bbox_pattern(std::string_view text) {
  static const std::regex any(R"(\(\s*\d+(\.\d+)?\s*,\s*\d+(\.\d+)?\s*\)\s*,\s*\(\s*\d+(\.\d+)?\s*,\s*\d+(\.\d+)?\s*\))");
  return std::regex_search(text.begin(), text.end(), any);
}

}  // namespace chartmark
