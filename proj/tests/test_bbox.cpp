#include <gtest/gtest.h>

#include <cmath>

#include "chartmark/bbox.hpp"
#include "chartmark/error.hpp"
#include "chartmark/util.hpp"

using namespace chartmark;

namespace {

// Independent half-up integer oracle for a non-negative integral pixel.
int oracle_units(long long px, long long size, long long scale) { return static_cast<int>((2 * px * scale + size) / (2 * size)); }

}  // namespace

TEST(Normalize, HalfPointFormatA) {
  const NormBBox n = normalize({500, 0, 1000, 10}, {1000, 800}, BBoxFormat::A);
  EXPECT_EQ(n.units[0], 5000);
  EXPECT_EQ(serialize(n).substr(1, 6), "0.5000");
}

TEST(Normalize, FormatCRoundsHalfUp) {
  // 500 * 999 / 1000 = 499.5 -> 500
  const NormBBox n = normalize({500, 0, 1000, 800}, {1000, 800}, BBoxFormat::C);
  EXPECT_EQ(n.units[0], 500);
  EXPECT_EQ(n.units[1], 0);
  EXPECT_EQ(n.units[2], 999);
  EXPECT_EQ(n.units[3], 999);
}

TEST(Denormalize, Boundaries) {
  const Canvas c{1000, 800};
  const PixelBBox a = denormalize({BBoxFormat::A, {0, 0, 10000, 10000}}, c);
  EXPECT_EQ(a, (PixelBBox{0, 0, 1000, 800}));
  const PixelBBox b = denormalize({BBoxFormat::B, {500, 0, 1000, 1000}}, {800, 600});
  EXPECT_DOUBLE_EQ(b.x0, 400.0);
}

TEST(Serialize, Formats) {
  EXPECT_EQ(serialize({BBoxFormat::C, {450, 374, 470, 399}}), "(450,374),(470,399)");
  EXPECT_EQ(serialize({BBoxFormat::A, {5000, 0, 10000, 123}}), "(0.5000,0.0000),(1.0000,0.0123)");
  EXPECT_EQ(serialize({BBoxFormat::B, {5, 10, 999, 1000}}), "(0.005,0.010),(0.999,1.000)");
}

TEST(Parse, RejectsMalformed) {
  EXPECT_THROW(parse_bbox("(450,374),(470,399", BBoxFormat::C), ParseError);
  EXPECT_THROW(parse_bbox("(450,374),(470,1000)", BBoxFormat::C), ParseError);
  EXPECT_THROW(parse_bbox("(045,374),(470,399)", BBoxFormat::C), ParseError);
  EXPECT_THROW(parse_bbox("(0.5,0.1),(0.6,0.2)", BBoxFormat::A), ParseError);
  EXPECT_THROW(parse_bbox("(0.5000,0.1000),(0.6000,0.2000)", BBoxFormat::B), ParseError);
  EXPECT_THROW(parse_bbox("(470,374),(450,399)", BBoxFormat::C), ParseError);
  EXPECT_THROW(parse_bbox("", BBoxFormat::C), ParseError);
  EXPECT_EQ(parse_bbox("(450,374),(470,399)", BBoxFormat::C), (NormBBox{BBoxFormat::C, {450, 374, 470, 399}}));
}

TEST(Normalize, MatchesIntegerOracleOnAllPixels) {
  const Canvas c{1000, 800};
  for (int px = 0; px <= 1000; ++px) {
    const NormBBox a = normalize({static_cast<double>(px), 0, 1000, 800}, c, BBoxFormat::A);
    const NormBBox b = normalize({static_cast<double>(px), 0, 1000, 800}, c, BBoxFormat::B);
    const NormBBox cc = normalize({static_cast<double>(px), 0, 1000, 800}, c, BBoxFormat::C);
    ASSERT_EQ(a.units[0], oracle_units(px, 1000, 10000)) << px;
    ASSERT_EQ(b.units[0], oracle_units(px, 1000, 1000)) << px;
    ASSERT_EQ(cc.units[0], oracle_units(px, 1000, 999)) << px;
  }
}

TEST(Normalize, MonotoneInPixels) {
  const Canvas c{777, 333};
  for (auto fmt : {BBoxFormat::A, BBoxFormat::B, BBoxFormat::C}) {
    int prev = -1;
    for (int px = 0; px <= 777; ++px) {
      const int u = normalize({static_cast<double>(px), 0, 777, 333}, c, fmt).units[0];
      ASSERT_GE(u, prev);
      prev = u;
    }
  }
}

TEST(Normalize, ClampsToFormatRange) {
  const NormBBox n = normalize({0, 0, 4096, 4096}, {4096, 4096}, BBoxFormat::C);
  EXPECT_EQ(n.units[2], 999);
}

TEST(RoundTrip, RandomBoxesAllFormats) {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    for (auto fmt : {BBoxFormat::A, BBoxFormat::B, BBoxFormat::C}) {
      const int m = max_units(fmt);
      const int x0 = static_cast<int>(rng.uniform_int(0, m - 1));
      const int y0 = static_cast<int>(rng.uniform_int(0, m - 1));
      const NormBBox n{fmt, {x0, y0, static_cast<int>(rng.uniform_int(x0 + 1, m)), static_cast<int>(rng.uniform_int(y0 + 1, m))}};
      ASSERT_EQ(parse_bbox(serialize(n), fmt), n) << serialize(n);
    }
  }
}

TEST(BBoxPattern, DetectsAllFormats) {
  EXPECT_TRUE(contains_bbox_pattern("box (450,374),(470,399) here"));
  EXPECT_TRUE(contains_bbox_pattern("(0.5000,0.1000),(0.6000,0.2000)"));
  EXPECT_TRUE(contains_bbox_pattern("(0.500, 0.100), (0.600, 0.200)"));
  EXPECT_FALSE(contains_bbox_pattern("Give the box (x0,y0),(x1,y1) of the element."));
  EXPECT_FALSE(contains_bbox_pattern("values 450, 374 and 470"));
}

TEST(PixelBBox, Predicates) {
  const Canvas c{100, 100};
  EXPECT_TRUE(is_valid({0, 0, 100, 100}, c));
  EXPECT_FALSE(is_valid({10, 0, 10, 5}, c));
  EXPECT_FALSE(is_valid({-1, 0, 10, 5}, c));
  EXPECT_TRUE(contains({0, 0, 10, 10}, 10, 10));
  EXPECT_TRUE(intersects({0, 0, 10, 10}, {9, 9, 20, 20}));
  EXPECT_FALSE(intersects({0, 0, 10, 10}, {10, 0, 20, 10}));
  EXPECT_TRUE(touches({0, 0, 10, 10}, {10, 0, 20, 10}));
}

TEST(BBoxFormat, Names) {
  EXPECT_EQ(bbox_format_from_string("C"), BBoxFormat::C);
  EXPECT_EQ(to_string(BBoxFormat::A), "A");
  EXPECT_THROW(bbox_format_from_string("D"), ConfigError);
}
