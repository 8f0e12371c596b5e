#include <gtest/gtest.h>

#include "priorseg/pckg.hpp"
#include "support.hpp"

using namespace priorseg;
using priorseg::testing::random_entry;

namespace {

constexpr const char* kWater = R"([
  {
    "Category": "water",
    "Meaning": "Open surface water.",
    "Modifier Analysis": "none",
    "Coarse Class": "water",
    "NDVI Range": [-0.50, 0.10],
    "DEM Range": [0.00, 50.00],
    "SAR Range": [-25.00, -15.00],
    "Reasoning": "Water absorbs NIR; low-lying; specular radar return."
  }
])";

nlohmann::ordered_json water_obj() { return nlohmann::ordered_json::parse(kWater)[0]; }

}  // namespace

TEST(Pckg, ParsesMinimalEntry) {
  const Pckg g = parse_pckg(kWater);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.entry(1).category, "water");
  EXPECT_EQ(g.class_id("water"), 1);
  EXPECT_FALSE(g.class_id("land").has_value());
}

TEST(Pckg, EmptyArrayWarns) {
  Diagnostics d;
  const Pckg g = parse_pckg("[]", &d);
  EXPECT_EQ(g.size(), 0u);
  ASSERT_EQ(d.warnings.size(), 1u);
}

TEST(Pckg, InvertedIntervalIsValidationError) {
  auto obj = water_obj();
  obj["NDVI Range"] = {0.60, 0.20};
  try {
    parse_entry(obj);
    FAIL() << "no error";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("inverted interval"), std::string::npos);
    EXPECT_NE(what.find("water"), std::string::npos);
    EXPECT_NE(what.find("NDVI Range"), std::string::npos);
  }
}

TEST(Pckg, MissingFieldIsSchemaErrorNamingFieldAndCategory) {
  auto obj = water_obj();
  obj.erase("Reasoning");
  try {
    parse_entry(obj);
    FAIL() << "no error";
  } catch (const SchemaError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("Reasoning"), std::string::npos);
    EXPECT_NE(what.find("water"), std::string::npos);
  }
}

TEST(Pckg, MalformedJsonReportsLine) {
  const std::string doc = "[\n  {\n    \"Category\": \"water\",,\n  }\n]";
  try {
    parse_pckg(doc);
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Pckg, DuplicateCategoryRejected) {
  const std::string doc = std::string("[") + water_obj().dump() + "," + water_obj().dump() + "]";
  EXPECT_THROW(parse_pckg(doc), ValidationError);
}

TEST(Pckg, NonArrayDocumentIsSchemaError) { EXPECT_THROW(parse_pckg(R"({"a": 1})"), SchemaError); }

TEST(Pckg, MoreThanTwoDecimalsRejected) {
  auto obj = water_obj();
  obj["SAR Range"] = {-25.001, -15.0};
  EXPECT_THROW(parse_entry(obj), ValidationError);
}

TEST(Pckg, ThirdDecimalRejectedOnLargeBounds) {
  // mountain-scale elevations leave little headroom in the decimal check
  auto obj = water_obj();
  obj["DEM Range"] = {0.0, 8799.995};
  EXPECT_THROW(parse_entry(obj), ValidationError);
  obj["DEM Range"] = {-412.37, 8848.86};
  EXPECT_EQ(parse_entry(obj).range(Modality::dem).hi, 8848.86);
}

TEST(Pckg, NdviOutsideUnitRangeRejected) {
  auto obj = water_obj();
  obj["NDVI Range"] = {-1.5, 0.1};
  EXPECT_THROW(parse_entry(obj), ValidationError);
}

TEST(Pckg, IntegerBoundsAccepted) {
  auto obj = water_obj();
  obj["DEM Range"] = {0, 50};
  EXPECT_EQ(parse_entry(obj).range(Modality::dem).hi, 50.0);
}

TEST(Pckg, Lookup) {
  const Pckg g = parse_pckg(kWater);
  EXPECT_EQ(lookup_interval(g, 1, Modality::ndvi).lo, -0.50);
  EXPECT_EQ(lookup_interval(g, 1, Modality::ndvi).hi, 0.10);
  EXPECT_EQ(lookup_interval(g, 1, Modality::sar).lo, -25.0);
  EXPECT_EQ(lookup_interval(g, 1, Modality::sar).hi, -15.0);
  EXPECT_THROW(lookup_interval(g, 7, Modality::ndvi), LookupError);
  EXPECT_THROW(lookup_interval(g, 0, Modality::ndvi), LookupError);
}

TEST(Pckg, IntervalDistance) {
  const Interval iv{-0.50, 0.10};
  EXPECT_EQ(interval_distance(0.0, iv), 0.0);
  EXPECT_NEAR(interval_distance(0.30, iv), 0.20, 1e-15);
  EXPECT_NEAR(interval_distance(-0.80, iv), 0.30, 1e-15);
  EXPECT_EQ(interval_distance(iv.lo, iv), 0.0);
  EXPECT_EQ(interval_distance(iv.hi, iv), 0.0);
}

TEST(Pckg, IntervalDistanceBoundaryProperty) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const Interval iv = priorseg::testing::random_interval(rng, -100, 100);
    EXPECT_EQ(interval_distance(iv.lo, iv), 0.0);
    EXPECT_EQ(interval_distance(iv.hi, iv), 0.0);
    EXPECT_EQ(interval_distance(iv.midpoint(), iv), 0.0);
  }
}

TEST(Pckg, FormatBound) {
  EXPECT_EQ(format_bound(0.5), "0.50");
  EXPECT_EQ(format_bound(-25.0), "-25.00");
  EXPECT_EQ(format_bound(-0.0), "0.00");
  EXPECT_EQ(format_bound(8848.86), "8848.86");
}

TEST(Pckg, SerializeSingleEntryHasAllFields) {
  const Pckg g = parse_pckg(kWater);
  const auto doc = nlohmann::ordered_json::parse(serialize_pckg(g));
  ASSERT_TRUE(doc.is_array());
  ASSERT_EQ(doc.size(), 1u);
  for (auto f : kRequiredFields) EXPECT_TRUE(doc[0].contains(std::string(f))) << f;
  EXPECT_NE(serialize_pckg(g).find("[-0.50, 0.10]"), std::string::npos);
}

TEST(Pckg, UnknownFieldsPreserved) {
  auto obj = water_obj();
  obj["Source"] = "survey";
  const PckgEntry e = parse_entry(obj);
  EXPECT_EQ(e.extra["Source"], "survey");
  const Pckg g({e});
  EXPECT_EQ(parse_pckg(serialize_pckg(g)), g);
}

TEST(Pckg, RoundTripThreeEntriesFieldByField) {
  std::mt19937_64 rng(11);
  const Pckg g({random_entry(rng, "a"), random_entry(rng, "b"), random_entry(rng, "c")});
  const Pckg back = parse_pckg(serialize_pckg(g));
  ASSERT_EQ(back.size(), 3u);
  for (int c = 1; c <= 3; ++c) {
    const auto& x = g.entry(c);
    const auto& y = back.entry(c);
    EXPECT_EQ(x.category, y.category);
    EXPECT_EQ(x.meaning, y.meaning);
    EXPECT_EQ(x.modifier_analysis, y.modifier_analysis);
    EXPECT_EQ(x.coarse_class, y.coarse_class);
    EXPECT_EQ(x.reasoning, y.reasoning);
    for (Modality m : kAllModalities) {
      EXPECT_EQ(x.range(m).lo, y.range(m).lo);
      EXPECT_EQ(x.range(m).hi, y.range(m).hi);
    }
  }
  EXPECT_EQ(serialize_pckg(back), serialize_pckg(g));
}

TEST(Pckg, ClassIdsFollowFileOrder) {
  std::mt19937_64 rng(5);
  const Pckg g({random_entry(rng, "z"), random_entry(rng, "a"), random_entry(rng, "m")});
  EXPECT_EQ(g.class_id("z"), 1);
  EXPECT_EQ(g.class_id("a"), 2);
  EXPECT_EQ(g.class_id("m"), 3);
}
