#include <cmath>
#include <fstream>
#include <sstream>

#include "clvsurvey/error.hpp"
#include "clvsurvey/survey.hpp"
#include "doctest.h"

using namespace clvsurvey;

namespace {

const CalendarMonth kFeb2013{2013, 2};
const char* kHeader = "current_brand,current_date,previous_brand,previous_date,intended_brand,agegr,gender,incomegr,region\n";

std::vector<Respondent> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_survey(in, BrandCatalog::mobile_default());
}

Respondent make(int cur, DateAnswer cur_date, std::optional<int> prev, DateAnswer prev_date,
                std::optional<int> intended = std::nullopt) {
  Respondent r;
  r.current_brand = cur;
  r.current_purchase = cur_date;
  r.previous_brand = prev;
  r.previous_purchase = prev_date;
  r.intended_brand = intended;
  return r;
}

}  // namespace

TEST_CASE("date answers parse every granularity") {
  CHECK(DateAnswer::parse("2012-06") == DateAnswer::of_month(2012, 6));
  CHECK(DateAnswer::parse("2011-QW") == DateAnswer::of_season(2011, Season::winter));
  CHECK(DateAnswer::parse("2011-QA") == DateAnswer::of_season(2011, Season::autumn));
  CHECK(DateAnswer::parse("2010-??") == DateAnswer::of_year(2010));
  CHECK(DateAnswer::parse("??") == DateAnswer::unknown());
  CHECK_THROWS_AS(DateAnswer::parse("2010-13"), ValidationError);
  CHECK_THROWS_AS(DateAnswer::parse("2010-QX"), ValidationError);
  for (const char* s : {"2012-06", "2011-QP", "2010-??", "??"}) CHECK(DateAnswer::parse(s).to_string() == s);
}

TEST_CASE("winter spans december of the previous year") {
  const auto [first, last] = DateAnswer::of_season(2012, Season::winter).month_range();
  CHECK(first == CalendarMonth{2011, 12}.index());
  CHECK(last == CalendarMonth{2012, 2}.index());
}

TEST_CASE("date bounds") {
  CHECK(date_bounds(DateAnswer::of_month(2012, 6), kFeb2013) == ElapsedBounds{8, 9});
  CHECK(date_bounds(DateAnswer::of_year(2010), kFeb2013) == ElapsedBounds{26, 38});
  CHECK(date_bounds(DateAnswer::unknown(), kFeb2013) == ElapsedBounds{0, 200});
  CHECK_THROWS_AS(date_bounds(DateAnswer::of_month(2013, 5), kFeb2013), ValidationError);
}

TEST_CASE("refining granularity never widens the window") {
  for (int m = 1; m <= 12; ++m) {
    const auto month = date_bounds(DateAnswer::of_month(2011, m), kFeb2013);
    const Season s = m == 12 || m <= 2 ? Season::winter : m <= 5 ? Season::spring : m <= 8 ? Season::summer
                                                                                          : Season::autumn;
    const auto season = date_bounds(DateAnswer::of_season(m == 12 ? 2012 : 2011, s), kFeb2013);
    const auto year = date_bounds(DateAnswer::of_year(2011), kFeb2013);
    CHECK(season.earliest <= month.earliest);
    CHECK(season.latest >= month.latest);
    // Winter straddles the turn of the year.
    if (m >= 3 && m <= 11) {
      CHECK(year.earliest <= season.earliest);
      CHECK(year.latest >= season.latest);
    }
    CHECK(month.latest - month.earliest == 1);
    CHECK(season.latest - season.earliest == 3);
  }
}

TEST_CASE("interval construction") {
  auto iv = build_interval(DateAnswer::of_month(2012, 6), DateAnswer::of_year(2010), kFeb2013);
  CHECK(iv.interval == CensoredInterval{18, 29});
  CHECK_FALSE(iv.clamped);

  iv = build_interval(DateAnswer::of_month(2012, 6), DateAnswer::unknown(), kFeb2013);
  CHECK(iv.interval.t_max == 200);

  iv = build_interval(DateAnswer::of_month(2012, 6), DateAnswer::of_month(2012, 6), kFeb2013);
  CHECK(iv.interval == CensoredInterval{0, 1});

  // Previous purchase recalled as later than the current one.
  iv = build_interval(DateAnswer::of_month(2011, 1), DateAnswer::of_month(2012, 1), kFeb2013);
  CHECK(iv.clamped);
  CHECK(iv.interval == CensoredInterval{0, 1});

  // Two exact months give a point interval, kept open by the guard width.
  iv = build_interval(DateAnswer::of_month(2012, 6), DateAnswer::of_month(2010, 6), kFeb2013);
  CHECK_FALSE(iv.clamped);
  CHECK(iv.interval.t_max == 24);
  CHECK(iv.interval.t_max - iv.interval.t_min == doctest::Approx(kZeroWidthGuardMonths));
}

TEST_CASE("parse survey rows") {
  auto rs = parse(std::string(kHeader) + "Nokia,2012-06,Nokia,2010-??,Samsung,35-44,M,30-50k,Western\n");
  REQUIRE(rs.size() == 1);
  const auto& r = rs[0];
  CHECK(r.current_brand == 1);
  CHECK(r.previous_brand == 1);
  CHECK(r.intended_brand == 3);
  CHECK(r.previous_purchase.granularity == Granularity::year);
  CHECK(r.covariates == Covariates{3, 1, 2, 3});

  CHECK(parse("").empty());

  rs = parse(std::string(kHeader) + "Motorola,2012-06,,??,,1,2,5,4\n");
  CHECK(rs[0].current_brand == 4);
  CHECK_FALSE(rs[0].previous_brand.has_value());
  CHECK_FALSE(rs[0].intended_brand.has_value());

  try {
    parse(std::string(kHeader) + "Nokia,2012-06,Nokia,2010-??,,1,1,1,1\nNokia,2012-06,Nokia,2010-??,,7,1,1,1\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("agegr") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse(std::string(kHeader) + "Nokia,2012-06\n"), ValidationError);
}

TEST_CASE("536-respondent fixture") {
  std::ifstream in(CLVSURVEY_TEST_DATA "/survey_536.csv");
  REQUIRE(in);
  const auto brands = BrandCatalog::mobile_default();
  const auto rs = parse_survey(in, brands);
  CHECK(rs.size() == 536);
  std::size_t absent = 0;
  for (const auto& r : rs) absent += !r.previous_brand;
  CHECK(absent == 19);
  const auto ds = build_dataset(rs, Variant::historical, kFeb2013, brands);
  CHECK(ds.n_retained + ds.n_churned == 517);

  std::ostringstream out;
  write_survey(out, rs, brands);
  std::istringstream back(out.str());
  CHECK(parse_survey(back, brands) == rs);
}

TEST_CASE("historical dataset layout") {
  std::vector<Respondent> rs{
      make(1, DateAnswer::of_month(2012, 6), 1, DateAnswer::of_year(2010)),
      make(3, DateAnswer::of_month(2012, 1), 1, DateAnswer::of_month(2009, 5)),
      make(2, DateAnswer::of_year(2011), std::nullopt, DateAnswer::of_year(2008)),
      make(2, DateAnswer::of_year(2011), std::nullopt, DateAnswer::unknown()),
      make(1, DateAnswer::unknown(), 1, DateAnswer::unknown()),
  };
  const auto ds = build_dataset(rs, Variant::historical, kFeb2013, BrandCatalog::mobile_default());
  CHECK(ds.n_retained == 2);
  CHECK(ds.n_churned == 1);
  CHECK(ds.n_interval_only == 1);
  CHECK(ds.report.dropped_respondents == 1);
  CHECK(ds.report.unknown_current_date == 1);
  REQUIRE(ds.records.size() == 4);
  CHECK(ds.records[0].repurchase == 1);
  CHECK(ds.records[2].block == RecordBlock::churned);
  CHECK(ds.records[2].new_brand == 3);
  CHECK(ds.records[3].block == RecordBlock::interval_only);
  CHECK_FALSE(ds.records[3].repurchase.has_value());
  for (const auto& r : ds.records) {
    CHECK(r.interval.t_min >= 0);
    CHECK(r.interval.t_min <= r.interval.t_max);
    CHECK(r.interval.t_max <= 200);
  }
  CHECK(ds.individuals.size() == rs.size());
}

TEST_CASE("intended variant adds right-censored records") {
  std::vector<Respondent> rs{make(1, DateAnswer::of_month(2012, 4), 1, DateAnswer::of_year(2010), 3)};
  const auto ds = build_dataset(rs, Variant::intended, kFeb2013, BrandCatalog::mobile_default());
  REQUIRE(ds.records.size() == 2);
  const auto& next = ds.records[1];
  CHECK(next.block == RecordBlock::churned);
  CHECK(next.interval.t_min == 10);
  CHECK(std::isinf(next.interval.t_max));
  CHECK(next.repurchase == 0);
  CHECK(next.new_brand == 3);
  CHECK(next.prev_brand == 1);

  std::vector<Respondent> none{make(1, DateAnswer::of_month(2012, 4), 1, DateAnswer::of_year(2010))};
  CHECK_THROWS_AS(build_dataset(none, Variant::intended, kFeb2013, BrandCatalog::mobile_default()), ValidationError);
}

TEST_CASE("dataset files round-trip exactly") {
  std::ifstream in(CLVSURVEY_TEST_DATA "/survey_536.csv");
  const auto brands = BrandCatalog::mobile_default();
  const auto rs = parse_survey(in, brands);
  for (Variant v : {Variant::historical, Variant::intended}) {
    const auto ds = build_dataset(rs, v, kFeb2013, brands);
    std::stringstream buf;
    write_dataset(buf, ds);
    const auto back = read_dataset(buf);
    CHECK(back.records == ds.records);
    CHECK(back.individuals == ds.individuals);
    CHECK(back.report == ds.report);
    CHECK(back.n_retained == ds.n_retained);
    CHECK(back.variant == ds.variant);
    CHECK(back.brands == ds.brands);
    std::ostringstream again;
    write_dataset(again, back);
    CHECK(again.str() == buf.str());
  }
}
