#include <sstream>

#include "clvsurvey/config.hpp"
#include "clvsurvey/error.hpp"
#include "doctest.h"

using namespace clvsurvey;

namespace {
Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}
}  // namespace

TEST_CASE("sections, keys and comments") {
  const auto c = parse("# top\n[run]\nseed = 42   # inline\nout_dir=out/x\n\n[revenue]\nasp = 68, 473,178 ,0\n");
  CHECK(c.get_u64("run", "seed", 0) == 42);
  CHECK(c.get_string("run", "out_dir", "") == "out/x");
  CHECK(c.get_doubles("revenue", "asp", {}) == std::vector<double>{68, 473, 178, 0});
  CHECK(c.get_int("run", "missing", 7) == 7);
  CHECK_FALSE(c.has("nope", "seed"));
}

TEST_CASE("malformed input is rejected with a location") {
  CHECK_THROWS_AS(parse("seed = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse("[run\n"), ValidationError);
  CHECK_THROWS_AS(parse("[run]\nseed\n"), ValidationError);
  try {
    parse("[run]\nseed = 1\nseed = 2\n");
    FAIL("duplicate accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  const auto c = parse("[run]\nseed = x\nflag = maybe\n");
  CHECK_THROWS_AS(c.get_u64("run", "seed", 0), ValidationError);
  CHECK_THROWS_AS(c.get_bool("run", "flag", false), ValidationError);
}

TEST_CASE("overrides and hashing") {
  auto a = parse("[run]\nseed = 1\n[chains]\nkeep = 10\n");
  auto b = parse("[chains]\nkeep=10\n[run]\nseed=1\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.set("run", "seed", "2");
  CHECK(b.get_u64("run", "seed", 0) == 2);
  CHECK(a.hash() != b.hash());
  CHECK_THROWS_AS(b.set("bad section", "k", "v"), ValidationError);
  CHECK(a.get_bool("x", "y", true));
  a.set("fit", "strict", "off");
  CHECK_FALSE(a.get_bool("fit", "strict", true));
}
