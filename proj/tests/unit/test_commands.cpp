#include <filesystem>
#include <fstream>
#include <sstream>

#include "clvsurvey/commands.hpp"
#include "doctest.h"

using namespace clvsurvey;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("clvsurvey_cmd_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Config quick_mobile(const fs::path& dir) {
  Config c;
  c.set("run", "seed", "5");
  c.set("run", "out_dir", dir.string());
  c.set("chains", "n_chains", "2");
  c.set("chains", "burn_in", "100");
  c.set("chains", "keep", "100");
  c.set("chains", "parallel", "false");
  c.set("fit", "strict", "false");
  c.set("revenue", "histories", "20");
  c.set("diagnose", "realizations", "5");
  return c;
}

Status status_of(std::string_view command, const Config& c, std::string* message = nullptr) {
  try {
    return cmd::run_command(command, c).status;
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.status();
  }
}

// First CSV row whose leading fields match.
std::string find_row(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return line;
  return {};
}

}  // namespace

TEST_CASE("command names") {
  const auto& n = cmd::command_names();
  CHECK(n == std::vector<std::string>{"simulate", "fit", "estimate", "diagnose", "report"});
  CHECK(status_of("bogus", Config{}) == Status::validation);
}

TEST_CASE("unknown keys are rejected") {
  Config c;
  c.set("chains", "n_chain", "2");
  std::string msg;
  CHECK(status_of("simulate", c, &msg) == Status::validation);
  CHECK(msg.find("n_chain") != std::string::npos);
  Config d;
  d.set("strata", "15-25", "100");
  CHECK(status_of("simulate", d) == Status::validation);
}

TEST_CASE("missing inputs are validation errors") {
  const auto dir = scratch("missing");
  std::string msg;
  CHECK(status_of("fit", quick_mobile(dir), &msg) == Status::validation);
  CHECK(msg.find("survey") != std::string::npos);
  CHECK(status_of("estimate", quick_mobile(dir), &msg) == Status::validation);
  CHECK(msg.find("dataset") != std::string::npos);
}

TEST_CASE("mobile pipeline, variants, strata and determinism") {
  const auto dir = scratch("mobile");
  const auto c = quick_mobile(dir);
  auto r = cmd::simulate(c);
  CHECK(r.status == Status::ok);
  CHECK(fs::exists(dir / "survey.csv"));
  const std::string survey = slurp(dir / "survey.csv");
  CHECK(survey.rfind("# clvsurvey 0.1.0 config_hash=", 0) == 0);

  auto intended = c;
  intended.set("run", "variant", "intended");
  for (const Config& cv : {c, intended}) {
    CHECK(status_of("fit", cv) == Status::ok);
    CHECK(status_of("estimate", cv) == Status::ok);
    CHECK(status_of("diagnose", cv) == Status::ok);
    CHECK(status_of("report", cv) == Status::ok);
  }
  const auto rep_h = slurp(dir / "report_historical.txt");
  const auto rep_i = slurp(dir / "report_intended.txt");
  CHECK_FALSE(rep_h.empty());
  CHECK_FALSE(rep_i.empty());
  CHECK(rep_h != rep_i);
  CHECK(fs::exists(dir / "ce_intended.csv"));
  CHECK(fs::exists(dir / "brand_regeneration_historical.csv"));
  CHECK(fs::exists(dir / "cdf_envelope_intended.csv"));

  const std::string ce_before = slurp(dir / "ce_historical.csv");
  const std::string draws_before = slurp(dir / "draws_historical.csv");
  CHECK(find_row(slurp(dir / "summary_historical.csv"), "kappa,").size() > 6);

  SUBCASE("same seed reproduces every byte") {
    CHECK(status_of("fit", c) == Status::ok);
    CHECK(status_of("estimate", c) == Status::ok);
    CHECK(slurp(dir / "draws_historical.csv") == draws_before);
    CHECK(slurp(dir / "ce_historical.csv") == ce_before);
  }

  SUBCASE("zero horizon gives zero value everywhere") {
    auto z = c;
    z.set("revenue", "horizon_months", "0");
    CHECK(status_of("estimate", z) == Status::ok);
    std::istringstream in(slurp(dir / "ce_historical.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("brand,", 0) == 0) continue;
      ++rows;
      CHECK(line.find(",0,0,0") != std::string::npos);
    }
    CHECK(rows == 28);
  }

  SUBCASE("strata must cover every sampled age group") {
    auto s = c;
    s.set("strata", "15-24", "656000");
    std::string msg;
    CHECK(status_of("estimate", s, &msg) == Status::validation);
    CHECK(msg.find("25-34") != std::string::npos);
  }

  SUBCASE("strata scale the equity linearly") {
    auto s = c;
    const char* labels[] = {"15-24", "25-34", "35-44", "45-54", "55-64", "65-79"};
    for (const char* l : labels) s.set("strata", l, "1000");
    CHECK(status_of("estimate", s) == Status::ok);
    const auto a = find_row(slurp(dir / "ce_historical.csv"), "Nokia,all,");
    for (const char* l : labels) s.set("strata", l, "2000");
    CHECK(status_of("estimate", s) == Status::ok);
    const auto b = find_row(slurp(dir / "ce_historical.csv"), "Nokia,all,");
    auto mean = [](const std::string& row) {
      std::istringstream in(row);
      std::string f;
      for (int k = 0; k < 4; ++k) std::getline(in, f, ',');
      return std::stod(f);
    };
    CHECK(mean(b) == doctest::Approx(2 * mean(a)));
  }
}

TEST_CASE("semi-Markov commands") {
  const auto dir = scratch("sm");
  Config c;
  c.set("run", "model", "semimarkov");
  c.set("run", "seed", "3");
  c.set("run", "out_dir", dir.string());
  c.set("generator", "n", "2000");
  c.set("generator", "sample_size", "40");
  c.set("chains", "n_chains", "2");
  c.set("chains", "burn_in", "100");
  c.set("chains", "keep", "100");
  c.set("fit", "strict", "false");
  c.set("value", "histories", "20");
  CHECK(status_of("simulate", c) == Status::ok);
  CHECK(fs::exists(dir / "oracle_sm.csv"));
  CHECK(status_of("fit", c) == Status::ok);
  CHECK(status_of("estimate", c) == Status::ok);
  CHECK(status_of("report", c) == Status::ok);
  CHECK(fs::exists(dir / "report_sm.txt"));
  CHECK(status_of("diagnose", c) == Status::validation);

  auto z = c;
  z.set("generator", "n", "0");
  CHECK(status_of("simulate", z) == Status::validation);
}

TEST_CASE("strict mode reports non-convergence after writing outputs") {
  const auto dir = scratch("strict");
  auto c = quick_mobile(dir);
  CHECK(status_of("simulate", c) == Status::ok);
  c.set("chains", "burn_in", "5");
  c.set("chains", "keep", "10");
  c.set("fit", "strict", "true");
  const auto r = cmd::fit(c);
  CHECK(r.status == Status::convergence);
  CHECK_FALSE(r.message.empty());
  CHECK(fs::exists(dir / "convergence_historical.csv"));
}
