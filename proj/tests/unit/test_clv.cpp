#include <algorithm>
#include <cmath>

#include "clvsurvey/clv.hpp"
#include "clvsurvey/error.hpp"
#include "clvsurvey/mobile_synth.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace clvsurvey;
using namespace clvsurvey::clv;

namespace {

ModelDataset individuals_only(const std::vector<SurveyIndividual>& inds) {
  ModelDataset d;
  d.individuals = inds;
  return d;
}

SurveyIndividual person(int brand, int agegr, double elapsed = 6.0) {
  SurveyIndividual s;
  s.current_brand = brand;
  s.covariates.agegr = agegr;
  s.elapsed = {elapsed, elapsed};
  return s;
}

// Always repurchase, exponential intervals with rate `rate` per year.
mobile::Params loyal_exponential(double rate) {
  auto p = mobile::reference_truth();
  p.kappa = 1.0;
  p.beta.assign(p.beta.size(), 0.0);
  p.beta[0] = std::log(rate);
  p.alpha.assign(p.alpha.size(), 0.0);
  p.alpha[0] = 60.0;
  return p;
}

}  // namespace

TEST_CASE("npv discounts by whole-year powers of the monthly offset") {
  RevenueSpec spec{{100, 473, 0}, 0.10, 60};
  CHECK(npv({{12, 1}}, spec) == doctest::Approx(90.909090909).epsilon(1e-10));
  CHECK(npv({{12, 2}, {36, 2}}, spec) == doctest::Approx(473 / 1.1 + 473 / 1.331).epsilon(1e-12));
  CHECK(npv({{12, 2}, {36, 2}}, spec) == doctest::Approx(785.37).epsilon(1e-4));
  CHECK(npv({}, spec) == 0.0);
  CHECK(npv({{0, 1}, {61, 1}}, spec) == 0.0);
  CHECK(npv({{12, 1}, {12, 2}}, spec, 1) == doctest::Approx(90.909090909));
  spec.horizon_months = 0;
  CHECK(npv({{12, 1}}, spec) == 0.0);
}

TEST_CASE("revenue spec validation") {
  RevenueSpec s = RevenueSpec::mobile_default();
  CHECK_NOTHROW(s.validate(4));
  CHECK_THROWS_AS(s.validate(3), ValidationError);
  s.asp_per_brand[0] = -1;
  CHECK_THROWS_AS(s.validate(4), ValidationError);
  s = RevenueSpec::mobile_default();
  s.horizon_months = -1;
  CHECK_THROWS_AS(s.validate(4), ValidationError);
}

TEST_CASE("draw planning") {
  std::vector<std::size_t> idx;
  std::size_t reps = 0;
  plan_draws(9000, 2000, idx, reps);
  CHECK(idx.size() == 2000);
  CHECK(reps == 1);
  CHECK(idx.front() == 0);
  CHECK(idx.back() < 9000);
  plan_draws(300, 2000, idx, reps);
  CHECK(idx.size() == 300);
  CHECK(reps == 7);
  CHECK_THROWS_AS(plan_draws(0, 10, idx, reps), ValidationError);
  CHECK_THROWS_AS(plan_draws(10, 0, idx, reps), ValidationError);
}

TEST_CASE("loyal exponential buyers match the renewal rate") {
  // With certain repurchase and Poisson purchases the expected value is
  // ASP * rate * integral of 1.1^-t over the horizon.
  const auto p = loyal_exponential(0.8);
  RevenueSpec spec{{100, 0, 0, 0}, 0.10, 60};
  RngStream rng(5, 0);
  const int n = 40000;
  double acc = 0;
  for (int k = 0; k < n; ++k) {
    const auto h = simulate_mobile_history(1, Covariates{}, 7.0, p.kappa, p.beta, p.alpha, p.w, 4, 60, rng);
    for (const auto& pu : h) CHECK(pu.brand == 1);
    acc += npv(h, spec);
  }
  const double rho = std::log(1.1);
  const double expected = 100 * 0.8 * (1 - std::exp(-5 * rho)) / rho;
  CHECK(acc / n == doctest::Approx(expected).epsilon(0.015));
}

TEST_CASE("zero horizon gives zero value") {
  const auto p = mobile::reference_truth();
  const auto d = individuals_only({person(1, 1), person(2, 3)});
  auto spec = RevenueSpec::mobile_default();
  spec.horizon_months = 0;
  const auto s = simulate_histories(testing::constant_mobile_draws(p, 4, 10), d, spec, 10, 1);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 10; ++k)
      for (int b = 1; b <= 4; ++b) CHECK(s.at(i, k, b) == 0.0);
}

TEST_CASE("value grows with the horizon and shares random numbers across horizons") {
  const auto p = mobile::reference_truth();
  const auto d = individuals_only({person(1, 2), person(2, 5), person(3, 4)});
  const auto draws = testing::constant_mobile_draws(p, 4, 40);
  auto spec = RevenueSpec::mobile_default();
  double prev = -1;
  for (double h : {12.0, 36.0, 60.0, 120.0}) {
    spec.horizon_months = h;
    const auto s = simulate_histories(draws, d, spec, 40, 9);
    double total = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 40; ++k)
        for (int b = 1; b <= 4; ++b) total += s.at(i, k, b);
    CHECK(total >= prev);
    prev = total;
  }
}

TEST_CASE("engine matches a direct simulation of the same individuals") {
  const auto p = mobile::reference_truth();
  const auto d = individuals_only({person(1, 2, 3), person(2, 6, 20), person(3, 4, 40)});
  const auto spec = RevenueSpec::mobile_default();
  const auto s = simulate_histories(testing::constant_mobile_draws(p, 4, 500), d, spec, 4000, 31);
  CHECK(s.n_draws() == 500);
  CHECK(s.replicates_per_draw == 8);
  RngStream rng(999, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& ind = d.individuals[i];
    std::vector<double> brute(5, 0.0);
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
      const auto h = simulate_mobile_history(ind.current_brand, ind.covariates, ind.elapsed.midpoint(), p.kappa, p.beta,
                                             p.alpha, p.w, 4, spec.horizon_months, rng);
      for (int b = 1; b <= 4; ++b) brute[b] += npv(h, spec, b) / n;
    }
    for (int b = 1; b <= 3; ++b) {
      double engine = 0;
      for (std::size_t k = 0; k < s.n_draws(); ++k) engine += s.at(i, k, b) / s.n_draws();
      if (brute[b] > 5) CHECK(engine == doctest::Approx(brute[b]).epsilon(0.05));
      else CHECK(std::abs(engine - brute[b]) < 1.0);
    }
  }
}

TEST_CASE("summaries of constant values") {
  const auto d = individuals_only({person(1, 1), person(2, 1), person(1, 2)});
  ClvSamples s(3, 20, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 20; ++k) {
      s.at(i, k, 1) = 70;
      s.at(i, k, 2) = 10;
    }
  std::vector<std::string> warn;
  const auto rows = summarize_clv(s, d, Segmentation::brand_status, &warn);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    const double c = r.brand == 1 ? 70 : 10;
    CHECK(r.mean == doctest::Approx(c));
    CHECK(r.lo == doctest::Approx(c));
    CHECK(r.hi == doctest::Approx(c));
  }
  CHECK(rows[0].n_individuals == 2);
  CHECK(rows[0].n_histories == 40);
  CHECK(warn.empty());

  const auto by_age = summarize_clv(s, d, Segmentation::brand_agegr, &warn);
  CHECK(by_age.size() == 4);
  CHECK(warn.size() == 8);  // four empty age groups per brand

  const auto ce = scale_to_population(s, d, PopulationStrata{{{1, 656000}, {2, 738000}}});
  REQUIRE(ce.size() == 6);
  CHECK(ce[0].agegr == 0);
  CHECK(ce[0].mean == doctest::Approx(70 * (656000 + 738000)));
  CHECK(ce[1].mean == doctest::Approx(70 * 656000));
  CHECK(ce[1].mean == doctest::Approx(45.92e6));
  CHECK(ce[1].lo == doctest::Approx(45.92e6));

  CHECK_THROWS_AS(scale_to_population(s, d, PopulationStrata{{{1, 656000}}}), ValidationError);
  CHECK_THROWS_AS(summarize_clv(ClvSamples{}, d, Segmentation::brand_status), ValidationError);
}

TEST_CASE("population scaling per draw") {
  const auto d = individuals_only({person(1, 1), person(1, 1), person(2, 3), person(2, 3), person(2, 3)});
  ClvSamples s(5, 50, 2);
  RngStream rng(4, 0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 50; ++k)
      for (int b = 1; b <= 2; ++b) s.at(i, k, b) = 100 * rng.uniform();
  const PopulationStrata st{{{1, 1000}, {3, 3000}}};
  const auto ce = scale_to_population(s, d, st);
  std::vector<double> direct(50);
  double mean = 0;
  for (std::size_t k = 0; k < 50; ++k) {
    direct[k] = 1000 * (s.at(0, k, 2) + s.at(1, k, 2)) / 2 + 3000 * (s.at(2, k, 2) + s.at(3, k, 2) + s.at(4, k, 2)) / 3;
    mean += direct[k] / 50;
  }
  const auto it = std::find_if(ce.begin(), ce.end(), [](const CeSummary& c) { return c.brand == 2 && c.agegr == 0; });
  REQUIRE(it != ce.end());
  CHECK(it->mean == doctest::Approx(mean).epsilon(1e-12));
  std::sort(direct.begin(), direct.end());
  CHECK(it->lo >= direct.front());
  CHECK(it->hi <= direct.back());

  // Doubling every stratum doubles the equity.
  const auto ce2 = scale_to_population(s, d, PopulationStrata{{{1, 2000}, {3, 6000}}});
  for (std::size_t k = 0; k < ce.size(); ++k) CHECK(ce2[k].mean == doctest::Approx(2 * ce[k].mean));
}

TEST_CASE("quantile table pools individuals and draws") {
  const auto d = individuals_only({person(1, 1), person(2, 1)});
  ClvSamples s(2, 3, 2);
  for (std::size_t k = 0; k < 3; ++k) {
    s.at(0, k, 1) = 10.0 * (k + 1);
    s.at(1, k, 1) = 1;
  }
  const auto q = clv_quantiles(s, d);
  REQUIRE(q.size() == 4);
  CHECK(q[0].segment == "current");
  CHECK(q[0].dist.n == 3);
  CHECK(q[0].dist.median == 20);
  CHECK(q[1].dist.max == 1);
}

TEST_CASE("semi-Markov projection under absorbing focal loyalty") {
  // p = 1, q = 0: every purchase from now on is focal.
  const std::size_t n = 20;
  std::vector<std::string> names;
  std::vector<mcmc::BlockColumns> blocks{{"lambda", 0, n}, {"p", n, n}, {"q", 2 * n, n}};
  for (const char* b : {"lambda", "p", "q"})
    for (std::size_t i = 0; i < n; ++i) names.push_back(std::string(b) + "[" + std::to_string(i) + "]");
  mcmc::PosteriorDraws draws(names, blocks, 1, 100);
  for (std::size_t t = 0; t < 100; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      draws.value(0, t, i) = 0.5;
      draws.value(0, t, n + i) = 1.0;
      draws.value(0, t, 2 * n + i) = 0.0;
    }
  std::vector<sm::SurveyObservation> obs(n);
  for (std::size_t i = 0; i < n; ++i) obs[i] = {static_cast<int>(i % 2), 1, 1.0, 1.0, i};
  const auto est = estimate_sm(draws, obs, sm::ValueSpec{}, 2000, 1000.0, 3);
  const double rho = std::log(1.1);
  const double per_person = 100 * 0.5 * (1 - std::exp(-40 * rho)) / rho;
  CHECK(est.draws_used == 100);
  CHECK(est.ce_mean == doctest::Approx(1000 * per_person).epsilon(0.02));
  CHECK(est.ce_d1 <= est.ce_mean);
  CHECK(est.ce_d9 >= est.ce_mean);
  CHECK(est.focal.n + est.competitor.n == n * 2000);

  std::vector<sm::SurveyObservation> wrong(n + 1, obs[0]);
  CHECK_THROWS_AS(estimate_sm(draws, wrong, sm::ValueSpec{}, 10, 1000, 3), ValidationError);
}
