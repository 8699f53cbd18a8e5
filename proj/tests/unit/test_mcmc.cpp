#include <cmath>
#include <numeric>
#include <sstream>

#include "clvsurvey/error.hpp"
#include "clvsurvey/mcmc.hpp"
#include "doctest.h"

using namespace clvsurvey;
using namespace clvsurvey::mcmc;

namespace {

ParameterBlock scalar(const char* name, Support s, UpdateKind k = UpdateKind::random_walk_metropolis) {
  ParameterBlock b;
  b.name = name;
  b.support = s;
  b.update_kind = k;
  return b;
}

// mu ~ N(0, 100), y_i ~ N(mu, 1): posterior N(sum y / (n + 0.01), 1 / (n + 0.01)).
// tau targets Gamma(3, 2) on the log scale, u targets Beta(2, 5) on the logit
// scale, z is redrawn exactly from N(1, 0.25).
class ToyModel final : public Model {
 public:
  explicit ToyModel(std::vector<double> y) : y_(std::move(y)) {
    blocks_ = {scalar("mu", Support::real), scalar("tau", Support::positive),
               scalar("u", Support::unit_interval),
               scalar("z", Support::real, UpdateKind::direct_conditional)};
  }
  const std::vector<ParameterBlock>& blocks() const override { return blocks_; }
  State initial_state(RngStream& rng) const override {
    return {{sample_normal(rng, 0, 3)}, {sample_gamma(rng, {1, 1})}, {rng.uniform()}, {0.0}};
  }
  double log_posterior(const State& s) const override {
    double lp = normal_logpdf(s[0][0], 0, 100) + gamma_logpdf(s[1][0], {3, 2}) + beta_logpdf(s[2][0], 2, 5);
    for (double v : y_) lp += normal_logpdf(v, s[0][0], 1);
    return lp + normal_logpdf(s[3][0], 1, 0.25);
  }
  void sample_conditional(State& s, std::size_t, RngStream& rng) const override {
    s[3][0] = sample_normal(rng, 1, 0.5);
  }

 private:
  std::vector<double> y_;
  std::vector<ParameterBlock> blocks_;
};

// Bivariate normal with correlation 0.95; exercises the joint move.
class CorrelatedModel final : public Model {
 public:
  CorrelatedModel() { blocks_ = {scalar("a", Support::real), scalar("b", Support::real)}; }
  const std::vector<ParameterBlock>& blocks() const override { return blocks_; }
  State initial_state(RngStream& rng) const override { return {{sample_normal(rng, 0, 1)}, {sample_normal(rng, 0, 1)}}; }
  double log_posterior(const State& s) const override {
    const double a = s[0][0], b = s[1][0], r = 0.95;
    return -(a * a - 2 * r * a * b + b * b) / (2 * (1 - r * r));
  }
  std::vector<std::vector<std::size_t>> joint_groups() const override { return {{0, 1}}; }

 private:
  std::vector<ParameterBlock> blocks_;
};

class NanModel final : public Model {
 public:
  NanModel() { blocks_ = {scalar("x", Support::real)}; }
  const std::vector<ParameterBlock>& blocks() const override { return blocks_; }
  State initial_state(RngStream&) const override { return {{0.0}}; }
  double log_posterior(const State&) const override { return -kInf; }

 private:
  std::vector<ParameterBlock> blocks_;
};

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }
double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

std::vector<double> toy_data() {
  RngStream rng(3, 0);
  std::vector<double> y;
  for (int i = 0; i < 20; ++i) y.push_back(sample_normal(rng, 2.0, 1.0));
  return y;
}

}  // namespace

TEST_CASE("toy posterior moments are recovered") {
  const auto y = toy_data();
  ToyModel m(y);
  ChainConfig cfg;
  cfg.n_chains = 2;
  cfg.burn_in = 2000;
  cfg.keep = 20000;
  cfg.seed = 17;
  const auto d = run_chains(m, cfg);
  const double prec = y.size() + 0.01;
  const double post_mean = std::accumulate(y.begin(), y.end(), 0.0) / prec;
  const auto mu = d.pooled_values(d.column("mu"));
  CHECK(mean_of(mu) == doctest::Approx(post_mean).epsilon(0.01));
  CHECK(var_of(mu) == doctest::Approx(1 / prec).epsilon(0.06));
  const auto tau = d.pooled_values(d.column("tau"));
  CHECK(mean_of(tau) == doctest::Approx(1.5).epsilon(0.03));
  CHECK(var_of(tau) == doctest::Approx(0.75).epsilon(0.08));
  const auto u = d.pooled_values(d.column("u"));
  CHECK(mean_of(u) == doctest::Approx(2.0 / 7).epsilon(0.03));
  const auto z = d.pooled_values(d.column("z"));
  CHECK(mean_of(z) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(var_of(z) == doctest::Approx(0.25).epsilon(0.05));
  for (const auto& [name, rates] : d.acceptance()) {
    for (double r : rates) {
      CHECK(r > 0.2);
      CHECK(r < 0.5);
    }
  }
}

TEST_CASE("two chains on the toy model give a diagnostic near one") {
  ToyModel m(toy_data());
  ChainConfig cfg;
  cfg.n_chains = 2;
  cfg.burn_in = 1000;
  cfg.keep = 5000;
  cfg.seed = 23;
  const auto d = run_chains(m, cfg);
  for (const char* p : {"mu", "tau", "u"}) CHECK(std::abs(interval_diagnostic(d, p).ratio - 1.0) <= 0.05);
}

TEST_CASE("joint moves handle strong correlation") {
  CorrelatedModel m;
  ChainConfig cfg;
  cfg.n_chains = 3;
  cfg.burn_in = 3000;
  cfg.keep = 10000;
  cfg.seed = 5;
  const auto d = run_chains(m, cfg);
  const auto a = d.pooled_values(0), b = d.pooled_values(1);
  double cov = 0;
  const double ma = mean_of(a), mb = mean_of(b);
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma) * (b[i] - mb);
  cov /= a.size() - 1;
  CHECK(cov / std::sqrt(var_of(a) * var_of(b)) == doctest::Approx(0.95).epsilon(0.02));
  CHECK(var_of(a) == doctest::Approx(1.0).epsilon(0.1));
  REQUIRE(d.acceptance().count("joint_group_1"));
  for (double r : d.acceptance().at("joint_group_1")) CHECK(r == doctest::Approx(kJointTargetAccept).epsilon(0.25));
}

TEST_CASE("runs are reproducible and independent of threading") {
  ToyModel m(toy_data());
  ChainConfig cfg;
  cfg.burn_in = 200;
  cfg.keep = 300;
  cfg.seed = 9;
  cfg.parallel = true;
  const auto a = run_chains(m, cfg);
  cfg.parallel = false;
  const auto b = run_chains(m, cfg);
  std::ostringstream sa, sb;
  write_draws(sa, a);
  write_draws(sb, b);
  CHECK(sa.str() == sb.str());
  cfg.seed = 10;
  std::ostringstream sc;
  write_draws(sc, run_chains(m, cfg));
  CHECK(sc.str() != sa.str());
}

TEST_CASE("chain configuration is validated") {
  ToyModel m(toy_data());
  ChainConfig cfg;
  cfg.keep = 0;
  CHECK_THROWS_AS(run_chains(m, cfg), ValidationError);
  cfg = ChainConfig{};
  cfg.n_chains = 0;
  CHECK_THROWS_AS(run_chains(m, cfg), ValidationError);
  cfg = ChainConfig{};
  cfg.thin = 0;
  CHECK_THROWS_AS(run_chains(m, cfg), ValidationError);
}

TEST_CASE("small runs carry a warning") {
  ToyModel m(toy_data());
  ChainConfig cfg;
  cfg.n_chains = 2;
  cfg.burn_in = 10;
  cfg.keep = 100;
  const auto d = run_chains(m, cfg);
  CHECK_FALSE(d.warnings().empty());
}

TEST_CASE("non-finite initial posterior is a numerical error") {
  NanModel m;
  ChainConfig cfg;
  cfg.burn_in = 1;
  cfg.keep = 1;
  CHECK_THROWS_AS(run_chains(m, cfg), NumericalError);
}

TEST_CASE("interval diagnostic on constructed draws") {
  PosteriorDraws d({"x"}, {{"x", 0, 1}}, 2, 1000);
  for (std::size_t t = 0; t < 1000; ++t) {
    d.value(0, t, 0) = (t + 0.5) / 1000.0;
    d.value(1, t, 0) = (t + 0.5) / 1000.0;
  }
  CHECK(interval_diagnostic(d, "x").ratio == doctest::Approx(1.0));
  // Shift the second chain by a full unit: pooled 80% interval spans both.
  for (std::size_t t = 0; t < 1000; ++t) d.value(1, t, 0) += 1.0;
  CHECK(interval_diagnostic(d, "x").ratio == doctest::Approx(1.6 / 0.8).epsilon(0.01));

  PosteriorDraws c({"x"}, {{"x", 0, 1}}, 2, 100);
  for (std::size_t t = 0; t < 100; ++t) c.value(0, t, 0) = c.value(1, t, 0) = 4.0;
  const auto dg = interval_diagnostic(c, "x");
  CHECK(dg.degenerate);
  CHECK(dg.ratio == 1.0);
  CHECK_THROWS(interval_diagnostic(c, "y"));
}

TEST_CASE("inverse-ecdf quantiles") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(sorted_quantile(v, 0.1) == 1);
  CHECK(sorted_quantile(v, 0.9) == 9);
  CHECK(sorted_quantile(v, 0.95) == 10);
  CHECK(sorted_quantile(v, 0.0) == 1);
  CHECK(sorted_quantile(v, 1.0) == 10);
}

TEST_CASE("draws files round-trip") {
  ToyModel m(toy_data());
  ChainConfig cfg;
  cfg.burn_in = 50;
  cfg.keep = 40;
  const auto d = run_chains(m, cfg);
  std::stringstream buf;
  buf << "# provenance line\n";
  write_draws(buf, d);
  const auto back = read_draws(buf);
  REQUIRE(back.n_columns() == d.n_columns());
  CHECK(back.n_chains() == d.n_chains());
  CHECK(back.n_iterations() == d.n_iterations());
  CHECK(back.names() == d.names());
  for (std::size_t c = 0; c < d.n_chains(); ++c)
    for (std::size_t t = 0; t < d.n_iterations(); ++t)
      for (std::size_t j = 0; j < d.n_columns(); ++j) CHECK(back.value(c, t, j) == d.value(c, t, j));

  std::stringstream thinned;
  write_draws(thinned, d, 4);
  CHECK(read_draws(thinned).n_iterations() == 10);
}
