#include "clvsurvey/semimarkov.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "clvsurvey/error.hpp"
#include "clvsurvey/tabular.hpp"

namespace clvsurvey::sm {

namespace {

constexpr std::uint64_t kPopulationTag = 0x706f70ULL;
constexpr std::uint64_t kSurveyTag = 0x737276ULL;
constexpr double kInitEdge = 1e-6;

double log_state_prob(int s, double prob_one) noexcept { return bernoulli_logpmf(s, prob_one); }

}  // namespace

double equilibrium_prob(double p, double q) noexcept {
  const double denom = 2.0 - q - p;
  // Both states absorbing: any split is stationary.
  if (!(denom > 0.0)) return 0.5;
  return (1.0 - q) / denom;
}

void GeneratorSettings::validate() const {
  if (n < 1) throw ValidationError("population size must be at least 1");
  if (!(gamma_shape > 0.0 && delta_rate > 0.0)) throw ValidationError("rate distribution parameters must be positive");
  if (!(alpha_p > 0.0 && beta_p > 0.0 && alpha_q > 0.0 && beta_q > 0.0)) {
    throw ValidationError("beta shape parameters must be positive");
  }
  if (!(history_back >= 0.0 && history_forward >= 0.0)) throw ValidationError("history span must be nonnegative");
}

int Individual::current_state() const noexcept {
  int s = initial_state;
  for (const auto& pu : history) {
    if (pu.time >= 0.0) break;
    s = pu.state;
  }
  return s;
}

std::size_t Individual::purchases_before_survey() const noexcept {
  std::size_t k = 0;
  while (k < history.size() && history[k].time < 0.0) ++k;
  return k;
}

std::vector<Purchase> simulate_history(double lambda, double p, double q, int initial_state, double start, double end,
                                       RngStream& rng) {
  std::vector<Purchase> out;
  int state = initial_state;
  double t = start;
  while (true) {
    t += sample_exponential(rng, lambda);
    if (t > end) break;
    state = sample_bernoulli(rng, focal_next_prob(state, p, q));
    out.push_back(Purchase{t, state});
  }
  return out;
}

Population generate_population(const GeneratorSettings& settings, std::uint64_t seed) {
  settings.validate();
  Population pop;
  pop.settings = settings;
  pop.individuals.resize(settings.n);
  for (std::size_t i = 0; i < settings.n; ++i) {
    RngStream rng(seed, derive_stream_id(kPopulationTag, i));
    Individual& ind = pop.individuals[i];
    ind.lambda = sample_gamma(rng, GammaSpec{settings.gamma_shape, settings.delta_rate});
    ind.p = sample_beta(rng, settings.alpha_p, settings.beta_p);
    ind.q = sample_beta(rng, settings.alpha_q, settings.beta_q);
    ind.initial_state = sample_bernoulli(rng, equilibrium_prob(ind.p, ind.q));
    ind.history =
        simulate_history(ind.lambda, ind.p, ind.q, ind.initial_state, -settings.history_back, settings.history_forward, rng);
  }
  return pop;
}

SurveySample extract_survey(const Population& population, std::size_t n, std::uint64_t seed) {
  SurveySample out;
  if (n == 0) return out;
  const auto& inds = population.individuals;
  const auto eligible = static_cast<std::size_t>(std::count_if(
      inds.begin(), inds.end(), [](const Individual& ind) { return ind.purchases_before_survey() >= 2; }));
  if (n > eligible) {
    throw ValidationError("sample size " + std::to_string(n) + " exceeds the " + std::to_string(eligible) +
                          " eligible individuals");
  }
  std::vector<std::size_t> order(inds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, derive_stream_id(kSurveyTag));
  for (std::size_t k = 0; k < order.size() && out.observations.size() < n; ++k) {
    const std::size_t span = order.size() - k;
    const std::size_t j = k + std::min(span - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(span)));
    std::swap(order[k], order[j]);
    const Individual& ind = inds[order[k]];
    const std::size_t past = ind.purchases_before_survey();
    if (past < 2) {
      ++out.rejections;
      continue;
    }
    const Purchase& last = ind.history[past - 1];
    const Purchase& prev = ind.history[past - 2];
    out.observations.push_back(SurveyObservation{last.state, prev.state, last.time - prev.time, -last.time, order[k]});
  }
  return out;
}

void write_observations(std::ostream& out, const std::vector<SurveyObservation>& obs) {
  out << "s0,s1,t,t_star,individual\n";
  for (const auto& o : obs) {
    out << o.s0 << ',' << o.s1 << ',' << format_double(o.t) << ',' << format_double(o.t_star) << ',' << o.individual
        << '\n';
  }
}

std::vector<SurveyObservation> read_observations(std::istream& in) {
  std::vector<SurveyObservation> out;
  std::string line;
  std::size_t line_no = 0;
  if (!next_data_line(in, line, &line_no)) return out;
  const ColumnIndex cols(split_csv_line(line));
  const std::size_t c_s0 = cols.require("s0");
  const std::size_t c_s1 = cols.require("s1");
  const std::size_t c_t = cols.require("t");
  const std::size_t c_ts = cols.require("t_star");
  const auto c_ind = cols.find("individual");
  while (next_data_line(in, line, &line_no)) {
    const auto f = split_csv_line(line);
    const std::size_t need = std::max({c_s0, c_s1, c_t, c_ts, c_ind.value_or(0)}) + 1;
    if (f.size() < need) throw ValidationError("observation line " + std::to_string(line_no) + " has too few fields");
    SurveyObservation o;
    o.s0 = static_cast<int>(parse_int(f[c_s0], "s0"));
    o.s1 = static_cast<int>(parse_int(f[c_s1], "s1"));
    o.t = parse_double(f[c_t], "t");
    o.t_star = parse_double(f[c_ts], "t_star");
    if (c_ind) o.individual = static_cast<std::size_t>(parse_int(f[*c_ind], "individual"));
    if ((o.s0 != 0 && o.s0 != 1) || (o.s1 != 0 && o.s1 != 1)) {
      throw ValidationError("states must be 0 or 1 (line " + std::to_string(line_no) + ")");
    }
    if (!(o.t > 0.0) || !(o.t_star >= 0.0)) {
      throw ValidationError("times must satisfy t > 0 and t_star >= 0 (line " + std::to_string(line_no) + ")");
    }
    out.push_back(o);
  }
  return out;
}

void write_population_summary(std::ostream& out, const Population& population) {
  out << "individual,lambda,p,q,initial_state,current_state,purchases_past,purchases_future\n";
  for (std::size_t i = 0; i < population.individuals.size(); ++i) {
    const auto& ind = population.individuals[i];
    const std::size_t past = ind.purchases_before_survey();
    out << i << ',' << format_double(ind.lambda) << ',' << format_double(ind.p) << ',' << format_double(ind.q) << ','
        << ind.initial_state << ',' << ind.current_state() << ',' << past << ',' << ind.history.size() - past << '\n';
  }
}

// ---------------------------------------------------------------- posterior

LogPosteriorTerms log_posterior_terms(const Params& params, const std::vector<SurveyObservation>& data,
                                      const Priors& priors) {
  const std::size_t n = data.size();
  if (params.lambda.size() != n || params.p.size() != n || params.q.size() != n || params.s2.size() != n) {
    throw ValidationError("individual parameter vectors do not match the observation count");
  }
  const Hyper& h = params.hyper;
  LogPosteriorTerms t;
  const GammaSpec pop_rate{h.gamma_shape(), h.delta_rate()};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = data[i];
    const double p = params.p[i];
    const double q = params.q[i];
    t.times += exponential_logpdf(o.t, params.lambda[i]) + exponential_logpdf(o.t_star, params.lambda[i]);
    t.states += log_state_prob(params.s2[i], equilibrium_prob(p, q));
    t.states += log_state_prob(o.s1, focal_next_prob(params.s2[i], p, q));
    t.states += log_state_prob(o.s0, focal_next_prob(o.s1, p, q));
    t.population += gamma_logpdf(params.lambda[i], pop_rate);
    t.population += beta_logpdf(p, h.alpha_p(), h.beta_p());
    t.population += beta_logpdf(q, h.alpha_q(), h.beta_q());
  }
  t.hyperpriors += gamma_logpdf(h.m_lambda, GammaSpec{priors.m_lambda_shape, priors.m_lambda_rate});
  t.hyperpriors += gamma_logpdf(h.v_lambda, GammaSpec{priors.v_lambda_shape, priors.v_lambda_rate});
  t.hyperpriors += (h.m_p > 0.0 && h.m_p < 1.0) ? 0.0 : -kInf;
  t.hyperpriors += (h.m_q > 0.0 && h.m_q < 1.0) ? 0.0 : -kInf;
  t.hyperpriors += gamma_logpdf(h.k_p, GammaSpec{priors.k_shape, priors.k_rate});
  t.hyperpriors += gamma_logpdf(h.k_q, GammaSpec{priors.k_shape, priors.k_rate});

  if (!std::isfinite(t.times)) throw NumericalError("purchase-time likelihood term is not finite");
  if (!std::isfinite(t.states)) throw NumericalError("state likelihood term is not finite");
  if (!std::isfinite(t.population)) throw NumericalError("population distribution term is not finite");
  if (!std::isfinite(t.hyperpriors)) throw NumericalError("hyperprior term is not finite");
  return t;
}

double log_posterior_sm(const Params& params, const std::vector<SurveyObservation>& data, const Priors& priors) {
  return log_posterior_terms(params, data, priors).total();
}

SemiMarkovModel::SemiMarkovModel(const std::vector<SurveyObservation>& data, Priors priors)
    : data_(data), priors_(priors) {
  using mcmc::Support;
  using mcmc::UpdateKind;
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("semi-Markov fit needs at least one observation");
  auto scalar = [](const char* name, Support s) {
    return mcmc::ParameterBlock{name, 1, s, UpdateKind::random_walk_metropolis, true, {}};
  };
  blocks_ = {scalar("m_lambda", Support::positive),
             scalar("v_lambda", Support::positive),
             scalar("m_p", Support::unit_interval),
             scalar("k_p", Support::positive),
             scalar("m_q", Support::unit_interval),
             scalar("k_q", Support::positive),
             {"lambda", n, Support::positive, UpdateKind::direct_conditional, true, {}},
             {"p", n, Support::unit_interval, UpdateKind::random_walk_metropolis, true, {}},
             {"q", n, Support::unit_interval, UpdateKind::random_walk_metropolis, true, {}},
             {"S2", n, Support::real, UpdateKind::direct_conditional, false, {}}};
}

Params SemiMarkovModel::to_params(const mcmc::State& s) const {
  Params out;
  out.hyper = Hyper{s[kMLambda][0], s[kVLambda][0], s[kMp][0], s[kKp][0], s[kMq][0], s[kKq][0]};
  out.lambda = s[kLambda];
  out.p = s[kP];
  out.q = s[kQ];
  out.s2.reserve(s[kS2].size());
  for (double v : s[kS2]) out.s2.push_back(v > 0.5 ? 1 : 0);
  return out;
}

mcmc::State SemiMarkovModel::initial_state(RngStream& rng) const {
  const std::size_t n = data_.size();
  mcmc::State s(blocks_.size());
  Hyper h;
  h.m_lambda = sample_gamma(rng, GammaSpec{priors_.m_lambda_shape, priors_.m_lambda_rate});
  h.v_lambda = sample_gamma(rng, GammaSpec{priors_.v_lambda_shape, priors_.v_lambda_rate});
  // Starting means near 0 or 1 put individual draws on the boundary.
  h.m_p = sample_uniform(rng, 0.1, 0.9);
  h.k_p = sample_gamma(rng, GammaSpec{priors_.k_shape, priors_.k_rate});
  h.m_q = sample_uniform(rng, 0.1, 0.9);
  h.k_q = sample_gamma(rng, GammaSpec{priors_.k_shape, priors_.k_rate});
  s[kMLambda] = {h.m_lambda};
  s[kVLambda] = {h.v_lambda};
  s[kMp] = {h.m_p};
  s[kKp] = {h.k_p};
  s[kMq] = {h.m_q};
  s[kKq] = {h.k_q};
  s[kLambda].resize(n);
  s[kP].resize(n);
  s[kQ].resize(n);
  s[kS2].resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Draw from the full conditional; the population Gamma alone can have a tiny shape and underflow.
    s[kLambda][i] = sample_gamma(rng, GammaSpec{h.gamma_shape() + 2.0, h.delta_rate() + data_[i].t + data_[i].t_star});
    s[kP][i] = std::clamp(sample_beta(rng, h.alpha_p(), h.beta_p()), kInitEdge, 1.0 - kInitEdge);
    s[kQ][i] = std::clamp(sample_beta(rng, h.alpha_q(), h.beta_q()), kInitEdge, 1.0 - kInitEdge);
    s[kS2][i] = sample_bernoulli(rng, equilibrium_prob(s[kP][i], s[kQ][i]));
  }
  return s;
}

double SemiMarkovModel::lambda_population(const mcmc::State& s) const {
  const double m = s[kMLambda][0];
  const double v = s[kVLambda][0];
  const double shape = m * m / (v + kVarianceStabilizer);
  const double rate = m / (v + kVarianceStabilizer);
  if (!(shape > 0.0 && rate > 0.0 && std::isfinite(shape) && std::isfinite(rate))) return -kInf;
  double sum_log = 0.0;
  double sum = 0.0;
  for (double l : s[kLambda]) {
    sum_log += std::log(l);
    sum += l;
  }
  const auto n = static_cast<double>(s[kLambda].size());
  return n * (shape * std::log(rate) - std::lgamma(shape)) + (shape - 1.0) * sum_log - rate * sum;
}

namespace {

double beta_population(double m, double k, const std::vector<double>& x) {
  const double a = k * m;
  const double b = k * (1.0 - m);
  if (!(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b))) return -kInf;
  double sum_log = 0.0;
  double sum_log1m = 0.0;
  for (double v : x) {
    sum_log += std::log(v);
    sum_log1m += std::log1p(-v);
  }
  const auto n = static_cast<double>(x.size());
  return n * (std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)) + (a - 1.0) * sum_log + (b - 1.0) * sum_log1m;
}

}  // namespace

double SemiMarkovModel::p_population(const mcmc::State& s) const { return beta_population(s[kMp][0], s[kKp][0], s[kP]); }

double SemiMarkovModel::q_population(const mcmc::State& s) const { return beta_population(s[kMq][0], s[kKq][0], s[kQ]); }

double SemiMarkovModel::individual_states(const mcmc::State& s, std::size_t i) const {
  const double p = s[kP][i];
  const double q = s[kQ][i];
  const int s2 = s[kS2][i] > 0.5 ? 1 : 0;
  const auto& o = data_[i];
  return log_state_prob(s2, equilibrium_prob(p, q)) + log_state_prob(o.s1, focal_next_prob(s2, p, q)) +
         log_state_prob(o.s0, focal_next_prob(o.s1, p, q));
}

double SemiMarkovModel::log_posterior(const mcmc::State& s) const {
  double lp = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double l = s[kLambda][i];
    lp += exponential_logpdf(data_[i].t, l) + exponential_logpdf(data_[i].t_star, l);
    lp += individual_states(s, i);
  }
  lp += lambda_population(s) + p_population(s) + q_population(s);
  lp += gamma_logpdf(s[kMLambda][0], GammaSpec{priors_.m_lambda_shape, priors_.m_lambda_rate});
  lp += gamma_logpdf(s[kVLambda][0], GammaSpec{priors_.v_lambda_shape, priors_.v_lambda_rate});
  lp += gamma_logpdf(s[kKp][0], GammaSpec{priors_.k_shape, priors_.k_rate});
  lp += gamma_logpdf(s[kKq][0], GammaSpec{priors_.k_shape, priors_.k_rate});
  const double mp = s[kMp][0];
  const double mq = s[kMq][0];
  if (!(mp > 0.0 && mp < 1.0 && mq > 0.0 && mq < 1.0)) return -kInf;
  return lp;
}

double SemiMarkovModel::log_local(const mcmc::State& s, std::size_t block, std::size_t index) const {
  switch (block) {
    case kMLambda:
      return gamma_logpdf(s[kMLambda][0], GammaSpec{priors_.m_lambda_shape, priors_.m_lambda_rate}) +
             lambda_population(s);
    case kVLambda:
      return gamma_logpdf(s[kVLambda][0], GammaSpec{priors_.v_lambda_shape, priors_.v_lambda_rate}) +
             lambda_population(s);
    case kMp: return p_population(s);
    case kKp: return gamma_logpdf(s[kKp][0], GammaSpec{priors_.k_shape, priors_.k_rate}) + p_population(s);
    case kMq: return q_population(s);
    case kKq: return gamma_logpdf(s[kKq][0], GammaSpec{priors_.k_shape, priors_.k_rate}) + q_population(s);
    case kP: {
      const double a = s[kKp][0] * s[kMp][0];
      const double b = s[kKp][0] * (1.0 - s[kMp][0]);
      return beta_logpdf(s[kP][index], a, b) + individual_states(s, index);
    }
    case kQ: {
      const double a = s[kKq][0] * s[kMq][0];
      const double b = s[kKq][0] * (1.0 - s[kMq][0]);
      return beta_logpdf(s[kQ][index], a, b) + individual_states(s, index);
    }
    default: return log_posterior(s);
  }
}

double SemiMarkovModel::log_group_local(const mcmc::State& s, std::size_t group) const {
  switch (group) {
    case 0:
      return gamma_logpdf(s[kMLambda][0], GammaSpec{priors_.m_lambda_shape, priors_.m_lambda_rate}) +
             gamma_logpdf(s[kVLambda][0], GammaSpec{priors_.v_lambda_shape, priors_.v_lambda_rate}) +
             lambda_population(s);
    case 1: return gamma_logpdf(s[kKp][0], GammaSpec{priors_.k_shape, priors_.k_rate}) + p_population(s);
    case 2: return gamma_logpdf(s[kKq][0], GammaSpec{priors_.k_shape, priors_.k_rate}) + q_population(s);
    default: return log_posterior(s);
  }
}

void SemiMarkovModel::sample_conditional(mcmc::State& s, std::size_t block, RngStream& rng) const {
  if (block == kLambda) {
    const double m = s[kMLambda][0];
    const double v = s[kVLambda][0];
    const double shape = m * m / (v + kVarianceStabilizer);
    const double rate = m / (v + kVarianceStabilizer);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      s[kLambda][i] = sample_gamma(rng, GammaSpec{shape + 2.0, rate + data_[i].t + data_[i].t_star});
    }
    return;
  }
  if (block == kS2) {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double p = s[kP][i];
      const double q = s[kQ][i];
      const double m0 = equilibrium_prob(p, q);
      const int s1 = data_[i].s1;
      const double w1 = m0 * (s1 == 1 ? p : 1.0 - p);
      const double w0 = (1.0 - m0) * (s1 == 1 ? 1.0 - q : q);
      s[kS2][i] = sample_bernoulli(rng, w1 / (w1 + w0));
    }
    return;
  }
  Model::sample_conditional(s, block, rng);
}

std::vector<std::vector<std::size_t>> SemiMarkovModel::joint_groups() const {
  return {{kMLambda, kVLambda}, {kMp, kKp}, {kMq, kKq}};
}

bool SemiMarkovModel::custom_move(mcmc::State& s, std::size_t move, double scale, RngStream& rng) const {
  const std::size_t kb = move == 0 ? kKp : kKq;
  const std::size_t mb = move == 0 ? kMp : kMq;
  const std::size_t xb = move == 0 ? kP : kQ;
  auto target = [&](const mcmc::State& st) {
    double lp = gamma_logpdf(st[kb][0], GammaSpec{priors_.k_shape, priors_.k_rate}) + std::log(st[kb][0]);
    lp += move == 0 ? p_population(st) : q_population(st);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double x = st[xb][i];
      lp += individual_states(st, i) + std::log(x) + std::log1p(-x);
    }
    return lp;
  };
  const double before = target(s);
  const double eps = sample_normal(rng, 0.0, scale);
  const double shrink = std::exp(-0.5 * eps);
  const double mu = logit(s[mb][0]);
  const double k_old = s[kb][0];
  const std::vector<double> x_old = s[xb];
  s[kb][0] = k_old * std::exp(eps);
  bool valid = std::isfinite(s[kb][0]) && s[kb][0] > 0.0;
  for (auto& x : s[xb]) {
    x = logistic(mu + shrink * (logit(x) - mu));
    if (!(x > 0.0 && x < 1.0)) valid = false;
  }
  if (valid) {
    const double after = target(s) + static_cast<double>(data_.size()) * std::log(shrink);
    if (std::log(rng.uniform()) < after - before) return true;
  }
  s[kb][0] = k_old;
  s[xb] = x_old;
  return false;
}

mcmc::PosteriorDraws fit_sm(const std::vector<SurveyObservation>& data, const mcmc::ChainConfig& config,
                            const Priors& priors) {
  if (data.empty()) throw ValidationError("semi-Markov fit needs at least one observation");
  SemiMarkovModel model(data, priors);
  return mcmc::run_chains(model, config);
}

Hyper hyper_from_draw(const mcmc::PosteriorDraws& draws, std::size_t p) {
  const double* row = draws.pooled_row(p);
  auto at = [&](const char* name) { return row[draws.block(name).first]; };
  return Hyper{at("m_lambda"), at("v_lambda"), at("m_p"), at("k_p"), at("m_q"), at("k_q")};
}

// ---------------------------------------------------------------- oracle

double focal_npv(const std::vector<Purchase>& history, const ValueSpec& spec) noexcept {
  double v = 0.0;
  for (const auto& pu : history) {
    if (pu.time <= 0.0) continue;
    if (pu.time > spec.horizon_years) break;
    if (pu.state == 1) v += spec.value_per_purchase * std::pow(1.0 + spec.annual_discount, -pu.time);
  }
  return v;
}

Distribution describe(std::vector<double> values) {
  Distribution d;
  d.n = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  // Linear interpolation between order statistics.
  auto q = [&](double prob) {
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  d.min = values.front();
  d.max = values.back();
  d.q1 = q(0.25);
  d.median = q(0.5);
  d.q3 = q(0.75);
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return d;
}

OracleReport true_ce_oracle(const Population& population, const ValueSpec& spec) {
  OracleReport r;
  std::vector<double> focal;
  std::vector<double> competitor;
  r.clv.reserve(population.individuals.size());
  for (const auto& ind : population.individuals) {
    const double v = focal_npv(ind.history, spec);
    r.clv.push_back(v);
    r.ce += v;
    (ind.current_state() == 1 ? focal : competitor).push_back(v);
  }
  r.mean_clv = r.clv.empty() ? 0.0 : r.ce / static_cast<double>(r.clv.size());
  r.focal = describe(std::move(focal));
  r.competitor = describe(std::move(competitor));
  return r;
}

}  // namespace clvsurvey::sm
