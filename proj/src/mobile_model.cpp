#include "clvsurvey/mobile_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clvsurvey/error.hpp"

namespace clvsurvey::mobile {

namespace {

constexpr double kMonthsPerYear = 12.0;

double log1pexp(double x) noexcept { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log P(y | logit eta)
double bernoulli_logit(int y, double eta) noexcept { return y == 1 ? -log1pexp(-eta) : -log1pexp(eta); }

double log_acquisition(const ModelRecord& r, const std::vector<double>& w, int n_brands) {
  const int h = r.covariates.agegr;
  double denom = 0.0;
  for (int j = 1; j <= n_brands; ++j) {
    if (j != r.prev_brand) denom += w[static_cast<std::size_t>((j - 1) * kAgeGroups + h - 1)];
  }
  return std::log(w[static_cast<std::size_t>((*r.new_brand - 1) * kAgeGroups + h - 1)]) - std::log(denom);
}

std::string gender_tag(int g) { return g == 2 ? "Woman" : "Man"; }

}  // namespace

// ---------------------------------------------------------------- layout

CoefficientLayout::CoefficientLayout(int n_brands) : n_brands_(n_brands) {
  if (n_brands < 2) throw ValidationError("at least two brands are required");
}

std::size_t CoefficientLayout::size() const noexcept { return static_cast<std::size_t>(n_brands_ + 13); }

std::size_t CoefficientLayout::brand_slot(int brand) const { return static_cast<std::size_t>(brand - 1); }

std::size_t CoefficientLayout::agegr_slot(int agegr) const { return static_cast<std::size_t>(n_brands_ + agegr - 2); }

std::size_t CoefficientLayout::active(int brand, const Covariates& c, std::size_t out[6]) const {
  const auto B = static_cast<std::size_t>(n_brands_);
  std::size_t n = 0;
  out[n++] = 0;
  if (brand >= 2) out[n++] = brand_slot(brand);
  if (c.agegr >= 2) out[n++] = agegr_slot(c.agegr);
  if (c.gender >= 2) out[n++] = B + 5;
  if (c.incomegr >= 2) out[n++] = B + 4 + static_cast<std::size_t>(c.incomegr);
  if (c.region >= 2) out[n++] = B + 8 + static_cast<std::size_t>(c.region);
  return n;
}

std::vector<std::string> CoefficientLayout::labels(const std::string& prefix, const BrandCatalog& brands) const {
  std::vector<std::string> out;
  out.reserve(size());
  out.push_back(prefix + "_0");
  for (int b = 2; b <= n_brands_; ++b) out.push_back(prefix + "_" + brands.label(b));
  for (int a = 2; a <= kAgeGroups; ++a) out.push_back(prefix + "_" + agegr_labels()[static_cast<std::size_t>(a - 1)]);
  out.push_back(prefix + "_" + gender_tag(2));
  for (int k = 2; k <= kIncomeGroups; ++k) {
    out.push_back(prefix + "_" + incomegr_labels()[static_cast<std::size_t>(k - 1)]);
  }
  for (int r = 2; r <= kRegions; ++r) out.push_back(prefix + "_" + region_labels()[static_cast<std::size_t>(r - 1)]);
  return out;
}

double linear_predictor(const std::vector<double>& coef, const CoefficientLayout& layout, int brand,
                        const Covariates& c) {
  std::size_t slots[6];
  const std::size_t n = layout.active(brand, c, slots);
  double eta = 0.0;
  for (std::size_t k = 0; k < n; ++k) eta += coef[slots[k]];
  return eta;
}

double rate_of(int brand, const Covariates& c, const std::vector<double>& beta, const CoefficientLayout& layout) {
  return std::exp(linear_predictor(beta, layout, brand, c));
}

double rate_of(const ModelRecord& record, const std::vector<double>& beta, const CoefficientLayout& layout) {
  return rate_of(record.prev_brand, record.covariates, beta, layout);
}

double repurchase_prob(int brand, const Covariates& c, const std::vector<double>& alpha,
                       const CoefficientLayout& layout) {
  return logistic(linear_predictor(alpha, layout, brand, c));
}

double repurchase_prob(const ModelRecord& record, const std::vector<double>& alpha, const CoefficientLayout& layout) {
  return repurchase_prob(record.prev_brand, record.covariates, alpha, layout);
}

std::vector<double> acquisition_probs(int current, int agegr, const std::vector<double>& w, int n_brands) {
  if (n_brands < 2) throw ValidationError("acquisition needs at least two brands");
  std::vector<double> p(static_cast<std::size_t>(n_brands), 0.0);
  double denom = 0.0;
  for (int j = 1; j <= n_brands; ++j) {
    if (j == current) continue;
    const double wj = w[static_cast<std::size_t>((j - 1) * kAgeGroups + agegr - 1)];
    p[static_cast<std::size_t>(j - 1)] = wj;
    denom += wj;
  }
  if (!(denom > 0.0)) throw NumericalError("all acquisition weights are zero");
  for (auto& v : p) v /= denom;
  return p;
}

std::pair<double, double> latent_bounds(const ModelRecord& record) {
  const double cap = kMaxIntervalMonths / kMonthsPerYear;
  double lo = record.interval.t_min / kMonthsPerYear;
  double hi = record.interval.right_censored() ? cap : record.interval.t_max / kMonthsPerYear;
  if (hi <= lo) hi = lo + kZeroWidthGuardMonths / kMonthsPerYear;
  return {lo, hi};
}

// ---------------------------------------------------------------- posterior

LogPosteriorTerms log_posterior_terms(const Params& params, const ModelDataset& data, const Priors& priors) {
  const CoefficientLayout layout(data.brands.size());
  const int B = data.brands.size();
  if (params.latent_T.size() != data.records.size()) {
    throw ValidationError("latent interval count does not match the record count");
  }
  LogPosteriorTerms t;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    const double lambda = rate_of(r, params.beta, layout);
    t.intervals += gamma_logpdf(params.latent_T[i], GammaSpec{params.kappa, lambda});
    if (r.repurchase) {
      t.repurchase += bernoulli_logit(*r.repurchase, linear_predictor(params.alpha, layout, r.prev_brand, r.covariates));
    }
    if (r.new_brand) t.acquisition += log_acquisition(r, params.w, B);
  }
  t.priors += gamma_logpdf(params.kappa, GammaSpec{priors.kappa_shape, priors.kappa_rate});
  for (double b : params.beta) t.priors += normal_logpdf(b, 0.0, priors.coef_variance);
  for (double a : params.alpha) t.priors += normal_logpdf(a, 0.0, priors.coef_variance);
  for (double w : params.w) t.priors += beta_logpdf(w, priors.weight_a, priors.weight_b);

  if (!std::isfinite(t.intervals)) throw NumericalError("interval likelihood term is not finite");
  if (!std::isfinite(t.repurchase)) throw NumericalError("repurchase likelihood term is not finite");
  if (!std::isfinite(t.acquisition)) throw NumericalError("acquisition likelihood term is not finite");
  if (!std::isfinite(t.priors)) throw NumericalError("prior term is not finite");
  return t;
}

double log_posterior(const Params& params, const ModelDataset& data, const Priors& priors) {
  return log_posterior_terms(params, data, priors).total();
}

// ---------------------------------------------------------------- model

MobileModel::MobileModel(const ModelDataset& data, Priors priors)
    : data_(data), priors_(priors), layout_(data.brands.size()) {
  const auto P = layout_.size();
  const int B = data.brands.size();

  mcmc::ParameterBlock kappa{"kappa", 1, mcmc::Support::positive, mcmc::UpdateKind::random_walk_metropolis, true, {}};
  mcmc::ParameterBlock beta{"beta", P, mcmc::Support::real, mcmc::UpdateKind::random_walk_metropolis, true,
                            layout_.labels("beta", data.brands)};
  mcmc::ParameterBlock alpha{"alpha", P, mcmc::Support::real, mcmc::UpdateKind::random_walk_metropolis, true,
                             layout_.labels("alpha", data.brands)};
  std::vector<std::string> wl;
  for (int j = 1; j <= B; ++j) {
    for (int h = 1; h <= kAgeGroups; ++h) {
      wl.push_back("w_" + data.brands.label(j) + "_" + agegr_labels()[static_cast<std::size_t>(h - 1)]);
    }
  }
  mcmc::ParameterBlock w{"w", static_cast<std::size_t>(B * kAgeGroups), mcmc::Support::unit_interval,
                         mcmc::UpdateKind::random_walk_metropolis, true, std::move(wl)};
  mcmc::ParameterBlock latent{"latent_T", std::max<std::size_t>(1, data.records.size()), mcmc::Support::positive,
                              mcmc::UpdateKind::direct_conditional, false, {}};
  blocks_ = {kappa, beta, alpha, w};
  if (!data.records.empty()) blocks_.push_back(latent);

  records_by_slot_.assign(P, {});
  churn_by_age_.assign(kAgeGroups, {});
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    bounds_.push_back(latent_bounds(r));
    std::size_t slots[6];
    const std::size_t n = layout_.active(r.prev_brand, r.covariates, slots);
    active_.emplace_back(slots, slots + n);
    for (std::size_t k = 0; k < n; ++k) records_by_slot_[slots[k]].push_back(i);
    if (r.repurchase) transitions_.push_back(i);
    if (r.new_brand) churn_by_age_[static_cast<std::size_t>(r.covariates.agegr - 1)].push_back(i);
  }
}

Params MobileModel::to_params(const mcmc::State& s) const {
  Params p;
  p.kappa = s[kKappa][0];
  p.beta = s[kBeta];
  p.alpha = s[kAlpha];
  p.w = s[kWeights];
  if (!data_.records.empty()) p.latent_T = s[kLatent];
  return p;
}

mcmc::State MobileModel::initial_state(RngStream& rng) const {
  mcmc::State s(blocks_.size());
  s[kKappa] = {sample_gamma(rng, GammaSpec{priors_.kappa_shape, priors_.kappa_rate})};
  // Coefficients start near zero rather than from the vague prior so that
  // the initial rates stay in a range where truncated sampling is stable.
  s[kBeta].resize(layout_.size());
  for (auto& b : s[kBeta]) b = sample_normal(rng, 0.0, 1.0);
  s[kAlpha].resize(layout_.size());
  for (auto& a : s[kAlpha]) a = sample_normal(rng, 0.0, 1.0);
  s[kWeights].resize(blocks_[kWeights].dimension);
  for (auto& w : s[kWeights]) w = sample_beta(rng, priors_.weight_a, priors_.weight_b);
  if (!data_.records.empty()) {
    auto& T = s[kLatent];
    T.resize(data_.records.size());
    for (std::size_t i = 0; i < T.size(); ++i) {
      const auto [lo, hi] = bounds_[i];
      if (data_.records[i].interval.right_censored()) {
        const double lambda = rate_of(data_.records[i], s[kBeta], layout_);
        const double guess = lo + s[kKappa][0] / lambda;
        T[i] = guess < hi ? guess : 0.5 * (lo + hi);
      } else {
        T[i] = 0.5 * (lo + hi);
      }
      if (T[i] <= 0.0) T[i] = 0.5 * hi;
    }
  }
  return s;
}

double MobileModel::log_posterior(const mcmc::State& state) const {
  const double kappa = state[kKappa][0];
  const auto& beta = state[kBeta];
  const auto& alpha = state[kAlpha];
  const auto& w = state[kWeights];
  const int B = layout_.n_brands();
  double lp = 0.0;
  for (std::size_t i = 0; i < data_.records.size(); ++i) {
    const auto& r = data_.records[i];
    double eta = 0.0;
    for (std::size_t k : active_[i]) eta += beta[k];
    lp += gamma_logpdf(state[kLatent][i], GammaSpec{kappa, std::exp(eta)});
    if (r.repurchase) {
      double ea = 0.0;
      for (std::size_t k : active_[i]) ea += alpha[k];
      lp += bernoulli_logit(*r.repurchase, ea);
    }
    if (r.new_brand) lp += log_acquisition(r, w, B);
  }
  lp += gamma_logpdf(kappa, GammaSpec{priors_.kappa_shape, priors_.kappa_rate});
  for (double b : beta) lp += normal_logpdf(b, 0.0, priors_.coef_variance);
  for (double a : alpha) lp += normal_logpdf(a, 0.0, priors_.coef_variance);
  for (double x : w) lp += beta_logpdf(x, priors_.weight_a, priors_.weight_b);
  return lp;
}

double MobileModel::log_local(const mcmc::State& state, std::size_t block, std::size_t index) const {
  const double kappa = state[kKappa][0];
  switch (block) {
    case kKappa: {
      if (!(kappa > 0.0)) return -kInf;
      double lp = gamma_logpdf(kappa, GammaSpec{priors_.kappa_shape, priors_.kappa_rate});
      for (std::size_t i = 0; i < data_.records.size(); ++i) {
        double eta = 0.0;
        for (std::size_t k : active_[i]) eta += state[kBeta][k];
        lp += gamma_logpdf(state[kLatent][i], GammaSpec{kappa, std::exp(eta)});
      }
      return lp;
    }
    case kBeta: {
      // Only kappa*eta - exp(eta)*T depends on the coefficient.
      const auto& beta = state[kBeta];
      double lp = normal_logpdf(beta[index], 0.0, priors_.coef_variance);
      for (std::size_t i : records_by_slot_[index]) {
        double eta = 0.0;
        for (std::size_t k : active_[i]) eta += beta[k];
        lp += kappa * eta - std::exp(eta) * state[kLatent][i];
      }
      return lp;
    }
    case kAlpha: {
      const auto& alpha = state[kAlpha];
      double lp = normal_logpdf(alpha[index], 0.0, priors_.coef_variance);
      for (std::size_t i : records_by_slot_[index]) {
        const auto& r = data_.records[i];
        if (!r.repurchase) continue;
        double eta = 0.0;
        for (std::size_t k : active_[i]) eta += alpha[k];
        lp += bernoulli_logit(*r.repurchase, eta);
      }
      return lp;
    }
    case kWeights: {
      const auto& w = state[kWeights];
      double lp = beta_logpdf(w[index], priors_.weight_a, priors_.weight_b);
      const std::size_t h = index % kAgeGroups;
      for (std::size_t i : churn_by_age_[h]) lp += log_acquisition(data_.records[i], w, layout_.n_brands());
      return lp;
    }
    default:
      return log_posterior(state);
  }
}

void MobileModel::sample_conditional(mcmc::State& state, std::size_t block, RngStream& rng) const {
  if (block != kLatent) Model::sample_conditional(state, block, rng);
  const double kappa = state[kKappa][0];
  auto& T = state[kLatent];
  for (std::size_t i = 0; i < data_.records.size(); ++i) {
    double eta = 0.0;
    for (std::size_t k : active_[i]) eta += state[kBeta][k];
    const auto [lo, hi] = bounds_[i];
    T[i] = sample_truncated_gamma(rng, GammaSpec{kappa, std::exp(eta)}, lo, hi);
  }
}

std::vector<std::vector<std::size_t>> MobileModel::joint_groups() const { return {{kKappa, kBeta}, {kAlpha}}; }

mcmc::PosteriorDraws fit(const ModelDataset& data, const mcmc::ChainConfig& config, const Priors& priors) {
  if (data.records.empty()) throw ValidationError("dataset has no records to fit");
  MobileModel model(data, priors);
  return mcmc::run_chains(model, config);
}

Params params_from_draw(const mcmc::PosteriorDraws& draws, std::size_t p, int n_brands) {
  const CoefficientLayout layout(n_brands);
  const double* row = draws.pooled_row(p);
  auto take = [&](const char* name, std::size_t expect) {
    const auto& b = draws.block(name);
    if (b.dimension != expect) throw ValidationError(std::string("draws block '") + name + "' has unexpected size");
    return std::vector<double>(row + b.first, row + b.first + b.dimension);
  };
  Params out;
  out.kappa = take("kappa", 1)[0];
  out.beta = take("beta", layout.size());
  out.alpha = take("alpha", layout.size());
  out.w = take("w", static_cast<std::size_t>(n_brands * kAgeGroups));
  return out;
}

// ---------------------------------------------------------------- checks

bool BrandRegeneration::all_inside() const {
  for (std::size_t b = 0; b < observed.size(); ++b) {
    if (observed[b] < lo[b] || observed[b] > hi[b]) return false;
  }
  return true;
}

BrandRegeneration regenerate_brands(const mcmc::PosteriorDraws& draws, const ModelDataset& data, std::uint64_t seed) {
  const int B = data.brands.size();
  const CoefficientLayout layout(B);
  BrandRegeneration out;
  for (int b = 1; b <= B; ++b) out.labels.push_back(data.brands.label(b));
  out.observed.assign(static_cast<std::size_t>(B), 0);
  for (const auto& r : data.records) {
    if (!r.repurchase) continue;
    const int now = *r.repurchase == 1 ? r.prev_brand : *r.new_brand;
    ++out.observed[static_cast<std::size_t>(now - 1)];
  }

  const std::size_t n = draws.n_pooled();
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(B), std::vector<double>(n, 0.0));
  for (std::size_t p = 0; p < n; ++p) {
    const Params prm = params_from_draw(draws, p, B);
    RngStream rng(seed, derive_stream_id(0x7265676eULL, p));
    for (const auto& r : data.records) {
      if (!r.repurchase) continue;
      int now = r.prev_brand;
      if (sample_bernoulli(rng, repurchase_prob(r, prm.alpha, layout)) == 0) {
        const auto probs = acquisition_probs(r.prev_brand, r.covariates.agegr, prm.w, B);
        now = static_cast<int>(sample_categorical(rng, probs));
      }
      counts[static_cast<std::size_t>(now - 1)][p] += 1.0;
    }
  }
  for (auto& c : counts) {
    out.mean.push_back(std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(n));
    std::sort(c.begin(), c.end());
    out.lo.push_back(mcmc::sorted_quantile(c, 0.025));
    out.hi.push_back(mcmc::sorted_quantile(c, 0.975));
  }
  return out;
}

double CdfEnvelope::worst_inside_fraction() const {
  return inside_fraction.empty() ? 1.0 : *std::min_element(inside_fraction.begin(), inside_fraction.end());
}

std::vector<double> default_cdf_grid() {
  std::vector<double> g;
  for (int m = 0; m <= 198; m += 3) g.push_back(m);
  return g;
}

CdfEnvelope cdf_envelope(const mcmc::PosteriorDraws& draws, const ModelDataset& data, const std::vector<double>& grid,
                         std::size_t n_realizations, std::uint64_t seed) {
  const int B = data.brands.size();
  const CoefficientLayout layout(B);
  CdfEnvelope env;
  env.grid = grid;

  std::vector<const ModelRecord*> finite;
  for (const auto& r : data.records) {
    if (!r.interval.right_censored()) finite.push_back(&r);
  }
  const double nf = static_cast<double>(finite.size());
  for (double t : grid) {
    std::size_t below_min = 0;
    std::size_t below_max = 0;
    for (const auto* r : finite) {
      if (r->interval.t_min <= t) ++below_min;
      if (r->interval.t_max <= t) ++below_max;
    }
    env.ecdf_min.push_back(nf > 0 ? static_cast<double>(below_min) / nf : 0.0);
    env.ecdf_max.push_back(nf > 0 ? static_cast<double>(below_max) / nf : 0.0);
  }

  // Partial Fisher–Yates over pooled draw indices.
  const std::size_t total = draws.n_pooled();
  const std::size_t m = std::min(n_realizations, total);
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream rng(seed, derive_stream_id(0x63646665ULL));
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(total - k));
    std::swap(idx[k], idx[std::min(j, total - 1)]);
  }
  env.draw_index.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));

  env.inside_fraction.assign(grid.size(), 0.0);
  for (std::size_t p : env.draw_index) {
    const Params prm = params_from_draw(draws, p, B);
    std::vector<double> lambdas;
    lambdas.reserve(finite.size());
    for (const auto* r : finite) lambdas.push_back(rate_of(*r, prm.beta, layout));
    std::vector<double> cdf(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double t = grid[g] / kMonthsPerYear;
      double acc = 0.0;
      if (t > 0.0) {
        for (double lambda : lambdas) acc += gamma_cdf(t, GammaSpec{prm.kappa, lambda});
      }
      cdf[g] = nf > 0 ? acc / nf : 0.0;
      // Past the largest interval the empirical CDF is exactly 1 while a
      // continuous mixture is 1 - 1e-12 or so.
      constexpr double tol = 1e-9;
      if (cdf[g] >= env.ecdf_max[g] - tol && cdf[g] <= env.ecdf_min[g] + tol) env.inside_fraction[g] += 1.0;
    }
    env.realizations.push_back(std::move(cdf));
  }
  if (m > 0) {
    for (auto& f : env.inside_fraction) f /= static_cast<double>(m);
  }
  return env;
}

}  // namespace clvsurvey::mobile
